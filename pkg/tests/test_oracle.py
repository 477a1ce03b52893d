import math

import numpy as np
import pytest

from lfpoles import ident, oracle
from lfpoles.oracle import Element, Excitation, Netlist, NetlistError, ProbeModel

from conftest import critical_exact, rel

# eigenpencil values of the default presets, frozen
SINGLE_CRITICAL = complex(-32280101.68986685, 1236365578.1002386)
THREE_CRITICAL = complex(-10376429.54052084, 842977190.3436204)
GM_CROSSING = 0.06768978042983971


def rc_lowpass(r=1e3, c=1e-9):
    return Netlist((
        Element("port", "P", ("in", "0"), r),
        Element("C", "C", ("in", "0"), c),
    ), input_node="in")


def test_rc_divider_dc_limit():
    net = Netlist((
        Element("port", "P", ("in", "0"), 50.0),
        Element("R", "R1", ("in", "mid"), 1e3),
        Element("C", "C1", ("mid", "0"), 1e-12),
        Element("R", "R2", ("in", "0"), 1e9),
    ))
    resp = oracle.frequency_response(net, Excitation.port(), "mid", [1e-3, 1e-2])
    np.testing.assert_allclose(resp.values, 1e9 / (1e9 + 50), rtol=1e-9)


def test_rc_lowpass_pole():
    p = oracle.exact_poles(rc_lowpass())
    np.testing.assert_allclose(p, [-1 / (1e3 * 1e-9)], rtol=1e-12)


def test_rlc_shunt_closed_form():
    net = oracle.build_preset("rlc_shunt")
    r, l, c = 50.0, 10e-9, 20e-12
    w = 2 * np.pi * oracle.DEFAULT_FREQS_HZ
    z = 1 / (1 / r + 1 / (1j * w * l) + 1j * w * c)
    np.testing.assert_allclose(oracle.node_impedance(net, "top", oracle.DEFAULT_FREQS_HZ), z, rtol=1e-12)
    alpha = 1 / (2 * r * c)
    wd = math.sqrt(1 / (l * c) - alpha ** 2)
    np.testing.assert_allclose(oracle.exact_poles(net), [-alpha - 1j * wd, -alpha + 1j * wd], rtol=1e-12)


def test_preset_critical_poles_are_frozen(single_stage, three_stage):
    assert rel(critical_exact(single_stage), SINGLE_CRITICAL) < 1e-9
    assert rel(critical_exact(three_stage), THREE_CRITICAL) < 1e-9
    assert oracle.exact_poles(single_stage).size == 10
    assert oracle.exact_poles(three_stage).size == 20


def test_preset_resonance_targets(single_stage, three_stage):
    # weakly damped pairs near 190 MHz and 130 MHz
    f1 = critical_exact(single_stage).imag / (2 * np.pi)
    f3 = critical_exact(three_stage).imag / (2 * np.pi)
    assert abs(f1 / 1.9e8 - 1) < 0.05
    assert abs(f3 / 1.3e8 - 1) < 0.05
    for p in (critical_exact(single_stage), critical_exact(three_stage)):
        assert 0 < -p.real / abs(p) < 0.05


def test_poles_are_conjugate_closed(three_stage):
    p = oracle.exact_poles(three_stage)
    gap = [np.min(np.abs(p - q.conjugate())) / abs(q) for q in p]
    assert max(gap) < 1e-12


def test_passive_netlist_is_stable(single_stage):
    passive = single_stage.without(kinds=("G",))
    assert np.all(oracle.exact_poles(passive).real <= 0)


def test_stab2_moves_pair_left():
    soft = critical_exact(oracle.build_preset("three_stage", {"r_stab2": 5.0}))
    hard = critical_exact(oracle.build_preset("three_stage", {"r_stab2": 20.0}))
    assert hard.real < soft.real


def test_gm_sweep_is_monotone_and_crosses():
    gms = np.linspace(0.02, 0.12, 21)
    re = [critical_exact(oracle.build_preset("hartley_single_stage", {"gm": g})).real for g in gms]
    assert np.all(np.diff(re) > 0)
    assert re[0] < 0 < re[-1]
    at = critical_exact(oracle.build_preset("hartley_single_stage", {"gm": GM_CROSSING})).real
    assert abs(at) < 1e-6 * abs(SINGLE_CRITICAL)


def test_build_preset_errors():
    with pytest.raises(NetlistError, match="unknown preset"):
        oracle.build_preset("four_stage")
    with pytest.raises(NetlistError, match="no parameter"):
        oracle.build_preset("three_stage", {"gm4": 0.1})


def test_netlist_validation():
    with pytest.raises(NetlistError, match="positive"):
        Netlist((Element("R", "R", ("a", "0"), -1.0),))
    with pytest.raises(NetlistError, match="duplicate"):
        Netlist((Element("R", "R", ("a", "0"), 1.0), Element("C", "R", ("a", "0"), 1.0)))
    with pytest.raises(NetlistError, match="not connected"):
        Netlist((Element("R", "R", ("a", "0"), 1.0), Element("R", "R2", ("b", "c"), 1.0)))
    with pytest.raises(NetlistError, match="nonzero"):
        Netlist((Element("G", "G", ("a", "0"), 0.0, ("a", "0")), Element("R", "R", ("a", "0"), 1.0)))


def test_netlist_json_round_trip(three_stage):
    back = Netlist.from_json(three_stage.to_json())
    assert back == three_stage
    np.testing.assert_array_equal(oracle.exact_poles(back), oracle.exact_poles(three_stage))


def test_observed_node_errors(single_stage):
    with pytest.raises(NetlistError):
        oracle.frequency_response(single_stage, Excitation.port(), "nowhere", [1e8])
    with pytest.raises(NetlistError):
        oracle.frequency_response(single_stage, Excitation.port(), None, [1e8])
    with pytest.raises(NetlistError):
        oracle.frequency_response(single_stage, Excitation.branch("Rds"), None, [1e8])


def test_singular_circuit_reported():
    # a node held only by a capacitor floats at DC
    net = Netlist((Element("C", "C", ("a", "0"), 1e-12),))
    with pytest.raises(oracle.SingularCircuitError, match="0 Hz"):
        oracle.solve(net, Excitation.current("a"), [0.0, 1e6])


def test_branch_excitation_sign():
    # unit source in series with an inductor to ground behind a resistor:
    # i = 1 / (R + jwL) flowing from the inductor's first node to its second
    net = Netlist((Element("R", "R", ("a", "0"), 10.0), Element("L", "L", ("a", "b"), 1e-9),
                   Element("R", "R2", ("b", "0"), 1e-6)))
    f = np.array([1e8])
    i = oracle.frequency_response(net, Excitation.branch("L"), None, f).values
    np.testing.assert_allclose(i, 1 / (10 + 1e-6 + 2j * np.pi * f * 1e-9), rtol=1e-12)


def test_open_probe_is_identity(single_stage):
    probed = oracle.attach_probe(single_stage, "n", oracle.OPEN_PROBE)
    np.testing.assert_allclose(oracle.exact_poles(probed), oracle.exact_poles(single_stage), rtol=1e-12)
    f = np.geomspace(1e7, 5e8, 31)
    a = oracle.frequency_response(single_stage, Excitation.port(), "n", f).values
    b = oracle.frequency_response(probed, Excitation.port(), "n", f).values
    np.testing.assert_allclose(b, a, rtol=1e-14)


def test_attach_probe_is_a_copy(single_stage):
    before = len(single_stage.elements)
    probed = oracle.attach_probe(single_stage, "n")
    assert len(single_stage.elements) == before and len(probed.elements) == before + 1
    with pytest.raises(NetlistError, match="already"):
        oracle.attach_probe(probed, "n")
    with pytest.raises(NetlistError, match="ground"):
        oracle.attach_probe(single_stage, "0")


def test_default_probe_impedance():
    z = ProbeModel().impedance([1.8e8, 5e8])
    assert abs(z[0]) == pytest.approx(1178, rel=0.01)
    assert abs(z[1]) == pytest.approx(424, rel=0.01)
    with pytest.raises(ValueError):
        ProbeModel(r_shunt=0)


def test_default_probe_on_bias_line_node(single_stage):
    shift = rel(critical_exact(oracle.attach_probe(single_stage, "n")), critical_exact(single_stage))
    assert shift < 1e-3


def test_default_probe_on_50_ohm_node(single_stage):
    # the port node sees about 50 ohm near 180 MHz, well inside the ten-times rule
    p = critical_exact(single_stage)
    z = abs(oracle.node_impedance(single_stage, "in", [1.8e8])[0])
    assert 25 < z < 100
    z_crit = abs(oracle.node_impedance(single_stage, "in", [p.imag / (2 * np.pi)])[0])
    assert abs(ProbeModel().impedance([p.imag / (2 * np.pi)])[0]) > 10 * z_crit
    assert rel(critical_exact(oracle.attach_probe(single_stage, "in")), p) < 1e-2


def test_measurement_set_contents(single_stage):
    f = np.geomspace(1e7, 5e8, 51)
    ms = oracle.synthesize_measurement_set(single_stage, ["n"], f, params={"v_dd_volts": 2.9})
    assert ms.gamma_in.role == "gamma_in" and ms.reference_ratio.node_id == "ref"
    assert ms.ratios["n"].params == {"v_dd_volts": 2.9}
    assert ms.direct_hvn["n"].role == "h_vn"
    np.testing.assert_allclose(ms.block.s12, ms.block.s21, rtol=1e-12)
    with pytest.raises(NetlistError, match="unknown observation"):
        oracle.synthesize_measurement_set(single_stage, ["n9"], f)
    with pytest.raises(NetlistError, match="lacks"):
        oracle.synthesize_measurement_set(oracle.build_preset("rlc_shunt"), ["top"], f)


def test_measurement_noise_is_seeded(single_stage):
    f = np.geomspace(1e7, 5e8, 51)
    a = oracle.synthesize_measurement_set(single_stage, ["n"], f, noise_db=-60, rng=4)
    b = oracle.synthesize_measurement_set(single_stage, ["n"], f, noise_db=-60, rng=4)
    clean = oracle.synthesize_measurement_set(single_stage, ["n"], f)
    np.testing.assert_array_equal(a.ratios["n"].values, b.ratios["n"].values)
    err = a.ratios["n"].values - clean.ratios["n"].values
    rms = np.sqrt(np.mean(np.abs(clean.ratios["n"].values) ** 2))
    assert 20 * np.log10(np.sqrt(np.mean(np.abs(err) ** 2)) / rms) == pytest.approx(-60, abs=3)


@pytest.mark.parametrize("node", ["n", "gate", "drain"])
def test_fitted_poles_match_eigenpencil(single_stage, node):
    f = np.geomspace(5e7, 5e8, 301)
    resp = oracle.frequency_response(single_stage, Excitation.port(), node, f)
    model = ident.fit_common_poles_mimo([resp], band_hz=(5e7, 5e8))
    assert rel(ident.select_critical_pair(model), critical_exact(single_stage)) < 1e-6
