import json
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfpoles import ident, oracle
from lfpoles.ident import FitConvergenceError, FitError, PoleZeroModel
from lfpoles.netio import FrequencyResponse

from conftest import CRITICAL_BAND, critical_exact, rel

F = np.geomspace(5e7, 5e8, 301)


def rational(freqs, poles, residues, direct=0.0):
    s = 2j * np.pi * np.asarray(freqs)
    return direct + sum(r / (s - p) for p, r in zip(poles, residues))


def pairs(*upper):
    """Conjugate-closed pole list from upper-half representatives."""
    out = []
    for p in upper:
        out += [p, np.conj(p)]
    return np.array(out)


POLES = pairs(-2e7 + 2j * np.pi * 1.5e8, -6e7 + 2j * np.pi * 3.2e8)
RESIDUES = pairs(3e7 - 1e7j, 1e8 + 4e7j)


def resp(values, freqs=F, **kw):
    return FrequencyResponse(freqs, values, **kw)


def match_error(found, expected):
    """Largest relative distance from each expected pole to its nearest fitted pole."""
    found = np.asarray(found)
    return max(np.min(np.abs(found - p)) / abs(p) for p in expected)


def model(poles, residues, direct=None, band=CRITICAL_BAND, **diagnostics):
    residues = np.atleast_2d(np.asarray(residues, dtype=complex))
    direct = np.zeros(residues.shape[0], complex) if direct is None else np.asarray(direct, complex)
    return PoleZeroModel(np.asarray(poles, complex), residues, direct, 0.0, band, diagnostics=diagnostics)


def test_first_order():
    f = np.geomspace(1e-3, 10, 200)
    m = ident.fit_rational_siso(resp(rational(f, [-1.0], [1.0]), f), order=1)
    assert rel(m.poles[0], -1.0) < 1e-9


def test_parallel_rlc_impedance():
    net = oracle.build_preset("rlc_shunt")
    f = np.geomspace(1e8, 1e9, 301)
    m = ident.fit_rational_siso(resp(oracle.node_impedance(net, "top", f), f), order=2)
    r, l, c = 50.0, 10e-9, 20e-12
    alpha = 1 / (2 * r * c)
    wd = np.sqrt(1 / (l * c) - alpha ** 2)
    assert match_error(m.poles, [-alpha + 1j * wd, -alpha - 1j * wd]) < 1e-8


def test_single_stage_critical_pair(single_stage):
    h = oracle.frequency_response(single_stage, oracle.Excitation.port(), "n", F)
    m = ident.fit_rational_siso(h, band_hz=CRITICAL_BAND)
    assert rel(ident.select_critical_pair(m), critical_exact(single_stage)) < 1e-6


def test_reproduces_rational_data():
    for order in (4, 6, 8):
        m = ident.fit_rational_siso(resp(rational(F, POLES, RESIDUES, 0.3)), order=order)
        assert m.fit_rms_error < 1e-8
        assert match_error(m.poles, POLES) < 1e-8


def test_conjugate_closure_and_real_symmetry():
    m = ident.fit_rational_siso(resp(rational(F, POLES, RESIDUES, 0.3)), order=6)
    for p, r in zip(m.poles, m.residues[0]):
        if p.imag != 0:
            k = np.argmin(np.abs(m.poles - np.conj(p)))
            assert abs(m.poles[k] - np.conj(p)) <= 1e-12 * abs(p)
            assert abs(m.residues[0, k] - np.conj(r)) <= 1e-12 * abs(r)
    s = 2j * np.pi * F
    np.testing.assert_allclose(m.evaluate_s(-s, 0), np.conj(m.evaluate_s(s, 0)), rtol=1e-12)


def test_rhp_pole_preserved():
    unstable = pairs(3e6 + 2j * np.pi * 2e8, -5e7 + 2j * np.pi * 3.5e8)
    m = ident.fit_rational_siso(resp(rational(F, unstable, RESIDUES)), order=4)
    assert match_error(m.poles, unstable) < 1e-8
    assert np.any(m.poles.real > 0)


def test_scale_invariance():
    h = rational(F, POLES, RESIDUES, 0.3)
    base = ident.fit_rational_siso(resp(h), order=4, conjugate_symmetric=False)
    k = 2.5e-3 * np.exp(0.7j)
    scaled = ident.fit_rational_siso(resp(k * h), order=4, conjugate_symmetric=False)
    assert match_error(scaled.poles, base.poles) < 1e-9
    idx = [int(np.argmin(np.abs(scaled.poles - p))) for p in base.poles]
    np.testing.assert_allclose(scaled.residues[0, idx], k * base.residues[0], rtol=1e-8)


def test_mimo_of_identical_copies_equals_siso():
    h = resp(rational(F, POLES, RESIDUES, 0.3))
    siso = ident.fit_rational_siso(h, order=4)
    mimo = ident.fit_common_poles_mimo([h, h, h], order=4)
    assert match_error(mimo.poles, siso.poles) < 1e-9
    assert mimo.n_responses == 3


def test_mimo_of_scalar_multiples_equals_siso():
    h = rational(F, POLES, RESIDUES, 0.3)
    siso = ident.fit_rational_siso(resp(h), order=4)
    mimo = ident.fit_common_poles_mimo([resp(h), resp(-4.0 * h), resp(0.01 * h)], order=4)
    assert match_error(mimo.poles, siso.poles) < 1e-9


def test_mimo_residue_ratio():
    a = rational(F, POLES, RESIDUES)
    b = rational(F, POLES, 10 * RESIDUES)
    m = ident.fit_common_poles_mimo([resp(a), resp(b)], order=4)
    ratio = np.abs(m.residues[1] / m.residues[0])
    np.testing.assert_allclose(ratio, 10, rtol=1e-2)


def test_three_stage_admittances_share_the_critical_pair(three_stage):
    ys = [oracle.frequency_response(three_stage, oracle.Excitation.branch(f"Lg{k}"), None, F)
          for k in (1, 2, 3)]
    m = ident.fit_common_poles_mimo(ys, band_hz=CRITICAL_BAND, labels=["stage1", "stage2", "stage3"])
    crit = ident.select_critical_pair(m)
    assert rel(crit, critical_exact(three_stage)) < 1e-6
    report = ident.residue_localization(m, crit)
    assert report.origin == "stage2"
    assert report.normalized_residues[1] == 1.0
    assert np.all(np.delete(report.normalized_residues, 1) < 0.2)


def test_residue_localization_examples():
    p = -1e6 + 1e9j
    one = ident.residue_localization(model([p], [[2 + 1j]]), p)
    np.testing.assert_array_equal(one.normalized_residues, [1.0])
    two = ident.residue_localization(model([p], [[0.1], [1.0]]), p)
    np.testing.assert_allclose(two.normalized_residues, [0.1, 1.0], rtol=1e-15)
    assert two.labels == ("response_0", "response_1")
    with pytest.raises(FitError, match="not a pole"):
        ident.residue_localization(model([p], [[1.0]]), p * (1 + 1e-5))


def test_margin_metrics_examples():
    m = ident.margin_metrics(-1 + 0j)
    assert m["damping_ratio"] == 1 and m["f_res_hz"] == 0
    m = ident.margin_metrics(2j * np.pi * 1.9e8)
    assert m["sigma_per_s"] == 0 and m["damping_ratio"] == 0 and m["q_factor"] is None
    assert m["f_res_hz"] == pytest.approx(1.9e8, rel=1e-15)
    getcontext().prec = 40
    exact = Decimal(10 ** 7) / (Decimal(10 ** 14) + Decimal(10 ** 18)).sqrt()
    m = ident.margin_metrics(-1e7 + 1e9j)
    assert m["damping_ratio"] == pytest.approx(float(exact), rel=1e-14)
    assert m["damping_ratio"] == pytest.approx(0.0099995, abs=1e-7)
    assert m["q_factor"] == pytest.approx(1 / (2 * float(exact)), rel=1e-14)


def test_select_critical_examples():
    a, b = -1e6 + 8e8j, -1e4 + 1.2e9j
    m = model(pairs(a, b), [pairs(1, 1)], band=(1e8, 3e8))
    assert ident.select_critical_pair(m, min_significance=0) == b
    assert ident.select_critical_pair(model([a], [[1]], band=(1e8, 3e8)), min_significance=0) == a


def test_select_critical_tie_goes_to_lower_damping():
    a, b = -1e6 + 8e8j, -1e6 + 1.2e9j
    m = model([a, b], [[1, 1]], band=(1e8, 3e8))
    assert ident.select_critical_pair(m, min_significance=0) == b


def test_select_critical_errors_and_gate():
    with pytest.raises(FitError, match="no significant poles"):
        ident.select_critical_pair(model([-1e6 + 8e8j], [[1]], band=(2e8, 3e8)))
    # a weak pole to the right of a strong one is treated as a fitting artifact
    strong, weak = -1e7 + 1e9j, -1e5 + 1.5e9j
    m = model([strong, weak], [[1e6, 1e0]], band=(1e8, 3e8), response_peak=np.array([0.1]))
    assert ident.pole_significance(m)[1] < 1e-2
    assert ident.select_critical_pair(m) == strong
    assert ident.select_critical_pair(m, min_significance=0) == weak


def test_degenerate_constant_response():
    m = ident.fit_rational_siso(resp(np.full(F.size, 0.7 + 0j)))
    assert m.order == 0 and m.direct_term[0] == pytest.approx(0.7, rel=1e-15)
    assert m.diagnostics["degenerate"]


def test_fit_errors():
    h = resp(rational(F, POLES, RESIDUES))
    with pytest.raises(FitError, match="needs at least"):
        ident.fit_rational_siso(resp(h.values[:20], F[:20]), order=6)
    with pytest.raises(FitError, match="inconsistent"):
        ident.fit_common_poles_mimo([h, resp(h.values, F * 1.001)])
    with pytest.raises(FitError, match="beyond"):
        ident.fit_rational_siso(h, band_hz=(1e7, 5e8))
    with pytest.raises(FitError, match="well-ordered"):
        ident.fit_rational_siso(h, band_hz=(3e8, 1e8))
    with pytest.raises(ValueError, match="weighting"):
        ident.fit_rational_siso(h, order=4, weighting="log")


def test_non_convergence_carries_residual(rng):
    noisy = rational(F, POLES, RESIDUES) + 1e-2 * (rng.normal(size=F.size) + 1j * rng.normal(size=F.size))
    with pytest.raises(FitConvergenceError) as info:
        ident.fit_rational_siso(resp(noisy), order=8, max_iterations=2)
    assert info.value.residual > 0 and info.value.poles.size == 8
    with pytest.warns(RuntimeWarning):
        m = ident.fit_rational_siso(resp(noisy), order=8, max_iterations=2, strict=False)
    assert not m.diagnostics["converged"]


def test_auto_order_scan():
    m = ident.fit_rational_siso(resp(rational(F, POLES, RESIDUES, 0.3)))
    assert m.order == 4 and m.diagnostics["auto_tolerance_met"]
    assert [e["order"] for e in m.diagnostics["order_scan"]] == [2, 4]
    assert len(m.diagnostics["trace"]) >= 1


def test_inverse_magnitude_weighting():
    m = ident.fit_rational_siso(resp(rational(F, POLES, RESIDUES)), order=4, weighting="inverse_magnitude")
    assert match_error(m.poles, POLES) < 1e-8


def test_deterministic():
    h = resp(rational(F, POLES, RESIDUES) + 1e-3 * np.cos(F / 1e7))
    a = ident.fit_rational_siso(h, order=6, strict=False)
    b = ident.fit_rational_siso(h, order=6, strict=False)
    np.testing.assert_array_equal(a.poles, b.poles)
    np.testing.assert_array_equal(a.residues, b.residues)


def test_model_serialization_round_trip():
    m = ident.fit_common_poles_mimo([resp(rational(F, POLES, RESIDUES)), resp(rational(F, POLES, -RESIDUES))],
                                    order=4, labels=["a", "b"])
    back = ident.model_from_obj(json.loads(json.dumps(ident.model_to_obj(m))))
    np.testing.assert_array_equal(back.poles, m.poles)
    np.testing.assert_array_equal(back.residues, m.residues)
    assert back.labels == ("a", "b") and back.band_hz == m.band_hz
    np.testing.assert_array_equal(ident.pole_significance(back), ident.pole_significance(m))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(0.15, 0.95), st.floats(0.005, 0.2), st.floats(0, 2 * np.pi)),
                min_size=1, max_size=3))
def test_recovers_random_resonances(specs):
    f_hi = 5e8
    im = sorted(s[0] for s in specs)
    if np.any(np.diff(im) < 0.08):
        return
    upper = [2 * np.pi * f_hi * (-zeta * x + 1j * x) for x, (_, zeta, _) in zip(im, specs)]
    res = [abs(p) * 0.05 * np.exp(1j * ph) for p, (_, _, ph) in zip(upper, specs)]
    h = rational(F, pairs(*upper), pairs(*res), 0.1)
    m = ident.fit_rational_siso(resp(h), order=2 * len(upper))
    assert match_error(m.poles, pairs(*upper)) < 1e-6
