import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfpoles import netio, oracle, track
from lfpoles.ident import PoleZeroModel
from lfpoles.netio import PoleReport

from conftest import critical_exact

SVG = "{http://www.w3.org/2000/svg}"
P1, P2, P3 = -1e6 + 8e8j, -3e7 + 1.3e9j, -5e6 + 2.6e9j


def upper_resonances(net):
    p = oracle.exact_poles(net)
    return p[p.imag > 0]


def gm_net(gm):
    return oracle.build_preset("hartley_single_stage", {"gm": gm})


def test_identical_lists_match_identity():
    m = track.pair_poles_step([P1, P2, P3], [P1, P2, P3])
    assert m == [(0, 0, 0.0), (1, 1, 0.0), (2, 2, 0.0)]


def test_small_offset_matches_in_order():
    nxt = [p * 1.01 for p in (P1, P2, P3)]
    assert [(i, j) for i, j, _ in track.pair_poles_step([P1, P2, P3], nxt)] == [(0, 0), (1, 1), (2, 2)]


def test_far_poles_stay_unmatched():
    assert track.pair_poles_step([P1], [P1 * 3]) == []
    assert track.pair_poles_step([], [P1]) == []
    with pytest.raises(ValueError, match="upper-half"):
        track.pair_poles_step([P1.conjugate()], [P1])


@settings(max_examples=50, deadline=None)
@given(st.permutations(range(5)), st.permutations(range(5)))
def test_matching_is_permutation_invariant(perm_a, perm_b):
    rng = np.random.default_rng(7)
    a = list(rng.uniform(-1e7, 0, 5) + 1j * rng.uniform(5e8, 3e9, 5))
    b = [p * (1 + 0.05 * rng.normal()) for p in a[:4]] + [1e9j]
    base = {(a[i], b[j]) for i, j, _ in track.pair_poles_step(a, b)}
    pa, pb = [a[k] for k in perm_a], [b[k] for k in perm_b]
    permuted = {(pa[i], pb[j]) for i, j, _ in track.pair_poles_step(pa, pb)}
    assert permuted == base


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=1e9), max_size=6),
       st.lists(st.complex_numbers(max_magnitude=1e9), max_size=6))
def test_matching_is_injective(a, b):
    a = [complex(p.real, abs(p.imag)) for p in a]
    b = [complex(p.real, abs(p.imag)) for p in b]
    m = track.pair_poles_step(a, b)
    assert len({i for i, _, _ in m}) == len(m) == len({j for _, j, _ in m})
    assert all(d <= track.MATCH_THRESHOLD for *_, d in m)


def test_gm_sweep_agrees_with_continuation():
    gms = np.linspace(0.02, 0.12, 11)
    sets = [upper_resonances(gm_net(g)) for g in gms]
    for k in range(len(gms) - 1):
        # continuation oracle: follow every pole through fine sub-steps
        follow = sets[k].copy()
        for g in np.linspace(gms[k], gms[k + 1], 21)[1:]:
            here = upper_resonances(gm_net(g))
            follow = np.array([here[np.argmin(np.abs(here - p))] for p in follow])
        for i, j, _ in track.pair_poles_step(sets[k], sets[k + 1]):
            assert follow[i] == pytest.approx(sets[k + 1][j], rel=1e-12)


def test_single_entry_gives_one_point_trajectories():
    t = track.build_tracks([({"gm": 1.0}, [P1, P2, P1.conjugate()])], "gm")
    assert len(t.trajectories) == 2
    assert all(len(tr.points) == 1 for tr in t.trajectories)


def test_two_point_rightward_motion():
    t = track.build_tracks([({"x": 2.0}, [P1 + 5e5]), ({"x": 1.0}, [P1])], "x")
    assert len(t.trajectories) == 1
    re = t.trajectories[0].poles.real
    assert re[1] > re[0] and list(t.values) == [1.0, 2.0]


def test_trajectory_birth_and_death():
    t = track.build_tracks([({"x": 1.0}, [P1]), ({"x": 2.0}, [P3]), ({"x": 3.0}, [P3 * 1.01])], "x")
    assert [len(tr.points) for tr in t.trajectories] == [1, 2]


def test_build_tracks_errors():
    with pytest.raises(KeyError, match="gm"):
        track.build_tracks([({"vdd": 1.0}, [P1])], "gm")
    with pytest.raises(ValueError, match="duplicate"):
        track.build_tracks([({"gm": 1.0}, [P1]), ({"gm": 1.0}, [P1])], "gm")


def test_insignificant_model_poles_are_dropped():
    m = PoleZeroModel(np.array([P1, P2]), np.array([[1e6, 1e-6]]), np.zeros(1), 1e-3, (1e8, 3e8),
                      diagnostics={"response_peak": np.array([1.0])})
    t = track.build_tracks([({"x": 1.0}, m)], "x")
    np.testing.assert_array_equal(t.poles[0], [P1])
    assert t.fit_errors[0] == 1e-3


def test_stabilized_trajectory_lies_left():
    soft = upper_resonances(oracle.build_preset("three_stage", {"r_stab2": 5.0}))
    hard = upper_resonances(oracle.build_preset("three_stage", {"r_stab2": 20.0}))
    t = track.build_tracks([({"r_stab2": 5.0}, soft), ({"r_stab2": 20.0}, hard)], "r_stab2",
                           band_hz=(5e7, 5e8))
    crit = critical_exact(oracle.build_preset("three_stage", {"r_stab2": 5.0}))
    tr = next(tr for tr in t.trajectories if tr.poles[0] == crit)
    assert len(tr.points) == 2 and tr.poles[1].real < tr.poles[0].real


def test_bifurcation_examples():
    poles = [complex(re, 1e9) for re in (-2e6, -1e6, 1e6)]
    t = track.build_tracks([({"x": float(k + 1)}, [p]) for k, p in enumerate(poles)], "x")
    (br,) = track.detect_bifurcation(t)
    assert (br.param_low, br.param_high, br.estimate) == (2.0, 3.0, 2.5)
    assert br.direction == "destabilizing"
    stable = track.build_tracks([({"x": 1.0}, [P1]), ({"x": 2.0}, [P1 * 1.01])], "x")
    assert track.detect_bifurcation(stable) == []


def test_bifurcation_excludes_degraded_fits():
    pts = [(-2e6, 1e-6), (-1e6, 1e-6), (5e4, 1e-1), (1e6, 1e-6)]
    sweep = []
    for k, (re, err) in enumerate(pts):
        m = PoleZeroModel(np.array([complex(re, 1e9)]), np.array([[1e9]]), np.zeros(1), err, (1e8, 3e8))
        sweep.append(({"x": float(k + 1)}, m))
    t = track.build_tracks(sweep, "x")
    assert track.detect_bifurcation(t)[0].param_high == 3.0
    (br,) = track.detect_bifurcation(t, max_fit_error=1e-3)
    assert (br.param_low, br.param_high, br.excluded) == (2.0, 4.0, (3.0,))
    assert br.estimate == pytest.approx(3.0)


def test_brackets_straddle_the_axis():
    gms = np.linspace(0.02, 0.12, 11)
    t = track.build_tracks([({"gm": g}, upper_resonances(gm_net(g))) for g in gms], "gm", band_hz=(5e7, 5e8))
    brackets = track.detect_bifurcation(t)
    assert len(brackets) == 1
    for br in brackets:
        assert br.pole_low.real * br.pole_high.real < 0
        assert br.param_low < br.estimate < br.param_high


def test_empty_track_outputs():
    t = track.build_tracks([], "gm")
    report, svg = track.emit_report(t)
    assert report.entries == ()
    assert netio.write_pole_report(report, "csv").count("\n") == 1
    root = ET.fromstring(svg.split("\n", 1)[1])
    assert root.findall(f"{SVG}circle") == []
    assert json.loads(track.write_track(t))["trajectories"] == []


def test_svg_markers_repeat_report_values():
    t = track.build_tracks([({"gm": 0.05}, [P2])], "gm")
    report, svg = track.emit_report(t)
    (circle,) = ET.fromstring(svg.split("\n", 1)[1]).findall(f"{SVG}circle")
    row = report.entries[0].poles[0]
    assert float(circle.get("data-re-per-s")) == row.re_per_s
    assert float(circle.get("data-f-res-hz")) == row.f_res_hz
    assert circle.get("data-critical") == "1" and circle.get("data-params") == "gm=0.05"


def test_svg_marker_order_follows_parameter():
    gms = [0.07, 0.03, 0.05]
    t = track.build_tracks([({"gm": g}, [complex(-1e7 + 1e8 * g, 1.2e9)]) for g in gms], "gm")
    report, svg = track.emit_report(t)
    root = ET.fromstring(svg.split("\n", 1)[1])
    params = [c.get("data-params") for c in root.findall(f"{SVG}circle")]
    assert params == ["gm=0.03", "gm=0.05", "gm=0.07"]
    (line,) = root.findall(f"{SVG}polyline")
    xs = [float(p.split(",")[0]) for p in line.get("points").split()]
    cx = [float(c.get("cx")) for c in root.findall(f"{SVG}circle")]
    np.testing.assert_allclose(xs, cx, atol=1e-3)
    assert root.find(f"{SVG}rect").get("class") == "rhp"


def test_track_json_schema():
    poles = [complex(re, 1e9) for re in (-2e6, -1e6, 1e6)]
    t = track.build_tracks([({"x": float(k + 1)}, [p]) for k, p in enumerate(poles)], "x", unit="V")
    obj = json.loads(track.write_track(t, track.detect_bifurcation(t)))
    assert set(obj) == {"parameter", "unit", "values", "report", "trajectories", "bifurcations"}
    assert obj["unit"] == "V" and obj["bifurcations"][0]["estimate"] == 2.5
    assert isinstance(obj["report"], list) and len(obj["report"]) == 3


def test_report_flags_rightmost_pole():
    t = track.build_tracks([({"x": 1.0}, [P1, P2])], "x")
    report = track.track_report(t)
    assert isinstance(report, PoleReport)
    flagged = [r.pole for r in report.entries[0].poles if r.critical]
    assert flagged == [P1]
