"""Pole trajectories over a parameter sweep.

Pole sets identified at successive sweep values are linked by greedy
nearest-neighbour matching on a scale-free distance. Trajectories then give
margin trends, and sign changes of the real part bracket the bifurcation
(onset of oscillation).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .ident import PoleZeroModel, margin_metrics, pole_significance
from .netio import PoleReport, ReportEntry, pole_report_to_obj

MATCH_THRESHOLD = 0.25
_EPS = 1e-300


def pole_distance(p: complex, q: complex) -> float:
    """``|p - q| / (|p| + |q| + eps)``: 0 for equal poles, at most 1."""
    return abs(p - q) / (abs(p) + abs(q) + _EPS)


def pair_poles_step(prev: Sequence[complex], nxt: Sequence[complex],
                    threshold: float = MATCH_THRESHOLD) -> list[tuple[int, int, float]]:
    """Greedy matching of two upper-half pole lists.

    Returns ``(i, j, distance)`` for every matched pair, sorted by ``i``.
    Pairs are accepted in increasing distance; ties are broken by pole
    values rather than list positions, so the matched poles do not depend on
    the input order. Poles farther than ``threshold`` stay unmatched.
    """
    prev = [complex(p) for p in prev]
    nxt = [complex(q) for q in nxt]
    for p in prev + nxt:
        if p.imag < 0:
            raise ValueError("pole lists must hold upper-half representatives (Im >= 0)")
    cands = []
    for i, p in enumerate(prev):
        for j, q in enumerate(nxt):
            d = pole_distance(p, q)
            if d <= threshold:
                cands.append((d, p.real, p.imag, q.real, q.imag, i, j))
    cands.sort()
    used_i, used_j, out = set(), set(), []
    for d, *_, i, j in cands:
        if i in used_i or j in used_j:
            continue
        used_i.add(i)
        used_j.add(j)
        out.append((i, j, d))
    return sorted(out)


@dataclass(frozen=True)
class TrackPoint:
    param: float
    pole: complex
    fit_rms_error: float


@dataclass(frozen=True)
class Trajectory:
    """Chain of matched poles; ``continuity`` is the largest step distance."""

    id: int
    points: tuple[TrackPoint, ...]

    @property
    def params(self) -> np.ndarray:
        return np.array([p.param for p in self.points])

    @property
    def poles(self) -> np.ndarray:
        return np.array([p.pole for p in self.points], dtype=complex)

    @property
    def continuity(self) -> float:
        steps = [pole_distance(a.pole, b.pole) for a, b in zip(self.points, self.points[1:])]
        return max(steps, default=0.0)

    def metrics(self) -> list[dict]:
        return [margin_metrics(p.pole) for p in self.points]


@dataclass(frozen=True, eq=False)
class PoleTrack:
    """Matched poles over a strictly increasing parameter sweep."""

    parameter: str
    values: np.ndarray
    poles: tuple[np.ndarray, ...]
    fit_errors: np.ndarray
    trajectories: tuple[Trajectory, ...]
    unit: str = ""
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.size > 1 and not np.all(np.diff(self.values) > 0):
            raise ValueError("parameter values must be strictly increasing")

    def trajectory(self, traj_id: int) -> Trajectory:
        for t in self.trajectories:
            if t.id == traj_id:
                return t
        raise KeyError(traj_id)

    def critical_at(self, k: int) -> complex | None:
        """Rightmost pole at the k-th sweep value."""
        p = self.poles[k]
        return complex(p[np.argmax(p.real)]) if p.size else None


def _upper_poles(item, band_hz, min_significance) -> tuple[np.ndarray, float]:
    if isinstance(item, PoleZeroModel):
        sig = pole_significance(item)
        lo, hi = item.band_hz if band_hz is None else band_hz
        f = item.poles.imag / (2 * np.pi)
        keep = (item.poles.imag >= 0) & (f <= hi) & ((f >= lo) | (item.poles.imag == 0))
        keep &= sig >= min_significance
        return item.poles[keep], float(item.fit_rms_error)
    p = np.asarray(item, dtype=complex).ravel()
    if band_hz is not None:
        f = p.imag / (2 * np.pi)
        p = p[(f <= band_hz[1]) & ((f >= band_hz[0]) | (p.imag == 0))]
    return p[p.imag >= 0], 0.0


def build_tracks(sweep: Sequence[tuple[Mapping[str, float], object]], key: str, *,
                 unit: str = "", band_hz: tuple[float, float] | None = None,
                 min_significance: float = 1e-2, resonances_only: bool = True,
                 threshold: float = MATCH_THRESHOLD) -> PoleTrack:
    """Link pole sets of a sweep into trajectories.

    ``sweep`` holds ``(params, model)`` pairs; ``model`` is a
    :class:`PoleZeroModel` (its rms error is kept for bifurcation gating) or a
    plain pole array. Only upper-half poles are tracked; with
    ``resonances_only`` real poles are dropped, and insignificant poles
    (see :func:`~lfpoles.ident.pole_significance`) are skipped.
    """
    entries = []
    for params, item in sweep:
        if key not in params:
            raise KeyError(f"sweep entry lacks parameter {key!r} (has: {', '.join(sorted(params))})")
        poles, err = _upper_poles(item, band_hz, min_significance)
        if resonances_only:
            poles = poles[poles.imag > 0]
        poles = poles[np.lexsort((poles.real, poles.imag))]
        entries.append((float(params[key]), poles, err))
    entries.sort(key=lambda e: e[0])
    values = np.array([e[0] for e in entries])
    dup = values[1:][np.diff(values) == 0]
    if dup.size:
        raise ValueError(f"duplicate sweep value {key}={dup[0]!r}")

    open_chains: dict[int, list[TrackPoint]] = {}  # pole index at current step -> chain
    finished: list[list[TrackPoint]] = []
    for k, (value, poles, err) in enumerate(entries):
        if k == 0:
            open_chains = {j: [TrackPoint(value, complex(p), err)] for j, p in enumerate(poles)}
            continue
        prev = entries[k - 1][1]
        matches = pair_poles_step(prev, poles, threshold)
        nxt: dict[int, list[TrackPoint]] = {}
        matched_prev = set()
        for i, j, _ in matches:
            chain = open_chains[i]
            chain.append(TrackPoint(value, complex(poles[j]), err))
            nxt[j] = chain
            matched_prev.add(i)
        finished += [c for i, c in sorted(open_chains.items()) if i not in matched_prev]
        for j, p in enumerate(poles):
            if j not in nxt:
                nxt[j] = [TrackPoint(value, complex(p), err)]
        open_chains = nxt
    finished += [c for _, c in sorted(open_chains.items())]
    # deterministic ids: by start parameter then starting pole
    finished.sort(key=lambda c: (c[0].param, c[0].pole.imag, c[0].pole.real))
    trajectories = tuple(Trajectory(n, tuple(c)) for n, c in enumerate(finished))
    return PoleTrack(key, values, tuple(e[1] for e in entries),
                     np.array([e[2] for e in entries]), trajectories, unit)


@dataclass(frozen=True)
class Bracket:
    """Sign change of Re(p) along one trajectory."""

    trajectory_id: int
    param_low: float
    param_high: float
    estimate: float
    pole_low: complex
    pole_high: complex
    excluded: tuple[float, ...] = ()

    @property
    def direction(self) -> str:
        return "destabilizing" if self.pole_high.real > 0 else "stabilizing"


def detect_bifurcation(track: PoleTrack, max_fit_error: float | None = None) -> list[Bracket]:
    """Bracket real-part sign changes along every trajectory.

    Points whose fit rms error exceeds ``max_fit_error`` are considered
    unreliable (identification degrades right at the bifurcation); they are
    skipped and listed in ``excluded`` of any bracket that spans them. The
    crossing is estimated by linear interpolation of Re(p) in the parameter.
    """
    out = []
    for traj in track.trajectories:
        good, skipped = [], []
        for pt in traj.points:
            if max_fit_error is not None and pt.fit_rms_error > max_fit_error:
                skipped.append(pt.param)
            else:
                good.append(pt)
        for a, b in zip(good, good[1:]):
            ra, rb = a.pole.real, b.pole.real
            if ra * rb < 0:
                est = a.param + (b.param - a.param) * (-ra) / (rb - ra)
                inside = tuple(x for x in skipped if a.param < x < b.param)
                out.append(Bracket(traj.id, a.param, b.param, est, a.pole, b.pole, inside))
    out.sort(key=lambda br: (br.param_low, br.trajectory_id))
    return out


# --------------------------------------------------------------------------
# outputs

def track_report(track: PoleTrack) -> PoleReport:
    """One report entry per sweep value; the rightmost pole is flagged critical."""
    entries = []
    for k, value in enumerate(track.values):
        entries.append(ReportEntry.from_poles({track.parameter: float(value)}, track.poles[k],
                                              float(track.fit_errors[k]), track.critical_at(k)))
    return PoleReport(tuple(entries))


def track_to_obj(track: PoleTrack, brackets: Sequence[Bracket] = ()) -> dict:
    return {
        "parameter": track.parameter,
        "unit": track.unit,
        "values": [float(v) for v in track.values],
        "report": pole_report_to_obj(track_report(track)),
        "trajectories": [
            {
                "id": t.id,
                "continuity": t.continuity,
                "points": [{"param": p.param, "re_per_s": p.pole.real, "im_per_s": p.pole.imag}
                           for p in t.points],
            }
            for t in track.trajectories
        ],
        "bifurcations": [
            {
                "trajectory": b.trajectory_id,
                "param_low": b.param_low,
                "param_high": b.param_high,
                "estimate": b.estimate,
                "direction": b.direction,
                "excluded": list(b.excluded),
            }
            for b in brackets
        ],
    }


def write_track(track: PoleTrack, brackets: Sequence[Bracket] = ()) -> str:
    return json.dumps(track_to_obj(track, brackets), indent=2) + "\n"


_SVG_W, _SVG_H, _PAD = 640, 480, 60


def pole_map_svg(report: PoleReport, track: PoleTrack | None = None, title: str = "") -> str:
    """Static SVG pole map: Re(p) in 1/s against f_res in Hz.

    Every marker carries ``data-re-per-s`` / ``data-f-res-hz`` attributes with
    the report's own numbers, so the picture can be checked against the data.
    Trajectories are drawn as polylines; the right half plane is shaded.
    """
    rows = [(k, row) for k, e in enumerate(report.entries) for row in e.poles]
    xs = [r.re_per_s for _, r in rows]
    ys = [r.f_res_hz for _, r in rows]
    x_lo, x_hi = (min(xs + [0.0]), max(xs + [0.0])) if rows else (-1.0, 1.0)
    y_lo, y_hi = (0.0, max(ys + [1.0])) if rows else (0.0, 1.0)
    span_x = (x_hi - x_lo) or 1.0
    x_lo, x_hi = x_lo - 0.05 * span_x, x_hi + 0.05 * span_x
    y_hi = y_hi * 1.05

    def px(x):
        return _PAD + (x - x_lo) / (x_hi - x_lo) * (_SVG_W - 2 * _PAD)

    def py(y):
        return _SVG_H - _PAD - (y - y_lo) / ((y_hi - y_lo) or 1.0) * (_SVG_H - 2 * _PAD)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_SVG_W}" height="{_SVG_H}">',
        f'<title>{escape(title or "pole map")}</title>',
        f'<rect class="rhp" x="{px(0.0):.3f}" y="{_PAD}" width="{max(px(x_hi) - px(0.0), 0):.3f}" '
        f'height="{_SVG_H - 2 * _PAD}" fill="#f4cccc"/>',
        f'<line class="axis" x1="{px(0.0):.3f}" y1="{_PAD}" x2="{px(0.0):.3f}" y2="{_SVG_H - _PAD}" '
        'stroke="black"/>',
        f'<text x="{_SVG_W / 2}" y="{_SVG_H - 15}" text-anchor="middle">Re(p) (1/s)</text>',
        f'<text x="15" y="{_SVG_H / 2}" transform="rotate(-90 15 {_SVG_H / 2})" '
        'text-anchor="middle">f (Hz)</text>',
    ]
    if track is not None:
        for t in track.trajectories:
            if len(t.points) < 2:
                continue
            pts = " ".join(f"{px(p.pole.real):.3f},{py(p.pole.imag / (2 * math.pi)):.3f}"
                           for p in t.points)
            out.append(f'<polyline class="trajectory" data-id="{t.id}" points="{pts}" '
                       'fill="none" stroke="#3366cc"/>')
    for k, row in rows:
        params = ";".join(f"{name}={value!r}" for name, value in sorted(report.entries[k].params.items()))
        out.append(
            f'<circle class="pole" cx="{px(row.re_per_s):.3f}" cy="{py(row.f_res_hz):.3f}" r="3" '
            f'data-entry="{k}" data-params="{escape(params)}" data-re-per-s="{row.re_per_s!r}" '
            f'data-f-res-hz="{row.f_res_hz!r}" data-critical="{int(row.critical)}" '
            f'fill="{"#cc0000" if row.critical else "#000000"}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(track: PoleTrack, svg: bool = True) -> tuple[PoleReport, str | None]:
    """Pole report of the track and, optionally, its SVG pole map."""
    report = track_report(track)
    return report, (pole_map_svg(report, track, f"poles vs {track.parameter}") if svg else None)
