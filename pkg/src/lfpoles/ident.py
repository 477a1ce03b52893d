"""Rational pole-residue identification of frequency responses.

The fitter is a relaxed vector-fitting iteration: starting from weakly damped
poles spread over the band, each step solves a linear least-squares problem
for a scaling function sigma(s) sharing the current poles, and its zeros
become the next poles. Several responses can share one denominator (MIMO),
which is what residue-based stage localization needs.

Unstable poles are never reflected into the left half plane. The purpose of
this package is to measure how close a resonance is to instability, so a
right-half-plane pole in the data must come out as one.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .netio import FrequencyResponse

logger = logging.getLogger(__name__)

AUTO_ORDERS = tuple(range(2, 25, 2))
_EXACT_FIT = 1e-12
_STALL = 1e-3  # relative rms gain that counts as an improvement
_STALL_ITERATIONS = 5


class FitError(RuntimeError):
    """Identification failed (bad input or unsupported order)."""


class FitConvergenceError(FitError):
    """Pole relocation did not settle within the iteration limit."""

    def __init__(self, message: str, residual: float, poles: np.ndarray):
        super().__init__(f"{message} (last relative rms residual {residual:.3g})")
        self.residual = residual
        self.poles = poles


@dataclass(frozen=True, eq=False)
class PoleZeroModel:
    """Common-pole rational model ``H_k(s) = d_k + sum_i r_ki / (s - p_i)``.

    Poles are in rad/s. ``residues`` has one row per response.
    """

    poles: np.ndarray
    residues: np.ndarray
    direct_term: np.ndarray
    fit_rms_error: float
    band_hz: tuple[float, float]
    labels: tuple[str, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return int(self.poles.size)

    @property
    def n_responses(self) -> int:
        return int(self.residues.shape[0])

    def upper_poles(self) -> np.ndarray:
        """Poles with Im >= 0, sorted by imaginary part."""
        p = self.poles[self.poles.imag >= 0]
        return p[np.lexsort((p.real, p.imag))]

    def evaluate(self, freqs_hz, response: int | None = None) -> np.ndarray:
        """Model value at ``s = j 2 pi f``; all responses (rows) unless one is chosen."""
        s = 2j * np.pi * np.asarray(freqs_hz, dtype=float)
        return self.evaluate_s(s, response)

    def evaluate_s(self, s, response: int | None = None) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        basis = 1.0 / (s[..., None] - self.poles) if self.poles.size else np.zeros(s.shape + (0,))
        out = basis @ self.residues.T + self.direct_term
        out = np.moveaxis(out, -1, 0)
        return out if response is None else out[response]


@dataclass(frozen=True)
class ResidueReport:
    """Max-normalized residue magnitudes of one pole across responses."""

    critical_pole: complex
    normalized_residues: np.ndarray
    labels: tuple[str, ...]
    residue_magnitudes: np.ndarray

    @property
    def origin(self) -> str:
        return self.labels[int(np.argmax(self.normalized_residues))]


# --------------------------------------------------------------------------
# margins

def margin_metrics(pole: complex) -> dict:
    """Stability-margin figures of one pole (rad/s).

    Returns ``sigma_per_s``, ``f_res_hz``, ``damping_ratio`` and ``q_factor``;
    the quality factor is None for poles on or right of the imaginary axis.
    """
    p = complex(pole)
    mag = abs(p)
    damping = -p.real / mag if mag > 0 else float("nan")
    q = mag / (-2.0 * p.real) if p.real < 0 else None
    return {
        "sigma_per_s": p.real,
        "f_res_hz": p.imag / (2 * math.pi),
        "damping_ratio": damping,
        "q_factor": q,
    }


def pole_significance(model: PoleZeroModel) -> np.ndarray:
    """Resonance peak of each pole relative to the fitted data.

    For pole p with residue r the contribution at ``omega = Im p`` is
    ``|r| / |Re p|``; the largest value over responses is divided by that
    response's in-band data peak. Poles that only absorb noise score far
    below genuine resonances. Returns ``inf`` for poles on the axis.
    """
    peak = model.diagnostics.get("response_peak")
    if peak is None:
        peak = np.ones(model.n_responses)
    peak = np.where(np.asarray(peak) > 0, peak, 1.0)
    with np.errstate(divide="ignore"):
        height = np.abs(model.residues) / np.abs(model.poles.real)[None, :]
    return np.max(height / peak[:, None], axis=0) if model.order else np.zeros(0)


def select_critical_pair(model: PoleZeroModel, band_hz: tuple[float, float] | None = None,
                         min_significance: float = 1e-2) -> complex:
    """Least damped in-band resonance: the upper-half pole with largest real part.

    Poles whose :func:`pole_significance` is below ``min_significance`` are
    treated as fitting artifacts and skipped (set 0 to consider every pole).
    Ties in the real part (1e-9 relative) go to the smaller damping ratio.
    """
    lo, hi = model.band_hz if band_hz is None else band_hz
    sig = pole_significance(model)
    cands = [p for p, g in zip(model.poles, sig)
             if p.imag >= 0 and lo <= p.imag / (2 * np.pi) <= hi and g >= min_significance]
    if not cands:
        raise FitError(f"no significant poles with resonance inside {lo:.6g}-{hi:.6g} Hz")
    cands.sort(key=lambda p: (p.imag, p.real))
    best = cands[0]
    for p in cands[1:]:
        tol = 1e-9 * max(abs(p.real), abs(best.real))
        if p.real > best.real + tol:
            best = p
        elif abs(p.real - best.real) <= tol and (-p.real / abs(p)) < (-best.real / abs(best)):
            best = p
    return complex(best)


def residue_localization(model: PoleZeroModel, critical: complex, tol: float = 1e-6) -> ResidueReport:
    """Normalized |residue| of ``critical`` in each response (max entry = 1).

    The response with the largest entry is the first observation point where
    the resonance is strongly visible, i.e. the stage it originates from.
    """
    critical = complex(critical)
    dist = np.abs(model.poles - critical)
    idx = int(np.argmin(dist)) if dist.size else -1
    if idx < 0 or dist[idx] > tol * abs(critical):
        raise FitError(f"{critical} is not a pole of the model (tolerance {tol:g} relative)")
    mags = np.abs(model.residues[:, idx])
    k = int(np.argmax(mags))
    if mags[k] == 0:
        raise FitError("critical pole has zero residue in every response")
    norm = mags / mags[k]
    norm[k] = 1.0
    labels = model.labels or tuple(f"response_{i}" for i in range(model.n_responses))
    return ResidueReport(complex(model.poles[idx]), norm, labels, mags)


# --------------------------------------------------------------------------
# vector fitting core

def _structure(poles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split into real poles and upper-half representatives of complex pairs."""
    real = np.sort(poles[poles.imag == 0].real).astype(complex)
    upper = poles[poles.imag > 0]
    upper = upper[np.lexsort((upper.real, upper.imag))]
    return real, upper


def _full(real: np.ndarray, upper: np.ndarray) -> np.ndarray:
    pairs = np.column_stack([upper, upper.conj()]).ravel() if upper.size else np.zeros(0, complex)
    return np.concatenate([real, pairs])


def _basis(s: np.ndarray, real: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Real-coefficient basis; two columns per conjugate pair."""
    cols = [1.0 / (s - a) for a in real]
    for a in upper:
        g1, g2 = 1.0 / (s - a), 1.0 / (s - np.conj(a))
        cols.append(g1 + g2)
        cols.append(1j * g1 - 1j * g2)
    return np.column_stack(cols) if cols else np.zeros((s.size, 0), complex)


def _coeffs_to_residues(coef: np.ndarray, n_real: int, n_pairs: int) -> np.ndarray:
    """Map (possibly complex) basis coefficients to per-pole residues in _full order."""
    res = list(coef[:n_real])
    for i in range(n_pairs):
        u, v = coef[n_real + 2 * i], coef[n_real + 2 * i + 1]
        res += [u + 1j * v, u - 1j * v]
    return np.array(res, dtype=complex)


def _relocate(s, F, W, real, upper):
    """One relaxed pole-relocation step; returns new (real, upper) and sigma's direct term."""
    n_real, n_pairs = real.size, upper.size
    n = n_real + 2 * n_pairs
    phi = _basis(s, real, upper)
    ones = np.ones((s.size, 1))
    phi1 = np.hstack([phi, ones])
    # numerator columns with complex coefficients (phi and j*phi), sigma columns real
    p_cols = np.hstack([phi1, 1j * phi1])
    blocks = []
    for f, w in zip(F, W):
        a = np.hstack([p_cols, -f[:, None] * phi1]) * w[:, None]
        a_re = np.vstack([a.real, a.imag])
        scale = np.linalg.norm(a_re, axis=0)
        scale[scale == 0] = 1.0
        r = np.linalg.qr(a_re / scale, mode="r")
        np_cols = p_cols.shape[1]
        # back to unscaled sigma unknowns
        blocks.append(r[np_cols:, np_cols:] * scale[np_cols:][None, :])
    m = np.vstack(blocks)
    weight = np.sqrt(np.sum(np.abs(F * W) ** 2)) / s.size
    constraint = np.concatenate([np.real(np.sum(phi, axis=0)), [s.size]]) * weight
    lhs = np.vstack([m, constraint])
    rhs = np.zeros(lhs.shape[0])
    rhs[-1] = s.size * weight
    cscale = np.linalg.norm(lhs, axis=0)
    cscale[cscale == 0] = 1.0
    x = np.linalg.lstsq(lhs / cscale, rhs, rcond=None)[0] / cscale
    d_sigma = x[-1]
    if abs(d_sigma) < 1e-8:
        # sigma's direct term collapsed: fix it and solve the non-relaxed problem
        d_sigma = 1e-8 if d_sigma >= 0 else -1e-8
        x_c = np.linalg.lstsq(m[:, :-1], -m[:, -1] * d_sigma, rcond=None)[0]
        x = np.concatenate([x_c, [d_sigma]])
    c_sigma = x[:n]
    # state-space realization of the basis: zeros of sigma = eig(A - b c^T / d)
    a_mat = np.zeros((n, n))
    b_vec = np.zeros(n)
    for i, p in enumerate(real):
        a_mat[i, i] = p.real
        b_vec[i] = 1.0
    for i, p in enumerate(upper):
        k = n_real + 2 * i
        a_mat[k:k + 2, k:k + 2] = [[p.real, p.imag], [-p.imag, p.real]]
        b_vec[k] = 2.0
    zeros = np.linalg.eigvals(a_mat - np.outer(b_vec, c_sigma) / d_sigma)
    new_real = np.sort(zeros[zeros.imag == 0].real).astype(complex)
    new_upper = zeros[zeros.imag > 0]
    new_upper = new_upper[np.lexsort((new_upper.real, new_upper.imag))]
    return new_real, new_upper, d_sigma


def _fit_residues(s, F, W, real, upper, conjugate_symmetric):
    n_real, n_pairs = real.size, upper.size
    phi = _basis(s, real, upper)
    a = np.hstack([phi, np.ones((s.size, 1))])
    if not conjugate_symmetric:
        a = np.hstack([a, 1j * a])
    residues, direct = [], []
    for f, w in zip(F, W):
        aw = a * w[:, None]
        a_re = np.vstack([aw.real, aw.imag])
        b_re = np.concatenate([(f * w).real, (f * w).imag])
        scale = np.linalg.norm(a_re, axis=0)
        scale[scale == 0] = 1.0
        x = np.linalg.lstsq(a_re / scale, b_re, rcond=None)[0] / scale
        if not conjugate_symmetric:
            half = x.size // 2
            x = x[:half] + 1j * x[half:]
        residues.append(_coeffs_to_residues(x[:-1], n_real, n_pairs))
        direct.append(x[-1])
    return np.array(residues).reshape(len(F), -1), np.array(direct)


def _pole_movement(old: np.ndarray, new: np.ndarray, im_band: tuple[float, float] | None = None) -> float:
    """Largest relative move of matched poles.

    With ``im_band`` only resonances inside it are compared: poles far
    outside the band are poorly determined by the data and may keep drifting
    without affecting the in-band model.
    """
    if im_band is not None:
        sel_old = old[(old.imag >= im_band[0]) & (old.imag <= im_band[1])]
        sel_new = new[(new.imag >= im_band[0]) & (new.imag <= im_band[1])]
        if sel_old.size or sel_new.size:
            if sel_old.size != sel_new.size:
                return math.inf
            old, new = sel_old, sel_new
    if old.size == 0:
        return 0.0
    cost = np.abs(old[:, None] - new[None, :]) / np.maximum(np.abs(old)[:, None], 1e-300)
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols]))


def _initial_poles(order: int, w_lo: float, w_hi: float):
    n_pairs = order // 2
    beta = np.geomspace(w_lo, w_hi, n_pairs) if n_pairs > 1 else np.array([np.sqrt(w_lo * w_hi)])[:n_pairs]
    upper = -beta / 100.0 + 1j * beta
    real = np.array([-np.sqrt(w_lo * w_hi)], dtype=complex) if order % 2 else np.zeros(0, complex)
    return real, upper


def _rms_error(F, fitted) -> float:
    num = np.sum(np.abs(fitted - F) ** 2, axis=1)
    den = np.sum(np.abs(F) ** 2, axis=1)
    den[den == 0] = 1.0
    return float(np.sqrt(np.mean(num / den)))


def _prepare(resps: Sequence[FrequencyResponse], band_hz):
    base = resps[0]
    for r in resps[1:]:
        if not base.same_grid(r):
            raise FitError("responses are on inconsistent frequency grids")
    if band_hz is None:
        band_hz = (float(base.freqs_hz[0]), float(base.freqs_hz[-1]))
    lo, hi = float(band_hz[0]), float(band_hz[1])
    if not 0 < lo < hi:
        raise FitError(f"band {band_hz} is not a well-ordered positive interval")
    if lo < base.freqs_hz[0] * (1 - 1e-12) or hi > base.freqs_hz[-1] * (1 + 1e-12):
        raise FitError("band extends beyond the data grid")
    mask = (base.freqs_hz >= lo * (1 - 1e-12)) & (base.freqs_hz <= hi * (1 + 1e-12))
    freqs = base.freqs_hz[mask]
    F = np.array([r.values[mask] for r in resps])
    return freqs, F, (lo, hi)


def _weights(F: np.ndarray, weighting: str) -> np.ndarray:
    if weighting == "uniform":
        return np.ones(F.shape)
    if weighting == "inverse_magnitude":
        mag = np.abs(F)
        floor = 1e-12 * max(mag.max(), 1e-300)
        return 1.0 / np.maximum(mag, floor)
    raise ValueError(f"unknown weighting {weighting!r}")


def _fit_order(freqs, F, band, order, *, weighting, max_iterations, tol,
               conjugate_symmetric, strict):
    if freqs.size < 4 * order:
        raise FitError(f"order {order} needs at least {4 * order} in-band points, have {freqs.size}")
    w_scale = 2 * np.pi * band[1]
    s = 2j * np.pi * freqs / w_scale
    W = _weights(F, weighting)
    # each response contributes equally to the pole estimate, whatever its scale
    rms = np.sqrt(np.mean(np.abs(F * W) ** 2, axis=1))
    rms[rms == 0] = 1.0
    W_rel = W / rms[:, None]
    real, upper = _initial_poles(order, band[0] / band[1], 1.0)
    trace = []
    converged = None
    best = (math.inf, real, upper, 0)
    for it in range(max_iterations):
        old = _full(real, upper)
        real, upper, d_sigma = _relocate(s, F, W_rel, real, upper)
        new = _full(real, upper)
        move = _pole_movement(old, new, (band[0] / band[1], 1.0))
        res, d = _fit_residues(s, F, W, real, upper, conjugate_symmetric)
        fitted = (_basis_full(s, new) @ res.T).T + d[:, None]
        err = _rms_error(F, fitted)
        trace.append({"iteration": it + 1, "rms_error": err, "pole_movement": move})
        logger.debug("order %d iteration %d: rms %.3e movement %.3e", order, it + 1, err, move)
        if err < best[0] * (1 - _STALL):
            best = (err, real, upper, it)
        elif err < best[0]:
            best = (err, real, upper, best[3])
        # surplus or noise-fitting poles never stop moving, so an exact fit or
        # an error that stopped improving also counts as settled
        if move < tol:
            converged = "poles"
        elif err < _EXACT_FIT:
            converged = "exact"
        elif it - best[3] >= _STALL_ITERATIONS:
            converged = "error"
        if converged:
            break
    # relocation on noisy data can drift away from a good iterate; keep the best one
    _, real, upper, _ = best
    poles = _full(real, upper)
    if not converged:
        if strict:
            raise FitConvergenceError(
                f"pole relocation did not converge in {max_iterations} iterations at order {order}",
                trace[-1]["rms_error"], poles * w_scale)
        warnings.warn(f"pole relocation did not converge at order {order}", RuntimeWarning, stacklevel=3)
    res, d = _fit_residues(s, F, W, real, upper, conjugate_symmetric)
    fitted = (_basis_full(s, poles) @ res.T).T + d[:, None]
    err = _rms_error(F, fitted)
    return {
        "poles": poles * w_scale,
        "residues": res * w_scale,
        "direct": d,
        "rms": err,
        "converged": bool(converged),
        "stop_reason": converged or "iterations",
        "trace": trace,
    }


def _basis_full(s: np.ndarray, poles: np.ndarray) -> np.ndarray:
    return 1.0 / (s[:, None] - poles[None, :]) if poles.size else np.zeros((s.size, 0))


def fit_common_poles_mimo(resps: Sequence[FrequencyResponse], order: int | str = "auto", *,
                          band_hz: tuple[float, float] | None = None, weighting: str = "uniform",
                          max_iterations: int = 30, tol: float = 1e-8, auto_tol: float = 1e-4,
                          auto_orders: Sequence[int] = AUTO_ORDERS,
                          conjugate_symmetric: bool = True, strict: bool = True,
                          labels: Sequence[str] | None = None) -> PoleZeroModel:
    """Fit one set of poles shared by several responses.

    Parameters
    ----------
    resps : sequence of FrequencyResponse
        Responses on one frequency grid.
    order : int or "auto"
        Number of poles. ``"auto"`` scans ``auto_orders`` and takes the
        smallest order whose relative rms error is below ``auto_tol``; when
        no order reaches it (noisy data) the smallest order within 10% of the
        best error is used. The scan is reported in ``diagnostics["order_scan"]``.
    band_hz : (low, high), optional
        Analysis band; defaults to the whole grid.
    weighting : {"uniform", "inverse_magnitude"}
    max_iterations, tol
        Relocation stops when the largest relative pole movement is below
        ``tol``; exceeding ``max_iterations`` raises
        :class:`FitConvergenceError` unless ``strict`` is False.
    conjugate_symmetric : bool
        Fit residues as conjugate pairs with a real direct term (data from a
        real system). Set False for responses carrying an arbitrary complex
        factor; poles are unaffected by this choice.
    """
    resps = list(resps)
    if not resps:
        raise FitError("no responses to fit")
    freqs, F, band = _prepare(resps, band_hz)
    if labels is None:
        labels = [r.node_id or f"response_{i}" for i, r in enumerate(resps)]
    labels = tuple(labels)

    spread = np.max(np.abs(F - F.mean(axis=1, keepdims=True)), axis=1)
    if np.all(spread <= 1e-12 * np.maximum(np.abs(F).max(axis=1), 1e-300)):
        direct = F.mean(axis=1)
        if conjugate_symmetric:
            direct = direct.real.astype(complex)
        return PoleZeroModel(np.zeros(0, complex), np.zeros((len(resps), 0), complex), direct,
                             _rms_error(F, np.broadcast_to(direct[:, None], F.shape)), band, labels,
                             {"degenerate": True})

    opts = dict(weighting=weighting, max_iterations=max_iterations, tol=tol,
                conjugate_symmetric=conjugate_symmetric)
    diagnostics: dict = {}
    if order == "auto":
        scan = []
        chosen = None
        results = {}
        for n in auto_orders:
            if freqs.size < 4 * n:
                break
            try:
                out = _fit_order(freqs, F, band, n, strict=True, **opts)
            except FitConvergenceError as exc:
                scan.append({"order": n, "rms_error": exc.residual, "converged": False})
                continue
            scan.append({"order": n, "rms_error": out["rms"], "converged": True})
            results[n] = out
            if out["rms"] < auto_tol:
                chosen = n
                break
        if not results:
            raise FitConvergenceError("no order in the automatic scan converged",
                                      min(e["rms_error"] for e in scan) if scan else float("nan"),
                                      np.zeros(0, complex))
        if chosen is None:
            best = min(o["rms"] for o in results.values())
            chosen = min(n for n, o in results.items() if o["rms"] <= 1.1 * best)
            diagnostics["auto_tolerance_met"] = False
        else:
            diagnostics["auto_tolerance_met"] = True
        diagnostics["order_scan"] = scan
        out = results[chosen]
    else:
        n = int(order)
        if n < 1:
            raise FitError("order must be a positive integer")
        out = _fit_order(freqs, F, band, n, strict=strict, **opts)
    diagnostics.update(converged=out["converged"], stop_reason=out["stop_reason"], trace=out["trace"],
                       response_peak=np.abs(F).max(axis=1))
    return PoleZeroModel(out["poles"], out["residues"], out["direct"], out["rms"], band, labels,
                         diagnostics)


def fit_rational_siso(resp: FrequencyResponse, order: int | str = "auto", **options) -> PoleZeroModel:
    """Fit a single response; see :func:`fit_common_poles_mimo` for the options."""
    return fit_common_poles_mimo([resp], order, **options)


# --------------------------------------------------------------------------
# serialization

def _pairs(values) -> list:
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, dtype=complex).ravel()]


def model_to_obj(model: PoleZeroModel) -> dict:
    """JSON-ready form of a model (complex numbers as ``[re, im]``)."""
    return {
        "poles": _pairs(model.poles),
        "residues": [_pairs(row) for row in model.residues],
        "direct_term": _pairs(model.direct_term),
        "labels": list(model.labels),
        "fit_rms_error": float(model.fit_rms_error),
        "band_hz": [float(model.band_hz[0]), float(model.band_hz[1])],
        "response_peak": [float(x) for x in model.diagnostics.get("response_peak", [])],
    }


def model_from_obj(obj: dict) -> PoleZeroModel:
    def arr(pairs):
        return np.array([complex(a, b) for a, b in pairs], dtype=complex)

    poles = arr(obj["poles"])
    residues = np.array([arr(r) for r in obj["residues"]], dtype=complex).reshape(-1, poles.size)
    diagnostics = {}
    if obj.get("response_peak"):
        diagnostics["response_peak"] = np.array(obj["response_peak"], dtype=float)
    return PoleZeroModel(poles, residues, arr(obj["direct_term"]), float(obj["fit_rms_error"]),
                         tuple(obj["band_hz"]), tuple(obj.get("labels", ())), diagnostics)
