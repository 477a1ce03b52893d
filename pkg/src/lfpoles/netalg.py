"""Two-port network algebra on ABCD (chain) matrices.

Conversions use a real reference impedance (pseudo-wave convention). Every
operation is vectorized over the frequency axis.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .netio import TwoPortNetwork


class SingularNetworkError(ValueError):
    """A conversion hit a zero denominator."""


class BranchTrackingError(RuntimeError):
    """Square-root branch could not be followed continuously across the grid."""


class NetworkWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class AbcdNetwork:
    """Chain parameters ``[[a, b], [c, d]]`` per frequency (b in ohm, c in S)."""

    freqs_hz: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        freqs = np.array(self.freqs_hz, dtype=float)
        object.__setattr__(self, "freqs_hz", freqs)
        for name in "abcd":
            arr = np.array(getattr(self, name), dtype=complex)
            if arr.ndim == 0:
                arr = np.full(freqs.shape, arr)
            if arr.shape != freqs.shape:
                raise ValueError(f"AbcdNetwork: {name} length does not match frequency grid")
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.freqs_hz.size

    @classmethod
    def from_matrix(cls, freqs_hz, m: np.ndarray, **diagnostics) -> "AbcdNetwork":
        m = np.asarray(m, dtype=complex)
        return cls(freqs_hz, m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1], dict(diagnostics))

    @property
    def matrix(self) -> np.ndarray:
        out = np.empty((len(self), 2, 2), dtype=complex)
        out[:, 0, 0], out[:, 0, 1] = self.a, self.b
        out[:, 1, 0], out[:, 1, 1] = self.c, self.d
        return out

    def determinant(self) -> np.ndarray:
        return self.a * self.d - self.b * self.c

    def reciprocity_error(self) -> float:
        """max |ad - bc - 1|; zero for reciprocal networks."""
        return float(np.max(np.abs(self.determinant() - 1.0), initial=0.0))


# --------------------------------------------------------------------------
# elementary networks, used by tests, the oracle and the demos

def thru(freqs_hz) -> AbcdNetwork:
    f = np.asarray(freqs_hz, dtype=float)
    return AbcdNetwork(f, np.ones_like(f), np.zeros_like(f), np.zeros_like(f), np.ones_like(f))


def series_impedance(freqs_hz, z) -> AbcdNetwork:
    f = np.asarray(freqs_hz, dtype=float)
    z = np.broadcast_to(np.asarray(z, dtype=complex), f.shape)
    return AbcdNetwork(f, np.ones_like(z), z, np.zeros_like(z), np.ones_like(z))


def shunt_admittance(freqs_hz, y) -> AbcdNetwork:
    f = np.asarray(freqs_hz, dtype=float)
    y = np.broadcast_to(np.asarray(y, dtype=complex), f.shape)
    return AbcdNetwork(f, np.ones_like(y), np.zeros_like(y), y, np.ones_like(y))


def transmission_line(freqs_hz, theta, z_line: float = 50.0, loss_np=0.0) -> AbcdNetwork:
    """Uniform line with electrical length ``theta`` (rad, array or scalar) and loss in nepers."""
    f = np.asarray(freqs_hz, dtype=float)
    gl = np.broadcast_to(np.asarray(loss_np, dtype=complex) + 1j * np.asarray(theta), f.shape)
    ch, sh = np.cosh(gl), np.sinh(gl)
    return AbcdNetwork(f, ch, z_line * sh, sh / z_line, ch)


def attenuator(freqs_hz, loss_db: float, z0: float = 50.0) -> AbcdNetwork:
    """Matched resistive pad of ``loss_db`` decibels."""
    k = 10 ** (loss_db / 20.0)
    f = np.asarray(freqs_hz, dtype=float)
    a = np.full(f.shape, (k + 1 / k) / 2, dtype=complex)
    b = np.full(f.shape, z0 * (k - 1 / k) / 2, dtype=complex)
    c = np.full(f.shape, (k - 1 / k) / (2 * z0), dtype=complex)
    return AbcdNetwork(f, a, b, c, a.copy())


# --------------------------------------------------------------------------
# conversions

def _bad_index(mask: np.ndarray, freqs: np.ndarray) -> str:
    idx = int(np.flatnonzero(mask)[0])
    return f"{freqs[idx]:.9g} Hz"


def s_to_abcd(net: TwoPortNetwork) -> AbcdNetwork:
    """Convert S-parameters (real ``z0``) to chain parameters."""
    z0 = net.z0_ohm
    s11, s21, s12, s22 = net.s11, net.s21, net.s12, net.s22
    den = 2 * s21
    bad = np.abs(den) == 0
    if np.any(bad):
        raise SingularNetworkError(f"s21 = 0 at {_bad_index(bad, net.freqs_hz)}; ABCD undefined")
    a = ((1 + s11) * (1 - s22) + s12 * s21) / den
    b = z0 * ((1 + s11) * (1 + s22) - s12 * s21) / den
    c = ((1 - s11) * (1 - s22) - s12 * s21) / (z0 * den)
    d = ((1 - s11) * (1 + s22) + s12 * s21) / den
    return AbcdNetwork(net.freqs_hz, a, b, c, d)


def abcd_to_s(net: AbcdNetwork, z0: float = 50.0) -> TwoPortNetwork:
    """Convert chain parameters to S-parameters referenced to real ``z0``."""
    if not z0 > 0:
        raise ValueError("z0 must be positive")
    a, b, c, d = net.a, net.b, net.c, net.d
    den = a + b / z0 + c * z0 + d
    bad = np.abs(den) == 0
    if np.any(bad):
        raise SingularNetworkError(f"a + b/z0 + c*z0 + d = 0 at {_bad_index(bad, net.freqs_hz)}")
    s11 = (a + b / z0 - c * z0 - d) / den
    s21 = 2 / den
    s12 = 2 * (a * d - b * c) / den
    s22 = (-a + b / z0 - c * z0 + d) / den
    return TwoPortNetwork(net.freqs_hz, s11, s21, s12, s22, z0)


def _require_same_grid(x, y) -> None:
    if x.freqs_hz.shape != y.freqs_hz.shape or not np.array_equal(x.freqs_hz, y.freqs_hz):
        raise ValueError("frequency grids differ; resample explicitly before combining")


def cascade(first: AbcdNetwork, second: AbcdNetwork, *more: AbcdNetwork) -> AbcdNetwork:
    """Chain networks left to right (``first`` nearest port 1)."""
    out = first
    for nxt in (second, *more):
        _require_same_grid(out, nxt)
        out = AbcdNetwork(
            out.freqs_hz,
            out.a * nxt.a + out.b * nxt.c,
            out.a * nxt.b + out.b * nxt.d,
            out.c * nxt.a + out.d * nxt.c,
            out.c * nxt.b + out.d * nxt.d,
        )
    return out


def mirror(net: AbcdNetwork) -> AbcdNetwork:
    """Port-reversed network (reciprocal two-ports): swap a and d."""
    err = net.reciprocity_error()
    diagnostics = {"reciprocity_error": err}
    if err > 1e-6:
        warnings.warn(f"mirror: network is not reciprocal (max |ad-bc-1| = {err:.3g}); "
                      "port reversal by a<->d swap is approximate", NetworkWarning, stacklevel=2)
    return AbcdNetwork(net.freqs_hz, net.d, net.b, net.c, net.a, diagnostics)


def s_to_t(net: TwoPortNetwork) -> np.ndarray:
    """Wave-cascading matrices ``[b1, a1]^T = T [a2, b2]^T``, shape (N, 2, 2).

    Independent of the ABCD path; products of T matrices cascade networks.
    """
    s11, s21, s12, s22 = net.s11, net.s21, net.s12, net.s22
    t = np.empty((len(net), 2, 2), dtype=complex)
    t[:, 0, 0] = s12 - s11 * s22 / s21
    t[:, 0, 1] = s11 / s21
    t[:, 1, 0] = -s22 / s21
    t[:, 1, 1] = 1 / s21
    return t


def t_to_s(freqs_hz, t: np.ndarray, z0: float = 50.0) -> TwoPortNetwork:
    t11, t12, t21, t22 = t[:, 0, 0], t[:, 0, 1], t[:, 1, 0], t[:, 1, 1]
    s21 = 1 / t22
    s11 = t12 / t22
    s22 = -t21 / t22
    s12 = t11 - t12 * t21 / t22
    return TwoPortNetwork(freqs_hz, s11, s21, s12, s22, z0)


def gamma_to_impedance(gamma, z0: float = 50.0):
    """Impedance ``z0 (1 + gamma) / (1 - gamma)``; scalar or array."""
    g = np.asarray(gamma, dtype=complex)
    if np.any(g == 1):
        raise ZeroDivisionError("reflection coefficient of 1 is an open circuit (infinite impedance)")
    z = z0 * (1 + g) / (1 - g)
    return complex(z) if z.ndim == 0 else z


def impedance_to_gamma(z, z0: float = 50.0):
    z = np.asarray(z, dtype=complex)
    g = (z - z0) / (z + z0)
    return complex(g) if g.ndim == 0 else g


# --------------------------------------------------------------------------
# bisection of a symmetric 2x device

def _sqrt_candidate(m: np.ndarray, s: complex) -> np.ndarray | None:
    """Square root with determinant ``s`` via Cayley-Hamilton, or None if it does not exist.

    For eigenvalue roots mu1, mu2 with mu1*mu2 = s and mu1 + mu2 = t,
    ``R = (M + s I) / t``. This also covers defective (Jordan) matrices.
    """
    t2 = m[0, 0] + m[1, 1] + 2 * s
    scale = max(np.abs(m).max(), 1.0)
    if abs(t2) <= 1e-10 * scale:
        return None
    t = np.sqrt(t2)
    return (m + s * np.eye(2)) / t


def _sqrt_eig(m: np.ndarray, prev: np.ndarray | None) -> np.ndarray:
    """Eigen-decomposition square root for the case where the trace formula breaks down."""
    w, v = np.linalg.eig(m)
    if np.linalg.cond(v) > 1e10:
        raise BranchTrackingError("defective matrix with vanishing root trace; no square root")
    best = None
    for signs in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
        r = v @ np.diag(np.array(signs) * np.sqrt(w)) @ np.linalg.inv(v)
        if abs(np.linalg.det(r) - np.sqrt(np.linalg.det(m))) > 1e-6 * max(1.0, abs(np.linalg.det(m))):
            continue
        score = 0.0 if prev is None else np.abs(r - prev).max()
        if best is None or score < best[0]:
            best = (score, r)
    if best is None:
        raise BranchTrackingError("no square root with the required determinant")
    return best[1]


def _half_s21(r: np.ndarray, z0: float) -> complex:
    return 2 / (r[0, 0] + r[0, 1] / z0 + r[1, 0] * z0 + r[1, 1])


def bisect_symmetric(total: TwoPortNetwork, max_phase_step: float = np.pi / 2) -> TwoPortNetwork:
    """Split a symmetric 2x test device into its half.

    Returns ``half`` with ``cascade(half, half) == total``, taking per frequency
    the matrix square root of the total ABCD matrix. Of the two roots ``R`` and
    ``-R`` with determinant ``+sqrt(det)``, the lowest frequency uses the one
    whose transmission phase is nearest zero; later points take the root
    closest to the previous one.

    Quality metrics for the split come from :func:`bisect_symmetric_diagnostics`.
    """
    if len(total) == 0:
        raise ValueError("empty network")
    abcd = s_to_abcd(total).matrix
    z0 = total.z0_ohm
    halves = np.empty_like(abcd)
    prev = None
    prev_s_root = None
    prev_phase = None
    for k, m in enumerate(abcd):
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        s_root = np.sqrt(det)
        if prev_s_root is not None and abs(s_root + prev_s_root) < abs(s_root - prev_s_root):
            s_root = -s_root
        r = _sqrt_candidate(m, s_root)
        if r is None:
            r = _sqrt_eig(m, prev)
        candidates = (r, -r)
        if prev is None:
            choice = min(candidates, key=lambda x: abs(np.angle(_half_s21(x, z0))))
        else:
            choice = min(candidates, key=lambda x: np.abs(x - prev).max())
        phase = np.angle(_half_s21(choice, z0))
        if prev_phase is not None:
            step = np.angle(np.exp(1j * (phase - prev_phase)))
            if abs(step) > max_phase_step:
                raise BranchTrackingError(
                    f"half-network phase jumps by {abs(step):.3g} rad at "
                    f"{total.freqs_hz[k]:.9g} Hz; use a denser frequency grid")
        halves[k] = choice
        prev, prev_s_root, prev_phase = choice, s_root, phase
    half = abcd_to_s(AbcdNetwork.from_matrix(total.freqs_hz, halves), z0)
    return half


def bisect_symmetric_diagnostics(total: TwoPortNetwork, half: TwoPortNetwork) -> dict:
    """Quality metrics for a bisection.

    ``symmetry_error`` and ``reciprocity_error`` describe the measured device;
    ``mirror_error`` is max |S_half - S_mirror(half)|, i.e. how far the half
    is from being port-symmetric (the approximation being made).
    """
    half_abcd = s_to_abcd(half)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NetworkWarning)
        mirrored = abcd_to_s(mirror(half_abcd), half.z0_ohm)
    recon = abcd_to_s(cascade(half_abcd, half_abcd), total.z0_ohm)
    return {
        "symmetry_error": total.symmetry_error(),
        "reciprocity_error": total.reciprocity_error(),
        "mirror_error": float(np.max(np.abs(half.s - mirrored.s), initial=0.0)),
        "reconstruction_error": float(np.max(np.abs(recon.s - total.s), initial=0.0)),
    }
