"""Closed-loop node response from VNA data.

The quantity of interest is ``H_vn = v_n / v_gen``: the voltage at an
internal node n per unit generator voltage, with the generator behind the
VNA port impedance at the DUT input. It is assembled from two measurable
pieces::

    H_vn = H_input * H_n
    H_input = v_ref / v_gen = (v_in / v_gen) * (v_ref / v_in)
    H_n = v_n / v_ref = (B_n / R1_n) / (B_ref / R1_ref)

``v_in / v_gen = Z_in / (Z_in + z0)`` follows from the source divider, and
``v_ref / v_in`` from the input block's S-parameters and the reflection
coefficient Gamma_in measured at the DUT input connector (the plane of
``v_in``). Probe and receiver gains cancel in the ratio H_n, which is why the
reference node is measured through the same probe.

Large-signal mode: the reference path (Gamma_in, block, reference ratio) is
measured with the drive off and tagged ``drive_off``; node ratios carry the
drive level ``p_in_dbm``. Combining those two tags is the one metadata
asymmetry the composition functions accept.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.interpolate import CubicSpline

from .netalg import SingularNetworkError, abcd_to_s, cascade, gamma_to_impedance, s_to_abcd
from .netio import FrequencyResponse, TwoPortNetwork

DRIVE_OFF = "drive_off"
DRIVE_LEVEL = "p_in_dbm"


class GridMismatchError(ValueError):
    pass


class MetadataConflictError(ValueError):
    pass


class ReferenceFloorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DeembedInputs:
    """Data needed for H_input.

    ``block`` is the input block between the DUT input connector and the
    reference node (or the combiner + block cascade in large-signal mode);
    ``gamma_in`` is the DUT reflection coefficient at the connector.
    """

    block: TwoPortNetwork
    gamma_in: FrequencyResponse
    z0_ohm: float = 50.0

    def __post_init__(self):
        if self.gamma_in.role != "gamma_in":
            raise ValueError(f"gamma_in has role {self.gamma_in.role!r}, expected 'gamma_in'")
        if not self.z0_ohm > 0:
            raise ValueError("z0_ohm must be positive")
        if not self.gamma_in.same_grid(self.block):
            raise GridMismatchError("block and gamma_in are on different frequency grids; resample first")
        if not np.all(np.isfinite(self.gamma_in.values)):
            raise ValueError("gamma_in has non-finite values")

    @property
    def active_points(self) -> np.ndarray:
        """Boolean mask of frequencies with |Gamma_in| > 1 (negative input resistance)."""
        return np.abs(self.gamma_in.values) > 1


def _merge_params(a: Mapping[str, float], b: Mapping[str, float]) -> dict:
    """Union of two parameter maps; equal keys must agree.

    A ``drive_off`` tag meeting a ``p_in_dbm`` tag is the accepted
    large-signal asymmetry: the result keeps the drive level.
    """
    a, b = dict(a), dict(b)
    if (DRIVE_OFF in a and DRIVE_LEVEL in b) or (DRIVE_OFF in b and DRIVE_LEVEL in a):
        a.pop(DRIVE_OFF, None)
        b.pop(DRIVE_OFF, None)
    merged = dict(a)
    for key, value in b.items():
        if key in merged and merged[key] != value:
            raise MetadataConflictError(f"parameter {key!r} differs: {merged[key]!r} vs {value!r}")
        merged[key] = value
    return merged


def _require_grid(a, b, what: str) -> None:
    if not a.same_grid(b):
        raise GridMismatchError(f"{what}: frequency grids differ; resample first")


def _require_role(resp: FrequencyResponse, role: str, what: str) -> None:
    if resp.role != role:
        raise ValueError(f"{what} has role {resp.role!r}, expected {role!r}")


def compute_h_input(inputs: DeembedInputs) -> FrequencyResponse:
    """``v_ref / v_gen`` from block S-parameters and Gamma_in.

    ``diagnostics`` carries ``v_in_over_v_gen``, ``v_ref_over_v_in`` and the
    count of active (``|Gamma_in| > 1``) points.
    """
    blk, g = inputs.block, inputs.gamma_in.values
    f = blk.freqs_hz
    bad = np.flatnonzero(blk.s12 == 0)
    if bad.size:
        raise SingularNetworkError(f"block s12 = 0 at {f[bad[0]]:.9g} Hz; v_ref is not reachable")
    bad = np.flatnonzero(1 + g == 0)
    if bad.size:
        raise ZeroDivisionError(f"Gamma_in = -1 (short) at {f[bad[0]]:.9g} Hz")
    z_in = gamma_to_impedance(g, inputs.z0_ohm)
    v_in = z_in / (z_in + inputs.z0_ohm)
    v_ref = (blk.s21 + (g - blk.s11) * (1 + blk.s22) / blk.s12) / (1 + g)
    params = dict(inputs.gamma_in.params)
    diagnostics = {
        "v_in_over_v_gen": v_in,
        "v_ref_over_v_in": v_ref,
        "active_points": int(np.count_nonzero(inputs.active_points)),
    }
    return FrequencyResponse(f, v_in * v_ref, role="h_input", params=params,
                             node_id="ref", diagnostics=diagnostics)


def compute_h_n(b_over_r1_at_n: FrequencyResponse, b_over_r1_at_ref: FrequencyResponse,
                floor: float = 1e-12) -> FrequencyResponse:
    """``v_n / v_ref`` as the ratio of the two probed receiver ratios."""
    _require_role(b_over_r1_at_n, "ratio_b_over_r1", "node ratio")
    _require_role(b_over_r1_at_ref, "ratio_b_over_r1", "reference ratio")
    _require_grid(b_over_r1_at_n, b_over_r1_at_ref, "compute_h_n")
    den = b_over_r1_at_ref.values
    low = np.flatnonzero(np.abs(den) <= floor)
    if low.size:
        f = b_over_r1_at_ref.freqs_hz[low[0]]
        raise ReferenceFloorError(
            f"reference ratio magnitude {abs(den[low[0]]):.3g} below floor {floor:g} at {f:.9g} Hz")
    params = _merge_params(b_over_r1_at_ref.params, b_over_r1_at_n.params)
    return FrequencyResponse(b_over_r1_at_n.freqs_hz, b_over_r1_at_n.values / den, role="h_n",
                             params=params, node_id=b_over_r1_at_n.node_id)


def compose_h_vn(h_input: FrequencyResponse, h_n: FrequencyResponse) -> FrequencyResponse:
    """``H_vn = H_input * H_n``."""
    _require_role(h_input, "h_input", "h_input")
    _require_role(h_n, "h_n", "h_n")
    _require_grid(h_input, h_n, "compose_h_vn")
    params = _merge_params(h_input.params, h_n.params)
    return FrequencyResponse(h_n.freqs_hz, h_input.values * h_n.values, role="h_vn",
                             params=params, node_id=h_n.node_id)


def extend_block_with_combiner(combiner: TwoPortNetwork, block: TwoPortNetwork) -> TwoPortNetwork:
    """Cascade of the combiner path (third port terminated) followed by the input block."""
    if combiner.freqs_hz.shape != block.freqs_hz.shape or not np.array_equal(combiner.freqs_hz, block.freqs_hz):
        raise GridMismatchError("combiner and block are on different frequency grids")
    if combiner.z0_ohm != block.z0_ohm:
        raise ValueError("combiner and block use different reference impedances")
    total = cascade(s_to_abcd(combiner), s_to_abcd(block))
    return abcd_to_s(total, block.z0_ohm)


def deembed_node(inputs: DeembedInputs, b_over_r1_at_n: FrequencyResponse,
                 b_over_r1_at_ref: FrequencyResponse, floor: float = 1e-12) -> FrequencyResponse:
    """Full chain: H_input, H_n and their product."""
    h_input = compute_h_input(inputs)
    _require_grid(h_input, b_over_r1_at_n, "deembed_node")
    return compose_h_vn(h_input, compute_h_n(b_over_r1_at_n, b_over_r1_at_ref, floor))


def resample(resp: FrequencyResponse, freqs_hz) -> FrequencyResponse:
    """Cubic-spline interpolation of real and imaginary parts onto ``freqs_hz``.

    The new grid must lie inside the original one; no extrapolation.
    """
    f_new = np.asarray(freqs_hz, dtype=float)
    f = resp.freqs_hz
    if f.size < 4:
        raise ValueError("need at least 4 points to resample")
    if f_new.min() < f[0] or f_new.max() > f[-1]:
        raise ValueError(f"target grid {f_new.min():.6g}-{f_new.max():.6g} Hz leaves the data range "
                         f"{f[0]:.6g}-{f[-1]:.6g} Hz")
    re = CubicSpline(f, resp.values.real)(f_new)
    im = CubicSpline(f, resp.values.imag)(f_new)
    diagnostics = dict(resp.diagnostics)
    diagnostics["resampled_from"] = int(f.size)
    return resp.replace(freqs_hz=f_new, values=re + 1j * im, diagnostics=diagnostics)


def resample_network(net: TwoPortNetwork, freqs_hz) -> TwoPortNetwork:
    """Cubic resampling of all four S-parameters."""
    out = {}
    for name in ("s11", "s21", "s12", "s22"):
        r = resample(FrequencyResponse(net.freqs_hz, getattr(net, name)), freqs_hz)
        out[name] = r.values
    return TwoPortNetwork(np.asarray(freqs_hz, dtype=float), out["s11"], out["s21"], out["s12"],
                          out["s22"], net.z0_ohm)
