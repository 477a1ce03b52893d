"""Linear small-signal circuit oracle (modified nodal analysis).

Circuits are described by immutable :class:`Netlist` values. Inductors carry
explicit current unknowns so the system ``(G + s C) x = b`` is linear in
``s``; the finite generalized eigenvalues of the pencil ``(G, -C)`` are the
exact natural frequencies of the circuit. That makes the oracle a ground
truth for every identification and de-embedding step: the measurement chain
can be emulated, run through the pipeline, and compared against poles that
are known to machine precision.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .netio import FrequencyResponse, OnePortNetwork, TwoPortNetwork

GROUND = ("0", "gnd")
KINDS = ("R", "C", "L", "G", "port", "probe")
INFINITE_POLE = 1e15  # rad/s; larger generalized eigenvalues are treated as infinite

DEFAULT_FREQS_HZ = np.geomspace(1e6, 5e8, 401)


class NetlistError(ValueError):
    pass


class SingularCircuitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Element:
    """One circuit element.

    ``kind`` is ``R`` (ohm), ``C`` (F), ``L`` (H), ``G`` (voltage-controlled
    current source, S), ``port`` (VNA port: resistive termination ``value``
    ohm to ground; the generator sits behind it) or ``probe`` (shunt
    resistance ``value`` ohm in parallel with ``aux`` farad).

    For ``G`` the current ``value * (v[control[0]] - v[control[1]])`` flows
    from ``nodes[0]`` through the source into ``nodes[1]``.
    """

    kind: str
    label: str
    nodes: tuple[str, str]
    value: float
    control: tuple[str, str] | None = None
    aux: float = 0.0


@dataclass(frozen=True)
class ProbeModel:
    """High-impedance probe seen by the circuit: ``r_shunt`` in parallel with ``c_shunt``."""

    r_shunt: float = 100e3
    c_shunt: float = 0.75e-12

    def __post_init__(self):
        if not self.r_shunt > 0:
            raise ValueError("probe r_shunt must be positive (use math.inf for none)")
        if not self.c_shunt >= 0:
            raise ValueError("probe c_shunt must be non-negative")

    def impedance(self, freqs_hz) -> np.ndarray:
        w = 2 * np.pi * np.asarray(freqs_hz, dtype=float)
        g = 0.0 if math.isinf(self.r_shunt) else 1.0 / self.r_shunt
        return 1.0 / (g + 1j * w * self.c_shunt)


OPEN_PROBE = ProbeModel(math.inf, 0.0)


@dataclass(frozen=True)
class Netlist:
    """Immutable linear circuit with measurement annotations.

    ``input_node`` is where the VNA port (generator behind ``z0``) connects,
    ``reference_node`` is the input reference node, ``block_labels`` name the
    elements forming the input block between the two, and ``observe`` maps
    observation names (``n1``, ...) to circuit nodes.
    """

    elements: tuple[Element, ...]
    name: str = ""
    input_node: str | None = None
    reference_node: str | None = None
    block_labels: tuple[str, ...] = ()
    observe: Mapping[str, str] = field(default_factory=dict)
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "block_labels", tuple(self.block_labels))
        object.__setattr__(self, "observe", dict(self.observe))
        object.__setattr__(self, "params", {k: float(v) for k, v in dict(self.params).items()})
        self.validate()

    # -- structure -----------------------------------------------------------

    @property
    def nodes(self) -> tuple[str, ...]:
        """Non-ground node names in order of first appearance."""
        seen: dict[str, None] = {}
        for el in self.elements:
            for n in el.nodes + (el.control or ()):
                if n not in GROUND:
                    seen.setdefault(n, None)
        return tuple(seen)

    @property
    def node_count(self) -> int:
        return len(self.nodes) + 1

    def element(self, label: str) -> Element:
        for el in self.elements:
            if el.label == label:
                return el
        raise NetlistError(f"no element labelled {label!r}")

    def resolve(self, node: str) -> str:
        """Map an observation name to its node; plain node names pass through."""
        return self.observe.get(node, node)

    def validate(self) -> None:
        labels = set()
        for el in self.elements:
            if el.kind not in KINDS:
                raise NetlistError(f"{el.label}: unknown element kind {el.kind!r}")
            if (el.kind, el.label) in labels or el.label in {lab for _, lab in labels}:
                raise NetlistError(f"duplicate element label {el.label!r}")
            labels.add((el.kind, el.label))
            if el.kind in ("R", "C", "L", "port") and not el.value > 0:
                raise NetlistError(f"{el.label}: value must be positive")
            if el.kind == "probe" and (not el.value > 0 or el.aux < 0):
                raise NetlistError(f"{el.label}: probe needs r > 0 and c >= 0")
            if el.kind == "G":
                if el.value == 0 or not math.isfinite(el.value):
                    raise NetlistError(f"{el.label}: transconductance must be finite and nonzero")
                if el.control is None:
                    raise NetlistError(f"{el.label}: controlled source needs control nodes")
            if el.nodes[0] == el.nodes[1]:
                raise NetlistError(f"{el.label}: both terminals on node {el.nodes[0]!r}")
        # every node must connect to ground through element terminals
        adj: dict[str, set[str]] = {}
        for el in self.elements:
            a, b = ("0" if n in GROUND else n for n in el.nodes)
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        reach, stack = {"0"}, ["0"]
        while stack:
            for m in adj.get(stack.pop(), ()):
                if m not in reach:
                    reach.add(m)
                    stack.append(m)
        floating = [n for n in self.nodes if n not in reach]
        if floating:
            raise NetlistError(f"nodes not connected to ground: {', '.join(floating)}")
        for name in (self.input_node, self.reference_node, *self.observe.values()):
            if name is not None and name not in self.nodes:
                raise NetlistError(f"annotated node {name!r} is not in the circuit")
        for lab in self.block_labels:
            self.element(lab)

    def with_elements(self, elements: Iterable[Element], **changes) -> "Netlist":
        return replace(self, elements=tuple(elements), **changes)

    def without(self, kinds: Sequence[str] = (), labels: Sequence[str] = ()) -> "Netlist":
        keep = [el for el in self.elements if el.kind not in kinds and el.label not in labels]
        return replace(self, elements=tuple(keep))

    # -- serialization ---------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "name": self.name,
            "nodes": list(self.nodes),
            "input_node": self.input_node,
            "reference_node": self.reference_node,
            "block_labels": list(self.block_labels),
            "observe": dict(sorted(self.observe.items())),
            "params": dict(sorted(self.params.items())),
            "elements": [
                {k: v for k, v in (("kind", el.kind), ("label", el.label), ("nodes", list(el.nodes)),
                                   ("value", el.value),
                                   ("control", list(el.control) if el.control else None),
                                   ("aux", el.aux)) if v is not None}
                for el in self.elements
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Netlist":
        doc = json.loads(text)
        elements = [
            Element(e["kind"], e["label"], tuple(e["nodes"]), float(e["value"]),
                    tuple(e["control"]) if e.get("control") else None, float(e.get("aux", 0.0)))
            for e in doc["elements"]
        ]
        return cls(tuple(elements), doc.get("name", ""), doc.get("input_node"),
                   doc.get("reference_node"), tuple(doc.get("block_labels", ())),
                   doc.get("observe", {}), doc.get("params", {}))


# --------------------------------------------------------------------------
# MNA assembly

@dataclass(frozen=True, eq=False)
class MnaSystem:
    G: np.ndarray
    C: np.ndarray
    index: dict  # node name -> row
    branch: dict  # inductor label -> row

    @property
    def size(self) -> int:
        return self.G.shape[0]


def assemble(net: Netlist) -> MnaSystem:
    nodes = net.nodes
    index = {n: i for i, n in enumerate(nodes)}
    inductors = [el.label for el in net.elements if el.kind == "L"]
    branch = {lab: len(nodes) + k for k, lab in enumerate(inductors)}
    size = len(nodes) + len(inductors)
    G = np.zeros((size, size))
    C = np.zeros((size, size))

    def idx(n):
        return None if n in GROUND else index[n]

    def stamp(mat, a, b, val):
        if a is not None:
            mat[a, a] += val
        if b is not None:
            mat[b, b] += val
        if a is not None and b is not None:
            mat[a, b] -= val
            mat[b, a] -= val

    for el in net.elements:
        a, b = idx(el.nodes[0]), idx(el.nodes[1])
        if el.kind == "R":
            stamp(G, a, b, 1.0 / el.value)
        elif el.kind == "C":
            stamp(C, a, b, el.value)
        elif el.kind == "port":
            stamp(G, a, b, 1.0 / el.value)
        elif el.kind == "probe":
            if math.isfinite(el.value):
                stamp(G, a, b, 1.0 / el.value)
            if el.aux:
                stamp(C, a, b, el.aux)
        elif el.kind == "L":
            k = branch[el.label]
            if a is not None:
                G[a, k] += 1.0
                G[k, a] += 1.0
            if b is not None:
                G[b, k] -= 1.0
                G[k, b] -= 1.0
            C[k, k] -= el.value
        elif el.kind == "G":
            cp, cn = idx(el.control[0]), idx(el.control[1])
            for row, sign_r in ((a, 1.0), (b, -1.0)):
                if row is None:
                    continue
                if cp is not None:
                    G[row, cp] += sign_r * el.value
                if cn is not None:
                    G[row, cn] -= sign_r * el.value
    return MnaSystem(G, C, index, branch)


# --------------------------------------------------------------------------
# excitations and responses

@dataclass(frozen=True)
class Excitation:
    """Small-signal source driving the circuit.

    * ``port``: generator ``v_gen = 1`` in series with the VNA port resistance
      at the port element's node (the measurement setup with port 1 on the DUT
      input).
    * ``current``: unit current injected into ``target`` node.
    * ``branch``: unit voltage source in series with inductor ``target``;
      the response is then the branch current (an admittance).
    """

    kind: str
    target: str | None = None

    @classmethod
    def port(cls) -> "Excitation":
        return cls("port")

    @classmethod
    def current(cls, node: str) -> "Excitation":
        return cls("current", node)

    @classmethod
    def branch(cls, inductor_label: str) -> "Excitation":
        return cls("branch", inductor_label)


def _rhs(net: Netlist, sys: MnaSystem, exc: Excitation) -> np.ndarray:
    b = np.zeros(sys.size, dtype=complex)
    if exc.kind == "port":
        ports = [el for el in net.elements if el.kind == "port"]
        if len(ports) != 1:
            raise NetlistError("port excitation needs exactly one port element")
        el = ports[0]
        b[sys.index[el.nodes[0]]] = 1.0 / el.value
    elif exc.kind == "current":
        node = net.resolve(exc.target)
        if node in GROUND or node not in sys.index:
            raise NetlistError(f"cannot inject current at {exc.target!r}")
        b[sys.index[node]] = 1.0
    elif exc.kind == "branch":
        if exc.target not in sys.branch:
            raise NetlistError(f"branch excitation needs an inductor label, got {exc.target!r}")
        # row: v_a - v_b - sL i = -v_s, so the source pushes current a -> b
        b[sys.branch[exc.target]] = -1.0
    else:
        raise NetlistError(f"unknown excitation kind {exc.kind!r}")
    return b


def solve(net: Netlist, exc: Excitation, freqs_hz) -> tuple[MnaSystem, np.ndarray]:
    """Full solution vectors, shape (n_freqs, size)."""
    sys = assemble(net)
    w = 2 * np.pi * np.asarray(freqs_hz, dtype=float)
    b = _rhs(net, sys, exc)
    mats = sys.G[None, :, :] + 1j * w[:, None, None] * sys.C[None, :, :]
    try:
        x = np.linalg.solve(mats, np.broadcast_to(b, (w.size, sys.size))[..., None])[..., 0]
    except np.linalg.LinAlgError:
        conds = np.linalg.cond(mats)
        k = int(np.argmax(conds))
        raise SingularCircuitError(
            f"circuit matrix singular at {freqs_hz[k]:.9g} Hz (condition {conds[k]:.3g})") from None
    return sys, x


def frequency_response(net: Netlist, excitation: Excitation, observed: str | None,
                       freqs_hz=DEFAULT_FREQS_HZ, role: str = "generic",
                       params: Mapping[str, float] | None = None) -> FrequencyResponse:
    """Transfer ratio from ``excitation`` to the voltage at ``observed``.

    With a branch excitation and ``observed=None`` the branch current is
    returned instead (admittance-type response).
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    sys, x = solve(net, excitation, freqs_hz)
    if observed is None:
        if excitation.kind != "branch":
            raise NetlistError("observed node required unless the excitation is a branch source")
        values = x[:, sys.branch[excitation.target]]
        node_id = excitation.target
    else:
        node = net.resolve(observed)
        if node in GROUND or node not in sys.index:
            raise NetlistError(f"observed node {observed!r} is not in the circuit")
        values = x[:, sys.index[node]]
        node_id = observed
    return FrequencyResponse(freqs_hz, values, role=role,
                             params=dict(net.params if params is None else params), node_id=node_id)


def node_impedance(net: Netlist, node: str, freqs_hz) -> np.ndarray:
    """Driving-point impedance at ``node`` with the circuit as-is (port terminated)."""
    return frequency_response(net, Excitation.current(node), node, freqs_hz).values


def exact_poles(net: Netlist) -> np.ndarray:
    """Finite natural frequencies (rad/s) from ``det(G + s C) = 0``.

    Sorted by imaginary part then real part.
    """
    sys = assemble(net)
    probe_s = 1j * 2 * np.pi * 1.234567e7
    m = sys.G + probe_s * sys.C
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularCircuitError(f"matrix pencil is numerically singular (condition {cond:.3g})")
    w = scipy.linalg.eigvals(sys.G, -sys.C)
    finite = w[np.isfinite(w) & (np.abs(w) < INFINITE_POLE)]
    # restore exact conjugate symmetry lost in the QZ iteration
    finite = np.where(np.abs(finite.imag) <= 1e-12 * np.abs(finite), finite.real + 0j, finite)
    return finite[np.lexsort((finite.real, finite.imag))]


def attach_probe(net: Netlist, node: str, probe: ProbeModel = ProbeModel()) -> Netlist:
    """Copy of ``net`` with the probe's shunt impedance at ``node``."""
    target = net.resolve(node)
    if target in GROUND:
        raise NetlistError("cannot attach a probe to ground")
    if target not in net.nodes:
        raise NetlistError(f"node {node!r} is not in the circuit")
    label = f"probe@{target}"
    if any(el.label == label for el in net.elements):
        raise NetlistError(f"a probe is already attached at {target!r}")
    el = Element("probe", label, (target, "0"), float(probe.r_shunt), None, float(probe.c_shunt))
    return net.with_elements(net.elements + (el,))


def two_port_sparams(net: Netlist, port1: str, port2: str, freqs_hz, z0: float = 50.0,
                     labels: Sequence[str] | None = None) -> TwoPortNetwork:
    """S-parameters of (a subset of) the circuit between two nodes, both ports terminated in ``z0``."""
    elements = [el for el in net.elements if labels is None or el.label in labels]
    elements = [el for el in elements if el.kind not in ("port", "probe")]
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    s = np.empty((freqs_hz.size, 2, 2), dtype=complex)
    for j, (src, other) in enumerate(((port1, port2), (port2, port1))):
        sub = Netlist(tuple(elements) + (
            Element("port", "_drive", (src, "0"), z0),
            Element("R", "_term", (other, "0"), z0),
        ))
        sys, x = solve(sub, Excitation.port(), freqs_hz)
        v_src, v_other = x[:, sys.index[src]], x[:, sys.index[other]]
        s[:, j, j] = 2 * v_src - 1
        s[:, 1 - j, j] = 2 * v_other
    return TwoPortNetwork.from_matrix(freqs_hz, s, z0)


def input_reflection(net: Netlist, freqs_hz, z0: float | None = None) -> OnePortNetwork:
    """Reflection coefficient seen by the VNA port looking into the circuit."""
    port = _port(net)
    z0 = port.value if z0 is None else z0
    dut = net.without(kinds=("port",))
    z = node_impedance(dut, port.nodes[0], freqs_hz)
    return OnePortNetwork(freqs_hz, (z - z0) / (z + z0), z0)


def _port(net: Netlist) -> Element:
    ports = [el for el in net.elements if el.kind == "port"]
    if len(ports) != 1:
        raise NetlistError("netlist needs exactly one port element")
    return ports[0]


# --------------------------------------------------------------------------
# emulated measurement

@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Everything the physical procedure produces, fabricated from a netlist.

    ``ratios`` and ``reference_ratio`` are receiver ratios B/R1 as the VNA
    reports them through the probe (including the probe's own transfer
    function); ``direct_hvn`` is the true v_n / v_gen of the unprobed circuit.
    """

    block: TwoPortNetwork
    gamma_in: FrequencyResponse
    ratios: dict
    reference_ratio: FrequencyResponse
    direct_hvn: dict
    z0_ohm: float


def probe_transfer(freqs_hz) -> np.ndarray:
    """Smooth complex gain standing in for probe + receiver path; it cancels in the ratio."""
    f = np.asarray(freqs_hz, dtype=float)
    return 0.1 * np.exp(-2j * np.pi * f * 1.7e-9) / (1 + 1j * f / 1.5e9)


def _add_noise(values: np.ndarray, noise_db: float | None, rng) -> np.ndarray:
    if noise_db is None:
        return values
    rms = np.sqrt(np.mean(np.abs(values) ** 2))
    sigma = rms * 10 ** (noise_db / 20.0)
    noise = rng.standard_normal(values.shape) + 1j * rng.standard_normal(values.shape)
    return values + sigma * noise / np.sqrt(2)


def synthesize_measurement_set(net: Netlist, nodes: Sequence[str], freqs_hz=DEFAULT_FREQS_HZ, *,
                               probe: ProbeModel | None = None, probe_reference: bool = True,
                               noise_db: float | None = None, rng=None,
                               params: Mapping[str, float] | None = None) -> MeasurementSet:
    """Emulate the in-circuit measurement procedure on ``net``.

    Parameters
    ----------
    nodes : sequence of str
        Observation nodes (names from ``net.observe`` or raw node names).
    probe : ProbeModel, optional
        Loading applied while a quantity is sensed through the probe. The
        node-n ratio is measured with the probe at node n, the reference
        ratio with the probe at the reference node (unless
        ``probe_reference`` is False). Reflection and block data are taken
        without the probe.
    noise_db : float, optional
        Additive complex Gaussian noise on the measured ratios and on
        Gamma_in, relative to each record's rms (e.g. -60).
    """
    if net.input_node is None or net.reference_node is None or not net.block_labels:
        raise NetlistError("netlist lacks an input node, reference node or input block")
    missing = [n for n in nodes if net.resolve(n) not in net.nodes]
    if missing:
        raise NetlistError(f"unknown observation nodes: {', '.join(missing)}")
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    rng = np.random.default_rng(rng)
    params = dict(net.params if params is None else params)
    port = _port(net)
    z0 = port.value

    block = two_port_sparams(net, net.input_node, net.reference_node, freqs_hz, z0, net.block_labels)
    gamma = input_reflection(net, freqs_hz, z0)
    gamma_in = FrequencyResponse(freqs_hz, _add_noise(gamma.s11, noise_db, rng), role="gamma_in",
                                 params=params)
    k_probe = probe_transfer(freqs_hz)
    r1 = 0.5  # incident wave for v_gen = 1

    def sensed(node: str, loaded: bool) -> np.ndarray:
        circuit = attach_probe(net, node, probe) if (probe is not None and loaded) else net
        v = frequency_response(circuit, Excitation.port(), node, freqs_hz).values
        return _add_noise(k_probe * v / r1, noise_db, rng)

    ref_ratio = FrequencyResponse(freqs_hz, sensed(net.reference_node, probe_reference),
                                  role="ratio_b_over_r1", params=params, node_id="ref")
    ratios, direct = {}, {}
    for n in nodes:
        ratios[n] = FrequencyResponse(freqs_hz, sensed(n, True), role="ratio_b_over_r1",
                                      params=params, node_id=n)
        direct[n] = frequency_response(net, Excitation.port(), n, freqs_hz, role="h_vn",
                                       params=params)
    return MeasurementSet(block, gamma_in, ratios, ref_ratio, direct, z0)


# --------------------------------------------------------------------------
# presets

_CELL_DEFAULTS = {
    "cgs": 4e-12, "cgd": 0.8e-12, "rds": 250.0,
    "lg": 60e-9, "ld": 60e-9, "c_stab": 10e-12, "r_dd": 2.0,
}


def _block(elements: list, z_line: float, delay: float) -> None:
    l_half = z_line * delay / 2
    elements += [
        Element("L", "Lb1", ("in", "bm"), l_half),
        Element("C", "Cb", ("bm", "0"), delay / z_line),
        Element("L", "Lb2", ("bm", "ref"), l_half),
    ]


def _cell(elements: list, k: str, gate_in: str, p: Mapping[str, float]) -> str:
    """One common-source stage with gate and drain bias lines; returns its drain node."""
    g, d, nb, nd = f"g{k}", f"d{k}", f"nb{k}", f"nd{k}"
    elements += [
        Element("C", f"Cc{k}", (gate_in, g), p[f"c_couple{k}"]),
        Element("C", f"Cgs{k}", (g, "0"), p[f"cgs{k}"]),
        Element("C", f"Cgd{k}", (g, d), p[f"cgd{k}"]),
        Element("G", f"Gm{k}", (d, "0"), p[f"gm{k}"], (g, "0")),
        Element("R", f"Rds{k}", (d, "0"), p[f"rds{k}"]),
        Element("L", f"Lg{k}", (g, nb), p[f"lg{k}"]),
        Element("R", f"Rstab{k}", (nb, "0"), p[f"r_stab{k}"]),
        Element("C", f"Cstab{k}", (nb, "0"), p[f"c_stab{k}"]),
        Element("L", f"Ld{k}", (d, nd), p[f"ld{k}"]),
        Element("R", f"Rdd{k}", (nd, "0"), p[f"r_dd{k}"]),
    ]
    return d


def _stage_params(k: str, **values) -> dict:
    p = {f"{name}{k}": v for name, v in _CELL_DEFAULTS.items()}
    p.update({f"{name}{k}": v for name, v in values.items()})
    return p


PRESET_DEFAULTS: dict[str, dict[str, float]] = {
    "rlc_shunt": {"r": 50.0, "l": 10e-9, "c": 20e-12, "z0": 50.0},
    "hartley_single_stage": {
        "z0": 50.0, "z_line": 50.0, "delay": 50e-12, "r_load": 50.0, "c_out": 10e-12,
        **_stage_params("", gm=0.05, c_couple=5e-12, r_stab=5.0, lg=52e-9, ld=52e-9),
    },
    "three_stage": {
        "z0": 50.0, "z_line": 50.0, "delay": 50e-12, "r_load": 50.0, "c_out": 10e-12,
        **_stage_params("1", gm=0.04, c_couple=5e-12, r_stab=30.0, lg=30e-9, ld=30e-9),
        **_stage_params("2", gm=0.002, c_couple=3e-12, r_stab=5.0, lg=170e-9, ld=170e-9),
        **_stage_params("3", gm=0.04, c_couple=3e-12, r_stab=30.0, lg=20e-9, ld=20e-9),
    },
}


def build_preset(name: str, overrides: Mapping[str, float] | None = None) -> Netlist:
    """Reference circuits with known poles.

    ``rlc_shunt``
        Parallel RLC driven by a current source, observed at its top node.
    ``hartley_single_stage``
        One FET cell (gm, Cgs, Cgd, Rds) whose gate and drain bias
        inductances and Cgd form a weakly damped low-frequency resonance.
        Observation node ``n`` is the gate bias-line node just after the
        bias inductor.
    ``three_stage``
        Three cells in cascade with per-stage stabilization resistors
        ``r_stab1..3``; stage 2 carries the least damped resonance.
        Observation nodes ``n1..n3`` sit on each gate bias line.
    """
    if name not in PRESET_DEFAULTS:
        raise NetlistError(f"unknown preset {name!r}; choose from {', '.join(PRESET_DEFAULTS)}")
    p = dict(PRESET_DEFAULTS[name])
    for key, value in (overrides or {}).items():
        if key not in p:
            raise NetlistError(f"preset {name!r} has no parameter {key!r}")
        p[key] = float(value)
    el: list[Element] = []
    if name == "rlc_shunt":
        el += [
            Element("R", "R", ("top", "0"), p["r"]),
            Element("L", "L", ("top", "0"), p["l"]),
            Element("C", "C", ("top", "0"), p["c"]),
        ]
        return Netlist(tuple(el), name, observe={"top": "top"}, params=p)
    el.append(Element("port", "P1", ("in", "0"), p["z0"]))
    _block(el, p["z_line"], p["delay"])
    if name == "hartley_single_stage":
        drain = _cell(el, "", "ref", p)
        observe = {"n": "nb", "gate": "g", "drain": "d"}
    else:
        d1 = _cell(el, "1", "ref", p)
        d2 = _cell(el, "2", d1, p)
        drain = _cell(el, "3", d2, p)
        observe = {"n1": "nb1", "n2": "nb2", "n3": "nb3"}
    el += [
        Element("C", "Cout", (drain, "out"), p["c_out"]),
        Element("R", "Rload", ("out", "0"), p["r_load"]),
    ]
    return Netlist(tuple(el), name, input_node="in", reference_node="ref",
                   block_labels=("Lb1", "Cb", "Lb2"), observe=observe, params=p)
