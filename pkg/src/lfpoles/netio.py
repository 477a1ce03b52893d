"""Data containers and file formats.

Three external formats are handled here:

* Touchstone v1 (``.s1p`` / ``.s2p``), real reference impedance, S only.
* Frequency-response tables (CSV) with ``# key=value`` metadata lines.
* Pole reports (JSON array of sweep entries, or CSV with one row per pole).

All parsers are strict: frequencies must be strictly increasing and are never
re-sorted, and every error names the offending line.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

ROLES = ("h_vn", "h_n", "h_input", "ratio_b_over_r1", "gamma_in", "generic")

_FREQ_SCALE = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
_FORMATS = ("RI", "MA", "DB")


class TouchstoneError(ValueError):
    """Malformed Touchstone input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ResponseFormatError(ValueError):
    """Malformed frequency-response table."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _check_grid(freqs: np.ndarray, what: str) -> None:
    if freqs.ndim != 1:
        raise ValueError(f"{what}: frequency grid must be one-dimensional")
    if not np.all(np.isfinite(freqs)):
        raise ValueError(f"{what}: frequencies must be finite")
    if freqs.size and freqs[0] <= 0:
        raise ValueError(f"{what}: frequencies must be positive")
    if freqs.size > 1 and np.any(np.diff(freqs) <= 0):
        raise ValueError(f"{what}: frequencies must be strictly increasing")


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    """Complex samples of a transfer function on a frequency grid.

    ``params`` carries the sweep parameters (``v_dd_volts``, ``p_in_dbm``, ...)
    that travel with the data; ``diagnostics`` holds intermediate results of
    the operation that produced the response and is not part of its identity.
    """

    freqs_hz: np.ndarray
    values: np.ndarray
    role: str = "generic"
    params: Mapping[str, float] = field(default_factory=dict)
    node_id: str | None = None
    diagnostics: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        freqs = np.array(self.freqs_hz, dtype=float)
        values = np.array(self.values, dtype=complex)
        _check_grid(freqs, "FrequencyResponse")
        if values.shape != freqs.shape:
            raise ValueError("FrequencyResponse: values and freqs_hz differ in length")
        if not np.all(np.isfinite(values)):
            raise ValueError("FrequencyResponse: values must be finite")
        if self.role not in ROLES:
            raise ValueError(f"FrequencyResponse: unknown role {self.role!r}")
        params = {str(k): float(v) for k, v in dict(self.params).items()}
        freqs.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "freqs_hz", freqs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "diagnostics", dict(self.diagnostics))

    def __len__(self) -> int:
        return self.freqs_hz.size

    @property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * self.freqs_hz

    def replace(self, **changes) -> "FrequencyResponse":
        kwargs = dict(freqs_hz=self.freqs_hz, values=self.values, role=self.role,
                      params=self.params, node_id=self.node_id, diagnostics={})
        kwargs.update(changes)
        return FrequencyResponse(**kwargs)

    def same_grid(self, other: "FrequencyResponse | TwoPortNetwork | OnePortNetwork") -> bool:
        return self.freqs_hz.shape == other.freqs_hz.shape and bool(
            np.array_equal(self.freqs_hz, other.freqs_hz))


@dataclass(frozen=True, eq=False)
class TwoPortNetwork:
    """Per-frequency two-port S-parameters referenced to a real ``z0_ohm``."""

    freqs_hz: np.ndarray
    s11: np.ndarray
    s21: np.ndarray
    s12: np.ndarray
    s22: np.ndarray
    z0_ohm: float = 50.0

    def __post_init__(self):
        freqs = np.array(self.freqs_hz, dtype=float)
        _check_grid(freqs, "TwoPortNetwork")
        for name in ("s11", "s21", "s12", "s22"):
            arr = np.array(getattr(self, name), dtype=complex)
            if arr.ndim == 0:
                arr = np.full(freqs.shape, arr)
            if arr.shape != freqs.shape:
                raise ValueError(f"TwoPortNetwork: {name} length does not match frequency grid")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.z0_ohm > 0:
            raise ValueError("TwoPortNetwork: z0_ohm must be positive")
        freqs.setflags(write=False)
        object.__setattr__(self, "freqs_hz", freqs)
        object.__setattr__(self, "z0_ohm", float(self.z0_ohm))

    def __len__(self) -> int:
        return self.freqs_hz.size

    @classmethod
    def from_matrix(cls, freqs_hz, s: np.ndarray, z0_ohm: float = 50.0) -> "TwoPortNetwork":
        """Build from an ``(N, 2, 2)`` array with ``s[:, i, j] = S_(i+1)(j+1)``."""
        s = np.asarray(s, dtype=complex)
        return cls(freqs_hz, s[:, 0, 0], s[:, 1, 0], s[:, 0, 1], s[:, 1, 1], z0_ohm)

    @property
    def s(self) -> np.ndarray:
        out = np.empty((len(self), 2, 2), dtype=complex)
        out[:, 0, 0] = self.s11
        out[:, 0, 1] = self.s12
        out[:, 1, 0] = self.s21
        out[:, 1, 1] = self.s22
        return out

    def reciprocity_error(self) -> float:
        """max |s21 - s12| over the grid (diagnostic only)."""
        return float(np.max(np.abs(self.s21 - self.s12), initial=0.0))

    def symmetry_error(self) -> float:
        return float(np.max(np.abs(self.s11 - self.s22), initial=0.0))


@dataclass(frozen=True, eq=False)
class OnePortNetwork:
    """Reflection data from a ``.s1p`` file."""

    freqs_hz: np.ndarray
    s11: np.ndarray
    z0_ohm: float = 50.0

    def __post_init__(self):
        freqs = np.array(self.freqs_hz, dtype=float)
        _check_grid(freqs, "OnePortNetwork")
        s11 = np.array(self.s11, dtype=complex)
        if s11.shape != freqs.shape:
            raise ValueError("OnePortNetwork: s11 length does not match frequency grid")
        if not self.z0_ohm > 0:
            raise ValueError("OnePortNetwork: z0_ohm must be positive")
        object.__setattr__(self, "freqs_hz", freqs)
        object.__setattr__(self, "s11", s11)
        object.__setattr__(self, "z0_ohm", float(self.z0_ohm))

    def __len__(self) -> int:
        return self.freqs_hz.size

    def to_response(self, **params) -> FrequencyResponse:
        return FrequencyResponse(self.freqs_hz, self.s11, role="gamma_in", params=params)


# --------------------------------------------------------------------------
# number formatting helpers

def _fmt(x: float) -> str:
    # 17 significant digits round-trip every double exactly
    return f"{x:.17g}"


def _polar(mag: np.ndarray, deg: np.ndarray) -> np.ndarray:
    """mag * exp(j*deg), exact at multiples of 90 degrees."""
    mag = np.asarray(mag, dtype=float)
    deg = np.asarray(deg, dtype=float)
    scalar = deg.ndim == 0
    deg = np.atleast_1d(deg)
    rad = np.deg2rad(deg)
    cos, sin = np.cos(rad), np.sin(rad)
    quarter = np.mod(deg, 90.0) == 0
    if np.any(quarter):
        k = np.mod(np.round(deg[quarter] / 90.0).astype(int), 4)
        cos[quarter] = np.array([1.0, 0.0, -1.0, 0.0])[k]
        sin[quarter] = np.array([0.0, 1.0, 0.0, -1.0])[k]
    if scalar:
        cos, sin = cos[0], sin[0]
    return mag * cos + 1j * (mag * sin)


def db_to_complex(mag_db, phase_deg) -> np.ndarray:
    return _polar(10.0 ** (np.asarray(mag_db, dtype=float) / 20.0), phase_deg)


def complex_to_db(values) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=complex)
    return 20.0 * np.log10(np.abs(values)), np.degrees(np.angle(values))


# --------------------------------------------------------------------------
# Touchstone v1

def _parse_option_line(text: str, lineno: int) -> tuple[float, str, float]:
    tokens = text[1:].upper().split()
    scale, fmt, z0 = 1e9, "MA", 50.0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in _FREQ_SCALE:
            scale = _FREQ_SCALE[tok]
        elif tok in _FORMATS:
            fmt = tok
        elif tok == "S":
            pass
        elif tok in ("Y", "Z", "H", "G"):
            raise TouchstoneError(f"parameter type {tok} not supported (S only)", lineno)
        elif tok == "R":
            if i + 1 >= len(tokens):
                raise TouchstoneError("option line: 'R' without reference impedance", lineno)
            try:
                z0 = float(tokens[i + 1])
            except ValueError:
                raise TouchstoneError(
                    f"option line: bad reference impedance {tokens[i + 1]!r}", lineno) from None
            if not z0 > 0:
                raise TouchstoneError("option line: reference impedance must be positive", lineno)
            i += 1
        else:
            raise TouchstoneError(f"option line: unrecognized token {tok!r}", lineno)
        i += 1
    return scale, fmt, z0


def _pairs_to_complex(a: np.ndarray, b: np.ndarray, fmt: str) -> np.ndarray:
    if fmt == "RI":
        return a + 1j * b
    if fmt == "MA":
        return _polar(a, b)
    return db_to_complex(a, b)


def parse_touchstone(text: str, nports: int | None = None) -> TwoPortNetwork | OnePortNetwork:
    """Parse a Touchstone v1 file body.

    Parameters
    ----------
    text : str
        File contents.
    nports : {1, 2}, optional
        Expected port count. Inferred from the first data row when omitted
        (3 columns for one port, 9 for two ports).

    Returns
    -------
    TwoPortNetwork or OnePortNetwork
    """
    if nports not in (None, 1, 2):
        raise ValueError("only one- and two-port files are supported")
    option = None
    rows: list[list[float]] = []
    linenos: list[int] = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if option is None:
                option = _parse_option_line(line, lineno)
            continue
        if line.startswith("["):
            raise TouchstoneError("Touchstone v2 keywords are not supported", lineno)
        try:
            values = [float(tok) for tok in line.split()]
        except ValueError:
            raise TouchstoneError(f"non-numeric data: {line!r}", lineno) from None
        if nports is None:
            if len(values) == 3:
                nports = 1
            elif len(values) == 9:
                nports = 2
            else:
                raise TouchstoneError(
                    f"expected 3 (one-port) or 9 (two-port) columns, got {len(values)}", lineno)
        expected = 1 + 2 * nports ** 2
        if len(values) != expected:
            raise TouchstoneError(f"expected {expected} columns, got {len(values)}", lineno)
        if rows and not values[0] > rows[-1][0]:
            raise TouchstoneError(
                f"frequency {values[0]!r} is not greater than previous {rows[-1][0]!r}", lineno)
        if values[0] <= 0:
            raise TouchstoneError("frequencies must be positive", lineno)
        rows.append(values)
        linenos.append(lineno)
    scale, fmt, z0 = option if option is not None else (1e9, "MA", 50.0)
    data = np.array(rows, dtype=float).reshape(len(rows), -1)
    if nports is None:
        nports = 2
    freqs = data[:, 0] * scale if rows else np.zeros(0)
    cols = [_pairs_to_complex(data[:, 1 + 2 * k], data[:, 2 + 2 * k], fmt)
            if rows else np.zeros(0, dtype=complex) for k in range(nports ** 2)]
    if nports == 1:
        return OnePortNetwork(freqs, cols[0], z0)
    # v1 two-port row order: S11 S21 S12 S22
    return TwoPortNetwork(freqs, cols[0], cols[1], cols[2], cols[3], z0)


def write_touchstone(net: TwoPortNetwork | OnePortNetwork, fmt: str = "RI",
                     unit: str = "HZ") -> str:
    """Serialize a network as a Touchstone v1 document.

    ``fmt`` is one of ``RI``, ``MA``, ``DB``; ``unit`` one of ``HZ``, ``KHZ``,
    ``MHZ``, ``GHZ``. Numbers are written with 17 significant digits so that
    parsing the output reproduces the input to rounding error.
    """
    fmt, unit = fmt.upper(), unit.upper()
    if fmt not in _FORMATS:
        raise ValueError(f"unknown Touchstone format {fmt!r}")
    if unit not in _FREQ_SCALE:
        raise ValueError(f"unknown frequency unit {unit!r}")
    if len(net) == 0:
        raise ValueError("empty network")
    if isinstance(net, OnePortNetwork):
        columns = [net.s11]
    else:
        columns = [net.s11, net.s21, net.s12, net.s22]
    unit_label = {"HZ": "Hz", "KHZ": "kHz", "MHZ": "MHz", "GHZ": "GHz"}[unit]
    out = io.StringIO()
    out.write(f"! {len(columns) if len(columns) == 1 else 2}-port S-parameters\n")
    out.write(f"# {unit_label} S {fmt} R {_fmt(net.z0_ohm)}\n")
    freqs = net.freqs_hz / _FREQ_SCALE[unit]
    for k, f in enumerate(freqs):
        parts = [_fmt(f)]
        for col in columns:
            z = complex(col[k])
            if fmt == "RI":
                a, b = z.real, z.imag
            elif fmt == "MA":
                a, b = abs(z), math.degrees(math.atan2(z.imag, z.real))
            else:
                a, b = 20.0 * math.log10(abs(z)), math.degrees(math.atan2(z.imag, z.real))
            parts += [_fmt(a), _fmt(b)]
        out.write(" ".join(parts) + "\n")
    return out.getvalue()


# --------------------------------------------------------------------------
# response tables

_HEADERS = {("freq_hz", "real", "imag"): "ri", ("freq_hz", "mag_db", "phase_deg"): "db"}
_TEXT_KEYS = ("role", "node_id")


def parse_response_table(text: str) -> FrequencyResponse:
    """Parse a CSV frequency response.

    The header is ``freq_hz,real,imag`` or ``freq_hz,mag_db,phase_deg``.
    Comment lines before the header of the form ``# key=value`` become
    sweep parameters (numeric) or the reserved ``role`` / ``node_id`` fields.
    """
    params: dict[str, float] = {}
    role, node_id = "generic", None
    kind = None
    freqs: list[float] = []
    a: list[float] = []
    b: list[float] = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if kind is None and "=" in body:
                key, _, value = (s.strip() for s in body.partition("="))
                if not key:
                    raise ResponseFormatError("empty metadata key", lineno)
                if key in params or (key == "role" and role != "generic") or (
                        key == "node_id" and node_id is not None):
                    raise ResponseFormatError(f"duplicate metadata key {key!r}", lineno)
                if key == "role":
                    if value not in ROLES:
                        raise ResponseFormatError(f"unknown role {value!r}", lineno)
                    role = value
                elif key == "node_id":
                    node_id = value
                else:
                    try:
                        params[key] = float(value)
                    except ValueError:
                        raise ResponseFormatError(
                            f"metadata {key!r} is not numeric: {value!r}", lineno) from None
            continue
        fields = next(csv.reader([line]))
        fields = [f.strip() for f in fields]
        if kind is None:
            kind = _HEADERS.get(tuple(fields))
            if kind is None:
                raise ResponseFormatError(f"unknown header {line!r}", lineno)
            continue
        if len(fields) != 3:
            raise ResponseFormatError(f"expected 3 columns, got {len(fields)}", lineno)
        try:
            f, x, y = (float(v) for v in fields)
        except ValueError:
            raise ResponseFormatError(f"non-numeric row {line!r}", lineno) from None
        if freqs and f == freqs[-1]:
            raise ResponseFormatError(f"duplicate frequency {f!r}", lineno)
        if freqs and f < freqs[-1]:
            raise ResponseFormatError(f"frequency {f!r} decreases", lineno)
        if f <= 0:
            raise ResponseFormatError("frequencies must be positive", lineno)
        freqs.append(f)
        a.append(x)
        b.append(y)
    if kind is None:
        raise ResponseFormatError("missing header")
    a_arr, b_arr = np.array(a, dtype=float), np.array(b, dtype=float)
    values = a_arr + 1j * b_arr if kind == "ri" else db_to_complex(a_arr, b_arr)
    return FrequencyResponse(np.array(freqs, dtype=float), values, role=role,
                             params=params, node_id=node_id)


def write_response_table(resp: FrequencyResponse, fmt: str = "ri") -> str:
    """Serialize a response as CSV (``fmt`` = ``"ri"`` or ``"db"``)."""
    if fmt not in ("ri", "db"):
        raise ValueError(f"unknown response table format {fmt!r}")
    out = io.StringIO()
    out.write(f"# role={resp.role}\n")
    if resp.node_id is not None:
        out.write(f"# node_id={resp.node_id}\n")
    for key in sorted(resp.params):
        out.write(f"# {key}={_fmt(resp.params[key])}\n")
    if fmt == "ri":
        out.write("freq_hz,real,imag\n")
        cols = (resp.values.real, resp.values.imag)
    else:
        out.write("freq_hz,mag_db,phase_deg\n")
        cols = complex_to_db(resp.values)
    for f, x, y in zip(resp.freqs_hz, *cols):
        out.write(f"{_fmt(f)},{_fmt(x)},{_fmt(y)}\n")
    return out.getvalue()


# --------------------------------------------------------------------------
# pole reports

@dataclass(frozen=True)
class PoleRow:
    re_per_s: float
    im_per_s: float
    f_res_hz: float
    damping_ratio: float
    q_factor: float | None
    critical: bool = False

    @property
    def pole(self) -> complex:
        return complex(self.re_per_s, self.im_per_s)

    @property
    def sigma_per_s(self) -> float:
        return self.re_per_s


@dataclass(frozen=True)
class ReportEntry:
    params: Mapping[str, float]
    poles: tuple[PoleRow, ...]
    fit_rms_error: float

    @classmethod
    def from_poles(cls, params: Mapping[str, float], poles: Iterable[complex],
                   fit_rms_error: float, critical: complex | None = None) -> "ReportEntry":
        """Build an entry from raw poles, keeping upper-half-plane representatives.

        Poles are ordered by resonant frequency, then real part.
        """
        from .ident import margin_metrics

        upper = sorted((complex(p) for p in poles if complex(p).imag >= 0),
                       key=lambda p: (p.imag, p.real))
        rows = []
        for p in upper:
            m = margin_metrics(p)
            rows.append(PoleRow(p.real, p.imag, m["f_res_hz"], m["damping_ratio"],
                                m["q_factor"], critical is not None and p == complex(critical)))
        return cls({k: float(v) for k, v in params.items()}, tuple(rows), float(fit_rms_error))


@dataclass(frozen=True)
class PoleReport:
    entries: tuple[ReportEntry, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)


_ROW_KEYS = ("re_per_s", "im_per_s", "f_res_hz", "damping_ratio", "q_factor", "critical")


def _json_float(x: float | None):
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def pole_report_to_obj(report: PoleReport) -> list:
    return [
        {
            "params": {k: entry.params[k] for k in sorted(entry.params)},
            "poles": [
                {
                    "re_per_s": row.re_per_s,
                    "im_per_s": row.im_per_s,
                    "f_res_hz": row.f_res_hz,
                    "damping_ratio": _json_float(row.damping_ratio),
                    "q_factor": _json_float(row.q_factor),
                    "critical": bool(row.critical),
                }
                for row in entry.poles
            ],
            "fit_rms_error": entry.fit_rms_error,
        }
        for entry in report.entries
    ]


def pole_report_from_obj(obj: Sequence) -> PoleReport:
    entries = []
    for item in obj:
        rows = tuple(
            PoleRow(float(r["re_per_s"]), float(r["im_per_s"]), float(r["f_res_hz"]),
                    float("nan") if r["damping_ratio"] is None else float(r["damping_ratio"]),
                    None if r["q_factor"] is None else float(r["q_factor"]),
                    bool(r["critical"]))
            for r in item["poles"])
        entries.append(ReportEntry({k: float(v) for k, v in item["params"].items()},
                                   rows, float(item["fit_rms_error"])))
    return PoleReport(tuple(entries))


def write_pole_report(report: PoleReport, fmt: str = "json") -> str:
    """Serialize a pole report.

    JSON is a top-level array of entries. CSV has one row per pole; parameter
    columns are the sorted union of all entries' parameter names.
    """
    if fmt == "json":
        return json.dumps(pole_report_to_obj(report), indent=2) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    keys = sorted({k for e in report.entries for k in e.params})
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["entry", *keys, *_ROW_KEYS, "fit_rms_error"])
    for idx, entry in enumerate(report.entries):
        for row in entry.poles:
            writer.writerow([
                idx,
                *(_fmt(entry.params[k]) if k in entry.params else "" for k in keys),
                _fmt(row.re_per_s), _fmt(row.im_per_s), _fmt(row.f_res_hz),
                "" if not math.isfinite(row.damping_ratio) else _fmt(row.damping_ratio),
                "" if row.q_factor is None else _fmt(row.q_factor),
                int(row.critical),
                _fmt(entry.fit_rms_error),
            ])
    return out.getvalue()


def parse_pole_report(text: str) -> PoleReport:
    return pole_report_from_obj(json.loads(text))
