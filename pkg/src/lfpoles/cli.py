"""Command-line front end: ``lfpoles <subcommand> ...``.

Subcommands follow the measurement procedure: split the 2x-thru fixture,
build H_input, compose H_vn, identify poles (single or common-pole fits),
localize the critical resonance by residues, track poles over a sweep, and
the oracle helpers ``simulate`` / ``exactpoles``. Data goes to files or
stdout, diagnostics to stderr. Exit status: 0 success, 1 invalid input,
2 numerical failure.
"""
from __future__ import annotations

import argparse
import glob
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import deembed, ident, netalg, netio, oracle, track

logger = logging.getLogger("lfpoles")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2

_NUMERIC_ERRORS = (
    ident.FitError, netalg.SingularNetworkError, netalg.BranchTrackingError,
    oracle.SingularCircuitError, deembed.ReferenceFloorError, ZeroDivisionError,
    np.linalg.LinAlgError, FloatingPointError,
)
_INPUT_ERRORS = (ValueError, KeyError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# argument helpers

def _band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--band expects LOW:HIGH in Hz, got {text!r}") from None
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError(f"--band must satisfy 0 < LOW < HIGH, got {text!r}")
    return lo, hi


def _order(text: str):
    if text == "auto":
        return "auto"
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--order expects 'auto' or a positive integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("--order must be positive")
    return n


def _z0(text: str) -> float:
    z = float(text)
    if not z > 0 or not math.isfinite(z):
        raise argparse.ArgumentTypeError("--z0 must be a positive number of ohms")
    return z


def _assignment(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value of {key!r} is not a number: {value!r}") from None


def _sweep(text: str) -> tuple[str, np.ndarray]:
    key, sep, span = text.partition("=")
    parts = span.split(":")
    if not sep or len(parts) != 3:
        raise argparse.ArgumentTypeError(f"--sweep expects KEY=START:STOP:COUNT, got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"--sweep has a non-numeric field: {text!r}") from None
    if count < 1:
        raise argparse.ArgumentTypeError("--sweep COUNT must be positive")
    return key, np.linspace(start, stop, count)


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return p.read_text()


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read_response(path: str, role: str | None = None) -> netio.FrequencyResponse:
    try:
        resp = netio.parse_response_table(_read(path))
    except netio.ResponseFormatError as exc:
        raise netio.ResponseFormatError(f"{path}: {exc}") from None
    if role is not None and resp.role != role:
        raise ValueError(f"{path}: role is {resp.role!r}, expected {role!r}")
    return resp


def _read_twoport(path: str, z0: float) -> netio.TwoPortNetwork:
    net = netio.parse_touchstone(_read(path), nports=2)
    if net.z0_ohm != z0:
        raise ValueError(f"{path}: reference impedance {net.z0_ohm:g} ohm differs from --z0 {z0:g}")
    return net


def _read_gamma(path: str, z0: float) -> netio.FrequencyResponse:
    if path.lower().endswith(".s1p"):
        one = netio.parse_touchstone(_read(path), nports=1)
        if one.z0_ohm != z0:
            raise ValueError(f"{path}: reference impedance {one.z0_ohm:g} ohm differs from --z0 {z0:g}")
        return one.to_response()
    return _read_response(path, "gamma_in")


def _fit(resps, args) -> ident.PoleZeroModel:
    return ident.fit_common_poles_mimo(resps, args.order, band_hz=args.band, auto_tol=args.auto_tol,
                                       weighting=args.weighting, labels=getattr(args, "labels", None))


def _model_report(model: ident.PoleZeroModel, params, band) -> netio.PoleReport:
    try:
        crit = ident.select_critical_pair(model, band)
    except ident.FitError:
        crit = None
    return netio.PoleReport((netio.ReportEntry.from_poles(params, model.poles, model.fit_rms_error, crit),))


def _preset(args) -> oracle.Netlist:
    overrides = dict(args.set or [])
    if args.preset != "rlc_shunt" and "z0" not in overrides:
        overrides["z0"] = args.z0
    return oracle.build_preset(args.preset, overrides)


def _fmt_value(x: float) -> str:
    return f"{x:.6g}"


# --------------------------------------------------------------------------
# subcommands

def cmd_split2x(args) -> int:
    total = _read_twoport(args.input, args.z0)
    half = netalg.bisect_symmetric(total)
    diag = netalg.bisect_symmetric_diagnostics(total, half)
    for key in sorted(diag):
        logger.info("%s = %.3e", key, diag[key])
    _write(args.out, netio.write_touchstone(half, fmt=args.format))
    return EXIT_OK


def cmd_hinput(args) -> int:
    block = _read_twoport(args.block, args.z0)
    if args.combiner:
        block = deembed.extend_block_with_combiner(_read_twoport(args.combiner, args.z0), block)
    gamma = _read_gamma(args.gamma, args.z0)
    h = deembed.compute_h_input(deembed.DeembedInputs(block, gamma, args.z0))
    if h.diagnostics["active_points"]:
        logger.warning("|Gamma_in| > 1 at %d frequencies (active input)", h.diagnostics["active_points"])
    _write(args.out, netio.write_response_table(h))
    return EXIT_OK


def cmd_compose(args) -> int:
    h_input = _read_response(args.hinput, "h_input")
    if args.hn:
        h_n = _read_response(args.hn, "h_n")
    elif args.ratio_n and args.ratio_ref:
        h_n = deembed.compute_h_n(_read_response(args.ratio_n, "ratio_b_over_r1"),
                                  _read_response(args.ratio_ref, "ratio_b_over_r1"))
    else:
        raise UsageError("compose: give --hn, or both --ratio-n and --ratio-ref")
    _write(args.out, netio.write_response_table(deembed.compose_h_vn(h_input, h_n)))
    return EXIT_OK


def cmd_identify(args) -> int:
    resp = _read_response(args.input)
    model = _fit([resp], args)
    logger.info("order %d, relative rms error %.3e", model.order, model.fit_rms_error)
    _write(args.out, netio.write_pole_report(_model_report(model, resp.params, args.crit_band), args.format))
    return EXIT_OK


def cmd_mimo(args) -> int:
    resps = [_read_response(p) for p in args.inputs]
    model = _fit(resps, args)
    logger.info("order %d, relative rms error %.3e", model.order, model.fit_rms_error)
    _write(args.out, json.dumps(ident.model_to_obj(model), indent=2) + "\n")
    return EXIT_OK


def cmd_residues(args) -> int:
    if args.model:
        model = ident.model_from_obj(json.loads(_read(args.model)))
    else:
        if not args.inputs:
            raise UsageError("residues: give --in files or --model")
        model = _fit([_read_response(p) for p in args.inputs], args)
    crit = ident.select_critical_pair(model, args.crit_band)
    rep = ident.residue_localization(model, crit)
    obj = {
        "critical_pole": [crit.real, crit.imag],
        **ident.margin_metrics(crit),
        "labels": list(rep.labels),
        "normalized_residues": [float(x) for x in rep.normalized_residues],
        "residue_magnitudes": [float(x) for x in rep.residue_magnitudes],
        "origin": rep.origin,
    }
    _write(args.out, json.dumps(obj, indent=2) + "\n")
    return EXIT_OK


def cmd_track(args) -> int:
    paths = sorted(glob.glob(args.glob))
    if not paths:
        raise FileNotFoundError(f"no files match {args.glob!r}")
    sweep = []
    for path in paths:
        resp = _read_response(path)
        if args.param not in resp.params:
            raise KeyError(f"{path}: metadata lacks parameter {args.param!r}")
        sweep.append((resp.params, _fit([resp], args)))
    tr = track.build_tracks(sweep, args.param, band_hz=args.crit_band)
    brackets = track.detect_bifurcation(tr, args.max_fit_error)
    for b in brackets:
        logger.info("bifurcation on trajectory %d between %s=%g and %g (estimate %g)",
                    b.trajectory_id, args.param, b.param_low, b.param_high, b.estimate)
    _write(args.out, track.write_track(tr, brackets))
    if args.svg:
        _, svg = track.emit_report(tr)
        _write(args.svg, svg)
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nodes = args.nodes.split(",") if args.nodes else []
    branches = args.branches.split(",") if args.branches else []
    freqs = np.geomspace(args.fmin, args.fmax, args.points)
    probe = oracle.ProbeModel() if args.probe else None
    rng = np.random.default_rng(args.seed)
    points = [None]
    if args.sweep:
        key, values = args.sweep
        points = [(key, v) for v in values]
    for point in points:
        overrides = dict(args.set or [])
        suffix = ""
        if point is not None:
            overrides[point[0]] = point[1]
            suffix = f"_{point[0]}_{_fmt_value(point[1])}"
        if args.preset != "rlc_shunt":
            overrides.setdefault("z0", args.z0)
        net = oracle.build_preset(args.preset, overrides)
        params = dict(args.set or [])
        if point is not None:
            params[point[0]] = point[1]
        if nodes:
            ms = oracle.synthesize_measurement_set(net, nodes, freqs, probe=probe, noise_db=args.noise_db,
                                                   rng=rng, params=params)
            if point is None:
                (out / "block.s2p").write_text(netio.write_touchstone(ms.block))
                (out / "gamma_in.csv").write_text(netio.write_response_table(ms.gamma_in))
                (out / "ratio_ref.csv").write_text(netio.write_response_table(ms.reference_ratio))
            for n in nodes:
                (out / f"hvn_{n}{suffix}.csv").write_text(netio.write_response_table(ms.direct_hvn[n]))
                if point is None:
                    (out / f"ratio_{n}.csv").write_text(netio.write_response_table(ms.ratios[n]))
        for lab in branches:
            y = oracle.frequency_response(net, oracle.Excitation.branch(lab), None, freqs,
                                          params=params)
            (out / f"y_{lab}{suffix}.csv").write_text(netio.write_response_table(y))
        poles = oracle.exact_poles(net)
        report = netio.PoleReport((netio.ReportEntry.from_poles(params, poles, 0.0),))
        (out / f"exact_poles{suffix}.json").write_text(netio.write_pole_report(report))
    return EXIT_OK


def cmd_exactpoles(args) -> int:
    net = _preset(args)
    poles = oracle.exact_poles(net)
    crit = None
    if args.crit_band:
        lo, hi = args.crit_band
        f = poles.imag / (2 * np.pi)
        cand = poles[(f >= lo) & (f <= hi)]
        crit = complex(cand[np.argmax(cand.real)]) if cand.size else None
    report = netio.PoleReport((netio.ReportEntry.from_poles(dict(args.set or []), poles, 0.0, crit),))
    _write(args.out, netio.write_pole_report(report, args.format))
    return EXIT_OK


def cmd_report(args) -> int:
    text = _read(args.input)
    obj = json.loads(text)
    tr = None
    if isinstance(obj, dict) and "report" in obj:
        report = netio.pole_report_from_obj(obj["report"])
    else:
        report = netio.parse_pole_report(text)
    _write(args.out, netio.write_pole_report(report, args.format))
    if args.svg:
        _write(args.svg, track.pole_map_svg(report, tr, Path(args.input).name))
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lfpoles", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--z0", type=_z0, default=50.0,
                       help="reference/source impedance in ohm (default 50)")
        p.set_defaults(func=func)
        return p

    def fit_flags(p):
        p.add_argument("--band", type=_band, default=None, help="fitting band LOW:HIGH in Hz")
        p.add_argument("--order", type=_order, default="auto", help="'auto' or number of poles")
        p.add_argument("--auto-tol", type=float, default=1e-4, dest="auto_tol",
                       help="relative rms target of the automatic order scan")
        p.add_argument("--weighting", choices=("uniform", "inverse_magnitude"), default="uniform")
        p.add_argument("--critical-band", type=_band, default=None, dest="crit_band",
                       help="band for critical-pair selection (default: the fitting band)")

    p = add("split2x", cmd_split2x, "split a symmetric 2x-thru fixture into its half")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--format", choices=("RI", "MA", "DB"), default="RI")

    p = add("hinput", cmd_hinput, "H_input = v_ref/v_gen from block S-parameters and Gamma_in")
    p.add_argument("--block", required=True, help="input block .s2p")
    p.add_argument("--gamma", required=True, help="Gamma_in as .s1p or response table")
    p.add_argument("--combiner", help="combiner path .s2p cascaded before the block")
    p.add_argument("--out")

    p = add("compose", cmd_compose, "H_vn = H_input * H_n")
    p.add_argument("--hinput", required=True)
    p.add_argument("--hn")
    p.add_argument("--ratio-n", dest="ratio_n", help="B/R1 measured at node n")
    p.add_argument("--ratio-ref", dest="ratio_ref", help="B/R1 measured at the reference node")
    p.add_argument("--out")

    p = add("identify", cmd_identify, "fit poles of one response")
    p.add_argument("--in", dest="input", required=True)
    fit_flags(p)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")

    p = add("mimo", cmd_mimo, "common-pole fit of several responses")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--labels", type=lambda s: s.split(","), default=None)
    fit_flags(p)
    p.add_argument("--out")

    p = add("residues", cmd_residues, "normalized residues of the critical pole per response")
    p.add_argument("--in", dest="inputs", nargs="+")
    p.add_argument("--model", help="model JSON written by 'mimo'")
    p.add_argument("--labels", type=lambda s: s.split(","), default=None)
    fit_flags(p)
    p.add_argument("--out")

    p = add("track", cmd_track, "track poles over a sweep of response files")
    p.add_argument("--glob", required=True, help="quoted glob of response tables")
    p.add_argument("--param", required=True, help="metadata key of the swept parameter")
    p.add_argument("--max-fit-error", type=float, default=None, dest="max_fit_error",
                   help="exclude sweep points with larger rms error from bifurcation interpolation")
    fit_flags(p)
    p.add_argument("--svg")
    p.add_argument("--out")

    p = add("simulate", cmd_simulate, "emulate measurements on a reference circuit")
    p.add_argument("--preset", required=True, choices=tuple(oracle.PRESET_DEFAULTS))
    p.add_argument("--set", type=_assignment, action="append", help="KEY=VALUE override")
    p.add_argument("--nodes", help="comma-separated observation nodes")
    p.add_argument("--branches", help="comma-separated inductors for admittance responses")
    p.add_argument("--sweep", type=_sweep, help="KEY=START:STOP:COUNT")
    p.add_argument("--noise-db", type=float, default=None, dest="noise_db")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probe", action="store_true", help="load probed quantities with the default probe")
    p.add_argument("--fmin", type=float, default=1e6)
    p.add_argument("--fmax", type=float, default=5e8)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--out-dir", dest="out_dir", required=True)

    p = add("exactpoles", cmd_exactpoles, "natural frequencies of a reference circuit")
    p.add_argument("--preset", required=True, choices=tuple(oracle.PRESET_DEFAULTS))
    p.add_argument("--set", type=_assignment, action="append")
    p.add_argument("--critical-band", type=_band, default=None, dest="crit_band")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")

    p = add("report", cmd_report, "convert a pole report or track and draw its pole map")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--svg")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except _NUMERIC_ERRORS as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except _INPUT_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        sys.stderr.write(f"error: {msg}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
