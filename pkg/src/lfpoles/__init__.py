"""In-circuit identification of low-frequency resonances in RF amplifiers.

Modules
-------
netio
    Touchstone, response tables and pole reports.
netalg
    Two-port conversions, cascading and symmetric fixture bisection.
deembed
    Node response ``H_vn = v_n / v_gen`` from VNA data.
ident
    Rational (vector-fitting) identification, margins and residue localization.
oracle
    Modified nodal analysis reference circuits with exact poles.
track
    Pole trajectories over sweeps and bifurcation bracketing.
"""
from .deembed import DeembedInputs, compose_h_vn, compute_h_input, compute_h_n, deembed_node
from .ident import (PoleZeroModel, fit_common_poles_mimo, fit_rational_siso, margin_metrics,
                    residue_localization, select_critical_pair)
from .netio import FrequencyResponse, OnePortNetwork, PoleReport, TwoPortNetwork
from .oracle import Netlist, ProbeModel, build_preset, exact_poles, frequency_response
from .track import build_tracks, detect_bifurcation, emit_report

__version__ = "0.1.0"

__all__ = [
    "DeembedInputs", "FrequencyResponse", "Netlist", "OnePortNetwork", "PoleReport", "PoleZeroModel",
    "ProbeModel", "TwoPortNetwork", "build_preset", "build_tracks", "compose_h_vn", "compute_h_input",
    "compute_h_n", "deembed_node", "detect_bifurcation", "emit_report", "exact_poles",
    "fit_common_poles_mimo", "fit_rational_siso", "frequency_response", "margin_metrics",
    "residue_localization", "select_critical_pair",
]
