import numpy as np
import pytest

from lfpoles import netalg, oracle
from lfpoles.netio import TwoPortNetwork

CRITICAL_BAND = (5e7, 5e8)


def random_passive_abcd(rng, freqs, n_sections=3):
    """Cascade of random series R-L, shunt G-C and lossy line sections."""
    w = 2 * np.pi * np.asarray(freqs)
    parts = []
    for _ in range(n_sections):
        r, l = rng.uniform(0.5, 20), rng.uniform(0.1e-9, 5e-9)
        g, c = rng.uniform(1e-4, 5e-3), rng.uniform(0.1e-12, 2e-12)
        tau, zl = rng.uniform(5e-12, 80e-12), rng.uniform(35, 75)
        parts += [
            netalg.series_impedance(freqs, r + 1j * w * l),
            netalg.shunt_admittance(freqs, g + 1j * w * c),
            netalg.transmission_line(freqs, w * tau, zl, loss_np=rng.uniform(0, 0.02)),
        ]
    return netalg.cascade(*parts)


def random_passive(rng, freqs, z0=50.0) -> TwoPortNetwork:
    return netalg.abcd_to_s(random_passive_abcd(rng, freqs), z0)


def critical_exact(net, band=CRITICAL_BAND) -> complex:
    """Rightmost eigenpencil pole with resonance inside ``band``."""
    p = oracle.exact_poles(net)
    f = p.imag / (2 * np.pi)
    cand = p[(f >= band[0]) & (f <= band[1])]
    return complex(cand[np.argmax(cand.real)])


def rel(a, b):
    return abs(complex(a) - complex(b)) / abs(complex(b))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def single_stage():
    return oracle.build_preset("hartley_single_stage")


@pytest.fixture(scope="session")
def three_stage():
    return oracle.build_preset("three_stage")


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
