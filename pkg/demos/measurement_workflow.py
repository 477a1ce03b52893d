"""Walk through one in-circuit stability check on the single-stage reference circuit.

Emulated measurements stand in for the bench: the block S-parameters, the
reflection at the input and the probe ratios at node ``n`` and at the
reference plane. The script de-embeds H_vn, identifies its poles, and
compares the critical pair with the circuit's natural frequencies.

Run with ``python3 demos/measurement_workflow.py``.
"""
import numpy as np

from lfpoles import deembed, ident, oracle

BAND_HZ = (5e7, 5e8)


def main():
    net = oracle.build_preset("hartley_single_stage")
    ms = oracle.synthesize_measurement_set(net, ["n"], noise_db=-60, rng=1)
    inputs = deembed.DeembedInputs(ms.block, ms.gamma_in, ms.z0_ohm)
    h_vn = deembed.deembed_node(inputs, ms.ratios["n"], ms.reference_ratio)
    print(f"de-embedded H_vn at node n over {h_vn.freqs_hz.size} points "
          f"({h_vn.freqs_hz[0]:.3g} to {h_vn.freqs_hz[-1]:.3g} Hz)")

    model = ident.fit_rational_siso(h_vn)
    crit = ident.select_critical_pair(model, BAND_HZ)
    print(f"fitted order {model.order}, relative rms fit error {model.fit_rms_error:.2e}")
    print(f"critical pair: {crit.real:.4e} +/- j{abs(crit.imag):.4e} 1/s "
          f"(resonance {abs(crit.imag) / (2 * np.pi) / 1e6:.1f} MHz)")

    poles = oracle.exact_poles(net)
    in_band = poles[(poles.imag / (2 * np.pi) >= BAND_HZ[0]) & (poles.imag / (2 * np.pi) <= BAND_HZ[1])]
    exact = in_band[np.argmax(in_band.real)]
    print(f"circuit natural frequency: {exact.real:.4e} +/- j{abs(exact.imag):.4e} 1/s")
    print(f"relative difference {abs(crit - exact) / abs(exact):.1e}")
    print("verdict:", "stable" if crit.real < 0 else "unstable")


if __name__ == "__main__":
    main()
