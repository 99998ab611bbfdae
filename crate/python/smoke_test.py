"""Smoke test for the pyccqed extension module.

Build and install first:

    cd crates/python && maturin build --release -o dist && pip install dist/*.whl

then run ``python python/smoke_test.py``.
"""

import math

import pyccqed as cq


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    cav = cq.Cavity()
    rates = cav.rates()
    assert close(cq.to_mhz(rates["kappa"]), 2.1784, 1e-3), rates
    assert 2700 < cav.finesse < 3200

    g = cq.parse_quantity("0.53 MHz", "frequency")
    assert close(g, cq.mhz(0.53), 1e-12)
    sys = cq.CoupledSystem(g, 520, cq.mhz(11.9), cav)
    assert close(cq.to_mhz(sys.g_n), 12.09, 0.01)
    kp, _ = sys.effective_response(0.0, 0.0)
    assert close(kp, sys.kappa * (1 + 2 * sys.cooperativity), 1e-12)

    grid = [cq.mhz(-30 + 0.5 * i) for i in range(121)]
    spec = sys.rabi_spectrum(grid)
    minima = [grid[i] for i in range(1, len(spec) - 1) if spec[i] < spec[i - 1] and spec[i] < spec[i + 1]]
    assert len(minima) == 2 and close(minima[1], -minima[0], 1e-9), minima

    n = cq.effective_ion_count(511e-6, 75e-6, 5.4e14, 0.97, 3.9e-6, 15.7e-6)
    assert abs(n - 520) / 520 < 0.15, n

    pops = cq.larmor_populations(cq.khz(100), 0.0, [math.pi / cq.khz(100)])
    assert abs(pops[0][0] - 1.0) < 1e-9, pops

    assert close(cq.larmor_rate(0.134e-4), cq.khz(150), 0.01)

    out = cq.pipeline("fig10", seed=3)
    comp = {c["quantity"]: c for c in out["comparisons"]}
    oz = comp["omega_z"]
    assert abs(oz["recovered"] - oz["injected"]) < 3 * oz["std_error"], oz
    assert "calibration" in out["tables"]

    x, y = sys.simulate_scan(seed=1)
    fit = cq.fit_dip(x, y, counts=True)
    assert fit["hwhm"]["value"] > sys.kappa

    try:
        cq.Cavity(t1=2.0)
    except cq.DomainError:
        pass
    else:
        raise AssertionError("invalid cavity accepted")

    print("pyccqed", cq.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
