"""Smoke test for the loadscale Python extension.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/loadscale-*.whl
"""

import math
import tempfile

import loadscale as ls


def close(a, b, tol):
    return abs(a - b) <= tol * abs(b)


def main():
    m1 = ls.ScalingFit(45.44, 1.522, 0.88)
    assert close(m1.critical_load(), 2250.0, 0.005), m1.critical_load()
    assert abs(m1.predict(1.0) - 45.0) <= 1.0
    assert m1.regime(1.0) == "scaling" and m1.regime(1e5) == "saturation"

    w = [10 ** (5 * i / 19) for i in range(20)]
    err = [math.sqrt(45.0**2 / x**0.9 + 1.5**2) for x in w]
    fit = ls.fit_scaling_law(w, err)
    assert close(fit.sqrt_alpha1, 1.5, 1e-6) and close(fit.p, 0.9, 1e-6), fit

    assert ls.mape([1.0, 2.0], [2.0, 1.0]) == 75.0
    assert ls.cv([2.0, 2.0], [1.0, 3.0]) == 50.0
    assert ls.seasonal_naive([1.0, 2.0, 3.0], 2, 2) == [2.0, 3.0]

    dev = ls.DeviationModel.random_pair(1.0, 1.0, 1.0)
    assert dev.variance_of_sum(10) == 55.0
    assert close(dev.mc_variance(10, 10_000, 1), 55.0, 0.05)

    ids, rows = ls.synth_population(5, 2, ls.DeviationModel.uncorrelated(0.2), seed=3)
    assert len(ids) == 5 and all(len(r) == 48 for r in rows)

    check = ls.mc_cv_check(ls.DeviationModel.uncorrelated(0.2), 10, trials=100, days=3)
    assert check["holds"], check

    cfg = ls.default_config(7)
    cfg = cfg.replace("customers = 2000", "customers = 20").replace("days = 60", "days = 10")
    cfg = cfg.replace("sizes = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000]", "sizes = [1, 2, 5, 10, 20]")
    cfg = cfg.replace("window = 672", "window = 96").replace("bootstrap = 1000", "bootstrap = 100")
    with tempfile.TemporaryDirectory() as out:
        fits = ls.run(cfg, out)
    assert len(fits) == 4 and all(f["sqrt_alpha0"] > 0 for f in fits), fits

    print("smoke test ok")


if __name__ == "__main__":
    main()
