import time

import numpy as np
import pytest

import natgrad as ng

# filled by tests/test_acceptance.py: number -> (name, passed)
ACCEPTANCE_RESULTS = {}


def record_criterion(num, name, ok):
    ACCEPTANCE_RESULTS[num] = (name, bool(ok))
    print(f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'} {name}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        name, ok = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(
            f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'} {name}"
        )

# Shared protocol for the wide-regime rate and drift checks: n=16, d=8,
# m=4096, nu=1, eta=0.5, squared loss, exact solves, 10 paired seeds.
WIDE = {
    "n": 16,
    "d": 8,
    "m": 4096,
    "nu": 1.0,
    "eta": 0.5,
    "seeds": tuple(range(10)),
    "rate_floor": 1e-10,
}


@pytest.fixture(scope="session")
def wide_runs():
    """Ten wide NGD runs, executed once and shared by the rate and drift
    acceptance checks.  For each seed: the trace, the initial residual,
    and lambda_min of the initial Gram."""
    t0 = time.perf_counter()
    cfg = ng.OptimizerConfig(
        method="ngd_exact",
        eta=WIDE["eta"],
        damping=0.0,
        max_steps=40,
    )
    runs = []
    for seed in WIDE["seeds"]:
        ds = ng.synth_sphere(WIDE["n"], WIDE["d"], seed=1000 + seed)
        params = ng.init_network(WIDE["m"], WIDE["d"], WIDE["nu"], seed=seed)
        lam0 = ng.min_eig(ng.finite_gram(ng.jacobian(params, ds.X)))
        trace = ng.train(params, ds, cfg)
        runs.append({"seed": seed, "ds": ds, "lambda0": lam0, "trace": trace})
    elapsed = time.perf_counter() - t0
    return {"runs": runs, "elapsed": elapsed, **WIDE}


def unit_rows(n, d, rng):
    X = rng.standard_normal((n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)
