"""Optimizer steps against dense oracles, and the training-loop contract."""
import json
import math

import numpy as np
import pytest

import oracles
import natgrad as ng
from natgrad import (
    ConvergenceTrace,
    DivergenceError,
    NetworkParams,
    OptimizerConfig,
    RankDeficiencyError,
    cg_solve,
    forward,
    gd_step,
    init_network,
    jacobian,
    kfac_step,
    logcosh_loss,
    ngd_cg_step,
    ngd_exact_step,
    ngd_general_loss_step,
    squared_loss,
    synth_sphere,
    train,
)

TRACE_HEADER = (
    "k,residual_norm,loss,weight_drift,per_unit_max_drift,"
    "predicted_bound,lambda_min_G,jacobian_drift"
)


def no_flip_instance(m=64, seed=0):
    """Network whose activation pattern cannot change under moderate steps:
    every unit's pre-activation sits far from zero on both inputs, so the
    model is exactly linear in w near the current weights."""
    X = np.array([[1.0, 0.0], [0.8, 0.6]])
    rng = np.random.default_rng(seed)
    w = np.tile([10.0, 0.0], (m, 1)) + 0.01 * rng.standard_normal((m, 2))
    a = rng.choice([-1.0, 1.0], size=m)
    p = NetworkParams(w=w, a=a, nu=1.0, w0=w.copy())
    u0 = forward(p, X)
    ds = ng.Dataset(X, u0 + np.array([0.5, -0.5]))
    return p, ds


# ---------------------------------------------------------------------------
# losses and configuration


def test_squared_loss_spec():
    loss = squared_loss()
    r = np.array([0.0, 2.0, -3.0])
    assert np.array_equal(loss.grad(r, np.zeros(3)), r)
    assert np.array_equal(loss.value(r, np.zeros(3)), 0.5 * r**2)
    assert loss.mu == loss.L == 1.0
    assert loss.kappa == 1.0


def test_logcosh_loss_spec():
    loss = logcosh_loss()
    assert (loss.mu, loss.L, loss.kappa) == (0.5, 1.5, 3.0)
    r = np.linspace(-3, 3, 7)
    y = np.zeros(7)
    assert np.allclose(loss.grad(r, y), 0.5 * r + np.tanh(r))
    assert np.allclose(loss.value(r, y), 0.25 * r**2 + np.log(np.cosh(r)))


def test_logcosh_loss_overflow_safe():
    loss = logcosh_loss()
    u = np.array([800.0])
    y = np.zeros(1)
    v = loss.value(u, y)
    assert np.isfinite(v[0])
    # log cosh r ~ r - log 2 for large r
    assert v[0] == pytest.approx(0.25 * 800.0**2 + 800.0 - math.log(2.0))
    assert loss.grad(u, y)[0] == pytest.approx(401.0)


def test_loss_constant_validation():
    with pytest.raises(ValueError, match="mu"):
        logcosh_loss(mu=0.0)
    with pytest.raises(ValueError, match="0 < mu <= L"):
        ng.LossSpec(kind="bad", mu=2.0, L=1.0, grad=lambda u, y: u - y)


def test_optimizer_config_validation():
    with pytest.raises(ValueError, match="unknown method"):
        OptimizerConfig(method="adam")
    with pytest.raises(ValueError, match="eta"):
        OptimizerConfig(eta=-0.1)
    with pytest.raises(ValueError, match="eta"):
        OptimizerConfig(eta=float("nan"))
    with pytest.raises(ValueError, match="damping"):
        OptimizerConfig(damping=-1.0)
    with pytest.raises(ValueError, match="cg_iters"):
        OptimizerConfig(cg_iters=0)
    with pytest.raises(ValueError, match="cg_tol"):
        OptimizerConfig(cg_tol=0.0)
    with pytest.raises(ValueError, match="max_steps"):
        OptimizerConfig(max_steps=0)
    for method in ("gd", "kfac"):
        with pytest.raises(ValueError, match="squared loss"):
            OptimizerConfig(method=method, loss=logcosh_loss())


def test_optimizer_config_defaults():
    cfg = OptimizerConfig()
    assert cfg.method == "ngd_exact"
    assert cfg.eta == 0.5
    assert cfg.damping is None
    assert cfg.loss.kind == "squared"


# ---------------------------------------------------------------------------
# conjugate gradients


def test_cg_matches_direct_solve():
    rng = np.random.default_rng(0)
    R = rng.standard_normal((8, 8))
    A = R @ R.T + 0.5 * np.eye(8)
    b = rng.standard_normal(8)
    x, iters, converged = cg_solve(A, b, max_iters=200, tol=1e-12)
    assert converged
    assert iters <= 8 + 3  # exact in n steps up to roundoff
    assert np.allclose(x, np.linalg.solve(A, b), atol=1e-9)


def test_cg_zero_rhs():
    x, iters, converged = cg_solve(np.eye(4), np.zeros(4))
    assert converged and iters == 0
    assert np.array_equal(x, np.zeros(4))


def test_cg_budget_exhaustion():
    rng = np.random.default_rng(1)
    R = rng.standard_normal((12, 12))
    A = R @ R.T + 1e-6 * np.eye(12)
    b = rng.standard_normal(12)
    x, iters, converged = cg_solve(A, b, max_iters=2, tol=1e-14)
    assert not converged
    assert iters == 2


# ---------------------------------------------------------------------------
# single steps against dense oracles


def test_gd_step_formula():
    ds = synth_sphere(6, 4, seed=0)
    p = init_network(10, 4, nu=1.0, seed=1)
    stepped = gd_step(p, ds, eta=0.3)
    J = oracles.dense_jacobian_loops(p.w, p.a, ds.X)
    u = oracles.relu_forward_loops(p.w, p.a, ds.X)
    expected = p.w.ravel() - (0.3 / ds.n) * (J.T @ (u - ds.y))
    assert np.allclose(stepped.w.ravel(), expected, atol=1e-14)


def test_ngd_exact_step_matches_pinv_oracle():
    ds = synth_sphere(6, 4, seed=2)
    p = init_network(32, 4, nu=1.0, seed=3)
    stepped = ngd_exact_step(p, ds, eta=0.7, damping=0.0)
    expected = oracles.ngd_step_dense(p.w, p.a, ds.X, ds.y, eta=0.7)
    scale = np.linalg.norm(expected)
    assert np.linalg.norm(stepped.w - expected) <= 1e-10 * scale


def test_ngd_exact_step_with_damping():
    ds = synth_sphere(6, 4, seed=2)
    p = init_network(32, 4, nu=1.0, seed=3)
    stepped = ngd_exact_step(p, ds, eta=0.7, damping=0.5)
    J = oracles.dense_jacobian_loops(p.w, p.a, ds.X)
    u = oracles.relu_forward_loops(p.w, p.a, ds.X)
    z = np.linalg.solve(J @ J.T + 0.5 * np.eye(ds.n), u - ds.y)
    expected = p.w.ravel() - 0.7 * (J.T @ z)
    assert np.allclose(stepped.w.ravel(), expected, atol=1e-12)


def test_general_loss_step_reduces_to_squared():
    ds = synth_sphere(6, 4, seed=4)
    p = init_network(16, 4, nu=1.0, seed=5)
    a = ngd_exact_step(p, ds, eta=0.5, damping=0.0)
    b = ngd_general_loss_step(p, ds, eta=0.5, loss=squared_loss(), damping=0.0)
    assert np.array_equal(a.w, b.w)


def test_ngd_cg_step_matches_exact_step():
    ds = synth_sphere(8, 4, seed=6)
    p = init_network(24, 4, nu=1.0, seed=7)
    exact = ngd_exact_step(p, ds, eta=0.5, damping=1e-3)
    viacg = ngd_cg_step(p, ds, eta=0.5, damping=1e-3, cg_iters=200, cg_tol=1e-14)
    assert np.allclose(viacg.w, exact.w, atol=1e-10)


def test_kfac_step_matches_kron_oracle():
    for seed in range(3):
        ds = synth_sphere(5, 3, seed=seed)
        p = init_network(8, 3, nu=1.0, seed=10 + seed)
        stepped = kfac_step(p, ds, eta=0.4, damping=0.0)
        expected = oracles.kfac_step_kron(p.w, p.a, ds.X, ds.y, eta=0.4)
        scale = max(np.linalg.norm(expected), 1.0)
        assert np.linalg.norm(stepped.w - expected) <= 1e-10 * scale


def test_kfac_rejects_rank_deficient_inputs():
    rng = np.random.default_rng(0)
    X = np.zeros((5, 3))
    two_d = rng.standard_normal((5, 2))
    X[:, :2] = two_d / np.linalg.norm(two_d, axis=1, keepdims=True)
    ds = ng.Dataset(X, np.ones(5))
    p = init_network(8, 3, nu=1.0, seed=0)
    with pytest.raises(RankDeficiencyError, match="rank"):
        kfac_step(p, ds, eta=0.1)


def test_exact_interpolation_without_pattern_flips():
    # inside a fixed activation pattern the model is linear, so one exact
    # natural-gradient step at eta = 1 lands on the targets
    p, ds = no_flip_instance()
    stepped = ngd_exact_step(p, ds, eta=1.0, damping=0.0)
    pattern_before = (ds.X @ p.w.T >= 0).astype(float)
    pattern_after = (ds.X @ stepped.w.T >= 0).astype(float)
    assert np.array_equal(pattern_before, pattern_after)
    u = forward(stepped, ds.X)
    assert np.linalg.norm(u - ds.y) <= 1e-10


def test_forward_is_linear_within_pattern():
    p, ds = no_flip_instance()
    jv = jacobian(p, ds.X)
    rng = np.random.default_rng(3)
    V = 0.01 * rng.standard_normal((p.m, p.d))
    lhs = forward(p.with_weights(p.w + V), ds.X)
    rhs = forward(p, ds.X) + jv.apply_weights(V)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


# ---------------------------------------------------------------------------
# training loop


def test_train_produces_contracting_trace():
    ds = synth_sphere(10, 5, seed=0)
    p = init_network(512, 5, nu=1.0, seed=1)
    cfg = OptimizerConfig(method="ngd_exact", eta=0.5, damping=0.0, max_steps=15)
    trace = train(p, ds, cfg)
    assert trace.method == "ngd_exact"
    assert len(trace.records) == 15
    res = [trace.initial_residual_norm] + [r.residual_norm for r in trace.records]
    assert all(b < a for a, b in zip(res, res[1:]))
    # squared-residual bound with factor 1 - eta
    for rec in trace.records:
        assert rec.predicted_bound == pytest.approx(
            0.5**rec.k * trace.initial_residual_norm**2
        )
    assert trace.final_residual_norm == trace.records[-1].residual_norm


def test_train_validates_dataset():
    ds = synth_sphere(6, 3, seed=0)
    bad = ng.Dataset(2.0 * ds.X, ds.y)
    p = init_network(8, 3, nu=1.0, seed=0)
    with pytest.raises(ValueError, match="failed validation"):
        train(p, bad, OptimizerConfig(max_steps=1))


def test_train_zero_step_size_is_stationary():
    ds = synth_sphere(6, 3, seed=1)
    p = init_network(8, 3, nu=1.0, seed=2)
    trace = train(p, ds, OptimizerConfig(eta=0.0, damping=0.0, max_steps=4))
    for rec in trace.records:
        assert rec.residual_norm == pytest.approx(trace.initial_residual_norm)
        assert rec.weight_drift == 0.0


def test_train_early_stop_on_interpolation():
    p, ds = no_flip_instance()
    cfg = OptimizerConfig(method="ngd_exact", eta=1.0, damping=0.0, max_steps=10)
    trace = train(p, ds, cfg)
    assert len(trace.records) == 1
    assert trace.records[0].residual_norm <= 1e-12


def test_train_divergence_detection():
    ds = synth_sphere(6, 3, seed=3)
    p = init_network(8, 3, nu=1.0, seed=4)
    cfg = OptimizerConfig(method="gd", eta=1e200, max_steps=5)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(DivergenceError) as err:
        train(p, ds, cfg)
    assert err.value.step is not None


def test_train_gd_has_no_predicted_bound():
    ds = synth_sphere(6, 3, seed=5)
    p = init_network(32, 3, nu=1.0, seed=6)
    trace = train(p, ds, OptimizerConfig(method="gd", eta=0.5, max_steps=3))
    assert all(math.isnan(rec.predicted_bound) for rec in trace.records)


def test_train_general_loss_uses_widened_factor():
    ds = synth_sphere(8, 4, seed=7)
    p = init_network(256, 4, nu=1.0, seed=8)
    cfg = OptimizerConfig(
        method="ngd_exact", eta=0.5, damping=0.0, max_steps=6, loss=logcosh_loss()
    )
    trace = train(p, ds, cfg)
    factor = 1.0 - 2.0 * 0.5 * 0.5 * 1.5 / 2.0  # 1 - 2 eta mu L / (mu + L)
    assert trace.records[0].predicted_bound == pytest.approx(
        factor * trace.initial_residual_norm**2
    )
    res = [trace.initial_residual_norm] + [r.residual_norm for r in trace.records]
    assert res[-1] < res[0]


def test_train_cg_marks_stagnation():
    ds = synth_sphere(16, 8, seed=9)
    p = init_network(64, 8, nu=1.0, seed=10)
    cfg = OptimizerConfig(method="ngd_cg", eta=0.5, cg_iters=1, max_steps=2)
    trace = train(p, ds, cfg)
    assert all(rec.cg_stagnated is True for rec in trace.records)
    healthy = train(
        p, ds, OptimizerConfig(method="ngd_cg", eta=0.5, cg_iters=400, max_steps=2)
    )
    assert all(rec.cg_stagnated is False for rec in healthy.records)


def test_train_cg_agrees_with_exact_solve():
    ds = synth_sphere(10, 5, seed=11)
    p = init_network(128, 5, nu=1.0, seed=12)
    kw = dict(eta=0.5, damping=1e-6, max_steps=5)
    exact = train(p, ds, OptimizerConfig(method="ngd_exact", **kw))
    viacg = train(p, ds, OptimizerConfig(method="ngd_cg", cg_iters=500, cg_tol=1e-13, **kw))
    for a, b in zip(exact.records, viacg.records):
        assert a.residual_norm == pytest.approx(b.residual_norm, abs=1e-8)


def test_train_tracked_diagnostics():
    ds = synth_sphere(8, 4, seed=13)
    p = init_network(256, 4, nu=1.0, seed=14)
    cfg = OptimizerConfig(
        eta=0.5, damping=0.0, max_steps=3,
        track_lambda_min=True, track_jacobian_drift=True,
    )
    trace = train(p, ds, cfg)
    for rec in trace.records:
        assert rec.lambda_min_G > 0
        assert rec.jacobian_drift >= 0.0
    plain = train(p, ds, OptimizerConfig(eta=0.5, damping=0.0, max_steps=3))
    assert all(rec.lambda_min_G is None for rec in plain.records)
    assert all(rec.jacobian_drift is None for rec in plain.records)


def test_steps_to_threshold():
    ds = synth_sphere(8, 4, seed=15)
    p = init_network(512, 4, nu=1.0, seed=16)
    trace = train(p, ds, OptimizerConfig(eta=0.5, damping=0.0, max_steps=20))
    k = trace.steps_to_threshold(1e-2)
    assert k is not None
    assert trace.records[k - 1].residual_norm <= 1e-2
    if k > 1:
        assert trace.records[k - 2].residual_norm > 1e-2
    assert trace.steps_to_threshold(0.0) is None


# ---------------------------------------------------------------------------
# trace serialization


def test_trace_csv_layout(tmp_path):
    ds = synth_sphere(6, 3, seed=17)
    p = init_network(64, 3, nu=1.0, seed=18)
    trace = train(p, ds, OptimizerConfig(eta=0.5, damping=0.0, max_steps=4))
    text = trace.csv_text()
    lines = text.strip().split("\n")
    assert lines[0] == TRACE_HEADER
    assert len(lines) == 1 + 4
    for k, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        assert len(cells) == 8
        assert cells[0] == str(k)
        # repr round-trips exactly
        assert float(cells[1]) == trace.records[k - 1].residual_norm
        assert cells[6] == "" and cells[7] == ""  # diagnostics not tracked
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    assert path.read_text() == text


def test_trace_csv_blank_cells_for_gd_bound():
    ds = synth_sphere(6, 3, seed=19)
    p = init_network(32, 3, nu=1.0, seed=20)
    trace = train(p, ds, OptimizerConfig(method="gd", eta=0.5, max_steps=2))
    for line in trace.csv_text().strip().split("\n")[1:]:
        assert line.split(",")[5] == ""


def test_trace_json_round_trip(tmp_path):
    ds = synth_sphere(6, 3, seed=21)
    p = init_network(32, 3, nu=1.0, seed=22)
    cfg = OptimizerConfig(method="ngd_cg", eta=0.25, cg_iters=50, max_steps=3)
    trace = train(p, ds, cfg)
    path = tmp_path / "trace.json"
    trace.to_json(path)
    doc = json.loads(path.read_text())
    assert doc["method"] == "ngd_cg"
    assert doc["eta"] == 0.25
    assert doc["steps"] == 3
    assert len(doc["records"]) == 3
    assert doc["records"][0]["residual_norm"] == trace.records[0].residual_norm
    assert all(rec["cg_stagnated"] in (True, False) for rec in doc["records"])
    gd = train(p, ds, OptimizerConfig(method="gd", eta=0.5, max_steps=2))
    assert gd.json_dict()["records"][0]["predicted_bound"] is None  # NaN maps to null


def test_trace_deterministic():
    ds = synth_sphere(6, 3, seed=23)
    p = init_network(32, 3, nu=1.0, seed=24)
    cfg = OptimizerConfig(eta=0.5, damping=0.0, max_steps=5)
    assert train(p, ds, cfg).csv_text() == train(p, ds, cfg).csv_text()


def test_empty_trace_final_residual():
    trace = ConvergenceTrace(
        method="gd", eta=0.1, initial_residual_norm=2.5,
        records=(), final_params=init_network(2, 2, 1.0, seed=0),
    )
    assert trace.final_residual_norm == 2.5
    assert trace.csv_text().strip() == TRACE_HEADER
