"""Optimizers for the two-layer ReLU model and the training loop around them.

Four update rules on the hidden-layer weights, all acting on the residual
rho = u - y (or a general output-space loss gradient g(u)):

    gd:         w <- w - (eta / n) J^T rho
    ngd_exact:  w <- w - eta J^T (J J^T + damping I)^{-1} rho
    ngd_cg:     same system, solved by conjugate gradients
    kfac:       W <- W - eta S~^T (S~ S~^T + damping I)^{-1} diag(rho) X (X^T X)^{-1}

The natural-gradient solve goes through the n x n output Gram J J^T rather
than the p x p parameter matrix, so its cost is governed by the sample
count, not the parameter count.  K-FAC replaces the Gram inverse with a
Kronecker factorization: a unit-side factor S~ S~^T and an input-side
factor X^T X, each inverted separately.  With damping = 0 the unit-side
factor is applied through its Moore-Penrose pseudoinverse.

train() drives any of these for a fixed number of steps and records a
ConvergenceTrace: per-step residual norm, loss, weight drift from
initialization, and the predicted geometric bound on the squared residual.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import network
from .data import Dataset, validate
from .errors import DivergenceError, RankDeficiencyError, SingularMatrixError
from .network import NetworkParams

METHODS = ("gd", "ngd_exact", "ngd_cg", "kfac")

PD_FLOOR = 1e-12
EARLY_STOP_RESIDUAL = 1e-12
AUTO_DAMPING_SCALE = 1e-8

TRACE_COLUMNS = (
    "k",
    "residual_norm",
    "loss",
    "weight_drift",
    "per_unit_max_drift",
    "predicted_bound",
    "lambda_min_G",
    "jacobian_drift",
)


# ---------------------------------------------------------------------------
# losses


@dataclass(frozen=True)
class LossSpec:
    """Output-space loss, summed over examples as sum_i l(u_i, y_i).

    mu and L are the strong-convexity and gradient-Lipschitz constants of
    the scalar l; grad maps (u, y) to the elementwise derivative in u.
    """

    kind: str
    mu: float
    L: float
    grad: Callable[[np.ndarray, np.ndarray], np.ndarray]
    value: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not (0 < self.mu <= self.L):
            raise ValueError(f"need 0 < mu <= L, got mu={self.mu}, L={self.L}")

    @property
    def kappa(self) -> float:
        return self.L / self.mu


def squared_loss() -> LossSpec:
    """l(u, y) = (u - y)^2 / 2, with mu = L = 1."""
    return LossSpec(
        kind="squared",
        mu=1.0,
        L=1.0,
        grad=lambda u, y: u - y,
        value=lambda u, y: 0.5 * (u - y) ** 2,
    )


def logcosh_loss(mu: float = 0.5) -> LossSpec:
    """l(u, y) = (mu/2)(u - y)^2 + log cosh(u - y).

    Strongly convex with parameter mu and (mu + 1)-Lipschitz gradient,
    since the log cosh term contributes tanh(u - y) with slope in [0, 1].
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")

    def grad(u, y):
        r = u - y
        return mu * r + np.tanh(r)

    def value(u, y):
        r = u - y
        # log cosh r = logaddexp(r, -r) - log 2, overflow-safe
        return 0.5 * mu * r**2 + np.logaddexp(r, -r) - math.log(2.0)

    return LossSpec(kind="strongly_convex_smooth", mu=mu, L=mu + 1.0, grad=grad, value=value)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "ngd_exact"
    eta: float = 0.5
    damping: float | None = None
    cg_iters: int = 100
    cg_tol: float = 1e-10
    max_steps: int = 100
    loss: LossSpec = field(default_factory=squared_loss)
    track_lambda_min: bool = False
    track_jacobian_drift: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if not (np.isfinite(self.eta) and self.eta >= 0):
            raise ValueError(f"eta must be finite and >= 0, got {self.eta}")
        if self.damping is not None and not (np.isfinite(self.damping) and self.damping >= 0):
            raise ValueError(f"damping must be None or >= 0, got {self.damping}")
        if self.cg_iters < 1:
            raise ValueError(f"cg_iters must be >= 1, got {self.cg_iters}")
        if self.cg_tol <= 0:
            raise ValueError(f"cg_tol must be positive, got {self.cg_tol}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.method in ("gd", "kfac") and self.loss.kind != "squared":
            raise ValueError(f"method {self.method!r} supports only the squared loss")


# ---------------------------------------------------------------------------
# linear-algebra helpers


def _auto_damping(G: np.ndarray) -> float:
    return AUTO_DAMPING_SCALE * float(np.trace(G)) / G.shape[0]


def _solve_gram(G: np.ndarray, rhs: np.ndarray, damping: float | None) -> np.ndarray:
    """Solve (G + damping I) z = rhs with a positive-definiteness guard.

    damping = None picks a relative default, 1e-8 tr(G)/n.  Raises
    SingularMatrixError when the damped matrix is not safely positive
    definite.
    """
    if damping is None:
        damping = _auto_damping(G)
    lam_min = float(np.linalg.eigvalsh(G)[0])
    if lam_min + damping <= PD_FLOOR:
        raise SingularMatrixError(
            f"output Gram is numerically singular: lambda_min + damping = "
            f"{lam_min + damping:.3e} <= {PD_FLOOR:.0e}"
        )
    if damping > 0:
        G = G + damping * np.eye(G.shape[0])
    return np.linalg.solve(G, rhs)


def cg_solve(
    A: np.ndarray, b: np.ndarray, max_iters: int = 100, tol: float = 1e-10
) -> tuple[np.ndarray, int, bool]:
    """Conjugate gradients for A x = b, A symmetric positive definite.

    Starts from x = 0 and stops when ||r|| <= tol ||b||.  Returns
    (x, iterations, converged); a breakdown (nonpositive curvature from
    roundoff on a near-singular system) returns the current iterate with
    converged = False.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x, 0, True
    p = r.copy()
    rs = float(r @ r)
    for it in range(1, max_iters + 1):
        Ap = A @ p
        curv = float(p @ Ap)
        if curv <= 0.0:
            return x, it - 1, False
        alpha = rs / curv
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = float(r @ r)
        if math.sqrt(rs_new) <= tol * bnorm:
            return x, it, True
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, max_iters, False


# ---------------------------------------------------------------------------
# single steps (pure: each returns a new NetworkParams)


def gd_step(p: NetworkParams, ds: Dataset, eta: float) -> NetworkParams:
    """Plain gradient descent on the mean squared loss: w -= (eta/n) J^T rho."""
    u = network.forward(p, ds.X)
    jv = network.jacobian(p, ds.X)
    w_new = p.w - (eta / ds.n) * jv.grad_matrix(u - ds.y)
    return p.with_weights(w_new)


def ngd_exact_step(
    p: NetworkParams, ds: Dataset, eta: float, damping: float | None = None
) -> NetworkParams:
    """Natural-gradient step through a direct solve of the n x n Gram."""
    u = network.forward(p, ds.X)
    jv = network.jacobian(p, ds.X)
    G = (ds.X @ ds.X.T) * (jv.Stilde @ jv.Stilde.T)
    z = _solve_gram(G, u - ds.y, damping)
    return p.with_weights(p.w - eta * jv.grad_matrix(z))


def ngd_general_loss_step(
    p: NetworkParams,
    ds: Dataset,
    eta: float,
    loss: LossSpec,
    damping: float | None = None,
) -> NetworkParams:
    """Natural-gradient step for a general output-space loss: the solve is
    against the loss gradient g(u) instead of the residual."""
    u = network.forward(p, ds.X)
    jv = network.jacobian(p, ds.X)
    G = (ds.X @ ds.X.T) * (jv.Stilde @ jv.Stilde.T)
    z = _solve_gram(G, loss.grad(u, ds.y), damping)
    return p.with_weights(p.w - eta * jv.grad_matrix(z))


def _ngd_cg_step(
    p: NetworkParams,
    ds: Dataset,
    eta: float,
    loss: LossSpec,
    damping: float | None,
    cg_iters: int,
    cg_tol: float,
) -> tuple[NetworkParams, bool]:
    u = network.forward(p, ds.X)
    jv = network.jacobian(p, ds.X)
    G = (ds.X @ ds.X.T) * (jv.Stilde @ jv.Stilde.T)
    if damping is None:
        damping = _auto_damping(G)
    if damping > 0:
        G = G + damping * np.eye(ds.n)
    z, _, converged = cg_solve(G, loss.grad(u, ds.y), cg_iters, cg_tol)
    return p.with_weights(p.w - eta * jv.grad_matrix(z)), converged


def ngd_cg_step(
    p: NetworkParams,
    ds: Dataset,
    eta: float,
    damping: float | None = None,
    cg_iters: int = 100,
    cg_tol: float = 1e-10,
) -> NetworkParams:
    """Natural-gradient step with the Gram system solved by CG.

    No eigenvalue precheck is done; an ill-conditioned system shows up as
    CG stagnation, which train() records rather than raising.
    """
    new_p, _ = _ngd_cg_step(p, ds, eta, squared_loss(), damping, cg_iters, cg_tol)
    return new_p


def kfac_step(
    p: NetworkParams, ds: Dataset, eta: float, damping: float | None = None
) -> NetworkParams:
    """Kronecker-factored step.

    W <- W - eta S~^T (S~ S~^T + damping I)^{-1} diag(u - y) X (X^T X)^{-1}

    The input factor X^T X must be invertible (rank-d inputs); the unit
    factor S~ S~^T is pseudoinverted when damping = 0, so a rank-deficient
    activation pattern is handled in the least-squares sense.
    """
    XtX = ds.X.T @ ds.X
    if float(np.linalg.eigvalsh(XtX)[0]) <= PD_FLOOR:
        raise RankDeficiencyError(
            "input factor X^T X is rank deficient; K-FAC needs rank-d inputs"
        )
    u = network.forward(p, ds.X)
    ap = network.activation_pattern(p, ds.X)
    St = ap.Stilde
    A = St @ St.T
    scaled = (u - ds.y)[:, None] * ds.X  # diag(rho) X, n x d
    if damping is None:
        damping = _auto_damping(A)
    if damping == 0.0:
        middle = np.linalg.pinv(A, hermitian=True) @ scaled
    else:
        lam_min = float(np.linalg.eigvalsh(A)[0])
        if lam_min + damping <= PD_FLOOR:
            raise SingularMatrixError(
                f"unit factor is numerically singular: lambda_min + damping = "
                f"{lam_min + damping:.3e} <= {PD_FLOOR:.0e}"
            )
        middle = np.linalg.solve(A + damping * np.eye(ds.n), scaled)
    update = np.linalg.solve(XtX, (St.T @ middle).T).T  # S~^T middle (X^T X)^{-1}
    return p.with_weights(p.w - eta * update)


# ---------------------------------------------------------------------------
# training loop and trace


@dataclass(frozen=True)
class StepRecord:
    """State after step k (1-based)."""

    k: int
    residual_norm: float
    loss: float
    weight_drift: float
    per_unit_max_drift: float
    predicted_bound: float
    lambda_min_G: float | None = None
    jacobian_drift: float | None = None
    cg_stagnated: bool | None = None


def _cell(v) -> str:
    if v is None:
        return ""
    f = float(v)
    if math.isnan(f):
        return ""
    return repr(f)


def _jsonable(v):
    if v is None or isinstance(v, (bool, int, str)):
        return v
    f = float(v)
    return None if math.isnan(f) else f


@dataclass(frozen=True)
class ConvergenceTrace:
    """Per-step training record plus the final parameters.

    Rows are the states after steps 1..K; the state before the first step
    is summarized by initial_residual_norm.
    """

    method: str
    eta: float
    initial_residual_norm: float
    records: tuple[StepRecord, ...]
    final_params: NetworkParams

    @property
    def final_residual_norm(self) -> float:
        if self.records:
            return self.records[-1].residual_norm
        return self.initial_residual_norm

    def steps_to_threshold(self, threshold: float) -> int | None:
        """First step index k with ||u(k) - y|| <= threshold, or None."""
        for rec in self.records:
            if rec.residual_norm <= threshold:
                return rec.k
        return None

    def csv_text(self) -> str:
        lines = [",".join(TRACE_COLUMNS)]
        for rec in self.records:
            row = [str(rec.k)]
            row += [
                _cell(getattr(rec, name))
                for name in TRACE_COLUMNS[1:]
            ]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.csv_text())

    def json_dict(self) -> dict:
        return {
            "method": self.method,
            "eta": self.eta,
            "initial_residual_norm": self.initial_residual_norm,
            "final_residual_norm": _jsonable(self.final_residual_norm),
            "steps": len(self.records),
            "records": [
                {
                    "k": rec.k,
                    "residual_norm": _jsonable(rec.residual_norm),
                    "loss": _jsonable(rec.loss),
                    "weight_drift": _jsonable(rec.weight_drift),
                    "per_unit_max_drift": _jsonable(rec.per_unit_max_drift),
                    "predicted_bound": _jsonable(rec.predicted_bound),
                    "lambda_min_G": _jsonable(rec.lambda_min_G),
                    "jacobian_drift": _jsonable(rec.jacobian_drift),
                    "cg_stagnated": rec.cg_stagnated,
                }
                for rec in self.records
            ],
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _spectral_jacobian_drift(
    X: np.ndarray, Stilde: np.ndarray, Stilde0: np.ndarray
) -> float:
    """||J - J0||_2 through n x n products only.

    (J - J0)(J - J0)^T = G + G0 - C - C^T with C = (X X^T) o (S~ S~0^T),
    so the spectral norm is the square root of the top eigenvalue.
    """
    XXt = X @ X.T
    G = XXt * (Stilde @ Stilde.T)
    G0 = XXt * (Stilde0 @ Stilde0.T)
    C = XXt * (Stilde @ Stilde0.T)
    top = float(np.linalg.eigvalsh(G + G0 - C - C.T)[-1])
    return math.sqrt(max(top, 0.0))


def _predicted_factor(cfg: OptimizerConfig, ds: Dataset) -> float:
    # imported here: theory depends on network/gram, not on this module,
    # but keeping the import local makes the layering obvious
    from .theory import rate_predictor

    if cfg.method == "gd":
        return math.nan
    if cfg.method == "kfac":
        return rate_predictor("kfac", cfg.eta, ds=ds)
    if cfg.loss.kind == "squared":
        return rate_predictor("ngd", cfg.eta)
    return rate_predictor("general", cfg.eta, mu=cfg.loss.mu, L=cfg.loss.L)


def train(p: NetworkParams, ds: Dataset, cfg: OptimizerConfig) -> ConvergenceTrace:
    """Run cfg.max_steps optimizer steps and record the trajectory.

    The dataset must pass validate() (unit-norm rows, no coincident
    points).  Stops early once the residual norm falls to 1e-12; raises
    DivergenceError if outputs or weights stop being finite.
    """
    report = validate(ds)
    if not report.passed:
        raise ValueError(
            "dataset failed validation: "
            f"max norm deviation {report.max_norm_deviation:.3e}, "
            f"min pairwise angle gap {report.min_pairwise_angle_gap:.3e}"
        )

    u0 = network.forward(p, ds.X)
    r0 = float(np.linalg.norm(u0 - ds.y))
    factor = _predicted_factor(cfg, ds)
    stilde0 = None
    if cfg.track_jacobian_drift:
        # pattern of the stored initialization, not of the incoming weights
        s0 = (ds.X @ p.w0.T >= 0.0).astype(float)
        stilde0 = s0 * (p.a / math.sqrt(p.m))

    records: list[StepRecord] = []
    current = p
    for k in range(1, cfg.max_steps + 1):
        stagnated: bool | None = None
        if cfg.method == "gd":
            current = gd_step(current, ds, cfg.eta)
        elif cfg.method == "kfac":
            current = kfac_step(current, ds, cfg.eta, cfg.damping)
        elif cfg.method == "ngd_exact":
            if cfg.loss.kind == "squared":
                current = ngd_exact_step(current, ds, cfg.eta, cfg.damping)
            else:
                current = ngd_general_loss_step(current, ds, cfg.eta, cfg.loss, cfg.damping)
        else:  # ngd_cg
            current, converged = _ngd_cg_step(
                current, ds, cfg.eta, cfg.loss, cfg.damping, cfg.cg_iters, cfg.cg_tol
            )
            stagnated = not converged

        u = network.forward(current, ds.X)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(current.w))):
            raise DivergenceError(
                f"training diverged at step {k}: non-finite outputs or weights", step=k
            )

        diff = current.w - current.w0
        lam_min = None
        jac_drift = None
        if cfg.track_lambda_min or cfg.track_jacobian_drift:
            ap = network.activation_pattern(current, ds.X)
            if cfg.track_lambda_min:
                G = (ds.X @ ds.X.T) * (ap.Stilde @ ap.Stilde.T)
                lam_min = float(np.linalg.eigvalsh(G)[0])
            if cfg.track_jacobian_drift:
                jac_drift = _spectral_jacobian_drift(ds.X, ap.Stilde, stilde0)

        if cfg.loss.value is not None:
            loss_val = float(np.mean(cfg.loss.value(u, ds.y)))
        else:
            loss_val = math.nan
        bound = factor**k * r0**2 if not math.isnan(factor) else math.nan
        rec = StepRecord(
            k=k,
            residual_norm=float(np.linalg.norm(u - ds.y)),
            loss=loss_val,
            weight_drift=float(np.linalg.norm(diff)),
            per_unit_max_drift=float(np.max(np.linalg.norm(diff, axis=1))),
            predicted_bound=bound,
            lambda_min_G=lam_min,
            jacobian_drift=jac_drift,
            cg_stagnated=stagnated,
        )
        records.append(rec)
        if rec.residual_norm <= EARLY_STOP_RESIDUAL:
            break

    return ConvergenceTrace(
        method=cfg.method,
        eta=cfg.eta,
        initial_residual_norm=r0,
        records=tuple(records),
        final_params=current,
    )
