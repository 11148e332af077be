"""Convergence conditions, rate predictions, and sample-complexity bounds.

The geometric convergence of natural gradient descent on the ReLU model
rests on two conditions:

  1. the Gram matrix G(0) = J(0) J(0)^T at initialization is positive
     definite, with smallest eigenvalue lambda_0;
  2. the Jacobian moves little inside the optimization ball: writing
     C = 3 ||J - J(0)||_2 / sqrt(lambda_0), steps stay contractive as
     long as C < 1/2, with admissible step sizes up to
     (1 - 2C) / (1 + C)^2.

Under both, the squared residual decays at least as fast as (1 - eta)^k.
For a mu-strongly convex loss with L-Lipschitz gradient the factor
becomes 1 - 2 eta mu L / (mu + L) for eta <= 2 / (mu + L), and the weight
trajectory stays within a radius widened by (1 + kappa) / 2, kappa = L/mu.

Also here: the width requirement m = n^4 / (nu^2 lambda_0^4 delta^3) for
the conditions to hold with probability 1 - delta, a generalization bound
driven by the quadratic form y^T (G_inf)^{-1} y, and a Monte Carlo check
of a claimed lower bound lambda_0 >= n^beta / 2 on the limiting Gram's
smallest eigenvalue.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import gram, network
from .data import Dataset, synth_sphere
from .errors import SingularMatrixError
from .network import NetworkParams
from .optim import _spectral_jacobian_drift

PD_FLOOR = 1e-12


@dataclass(frozen=True)
class ConditionReport:
    """Evaluation of the convergence conditions at a pair of parameter
    states (initial and current)."""

    lambda_min_G0: float
    radius: float
    jacobian_drift: float
    C_estimate: float
    condition1_holds: bool
    condition2_holds: bool
    max_eta_ngd: float
    general_loss_radius: float
    kappa: float


def ngd_max_eta(C: float) -> float:
    """Largest admissible NGD step size (1 - 2C) / (1 + C)^2, or 0 when
    the drift constant C reaches 1/2."""
    if not (np.isfinite(C) and C >= 0):
        raise ValueError(f"C must be finite and >= 0, got {C}")
    if C >= 0.5:
        return 0.0
    return (1.0 - 2.0 * C) / (1.0 + C) ** 2


def check_conditions(
    p: NetworkParams,
    p_current: NetworkParams,
    ds: Dataset,
    kappa: float = 1.0,
) -> ConditionReport:
    """Check both convergence conditions for the pair (p, p_current).

    p plays the role of the initialization; p_current is any later state.
    A singular initial Gram does not raise: condition 1 is reported as
    failed and the quantities that divide by sqrt(lambda_0) come back NaN.
    """
    if p.m != p_current.m or p.d != p_current.d or not np.array_equal(p.a, p_current.a):
        raise ValueError("parameter states must share width, input dim, and output signs")
    if kappa < 1.0:
        raise ValueError(f"kappa = L/mu must be >= 1, got {kappa}")

    jv0 = network.jacobian(p, ds.X)
    G0 = gram.finite_gram(jv0)
    lam0 = gram.min_eig(G0)
    jvc = network.jacobian(p_current, ds.X)
    drift = _spectral_jacobian_drift(ds.X, jvc.Stilde, jv0.Stilde)

    if lam0 <= PD_FLOOR:
        return ConditionReport(
            lambda_min_G0=lam0,
            radius=math.nan,
            jacobian_drift=drift,
            C_estimate=math.nan,
            condition1_holds=False,
            condition2_holds=False,
            max_eta_ngd=math.nan,
            general_loss_radius=math.nan,
            kappa=kappa,
        )

    u0 = network.forward(p, ds.X)
    r0 = float(np.linalg.norm(ds.y - u0))
    sqrt_lam0 = math.sqrt(lam0)
    C = 3.0 * drift / sqrt_lam0
    radius = 3.0 * r0 / sqrt_lam0
    # condition 2 asks for both a small drift constant and the iterate
    # actually sitting inside the ball where that constant was measured
    in_ball = float(np.linalg.norm(p_current.w - p.w)) <= radius
    return ConditionReport(
        lambda_min_G0=lam0,
        radius=radius,
        jacobian_drift=drift,
        C_estimate=C,
        condition1_holds=True,
        condition2_holds=C < 0.5 and in_ball,
        max_eta_ngd=ngd_max_eta(C),
        general_loss_radius=3.0 * (1.0 + kappa) * r0 / (2.0 * sqrt_lam0),
        kappa=kappa,
    )


def rate_predictor(
    method: str,
    eta: float,
    ds: Dataset | None = None,
    *,
    mu: float | None = None,
    L: float | None = None,
    lambda_max_xtx: float | None = None,
) -> float:
    """Per-step factor for the predicted squared-residual bound, in [0, 1].

    ngd:      1 - eta                      (squared loss; admissible eta <= 1)
    general:  1 - 2 eta mu L / (mu + L)    (admissible eta <= 2 / (mu + L))
    kfac:     1 - eta / lambda_max(X^T X)  (admissible eta <= lambda_min(X^T X))

    Out-of-range step sizes get a warning, and the factor is clipped to
    [0, 1]; there is no geometric prediction for plain gradient descent.
    """
    if not (np.isfinite(eta) and eta >= 0):
        raise ValueError(f"eta must be finite and >= 0, got {eta}")
    if method == "ngd":
        if eta > 1.0:
            warnings.warn(f"eta = {eta} exceeds the admissible range (0, 1] for ngd")
        factor = 1.0 - eta
    elif method == "general":
        if mu is None or L is None:
            raise ValueError("general rate needs mu and L")
        if not (0 < mu <= L):
            raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
        if eta > 2.0 / (mu + L):
            warnings.warn(
                f"eta = {eta} exceeds the admissible bound 2/(mu+L) = {2.0 / (mu + L):.6g}"
            )
        factor = 1.0 - 2.0 * eta * mu * L / (mu + L)
    elif method == "kfac":
        if ds is not None:
            eigs = np.linalg.eigvalsh(ds.X.T @ ds.X)
            lam_max = float(eigs[-1])
            lam_min = float(eigs[0])
        elif lambda_max_xtx is not None:
            lam_max = float(lambda_max_xtx)
            lam_min = lam_max  # best available proxy for the warning check
        else:
            raise ValueError("kfac rate needs ds or lambda_max_xtx")
        if lam_max <= 0:
            raise ValueError(f"lambda_max(X^T X) must be positive, got {lam_max}")
        if eta > lam_min:
            warnings.warn(
                f"eta = {eta} exceeds lambda_min(X^T X) = {lam_min:.6g}; "
                "per-example factors may leave [0, 1)"
            )
        factor = 1.0 - eta / lam_max
    else:
        raise ValueError(f"no rate prediction for method {method!r}")
    return float(np.clip(factor, 0.0, 1.0))


def lambda0_floor_check(
    d: int, n: int, beta: float, trials: int = 20, seed: int = 0
) -> float:
    """Monte Carlo test of the floor lambda_min(G_inf) >= n^beta / 2.

    Draws `trials` datasets of n uniform points on the unit sphere in R^d
    and returns the fraction whose limiting Gram clears the floor.  Note
    the limiting Gram has every diagonal entry equal to 1/2, so
    lambda_min <= 1/2 always, while n^beta / 2 > 1/2 for every n >= 2 and
    beta > 0: the claimed floor is unsatisfiable and the returned
    fraction is 0.0 for all valid inputs.
    """
    if not (0 < beta < 1):
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    floor = n**beta / 2.0
    master = np.random.default_rng(seed)
    passed = 0
    for _ in range(trials):
        ds = synth_sphere(n, d, seed=int(master.integers(0, 2**31 - 1)))
        lam0 = gram.min_eig(gram.limiting_gram(ds))
        if lam0 >= floor:
            passed += 1
    return passed / trials


@dataclass(frozen=True)
class GenBoundReport:
    quad_term: float
    conf_term: float
    epsilon: float
    total: float
    delta: float


def generalization_bound(
    ds: Dataset, delta: float = 0.1, epsilon: float = 0.1
) -> GenBoundReport:
    """Population-loss bound sqrt(2 y^T (G_inf)^{-1} y / n)
    + 3 sqrt(log(6/delta) / (2n)) + epsilon.

    The quadratic term is the data-dependent complexity of interpolating
    y with the limiting kernel; the second is the usual confidence term.
    """
    if not (0 < delta < 1):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    Ginf = gram.limiting_gram(ds)
    if gram.min_eig(Ginf) <= PD_FLOOR:
        raise SingularMatrixError("limiting Gram is numerically singular")
    quad = math.sqrt(2.0 * float(ds.y @ np.linalg.solve(Ginf.M, ds.y)) / ds.n)
    conf = 3.0 * math.sqrt(math.log(6.0 / delta) / (2.0 * ds.n))
    return GenBoundReport(
        quad_term=quad,
        conf_term=conf,
        epsilon=epsilon,
        total=quad + conf + epsilon,
        delta=delta,
    )


def overparam_requirement(n: int, lambda0_hat: float, nu: float, delta: float) -> float:
    """Width sufficient for the convergence conditions to hold with
    probability at least 1 - delta: m >= n^4 / (nu^2 lambda0^4 delta^3)."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if lambda0_hat <= 0:
        raise ValueError(f"lambda0_hat must be positive, got {lambda0_hat}")
    if nu <= 0:
        raise ValueError(f"nu must be positive, got {nu}")
    if not (0 < delta < 1):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return n**4 / (nu**2 * lambda0_hat**4 * delta**3)
