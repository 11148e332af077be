"""Closed-form training dynamics for the frozen-Jacobian model.

With the Jacobian held constant at J, outputs are affine in the weights,
u(w) = u0 + J (w - w0), and both gradient flow and natural-gradient flow
have closed forms:

    w_gd(t)  = J^T G^{-1} (I - exp(-G t)) (y - u0) + w0
    w_ngd(t) = (1 - e^{-t}) J^T G^{-1} (y - u0) + w0

with G = J J^T.  The two flows traverse different paths but share the
limit w0 + J^T G^{-1} (y - u0), the least-norm weight displacement fitting
the targets.  The discrete natural-gradient recursion contracts the
residual by exactly (1 - eta) per step, reaching y in one step at eta = 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from .errors import SingularMatrixError

if TYPE_CHECKING:
    from .optim import LossSpec

PD_FLOOR = 1e-12
DECAY_TARGET = 1e12  # "t = infinity" drives every mode below 1/DECAY_TARGET


@dataclass(frozen=True)
class LinearizedModel:
    """Frozen Jacobian J (n x p), initial weights w0, outputs u0, targets y.

    Construction fails unless G = J J^T is positive definite; the
    eigendecomposition of G is cached for the trajectory formulas.
    """

    J: np.ndarray
    w0: np.ndarray
    u0: np.ndarray
    y: np.ndarray
    eig: tuple[np.ndarray, np.ndarray] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        w0 = np.asarray(self.w0, dtype=float).ravel()
        u0 = np.asarray(self.u0, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        n, p = J.shape
        if w0.shape != (p,):
            raise ValueError(f"w0 has length {w0.size}, expected {p}")
        if u0.shape != (n,) or y.shape != (n,):
            raise ValueError(f"u0 and y must have length {n}")
        lam, V = np.linalg.eigh(J @ J.T)
        if lam[0] <= PD_FLOOR:
            raise SingularMatrixError(
                f"J J^T must be positive definite; lambda_min = {lam[0]:.3e}"
            )
        for name, value in (("J", J), ("w0", w0), ("u0", u0), ("y", y), ("eig", (lam, V))):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @property
    def p(self) -> int:
        return self.J.shape[1]


def outputs_at(lm: LinearizedModel, w: np.ndarray) -> np.ndarray:
    """u(w) = u0 + J (w - w0)."""
    return lm.u0 + lm.J @ (np.asarray(w, dtype=float) - lm.w0)


def gd_trajectory(lm: LinearizedModel, t: float) -> np.ndarray:
    """Gradient-flow weights at time t, via eigendecomposition of G."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    lam, V = lm.eig
    rho0 = lm.y - lm.u0
    coeff = (1.0 - np.exp(-lam * t)) / lam
    return lm.J.T @ (V @ (coeff * (V.T @ rho0))) + lm.w0


def ngd_trajectory(lm: LinearizedModel, t: float) -> np.ndarray:
    """Natural-gradient-flow weights at time t."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    lam, V = lm.eig
    rho0 = lm.y - lm.u0
    return (1.0 - np.exp(-t)) * (lm.J.T @ (V @ ((V.T @ rho0) / lam))) + lm.w0


def ngd_discrete(
    lm: LinearizedModel,
    eta: float,
    k: int,
    loss: "LossSpec | None" = None,
) -> tuple[np.ndarray, np.ndarray]:
    """k steps of the discrete natural-gradient recursion.

    Each step solves G z = g(u) and moves w by -eta J^T z, where g is the
    output-space loss gradient (u - y for the default squared loss).  For
    squared loss the residual obeys y - u(k+1) = (1 - eta)(y - u(k))
    exactly, so eta = 1 converges in a single step.  Returns (weights,
    outputs) after k steps.
    """
    if k < 0:
        raise ValueError(f"need k >= 0, got {k}")
    grad: Callable[[np.ndarray], np.ndarray]
    if loss is None:
        grad = lambda u: u - lm.y
    else:
        grad = lambda u: loss.grad(u, lm.y)
    lam, V = lm.eig
    w = lm.w0.copy()
    u = lm.u0.copy()
    for _ in range(k):
        z = V @ ((V.T @ grad(u)) / lam)
        w = w - eta * (lm.J.T @ z)
        u = outputs_at(lm, w)
    return w, u


def limit_weights(lm: LinearizedModel) -> np.ndarray:
    """Common t -> infinity point of both flows: w0 + J^T G^{-1} (y - u0),
    the least-norm solution of J (w - w0) = y - u0."""
    lam, V = lm.eig
    rho0 = lm.y - lm.u0
    return lm.J.T @ (V @ ((V.T @ rho0) / lam)) + lm.w0


def t_infinity(lm: LinearizedModel) -> float:
    """Horizon at which every exponential mode of both flows has decayed
    below 1e-12: ln(1e12) / min(lambda_min(G), 1)."""
    lam_min = float(lm.eig[0][0])
    return float(np.log(DECAY_TARGET) / min(lam_min, 1.0))
