"""Two-layer ReLU network with a trained first layer and frozen signs.

    f(x) = (1/sqrt(m)) * sum_r a_r * max(w_r . x, 0)

Only w is ever updated; the output signs a and the initialization snapshot
w0 are frozen at construction.  The Jacobian of the output vector with
respect to the flattened weights factors as a row-wise Khatri-Rao product
of a signed activation pattern and the input matrix, so consumers work
with that factor pair instead of the dense n x (m*d) matrix whenever they
can.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class NetworkParams:
    """First-layer weights w (m x d), frozen signs a, init scale nu.

    w0 is the frozen snapshot of w at initialization; seed records how the
    draw was made (-1 when constructed by hand).  Treat instances as
    immutable: optimizer steps return new instances sharing a and w0.
    """

    w: np.ndarray
    a: np.ndarray
    nu: float
    w0: np.ndarray = field(repr=False)
    seed: int = -1

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        a = np.asarray(self.a, dtype=float).ravel()
        w0 = np.asarray(self.w0, dtype=float)
        if w.ndim != 2 or w.shape[0] < 1:
            raise ValueError(f"w must be m x d with m >= 1, got shape {w.shape}")
        if a.shape != (w.shape[0],):
            raise ValueError(f"a has length {a.size}, expected {w.shape[0]}")
        if not np.all(np.abs(a) == 1.0):
            raise ValueError("a entries must be +-1")
        if w0.shape != w.shape:
            raise ValueError(f"w0 shape {w0.shape} does not match w shape {w.shape}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "w0", w0)

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[1]

    def with_weights(self, w_new: np.ndarray) -> "NetworkParams":
        """New params with updated w; a, nu, w0, seed unchanged."""
        return replace(self, w=np.asarray(w_new, dtype=float))


@dataclass(frozen=True)
class ActivationPattern:
    """S[i, r] = 1{w_r . x_i >= 0} and its signed, scaled companion
    Stilde[i, r] = a_r * S[i, r] / sqrt(m)."""

    S: np.ndarray
    Stilde: np.ndarray


@dataclass(frozen=True)
class JacobianView:
    """The output Jacobian held as the factor pair (X, Stilde).

    Block layout is unit-major: row i is m consecutive blocks of length d,
    block r being Stilde[i, r] * x_i.  All consumers need only n x n or
    m x d shaped products, so the dense matrix is materialized only by
    oracles and tests.
    """

    X: np.ndarray
    Stilde: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.Stilde.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def dense(self) -> np.ndarray:
        """Materialize the n x (m*d) matrix."""
        return np.einsum("ir,ic->irc", self.Stilde, self.X).reshape(self.n, self.m * self.d)

    def apply_weights(self, V: np.ndarray) -> np.ndarray:
        """J @ vec(V) for an m x d weight perturbation V, as a length-n vector."""
        return np.einsum("ir,rc,ic->i", self.Stilde, V, self.X)

    def grad_matrix(self, rho: np.ndarray) -> np.ndarray:
        """J.T @ rho reshaped to m x d (unit-major layout makes this
        Stilde.T @ diag(rho) @ X)."""
        return self.Stilde.T @ (rho[:, None] * self.X)


def init(m: int, d: int, nu: float, seed: int) -> NetworkParams:
    """Draw w entries i.i.d. N(0, nu^2) and signs a uniform on {-1, +1}.

    Deterministic given the seed; w0 is a copy of the draw.
    """
    if m < 1 or d < 1:
        raise ValueError(f"need m >= 1 and d >= 1, got m={m}, d={d}")
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    rng = np.random.default_rng(seed)
    w = nu * rng.standard_normal((m, d))
    a = rng.choice([-1.0, 1.0], size=m)
    return NetworkParams(w=w, a=a, nu=nu, w0=w.copy(), seed=seed)


def forward(p: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Network outputs u_i = (1/sqrt(m)) sum_r a_r max(w_r . x_i, 0)."""
    X = _check_inputs(p, X)
    return (np.maximum(X @ p.w.T, 0.0) @ p.a) / np.sqrt(p.m)


def activation_pattern(p: NetworkParams, X: np.ndarray) -> ActivationPattern:
    """ReLU derivative indicators; ties w_r . x_i = 0 count as active."""
    X = _check_inputs(p, X)
    S = (X @ p.w.T >= 0.0).astype(float)
    return ActivationPattern(S=S, Stilde=S * (p.a / np.sqrt(p.m)))


def jacobian(p: NetworkParams, X: np.ndarray) -> JacobianView:
    """Jacobian of forward(p, X) with respect to vec(w), as factors."""
    X = _check_inputs(p, X)
    return JacobianView(X=X, Stilde=activation_pattern(p, X).Stilde)


def save_params(p: NetworkParams, path) -> None:
    """Checkpoint to an .npz archive (arrays w, w0, a; scalars nu, seed)."""
    np.savez(Path(path), w=p.w, w0=p.w0, a=p.a, nu=np.float64(p.nu), seed=np.int64(p.seed))


def load_params(path) -> NetworkParams:
    """Load a checkpoint written by save_params."""
    with np.load(Path(path)) as archive:
        return NetworkParams(
            w=archive["w"],
            a=archive["a"],
            nu=float(archive["nu"]),
            w0=archive["w0"],
            seed=int(archive["seed"]),
        )


def _check_inputs(p: NetworkParams, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != p.d:
        raise ValueError(f"inputs have dimension {X.shape[1]}, network expects {p.d}")
    return X
