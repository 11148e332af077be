"""Gram matrices of the network Jacobian and their infinite-width limit.

The limiting Gram has the closed form

    G_inf[i, j] = x_i.x_j * (pi - arccos(x_i.x_j)) / (2 pi),

the expectation over Gaussian weights of x_i.x_j 1{w.x_i >= 0, w.x_j >= 0}.
At finite width the Gram of the Jacobian is the entrywise (Hadamard)
product of X X^T and S S^T / m, which is how it is computed here.
Spectral helpers include the Hadamard-product eigenvalue bounds relating
the factors' spectra to the product's.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .network import ActivationPattern, JacobianView

SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric PSD matrix M with a tag saying how it was built."""

    M: np.ndarray
    kind: str  # limiting | finite | pre_activation

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in self.M:
                writer.writerow([repr(float(v)) for v in row])


def limiting_gram(ds: Dataset) -> GramMatrix:
    """Closed-form infinite-width Gram of a validated dataset.

    Inner products are clamped to [-1, 1] before arccos (roundoff near
    +-1 would otherwise produce NaN), and the diagonal is evaluated at
    inner product exactly 1, giving entries of exactly 1/2 for unit rows.
    """
    inner = ds.X @ ds.X.T
    np.fill_diagonal(inner, 1.0)  # rows are unit norm by contract
    inner = np.clip(inner, -1.0, 1.0)
    M = inner * (np.pi - np.arccos(inner)) / (2.0 * np.pi)
    return GramMatrix(M=M, kind="limiting")


def finite_gram(jv: JacobianView) -> GramMatrix:
    """J J^T via the factored formula: entrywise product of X X^T with
    S S^T / m.

    The signs in Stilde square away, so Stilde @ Stilde.T is exactly
    S S^T / m and no dense Jacobian is needed.
    """
    M = (jv.X @ jv.X.T) * (jv.Stilde @ jv.Stilde.T)
    return GramMatrix(M=M, kind="finite")


def mc_limiting_gram(
    ds: Dataset,
    nu: float,
    samples: int,
    seed: int,
    chunk: int = 20000,
) -> tuple[GramMatrix, np.ndarray]:
    """Monte Carlo estimate of the limiting Gram, with standard errors.

    Draws w ~ N(0, nu^2 I) and averages x_i.x_j 1{w.x_i >= 0, w.x_j >= 0}.
    The indicator events are scale invariant, so the estimate does not
    depend on nu (the draws are still made at scale nu).  Returns the
    estimate and the entrywise standard-error matrix
    |x_i.x_j| sqrt(p(1-p)/samples) from the estimated co-activation
    frequency p.
    """
    if samples < 1:
        raise ValueError(f"need samples >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    counts = np.zeros((ds.n, ds.n))
    done = 0
    while done < samples:
        take = min(chunk, samples - done)
        W = nu * rng.standard_normal((take, ds.d))
        P = (W @ ds.X.T >= 0.0).astype(float)  # ties count as active
        counts += P.T @ P
        done += take
    freq = counts / samples
    inner = ds.X @ ds.X.T
    M = inner * freq
    stderr = np.abs(inner) * np.sqrt(freq * (1.0 - freq) / samples)
    return GramMatrix(M=M, kind="limiting"), stderr


def pre_activation_gram(ap: ActivationPattern) -> GramMatrix:
    """(1/m) S S^T from the unsigned 0/1 pattern; diagonal at most 1.

    Scaled so that the finite Gram is exactly the entrywise product of
    X X^T with this matrix.
    """
    m = ap.S.shape[1]
    return GramMatrix(M=(ap.S @ ap.S.T) / m, kind="pre_activation")


def min_eig(g: GramMatrix | np.ndarray) -> float:
    """Smallest eigenvalue by a symmetric solver; raw, not clipped."""
    return float(_eigvalsh(g)[0])


def max_eig(g: GramMatrix | np.ndarray) -> float:
    """Largest eigenvalue by a symmetric solver."""
    return float(_eigvalsh(g)[-1])


def hadamard_bounds(A: np.ndarray, B: np.ndarray) -> tuple[float, float]:
    """Eigenvalue bounds for the Hadamard product of two PD matrices.

    Returns (min_i A_ii * lambda_min(B), max_i A_ii * lambda_max(B)).
    The first bounds the smallest eigenvalue of the entrywise product
    A * B from below, the second bounds its largest from above.  Both
    inputs must be symmetric positive definite.
    """
    lam_B = None
    for name, M in (("A", A), ("B", B)):
        M = np.asarray(M, dtype=float)
        _check_symmetric(M, name)
        lam = np.linalg.eigvalsh(M)
        if lam[0] <= 0:
            raise ValueError(f"{name} is not positive definite (lambda_min = {lam[0]:.3e})")
        if name == "B":
            lam_B = lam
    A = np.asarray(A, dtype=float)
    diag = np.diag(A)
    return float(diag.min() * lam_B[0]), float(diag.max() * lam_B[-1])


def _eigvalsh(g) -> np.ndarray:
    M = np.asarray(g.M if isinstance(g, GramMatrix) else g, dtype=float)
    _check_symmetric(M, "matrix")
    return np.linalg.eigvalsh(M)


def _check_symmetric(M: np.ndarray, name: str) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    skew = np.abs(M - M.T).max() if M.size else 0.0
    if skew > SYMMETRY_TOL:
        raise ValueError(f"{name} is not symmetric (max |M - M.T| = {skew:.3e})")
