"""Pooled covariance, its eigendecomposition and the ridge-regularized estimators.

Two scalings of the pooled covariance coexist on purpose: the Stieltjes
estimates ``m_n`` and ``m_n'`` use ``(n/(n-1)) S_n + lambda I`` while whitening
uses ``S_n + lambda I``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._backend import kahan_cumsum
from .datamodel import ObservationMatrix, SegmentPrefix
from .exceptions import ValidationError

CLIP_REL = 1e-10


def center(data: np.ndarray) -> np.ndarray:
    """Remove the common level of each row.

    Subtracting the first column before the row mean keeps constant rows
    exactly zero.  Segment contrasts are invariant to this shift.
    """
    x = data - data[:, :1]
    return x - x.mean(axis=1, keepdims=True)


def pooled_covariance(X: ObservationMatrix | np.ndarray) -> np.ndarray:
    """``S_n = n^-1 sum_j (X_j - Xbar)(X_j - Xbar)^T``."""
    data = X.data if isinstance(X, ObservationMatrix) else np.asarray(X, dtype=float)
    if data.shape[1] < 2:
        raise ValidationError("pooled covariance needs n >= 2")
    xc = center(data)
    S = xc @ xc.T / data.shape[1]
    return (S + S.T) / 2


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # descending, clipped at 0
    eigenvectors: np.ndarray  # columns

    @property
    def p(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T

    def apply_function(self, values: np.ndarray, x: np.ndarray) -> np.ndarray:
        """``Q diag(values) Q^T x``."""
        Q = self.eigenvectors
        return Q @ (values[:, None] * (Q.T @ x))


def eigendecompose(S: np.ndarray) -> SpectralDecomposition:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError("eigendecompose needs a square matrix")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-10 * scale:
        raise ValidationError("matrix is not symmetric")
    w, V = np.linalg.eigh((S + S.T) / 2)
    w = w[::-1].copy()
    V = V[:, ::-1].copy()
    top = max(w[0], 0.0) if w.size else 0.0
    if w.size and w[-1] < -1e-8 * max(top, 1.0):
        raise ValidationError(f"matrix is not positive semidefinite (min eigenvalue {w[-1]:.3e})")
    w = np.maximum(w, 0.0)
    return SpectralDecomposition(w, V)


def stieltjes_estimates(
    decomposition: SpectralDecomposition, lam: float, n: int, p: int | None = None
) -> tuple[float, float]:
    """``m_n(-lambda)`` and ``m_n'(-lambda)`` from the rescaled sample spectrum."""
    if not lam > 0:
        raise ValidationError(f"ridge parameter must be positive, got {lam}")
    alpha = decomposition.eigenvalues
    p = alpha.shape[0] if p is None else p
    r = 1.0 / (n / (n - 1) * alpha + lam)
    return float(r.sum() / p), float((r * r).sum() / p)


def theta_gamma_hat(m_n: float, m_n_prime: float, lam: float, gamma_n: float) -> tuple[float, float]:
    lm = lam * m_n
    theta = 1.0 - lm
    gamma = 2.0 * (1.0 - gamma_n + gamma_n * lm) * (1.0 - lm) - 2.0 * (lm - lam * lam * m_n_prime)
    return theta, gamma


def ridge_whiten(
    X: ObservationMatrix | np.ndarray, decomposition: SpectralDecomposition, lam: float
) -> np.ndarray:
    """``(S_n + lambda I)^{-1/2} X`` evaluated in the eigenbasis."""
    if not lam > 0:
        raise ValidationError(f"ridge parameter must be positive, got {lam}")
    data = X.data if isinstance(X, ObservationMatrix) else np.asarray(X, dtype=float)
    return decomposition.apply_function((decomposition.eigenvalues + lam) ** -0.5, data)


@dataclass(frozen=True)
class RidgeContext:
    """Everything the scans need at one ridge level.

    Build with :meth:`build`; pass a shared ``decomposition`` to reuse one
    eigendecomposition across many ridge levels.
    """

    obs: ObservationMatrix
    lam: float
    decomposition: SpectralDecomposition
    m_n: float
    m_n_prime: float
    theta_hat: float
    gamma_hat: float

    @classmethod
    def build(
        cls,
        obs: ObservationMatrix,
        lam: float,
        decomposition: SpectralDecomposition | None = None,
    ) -> "RidgeContext":
        if decomposition is None:
            decomposition = eigendecompose(pooled_covariance(obs))
        m, mp = stieltjes_estimates(decomposition, lam, obs.n, obs.p)
        theta, gamma = theta_gamma_hat(m, mp, lam, obs.gamma_n)
        return cls(obs, float(lam), decomposition, m, mp, theta, gamma)

    @property
    def n(self) -> int:
        return self.obs.n

    @property
    def p(self) -> int:
        return self.obs.p

    @property
    def gamma_n(self) -> float:
        return self.obs.gamma_n

    @cached_property
    def whitened(self) -> np.ndarray:
        return ridge_whiten(self.obs, self.decomposition, self.lam)

    @cached_property
    def prefix(self) -> SegmentPrefix:
        """Prefix sums of the whitened, level-removed panel (used by the scans)."""
        y = ridge_whiten(center(self.obs.data), self.decomposition, self.lam)
        return SegmentPrefix(kahan_cumsum(np.ascontiguousarray(y)))

    @cached_property
    def gram(self) -> np.ndarray:
        P = self.prefix.cumsum
        return np.ascontiguousarray(P.T @ P)
