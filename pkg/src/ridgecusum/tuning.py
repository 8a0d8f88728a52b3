"""Choice of the ridge level by maximizing the (estimated) asymptotic SNR.

Priors on the mean-shift covariance are either an explicit matrix ``B`` or a
member of the linear family ``B = theta1 I + theta2 Sigma`` normalized to
``p^-1 tr B = 1``.  The family is indexed by ``theta in [0, 1]`` with
``theta1 = 1 - theta`` and ``theta2 = theta / (p^-1 tr Sigma)``, so both
coefficients stay nonnegative for any trace level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DegenerateDataError, ValidationError
from .mp import PSDModel, solve_mp, trace_d, trace_d_sigma
from .spectral import RidgeContext

DEFAULT_GRID_POINTS = 10
DEFAULT_GRID_RATIO = 100.0
DEFAULT_THETA_POINTS = 21


@dataclass(frozen=True)
class PriorSpec:
    """Prior covariance of the mean shift.

    Parameters
    ----------
    kind : {"linear", "matrix"}
    theta : float
        Linear-family position in [0, 1]; 0 is the identity, 1 is ``Sigma``
        rescaled to unit average eigenvalue.
    matrix : ndarray, optional
        Explicit symmetric PSD ``B`` for ``kind="matrix"``.
    normalize : bool
        Rescale an explicit ``B`` to ``p^-1 tr B = 1``.
    scale : float
        Extra multiplier on ``B`` (ASNR is linear in it).
    """

    kind: str = "linear"
    theta: float = 0.0
    matrix: np.ndarray | None = None
    normalize: bool = True
    scale: float = 1.0

    def __post_init__(self):
        if self.kind == "linear":
            if not 0.0 <= self.theta <= 1.0:
                raise ValidationError(f"linear-family theta must lie in [0, 1], got {self.theta}")
        elif self.kind == "matrix":
            if self.matrix is None:
                raise ValidationError("matrix prior needs a matrix")
            B = np.asarray(self.matrix, dtype=float)
            if B.ndim != 2 or B.shape[0] != B.shape[1]:
                raise ValidationError("prior matrix must be square")
            if np.max(np.abs(B - B.T)) > 1e-10 * max(1.0, np.max(np.abs(B))):
                raise ValidationError("prior matrix must be symmetric")
            if np.linalg.eigvalsh((B + B.T) / 2).min() < -1e-10 * max(1.0, np.abs(B).max()):
                raise ValidationError("prior matrix must be positive semidefinite")
            if self.normalize:
                tr = np.trace(B) / B.shape[0]
                if tr <= 0:
                    raise ValidationError("prior matrix has zero trace")
                B = B / tr
            object.__setattr__(self, "matrix", (B + B.T) / 2)
        else:
            raise ValidationError(f"unknown prior kind {self.kind!r}")

    @classmethod
    def identity(cls) -> "PriorSpec":
        return cls("linear", 0.0)

    @classmethod
    def sigma(cls) -> "PriorSpec":
        return cls("linear", 1.0)

    @classmethod
    def linear(cls, theta: float) -> "PriorSpec":
        return cls("linear", float(theta))

    def coefficients(self, mean_eig: float) -> tuple[float, float]:
        """``(theta1, theta2)`` for a covariance with average eigenvalue ``mean_eig``."""
        if self.kind != "linear":
            raise ValidationError("coefficients are defined for the linear family only")
        if not mean_eig > 0:
            raise DegenerateDataError("covariance has zero trace")
        return self.scale * (1.0 - self.theta), self.scale * self.theta / mean_eig


def linear_family(points: int = DEFAULT_THETA_POINTS) -> list[PriorSpec]:
    return [PriorSpec.linear(t) for t in np.linspace(0.0, 1.0, points)]


def parse_prior(text: str, matrix_loader=None) -> PriorSpec:
    """``identity``, ``sigma``, ``linear:THETA`` or ``matrix:FILE``."""
    if text == "identity":
        return PriorSpec.identity()
    if text == "sigma":
        return PriorSpec.sigma()
    if text.startswith("linear:"):
        try:
            return PriorSpec.linear(float(text.split(":", 1)[1]))
        except ValueError:
            raise ValidationError(f"bad linear prior {text!r}") from None
    if text.startswith("matrix:"):
        if matrix_loader is None:
            matrix_loader = lambda path: np.loadtxt(path, delimiter=",", ndmin=2)  # noqa: E731
        try:
            B = matrix_loader(text.split(":", 1)[1])
        except (OSError, ValueError) as exc:
            raise ValidationError(f"cannot read prior matrix: {exc}") from None
        return PriorSpec("matrix", matrix=B)
    raise ValidationError(f"unknown prior {text!r}; use identity, sigma, linear:THETA or matrix:FILE")


@dataclass(frozen=True)
class LambdaGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ValidationError("lambda grid must be a nonempty vector")
        if np.any(pts <= 0):
            raise ValidationError("lambda grid points must be positive")
        object.__setattr__(self, "points", np.sort(pts))

    @property
    def lower(self) -> float:
        return float(self.points[0])

    @property
    def upper(self) -> float:
        return float(self.points[-1])

    @classmethod
    def log_spaced(
        cls, lower: float, ratio: float = DEFAULT_GRID_RATIO, points: int = DEFAULT_GRID_POINTS
    ) -> "LambdaGrid":
        if points == 1:
            return cls(np.array([lower]))
        pts = np.geomspace(lower, lower * ratio, points)
        pts[0] = lower
        return cls(pts)


def lambda_floor(S: np.ndarray) -> float:
    """``0.01 p^-1 tr S``."""
    S = np.asarray(S, dtype=float)
    tr = float(np.trace(S))
    if not tr > 0:
        raise DegenerateDataError("pooled covariance has zero trace (constant data)")
    return 0.01 * tr / S.shape[0]


def q_hat(ctx: RidgeContext, prior: PriorSpec) -> float:
    """``p^-1 tr[(S_n + lambda I)^-1 B]`` in the eigenbasis of ``S_n``."""
    alpha = ctx.decomposition.eigenvalues
    p = alpha.size
    if prior.kind == "linear":
        t1, t2 = prior.coefficients(float(alpha.sum() / p))
        return float(np.sum((t1 + t2 * alpha) / (alpha + ctx.lam)) / p)
    Q = ctx.decomposition.eigenvectors
    B = prior.scale * prior.matrix
    if B.shape[0] != p:
        raise ValidationError(f"prior matrix is {B.shape[0]}x{B.shape[0]}, data has p={p}")
    diag = np.einsum("ij,ik,kj->j", Q, B, Q)
    return float(np.sum(diag / (alpha + ctx.lam)) / p)


def asnr_hat(ctx: RidgeContext, prior: PriorSpec) -> float:
    if not ctx.gamma_hat > 0:
        raise DegenerateDataError(f"gamma_hat = {ctx.gamma_hat:.3e} <= 0 at lambda={ctx.lam}")
    return q_hat(ctx, prior) / math.sqrt(ctx.gamma_hat)


def argmax_smallest(values: Sequence[float]) -> int:
    """Index of the maximum; the first (smallest lambda) wins ties."""
    v = np.asarray(values, dtype=float)
    if v.size == 0 or np.all(np.isnan(v)):
        raise DegenerateDataError("no grid point has a defined ASNR")
    return int(np.nanargmax(v))


def _asnr_or_nan(ctx, prior):
    try:
        return asnr_hat(ctx, prior)
    except DegenerateDataError:
        return math.nan


def _sorted(contexts: Sequence[RidgeContext]) -> list[RidgeContext]:
    if len(contexts) == 0:
        raise ValidationError("empty lambda grid")
    return sorted(contexts, key=lambda c: c.lam)


def select_bayes(contexts: Sequence[RidgeContext], prior: PriorSpec) -> float:
    ctxs = _sorted(contexts)
    return ctxs[argmax_smallest([_asnr_or_nan(c, prior) for c in ctxs])].lam


def minimax_table(contexts: Sequence[RidgeContext], family: Sequence[PriorSpec]) -> np.ndarray:
    """ASNR table of shape (len(contexts), len(family)) in ascending lambda order."""
    ctxs = _sorted(contexts)
    return np.array([[_asnr_or_nan(c, pr) for pr in family] for c in ctxs])


def select_minimax(contexts: Sequence[RidgeContext], family: Sequence[PriorSpec] | None = None) -> float:
    """Grid lambda maximizing the worst-case ASNR over ``family`` (default: linear family)."""
    family = linear_family() if family is None else list(family)
    if not family:
        raise ValidationError("empty prior family")
    ctxs = _sorted(contexts)
    lower = minimax_table(ctxs, family).min(axis=1)
    return ctxs[argmax_smallest(lower)].lam


def contexts_on_grid(obs, grid: LambdaGrid, decomposition=None) -> list[RidgeContext]:
    from .spectral import eigendecompose, pooled_covariance

    if decomposition is None:
        decomposition = eigendecompose(pooled_covariance(obs))
    return [RidgeContext.build(obs, float(lam), decomposition) for lam in grid.points]


def default_grid(obs) -> LambdaGrid:
    from .spectral import pooled_covariance

    return LambdaGrid.log_spaced(lambda_floor(pooled_covariance(obs)))


def population_asnr(lam: float, c: float, H: PSDModel, prior: PriorSpec) -> float:
    """``q_p / sqrt(Gamma_n)`` with deterministic-equivalent traces for a linear prior."""
    sol = solve_mp(lam, c, H)
    t1, t2 = prior.coefficients(H.mean)
    q = t1 * trace_d(H, sol) + t2 * trace_d_sigma(H, sol)
    if not sol.gamma_n_func > 0:
        raise DegenerateDataError(f"Gamma_n = {sol.gamma_n_func:.3e} <= 0 at lambda={lam}")
    return q / math.sqrt(sol.gamma_n_func)


def population_f0_f1(lam: float, c: float, H: PSDModel) -> tuple[float, float]:
    """``f0 = p^-1 tr D / sqrt(Gamma)`` and ``f1 = p^-1 tr(D Sigma) / sqrt(Gamma)``."""
    sol = solve_mp(lam, c, H)
    g = math.sqrt(sol.gamma_n_func)
    return trace_d(H, sol) / g, trace_d_sigma(H, sol) / g


def select_minimax_population(
    lams: Sequence[float], c: float, H: PSDModel, family: Sequence[PriorSpec] | None = None
) -> float:
    family = linear_family() if family is None else list(family)
    lams = np.sort(np.asarray(lams, dtype=float))
    table = np.array([[population_asnr(l, c, H, pr) for pr in family] for l in lams])
    return float(lams[argmax_smallest(table.min(axis=1))])
