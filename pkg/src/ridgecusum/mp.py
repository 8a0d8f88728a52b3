"""Marchenko-Pastur fixed point on the negative real axis.

``phi = phi(-lambda)`` solves ``phi = int dH(tau) / (tau (1 - c + c lambda phi) + lambda)``.
The right side is decreasing in ``phi`` on the admissible range where
``s_edge = 1 - c + c lambda phi > 0``, so the root is unique in
``(max(0, (c - 1)/(c lambda)), 1/lambda]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import ConvergenceError, ValidationError

RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class PSDModel:
    """Atomic population spectral distribution ``sum_j w_j delta_{tau_j}``."""

    taus: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.taus, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if t.shape != w.shape or t.ndim != 1 or t.size == 0:
            raise ValidationError("taus and weights must be matching nonempty vectors")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(w))):
            raise ValidationError("spectral atoms must be finite")
        if np.any(t < 0) or np.any(w <= 0):
            raise ValidationError("atoms need tau >= 0 and weight > 0")
        if abs(w.sum() - 1.0) > 1e-10:
            raise ValidationError(f"weights sum to {w.sum()}, expected 1")
        if np.all(t == 0):
            raise ValidationError("the point mass at 0 is not an admissible spectrum")
        object.__setattr__(self, "taus", t)
        object.__setattr__(self, "weights", w / w.sum())

    @classmethod
    def point(cls, tau: float = 1.0) -> "PSDModel":
        return cls(np.array([tau]), np.array([1.0]))

    @classmethod
    def from_matrix(cls, Sigma: np.ndarray) -> "PSDModel":
        """Equal-weight atoms at the eigenvalues of ``Sigma``."""
        tau = np.clip(np.linalg.eigvalsh(np.asarray(Sigma, dtype=float)), 0.0, None)
        return cls(tau, np.full(tau.size, 1.0 / tau.size))

    @property
    def mean(self) -> float:
        return float(self.weights @ self.taus)


@dataclass(frozen=True)
class MPSolution:
    lam: float
    c: float
    phi: float
    phi_prime: float
    theta_n: float
    gamma_n_func: float
    s_edge: float
    residual: float
    iterations: int


def _mp_map(phi: float, lam: float, c: float, H: PSDModel) -> float:
    D = H.taus * (1.0 - c + c * lam * phi) + lam
    return float(H.weights @ (1.0 / D))


def solve_mp(lam: float, c: float, H: PSDModel, max_iter: int = 2000) -> MPSolution:
    """Solve the fixed point at ``z = -lam`` for aspect ratio ``c``.

    Damped iteration (factor 0.5) from ``1/(int tau dH + lam)``, a bracketing
    root finder if the iterate leaves the admissible range or stalls, and a
    final Newton polish.  ``phi'`` comes from implicit differentiation.

    Raises
    ------
    ConvergenceError
        If the residual exceeds 1e-12 and the conditioning floor
        ``64 eps (1 + |f'(phi)|) phi`` of the map.
    """
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    if not c > 0:
        raise ValidationError(f"aspect ratio must be positive, got {c}")
    lo = max(0.0, (c - 1.0) / (c * lam))
    hi = 1.0 / lam

    def g(x):
        return _mp_map(x, lam, c, H) - x

    phi = 1.0 / (H.mean + lam)
    it = 0
    ok = False
    for it in range(1, max_iter + 1):
        nxt = 0.5 * phi + 0.5 * _mp_map(phi, lam, c, H)
        if not lo < nxt <= hi:
            break
        if abs(nxt - phi) <= 1e-15 * max(phi, 1e-300):
            phi = nxt
            ok = True
            break
        phi = nxt
    if not ok or abs(g(phi)) > RESIDUAL_TOL:
        a = lo + 1e-15 * max(hi - lo, 1e-300)
        if g(a) < 0:
            a = lo
        phi = brentq(g, a, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(20):
        D = H.taus * (1.0 - c + c * lam * phi) + lam
        r = float(H.weights @ (1.0 / D)) - phi
        if abs(r) <= 1e-15 * max(1.0, 1.0 / lam):
            break
        dr = -c * lam * float(H.weights @ (H.taus / D**2)) - 1.0
        step = phi - r / dr
        if not lo < step <= hi:
            break
        phi = step
    residual = abs(g(phi))
    s_edge = 1.0 - c + c * lam * phi
    D = H.taus * s_edge + lam
    # near s_edge = 0 the map is steep and the residual floor is |f'| ulp(phi)
    slope = c * lam * float(H.weights @ (H.taus / D**2))
    if residual > max(RESIDUAL_TOL, 64 * np.finfo(float).eps * (1.0 + slope) * phi):
        raise ConvergenceError(f"M-P solver did not converge: residual {residual:.3e}")
    num = float(H.weights @ ((1.0 + c * H.taus * phi) / D**2))
    den = 1.0 + c * lam * float(H.weights @ (H.taus / D**2))
    phi_prime = num / den
    theta, gamma = theta_gamma_from(phi, phi_prime, lam, c)
    return MPSolution(float(lam), float(c), float(phi), phi_prime, theta, gamma, s_edge, residual, it)


def theta_gamma_from(phi: float, phi_prime: float, lam: float, c: float) -> tuple[float, float]:
    lp = lam * phi
    theta = 1.0 - lp
    gamma = 2.0 * (1.0 - c + c * lp) * (1.0 - lp) - 2.0 * (lp - lam * lam * phi_prime)
    return theta, gamma


def theta_gamma_limit(sol: MPSolution) -> tuple[float, float]:
    return sol.theta_n, sol.gamma_n_func


def gamma_via_companion(sol: MPSolution) -> float:
    """``2 (lam^2/c) (s' - s^2)`` with the companion transform ``s = (1-c)/lam + c phi``."""
    lam, c = sol.lam, sol.c
    s = (1.0 - c) / lam + c * sol.phi
    sp = (1.0 - c) / lam**2 + c * sol.phi_prime
    return 2.0 * lam**2 / c * (sp - s * s)


def deterministic_equivalent(Sigma, sol: MPSolution) -> np.ndarray:
    """``[(1 - c + c lam phi) Sigma + lam I]^{-1}`` in the eigenbasis of ``Sigma``."""
    S = np.asarray(Sigma, dtype=float)
    tau, Q = np.linalg.eigh((S + S.T) / 2)
    tau = np.clip(tau, 0.0, None)
    return (Q / (sol.s_edge * tau + sol.lam)) @ Q.T


def trace_d(H: PSDModel, sol: MPSolution) -> float:
    """``p^-1 tr D``; equals ``phi`` at the fixed point."""
    return float(H.weights @ (1.0 / (H.taus * sol.s_edge + sol.lam)))


def trace_d_sigma(H: PSDModel, sol: MPSolution) -> float:
    """``p^-1 tr(D Sigma) = (1 - lam phi)/s_edge``."""
    return float(H.weights @ (H.taus / (H.taus * sol.s_edge + sol.lam)))

