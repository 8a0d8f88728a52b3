"""Asymptotic power under local alternatives through drifted Gaussian suprema.

Under a local alternative the standardized scan converges to ``G + drift`` on
the scan geometry, and the power is ``P(sup(G + drift) > xi)``.  Drifts:

* SC, deterministic shift ``delta``: ``eta_sc(t) q_p(lambda, delta) / (gamma sqrt(Gamma_n))``
* SC, prior ``delta = B w``: the same with ``q_p(lambda, B)``
* MC, deterministic mean matrix ``U``: ``Q_p(a) / (gamma sqrt(Gamma_n))``
* MC, prior ``U = B W Omega^T``: ``q_p(lambda, B) |Omega^T psi_a|^2 / (gamma sqrt(Gamma_n))``

Population quantities (``phi``, ``Gamma_n``, ``D``) come from :mod:`mp`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gplimit
from .exceptions import DegenerateDataError, ValidationError
from .mp import MPSolution, PSDModel, deterministic_equivalent, solve_mp

KINDS = ("SC_deterministic", "SC_prior", "MC_deterministic", "MC_prior")


def eta_sc(t: float, t_tilde: float) -> float:
    if not 0 < t < 1:
        raise ValidationError(f"eta_sc is singular at t={t}")
    if not 0 < t_tilde < 1:
        raise ValidationError(f"change location must lie in (0, 1), got {t_tilde}")
    if t <= t_tilde:
        return t / (1 - t) * (1 - t_tilde) ** 2
    return (1 - t) / t * t_tilde**2


def _overlap(a0, a1, b0, b1):
    return max(0.0, min(a1, b1) - max(a0, b0))


def psi_vector(triple, locations) -> np.ndarray:
    """``kappa(a)^-1/2 int u_a v_j`` for the ``s + 1`` constant-mean segments ``v_j``."""
    t1, t2, t3 = gplimit._as_times(triple)
    locs = np.concatenate([[0.0], np.asarray(locations, dtype=float), [1.0]])
    if np.any(np.diff(locs) <= 0):
        raise ValidationError("change locations must be strictly increasing inside (0, 1)")
    left, right = -1.0 / (t2 - t1), 1.0 / (t3 - t2)
    raw = np.array(
        [
            left * _overlap(t1, t2, locs[j], locs[j + 1]) + right * _overlap(t2, t3, locs[j], locs[j + 1])
            for j in range(len(locs) - 1)
        ]
    )
    return raw / math.sqrt(1.0 / (t2 - t1) + 1.0 / (t3 - t2))


def q_p_deterministic(delta, Sigma, sol: MPSolution) -> float:
    d = np.asarray(delta, dtype=float)
    D = deterministic_equivalent(Sigma, sol)
    return float(math.sqrt(d.size) * d @ D @ d)


def q_p_prior(B, Sigma, sol: MPSolution) -> float:
    """``p^-1 tr[D B B^T]``."""
    B = np.asarray(B, dtype=float)
    D = deterministic_equivalent(Sigma, sol)
    return float(np.trace(D @ B @ B.T) / D.shape[0])


def Q_p_mc(triple, U, Sigma, sol: MPSolution, locations) -> float:
    """``sqrt(p) psi^T U^T D U psi`` for a ``p x (s+1)`` matrix of segment means."""
    U = np.asarray(U, dtype=float)
    psi = psi_vector(triple, locations)
    if U.shape[1] != psi.size:
        raise ValidationError(f"U has {U.shape[1]} columns, expected s+1={psi.size}")
    v = U @ psi
    return float(math.sqrt(U.shape[0]) * v @ deterministic_equivalent(Sigma, sol) @ v)


@dataclass(frozen=True)
class AlternativeSpec:
    """Local alternative for power evaluation.

    ``gamma`` is ``p/(n-1)``.  Depending on ``kind`` supply ``delta`` (SC
    deterministic), ``B`` (priors), ``U`` (MC deterministic) and ``Omega``
    (MC prior, ``s+1`` rows).  ``locations`` are the true change times.
    """

    kind: str
    lam: float
    gamma: float
    Sigma: np.ndarray
    locations: tuple = (0.5,)
    delta: np.ndarray | None = None
    B: np.ndarray | None = None
    U: np.ndarray | None = None
    Omega: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown alternative kind {self.kind!r}; expected one of {KINDS}")
        locs = tuple(float(x) for x in np.atleast_1d(self.locations))
        if not all(0 < x < 1 for x in locs) or any(b <= a for a, b in zip(locs, locs[1:])):
            raise ValidationError(f"locations must be increasing inside (0, 1), got {locs}")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "Sigma", np.asarray(self.Sigma, dtype=float))
        need = {"SC_deterministic": "delta", "SC_prior": "B", "MC_deterministic": "U", "MC_prior": "B"}
        if getattr(self, need[self.kind]) is None:
            raise ValidationError(f"{self.kind} needs {need[self.kind]}")
        if self.kind.startswith("SC") and len(locs) != 1:
            raise ValidationError("single-change alternatives take exactly one location")
        if self.kind == "MC_prior":
            if self.Omega is None:
                raise ValidationError("MC_prior needs Omega")
            if np.asarray(self.Omega).shape[0] != len(locs) + 1:
                raise ValidationError("Omega must have s+1 rows")
        if self.kind == "MC_deterministic" and np.asarray(self.U).shape[1] != len(locs) + 1:
            raise ValidationError("U must have s+1 columns")

    @property
    def mode(self) -> str:
        return "SC" if self.kind.startswith("SC") else "MC_GRID"


@dataclass(frozen=True)
class PowerResult:
    power: float
    mc_stderr: float
    critical_value: float
    drift_summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "power": self.power,
            "mc_stderr": self.mc_stderr,
            "critical_value": self.critical_value,
            "drift_summary": self.drift_summary,
        }


def drift_vector(spec: AlternativeSpec, triples: np.ndarray, gamma_n_func: float | None = None) -> np.ndarray:
    """Drift of ``G`` at each row of ``triples`` (times)."""
    H = PSDModel.from_matrix(spec.Sigma)
    sol = solve_mp(spec.lam, spec.gamma, H)
    Gam = sol.gamma_n_func if gamma_n_func is None else gamma_n_func
    if not Gam > 0:
        raise DegenerateDataError(f"Gamma_n = {Gam:.3e} <= 0")
    scale = 1.0 / (spec.gamma * math.sqrt(Gam))
    if spec.kind in ("SC_deterministic", "SC_prior"):
        q = (
            q_p_deterministic(spec.delta, spec.Sigma, sol)
            if spec.kind == "SC_deterministic"
            else q_p_prior(spec.B, spec.Sigma, sol)
        )
        eta = np.array([eta_sc(t[1], spec.locations[0]) for t in triples])
        return scale * q * eta
    if spec.kind == "MC_deterministic":
        U = np.asarray(spec.U, dtype=float)
        D = deterministic_equivalent(spec.Sigma, sol)
        M = math.sqrt(U.shape[0]) * U.T @ D @ U
        psi = np.array([psi_vector(t, spec.locations) for t in triples])
        return scale * np.einsum("ki,ij,kj->k", psi, M, psi)
    q = q_p_prior(spec.B, spec.Sigma, sol)
    Om = np.asarray(spec.Omega, dtype=float)
    psi = np.array([psi_vector(t, spec.locations) for t in triples])
    return scale * q * np.sum((psi @ Om) ** 2, axis=1)


def asymptotic_power(
    spec: AlternativeSpec,
    epsilon: float = 0.1,
    alpha: float = 0.05,
    B_paths: int = 20000,
    seed: int = 1,
    m: int = 1000,
    quantile_table: gplimit.QuantileTable | None = None,
    cache_dir=None,
    plugin_gamma: float | None = None,
    workers: int = 1,
) -> PowerResult:
    """Power of the level-``alpha`` test against ``spec``.

    The critical value is the table quantile for the same geometry (simulated
    on demand when ``quantile_table`` is absent).  Paths depend only on
    ``seed``, so power is pathwise monotone in the drift for a fixed seed.
    ``plugin_gamma`` replaces ``Gamma_n`` by an estimate such as ``Gamma_hat``.
    """
    mode = spec.mode
    if quantile_table is None:
        quantile_table = gplimit.simulate_sup_quantiles(
            mode, epsilon, m=m if mode == "SC" else None, B=max(B_paths, gplimit.MIN_PATHS),
            alphas=(alpha,), seed=seed, cache_dir=cache_dir, workers=workers,
        )
    elif quantile_table.mode != mode or abs(quantile_table.epsilon - epsilon) > 1e-12:
        raise ValidationError("quantile table geometry does not match the alternative")
    xi = quantile_table.critical_value(alpha)
    m_used = quantile_table.grid.get("m", m) if mode == "SC" else None
    triples = gplimit.geometry_triples(mode, epsilon, m_used)
    kspec = gplimit.kernel_matrix(triples)
    drift = drift_vector(spec, triples, plugin_gamma)
    prob, se = gplimit.drifted_sup_probability(kspec, drift, xi, B=B_paths, seed=seed, workers=workers)
    j = int(np.argmax(drift))
    summary = {
        "max": float(drift[j]),
        "min": float(drift.min()),
        "mean": float(drift.mean()),
        "argmax": [float(x) for x in triples[j]],
    }
    return PowerResult(prob, se, xi, summary)
