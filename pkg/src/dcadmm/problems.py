"""Synthetic problem instances and centralized oracle solutions."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .admm import EpsSchedule, OracleSolution, ProblemInstance
from .solvers import (
    Ball,
    FistaConfig,
    LogisticL1Objective,
    QuadraticObjective,
    fista,
    mu_max,
    soft_threshold,
)

__all__ = [
    "LeastSquaresSpec",
    "LogisticSpec",
    "generate_least_squares_instance",
    "generate_logistic_instance",
    "generate_consensus_instance",
    "logistic_kkt_residual",
]

log = logging.getLogger(__name__)


def _require_seed(seed) -> np.random.Generator:
    if seed is None:
        raise ValueError("a seed is required for reproducible instance generation")
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class LeastSquaresSpec:
    n: int = 10
    rows: int = 20
    p: int = 15
    noise_std: float = 0.0
    gamma: float | None = None
    eps_schedule: EpsSchedule = EpsSchedule()

    @property
    def penalty(self) -> float:
        """``gamma``, defaulting to ``rows`` (the scale of ``E[A_i^T A_i]``)."""
        return float(self.rows) if self.gamma is None else float(self.gamma)


@dataclass(frozen=True)
class LogisticSpec:
    n: int = 10
    samples: int = 100
    p: int = 15
    zero_fraction: float = 0.4
    noise_variance: float = 0.1
    mu_fraction: float = 0.1
    gamma: float = 1.0
    eps_schedule: EpsSchedule = EpsSchedule()
    fista: FistaConfig = FistaConfig(max_inner_iters=2000, inner_tolerance=1e-8)


def generate_least_squares_instance(spec: LeastSquaresSpec, seed, max_regenerations: int = 100):
    """Agents hold ``(A_i, b_i)`` with ``b_i = A_i x_true + noise``.

    Entries of ``A_i`` and ``x_true`` are standard normal. With
    ``noise_std = 0`` the measurements are consistent and every local dual
    optimum is zero. The penalty defaults to ``rows``. Returns
    ``(problem, oracle, x_true)``; the oracle solves the stacked normal
    equations. Rank-deficient stacks are regenerated with the next seed.
    """
    _require_seed(seed)
    for attempt in range(max_regenerations):
        rng = np.random.default_rng(seed + attempt if isinstance(seed, int) else seed)
        x_true = rng.standard_normal(spec.p)
        As = rng.standard_normal((spec.n, spec.rows, spec.p))
        bs = np.einsum("nij,j->ni", As, x_true) + spec.noise_std * rng.standard_normal((spec.n, spec.rows))
        A = As.reshape(-1, spec.p)
        if np.linalg.matrix_rank(A) == spec.p:
            break
        log.info("stacked least-squares system is rank deficient; regenerating with seed %s", seed + attempt + 1)
    else:
        raise RuntimeError("could not draw a full-rank least-squares instance")
    b = bs.reshape(-1)
    x_star = np.linalg.solve(A.T @ A, A.T @ b)
    grad = A.T @ (A @ x_star - b)
    if np.linalg.norm(grad) > 1e-10 * max(1.0, np.linalg.norm(A.T @ b)):
        # One step of iterative refinement.
        x_star -= np.linalg.solve(A.T @ A, grad)
    objectives = [QuadraticObjective(As[i], bs[i]) for i in range(spec.n)]
    problem = ProblemInstance(objectives, gamma=spec.penalty, eps_schedule=spec.eps_schedule)
    f_star = problem.total_objective(x_star)
    oracle = OracleSolution(x_star=x_star, f_star=f_star, method="stacked normal equations")
    return problem, oracle, x_true


def generate_consensus_instance(n: int, p: int, seed, gamma: float = 1.0, eps_schedule=EpsSchedule()):
    """``f_i(x) = 0.5 ||x - a_i||^2``: the optimum is the mean of the ``a_i``."""
    rng = _require_seed(seed)
    anchors = rng.standard_normal((n, p))
    objectives = [QuadraticObjective(np.eye(p), anchors[i]) for i in range(n)]
    problem = ProblemInstance(objectives, gamma=gamma, eps_schedule=eps_schedule)
    x_star = anchors.mean(axis=0)
    oracle = OracleSolution(x_star, problem.total_objective(x_star), "mean of anchors")
    return problem, oracle, anchors


def _sparse_normal(rng, shape, zero_fraction):
    vals = rng.standard_normal(shape)
    return np.where(rng.random(shape) < zero_fraction, 0.0, vals)


def logistic_kkt_residual(features, labels, mu, x) -> float:
    """Prox-gradient fixed-point residual of the unconstrained l1 problem."""
    obj = LogisticL1Objective(features, labels, mu)
    g = obj.smooth_grad(x)
    return float(np.linalg.norm(x - soft_threshold(x - g, mu)))


def _centralized_l1_logistic(features, labels, mu, tol=1e-8):
    obj = LogisticL1Objective(features, labels, mu)
    p = obj.dim

    # Positive/negative split turns the l1 term into bound constraints.
    def fun(z):
        x = z[:p] - z[p:]
        g = obj.smooth_grad(x)
        return obj.smooth_value(x) + mu * z.sum(), np.concatenate([g + mu, -g + mu])

    res = minimize(fun, np.zeros(2 * p), jac=True, method="L-BFGS-B", bounds=[(0, None)] * (2 * p),
                   options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-12})
    x = res.x[:p] - res.x[p:]
    # Polish with proximal gradient for a tight fixed-point residual.
    polish = fista(
        obj.smooth_value,
        obj.smooth_grad,
        lambda v, step: soft_threshold(v, step * mu),
        lambda z: mu * float(np.abs(z).sum()),
        obj.lipschitz,
        x,
        FistaConfig(max_inner_iters=20000, inner_tolerance=tol * 1e-2, raise_on_budget=False),
    )
    return polish.x, obj


def generate_logistic_instance(spec: LogisticSpec, seed):
    """Sparse l1 logistic regression with private ball constraints.

    Features and ``x_true`` have ``zero_fraction`` zero entries (exactly
    ``round(zero_fraction * p)`` for ``x_true``); labels are
    ``sign(a^T x_true + delta)`` with ``delta ~ N(0, noise_variance)``.
    The l1 weight is ``mu_fraction * mu_max`` split evenly across agents.
    Ball bounds are ``r_i = (1 + xi_i) ||x_c||^2`` with ``xi_i ~ U[0, 1]``
    so the unconstrained optimum ``x_c`` stays feasible.

    Returns ``(problem, oracle, x_true)``.
    """
    rng = _require_seed(seed)
    n, m, p = spec.n, spec.samples, spec.p
    x_true = rng.standard_normal(p)
    zeros = rng.choice(p, size=int(round(spec.zero_fraction * p)), replace=False)
    x_true[zeros] = 0.0
    feats = _sparse_normal(rng, (n, m, p), spec.zero_fraction)
    noise = np.sqrt(spec.noise_variance) * rng.standard_normal((n, m))
    labels = np.sign(np.einsum("nij,j->ni", feats, x_true) + noise)
    labels[labels == 0] = 1.0
    all_feats = feats.reshape(-1, p)
    all_labels = labels.reshape(-1)
    mu = spec.mu_fraction * mu_max(all_feats, all_labels)

    x_c, central = _centralized_l1_logistic(all_feats, all_labels, mu)
    kkt = logistic_kkt_residual(all_feats, all_labels, mu, x_c)
    if kkt > 1e-8:
        log.warning("centralized logistic oracle KKT residual %.2e exceeds 1e-8", kkt)
    xi = rng.uniform(0.0, 1.0, size=n)
    radii = (1.0 + xi) * max(float(x_c @ x_c), 1e-12)
    objectives = [
        LogisticL1Objective(feats[i], labels[i], mu / n, Ball(float(radii[i])), fista_cfg=spec.fista)
        for i in range(n)
    ]
    problem = ProblemInstance(objectives, gamma=spec.gamma, eps_schedule=spec.eps_schedule)
    f_star = problem.total_objective(x_c)
    # Dual optimum: -lam_i is a subgradient of f_i at x_c and the lam_i sum to
    # zero. On zero coordinates the l1 subgradient balances the smooth part.
    total_grad = central.smooth_grad(x_c)
    sub = np.where(x_c != 0, np.sign(x_c), np.clip(-total_grad / mu, -1.0, 1.0) if mu > 0 else 0.0)
    lam_star = np.array([-(obj.smooth_grad(x_c) + (mu / n) * sub) for obj in objectives])
    oracle = OracleSolution(x_c, f_star, "L-BFGS-B on split l1 + proximal polish", lambda_star=lam_star)
    return problem, oracle, x_true
