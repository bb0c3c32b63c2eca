"""Per-agent subproblem solvers and proximal primitives.

Every local objective exposes ``argmin_augmented(center, linear, rho)``,
the minimizer over the agent's constraint set of::

    f(x) + linear^T x + (rho / 2) ||x - center||^2

The ADMM x-update is the case ``center = y``, ``linear = lambda``,
``rho = gamma``; the decentralized ADMM baselines reuse it with other
centers and weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.special import expit

__all__ = [
    "InnerSolverError",
    "Unconstrained",
    "Ball",
    "Box",
    "FistaConfig",
    "FistaResult",
    "QuadraticObjective",
    "LogisticL1Objective",
    "soft_threshold",
    "project_ball",
    "prox_l1_ball",
    "solve_quadratic_prox",
    "fista",
    "fista_solve",
    "mu_max",
]


class InnerSolverError(RuntimeError):
    def __init__(self, message: str, residual: float, x: np.ndarray | None = None):
        super().__init__(message)
        self.residual = residual
        self.x = x


# Constraint sets -----------------------------------------------------------


@dataclass(frozen=True)
class Unconstrained:
    def project(self, v: np.ndarray) -> np.ndarray:
        return v

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return True

    def prox_l1(self, v: np.ndarray, t: float) -> np.ndarray:
        return soft_threshold(v, t)


@dataclass(frozen=True)
class Ball:
    """``{x : x^T x <= r}``, i.e. a Euclidean ball of radius ``sqrt(r)``."""

    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"ball bound must be positive, got {self.r}")

    def project(self, v: np.ndarray) -> np.ndarray:
        return project_ball(v, self.r)

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return float(x @ x) <= self.r * (1 + tol)

    def prox_l1(self, v: np.ndarray, t: float) -> np.ndarray:
        return prox_l1_ball(v, t, self.r)


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, self.lower, self.upper)

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def prox_l1(self, v: np.ndarray, t: float) -> np.ndarray:
        # Separable: clipping the scalar prox is exact.
        return np.clip(soft_threshold(v, t), self.lower, self.upper)


# Proximal primitives -------------------------------------------------------


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Componentwise ``sign(v) * max(|v| - t, 0)``."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def project_ball(v: np.ndarray, r: float) -> np.ndarray:
    """Project onto ``{x : ||x||^2 <= r}``."""
    v = np.asarray(v, dtype=float)
    sq = float(v @ v)
    if sq <= r:
        return v
    return v * math.sqrt(r / sq)


def prox_l1_ball(v: np.ndarray, t: float, r: float, method: str = "exact") -> np.ndarray:
    """Prox of ``t ||x||_1`` restricted to ``||x||^2 <= r``.

    ``exact`` solves the KKT system through the ball multiplier ``nu``:
    stationarity gives ``x = S_t(v) / (1 + nu)``, and complementary
    slackness fixes ``nu`` in closed form. ``compose`` soft-thresholds and
    then projects; for a Euclidean ball the two agree.
    """
    if method == "compose":
        return project_ball(soft_threshold(v, t), r)
    if method != "exact":
        raise ValueError(f"unknown prox method {method!r}")
    s = soft_threshold(v, t)
    norm = float(np.linalg.norm(s))
    rho = math.sqrt(r)
    nu = max(norm / rho - 1.0, 0.0) if norm > 0 else 0.0
    return s / (1.0 + nu)


# FISTA ---------------------------------------------------------------------


@dataclass(frozen=True)
class FistaConfig:
    max_inner_iters: int = 500
    inner_tolerance: float = 1e-8
    restart: bool = True
    raise_on_budget: bool = True

    def __post_init__(self):
        if self.max_inner_iters <= 0 or self.inner_tolerance <= 0:
            raise ValueError("FISTA budget and tolerance must be positive")


@dataclass
class FistaResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    restarts: int = 0
    objective_trace: list[float] = field(default_factory=list, repr=False)


def fista(
    smooth_value,
    smooth_grad,
    prox,
    nonsmooth_value,
    L: float,
    x0: np.ndarray,
    cfg: FistaConfig = FistaConfig(),
    track_objective: bool = False,
) -> FistaResult:
    """Accelerated proximal gradient with function-value restarts.

    ``prox(v, step)`` must return the prox of ``step * g`` at ``v``. The
    stopping measure is the gradient-mapping norm ``L ||x+ - z||`` at the
    extrapolated point ``z``.
    """
    step = 1.0 / L
    x = prox(np.asarray(x0, dtype=float), 0.0)
    z = x.copy()
    t = 1.0
    obj = smooth_value(x) + nonsmooth_value(x)
    trace = [obj] if track_objective else []
    restarts = 0
    residual = math.inf
    for it in range(1, cfg.max_inner_iters + 1):
        x_new = prox(z - step * smooth_grad(z), step)
        residual = L * float(np.linalg.norm(x_new - z))
        obj_new = smooth_value(x_new) + nonsmooth_value(x_new)
        if cfg.restart and obj_new > obj and t > 1.0:
            # Momentum overshoot: restart from the last accepted point.
            restarts += 1
            t = 1.0
            z = x.copy()
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, obj, t = x_new, obj_new, t_new
        if track_objective:
            trace.append(obj)
        if residual <= cfg.inner_tolerance:
            return FistaResult(x, it, residual, True, restarts, trace)
    if cfg.raise_on_budget:
        raise InnerSolverError(
            f"FISTA hit its {cfg.max_inner_iters}-iteration budget (residual {residual:.3e})", residual, x
        )
    return FistaResult(x, cfg.max_inner_iters, residual, False, restarts, trace)


# Objectives ----------------------------------------------------------------


class QuadraticObjective:
    """``f(x) = 0.5 ||A x - b||^2`` with cached Cholesky factors per ``rho``."""

    def __init__(self, A: np.ndarray, b: np.ndarray, constraint=None, fista_cfg: FistaConfig | None = None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).ravel()
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError(f"A has {self.A.shape[0]} rows but b has {self.b.shape[0]} entries")
        self.constraint = constraint or Unconstrained()
        self.fista_cfg = fista_cfg or FistaConfig(max_inner_iters=5000, inner_tolerance=1e-10)
        self.AtA = self.A.T @ self.A
        self.Atb = self.A.T @ self.b
        self._factors: dict[float, tuple] = {}
        self.lipschitz = float(np.linalg.eigvalsh(self.AtA)[-1]) if self.dim else 0.0
        self.last_inner_iterations = 0

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def value(self, x: np.ndarray) -> float:
        r = self.A @ x - self.b
        return 0.5 * float(r @ r)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.AtA @ x - self.Atb

    def factor(self, rho: float):
        fac = self._factors.get(rho)
        if fac is None:
            fac = sla.cho_factor(self.AtA + rho * np.eye(self.dim))
            self._factors[rho] = fac
        return fac

    def argmin_augmented(self, center, linear, rho, x0=None) -> np.ndarray:
        if isinstance(self.constraint, Unconstrained):
            self.last_inner_iterations = 0
            return solve_quadratic_prox(self, center, linear, rho)
        center = np.asarray(center, dtype=float)
        linear = np.asarray(linear, dtype=float)
        res = fista(
            lambda x: self.value(x) + linear @ x + 0.5 * rho * float((x - center) @ (x - center)),
            lambda x: self.gradient(x) + linear + rho * (x - center),
            lambda v, step: self.constraint.project(v),
            lambda x: 0.0,
            self.lipschitz + rho,
            center if x0 is None else x0,
            self.fista_cfg,
        )
        self.last_inner_iterations = res.iterations
        return res.x


def solve_quadratic_prox(obj: QuadraticObjective, y, lam, gamma) -> np.ndarray:
    """``x = (A^T A + gamma I)^{-1} (A^T b + gamma y - lam)``."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    rhs = obj.Atb + gamma * y - lam
    if not np.all(np.isfinite(rhs)):
        raise FloatingPointError("non-finite input to the quadratic prox")
    return sla.cho_solve(obj.factor(gamma), rhs)


class LogisticL1Objective:
    """``sum_j log(1 + exp(-y_j a_j^T x)) + mu ||x||_1`` over a constraint set."""

    def __init__(self, features, labels, mu: float, constraint=None, fista_cfg: FistaConfig | None = None):
        self.features = np.atleast_2d(np.asarray(features, dtype=float))
        self.labels = np.asarray(labels, dtype=float).ravel()
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if mu < 0:
            raise ValueError(f"mu must be nonnegative, got {mu}")
        self.mu = float(mu)
        self.constraint = constraint or Unconstrained()
        self.fista_cfg = fista_cfg or FistaConfig()
        # Rows scaled by their label: z = y_j a_j.
        self._Z = self.features * self.labels[:, None]
        if self.features.shape[0]:
            self.lipschitz = float(np.linalg.norm(self.features, 2) ** 2) / 4.0
        else:
            self.lipschitz = 0.0
        self.last_inner_iterations = 0
        self.last_residual = 0.0

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def smooth_value(self, x: np.ndarray) -> float:
        return float(np.logaddexp(0.0, -(self._Z @ x)).sum())

    def smooth_grad(self, x: np.ndarray) -> np.ndarray:
        return -self._Z.T @ expit(-(self._Z @ x))

    def value(self, x: np.ndarray) -> float:
        return self.smooth_value(x) + self.mu * float(np.abs(x).sum())

    def argmin_augmented(self, center, linear, rho, x0=None) -> np.ndarray:
        res = fista_solve(self, center, linear, rho, self.fista_cfg, x0=x0)
        self.last_inner_iterations = res.iterations
        self.last_residual = res.residual
        return res.x


def fista_solve(
    obj: LogisticL1Objective,
    y: np.ndarray,
    lam: np.ndarray,
    gamma: float,
    cfg: FistaConfig = FistaConfig(),
    x0: np.ndarray | None = None,
) -> FistaResult:
    """Minimize logistic + mu ||x||_1 + lam^T (x - y) + gamma/2 ||x - y||^2 over the set."""
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)

    def value(x):
        d = x - y
        return obj.smooth_value(x) + float(lam @ d) + 0.5 * gamma * float(d @ d)

    def grad(x):
        return obj.smooth_grad(x) + lam + gamma * (x - y)

    return fista(
        value,
        grad,
        lambda v, step: obj.constraint.prox_l1(v, step * obj.mu),
        lambda x: obj.mu * float(np.abs(x).sum()),
        obj.lipschitz + gamma,
        y - lam / gamma if x0 is None else x0,
        cfg,
    )


def mu_max(features: np.ndarray, labels: np.ndarray) -> float:
    """Smallest l1 weight for which ``x = 0`` minimizes the total logistic loss.

    Equals ``|| grad at 0 ||_inf = || 0.5 * sum_j y_j a_j ||_inf``.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    labels = np.asarray(labels, dtype=float).ravel()
    if features.shape[0] == 0:
        raise ValueError("mu_max needs at least one sample")
    return float(np.abs(0.5 * (labels[:, None] * features).sum(axis=0)).max())
