"""Collaborative learning on top of an averaging-agreement oracle.

The main loop (:func:`learn_run`) alternates three steps per iteration t:
draw a batched stochastic gradient per node, agree on the gradients with
agreement level ``N(t) = ceil(log2 t)``, take a fixed-rate step, then
re-contract the parameters with one unit of agreement.  All honest nodes
start from the same seeded parameter vector, and the returned iterate is
drawn uniformly from the executed ones with the same common seed.

:func:`hom_learn_run` is the cheaper loop for identical local losses: it
skips the gradient agreement entirely (one averaging call per iteration
instead of two).

:func:`avg_via_learn` runs the reduction in the opposite direction:
averaging a vector family by learning quadratic losses centered on it.

Stochastic gradients are the true gradient plus seeded Gaussian noise with
per-sample covariance ``(sigma^2 / d) I``, so the per-sample second moment
of the noise is exactly ``sigma^2`` and a batch of size b has noise moment
``sigma^2 / b``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import protocols
from .adversaries import NullAdversary
from .aggregation import FIRST_LEX
from .errors import ConfigurationError
from .netsim import AdversaryPolicy, derive_seed, substream
from .vectors import diameter_l2, family_mean

__all__ = [
    "LossModel",
    "QuadraticModel",
    "LinearRegressionModel",
    "make_linear_regression_model",
    "batch_schedule",
    "agreement_level",
    "stochastic_gradient",
    "AveragingOracle",
    "ExactMeanAveraging",
    "ProtocolAveraging",
    "LearnConfig",
    "IterationStats",
    "LearnResult",
    "learn_run",
    "hom_learn_run",
    "avg_via_learn",
    "conservative_budget",
]

# Substream tags under the learn seed.
_T_INIT = 31
_T_SAMPLE = 32
_T_STAR = 33
_T_AVG_GRAD = 34
_T_AVG_PARAM = 35


class LossModel(ABC):
    """Per-node local losses with the constants the guarantees depend on.

    ``lipschitz`` bounds the gradient's Lipschitz constant, ``heterogeneity``
    the largest gradient difference between two nodes at the same parameter,
    and ``noise_scale`` the per-sample standard deviation available to the
    stochastic gradient oracle.
    """

    n_nodes: int
    dim: int
    lipschitz: float
    heterogeneity: float
    noise_scale: float

    @abstractmethod
    def true_gradient(self, node: int, theta: np.ndarray) -> np.ndarray:
        """Exact local gradient of node's loss at theta (0-based node index)."""

    @abstractmethod
    def loss_value(self, node: int, theta: np.ndarray) -> float:
        """Local loss at theta; non-negative by construction."""

    def loss_bound(self, theta1: np.ndarray) -> float:
        """Computable bound on every local loss at the common start point."""
        return max(self.loss_value(j, theta1) for j in range(self.n_nodes))

    @property
    def is_homogeneous(self) -> bool:
        return self.heterogeneity == 0.0

    def mean_loss(self, theta: np.ndarray) -> float:
        return sum(self.loss_value(j, theta) for j in range(self.n_nodes)) / self.n_nodes

    def mean_gradient(self, theta: np.ndarray) -> np.ndarray:
        acc = np.zeros(self.dim)
        for j in range(self.n_nodes):
            acc += self.true_gradient(j, theta)
        return acc / self.n_nodes


class QuadraticModel(LossModel):
    """Losses ``0.5 * |theta - c_j|^2`` around per-node centers.

    Gradient ``theta - c_j``; Lipschitz constant 1; heterogeneity equal to
    the centers' diameter; common minimizer structure makes every quantity
    available in closed form.
    """

    def __init__(self, centers, noise_scale: float = 0.0):
        centers = np.asarray(centers, dtype=float)
        if centers.ndim == 1:
            centers = centers.reshape(-1, 1)
        if centers.ndim != 2 or centers.shape[0] == 0:
            raise ConfigurationError("centers must form a non-empty (h, d) array")
        if noise_scale < 0:
            raise ConfigurationError("noise scale must be non-negative")
        self.centers = centers
        self.n_nodes = centers.shape[0]
        self.dim = centers.shape[1]
        self.lipschitz = 1.0
        self.heterogeneity = diameter_l2(centers)
        self.noise_scale = float(noise_scale)

    def true_gradient(self, node, theta):
        return np.asarray(theta, dtype=float) - self.centers[node]

    def loss_value(self, node, theta):
        diff = np.asarray(theta, dtype=float) - self.centers[node]
        return 0.5 * float(diff @ diff)


class LinearRegressionModel(LossModel):
    """Least squares on a shared feature matrix with per-node targets.

    Node j's loss is ``|A(theta - w_j)|^2 / (2m)``; the shared second-moment
    matrix keeps the gradient differences constant in theta, so the
    heterogeneity constant is finite and computable.
    """

    def __init__(self, features, weights, noise_scale: float = 0.0):
        A = np.asarray(features, dtype=float)
        W = np.asarray(weights, dtype=float)
        if A.ndim != 2 or W.ndim != 2 or A.shape[1] != W.shape[1]:
            raise ConfigurationError("features (m, d) and weights (h, d) must align")
        if noise_scale < 0:
            raise ConfigurationError("noise scale must be non-negative")
        self.features = A
        self.weights = W
        self.n_nodes = W.shape[0]
        self.dim = W.shape[1]
        m = A.shape[0]
        self.second_moment = A.T @ A / m
        self.lipschitz = float(np.linalg.eigvalsh(self.second_moment).max())
        grads = W @ self.second_moment.T
        self.heterogeneity = diameter_l2(grads)
        self.noise_scale = float(noise_scale)

    def true_gradient(self, node, theta):
        return self.second_moment @ (np.asarray(theta, dtype=float) - self.weights[node])

    def loss_value(self, node, theta):
        resid = self.features @ (np.asarray(theta, dtype=float) - self.weights[node])
        return float(resid @ resid) / (2 * self.features.shape[0])


def make_linear_regression_model(
    nodes: int,
    dim: int,
    samples: int = 64,
    noise_scale: float = 0.0,
    feature_bound: float = 3.0,
    weight_spread: float = 1.0,
    seed: int = 0,
) -> LinearRegressionModel:
    """Synthesize a least-squares model with clipped features.

    Clipping the feature entries to ``[-feature_bound, feature_bound]``
    keeps the smoothness constant computable and moderate.
    """
    rng = substream(seed, 91)
    features = np.clip(rng.standard_normal((samples, dim)), -feature_bound, feature_bound)
    weights = weight_spread * rng.standard_normal((nodes, dim))
    return LinearRegressionModel(features, weights, noise_scale)


def batch_schedule(t: int, t1: int) -> int:
    """Batch size at iteration t: grows linearly then caps at t1."""
    if t < 1 or t1 < 1:
        raise ConfigurationError(f"need t >= 1 and t1 >= 1, got t={t}, t1={t1}")
    return min(t, t1)


def agreement_level(t: int) -> int:
    """ceil(log2 t): the agreement parameter used at iteration t."""
    if t < 1:
        raise ConfigurationError(f"need t >= 1, got {t}")
    return (t - 1).bit_length()


def stochastic_gradient(model: LossModel, node: int, theta: np.ndarray, batch: int, rng) -> np.ndarray:
    """Mean of ``batch`` noisy per-sample gradients.

    Unbiased for the true gradient; per-sample noise is Gaussian with
    covariance ``(sigma^2 / d) I``, so the batch noise second moment is
    ``sigma^2 / batch`` exactly in expectation.
    """
    if batch < 1:
        raise ConfigurationError(f"batch size must be positive, got {batch}")
    grad = model.true_gradient(node, theta)
    if model.noise_scale == 0.0:
        return grad
    per_coord = model.noise_scale / math.sqrt(model.dim)
    noise = rng.normal(0.0, per_coord, size=(batch, model.dim)).mean(axis=0)
    return grad + noise


class AveragingOracle(ABC):
    """How the learning loops agree on a vector family."""

    averaging_constant: float

    @abstractmethod
    def run(self, family: np.ndarray, N: int, seed: int, adversary: AdversaryPolicy) -> np.ndarray:
        """Return the family after agreement at level N."""


class ExactMeanAveraging(AveragingOracle):
    """Idealized oracle: every node receives the exact mean (zero diameter)."""

    averaging_constant = 0.0

    def run(self, family, N, seed, adversary):
        family = np.asarray(family, dtype=float)
        return np.tile(family.mean(axis=0), (family.shape[0], 1))


class ProtocolAveraging(AveragingOracle):
    """Agreement through an actual protocol run at a feasible configuration."""

    def __init__(self, cfg: protocols.ProtocolConfig, tie_mode: str = FIRST_LEX):
        self.cfg = cfg
        self.tie_mode = tie_mode
        self.averaging_constant = cfg.averaging_constant

    def run(self, family, N, seed, adversary):
        return protocols.run_avg(
            self.cfg, family, N, adversary, seed=seed, tie_mode=self.tie_mode
        ).output


@dataclass(frozen=True)
class LearnConfig:
    """Knobs for a learning run.

    ``eta`` defaults to the rate the guarantee requires (``delta / (12 L)``
    for the heterogeneous loop, ``1 / (2 L)`` for the homogeneous one).
    ``batch_cap`` defaults to ``ceil(sigma^2 / delta^2)``, which caps the
    batch noise at ``delta``.  One seed drives everything: the common
    initial parameters, per-node sampling streams, the per-call protocol
    seeds, and the final uniform iterate draw.
    """

    delta: float
    iterations: int
    avg: AveragingOracle
    seed: int = 0
    eta: Optional[float] = None
    batch_cap: Optional[int] = None
    init_scale: float = 1.0
    return_last: bool = False


@dataclass(frozen=True)
class IterationStats:
    """Per-iteration trace record."""

    t: int
    batch: int
    agreement: int
    delta2_theta: float
    delta2_grad: float
    mean_step_half: float  # |mean(theta at t+1/2) - mean(theta at t+1)|
    effective_grad: np.ndarray  # (mean(theta_t) - mean(theta_{t+1})) / eta
    effective_grad_norm: float
    loss_at_mean: float
    grad_norm_at_mean: float


@dataclass(frozen=True)
class LearnResult:
    theta_star: np.ndarray
    star: int
    eta: float
    batch_cap: int
    families: List[np.ndarray]  # theta families for t = 1 .. T+1
    trace: List[IterationStats]


def _default_batch_cap(cfg: LearnConfig, model: LossModel) -> int:
    if cfg.batch_cap is not None:
        if cfg.batch_cap < 1:
            raise ConfigurationError("batch cap must be positive")
        return cfg.batch_cap
    if model.noise_scale == 0.0:
        return 1
    return max(1, math.ceil(model.noise_scale**2 / cfg.delta**2))


def _common_init(cfg: LearnConfig, model: LossModel) -> np.ndarray:
    theta1 = cfg.init_scale * substream(cfg.seed, _T_INIT).standard_normal(model.dim)
    return np.tile(theta1, (model.n_nodes, 1))


def _iterate(cfg, model, adversary, eta, agree_gradients: bool) -> LearnResult:
    if cfg.iterations < 1:
        raise ConfigurationError("need at least one iteration")
    t1 = _default_batch_cap(cfg, model)
    theta = _common_init(cfg, model)
    families = [theta.copy()]
    trace: List[IterationStats] = []
    h = model.n_nodes

    for t in range(1, cfg.iterations + 1):
        b = batch_schedule(t, t1)
        grads = np.empty_like(theta)
        for j in range(h):
            rng = substream(cfg.seed, _T_SAMPLE, t, j)
            grads[j] = stochastic_gradient(model, j, theta[j], b, rng)

        level = agreement_level(t)
        if agree_gradients:
            gamma = cfg.avg.run(grads, level, derive_seed(cfg.seed, _T_AVG_GRAD, t), adversary)
        else:
            gamma = grads
        half = theta - eta * gamma
        new_theta = cfg.avg.run(half, 1, derive_seed(cfg.seed, _T_AVG_PARAM, t), adversary)

        mean_t = family_mean(theta)
        mean_next = family_mean(new_theta)
        eff = (mean_t - mean_next) / eta
        trace.append(
            IterationStats(
                t=t,
                batch=b,
                agreement=level if agree_gradients else 0,
                delta2_theta=diameter_l2(theta),
                delta2_grad=diameter_l2(grads),
                mean_step_half=float(np.linalg.norm(family_mean(half) - mean_next)),
                effective_grad=eff,
                effective_grad_norm=float(np.linalg.norm(eff)),
                loss_at_mean=model.mean_loss(mean_t),
                grad_norm_at_mean=float(np.linalg.norm(model.mean_gradient(mean_t))),
            )
        )
        theta = new_theta
        families.append(theta.copy())

    star = int(substream(cfg.seed, _T_STAR).integers(1, cfg.iterations + 1))
    chosen = families[-1] if cfg.return_last else families[star - 1]
    return LearnResult(
        theta_star=chosen.copy(),
        star=star,
        eta=eta,
        batch_cap=t1,
        families=families,
        trace=trace,
    )


def learn_run(cfg: LearnConfig, model: LossModel, adversary: Optional[AdversaryPolicy] = None) -> LearnResult:
    """Heterogeneous-data learning loop with gradient and parameter agreement.

    Requires ``0 < delta < 3``; the learning rate is pinned to
    ``delta / (12 L)``.  Per iteration: batched per-node gradients, gradient
    agreement at level ``ceil(log2 t)``, one descent step, then parameter
    agreement at level 1.  The returned family is the iterate at a common
    uniformly-drawn index.
    """
    if not (0 < cfg.delta < 3):
        raise ConfigurationError(f"delta must lie in (0, 3), got {cfg.delta}")
    eta = cfg.delta / (12 * model.lipschitz)
    if cfg.eta is not None:
        if not math.isclose(cfg.eta, eta, rel_tol=1e-12):
            raise ConfigurationError(
                f"the heterogeneous loop requires eta = delta / (12 L) = {eta}; got {cfg.eta}"
            )
        eta = cfg.eta
    adversary = adversary or NullAdversary()
    return _iterate(cfg, model, adversary, eta, agree_gradients=True)


def hom_learn_run(cfg: LearnConfig, model: LossModel, adversary: Optional[AdversaryPolicy] = None) -> LearnResult:
    """Homogeneous-data loop: local gradient step, then parameter agreement.

    The guarantee needs identical local losses, so a heterogeneous model is
    rejected.  ``eta`` may be chosen freely up to ``1 / (2 L)``.
    """
    if not model.is_homogeneous:
        raise ConfigurationError(
            "the homogeneous loop requires identical local losses "
            f"(heterogeneity constant is {model.heterogeneity:.6g})"
        )
    if cfg.delta <= 0:
        raise ConfigurationError(f"delta must be positive, got {cfg.delta}")
    cap = 1 / (2 * model.lipschitz)
    eta = cfg.eta if cfg.eta is not None else cap
    if eta <= 0 or eta > cap * (1 + 1e-12):
        raise ConfigurationError(f"eta must lie in (0, 1/(2L)] = (0, {cap:.6g}], got {eta}")
    adversary = adversary or NullAdversary()
    return _iterate(cfg, model, adversary, eta, agree_gradients=False)


def conservative_budget(
    delta: float,
    lipschitz: float,
    heterogeneity: float,
    averaging_constant: float,
    n_nodes: int,
    noise_scale: float,
    loss_bound: float,
) -> dict:
    """Evaluate the worst-case iteration-budget chain for the heterogeneous loop.

    This is the fully constructive budget under which the end-state
    guarantee provably holds for every admissible adversary and loss.  It
    is astronomically conservative (documentation only); practical runs use
    a user-set budget with trace-based verification instead.

    Returns a dict with the intermediate constants and ``iterations``, the
    final budget.  Requires strictly positive heterogeneity and averaging
    constants (the chain divides by both).
    """
    if not (0 < delta < 3):
        raise ConfigurationError(f"delta must lie in (0, 3), got {delta}")
    K, C, L, h, sigma = heterogeneity, averaging_constant, lipschitz, n_nodes, noise_scale
    if K <= 0 or C <= 0:
        raise ConfigurationError("the budget chain needs heterogeneity > 0 and averaging constant > 0")
    eta = delta / (12 * L)
    nu = delta / 6
    abar = max(1.0, sigma)
    A = 32 * abar**2 * C**2 * L**2 + 6 * abar * L**2 + 12 * abar * C**2 / eta**2 + 192 * abar**2 * C**2 * L**2
    B = 32 * abar**2 * C**2 * h + 6 * abar / h + 192 * abar**2 * C**2 * h

    # Noise must drop to s_target before the averaged bounds settle, which
    # pins the batch cap (batch b gives noise sigma / sqrt(b)).
    s_target = min(nu, nu * C**2 * K**2 / (8 * B))
    batch_cap = 1 if sigma == 0 else math.ceil((sigma / s_target) ** 2)
    t1 = batch_cap

    # Spread recursion u_{t+1} <= rho_t u_t + d_t, contracting at 3/4 once
    # t exceeds t0; D bounds t^2 u_t for all t.
    t0 = max(1, math.ceil((32 * abar * L**2 * eta**2) ** (2 / 3)))
    v = 0.0
    v_by_t = [0.0]
    for t in range(1, t0 + 1):
        sig_t = sigma / math.sqrt(min(t, batch_cap)) if sigma else 0.0
        alpha_t = max(1 / math.sqrt(t), sig_t)
        rho_t = 0.5 + 8 * abar * L**2 * eta**2 / (alpha_t * t**2)
        d_t = (eta**2 / (2 * t**2)) * ((1 + alpha_t) * K**2 + 16 * abar * h * sig_t**2 / alpha_t)
        v = rho_t * v + d_t
        v_by_t.append(v)
    G = 8 * eta**2 * ((1 + abar) * K**2 + 16 * h * abar**2)
    sup_sq_rho = max(t**2 * 0.75**t for t in range(1, 200))
    sup_sq_sqrho = max(t**2 * 0.75 ** (t / 2) for t in range(1, 400))
    d_plus_t0 = (eta**2 / (2 * t0**2)) * ((1 + abar) * K**2 + 16 * h * abar**2)
    D = max(
        max(s**2 * v_by_t[s] for s in range(1, t0 + 1)),
        G + sup_sq_rho * v_by_t[t0] + 4 * sup_sq_sqrho * d_plus_t0,
    )

    t2 = 1 / nu**2
    t3 = (12 * abar / nu) ** (2 / 3)
    t4 = (8 * A * D / (nu * C**2 * K**2)) ** (2 / 3)
    t5 = max(t1, t2, t3, t4)
    E = (1 + abar) ** 2 * (1 + 12 * abar) * C**2 * K**2 + A * D + B * sigma
    t6 = t5 * E / (nu * C**2 * K**2)
    t7 = loss_bound / (nu**2 * eta * C**2 * K**2)
    t8 = max(t6, t7)
    t9 = D * math.pi**2 / (6 * delta**2)
    return {
        "eta": eta,
        "batch_cap": batch_cap,
        "A": A,
        "B": B,
        "D": D,
        "E": E,
        "stages": (t1, t2, t3, t4, t5, t6, t7, t8, t9),
        "iterations": math.ceil(max(t8, t9)),
    }


def avg_via_learn(
    family,
    N: int,
    avg: AveragingOracle,
    iterations: int,
    seed: int = 0,
    adversary: Optional[AdversaryPolicy] = None,
) -> tuple[LearnResult, float]:
    """Averaging agreement obtained by learning quadratic losses.

    Builds losses ``0.5 * |theta - x_j|^2`` around the family (smoothness 1,
    heterogeneity equal to the family diameter) and runs the learning loop
    with ``delta = min(1, diameter / 2**N)``.  Returns the learn result and
    the delta used.  An already-agreeing family is returned unchanged.
    """
    X = np.asarray(family, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    spread = diameter_l2(X)
    if spread == 0.0:
        return (
            LearnResult(
                theta_star=X.copy(), star=0, eta=0.0, batch_cap=1, families=[X.copy()], trace=[]
            ),
            0.0,
        )
    delta = min(1.0, spread / 2**N)
    model = QuadraticModel(X, noise_scale=0.0)
    cfg = LearnConfig(delta=delta, iterations=iterations, avg=avg, seed=seed)
    return learn_run(cfg, model, adversary), delta
