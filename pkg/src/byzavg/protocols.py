"""Protocol configurations and the iterated averaging-agreement protocols.

A protocol configuration fixes ``(n, f, q)`` together with a contraction
parameter: the per-round diameter shrink factor is ``1 - eps_tilde``.  Two
variants are supported:

* ``mda``: requires ``n > 6f``; per round each node averages the
  minimal-diameter (q-f)-subfamily of the q vectors it collected.
* ``rbtm``: requires ``n > 3f``; per round each node applies the
  coordinate-wise trimmed mean to the vectors delivered under
  reliable-broadcast witness constraints, with ``q = n - f``.

``run_avg`` iterates the variant's rule for the variant's round count and
guarantees, against any validating adversary at a feasible configuration,

    diameter(out) <= diameter(in) / 2**N      (agreement clause)
    |mean(out) - mean(in)| <= C * diameter(in)  (averaging clause)

where ``C`` is the configuration's averaging constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

import numpy as np

from . import netsim
from .aggregation import FIRST_LEX, MdaRule, TrimmedMeanRule
from .errors import ConfigurationError, InfeasibleConfigError
from .netsim import MDA_QUORUM, RB_WITNESS, SimConfig
from .vectors import diameter_cw, diameter_cw_norm, diameter_l2, family_mean

__all__ = [
    "MDA",
    "RBTM",
    "ProtocolConfig",
    "derive_mda_config",
    "derive_rbtm_config",
    "mda_rounds",
    "rbtm_rounds",
    "run_avg",
    "AvgRun",
    "RoundStats",
    "BoundCheck",
    "check_avg_bounds",
    "holds",
    "mean_drift_constant",
]

MDA = "mda"
RBTM = "rbtm"

#: Stand-in for an unbounded slack parameter when f = 0 (any value works).
_F0_EPSILON = 1e9


def holds(lhs: float, rhs: float, rel: float = 1e-9, abs_tol: float = 1e-12) -> bool:
    """Inequality check ``lhs <= rhs`` with the package-wide tolerance."""
    return lhs <= rhs * (1.0 + rel) + abs_tol


@dataclass(frozen=True)
class ProtocolConfig:
    """A feasible averaging-agreement configuration.

    ``averaging_constant`` is the variant's theoretical bound ``C`` for the
    averaging clause at this configuration.
    """

    variant: str
    n: int
    f: int
    q: int
    epsilon: float
    epsilon_tilde: float
    averaging_constant: float

    def __post_init__(self):
        if self.variant not in (MDA, RBTM):
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.f < 0 or self.h < 1:
            raise ConfigurationError(f"invalid counts n={self.n}, f={self.f}")
        if self.f == 0:
            return
        if self.variant == MDA:
            eps = self.epsilon
            if not (0 < eps < 1):
                raise ConfigurationError(f"mda variant needs 0 < epsilon < 1, got {eps}")
            if self.n * (1 - eps) < (6 + 2 * eps) * self.f - 1e-12:
                raise ConfigurationError(f"n={self.n} too small for epsilon={eps} with f={self.f}")
            bound = (1 + eps) / 2 * self.h + (5 + 3 * eps) / 2 * self.f
            if self.q < bound - 1e-9:
                raise ConfigurationError(f"q={self.q} below the feasible minimum {bound:.6g}")
            if self.q > self.h:
                raise ConfigurationError(f"q={self.q} exceeds h={self.h}")
            expected = 2 * eps / (1 + eps)
        else:
            if self.epsilon <= 0:
                raise ConfigurationError(f"rbtm variant needs epsilon > 0, got {self.epsilon}")
            if self.q != self.n - self.f:
                raise ConfigurationError(f"rbtm variant requires q = n - f, got q={self.q}")
            expected = self.epsilon / (1 + self.epsilon)
        if not math.isclose(self.epsilon_tilde, expected, rel_tol=1e-9):
            raise ConfigurationError(
                f"epsilon_tilde={self.epsilon_tilde} inconsistent with epsilon={self.epsilon}"
            )

    @property
    def h(self) -> int:
        return self.n - self.f

    @property
    def mode(self) -> str:
        return MDA_QUORUM if self.variant == MDA else RB_WITNESS

    def rounds(self, N: int) -> int:
        """Round count realizing agreement level N (0 means the identity)."""
        if N == 0:
            return 0
        if self.variant == MDA:
            return mda_rounds(N, self.epsilon_tilde)
        return rbtm_rounds(N, self.epsilon_tilde, self.h)


def mean_drift_constant(cfg: ProtocolConfig) -> float:
    """Per-round bound on |mean(out) - mean(in)| / diameter(in) for mda."""
    n, f, q, h = cfg.n, cfg.f, cfg.q, cfg.h
    return ((2 * f + h - q) * q + (q - 2 * f) * f) / (h * (q - f))


def derive_mda_config(n: int, f: int, epsilon: Optional[float] = None) -> ProtocolConfig:
    """Strongest feasible mda configuration for (n, f).

    Picks the maximal slack ``epsilon = (n - 6f) / (n + 2f)`` unless an
    override within the feasible range is given, then the minimal quorum
    size the slack allows.

    Raises:
        InfeasibleConfigError: if ``n <= 6f`` (no epsilon exists; an
            explicit attack breaks the protocol there) or the derived
            quorum would exceed the honest count.
    """
    if f < 0 or n <= f:
        raise ConfigurationError(f"need n > f >= 0, got n={n}, f={f}")
    h = n - f
    if f == 0:
        return ProtocolConfig(MDA, n, 0, h, _F0_EPSILON, 1.0, 0.0)
    if n <= 6 * f:
        raise InfeasibleConfigError(
            f"mda infeasible: n={n} <= 6f={6 * f}; minimal-diameter averaging "
            "cannot guarantee averaging agreement there"
        )
    eps_max = Fraction(n - 6 * f, n + 2 * f)
    if epsilon is None:
        eps = eps_max
    else:
        eps = Fraction(epsilon)
        if not (0 < eps < 1) or eps > eps_max:
            raise ConfigurationError(
                f"epsilon override {epsilon} outside feasible range (0, {float(eps_max):.6g}]"
            )
    q = math.ceil(Fraction(1 + eps, 2) * h + Fraction(5 + 3 * eps, 2) * f)
    if q > h:
        raise InfeasibleConfigError(
            f"mda infeasible at n={n}, f={f}, epsilon={float(eps):.6g}: derived q={q} exceeds h={h}"
        )
    eps_tilde = float(2 * eps / (1 + eps))
    constant = ((2 * f + h - q) * q + (q - 2 * f) * f) / (h * (q - f) * eps_tilde)
    return ProtocolConfig(MDA, n, f, q, float(eps), eps_tilde, constant)


def derive_rbtm_config(n: int, f: int, epsilon: Optional[float] = None) -> ProtocolConfig:
    """Strongest feasible rbtm configuration for (n, f).

    Sets ``epsilon = n/f - 3`` (capped at a large finite value when f = 0,
    where the trimmed mean degenerates to the plain mean) and ``q = n - f``.

    Raises:
        InfeasibleConfigError: if ``n <= 3f`` (no algorithm achieves
            averaging agreement there).
    """
    if f < 0 or n <= f:
        raise ConfigurationError(f"need n > f >= 0, got n={n}, f={f}")
    h = n - f
    if f == 0:
        return ProtocolConfig(RBTM, n, 0, n, _F0_EPSILON, 1.0, 0.0)
    if n <= 3 * f:
        raise InfeasibleConfigError(
            f"rbtm infeasible: n={n} <= 3f={3 * f}; no algorithm achieves averaging agreement there"
        )
    eps_max = n / f - 3
    if epsilon is None:
        eps = eps_max
    else:
        eps = float(epsilon)
        if not (0 < eps <= eps_max):
            raise ConfigurationError(
                f"epsilon override {epsilon} outside feasible range (0, {eps_max:.6g}]"
            )
    eps_tilde = eps / (1 + eps)
    constant = 4 * f / math.sqrt(h)
    return ProtocolConfig(RBTM, n, f, n - f, eps, eps_tilde, constant)


def mda_rounds(N: int, eps_tilde: float) -> int:
    """ceil(N ln 2 / eps_tilde) iterations realize agreement level N."""
    if N < 0:
        raise ConfigurationError(f"N must be non-negative, got {N}")
    if not (0 < eps_tilde <= 1):
        raise ConfigurationError(f"eps_tilde must lie in (0, 1], got {eps_tilde}")
    if N == 0:
        return 0
    return math.ceil(N * math.log(2) / eps_tilde)


def rbtm_rounds(N: int, eps_tilde: float, h: int) -> int:
    """ceil(((N+1) ln 2 + ln sqrt(h)) / eps_tilde) iterations."""
    if N < 0:
        raise ConfigurationError(f"N must be non-negative, got {N}")
    if not (0 < eps_tilde <= 1):
        raise ConfigurationError(f"eps_tilde must lie in (0, 1], got {eps_tilde}")
    if h < 1:
        raise ConfigurationError(f"h must be positive, got {h}")
    return math.ceil(((N + 1) * math.log(2) + math.log(math.sqrt(h))) / eps_tilde)


@dataclass(frozen=True)
class RoundStats:
    """Summary statistics recorded after each protocol round.

    ``cw_worst_out``/``cw_worst_in`` are the output and input spreads of the
    coordinate that comes closest to violating the per-round contraction
    bound (so per-coordinate checks stay possible without retaining the
    full spread vectors).
    """

    round_index: int
    delta2: float
    delta_cw2: float
    mean: np.ndarray  # mean of the honest family after this round
    mean_deviation: float  # distance of the current mean from the initial mean
    mean_step: float  # distance of the current mean from the previous round's
    l2_contraction: float  # delta2 ratio vs previous round (0 when both are 0)
    cw_contraction_max: float  # worst per-coordinate spread ratio vs previous round
    cw_worst_out: float
    cw_worst_in: float
    all_honest_quorums: bool


@dataclass(frozen=True)
class AvgRun:
    """Result of one protocol execution: final family plus per-round trace."""

    cfg: ProtocolConfig
    N: int
    seed: int
    rounds: int
    initial: np.ndarray
    output: np.ndarray
    trace: List[RoundStats]
    records: Optional[list] = None  # netsim.RoundRecord per round (full trace)
    families: Optional[List[np.ndarray]] = None  # per-round families (full trace)


def _ratio(num: float, den: float) -> float:
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def _cw_ratio_max(spread_out: np.ndarray, spread_in: np.ndarray) -> float:
    worst = 0.0
    for o, i in zip(spread_out, spread_in):
        worst = max(worst, _ratio(float(o), float(i)))
    return worst


def run_avg(
    cfg: ProtocolConfig,
    family,
    N: int,
    adversary: netsim.AdversaryPolicy,
    seed: int = 0,
    tie_mode: str = FIRST_LEX,
    full_trace: bool = False,
) -> AvgRun:
    """Iterate the variant's rule for the variant's round count.

    ``family`` must contain exactly ``cfg.h`` vectors.  ``N = 0`` runs zero
    rounds (the identity, which meets both clauses with factor 1).  The
    execution is fully deterministic given ``(cfg, family, N, adversary,
    seed)``.
    """
    values = np.asarray(family, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if values.shape[0] != cfg.h:
        raise ConfigurationError(f"family has {values.shape[0]} vectors, config expects h={cfg.h}")

    sim = SimConfig(n=cfg.n, f=cfg.f, q=cfg.q, mode=cfg.mode, seed=seed)
    if cfg.variant == MDA:
        rule = MdaRule(cfg.f, tie_mode)
    else:
        rule = TrimmedMeanRule(cfg.f, record_sources=full_trace)

    total = cfg.rounds(N)
    initial = values.copy()
    mean0 = family_mean(initial)
    prev_mean = mean0
    prev_delta2 = diameter_l2(initial)
    prev_cw = diameter_cw(initial)

    trace: List[RoundStats] = []
    records = [] if full_trace else None
    families = [initial.copy()] if full_trace else None

    shrink = 1.0 - cfg.epsilon_tilde if cfg.f > 0 else 1.0
    current = initial
    for t in range(total):
        current, record = netsim.run_round(sim, current, adversary, rule, round_index=t)
        delta2 = diameter_l2(current)
        cw = diameter_cw(current)
        margins = cw - (shrink * prev_cw * (1.0 + 1e-9) + 1e-12)
        worst_coord = int(margins.argmax())
        mean_t = family_mean(current)
        trace.append(
            RoundStats(
                round_index=t + 1,
                delta2=delta2,
                delta_cw2=float(np.sqrt((cw * cw).sum())),
                mean=mean_t,
                mean_deviation=float(np.linalg.norm(mean_t - mean0)),
                mean_step=float(np.linalg.norm(mean_t - prev_mean)),
                l2_contraction=_ratio(delta2, prev_delta2),
                cw_contraction_max=_cw_ratio_max(cw, prev_cw),
                cw_worst_out=float(cw[worst_coord]),
                cw_worst_in=float(prev_cw[worst_coord]),
                all_honest_quorums=record.all_honest_quorums,
            )
        )
        prev_mean, prev_delta2, prev_cw = mean_t, delta2, cw
        if full_trace:
            records.append(record)
            families.append(current.copy())

    return AvgRun(
        cfg=cfg,
        N=N,
        seed=seed,
        rounds=total,
        initial=initial,
        output=current,
        trace=trace,
        records=records,
        families=families,
    )


@dataclass(frozen=True)
class BoundCheck:
    """One guarantee comparison: ``lhs <= rhs`` up to tolerance."""

    name: str
    lhs: float
    rhs: float
    ok: bool


def _worst_pair(pairs, rel: float) -> BoundCheck:
    """Reduce (lhs, rhs) samples to the single closest-to-violating one."""
    worst = max(pairs, key=lambda p: p[0] - (p[1] * (1 + rel) + 1e-12))
    ok = all(holds(lhs, rhs, rel) for lhs, rhs in pairs)
    return worst[0], worst[1], ok


def check_avg_bounds(run: AvgRun, rel: float = 1e-9) -> List[BoundCheck]:
    """Evaluate every guarantee a protocol run must satisfy.

    Emits the end-to-end agreement and averaging clauses, plus the per-round
    contraction and mean-drift bounds of the run's variant (the round
    closest to violation is the one reported).
    """
    cfg = run.cfg
    d2_in = diameter_l2(run.initial)
    d2_out = diameter_l2(run.output)
    dev = float(np.linalg.norm(family_mean(run.output) - family_mean(run.initial)))
    checks = [
        BoundCheck("diameter-halving", d2_out, d2_in / 2**run.N, holds(d2_out, d2_in / 2**run.N, rel)),
        BoundCheck(
            "averaging-constant",
            dev,
            cfg.averaging_constant * d2_in,
            holds(dev, cfg.averaging_constant * d2_in, rel),
        ),
    ]
    if run.rounds == 0:
        return checks

    shrink = 1.0 - cfg.epsilon_tilde if cfg.f > 0 else 1.0
    if cfg.variant == MDA:
        pairs = [(s.delta2, shrink * prev) for s, prev in _steps_with_prev(run)]
        checks.append(BoundCheck("round-contraction", *_worst_pair(pairs, rel)))
        if cfg.f > 0:
            exact = (4 * cfg.f + cfg.h - cfg.q) / (cfg.q - cfg.f)
            pairs = [(s.delta2, exact * prev) for s, prev in _steps_with_prev(run)]
            checks.append(BoundCheck("round-contraction-exact", *_worst_pair(pairs, rel)))
        drift = mean_drift_constant(cfg)
        pairs = [(s.mean_step, drift * prev) for s, prev in _steps_with_prev(run)]
        checks.append(BoundCheck("round-mean-drift", *_worst_pair(pairs, rel)))
    else:
        pairs = [(s.cw_worst_out, shrink * s.cw_worst_in) for s in run.trace]
        checks.append(BoundCheck("round-contraction", *_worst_pair(pairs, rel)))
        # Every iterate stays in the trim-stable box around the initial mean.
        box = (2 * cfg.f / cfg.h) * diameter_cw_norm(run.initial, 2.0)
        worst_dev = max(s.mean_deviation for s in run.trace)
        checks.append(BoundCheck("mean-in-stable-box", worst_dev, box, holds(worst_dev, box, rel)))
    return checks


def _steps_with_prev(run: AvgRun):
    prev = diameter_l2(run.initial)
    for stats in run.trace:
        yield stats, prev
        prev = stats.delta2
