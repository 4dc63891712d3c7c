"""Named property suites and the independent reference oracles.

Each suite replays one module's invariants on seeded random inputs and
reports per-check results with counterexamples.  The oracles here are
deliberately naive re-implementations (pure-Python loops) kept independent
of the optimized paths they check.

Suites: ``diameters``, ``aggregation``, ``mda-bounds``, ``tm-bounds``,
``attacks``, ``learning``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, List

import numpy as np

from . import netsim, protocols
from .adversaries import (
    CrashSubsetAdversary,
    MimicExtremeAdversary,
    NullAdversary,
    RandomNoiseAdversary,
    lower_bound_attack,
    six_f_attack,
)
from .aggregation import (
    AVERAGE_MINIMA,
    FIRST_LEX,
    CollectedInputs,
    MdaRule,
    mda_aggregate,
    own_filter_average,
    trimmed_mean,
    trimmed_mean_with_sources,
)
from .errors import ConfigurationError
from .learning import (
    ExactMeanAveraging,
    LearnConfig,
    ProtocolAveraging,
    QuadraticModel,
    hom_learn_run,
    learn_run,
    make_linear_regression_model,
    stochastic_gradient,
)
from .netsim import SimConfig, substream, derive_seed, validate_delivery
from .protocols import derive_mda_config, derive_rbtm_config, holds, mda_rounds, run_avg
from .vectors import (
    diameter_cw,
    diameter_cw_norm,
    diameter_l2,
    diameter_lr,
    family_mean,
)

__all__ = [
    "CheckResult",
    "SuiteReport",
    "SUITES",
    "run_suite",
    "mda_oracle",
    "trimmed_mean_oracle",
    "diameter_l2_oracle",
    "collect_mda_stats",
    "collect_tm_stats",
    "replay_lower_bound",
    "replay_six_f",
    "converse_stats",
    "learn_endstate_stats",
    "hom_endstate_stats",
]

RTOL = 1e-9


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def add(self, name: str, ok: bool, detail: str = ""):
        self.checks.append(CheckResult(name, bool(ok), detail))

    def lines(self) -> List[str]:
        out = []
        for c in self.checks:
            mark = "pass" if c.ok else "FAIL"
            line = f"[{mark}] {self.suite}: {c.name}"
            if c.detail and not c.ok:
                line += f"\n       counterexample: {c.detail}"
            out.append(line)
        return out


# ---------------------------------------------------------------------------
# Independent oracles (naive loops; no shared code with the optimized paths)


def diameter_l2_oracle(values) -> float:
    rows = [list(map(float, r)) for r in np.atleast_2d(values)]
    best = 0.0
    for a, b in combinations(rows, 2):
        best = max(best, math.dist(a, b))
    return best


def mda_oracle(values: np.ndarray, f: int, tie_mode: str = FIRST_LEX):
    """Exhaustive minimal-diameter subset selection, pure-Python loops.

    Returns ``(output, selected, diameter, tie_count)`` with the same tie
    conventions as the optimized path.
    """
    rows = [list(map(float, r)) for r in np.atleast_2d(values)]
    q, d = len(rows), len(rows[0])
    k = q - f
    scored = []
    for subset in combinations(range(q), k):
        diam = 0.0
        for a, b in combinations(subset, 2):
            diam = max(diam, math.dist(rows[a], rows[b]))
        scored.append((subset, diam))
    best = min(s for _, s in scored)
    tol = best * (1.0 + 1e-9) + 1e-12
    ties = [(subset, s) for subset, s in scored if s <= tol]
    selected, achieved = ties[0]

    def subset_mean(subset):
        return [sum(rows[i][c] for i in subset) / len(subset) for c in range(d)]

    if tie_mode == AVERAGE_MINIMA:
        means = [subset_mean(s) for s, _ in ties]
        out = [sum(m[c] for m in means) / len(means) for c in range(d)]
    else:
        out = subset_mean(selected)
    return np.array(out), selected, achieved, len(ties)


def trimmed_mean_oracle(values: np.ndarray, f: int) -> np.ndarray:
    """Per-coordinate sort-trim-average, pure-Python loops."""
    rows = [list(map(float, r)) for r in np.atleast_2d(values)]
    m, d = len(rows), len(rows[0])
    out = []
    for c in range(d):
        col = sorted(rows[i][c] for i in range(m))
        kept = col[f : m - f]
        out.append(sum(kept) / len(kept))
    return np.array(out)


# ---------------------------------------------------------------------------
# Randomized-input helpers


def _random_family(rng, h: int, d: int, spread: float = 1.0) -> np.ndarray:
    base = rng.standard_normal((h, d)) * spread
    return base + rng.standard_normal(d) * spread


def adversary_pool(f: int) -> list:
    """Stressor policies every guarantee must survive."""
    pool = [
        NullAdversary(),
        RandomNoiseAdversary(scale=0.5),
        RandomNoiseAdversary(scale=50.0),
        MimicExtremeAdversary(),
    ]
    if f > 0:
        pool.append(CrashSubsetAdversary(crashed=()))
    return pool


# ---------------------------------------------------------------------------
# Suite: diameters


def run_diameters(seed: int = 0, samples: int = 1000) -> SuiteReport:
    report = SuiteReport("diameters")
    rng = substream(seed, 1)
    orders = (1.0, 2.0, math.inf)

    worst = None
    for i in range(samples):
        h = int(rng.integers(1, 9))
        d = int(rng.integers(1, 7))
        fam = _random_family(rng, h, d, spread=float(rng.uniform(0.1, 5)))
        for r in orders:
            lower = diameter_lr(fam, r)
            cw = diameter_cw_norm(fam, r)
            factor = min(d ** (1 / r), 2 * h ** (1 / r)) if not math.isinf(r) else 1.0
            if not (holds(lower, cw, RTOL) and holds(cw, factor * lower, RTOL)):
                worst = f"family={fam.tolist()}, r={r}, lr={lower}, cw={cw}, cap={factor * lower}"
                break
        if worst:
            break
    report.add("sandwich: pairwise <= coordinate-wise <= min(d^(1/r), 2h^(1/r)) * pairwise", worst is None, worst or "")

    worst = None
    for i in range(samples):
        h = int(rng.integers(1, 7))
        d = int(rng.integers(1, 5))
        F = _random_family(rng, h, d)
        G = _random_family(rng, h, d)
        cw_sum = diameter_cw(F) + diameter_cw(G)
        if not np.all(diameter_cw(F + G) <= cw_sum * (1 + RTOL) + 1e-12):
            worst = f"F={F.tolist()} G={G.tolist()}"
            break
        if not holds(diameter_l2(F + G), diameter_l2(F) + diameter_l2(G), RTOL):
            worst = f"F={F.tolist()} G={G.tolist()}"
            break
    report.add("triangle inequality for both diameters", worst is None, worst or "")

    worst = None
    for i in range(samples):
        h = int(rng.integers(1, 7))
        d = int(rng.integers(1, 5))
        F = _random_family(rng, h, d)
        weights = rng.random(h)
        weights /= weights.sum()
        candidates = list(F) + [weights @ F]
        for c in candidates:
            bound = 2 * max(np.linalg.norm(v - c) for v in F)
            if not holds(diameter_l2(F), bound, RTOL):
                worst = f"F={F.tolist()} c={np.asarray(c).tolist()}"
                break
        if worst:
            break
    report.add("diameter <= 2 max distance to any hull point", worst is None, worst or "")

    worst = None
    for i in range(samples):
        d = int(rng.integers(1, 6))
        u = rng.standard_normal(d)
        v = rng.standard_normal(d)
        alpha = float(rng.uniform(0.05, 20))
        lhs = np.linalg.norm(u + v) ** 2
        rhs = (1 + 1 / alpha) * np.linalg.norm(u) ** 2 + (1 + alpha) * np.linalg.norm(v) ** 2
        if not holds(lhs, rhs, RTOL):
            worst = f"u={u.tolist()} v={v.tolist()} alpha={alpha}"
            break
        k = int(rng.integers(1, 6))
        vs = rng.standard_normal((k, d))
        if not holds(np.linalg.norm(vs.sum(axis=0)) ** 2, k * (np.linalg.norm(vs, axis=1) ** 2).sum(), RTOL):
            worst = f"vectors={vs.tolist()}"
            break
    report.add("norm-splitting inequalities", worst is None, worst or "")

    worst = None
    for i in range(200):
        h = int(rng.integers(2, 7))
        d = int(rng.integers(1, 5))
        F = _random_family(rng, h, d)
        P = F[rng.permutation(h)]
        same = (
            diameter_l2(F) == diameter_l2(P)
            and np.array_equal(np.sort(diameter_cw(F)), np.sort(diameter_cw(P)))
            and np.allclose(family_mean(F), family_mean(P), rtol=0, atol=1e-12)
        )
        if not same:
            worst = f"F={F.tolist()}"
            break
    report.add("permutation invariance of diameters and mean", worst is None, worst or "")
    return report


# ---------------------------------------------------------------------------
# Suite: aggregation


def run_aggregation(seed: int = 0, instances: int = 1000) -> SuiteReport:
    report = SuiteReport("aggregation")
    rng = substream(seed, 2)

    worst = None
    for i in range(instances):
        q = int(rng.integers(2, 9))
        f = int(rng.integers(0, q))
        d = int(rng.integers(1, 5))
        vals = _random_family(rng, q, d, spread=float(rng.uniform(0.2, 3)))
        z = CollectedInputs(vals)
        fast = mda_aggregate(z, f)
        ref_out, ref_sel, ref_diam, ref_ties = mda_oracle(vals, f)
        ok = (
            fast.selected == ref_sel
            and fast.tie_count == ref_ties
            and np.allclose(fast.output, ref_out, rtol=0, atol=1e-12)
            and math.isclose(fast.achieved_diameter, ref_diam, rel_tol=1e-12, abs_tol=1e-12)
        )
        if ok:
            fast_avg = mda_aggregate(z, f, AVERAGE_MINIMA)
            ref_avg = mda_oracle(vals, f, AVERAGE_MINIMA)[0]
            ok = np.allclose(fast_avg.output, ref_avg, rtol=1e-12, atol=1e-12)
        if not ok:
            worst = f"values={vals.tolist()} f={f}"
            break
    report.add("minimal-diameter selection matches exhaustive oracle", worst is None, worst or "")

    worst = None
    for i in range(instances):
        m = int(rng.integers(1, 12))
        f = int(rng.integers(0, (m - 1) // 2 + 1)) if m > 1 else 0
        d = int(rng.integers(1, 5))
        vals = _random_family(rng, m, d)
        got = trimmed_mean(CollectedInputs(vals), f)
        if not np.allclose(got, trimmed_mean_oracle(vals, f), rtol=0, atol=1e-12):
            worst = f"values={vals.tolist()} f={f}"
            break
    report.add("trimmed mean matches sort-trim oracle", worst is None, worst or "")

    worst = None
    for i in range(300):
        h = int(rng.integers(2, 7))
        f = int(rng.integers(1, 3))
        d = int(rng.integers(1, 4))
        honest = _random_family(rng, h, d)
        picked = honest[rng.choice(h, size=max(1, h - 1), replace=False)]
        bad = _random_family(rng, f, d, spread=30.0)
        vals = np.vstack([picked, bad])
        q = vals.shape[0]
        if q - f < 1 or q > 12:
            continue
        res = mda_aggregate(CollectedInputs(vals), f)
        if not holds(res.achieved_diameter, diameter_l2(honest), RTOL):
            worst = f"honest={honest.tolist()} byz={bad.tolist()}"
            break
        sel = vals[list(res.selected)]
        inside = np.all(res.output >= sel.min(axis=0) - 1e-12) and np.all(res.output <= sel.max(axis=0) + 1e-12)
        if not inside:
            worst = f"output outside selected box: values={vals.tolist()} f={f}"
            break
    report.add("selected diameter bounded by honest diameter; output in selected hull box", worst is None, worst or "")

    worst = None
    for i in range(300):
        h = int(rng.integers(3, 8))
        f = int(rng.integers(1, (h - 1) // 2 + 1))
        d = int(rng.integers(1, 4))
        honest = _random_family(rng, h, d)
        bad = _random_family(rng, f, d, spread=25.0)
        vals = np.vstack([honest, bad])
        z = CollectedInputs(vals)
        out, retained = trimmed_mean_with_sources(z, f)
        lo, hi = honest.min(axis=0), honest.max(axis=0)
        ok = np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)
        for c, kept in enumerate(retained):
            for src in kept:
                v = vals[src, c]
                ok = ok and (lo[c] - 1e-12 <= v <= hi[c] + 1e-12)
        if not ok:
            worst = f"honest={honest.tolist()} byz={bad.tolist()}"
            break
    report.add("trim keeps only values inside the honest per-coordinate range", worst is None, worst or "")

    worst = None
    for i in range(300):
        q = int(rng.integers(2, 8))
        f = int(rng.integers(0, (q - 1) // 2 + 1))
        d = int(rng.integers(1, 4))
        vals = _random_family(rng, q, d)
        shift = rng.standard_normal(d) * 5
        perm = rng.permutation(q)
        z, zp = CollectedInputs(vals), CollectedInputs(vals[perm])
        own = rng.standard_normal(d)
        checks = [
            np.allclose(trimmed_mean(zp, f), trimmed_mean(z, f), rtol=0, atol=1e-9),
            np.allclose(
                mda_aggregate(zp, f, AVERAGE_MINIMA).output,
                mda_aggregate(z, f, AVERAGE_MINIMA).output,
                rtol=1e-9,
                atol=1e-9,
            ),
            np.allclose(
                trimmed_mean(CollectedInputs(vals + shift), f), trimmed_mean(z, f) + shift, rtol=1e-9, atol=1e-9
            ),
            np.allclose(
                mda_aggregate(CollectedInputs(vals + shift), f).output,
                mda_aggregate(z, f).output + shift,
                rtol=1e-9,
                atol=1e-9,
            ),
        ]
        if q > f:
            checks.append(
                np.allclose(
                    own_filter_average(CollectedInputs(vals + shift), own + shift, f),
                    own_filter_average(z, own, f) + shift,
                    rtol=1e-9,
                    atol=1e-9,
                )
            )
        if not all(checks):
            worst = f"values={vals.tolist()} f={f} shift={shift.tolist()}"
            break
    report.add("permutation invariance and translation equivariance", worst is None, worst or "")
    return report


# ---------------------------------------------------------------------------
# Protocol-bound engines (shared by the suites and the acceptance tests)


@dataclass
class RoundBoundStats:
    """(lhs, rhs) samples for each bound, collected over randomized runs.

    Every pair must satisfy ``lhs <= rhs`` up to the package tolerance;
    keeping both sides (instead of ratios) preserves the absolute-tolerance
    semantics near zero.
    """

    contraction: List[tuple] = field(default_factory=list)
    contraction_exact: List[tuple] = field(default_factory=list)
    cw_contraction: List[tuple] = field(default_factory=list)
    drift: List[tuple] = field(default_factory=list)
    drift_all_honest: List[tuple] = field(default_factory=list)
    halving: List[tuple] = field(default_factory=list)
    dev: List[tuple] = field(default_factory=list)
    box: List[tuple] = field(default_factory=list)
    rounds: int = 0


def all_hold(pairs, rel: float = 1e-9, abs_tol: float = 1e-12):
    """Check every (lhs, rhs) pair; returns (ok, worst-violation detail)."""
    worst = None
    worst_margin = 0.0
    for lhs, rhs in pairs:
        if not holds(lhs, rhs, rel, abs_tol):
            margin = lhs - rhs
            if worst is None or margin > worst_margin:
                worst, worst_margin = (lhs, rhs), margin
    if worst is None:
        return True, ""
    return False, f"lhs={worst[0]!r} > rhs={worst[1]!r}"


def collect_mda_stats(
    n: int = 7,
    f: int = 1,
    N: int = 1,
    trials: int = 1000,
    dims=(1, 3, 10),
    seed: int = 0,
) -> RoundBoundStats:
    """Randomized mda runs against the stressor pool; returns bound samples."""
    cfg = derive_mda_config(n, f)
    shrink = 1 - cfg.epsilon_tilde if f > 0 else 1.0
    exact = (4 * cfg.f + cfg.h - cfg.q) / (cfg.q - cfg.f) if f > 0 else 1.0
    drift_c = protocols.mean_drift_constant(cfg)
    pool = adversary_pool(f)
    stats = RoundBoundStats()
    for i in range(trials):
        d = dims[i % len(dims)]
        adv = pool[i % len(pool)]
        rng = substream(seed, 3, i)
        X = _random_family(rng, cfg.h, d, spread=float(rng.uniform(0.2, 4.0)))
        run = run_avg(cfg, X, N, adv, seed=derive_seed(seed, 4, i))
        prev = diameter_l2(X)
        for s in run.trace:
            stats.contraction.append((s.delta2, shrink * prev))
            stats.contraction_exact.append((s.delta2, exact * prev))
            stats.drift.append((s.mean_step, drift_c * prev))
            if s.all_honest_quorums:
                stats.drift_all_honest.append((s.mean_step, (2 * f / cfg.h) * prev))
            prev = s.delta2
        d_in = diameter_l2(X)
        stats.halving.append((diameter_l2(run.output), d_in / 2**N))
        dev = float(np.linalg.norm(family_mean(run.output) - family_mean(X)))
        stats.dev.append((dev, cfg.averaging_constant * d_in))
        stats.rounds += run.rounds
    return stats


def collect_tm_stats(
    n: int = 4,
    f: int = 1,
    N: int = 1,
    trials: int = 1000,
    dims=(1, 3, 10),
    seed: int = 0,
) -> RoundBoundStats:
    """Randomized rbtm runs under witness-constrained deliveries."""
    cfg = derive_rbtm_config(n, f)
    shrink = 1 - cfg.epsilon_tilde if f > 0 else 1.0
    pool = adversary_pool(f)
    stats = RoundBoundStats()
    for i in range(trials):
        d = dims[i % len(dims)]
        adv = pool[i % len(pool)]
        rng = substream(seed, 5, i)
        X = _random_family(rng, cfg.h, d, spread=float(rng.uniform(0.2, 4.0)))
        run = run_avg(cfg, X, N, adv, seed=derive_seed(seed, 6, i))
        for s in run.trace:
            stats.cw_contraction.append((s.cw_worst_out, shrink * s.cw_worst_in))
        box = (2 * f / cfg.h) * diameter_cw_norm(X, 2.0)
        worst_dev = max((s.mean_deviation for s in run.trace), default=0.0)
        stats.box.append((worst_dev, box))
        d_in = diameter_l2(X)
        stats.halving.append((diameter_l2(run.output), d_in / 2**N))
        dev = float(np.linalg.norm(family_mean(run.output) - family_mean(X)))
        stats.dev.append((dev, cfg.averaging_constant * d_in))
        stats.rounds += run.rounds
    return stats


def replay_lower_bound(N: int, n: int = 7, f: int = 1, seed: int = 0):
    """Replay the split attack; returns per-round and final observables.

    Returns a dict with ``forced_zero_max`` (largest magnitude among the
    first q-2f nodes' outputs over all rounds, exactly 0 when the attack
    works), ``final_dev`` (|final mean - initial mean|), and ``floor``
    (the deviation the construction forces, (h+2f-q)/h - 1/2^N).
    """
    cfg = derive_mda_config(n, f)
    policy, family = lower_bound_attack(cfg)
    run = run_avg(cfg, family, N, policy, seed=seed, full_trace=True)
    forced = cfg.q - 2 * cfg.f
    worst = 0.0
    for fam in run.families[1:]:
        worst = max(worst, float(np.abs(fam[:forced]).max()))
    dev = float(np.linalg.norm(family_mean(run.output) - family_mean(family)))
    floor = (cfg.h + 2 * cfg.f - cfg.q) / cfg.h - 2.0 ** (-N)
    return {
        "run": run,
        "forced_zero_max": worst,
        "final_dev": dev,
        "floor": floor,
        "bounds": protocols.check_avg_bounds(run),
    }


def replay_six_f(f: int = 1, N: int = 2, nominal_eps_tilde: float = 0.2, seed: int = 0):
    """Replay the diameter-stalling attack at n = 6f.

    The round count T comes from the mda round formula at a nominal
    contraction rate; the attack then guarantees a per-round diameter
    multiplier of exactly 1 - delta/4 and a final diameter of
    ``2 * diam(X) / 2^N``, violating the halving requirement.
    """
    T = mda_rounds(N, nominal_eps_tilde)
    policy, family, delta = six_f_attack(f, N, T)
    sim = SimConfig(n=6 * f, f=f, q=5 * f, mode=netsim.MDA_QUORUM, seed=seed)
    rule = MdaRule(f, AVERAGE_MINIMA)
    vals = family
    ratios = []
    prev = diameter_l2(vals)
    d0 = prev
    for t in range(T):
        vals, _ = netsim.run_round(sim, vals, policy, rule, round_index=t)
        cur = diameter_l2(vals)
        ratios.append(cur / prev if prev else 0.0)
        prev = cur
    return {
        "delta": delta,
        "T": T,
        "ratios": ratios,
        "expected_ratio": 1.0 - delta / 4.0,
        "final_ratio_vs_halving": (prev / d0) * 2**N if d0 else 0.0,
    }


def converse_stats(family, N: int, cfg: protocols.ProtocolConfig, seeds, iterations: int):
    """Averaging-via-learning observables per seed: (diameter, mean shift)."""
    from .learning import avg_via_learn

    X = np.asarray(family, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    oracle = ProtocolAveraging(cfg)
    diams, devs, deltas = [], [], []
    for s in seeds:
        result, delta = avg_via_learn(X, N, oracle, iterations, seed=int(s), adversary=NullAdversary())
        diams.append(diameter_l2(result.theta_star))
        devs.append(float(np.linalg.norm(family_mean(result.theta_star) - family_mean(X))))
        deltas.append(delta)
    return np.array(diams), np.array(devs), deltas[0]


def learn_endstate_stats(model, cfg_proto, delta, iterations, seeds, adversary_factory):
    """End-state observables of the heterogeneous loop over many seeds.

    Returns arrays of squared final diameters and squared mean-gradient
    norms at the uniformly drawn iterate.
    """
    oracle = ProtocolAveraging(cfg_proto)
    d2, g2 = [], []
    for s in seeds:
        cfg = LearnConfig(delta=delta, iterations=iterations, avg=oracle, seed=int(s))
        res = learn_run(cfg, model, adversary_factory())
        d2.append(diameter_l2(res.theta_star) ** 2)
        mean = family_mean(res.theta_star)
        g2.append(float(np.linalg.norm(model.mean_gradient(mean)) ** 2))
    return np.array(d2), np.array(g2)


def hom_endstate_stats(model, cfg_proto, delta, iterations, seeds, adversary_factory, eta=None):
    """End-state observables of the homogeneous loop over many seeds."""
    oracle = ProtocolAveraging(cfg_proto)
    d2, g2 = [], []
    for s in seeds:
        cfg = LearnConfig(delta=delta, iterations=iterations, avg=oracle, seed=int(s), eta=eta)
        res = hom_learn_run(cfg, model, adversary_factory())
        d2.append(diameter_l2(res.theta_star) ** 2)
        mean = family_mean(res.theta_star)
        g2.append(float(np.linalg.norm(model.mean_gradient(mean)) ** 2))
    return np.array(d2), np.array(g2)


# ---------------------------------------------------------------------------
# Suites: mda-bounds, tm-bounds


def run_mda_bounds(seed: int = 0, trials: int = 400) -> SuiteReport:
    report = SuiteReport("mda-bounds")
    cfg = derive_mda_config(7, 1)
    stats = collect_mda_stats(trials=trials, seed=seed)
    shrink = 1 - cfg.epsilon_tilde
    report.add(f"per-round diameter contraction <= {shrink}", *all_hold(stats.contraction))
    exact = (4 * cfg.f + cfg.h - cfg.q) / (cfg.q - cfg.f)
    report.add(f"per-round pairwise-distance bound <= {exact}", *all_hold(stats.contraction_exact))
    drift = protocols.mean_drift_constant(cfg)
    report.add(f"per-round mean drift <= {drift:.6g} * diameter", *all_hold(stats.drift))
    if stats.drift_all_honest:
        bound = 2 * cfg.f / cfg.h
        report.add(
            f"all-honest-quorum rounds: mean drift <= {bound:.6g} * diameter",
            *all_hold(stats.drift_all_honest),
        )
    report.add("end-to-end diameter halving", *all_hold(stats.halving))
    report.add(
        f"end-to-end averaging constant <= {cfg.averaging_constant:.6g}", *all_hold(stats.dev)
    )
    mono = all(holds(lhs, prev / shrink if shrink else prev) for lhs, prev in stats.contraction)
    report.add("per-round diameter monotone non-increasing", mono)
    return report


def run_tm_bounds(seed: int = 0, trials: int = 400) -> SuiteReport:
    report = SuiteReport("tm-bounds")
    cfg = derive_rbtm_config(4, 1)
    stats = collect_tm_stats(trials=trials, seed=seed)
    shrink = 1 - cfg.epsilon_tilde
    report.add(f"per-round coordinate-wise contraction <= {shrink}", *all_hold(stats.cw_contraction))
    report.add("every iterate's mean stays in the trim-stable box", *all_hold(stats.box))
    report.add("end-to-end diameter halving", *all_hold(stats.halving))
    report.add(
        f"end-to-end averaging constant <= {cfg.averaging_constant:.6g}", *all_hold(stats.dev)
    )

    # Retained-set difference bound: any two nodes' per-coordinate retained
    # source sets differ by at most f elements.
    worst_detail = None
    rng = substream(seed, 7)
    sim_cfg = derive_rbtm_config(5, 1)
    pool = adversary_pool(1)
    for i in range(60):
        X = _random_family(rng, sim_cfg.h, int(rng.integers(1, 4)))
        adv = pool[i % len(pool)]
        run = run_avg(sim_cfg, X, 1, adv, seed=derive_seed(seed, 8, i), full_trace=True)
        for record in run.records:
            outs = record.outputs
            ids = list(outs.keys())
            for a in range(len(ids)):
                for b in range(len(ids)):
                    sa, sb = outs[ids[a]].retained_sources, outs[ids[b]].retained_sources
                    for ca, cb in zip(sa, sb):
                        if len(ca - cb) > sim_cfg.f:
                            worst_detail = f"round sets {sorted(ca)} vs {sorted(cb)}"
                            break
    report.add("retained-set difference per coordinate <= f", worst_detail is None, worst_detail or "")
    return report


# ---------------------------------------------------------------------------
# Suite: attacks


def run_attacks(seed: int = 0) -> SuiteReport:
    report = SuiteReport("attacks")
    for N in (2, 4, 6):
        res = replay_lower_bound(N, seed=seed)
        report.add(
            f"split attack N={N}: blocked group pinned to zero",
            res["forced_zero_max"] <= 1e-12,
            f"max |output| = {res['forced_zero_max']}",
        )
        report.add(
            f"split attack N={N}: final mean deviation >= {res['floor']:.6g}",
            res["final_dev"] >= res["floor"] - 1e-12,
            f"deviation {res['final_dev']}",
        )
        report.add(
            f"split attack N={N}: protocol guarantees still hold",
            all(b.ok for b in res["bounds"]),
            "; ".join(f"{b.name}: {b.lhs} <= {b.rhs}" for b in res["bounds"] if not b.ok),
        )

    res = replay_six_f(f=1, N=2, seed=seed)
    ratio_err = max(abs(r - res["expected_ratio"]) for r in res["ratios"])
    report.add(
        "six-f attack: per-round multiplier equals 1 - delta/4",
        ratio_err <= 1e-9 * max(1.0, res["expected_ratio"]),
        f"max deviation {ratio_err}",
    )
    report.add(
        "six-f attack: final diameter exceeds the halving requirement",
        res["final_ratio_vs_halving"] > 1.0 + 1e-9,
        f"ratio {res['final_ratio_vs_halving']}",
    )

    # Agreeing families are fixed points for every policy and both variants.
    worst = None
    for variant, cfg in (("mda", derive_mda_config(7, 1)), ("rbtm", derive_rbtm_config(4, 1))):
        rng = substream(seed, 9)
        x = rng.standard_normal(3)
        X = np.tile(x, (cfg.h, 1))
        for adv in adversary_pool(cfg.f):
            run = run_avg(cfg, X, 2, adv, seed=derive_seed(seed, 10))
            if not np.array_equal(run.output, X):
                worst = f"{variant} under {adv.name}: output {run.output.tolist()}"
                break
    report.add("agreeing family is a fixed point under every policy", worst is None, worst or "")

    # Every stressor policy emits validating deliveries in both modes.
    worst = None
    for cfg in (derive_mda_config(7, 1), derive_rbtm_config(4, 1)):
        sim = SimConfig(n=cfg.n, f=cfg.f, q=cfg.q, mode=cfg.mode, seed=seed)
        rng = substream(seed, 11)
        for adv in adversary_pool(cfg.f):
            for t in range(10):
                state = netsim.RoundState(
                    cfg=sim, honest_values=_random_family(rng, cfg.h, 3), round_index=t
                )
                rep = validate_delivery(sim, adv.deliver(state), 3)
                if rep is not None:
                    worst = f"{adv.name} in {cfg.mode}: {rep}"
                    break
    report.add("every policy's deliveries validate", worst is None, worst or "")
    return report


# ---------------------------------------------------------------------------
# Suite: learning


def run_learning(seed: int = 0) -> SuiteReport:
    report = SuiteReport("learning")
    rng = substream(seed, 12)

    models = {
        "quadratic": QuadraticModel(rng.standard_normal((4, 3)), noise_scale=1.0),
        "least-squares": make_linear_regression_model(4, 3, noise_scale=1.0, seed=seed),
    }

    worst = None
    for name, model in models.items():
        for _ in range(50):
            theta = rng.standard_normal(model.dim) * 2
            j = int(rng.integers(model.n_nodes))
            grad = model.true_gradient(j, theta)
            fd = np.empty_like(grad)
            eps = 1e-6
            for c in range(model.dim):
                e = np.zeros(model.dim)
                e[c] = eps
                fd[c] = (model.loss_value(j, theta + e) - model.loss_value(j, theta - e)) / (2 * eps)
            scale = max(1.0, float(np.linalg.norm(grad)))
            if np.linalg.norm(fd - grad) / scale > 1e-6:
                worst = f"{name} node {j} theta={theta.tolist()}"
                break
    report.add("gradients match central finite differences", worst is None, worst or "")

    worst = None
    for name, model in models.items():
        for _ in range(100):
            a = rng.standard_normal(model.dim) * 3
            b = rng.standard_normal(model.dim) * 3
            j = int(rng.integers(model.n_nodes))
            lhs = np.linalg.norm(model.true_gradient(j, a) - model.true_gradient(j, b))
            rhs = model.lipschitz * np.linalg.norm(a - b)
            if not holds(lhs, rhs, RTOL):
                worst = f"{name}: ratio {lhs / max(rhs, 1e-300)}"
                break
            if model.loss_value(j, a) < 0:
                worst = f"{name}: negative loss"
                break
        K = model.heterogeneity
        for _ in range(100):
            theta = rng.standard_normal(model.dim) * 5
            for j in range(model.n_nodes):
                for k in range(model.n_nodes):
                    gap = np.linalg.norm(model.true_gradient(j, theta) - model.true_gradient(k, theta))
                    if not holds(gap, K, RTOL):
                        worst = f"{name}: gradient gap {gap} exceeds K={K}"
    report.add("smoothness, non-negativity, and heterogeneity constants hold", worst is None, worst or "")

    # Batch variance: per-sample second moment sigma^2, batch mean sigma^2/b.
    model = QuadraticModel(np.zeros((1, 3)), noise_scale=2.0)
    draws, b = 10_000, 100
    sq = np.empty(draws)
    theta = np.zeros(3)
    for i in range(draws):
        g = stochastic_gradient(model, 0, theta, b, substream(seed, 13, i))
        sq[i] = g @ g
    target = model.noise_scale**2 / b
    se = sq.std(ddof=1) / math.sqrt(draws)
    ok = abs(sq.mean() - target) <= 3 * se
    report.add(
        "batched gradient noise second moment matches sigma^2 / b (3 SE)",
        ok,
        f"mean {sq.mean():.6g}, target {target:.6g}, 3*SE {3 * se:.6g}",
    )

    # Noiseless + exact oracle: iterates agree, the mean follows the plain
    # gradient-descent recursion, and the effective gradient identity holds.
    centers = np.array([[0.0], [3.0], [6.0]])
    model0 = QuadraticModel(centers, noise_scale=0.0)
    cfg = LearnConfig(delta=0.5, iterations=40, avg=ExactMeanAveraging(), seed=seed)
    res = learn_run(cfg, model0)
    eta = res.eta
    mean_ref = family_mean(res.families[0])
    worst = None
    for t, fam in enumerate(res.families):
        if diameter_l2(fam) != 0.0:
            worst = f"diameter {diameter_l2(fam)} at t={t + 1}"
            break
        got = family_mean(fam)
        if np.linalg.norm(got - mean_ref) > 1e-9 * max(1.0, np.linalg.norm(mean_ref)):
            worst = f"mean {got} != reference {mean_ref} at t={t + 1}"
            break
        mean_ref = mean_ref - eta * (mean_ref - centers.mean(axis=0))
    report.add("noiseless run follows the exact descent recursion with zero diameter", worst is None, worst or "")

    worst = None
    for t in range(len(res.families) - 1):
        prev_fam, next_fam = res.families[t], res.families[t + 1]
        per_node = (prev_fam - next_fam) / eta
        lhs = per_node.mean(axis=0)
        rhs = (family_mean(prev_fam) - family_mean(next_fam)) / eta
        if np.linalg.norm(lhs - rhs) > 1e-9 * max(1.0, np.linalg.norm(rhs)):
            worst = f"t={t + 1}: {lhs} vs {rhs}"
            break
    report.add("average effective gradient equals effective gradient of the average", worst is None, worst or "")

    try:
        hom_learn_run(cfg, model0)
        report.add("homogeneous loop rejects heterogeneous losses", False, "no error raised")
    except ConfigurationError:
        report.add("homogeneous loop rejects heterogeneous losses", True)

    # Communication economy: one agreement call per iteration instead of two.
    class CountingOracle(ExactMeanAveraging):
        def __init__(self):
            self.calls = 0

        def run(self, family, N, seed_, adversary):
            self.calls += 1
            return super().run(family, N, seed_, adversary)

    shared = QuadraticModel(np.tile(np.array([1.0, -1.0]), (3, 1)), noise_scale=0.0)
    counter = CountingOracle()
    hom_learn_run(LearnConfig(delta=0.5, iterations=10, avg=counter, seed=seed), shared)
    hom_calls = counter.calls
    counter.calls = 0
    learn_run(LearnConfig(delta=0.5, iterations=10, avg=counter, seed=seed), shared)
    report.add(
        "homogeneous loop halves the agreement calls",
        hom_calls == 10 and counter.calls == 20,
        f"hom={hom_calls}, het={counter.calls}",
    )
    return report


SUITES: dict[str, Callable[..., SuiteReport]] = {
    "diameters": run_diameters,
    "aggregation": run_aggregation,
    "mda-bounds": run_mda_bounds,
    "tm-bounds": run_tm_bounds,
    "attacks": run_attacks,
    "learning": run_learning,
}


def run_suite(name: str, seed: int = 0) -> SuiteReport:
    """Run one named suite with a fixed seed.

    Raises:
        ConfigurationError: for an unknown suite name.
    """
    if name not in SUITES:
        raise ConfigurationError(f"unknown suite {name!r}; expected one of {sorted(SUITES)}")
    return SUITES[name](seed=seed)
