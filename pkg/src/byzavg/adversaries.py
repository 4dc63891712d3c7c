"""Attack strategies for the round simulator.

Attacks are value-level policies: each round they emit Byzantine vectors and
delivery sets, never anything else (matching exactly what the adversary in
the model controls).  Every policy here produces deliveries that validate
for its mode: the adversary plays inside the rules.

Four stressor kinds are built by :func:`plumbing_attacks`:

* ``null``: silent Byzantines, all-honest quorums.
* ``crash-subset``: chosen Byzantine ids never appear in any quorum; the
  remaining ones participate benignly by echoing the honest mean.
* ``random-noise``: Byzantine vectors are seeded Gaussians around the
  honest mean, with randomized quorums (and equivocation where allowed).
* ``mimic-extreme``: Byzantines replicate the honest vector farthest from
  the honest mean, with randomized quorums.

Two canonical constructions double as lower-bound witnesses:

* :func:`lower_bound_attack`: splits the honest nodes so that a quorum of
  agreeing values forces part of them to settle on the wrong side,
  driving the output mean a distance ``(h + 2f - q)/h`` from the true
  mean.  No asynchronous algorithm can avoid this.
* :func:`six_f_attack`: at ``n = 6f`` it pins the per-round diameter
  multiplier of minimal-diameter averaging to exactly ``1 - delta/4``,
  slow enough that the diameter cannot halve as required.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .netsim import (
    MDA_QUORUM,
    AdversaryPolicy,
    RoundDelivery,
    RoundState,
    substream,
)
from .protocols import ProtocolConfig
from .vectors import family_mean

__all__ = [
    "NullAdversary",
    "CrashSubsetAdversary",
    "RandomNoiseAdversary",
    "MimicExtremeAdversary",
    "LowerBoundSplitAdversary",
    "SixFBreakerAdversary",
    "lower_bound_attack",
    "six_f_attack",
    "plumbing_attacks",
    "PLUMBING_KINDS",
]

# Substream tags (third-level separation under (seed, tag, round, node)).
_T_QUORUM = 11
_T_NOISE = 13
_T_CORE = 14
_T_EXTRA = 15


class NullAdversary(AdversaryPolicy):
    """Silent Byzantines: every quorum consists of honest nodes only."""

    name = "null"

    def deliver(self, state: RoundState) -> RoundDelivery:
        cfg = state.cfg
        if cfg.q > cfg.h:
            raise ConfigurationError("null adversary needs q <= h to form honest quorums")
        members = tuple(range(1, cfg.q + 1)) if cfg.mode == MDA_QUORUM else tuple(cfg.honest_ids)
        return RoundDelivery(quorums={j: members for j in cfg.honest_ids}, byz_values={})


class CrashSubsetAdversary(AdversaryPolicy):
    """Chosen Byzantine ids crash (never delivered); the rest act benignly."""

    name = "crash-subset"

    def __init__(self, crashed=()):
        self.crashed = tuple(int(c) for c in crashed)

    def deliver(self, state: RoundState) -> RoundDelivery:
        cfg = state.cfg
        bad = set(self.crashed)
        for c in bad:
            if cfg.is_honest(c) or not (1 <= c <= cfg.n):
                raise ConfigurationError(f"crashed id {c} is not a Byzantine node")
        active = [b for b in cfg.byzantine_ids if b not in bad]
        mean = family_mean(state.honest_values)
        if cfg.mode == MDA_QUORUM:
            take_honest = cfg.q - len(active)
            if take_honest < cfg.q - cfg.f or take_honest > cfg.h:
                take_honest = min(cfg.q, cfg.h)
                active = active[: cfg.q - take_honest]
            members = tuple(range(1, take_honest + 1)) + tuple(active)
            byz_values = {(b, j): mean for b in active for j in cfg.honest_ids}
        else:
            members = tuple(cfg.honest_ids) + tuple(active)
            byz_values = {b: mean for b in active}
        return RoundDelivery(quorums={j: members for j in cfg.honest_ids}, byz_values=byz_values)


def _random_quorums(state: RoundState, tag: int):
    """Randomized validating quorums for both modes.

    mda-quorum: each node independently hears a random mix with at least
    q - f honest members.  rb-witness: a shared random core of size q plus
    per-node random extras, so all pairwise intersections contain the core.
    """
    cfg = state.cfg
    honest = np.arange(1, cfg.h + 1)
    byz = np.arange(cfg.h + 1, cfg.n + 1)
    quorums = {}
    if cfg.mode == MDA_QUORUM:
        for j in cfg.honest_ids:
            rng = substream(cfg.seed, tag, state.round_index, j)
            b = int(rng.integers(0, min(cfg.f, cfg.q) + 1)) if cfg.f else 0
            b = min(b, len(byz))
            picked_h = rng.choice(honest, size=cfg.q - b, replace=False)
            picked_b = rng.choice(byz, size=b, replace=False) if b else np.empty(0, dtype=int)
            quorums[j] = tuple(int(x) for x in picked_h) + tuple(int(x) for x in picked_b)
    else:
        rng = substream(cfg.seed, _T_CORE, state.round_index, tag)
        core = rng.choice(np.arange(1, cfg.n + 1), size=cfg.q, replace=False)
        core_set = set(int(x) for x in core)
        rest = np.array([x for x in range(1, cfg.n + 1) if x not in core_set])
        for j in cfg.honest_ids:
            rng_j = substream(cfg.seed, _T_EXTRA, state.round_index, j)
            extra = ()
            if len(rest):
                k = int(rng_j.integers(0, len(rest) + 1))
                if k:
                    extra = tuple(int(x) for x in rng_j.choice(rest, size=k, replace=False))
            quorums[j] = tuple(sorted(core_set)) + extra
    return quorums


def _attach_byz_values(state: RoundState, quorums, vector_for) -> RoundDelivery:
    """Fill byz_values for every Byzantine id a quorum references.

    ``vector_for(byz_id, recipient_id)`` supplies the vector; in rb-witness
    mode it is called once per Byzantine with ``recipient_id=None``.
    """
    cfg = state.cfg
    byz_values = {}
    if cfg.mode == MDA_QUORUM:
        for j, quorum in quorums.items():
            for member in quorum:
                if not cfg.is_honest(member):
                    byz_values[(member, j)] = vector_for(member, j)
    else:
        referenced = {m for q in quorums.values() for m in q if not cfg.is_honest(m)}
        for member in referenced:
            byz_values[member] = vector_for(member, None)
    return RoundDelivery(quorums=quorums, byz_values=byz_values)


class RandomNoiseAdversary(AdversaryPolicy):
    """Byzantines send seeded Gaussian perturbations of the honest mean."""

    name = "random-noise"

    def __init__(self, scale: float = 1.0):
        if scale < 0:
            raise ConfigurationError(f"noise scale must be non-negative, got {scale}")
        self.scale = float(scale)

    def deliver(self, state: RoundState) -> RoundDelivery:
        cfg = state.cfg
        mean = family_mean(state.honest_values)

        def vector_for(byz_id, recipient):
            rng = substream(cfg.seed, _T_NOISE, state.round_index, byz_id * (cfg.n + 1) + (recipient or 0))
            return mean + self.scale * rng.standard_normal(state.dim)

        return _attach_byz_values(state, _random_quorums(state, _T_QUORUM), vector_for)


class MimicExtremeAdversary(AdversaryPolicy):
    """Byzantines replicate the honest vector farthest from the honest mean."""

    name = "mimic-extreme"

    def deliver(self, state: RoundState) -> RoundDelivery:
        mean = family_mean(state.honest_values)
        dist = np.linalg.norm(state.honest_values - mean[None, :], axis=1)
        extreme = state.honest_values[int(dist.argmax())].copy()

        def vector_for(byz_id, recipient):
            return extreme

        return _attach_byz_values(state, _random_quorums(state, _T_QUORUM), vector_for)


class LowerBoundSplitAdversary(AdversaryPolicy):
    """Split attack: a blocked minority is outvoted by mimicking Byzantines.

    Every round, messages from honest nodes ``q-f+1 .. h`` to the first
    ``q-f`` nodes are delayed past their quorums, and all Byzantine nodes
    copy the current value of the first group.  The first ``q-f`` recipients
    therefore see ``q-f`` agreeing values and must adopt them; everyone else
    receives a full honest quorum.
    """

    name = "lower-bound-split"

    def __init__(self, cfg: ProtocolConfig):
        if cfg.mode != MDA_QUORUM:
            raise ConfigurationError("the split attack drives mda-quorum deliveries")
        self.cfg = cfg

    def canonical_family(self) -> np.ndarray:
        """Scalar family (0 repeated q-2f, then 1 repeated h+2f-q)."""
        cfg = self.cfg
        zeros = cfg.q - 2 * cfg.f
        ones = cfg.h + 2 * cfg.f - cfg.q
        if zeros < 0 or ones < 0:
            raise ConfigurationError(f"config (h={cfg.h}, f={cfg.f}, q={cfg.q}) admits no split family")
        return np.concatenate([np.zeros(zeros), np.ones(ones)]).reshape(-1, 1)

    def deliver(self, state: RoundState) -> RoundDelivery:
        cfg = state.cfg
        blocked_to = cfg.q - cfg.f  # recipients 1..q-f never hear from q-f+1..h
        mimic = state.value(1).copy()
        quorums = {}
        byz_values = {}
        first_group = tuple(range(1, blocked_to + 1)) + tuple(range(cfg.h + 1, cfg.n + 1))
        full = tuple(range(1, cfg.q + 1))
        for j in state.cfg.honest_ids:
            if j <= blocked_to:
                quorums[j] = first_group
                for b in range(cfg.h + 1, cfg.n + 1):
                    byz_values[(b, j)] = mimic
            else:
                quorums[j] = full
        return RoundDelivery(quorums=quorums, byz_values=byz_values)


def lower_bound_attack(cfg: ProtocolConfig):
    """The split attack plus its canonical initial family.

    Returns ``(policy, family)``.  Running the protocol on this family under
    the policy drives the final mean at least ``(h + 2f - q)/h - 1/2**N``
    away from the initial honest mean.
    """
    policy = LowerBoundSplitAdversary(cfg)
    return policy, policy.canonical_family()


class SixFBreakerAdversary(AdversaryPolicy):
    """Diameter-stalling attack at n = 6f against minimal-diameter averaging.

    The honest family keeps the shape ``a * (-1 x 2f, 0 x f, 1 x 2f)``.  For
    the low group, f messages from the high group are blocked and replaced
    by Byzantine values ``a*(-2+delta)``; symmetrically ``a*(2-delta)`` for
    the high group; the middle group hears all honest values undisturbed.
    One aggregation round then multiplies the diameter by exactly
    ``1 - delta/4`` (the middle nodes need average-over-minima tie-breaking
    to stay at zero).
    """

    name = "six-f-breaker"

    def __init__(self, f: int, N: int, T: int):
        if f < 1:
            raise ConfigurationError(f"need f >= 1, got {f}")
        if N < 2:
            raise ConfigurationError(f"need N >= 2 for a positive stall margin, got N={N}")
        if T < 1:
            raise ConfigurationError(f"need a positive round count, got T={T}")
        self.f = f
        self.N = N
        self.T = T
        self.delta = min(1.0, 4.0 - 4.0 * 2.0 ** (-(N - 1) / T))

    def canonical_family(self) -> np.ndarray:
        f = self.f
        return np.concatenate([-np.ones(2 * f), np.zeros(f), np.ones(2 * f)]).reshape(-1, 1)

    def _check_shape(self, state: RoundState) -> float:
        f = self.f
        vals = state.honest_values[:, 0]
        scale = float(vals[-1])
        expected = scale * np.concatenate([-np.ones(2 * f), np.zeros(f), np.ones(2 * f)])
        if state.dim != 1 or state.honest_values.shape[0] != 5 * f or not np.allclose(
            vals, expected, rtol=1e-7, atol=1e-9
        ):
            raise ConfigurationError(
                "family must keep the shape a * (-1 x 2f, 0 x f, 1 x 2f); "
                f"got {vals} at round {state.round_index}"
            )
        return scale

    def deliver(self, state: RoundState) -> RoundDelivery:
        cfg = state.cfg
        f = self.f
        if cfg.n != 6 * f or cfg.f != f or cfg.q != 5 * f or cfg.mode != MDA_QUORUM:
            raise ConfigurationError("six-f attack needs n=6f, q=5f in mda-quorum mode")
        scale = self._check_shape(state)
        low = tuple(range(1, 2 * f + 1))
        mid = tuple(range(2 * f + 1, 3 * f + 1))
        high = tuple(range(3 * f + 1, 5 * f + 1))
        byz = tuple(range(5 * f + 1, 6 * f + 1))
        low_vec = np.array([scale * (-2.0 + self.delta)])
        high_vec = np.array([scale * (2.0 - self.delta)])

        quorums = {}
        byz_values = {}
        for j in low:
            quorums[j] = low + mid + high[:f] + byz
            for b in byz:
                byz_values[(b, j)] = low_vec
        for j in mid:
            quorums[j] = low + mid + high
        for j in high:
            quorums[j] = low[:f] + mid + high + byz
            for b in byz:
                byz_values[(b, j)] = high_vec
        return RoundDelivery(quorums=quorums, byz_values=byz_values)


def six_f_attack(f: int, N: int, T: int):
    """Diameter-stalling attack instance at n = 6f.

    Returns ``(policy, family, delta)`` with
    ``delta = min(1, 4 - 4 * 2**(-(N-1)/T))``; after ``T`` rounds the
    honest diameter has shrunk by only ``(1 - delta/4)**T >= 2 / 2**N``,
    violating the required halving.
    """
    policy = SixFBreakerAdversary(f, N, T)
    return policy, policy.canonical_family(), policy.delta


PLUMBING_KINDS = ("null", "crash-subset", "random-noise", "mimic-extreme")


def plumbing_attacks(kind: str, **params) -> AdversaryPolicy:
    """Build one of the stressor policies by name.

    Raises:
        ConfigurationError: for an unknown kind or bad parameters.
    """
    if kind == "null":
        return NullAdversary()
    if kind == "crash-subset":
        return CrashSubsetAdversary(crashed=params.get("crashed", ()))
    if kind == "random-noise":
        return RandomNoiseAdversary(scale=params.get("scale", 1.0))
    if kind == "mimic-extreme":
        return MimicExtremeAdversary()
    raise ConfigurationError(f"unknown attack kind {kind!r}; expected one of {PLUMBING_KINDS}")
