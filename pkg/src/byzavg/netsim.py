"""Deterministic round-based network simulation with an omniscient adversary.

One round works as follows: the adversary, seeing the full system state,
chooses per-node delivery sets (quorums) and the vectors the Byzantine nodes
send; each honest node then aggregates what it received with the configured
rule.  Asynchrony is captured entirely by the adversary's quorum choice, and
reliable-broadcast machinery is modeled by the constraints the delivery must
satisfy, not by a message-level protocol.

Two delivery modes exist:

* ``mda-quorum``: every honest node hears from exactly ``q`` nodes, at
  least ``q - f`` of them honest.  Byzantine nodes may equivocate (send
  different vectors to different recipients).
* ``rb-witness``: delivery sets may differ in size but must pairwise
  intersect in at least ``q`` nodes, and each Byzantine node is bound to a
  single vector per round (the uniqueness a reliable broadcast with a
  witness mechanism provides).

Node ids are 1-based: honest nodes are ``1..h``, Byzantine are ``h+1..n``.

All pseudo-randomness flows through :func:`substream`, a counter-based
(Philox) generator keyed by ``(seed, *path)`` so that adversaries, family
generators, and learning oracles draw independent, reproducible streams.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .aggregation import CollectedInputs, RuleOutput
from .errors import ConfigurationError, DeliveryViolation

__all__ = [
    "MDA_QUORUM",
    "RB_WITNESS",
    "SimConfig",
    "RoundDelivery",
    "RoundState",
    "RoundRecord",
    "ViolationReport",
    "AdversaryPolicy",
    "substream",
    "derive_seed",
    "validate_delivery",
    "run_round",
]

MDA_QUORUM = "mda-quorum"
RB_WITNESS = "rb-witness"
_MODES = (MDA_QUORUM, RB_WITNESS)

_MASK64 = (1 << 64) - 1
_KEY_SALT = 0x9E3779B97F4A7C15


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent, reproducible generator for the given (seed, path) cell.

    Counter-based: the path (up to four non-negative integers) indexes the
    Philox counter, the seed keys the stream.  Identical arguments always
    yield an identical stream; distinct paths yield independent streams.
    """
    if len(path) > 4:
        raise ConfigurationError("substream path is limited to 4 components")
    counter = [0, 0, 0, 0]
    for i, p in enumerate(path):
        p = int(p)
        if p < 0:
            raise ConfigurationError("substream path components must be non-negative")
        counter[i] = p & _MASK64
    key = (int(seed) & _MASK64) | (_KEY_SALT << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def derive_seed(seed: int, *path: int) -> int:
    """A child seed for an independent sub-experiment."""
    return int(substream(seed, *path).integers(0, 2**63 - 1))


@dataclass(frozen=True)
class SimConfig:
    """Network shape: ``n`` nodes, ``f`` Byzantine, quorum size ``q``.

    In ``mda-quorum`` mode liveness only guarantees the ``h = n - f`` honest
    messages, so ``q <= h`` is required; in ``rb-witness`` mode ``q <= n``.
    """

    n: int
    f: int
    q: int
    mode: str
    seed: int = 0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {_MODES}")
        if self.f < 0:
            raise ConfigurationError(f"f must be non-negative, got {self.f}")
        if self.h < 1:
            raise ConfigurationError(f"need at least one honest node (n={self.n}, f={self.f})")
        if self.q < 1:
            raise ConfigurationError(f"quorum size must be positive, got {self.q}")
        cap = self.h if self.mode == MDA_QUORUM else self.n
        if self.q > cap:
            raise ConfigurationError(
                f"quorum size q={self.q} exceeds {cap} ({self.mode} mode, n={self.n}, f={self.f})"
            )

    @property
    def h(self) -> int:
        return self.n - self.f

    @property
    def honest_ids(self) -> range:
        return range(1, self.h + 1)

    @property
    def byzantine_ids(self) -> range:
        return range(self.h + 1, self.n + 1)

    def is_honest(self, node_id: int) -> bool:
        return 1 <= node_id <= self.h


@dataclass(frozen=True)
class RoundDelivery:
    """What the adversary delivers in one round.

    ``quorums`` maps each honest id to its ordered delivery set.
    ``byz_values`` maps ``byz_id -> vector`` in rb-witness mode, and
    ``(byz_id, recipient_id) -> vector`` in mda-quorum mode (equivocation).
    """

    quorums: Mapping[int, Tuple[int, ...]]
    byz_values: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class ViolationReport:
    """First model constraint a delivery violated, with the nodes involved."""

    constraint: str
    nodes: Tuple[int, ...]
    detail: str

    def __str__(self):
        where = f" (nodes {', '.join(map(str, self.nodes))})" if self.nodes else ""
        return f"{self.constraint}{where}: {self.detail}"


@dataclass(frozen=True)
class RoundState:
    """Everything the (omniscient) adversary sees before choosing a delivery."""

    cfg: SimConfig
    honest_values: np.ndarray
    round_index: int

    def value(self, node_id: int) -> np.ndarray:
        if not self.cfg.is_honest(node_id):
            raise ConfigurationError(f"node {node_id} is not honest")
        return self.honest_values[node_id - 1]

    @property
    def dim(self) -> int:
        return self.honest_values.shape[1]


class AdversaryPolicy(ABC):
    """Per-round callback deciding Byzantine vectors and message delivery.

    The adversary is omniscient (it sees all honest state) but not
    omnipotent: the delivery it returns must satisfy the mode's constraints
    or the round is rejected.
    """

    name = "adversary"

    @abstractmethod
    def deliver(self, state: RoundState) -> RoundDelivery:
        """Return the round's delivery given full system state."""


def _check_vector(vec, dim: Optional[int]) -> Optional[str]:
    arr = np.asarray(vec, dtype=float)
    if arr.ndim != 1:
        return f"expected a 1-D vector, got shape {arr.shape}"
    if dim is not None and arr.shape[0] != dim:
        return f"expected dim {dim}, got {arr.shape[0]}"
    if not np.all(np.isfinite(arr)):
        return "vector has non-finite entries"
    return None


def validate_delivery(cfg: SimConfig, rd: RoundDelivery, dim: Optional[int] = None) -> Optional[ViolationReport]:
    """Check a delivery against the mode's constraints.

    Returns ``None`` when the delivery is valid, otherwise a report naming
    the first violated constraint.  Never raises on bad deliveries.
    """
    expected = set(cfg.honest_ids)
    got = set(rd.quorums.keys())
    if got != expected:
        missing = tuple(sorted(expected - got)) or tuple(sorted(got - expected))
        return ViolationReport("quorum-coverage", missing, "quorums must be given for exactly the honest nodes")

    for j in cfg.honest_ids:
        quorum = tuple(rd.quorums[j])
        if len(set(quorum)) != len(quorum):
            return ViolationReport("quorum-distinct", (j,), f"quorum {quorum} has repeated members")
        for member in quorum:
            if not (1 <= member <= cfg.n):
                return ViolationReport("quorum-members", (j, member), f"node id {member} outside 1..{cfg.n}")
        if cfg.mode == MDA_QUORUM:
            if len(quorum) != cfg.q:
                return ViolationReport("quorum-size", (j,), f"|Q| = {len(quorum)}, expected exactly q = {cfg.q}")
            honest_count = sum(1 for m in quorum if cfg.is_honest(m))
            if honest_count < cfg.q - cfg.f:
                return ViolationReport(
                    "quorum-honest-count", (j,),
                    f"only {honest_count} honest members, need at least q - f = {cfg.q - cfg.f}",
                )
            for member in quorum:
                if not cfg.is_honest(member):
                    if (member, j) not in rd.byz_values:
                        return ViolationReport(
                            "byzantine-value-missing", (member, j),
                            f"no vector from Byzantine {member} to recipient {j}",
                        )
                    problem = _check_vector(rd.byz_values[(member, j)], dim)
                    if problem:
                        return ViolationReport("byzantine-value-invalid", (member, j), problem)
        else:
            for member in quorum:
                if not cfg.is_honest(member):
                    if member not in rd.byz_values:
                        return ViolationReport(
                            "byzantine-value-missing", (member,),
                            f"no (unique) vector broadcast by Byzantine {member}",
                        )
                    problem = _check_vector(rd.byz_values[member], dim)
                    if problem:
                        return ViolationReport("byzantine-value-invalid", (member,), problem)

    if cfg.mode == RB_WITNESS:
        sets = {j: set(rd.quorums[j]) for j in cfg.honest_ids}
        for j in cfg.honest_ids:
            for k in cfg.honest_ids:
                if k < j:
                    continue
                inter = len(sets[j] & sets[k])
                if inter < cfg.q:
                    return ViolationReport(
                        "quorum-intersection", (j, k),
                        f"|Q({j}) ∩ Q({k})| = {inter} < q = {cfg.q}",
                    )
    return None


@dataclass(frozen=True)
class RoundRecord:
    """Per-round metadata kept when a caller asks for a full trace."""

    quorums: Dict[int, Tuple[int, ...]]
    outputs: Dict[int, RuleOutput]
    all_honest_quorums: bool


def run_round(
    cfg: SimConfig,
    honest_values: np.ndarray,
    adversary: AdversaryPolicy,
    rule,
    round_index: int = 0,
) -> tuple[np.ndarray, RoundRecord]:
    """Execute one communication round and return the new honest family.

    The adversary proposes a delivery for the current state; it is validated
    (a bad delivery raises :class:`DeliveryViolation` carrying the report);
    then each honest node aggregates its collected inputs with ``rule``.
    Honest contributions are always read from the canonical family, so the
    adversary can delay but never alter them.  Fully deterministic given
    ``(cfg, honest_values, adversary, round_index)``.
    """
    values = np.asarray(honest_values, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if values.shape[0] != cfg.h:
        raise ConfigurationError(f"expected {cfg.h} honest vectors, got {values.shape[0]}")
    values = values.copy()
    values.setflags(write=False)
    dim = values.shape[1]

    state = RoundState(cfg=cfg, honest_values=values, round_index=round_index)
    delivery = adversary.deliver(state)
    report = validate_delivery(cfg, delivery, dim)
    if report is not None:
        raise DeliveryViolation(report)

    new_values = np.empty_like(values)
    outputs: Dict[int, RuleOutput] = {}
    cache: Dict[Tuple[int, ...], RuleOutput] = {}
    all_honest = True

    for j in cfg.honest_ids:
        quorum = tuple(delivery.quorums[j])
        quorum_honest = all(cfg.is_honest(m) for m in quorum)
        all_honest = all_honest and quorum_honest
        # Identical collected families are aggregated once: safe whenever the
        # rule ignores the recipient's own vector and the Byzantine inputs
        # cannot depend on the recipient.
        cacheable = not rule.uses_own_vector and (quorum_honest or cfg.mode == RB_WITNESS)
        if cacheable and quorum in cache:
            out = cache[quorum]
        else:
            collected = np.empty((len(quorum), dim))
            for pos, member in enumerate(quorum):
                if cfg.is_honest(member):
                    collected[pos] = values[member - 1]
                elif cfg.mode == MDA_QUORUM:
                    collected[pos] = np.asarray(delivery.byz_values[(member, j)], dtype=float)
                else:
                    collected[pos] = np.asarray(delivery.byz_values[member], dtype=float)
            z = CollectedInputs(values=collected, source_ids=quorum)
            out = rule.apply(z, values[j - 1])
            if cacheable:
                cache[quorum] = out
        outputs[j] = out
        new_values[j - 1] = out.vector

    record = RoundRecord(
        quorums={j: tuple(delivery.quorums[j]) for j in cfg.honest_ids},
        outputs=outputs,
        all_honest_quorums=all_honest,
    )
    return new_values, record
