import numpy as np
import pytest

from byzavg.adversaries import NullAdversary, RandomNoiseAdversary
from byzavg.aggregation import MdaRule, TrimmedMeanRule
from byzavg.errors import ConfigurationError, DeliveryViolation
from byzavg.netsim import (
    MDA_QUORUM,
    RB_WITNESS,
    AdversaryPolicy,
    RoundDelivery,
    RoundState,
    SimConfig,
    run_round,
    substream,
    validate_delivery,
)


def test_simconfig_validation():
    SimConfig(n=7, f=1, q=6, mode=MDA_QUORUM)
    with pytest.raises(ConfigurationError):
        SimConfig(n=7, f=1, q=7, mode=MDA_QUORUM)  # q > h
    SimConfig(n=7, f=1, q=7, mode=RB_WITNESS)
    with pytest.raises(ConfigurationError):
        SimConfig(n=7, f=1, q=8, mode=RB_WITNESS)
    with pytest.raises(ConfigurationError):
        SimConfig(n=2, f=2, q=1, mode=RB_WITNESS)  # no honest nodes
    with pytest.raises(ConfigurationError):
        SimConfig(n=4, f=1, q=3, mode="bogus")


def test_substream_reproducible_and_split():
    a = substream(5, 1, 2, 3).standard_normal(4)
    b = substream(5, 1, 2, 3).standard_normal(4)
    c = substream(5, 1, 2, 4).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ConfigurationError):
        substream(5, 1, 2, 3, 4, 5)
    with pytest.raises(ConfigurationError):
        substream(5, -1)


class TestValidateDelivery:
    def test_witness_intersection_violation(self):
        cfg = SimConfig(n=4, f=1, q=3, mode=RB_WITNESS)
        quorums = {1: (1, 2, 3), 2: (1, 2, 4), 3: (1, 2, 3, 4)}
        rd = RoundDelivery(quorums=quorums, byz_values={4: np.zeros(1)})
        report = validate_delivery(cfg, rd, 1)
        assert report is not None
        assert report.constraint == "quorum-intersection"
        assert set(report.nodes) == {1, 2}

    def test_witness_full_quorums_ok(self):
        cfg = SimConfig(n=4, f=1, q=3, mode=RB_WITNESS)
        everyone = tuple(range(1, 5))
        rd = RoundDelivery(
            quorums={j: everyone for j in (1, 2, 3)}, byz_values={4: np.zeros(2)}
        )
        assert validate_delivery(cfg, rd, 2) is None

    def test_quorum_size_violation(self):
        cfg = SimConfig(n=7, f=1, q=6, mode=MDA_QUORUM)
        quorums = {j: (1, 2, 3, 4, 5) for j in range(1, 7)}
        report = validate_delivery(cfg, RoundDelivery(quorums=quorums), 1)
        assert report is not None and report.constraint == "quorum-size"

    def test_missing_byzantine_value(self):
        cfg = SimConfig(n=7, f=1, q=6, mode=MDA_QUORUM)
        quorums = {j: (1, 2, 3, 4, 5, 7) for j in range(1, 7)}
        report = validate_delivery(cfg, RoundDelivery(quorums=quorums), 1)
        assert report is not None and report.constraint == "byzantine-value-missing"

    def test_honest_count_boundary(self):
        # Exactly q - f honest members is the legal minimum.  (With distinct
        # ids and only f Byzantine ids in existence it cannot be undershot,
        # so the floor is the tight case.)
        cfg = SimConfig(n=13, f=2, q=11, mode=MDA_QUORUM)
        edge = tuple(range(1, 10)) + (12, 13)
        quorums = {j: edge for j in range(1, 12)}
        byz = {(b, j): np.zeros(1) for b in (12, 13) for j in range(1, 12)}
        assert validate_delivery(cfg, RoundDelivery(quorums, byz), 1) is None

    def test_coverage_and_duplicates(self):
        cfg = SimConfig(n=4, f=1, q=3, mode=MDA_QUORUM)
        report = validate_delivery(cfg, RoundDelivery(quorums={1: (1, 2, 3)}), 1)
        assert report is not None and report.constraint == "quorum-coverage"
        quorums = {j: (1, 1, 2) for j in (1, 2, 3)}
        report = validate_delivery(cfg, RoundDelivery(quorums=quorums), 1)
        assert report is not None and report.constraint == "quorum-distinct"


class _BadQuorumAdversary(AdversaryPolicy):
    def deliver(self, state):
        quorums = {j: tuple(range(1, state.cfg.q)) for j in state.cfg.honest_ids}
        return RoundDelivery(quorums=quorums)


class _TamperingAdversary(AdversaryPolicy):
    def deliver(self, state):
        state.honest_values[0, 0] = 1e9  # must fail: honest state is read-only
        raise AssertionError("unreachable")


def test_run_round_mean_under_null_adversary():
    cfg = SimConfig(n=7, f=1, q=6, mode=MDA_QUORUM)
    vals = np.arange(6.0).reshape(-1, 1)
    out, record = run_round(cfg, vals, NullAdversary(), TrimmedMeanRule(0))
    assert np.allclose(out, vals.mean(), rtol=0, atol=1e-12)
    assert record.all_honest_quorums


def test_run_round_agreeing_family_is_fixed_point():
    cfg = SimConfig(n=7, f=1, q=6, mode=MDA_QUORUM, seed=3)
    x = np.array([0.1, -1 / 3])
    vals = np.tile(x, (6, 1))
    out, _ = run_round(cfg, vals, RandomNoiseAdversary(scale=100.0), MdaRule(1))
    assert np.array_equal(out, vals)


def test_run_round_rejects_invalid_delivery():
    cfg = SimConfig(n=7, f=1, q=6, mode=MDA_QUORUM)
    with pytest.raises(DeliveryViolation) as err:
        run_round(cfg, np.zeros((6, 1)), _BadQuorumAdversary(), MdaRule(1))
    assert err.value.report.constraint == "quorum-size"


def test_adversary_cannot_alter_honest_state():
    cfg = SimConfig(n=7, f=1, q=6, mode=MDA_QUORUM)
    with pytest.raises(ValueError):
        run_round(cfg, np.zeros((6, 1)), _TamperingAdversary(), MdaRule(1))


def test_run_round_determinism():
    cfg = SimConfig(n=7, f=1, q=6, mode=MDA_QUORUM, seed=17)
    vals = substream(1, 2).standard_normal((6, 3))
    adv = RandomNoiseAdversary(scale=5.0)
    a, _ = run_round(cfg, vals, adv, MdaRule(1), round_index=4)
    b, _ = run_round(cfg, vals, adv, MdaRule(1), round_index=4)
    c, _ = run_round(cfg, vals, adv, MdaRule(1), round_index=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_run_round_wrong_family_size():
    cfg = SimConfig(n=7, f=1, q=6, mode=MDA_QUORUM)
    with pytest.raises(ConfigurationError):
        run_round(cfg, np.zeros((5, 1)), NullAdversary(), MdaRule(1))


def test_state_value_lookup():
    cfg = SimConfig(n=4, f=1, q=3, mode=MDA_QUORUM)
    state = RoundState(cfg=cfg, honest_values=np.arange(3.0).reshape(-1, 1), round_index=0)
    assert state.value(2)[0] == 1.0
    with pytest.raises(ConfigurationError):
        state.value(4)
