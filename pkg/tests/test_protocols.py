import math

import numpy as np
import pytest

from byzavg.adversaries import NullAdversary, RandomNoiseAdversary
from byzavg.errors import ConfigurationError, InfeasibleConfigError
from byzavg.protocols import (
    MDA,
    RBTM,
    ProtocolConfig,
    check_avg_bounds,
    derive_mda_config,
    derive_rbtm_config,
    mda_rounds,
    mean_drift_constant,
    rbtm_rounds,
    run_avg,
)
from byzavg.vectors import diameter_l2, family_mean

from conftest import assert_bounded


class TestDeriveMda:
    def test_seven_one(self):
        cfg = derive_mda_config(7, 1)
        assert cfg.epsilon == pytest.approx(1 / 9, rel=1e-12)
        assert cfg.epsilon_tilde == pytest.approx(0.2, rel=1e-12)
        assert cfg.q == 6
        assert cfg.averaging_constant == pytest.approx(16 / 6, rel=1e-12)

    def test_six_one_infeasible(self):
        with pytest.raises(InfeasibleConfigError):
            derive_mda_config(6, 1)

    def test_thirteen_two(self):
        # The feasibility inequality pins the minimal quorum at
        # (1+e)/2*h + (5+3e)/2*f = 187/17 = 11 for the maximal slack 1/17.
        cfg = derive_mda_config(13, 2)
        assert cfg.epsilon == pytest.approx(1 / 17, rel=1e-12)
        assert cfg.epsilon_tilde == pytest.approx(1 / 9, rel=1e-12)
        assert cfg.q == 11

    def test_epsilon_override(self):
        cfg = derive_mda_config(25, 1, epsilon=0.5)
        assert cfg.epsilon == 0.5
        assert cfg.q >= math.ceil(0.75 * 24 + 3.25)
        with pytest.raises(ConfigurationError):
            derive_mda_config(7, 1, epsilon=0.5)  # above the feasible range

    def test_f_zero_short_circuit(self):
        cfg = derive_mda_config(5, 0)
        assert cfg.epsilon_tilde == 1.0
        assert cfg.averaging_constant == 0.0
        assert cfg.q == 5

    def test_maximal_slack_forces_full_quorum(self):
        for n, f in ((7, 1), (13, 2), (20, 3), (50, 8)):
            cfg = derive_mda_config(n, f)
            assert cfg.q == cfg.h


class TestDeriveRbtm:
    def test_four_one(self):
        cfg = derive_rbtm_config(4, 1)
        assert cfg.epsilon == 1.0
        assert cfg.epsilon_tilde == 0.5
        assert cfg.q == 3
        assert cfg.averaging_constant == pytest.approx(4 / math.sqrt(3), rel=1e-12)

    def test_three_one_infeasible(self):
        with pytest.raises(InfeasibleConfigError):
            derive_rbtm_config(3, 1)

    def test_f_zero(self):
        cfg = derive_rbtm_config(10, 0)
        assert cfg.averaging_constant == 0.0
        assert cfg.q == 10
        run = run_avg(cfg, np.arange(10.0), 1, NullAdversary())
        assert np.allclose(run.output, 4.5, rtol=0, atol=1e-12)


def test_round_formulas():
    assert mda_rounds(1, 0.2) == 4
    assert mda_rounds(0, 0.7) == 0
    assert mda_rounds(3, 0.2) == 11
    assert rbtm_rounds(1, 0.5, 3) == 4
    assert rbtm_rounds(0, 1.0, 1) == 1
    assert rbtm_rounds(2, 0.5, 4) == 6
    with pytest.raises(ConfigurationError):
        mda_rounds(-1, 0.2)
    with pytest.raises(ConfigurationError):
        rbtm_rounds(1, 0.0, 3)


def test_protocol_config_invariant_enforcement():
    with pytest.raises(ConfigurationError):
        ProtocolConfig(MDA, 7, 1, 5, 1 / 9, 0.2, 1.0)  # q below the feasible minimum
    with pytest.raises(ConfigurationError):
        ProtocolConfig(RBTM, 4, 1, 2, 1.0, 0.5, 1.0)  # q != n - f
    with pytest.raises(ConfigurationError):
        ProtocolConfig(MDA, 7, 1, 6, 1.5, 0.2, 1.0)  # epsilon out of range


class TestRunAvg:
    def test_identity_at_level_zero(self):
        cfg = derive_mda_config(7, 1)
        X = np.arange(6.0).reshape(-1, 1)
        run = run_avg(cfg, X, 0, NullAdversary())
        assert run.rounds == 0
        assert np.array_equal(run.output, X)
        assert all(check.ok for check in check_avg_bounds(run))

    def test_agreeing_family_any_adversary(self):
        cfg = derive_mda_config(7, 1)
        X = np.tile(np.array([0.3, 0.7]), (6, 1))
        run = run_avg(cfg, X, 3, RandomNoiseAdversary(scale=1000.0), seed=5)
        assert np.array_equal(run.output, X)

    def test_null_adversary_contracts_to_quarter(self):
        cfg = derive_mda_config(7, 1)
        X = np.array([0.0, 0, 0, 0, 1, 1]).reshape(-1, 1)
        run = run_avg(cfg, X, 2, NullAdversary())
        assert_bounded(diameter_l2(run.output), diameter_l2(X) / 4)

    def test_trace_contents(self):
        cfg = derive_rbtm_config(4, 1)
        X = np.array([[0.0, 1.0], [2.0, -1.0], [4.0, 0.5]])
        run = run_avg(cfg, X, 1, RandomNoiseAdversary(2.0), seed=9, full_trace=True)
        assert run.rounds == rbtm_rounds(1, cfg.epsilon_tilde, cfg.h) == 4
        assert len(run.trace) == run.rounds
        assert len(run.families) == run.rounds + 1
        assert run.records is not None and len(run.records) == run.rounds
        for s in run.trace:
            assert s.delta2 >= 0 and s.delta_cw2 >= 0

    def test_family_size_mismatch(self):
        cfg = derive_mda_config(7, 1)
        with pytest.raises(ConfigurationError):
            run_avg(cfg, np.zeros((5, 1)), 1, NullAdversary())

    def test_determinism(self):
        cfg = derive_rbtm_config(4, 1)
        X = np.array([[0.0], [2.0], [5.0]])
        a = run_avg(cfg, X, 2, RandomNoiseAdversary(3.0), seed=11)
        b = run_avg(cfg, X, 2, RandomNoiseAdversary(3.0), seed=11)
        assert np.array_equal(a.output, b.output)
        assert [s.delta2 for s in a.trace] == [s.delta2 for s in b.trace]

    def test_bounds_hold_under_stress(self):
        cfg = derive_mda_config(7, 1)
        X = np.array([-3.0, -1, 0, 1, 2, 8]).reshape(-1, 1)
        run = run_avg(cfg, X, 2, RandomNoiseAdversary(scale=100.0), seed=2)
        for check in check_avg_bounds(run):
            assert check.ok, check

    def test_mean_drift_constant_values(self):
        cfg = derive_mda_config(7, 1)
        assert mean_drift_constant(cfg) == pytest.approx(16 / 30, rel=1e-12)
        # At a full quorum q = n the same formula collapses to 2f/h.
        n, f = 7, 1
        h, q = n - f, n
        full_quorum = ((2 * f + h - q) * q + (q - 2 * f) * f) / (h * (q - f))
        assert full_quorum == pytest.approx(2 * f / h, rel=1e-12)
