import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prachml.errors import ConfigError
from prachml.rach import POLICIES, RachPolicy, paired_runs, sign_test, simulate
from prachml.traffic import TrafficModel
from prachml.zc import CellConfig

CELL = CellConfig()


def test_single_ue_succeeds_immediately():
    for kind in POLICIES:
        out = simulate(1, TrafficModel.fixed_single(), CELL, RachPolicy(kind), seed=3)
        assert out.success_at.tolist() == [0]
        assert out.access_delay.tolist() == [1]
        assert out.msg3_collisions.sum() == 0


def test_first_round_expectations():
    # singletons: 120 (63/64)^119 = 18.42; occupied preambles: 64 (1 - (63/64)^120) = 54.33
    assert 120 * (63 / 64) ** 119 == pytest.approx(18.42, abs=0.01)
    assert 64 * (1 - (63 / 64) ** 120) == pytest.approx(54.33, abs=0.01)
    s_succ, s_rar, a_succ, a_rar = [], [], [], []
    for seed in range(300):
        s = simulate(1, TrafficModel.fixed_count(120), CELL, RachPolicy("Standard"), seed=seed)
        a = simulate(1, TrafficModel.fixed_count(120), CELL, RachPolicy("MultiplicityAware"), seed=seed)
        s_succ.append(s.successes[0]); s_rar.append(s.rars_sent[0])
        a_succ.append(a.successes[0]); a_rar.append(a.rars_sent[0])
        # same UE stream: first-round decisions see the same collisions
        assert s.successes[0] == a.successes[0] == a.rars_sent[0]
    assert np.mean(s_succ) == pytest.approx(18.42, abs=0.5)
    assert np.mean(a_rar) == pytest.approx(18.42, abs=0.5)
    assert np.mean(s_rar) == pytest.approx(54.33, abs=0.5)


def test_oracle_aware_never_collides():
    for seed in range(10):
        out = simulate(1, TrafficModel.fixed_count(120), CELL, RachPolicy("MultiplicityAware"), seed=seed)
        assert out.msg3_collisions.sum() == 0


def test_dominance_with_oracle():
    for seed in range(10):
        a = simulate(1, TrafficModel.fixed_count(120), CELL, RachPolicy("MultiplicityAware"), seed=seed)
        s = simulate(1, TrafficModel.fixed_count(120), CELL, RachPolicy("Standard"), seed=seed)
        assert a.msg3_collisions.sum() == 0 <= s.msg3_collisions.sum()


def test_identity_confusion_equals_oracle():
    eye = np.eye(6)
    for kind in POLICIES:
        a = simulate(1, TrafficModel.fixed_count(120), CELL, RachPolicy(kind), seed=5)
        b = simulate(1, TrafficModel.fixed_count(120), CELL, RachPolicy(kind, eye), seed=5)
        for f in ("success_at", "n_attempts", "rars_sent", "msg3_collisions"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_stochastic_detector_follows_matrix():
    m = np.array([[0.9, 0.1], [0.3, 0.7]])
    pol = RachPolicy("Standard", m)
    est = pol.estimate(np.array([0] * 20000 + [1] * 20000 + [4] * 20000), np.random.default_rng(0))
    assert np.mean(est[:20000] == 1) == pytest.approx(0.1, abs=0.01)
    assert np.mean(est[20000:40000] == 0) == pytest.approx(0.3, abs=0.01)
    # counts above the last row reuse it
    assert np.mean(est[40000:] == 0) == pytest.approx(0.3, abs=0.01)


def test_policy_validation():
    with pytest.raises(ConfigError):
        RachPolicy("Greedy")
    with pytest.raises(ConfigError):
        RachPolicy("Standard", np.array([[0.5, 0.4], [0, 1]]))
    with pytest.raises(ConfigError):
        RachPolicy("Standard", np.ones((2, 3)) / 3)
    with pytest.raises(ConfigError):
        simulate(0, TrafficModel.fixed_single(), CELL, RachPolicy())


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 400), st.integers(1, 6), st.integers(1, 5), st.integers(0, 10**6),
       st.sampled_from(POLICIES), st.booleans())
def test_conservation(n_ue, backoff, max_attempts, seed, kind, noisy):
    conf = np.full((6, 6), 1 / 6) if noisy else None
    out = simulate(1, TrafficModel.fixed_count(n_ue), CELL, RachPolicy(kind, conf),
                   backoff=backoff, max_attempts=max_attempts, seed=seed)
    assert out.n_ue == n_ue
    assert not out.pending.any()
    assert np.all(out.succeeded ^ out.dropped)
    np.testing.assert_array_equal(out.successes + out.retries + out.drops, out.attempts)
    assert out.successes.sum() == out.succeeded.sum() and out.drops.sum() == out.dropped.sum()
    assert out.n_attempts.max(initial=0) <= max_attempts
    assert np.all(out.n_attempts[out.dropped] == max_attempts)


def test_beta_burst_runs_and_drains():
    t = TrafficModel.beta_burst(total_devices=3000)
    out = simulate(500, t, CELL, RachPolicy("MultiplicityAware"), seed=1)
    assert out.n_ue == 3000 and not out.pending.any()
    assert out.arrivals.sum() == 3000


def test_determinism():
    a = simulate(1, TrafficModel.fixed_count(120), CELL, RachPolicy("Standard", np.eye(6) * 0.88 + 0.02), seed=9)
    b = simulate(1, TrafficModel.fixed_count(120), CELL, RachPolicy("Standard", np.eye(6) * 0.88 + 0.02), seed=9)
    np.testing.assert_array_equal(a.success_at, b.success_at)


def test_paired_runs_and_sign_test():
    rows = paired_runs(5, TrafficModel.fixed_count(120), CELL, None)
    assert len(rows) == 10
    assert {r["policy"] for r in rows} == set(POLICIES)
    assert all(r["success_rate"] <= 1 for r in rows)
    # 20 of 20 paired wins: p = 2**-20
    wins, n, p = sign_test(np.zeros(20), np.ones(20))
    assert (wins, n) == (20, 20) and p == pytest.approx(2**-20)
    assert sign_test(np.ones(3), np.ones(3)) == (0, 0, 1.0)
