"""Acceptance runs on the reference scenario.

Each test records one PASS/FAIL line (printed again in the terminal summary)
and then asserts it.  The long runs are shared through module fixtures.
"""
import time

import numpy as np
import pytest

from mmwsched.config import HEAVY_BLOCKAGE, LIGHT_BLOCKAGE, ScenarioConfig, parse_scenario
from mmwsched.harness import first_below, moving_average, test as run_test, train

TEST_SEED = 1000
N_TEST = 200
N_BLOCK_TEST = 20
N_RUNS = 10
CAP = 240


def fmt(p):
    return ", ".join("%g" % x for x in p)


# topology and blockage changes every 100 iterations, growing in size
SCHEDULE = f"""
change.100.ue_distances = 11, 9, 16, 24, 31
change.100.ue_angles_deg = 10, 80, 50, 15, 75
change.200.ue_distances = 14, 8, 12, 20, 26
change.200.ue_angles_deg = 30, 60, 20, 40, 70
change.200.block_p.3 = 0, 0.08, 0.08, 0.08, 0.08, 0.08
change.200.block_p.5 = 0, 0.01, 0.01, 0.01, 0.01, 0.01
change.300.ue_distances = 20, 12, 9, 10, 18
change.300.ue_angles_deg = 70, 10, 80, 50, 30
change.300.block_p.1 = {fmt(HEAVY_BLOCKAGE)}
change.300.block_p.3 = {fmt(LIGHT_BLOCKAGE)}
change.300.block_p.5 = {fmt(LIGHT_BLOCKAGE)}
"""


@pytest.fixture(scope="module")
def cfg():
    return ScenarioConfig()


@pytest.fixture(scope="module")
def mab_run(cfg):
    t = time.time()
    rows, ctl, _ = train(cfg, "mab", 0)
    return rows, ctl, time.time() - t


@pytest.fixture(scope="module")
def no_relay_run(cfg):
    t = time.time()
    rows, _, _ = train(cfg, "mab-no-relay", 0)
    return rows, time.time() - t


@pytest.fixture(scope="module")
def ppo_run(cfg):
    rows, ctl, _ = train(cfg, "ppo", 0)
    return rows, ctl


@pytest.fixture(scope="module")
def mab_test(cfg, mab_run):
    rows, pooled, _ = run_test(cfg, "mab", TEST_SEED, N_TEST, controller=mab_run[1])
    return rows, pooled


@pytest.fixture(scope="module")
def ppo_test(cfg, ppo_run):
    rows, pooled, _ = run_test(cfg, "ppo", TEST_SEED, N_TEST, controller=ppo_run[1])
    return rows, pooled


def test_criterion_1_stability_with_relays(mab_run, no_relay_run, report):
    rows, _, t_mab = mab_run
    nr_rows, t_nr = no_relay_run
    rate = np.mean([r.rate_gbps for r in rows[-50:]])
    nr_rate = np.mean([r.rate_gbps for r in nr_rows[-50:]])
    ue3 = np.array([r.backlog[2] for r in nr_rows[-50:]])
    growing = bool(np.all(np.diff(ue3) >= 0) and ue3[-1] > ue3[0])
    runtime = t_mab + t_nr
    ok = abs(rate - 1.0) <= 0.02 and nr_rate < 0.98 and growing and runtime < 300
    report(1, ok, "relay rate %.4f Gbps (1.00 +/- 2%%); no-relay rate %.4f (< 0.98), UE3 backlog %d -> %d "
                  "monotone=%s; runtime %.0f s (< 300)" % (rate, nr_rate, ue3[0], ue3[-1], growing, runtime))
    assert ok


def test_criterion_2_blockage_avoidance(mab_test, ppo_test, report):
    mab = np.mean([r.blockage_pct for r in mab_test[0][:N_BLOCK_TEST]])
    ppo = np.mean([r.blockage_pct for r in ppo_test[0][:N_BLOCK_TEST]])
    ok = mab < 10.0 and ppo < 7.0
    report(2, ok, "blocked slots over %d test realizations: MAB %.2f%% (< 10), PPO %.2f%% (< 7)"
           % (N_BLOCK_TEST, mab, ppo))
    assert ok


def test_criterion_3_delay(mab_test, ppo_test, report):
    mab, ppo = mab_test[1], ppo_test[1]
    ok = 15.0 <= ppo.avg_delay_ms <= 45.0 and 30.0 <= mab.avg_delay_ms <= 70.0 and ppo.avg_delay_ms < mab.avg_delay_ms
    report(3, ok, "delay over %d test realizations: PPO %.2f ms in [15, 45] (rate %.4f Gbps), "
                  "MAB %.2f ms in [30, 70] (rate %.4f Gbps), PPO < MAB"
           % (N_TEST, ppo.avg_delay_ms, ppo.rate_gbps, mab.avg_delay_ms, mab.rate_gbps))
    assert ok


def crossing(cfg, kind, seed, rows=None):
    if rows is None:
        rows, _, _ = train(cfg, kind, seed, CAP, stop=lambda rs: first_below(rs, 100.0) is not None)
    it = first_below(rows, 100.0)
    return CAP + 1 if it is None else it


def test_criterion_4_sample_complexity(cfg, mab_run, ppo_run, report):
    mab = [crossing(cfg, "mab", 0, mab_run[0])] + [crossing(cfg, "mab", s) for s in range(1, N_RUNS)]
    ppo = [crossing(cfg, "ppo", 0, ppo_run[0])] + [crossing(cfg, "ppo", s) for s in range(1, N_RUNS)]
    m, p = np.mean(mab), np.mean(ppo)
    ok = m <= 20 and m < p
    report(4, ok, "first iteration with 5-iteration mean delay < 100 ms over %d runs: MAB %.1f (<= 20) %s, "
                  "PPO %.1f %s, MAB < PPO (%d = not reached in %d)" % (N_RUNS, m, mab, p, ppo, CAP + 1, CAP))
    assert ok


def reconvergence(delays, change, length=100, band=1.25, window=5, settled=20):
    """Iterations after ``change`` until the first post-change ``window`` mean is within
    ``band`` times the level the segment settles at (its last ``settled`` iterations)."""
    seg = np.asarray(delays[change:change + length])
    level = seg[-settled:].mean()
    hit = np.flatnonzero(moving_average(seg, window) <= band * level)
    return (int(hit[0]) + window if hit.size else length + 1), level


def test_reconvergence_helper():
    flat = [50.0] * 300
    assert reconvergence(flat, 100)[0] == 5
    spike = [50.0] * 100 + [500.0] * 30 + [50.0] * 70
    assert reconvergence(spike, 100)[0] == 35


def test_criterion_5_scenario_change(report):
    cfg = parse_scenario(SCHEDULE)
    rows, _, _ = train(cfg, "ppo", 0, 400)
    delays = [r.avg_delay_ms for r in rows]
    (small, l1), (medium, l2), (large, l3) = (reconvergence(delays, c) for c in (100, 200, 300))
    ok = small <= 5 and large <= 60 and small < medium < large
    report(5, ok, "PPO re-convergence after change: small %d (<= 5), medium %d, large %d (<= 60), "
                  "small < medium < large; settled delays %.1f / %.1f / %.1f ms" % (small, medium, large, l1, l2, l3))
    assert ok


def test_criterion_6_unit_property_suite(report):
    import test_channel
    import test_env
    import test_mab
    import test_nn
    import test_pomdp
    import test_ppo

    checks = [
        ("queue recursion replay", test_env.test_eq1_replay_and_conservation),
        ("C normal table", test_channel.test_normal_coefficients_match_hand_values),
        ("C tracking table", test_channel.test_tracking_coefficients_match_hand_values),
        ("|A| = 180", test_pomdp.test_action_space_size),
        ("mask counts", test_pomdp.test_mask_with_two_d2d_ues),
        ("GAE oracle", test_ppo.test_gae_matches_bootstrapped_return_oracle),
        ("FD gradient", lambda: [test_nn.test_gradient_matches_central_differences(a, s)
                                 for a in test_nn.TOY for s in range(4)]),
        ("Dirichlet audit", test_mab.test_dirichlet_count_audit),
        ("init audit", test_mab.test_init_exploration_covers_every_action),
        ("Bernoulli 0.904", test_mab.test_bernoulli_thinning_frequency),
        ("softmax normalization", test_nn.test_masked_softmax_properties),
    ]
    failed = []
    for name, fn in checks:
        try:
            fn()
        except AssertionError:
            failed.append(name)
    ok = not failed
    report(6, ok, "%d/%d unit checks pass%s" % (len(checks) - len(failed), len(checks),
                                                 "; failed: " + ", ".join(failed) if failed else ""))
    assert ok
