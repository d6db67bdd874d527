import math

import numpy as np
import pytest
from scipy.stats import binom

from advantage import EstimatorConfig, Variant, advantage_by_count
from envs import build_task_family, prior_correctness_exact
from exactsim import (
    SIMULATE_COLUMNS,
    Flow,
    FlowMode,
    exact_expected_advantages,
    exact_flow_gradient,
    exact_gradient_step,
    exact_passk_curve,
    flow_weights,
    nsr_dampening_probe,
    passk_from_prior,
    psr_nsr_decomposition,
    simulate,
    write_simulation,
)
from policy import ShapeError, TabularPolicy, all_sequences
from tests.conftest import make_task

PSR = FlowMode(mode=Flow.PSR_ONLY)
NSR = FlowMode(mode=Flow.NSR_ONLY)


def full_task(V, T):
    return make_task(V, T, [tuple(s) for s in all_sequences(V, T)])


def test_decomposition_examples():
    modsum = build_task_family("modsum", 4, 3, seed=0, params={"m": 4, "target": 0}).tasks[0]
    report = psr_nsr_decomposition(TabularPolicy.uniform(4, 3), modsum)
    assert (report.j_psr, report.j_nsr, report.j_total) == pytest.approx((0.25, 0.75, -0.5), abs=1e-12)

    report = psr_nsr_decomposition(TabularPolicy.random(3, 2, seed=1), make_task(3, 2, []))
    assert (report.j_psr, report.j_nsr, report.j_total) == pytest.approx((0.0, 1.0, -1.0), abs=1e-12)

    report = psr_nsr_decomposition(TabularPolicy.random(3, 2, seed=1), full_task(3, 2))
    assert (report.j_psr, report.j_nsr, report.j_total) == pytest.approx((1.0, 0.0, 1.0), abs=1e-12)

    with pytest.raises(ShapeError):
        psr_nsr_decomposition(TabularPolicy.uniform(3, 3), make_task(3, 2, []))


@pytest.mark.parametrize("seed", range(10))
def test_partition_identity(seed):
    task = build_task_family("subset", 3, 4, seed=seed, params={"density": 0.2}).tasks[0]
    policy = TabularPolicy.random(3, 4, scale=2.0, seed=seed)
    report = psr_nsr_decomposition(policy, task)
    assert report.j_psr + report.j_nsr == pytest.approx(1.0, abs=1e-12)
    assert report.j_total == pytest.approx(2 * prior_correctness_exact(policy, task) - 1, abs=1e-12)


def test_psr_on_full_space_has_zero_gradient():
    policy = TabularPolicy.random(3, 3, scale=1.5, seed=2)
    gradient = exact_flow_gradient(policy, full_task(3, 3), PSR)
    assert np.abs(gradient).max() <= 1e-14


def test_weighted_flow_is_psr_plus_nsr():
    task = build_task_family("subset", 3, 3, seed=4, params={"density": 0.4}).tasks[0]
    start = TabularPolicy.random(3, 3, seed=4)
    weighted = exact_gradient_step(start, task, FlowMode(mode=Flow.WEIGHTED, lam=1.0), 0.5)
    psr = exact_gradient_step(start, task, PSR, 0.5)
    nsr = exact_gradient_step(start, task, NSR, 0.5)
    np.testing.assert_allclose(
        weighted.logits - start.logits, (psr.logits - start.logits) + (nsr.logits - start.logits), rtol=0, atol=1e-12
    )


def test_psr_and_nsr_share_the_exact_direction():
    task = build_task_family("longtail", 3, 4, seed=6, params={"n_rare": 5}).tasks[0]
    policy = TabularPolicy.random(3, 4, seed=6)
    np.testing.assert_allclose(exact_flow_gradient(policy, task, PSR), exact_flow_gradient(policy, task, NSR), atol=1e-12)


def test_flow_mode_validation():
    with pytest.raises(ValueError):
        FlowMode(mode=Flow.WEIGHTED, lam=0.0)
    with pytest.raises(ValueError):
        FlowMode(mode=Flow.AGPO_EXPECTED, group_size=1)
    assert FlowMode(mode=Flow("grpo-expected")).estimator.variant is Variant.GRPO
    assert FlowMode(mode=Flow.AGPO_EXPECTED).estimator.variant is Variant.AGPO


def test_flow_weights():
    task = make_task(2, 2, [(0, 1)])
    policy = TabularPolicy.uniform(2, 2)
    assert flow_weights(policy, task, PSR).tolist() == [0.0, 1.0, 0.0, 0.0]
    assert flow_weights(policy, task, NSR).tolist() == [-1.0, 0.0, -1.0, -1.0]
    assert flow_weights(policy, task, FlowMode(mode=Flow.WEIGHTED, lam=0.1)).tolist() == [-1.0, 0.1, -1.0, -1.0]

    a_pos, a_neg = exact_expected_advantages(0.25, 8, EstimatorConfig())
    weights = flow_weights(policy, task, FlowMode(mode=Flow.AGPO_EXPECTED))
    np.testing.assert_allclose(weights, [a_neg, a_pos, a_neg, a_neg], atol=1e-15)


@pytest.mark.parametrize("variant", [Variant.AGPO, Variant.GRPO])
@pytest.mark.parametrize("p", [0.0, 0.1, 0.5, 0.9, 1.0])
def test_exact_expected_advantages(variant, p):
    G = 8
    cfg = EstimatorConfig(variant=variant)
    positive, negative = advantage_by_count(G, cfg)
    a_pos, a_neg = exact_expected_advantages(p, G, cfg)
    expected_pos = sum(binom.pmf(k, G - 1, p) * positive[k + 1] for k in range(G))
    expected_neg = sum(binom.pmf(k, G - 1, p) * negative[k] for k in range(G))
    assert a_pos == pytest.approx(expected_pos, abs=1e-12)
    assert a_neg == pytest.approx(expected_neg, abs=1e-12)
    if p == 1.0:
        assert a_pos == pytest.approx(0.0, abs=1e-12)
    if p == 0.0 and variant is Variant.AGPO:
        assert a_neg == pytest.approx(-1.0, abs=1e-12)


def test_exact_passk_examples():
    task = make_task(2, 1, [(0,)])
    assert exact_passk_curve(TabularPolicy.uniform(2, 1), task, [2])[2] == pytest.approx(0.75, abs=1e-12)
    assert exact_passk_curve(TabularPolicy.uniform(2, 1), make_task(2, 1, []), [1, 16, 256]) == {1: 0.0, 16: 0.0, 256: 0.0}
    assert exact_passk_curve(TabularPolicy.uniform(2, 1), full_task(2, 1), [1, 16]) == pytest.approx({1: 1.0, 16: 1.0})
    assert passk_from_prior(0.1, [1, 2]) == pytest.approx({1: 0.1, 2: 0.19})

    curve = exact_passk_curve(TabularPolicy.uniform(2, 2), make_task(2, 2, [(0, 0), (1, 1)]), [1], subset=[(1, 1)])
    assert curve[1] == pytest.approx(0.25, abs=1e-12)


def test_probe_examples():
    policy = TabularPolicy(2, 1, np.array([[math.log(99.0), 0.0]]))
    (row,) = nsr_dampening_probe(policy, (0,))
    assert row.pi_chosen == pytest.approx(0.99, abs=1e-12)
    assert row.gradient_magnitude == pytest.approx(0.01, abs=1e-12)

    (row,) = nsr_dampening_probe(TabularPolicy.uniform(2, 1), (1,))
    assert row.gradient_magnitude == pytest.approx(0.5, abs=1e-12)

    (row,) = nsr_dampening_probe(TabularPolicy(2, 1, np.array([[40.0, 0.0]])), (0,))
    assert row.gradient_magnitude < 1e-15


def test_probe_on_random_policies():
    rng = np.random.default_rng(77)
    for _ in range(1000):
        V, T = int(rng.integers(2, 6)), int(rng.integers(1, 5))
        policy = TabularPolicy.random(V, T, scale=float(rng.uniform(0, 4)), seed=int(rng.integers(2**31)))
        sequence = tuple(int(t) for t in rng.integers(V, size=T))
        rows = nsr_dampening_probe(policy, sequence)
        assert [r.token for r in rows] == list(sequence)
        assert [r.position for r in rows] == list(range(T))


@pytest.mark.parametrize("seed", range(5))
def test_small_psr_step_increases_correct_mass(seed):
    task = build_task_family("subset", 3, 3, seed=seed, params={"density": 0.3}).tasks[0]
    policy = TabularPolicy.random(3, 3, scale=1.0, seed=seed)
    before = psr_nsr_decomposition(policy, task).j_psr
    after = psr_nsr_decomposition(exact_gradient_step(policy, task, PSR, 1e-4), task).j_psr
    assert after - before >= -1e-10


def test_psr_flow_shrinks_the_rare_paths():
    suite = build_task_family("longtail", 4, 6, seed=2024, params={"n_tasks": 20, "n_rare": 8})
    start = {t.prompt_id: TabularPolicy.uniform(4, 6, t.prompt_id) for t in suite.tasks}
    _, final = simulate(suite, PSR, steps=300, learning_rate=5.0)

    def mass(policy, paths, task):
        return float(policy.sequence_probabilities()[task.subset_mask(paths)].sum())

    rare_before = sum(mass(start[t.prompt_id], t.rare_paths(), t) for t in suite.tasks)
    rare_after = sum(mass(final[t.prompt_id], t.rare_paths(), t) for t in suite.tasks)
    assert rare_after < rare_before
    for task in suite.tasks:
        cluster = task.cluster_paths()
        assert mass(final[task.prompt_id], cluster, task) > mass(start[task.prompt_id], cluster, task)

    passk_before = np.mean([exact_passk_curve(start[t.prompt_id], t, [16], t.rare_paths())[16] for t in suite.tasks])
    passk_after = np.mean([exact_passk_curve(final[t.prompt_id], t, [16], t.rare_paths())[16] for t in suite.tasks])
    assert passk_after < passk_before


def test_nsr_flow_never_decreases_correct_mass():
    rng = np.random.default_rng(11)
    for trial in range(10):
        V, T = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        task = build_task_family("subset", V, T, seed=trial, params={"density": float(rng.uniform(0.05, 0.9))}).tasks[0]
        if not task.correct_set:
            continue
        policy = TabularPolicy.random(V, T, scale=1.0, seed=trial)
        for _ in range(50):
            before = prior_correctness_exact(policy, task)
            policy = exact_gradient_step(policy, task, NSR, 0.1)
            assert prior_correctness_exact(policy, task) >= before - 1e-12


def test_simulate_frame(tmp_path):
    suite = build_task_family("subset", 3, 3, seed=1, params={"n_tasks": 2, "density": [0.2, 0.5]})
    frame, policies = simulate(suite, FlowMode(mode=Flow.AGPO_EXPECTED), steps=5, learning_rate=0.5)
    assert list(frame.columns) == SIMULATE_COLUMNS
    assert frame["step"].tolist() == list(range(6))
    densities = np.mean([t.density for t in suite.tasks])
    assert frame["j_psr"].iloc[0] == pytest.approx(densities, abs=1e-12)
    assert frame["entropy"].iloc[0] == pytest.approx(math.log(3), abs=1e-12)
    np.testing.assert_allclose(frame["j_psr"] + frame["j_nsr"], 1.0, atol=1e-12)
    assert set(policies) == {t.prompt_id for t in suite.tasks}

    path = tmp_path / "sim" / "psr.csv"
    write_simulation(frame, str(path))
    assert path.read_text().splitlines()[0] == ",".join(SIMULATE_COLUMNS)


def test_simulate_zero_steps_returns_start():
    suite = build_task_family("subset", 2, 2, seed=0, params={"density": 0.5})
    frame, policies = simulate(suite, PSR, steps=0, learning_rate=0.5)
    assert len(frame) == 1
    assert np.all(policies["subset-000"].logits == 0.0)
