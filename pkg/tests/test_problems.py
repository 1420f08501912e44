import numpy as np
import pytest

from adaalter.problems import (
    build_problem,
    dump_shards_csv,
    finite_diff_gradient,
    partition_non_iid,
)


def build(kind="quadratic", **kw):
    defaults = dict(d=6, n_workers=3, problem_seed=0, n_samples=120, n_clusters=4)
    defaults.update(kw)
    return build_problem(kind, **defaults)


@pytest.mark.parametrize("kind", ["quadratic", "sin-perturbed-quadratic", "logistic"])
def test_full_gradient_matches_finite_differences(kind):
    p = build(kind)
    rng = np.random.default_rng(10)
    for _ in range(100):
        x = rng.standard_normal(p.d)
        g = p.full_gradient(x)
        fd = finite_diff_gradient(p, x, h=1e-6)
        assert np.linalg.norm(fd - g) <= 1e-5 * (1.0 + np.linalg.norm(g))


def test_quadratic_stationary_point():
    p = build("quadratic")
    x_star = np.linalg.solve(p.A, p.global_mean)
    assert np.linalg.norm(p.full_gradient(x_star)) < 1e-10
    assert p.analytic_min() == pytest.approx(p.full_loss(x_star), abs=1e-12)
    # no point does better along random directions
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert p.full_loss(x_star + 0.1 * rng.standard_normal(p.d)) >= p.analytic_min()


def test_identity_hessian_case():
    # eigenvalues all 1 and centered data with no noise: F(x) = x'x/2, grad = x
    p = build("quadratic", quad_lmin=1.0, quad_lmax=1.0, cluster_spread=0.0, sample_noise=0.0)
    x = np.array([3.0, -1.0, 0.0, 2.0, 1.0, -4.0])
    assert np.allclose(p.full_gradient(x), x, atol=1e-12)


def test_smoothness_witness_quadratic():
    p = build("quadratic", d=8)
    rng = np.random.default_rng(2)
    for _ in range(100):
        x = rng.standard_normal(8) * 3
        y = rng.standard_normal(8) * 3
        lhs = np.linalg.norm(p.full_gradient(x) - p.full_gradient(y))
        assert lhs <= p.smoothness * np.linalg.norm(x - y) * (1 + 1e-10) + 1e-12


def test_smoothness_witness_other_kinds():
    for kind in ("sin-perturbed-quadratic", "logistic"):
        p = build(kind, d=5)
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = rng.standard_normal(5) * 2
            y = rng.standard_normal(5) * 2
            lhs = np.linalg.norm(p.full_gradient(x) - p.full_gradient(y))
            assert lhs <= p.smoothness * np.linalg.norm(x - y) * (1 + 1e-10) + 1e-12


def test_full_eval_consistency():
    for kind in ("quadratic", "sin-perturbed-quadratic", "logistic"):
        p = build(kind)
        rng = np.random.default_rng(4)
        for _ in range(10):
            x = rng.standard_normal(p.d)
            loss, grad = p.full_eval(x)
            assert loss == pytest.approx(p.full_loss(x), rel=1e-12, abs=1e-12)
            assert np.allclose(grad, p.full_gradient(x), rtol=1e-12, atol=1e-12)


def test_full_loss_is_mean_of_shard_losses():
    p = build("sin-perturbed-quadratic")
    x = np.linspace(-1, 1, p.d)
    mean = sum(p.shard_loss(x, i) for i in range(p.n_workers)) / p.n_workers
    assert p.full_loss(x) == pytest.approx(mean, rel=1e-15)


def test_stochastic_gradient_full_batch_mode():
    p = build("quadratic")
    x = np.ones(p.d)
    rng = np.random.default_rng(5)
    g = p.stochastic_gradient(x, 1, rng, batch_size=0)
    assert np.array_equal(g, p.shard_gradient(x, 1))


def test_stochastic_gradient_unbiased():
    p = build("quadratic", n_samples=96)
    x = np.full(p.d, 0.7)
    exact = p.shard_gradient(x, 0)
    rng = np.random.default_rng(6)
    draws = np.stack([p.stochastic_gradient(x, 0, rng, batch_size=1) for _ in range(100_000)])
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert (np.abs(draws.mean(axis=0) - exact) <= 3.0 * se + 1e-12).all()


def test_clipping():
    p = build("quadratic", clip_rho=0.5)
    x = np.full(p.d, 50.0)  # far out, raw coordinates big
    rng = np.random.default_rng(7)
    g = p.stochastic_gradient(x, 0, rng, batch_size=2)
    assert (np.abs(g) <= 0.5).all()
    assert np.abs(g).max() == 0.5  # the clip actually engaged
    raw = p.shard_gradient(x, 0)
    assert np.abs(raw).max() > 0.5


def test_clipping_bounds_long_run():
    p = build("sin-perturbed-quadratic", clip_rho=0.8)
    rng = np.random.default_rng(8)
    x = p.x0.copy()
    worst = 0.0
    for _ in range(10_000):
        g = p.stochastic_gradient(x, 2, rng, batch_size=1)
        worst = max(worst, float(np.abs(g).max()))
        x = x - 0.05 * g
    assert worst <= 0.8


def test_unknown_worker_id():
    p = build()
    with pytest.raises(ValueError, match="unknown worker"):
        p.stochastic_gradient(np.zeros(p.d), 99, np.random.default_rng(0))
    with pytest.raises(ValueError, match="unknown worker"):
        p.shard_gradient(np.zeros(p.d), -1)


# -- partitioning -------------------------------------------------------


def test_partition_single_worker():
    rng = np.random.default_rng(0)
    labels = np.array([0, 1, 0, 1, 2])
    shards = partition_non_iid(labels, 1, 0.5, rng)
    assert len(shards) == 1
    assert np.array_equal(shards[0].indices, np.arange(5))


def test_partition_sorted_two_class():
    rng = np.random.default_rng(1)
    labels = np.array([1, 0] * 10)
    shards = partition_non_iid(labels, 2, 1.0, rng)
    for shard in shards:
        assert len(set(labels[shard.indices])) == 1
    assert {labels[s.indices][0] for s in shards} == {0, 1}


def test_partition_iid_histograms():
    # alpha=0 is a uniform split: per-shard label histograms stay within
    # 4 sigma of the multinomial expectation
    rng = np.random.default_rng(2)
    n_classes, per_class, n = 5, 400, 4
    labels = np.repeat(np.arange(n_classes), per_class)
    rng.shuffle(labels)
    shards = partition_non_iid(labels, n, 0.0, rng)
    for shard in shards:
        m = len(shard.indices)
        expect = m / n_classes
        sigma = np.sqrt(m * (1 / n_classes) * (1 - 1 / n_classes))
        hist = np.bincount(labels[shard.indices], minlength=n_classes)
        assert (np.abs(hist - expect) <= 4.0 * sigma).all()


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.7, 1.0])
def test_partition_coverage_disjoint_balanced(alpha):
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 6, size=103)
    shards = partition_non_iid(labels, 4, alpha, rng)
    all_idx = np.concatenate([s.indices for s in shards])
    assert len(all_idx) == 103
    assert len(np.unique(all_idx)) == 103
    sizes = [len(s.indices) for s in shards]
    assert max(sizes) - min(sizes) <= 1


def test_partition_errors():
    rng = np.random.default_rng(4)
    with pytest.raises(ValueError, match="exceeds dataset"):
        partition_non_iid(np.zeros(3), 5, 0.0, rng)
    with pytest.raises(ValueError, match="empty"):
        partition_non_iid(np.zeros(0), 1, 0.0, rng)
    with pytest.raises(ValueError, match="alpha"):
        partition_non_iid(np.zeros(5), 2, 1.5, rng)


def test_replicate_partition():
    p = build("quadratic", partition="replicate", n_workers=3)
    for shard in p.shards:
        assert np.array_equal(shard.indices, np.arange(120))
    x = np.ones(p.d)
    g0 = p.shard_gradient(x, 0)
    for i in (1, 2):
        assert np.array_equal(p.shard_gradient(x, i), g0)


def test_problem_seed_reproducible():
    a = build("logistic")
    b = build("logistic")
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.x0, b.x0)
    c = build("logistic", problem_seed=1)
    assert not np.array_equal(a.samples, c.samples)


def test_logistic_targets_follow_clusters():
    p = build("logistic", n_clusters=4)
    assert set(np.unique(p.targets)) == {-1.0, 1.0}
    even = p.labels % 2 == 0
    assert np.array_equal(p.targets[even], np.ones(even.sum()))


def test_build_problem_errors():
    with pytest.raises(ValueError, match="unknown problem kind"):
        build(kind="cubic")
    with pytest.raises(ValueError, match="partition"):
        build(partition="mystery")
    with pytest.raises(ValueError, match="n_clusters"):
        build(n_clusters=0)
    with pytest.raises(ValueError, match="quad_lmax"):
        build(quad_lmin=2.0, quad_lmax=1.0)


def test_dump_shards_csv(tmp_path):
    p = build("quadratic", n_samples=30, n_workers=3)
    out = tmp_path / "shards.csv"
    dump_shards_csv(p, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("worker_id,sample_index,feature_0")
    assert len(lines) == 1 + 30  # header + one row per (worker, sample)
    first = lines[1].split(",")
    assert first[0] == "0"
    assert len(first) == 2 + p.d + 1
