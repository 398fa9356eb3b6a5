import numpy as np

from glehomog.wiener import ensemble_increments, generate_path, refine


def test_same_seed_bit_identical():
    a = generate_path(42, dims=3, T=2.0, levels=5)
    b = generate_path(42, dims=3, T=2.0, levels=5)
    assert np.array_equal(a.increments, b.increments)


def test_distinct_streams():
    a = generate_path(42, dims=1, T=1.0, levels=4)
    b = generate_path(43, dims=1, T=1.0, levels=4)
    c = generate_path(42, dims=1, T=1.0, levels=4, path_index=1)
    d = generate_path(42, dims=1, T=1.0, levels=4, block=1)
    assert not np.allclose(a.increments, b.increments)
    assert not np.allclose(a.increments, c.increments)
    assert not np.allclose(a.increments, d.increments)


def test_refine_preserves_coarse_sums():
    path = generate_path(7, dims=2, T=1.5, levels=3)
    fine = refine(path)
    assert fine.n_steps == 2 * path.n_steps
    sums = fine.increments.reshape(path.n_steps, 2, 2).sum(axis=1)
    assert np.max(np.abs(sums - path.increments)) < 1e-15 * max(
        1.0, np.max(np.abs(path.increments)))
    # refine-then-coarsen is the identity on the increments
    assert np.allclose(fine.coarsen_to(path.n_steps), path.increments,
                       rtol=0, atol=1e-16)


def test_refine_is_deterministic():
    a = refine(generate_path(3, dims=1, T=1.0, levels=2))
    b = refine(generate_path(3, dims=1, T=1.0, levels=2))
    assert np.array_equal(a.increments, b.increments)


def test_refined_increments_have_right_law():
    # child increments are N(0, dt/2) and the two children are independent
    paths = [refine(generate_path(s, dims=1, T=1.0, levels=0))
             for s in range(4000)]
    first = np.array([p.increments[0, 0] for p in paths])
    second = np.array([p.increments[1, 0] for p in paths])
    assert abs(first.var() - 0.5) < 0.05
    assert abs(second.var() - 0.5) < 0.05
    assert abs(np.mean(first * second)) < 0.03


def test_terminal_variance_law_of_large_numbers():
    # sample variance of W_T over 10^4 paths within 5% of T
    T = 2.0
    inc = ensemble_increments(99, n_paths=10_000, n_steps=8, dims=2, T=T)
    w_t = inc.sum(axis=1)
    var = w_t.var(axis=0, ddof=1)
    assert np.all(np.abs(var - T) < 0.05 * T)


def test_ensemble_rows_match_single_paths():
    inc = ensemble_increments(5, n_paths=4, n_steps=16, dims=2, T=1.0)
    for i in range(4):
        single = generate_path(5, dims=2, T=1.0, levels=4, path_index=i)
        assert np.array_equal(inc[i], single.increments)


def test_times_and_cumulative():
    p = generate_path(1, dims=1, T=1.0, levels=3, base_steps=3)
    assert p.n_steps == 24
    assert np.isclose(p.dt, 1.0 / 24)
    w = p.cumulative()
    assert w.shape == (25, 1)
    assert np.allclose(w[-1], p.increments.sum(axis=0))
