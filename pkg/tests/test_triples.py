import numpy as np
import pytest
from scipy.integrate import quad

from glehomog.triples import NoiseTriple, kernel_eval, transform_triple


def random_triple(rng, n=3, obs=3):
    a = rng.standard_normal((n, n))
    gamma = a + (1.5 + abs(np.linalg.eigvals(a).real.min())) * np.eye(n)
    sigma = rng.standard_normal((n, n)) + 2 * np.eye(n)
    c = rng.standard_normal((obs, n))
    return NoiseTriple.from_gamma_sigma(gamma, c, sigma)


def test_construction_validates_lyapunov():
    with pytest.raises(ValueError):
        NoiseTriple(gamma=[[1.0]], m=[[2.0]], c=[[1.0]], sigma=[[1.0]])
    with pytest.raises(ValueError):
        NoiseTriple(gamma=[[-1.0]], m=[[0.5]], c=[[1.0]], sigma=[[1.0]])


def test_scalar_exponential_kernel():
    alpha = 1.7
    tr = NoiseTriple.scalar_exponential(alpha)
    for t in (-1.2, 0.0, 0.3, 2.0):
        assert abs(kernel_eval(tr, t)[0, 0]
                   - (alpha / 2) * np.exp(-alpha * abs(t))) < 1e-14


def test_kernel_at_zero_and_symmetry():
    rng = np.random.default_rng(0)
    tr = random_triple(rng)
    assert np.allclose(kernel_eval(tr, 0.0), tr.c @ tr.m @ tr.c.T)
    for t in (0.1, 0.7, 1.9):
        assert np.allclose(kernel_eval(tr, t), kernel_eval(tr, -t).T,
                           atol=1e-12)


def test_kernel_integral_matches_k_matrix():
    # quadrature oracle for K = C Gamma^{-1} M C^T = int_0^inf kappa(t) dt
    rng = np.random.default_rng(4)
    tr = random_triple(rng, n=2, obs=2)
    k = tr.k_matrix()
    for i in range(2):
        for j in range(2):
            val, err = quad(lambda t: kernel_eval(tr, t)[i, j], 0, np.inf,
                            limit=200)
            assert abs(val - k[i, j]) < 1e-8


def test_transform_identity_and_scaling():
    tr = NoiseTriple.scalar_exponential(1.0)
    same = transform_triple(tr, np.eye(1))
    assert np.allclose(same.gamma, tr.gamma)
    scaled = transform_triple(tr, 2.0 * np.eye(1))
    for t in (0.0, 0.4, 1.3):
        assert abs(kernel_eval(scaled, t)[0, 0]
                   - kernel_eval(tr, t)[0, 0]) < 1e-12


def test_transform_random_preserves_kernel():
    rng = np.random.default_rng(12)
    tr = random_triple(rng)
    t_mat = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    tr2 = transform_triple(tr, t_mat)
    for t in np.arange(0.0, 2.01, 0.1):
        assert np.max(np.abs(kernel_eval(tr, t) - kernel_eval(tr2, t))) < 1e-9


def test_transform_keeps_lyapunov_invariant():
    rng = np.random.default_rng(2)
    tr = random_triple(rng)
    t_mat = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    tr2 = transform_triple(tr, t_mat)  # constructor re-validates the residual
    res = tr2.gamma @ tr2.m + tr2.m @ tr2.gamma.T - tr2.sigma @ tr2.sigma.T
    assert np.linalg.norm(res) < 1e-10


def test_transform_rejects_singular():
    tr = NoiseTriple.scalar_exponential(1.0)
    with pytest.raises(ValueError):
        transform_triple(tr, np.zeros((1, 1)))
