import numpy as np
import pytest

from glehomog.embed import embed
from glehomog.harness import _make_increments
from glehomog.integrate import IntegrationError, simulate, sup_distance
from glehomog.matops import solve_lyapunov
from glehomog.scenarios import diagonal_nd
from glehomog.wiener import generate_path, refine


def _paths_for(system, seed, n_paths, n, T):
    return _make_increments(seed, system, n_paths, n, T)


def test_determinism_bitwise():
    spec = diagonal_nd(d=1)
    sys = embed(spec, "markov")
    inc = _paths_for(sys, 3, 2, 128, 1.0)
    a = simulate(sys, inc, 0.1, 1.0 / 128, z0=np.zeros((2, sys.state_dim)))
    b = simulate(sys, inc, 0.1, 1.0 / 128, z0=np.zeros((2, sys.state_dim)))
    assert np.array_equal(a.states, b.states)


def test_exp_ou_stationary_variance_any_dt():
    # pure OU fast block: Gamma_f = 1, Sigma_f = sqrt(2) => M_f = 1; with
    # the exact transition the stationary sample variance is M_f / eps for
    # any dt, even dt >> eps.
    from glehomog.triples import NoiseTriple

    spec = diagonal_nd(d=1, alpha_fast=1.0)
    spec = type(spec)(dim=1, mass=1.0, gamma0=spec.gamma0, g=spec.g, h=spec.h,
                      sigma_f=spec.sigma_f, memory=spec.memory,
                      fast_noise=NoiseTriple(gamma=[[1.0]], m=[[1.0]],
                                             c=[[1.0]],
                                             sigma=[[np.sqrt(2.0)]]),
                      potential=spec.potential)
    sys = embed(spec, "markov")
    eps = 0.01
    dt = 0.5                      # 50x the fast relaxation time
    n = 40
    n_paths = 4000
    inc = _paths_for(sys, 11, n_paths, n, n * dt)
    z0 = np.zeros((n_paths, sys.state_dim))
    traj = simulate(sys, inc, eps, dt, scheme="exp_ou_splitting", z0=z0,
                    record_every=n)
    bf = traj.states[:, -1, sys.blocks["beta_f"]][:, 0]
    var = bf.var(ddof=1)
    target = 1.0 / eps
    assert abs(var - target) < 5 * target / np.sqrt(n_paths / 2)


def test_frozen_linear_covariance_matches_lyapunov():
    # d = 1, F = 0, constants: the stationary covariance of (v, y, beta_f)
    # solves the full linear Lyapunov equation
    spec = diagonal_nd(d=1, gamma0=1.0, g=1.0, h=1.0, sigma_f=1.0,
                       alpha_mem=1.0, alpha_fast=2.0, potential_k=0.0)
    sys = embed(spec, "none")
    m = spec.mass
    a = np.array([
        [1.0 / m, 1.0 / m, -1.0 / m * spec.fast_noise.c[0, 0]],
        [-spec.memory.m[0, 0], spec.memory.gamma[0, 0], 0.0],
        [0.0, 0.0, spec.fast_noise.gamma[0, 0]],
    ])
    noise = np.array([[0.0], [0.0], [spec.fast_noise.sigma[0, 0]]])
    j = solve_lyapunov(a, noise @ noise.T)
    n_paths, dt, T = 3000, 0.01, 12.0
    n = round(T / dt)
    inc = _paths_for(sys, 21, n_paths, n, T)
    traj = simulate(sys, inc, 1.0, dt, z0=np.zeros((n_paths, sys.state_dim)),
                    record_every=n)
    zt = traj.states[:, -1, 1:]   # (v, y, beta_f)
    cov = np.cov(zt.T)
    assert np.max(np.abs(cov - j)) < 6 * np.max(np.abs(j)) / np.sqrt(n_paths / 40)


def test_schemes_agree_to_first_order():
    # halving dt halves the mean euler-vs-exponential gap within 20%
    spec = diagonal_nd(d=1, potential_k=1.0)
    sys = embed(spec, "markov")
    eps = 0.05
    T = 1.0
    n_paths = 16
    gaps = []
    for n in (200, 400):
        dt = T / n
        inc = _paths_for(sys, 5, n_paths, n, T)
        z0 = np.zeros((n_paths, sys.state_dim))
        a = simulate(sys, inc, eps, dt, scheme="euler_maruyama", z0=z0)
        b = simulate(sys, inc, eps, dt, scheme="exp_ou_splitting", z0=z0)
        gaps.append(float(sup_distance(a, b, "x").mean()))
    ratio = gaps[0] / gaps[1]
    assert 2.0 * 0.8 <= ratio <= 2.0 * 1.2


def test_refined_path_reproduces_coarse_trajectory():
    spec = diagonal_nd(d=1)
    sys = embed(spec, "markov")
    base = [generate_path(9, dims=1, T=1.0, levels=6, block=b)
            for b in (0,)]
    coarse_inc = base[0].increments[None, :, :]
    fine = refine(base[0])
    fine_sums = fine.coarsen_to(base[0].n_steps)[None, :, :]
    dt = base[0].dt
    z0 = np.zeros((1, sys.state_dim))
    a = simulate(sys, coarse_inc, 0.2, dt, z0=z0)
    b = simulate(sys, fine_sums, 0.2, dt, z0=z0)
    assert np.max(np.abs(a.states - b.states)) < 1e-12


def test_nan_abort_reports_step():
    spec = diagonal_nd(d=1, potential_k=-80.0)   # inverted, explosive
    sys = embed(spec, "none")
    inc = _paths_for(sys, 2, 1, 4096, 4096.0)
    z0 = np.full((1, sys.state_dim), 10.0)
    with np.errstate(over="ignore", invalid="ignore"), \
            pytest.raises(IntegrationError, match="step"):
        simulate(sys, inc, 1.0, 1.0, z0=z0)


def test_exp_ou_refuses_state_dependent_fast_matrix():
    # the fast velocity block of the mass procedure has A = gamma0(x)/(m0 e),
    # so a state-dependent gamma0 rules out the precomputed exact transition
    from glehomog.fields import MatrixField
    from glehomog.glespec import GleSpec
    from glehomog.triples import NoiseTriple

    g0 = MatrixField(
        lambda t, x: (2.0 + np.tanh(x[..., 0]))[..., None, None] * np.eye(1),
        (1, 1), 1, name="gamma0(x)")
    spec = GleSpec(dim=1, mass=1.0, gamma0=g0,
                   g=MatrixField.const([[1.0]], 1),
                   h=MatrixField.const([[1.0]], 1),
                   sigma_f=MatrixField.const([[1.0]], 1),
                   memory=NoiseTriple.scalar_exponential(1.0),
                   fast_noise=NoiseTriple.scalar_exponential(2.0))
    sys = embed(spec, "mass")
    inc = _paths_for(sys, 1, 1, 8, 1.0)
    with pytest.raises(IntegrationError):
        simulate(sys, inc, 0.1, 1.0 / 8, scheme="exp_ou_splitting",
                 z0=np.zeros((1, sys.state_dim)))


def test_sup_distance_examples():
    spec = diagonal_nd(d=2)
    sys = embed(spec, "none")
    inc = _paths_for(sys, 4, 1, 64, 1.0)
    z0 = np.zeros((1, sys.state_dim))
    a = simulate(sys, inc, 1.0, 1.0 / 64, z0=z0)
    assert np.allclose(sup_distance(a, a, "x"), 0.0)
    b = simulate(sys, inc, 1.0, 1.0 / 64, z0=z0)
    b.states = b.states + 0.0
    shifted = b.states.copy()
    shifted[..., sys.blocks["x"]] += np.array([3.0, 4.0])
    b.states = shifted
    assert np.allclose(sup_distance(a, b, "x"), 5.0)
