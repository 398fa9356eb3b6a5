import numpy as np
import pytest

from glehomog.arrange import arrange_joint, arrange_markov_then_mass, \
    arrange_mass_then_markov
from glehomog.fields import MatrixField, Potential
from glehomog.glespec import GleSpec, ModelAssumptionError, check_fdr
from glehomog.limits import AnomalousHeatDivergenceError, anomaly_report, \
    joint_limit, markov_then_mass, markovian_limit, mass_limit, \
    mass_limit_fdr_reduced_drift, mass_then_markov, reduce
from glehomog.matops import antisym
from glehomog.scenarios import J_ROT, diagonal_nd, noncommuting_2d, \
    rotation_triple, rotational_fast_noise, temperature_gradient
from glehomog.slowfast import reduce_general
from glehomog.triples import NoiseTriple


def _scalar_fdr_spec(a=0.4):
    """Scalar state-dependent FDR spec, g = h = sigma_f = 1 + a tanh(x)."""
    def c(x):
        return 1.0 + a * np.tanh(x[..., 0])

    def mk(name):
        return MatrixField(lambda t, x: np.asarray(c(x))[..., None, None]
                           * np.eye(1), (1, 1), 1, name=name)

    mem = NoiseTriple.scalar_exponential(1.0)
    return GleSpec(dim=1, mass=1.0,
                   gamma0=MatrixField.const(np.zeros((1, 1)), 1),
                   g=mk("c"), h=mk("c"), sigma_f=mk("c"),
                   memory=mem, fast_noise=mem,
                   potential=Potential(
                       fn=lambda t, x: 0.5 * np.sum(x * x, axis=-1),
                       grad=lambda t, x: x,
                       dt=lambda t, x: np.zeros(x.shape[:-1]), dim=1))


# ---------------------------------------------------------------------------
# markovian limit
# ---------------------------------------------------------------------------

def test_markov_effective_damping_scalar():
    # gamma0 = 0, g = h = 1, exponential kernel: K1 = 1/2 so Gamma_eff = 1/2
    spec = diagonal_nd(d=1, gamma0=0.0, g=1.0, h=1.0, alpha_mem=1.7,
                       potential_k=0.0)
    model = markovian_limit(spec)
    gamma = model.fields["Gamma"](np.zeros(1))
    assert abs(gamma[0, 0] - 0.5) < 1e-12


def test_markov_theta_detailed_balance_verdict():
    spec = diagonal_nd(d=2)
    model = markovian_limit(spec)
    rep = anomaly_report(model, spec.sample_grid())
    assert rep.entries["Theta_A"]["vanishes"]
    assert rep.entries["Theta_A"]["reason"]


def test_markov_theta_rotational():
    om = 1.0
    spec = rotational_fast_noise(omega=om)
    model = markovian_limit(spec)
    theta = model.fields["Theta"](np.zeros(2))
    assert np.allclose(theta, (np.eye(2) + om * J_ROT) / (1 + om ** 2))
    rep = anomaly_report(model, spec.sample_grid())
    assert not rep.entries["Theta_A"]["vanishes"]
    # Sigma Sigma^T = Theta + Theta^T
    sig = model.fields["Sigma"](np.zeros(2))
    assert np.allclose(sig @ sig.T, theta + theta.T, atol=1e-12)


def test_markov_theta_is_greens_kubo_integral():
    # Theta = int_0^inf E[xi_t xi_0^T] dt for the fast colored noise
    # xi = sigma_f C_f beta_f; Monte Carlo oracle with exact OU stepping
    from scipy.linalg import expm

    om = 1.0
    spec = rotational_fast_noise(omega=om)
    model = markovian_limit(spec)
    theta = model.fields["Theta"](np.zeros(2))
    fast = spec.fast_noise
    rng = np.random.default_rng(20)
    n_paths, dt, T = 6000, 0.01, 12.0
    n = round(T / dt)
    e = expm(-fast.gamma * dt)
    cov_step = fast.m - e @ fast.m @ e.T
    l_step = np.linalg.cholesky(cov_step)
    b = (np.linalg.cholesky(fast.m) @ rng.standard_normal((2, n_paths))).T
    b0 = b.copy()
    integral = np.zeros((n_paths, 2, 2))
    for _ in range(n):
        b_new = b @ e.T + rng.standard_normal((n_paths, 2)) @ l_step.T
        mid = 0.5 * (b + b_new)
        integral += mid[:, :, None] * b0[:, None, :] * dt
        b = b_new
    # the time integral of E[xi_t xi_0^T] is sigma_f K_f sigma_f^T = Theta^T
    # (Theta itself is defined with K_f^T; trace and norms agree)
    est = integral.mean(axis=0)
    se = integral.std(axis=0, ddof=1) / np.sqrt(n_paths)
    assert np.all(np.abs(est - theta.T) < 4 * se + 2e-3)
    assert abs(np.trace(est) - np.trace(theta)) < 4 * np.trace(se) + 2e-3


def test_markov_heat_rate_is_trace_theta():
    spec = rotational_fast_noise(omega=1.0)
    model = markovian_limit(spec)
    rate = model.functional_rates["Q_anom"](0.0, np.zeros(2))
    assert abs(rate - np.trace(model.fields["Theta"](np.zeros(2)))) < 1e-14
    assert model.functional_rates["W_anom"](0.0, np.zeros(2)) == 0.0


# ---------------------------------------------------------------------------
# markov then mass
# ---------------------------------------------------------------------------

def test_markov_then_mass_refuses_asymmetric_theta():
    spec = rotational_fast_noise(omega=1.0)
    with pytest.raises(AnomalousHeatDivergenceError,
                       match="anomalous heat divergence"):
        markov_then_mass(spec)


def test_markov_then_mass_constant_coefficients_have_h_zero():
    spec = diagonal_nd(d=2, gamma0=1.0)
    model = markov_then_mass(spec)
    assert np.allclose(model.fields["H"](np.array([0.3, -0.4])), 0.0,
                       atol=1e-12)


def test_markov_then_mass_spec1_inputs_kill_functional_drifts():
    # gamma0 = 0, g proportional to h^T = sigma_f, K_f = K_1: the anomalous
    # work/force drifts vanish identically
    d = 2
    rng = np.random.default_rng(14)

    def sf(t, x):
        s = 1.0 + 0.3 * np.tanh(x[..., 0])
        out = np.zeros(x.shape[:-1] + (d, d))
        out[..., 0, 0] = s
        out[..., 1, 1] = 2.0 - 0.2 * np.tanh(x[..., 1])
        out[..., 0, 1] = 0.1
        out[..., 1, 0] = 0.1
        return out

    c_prop = 1.7
    mem = NoiseTriple.diagonal_exponential([1.0, 2.0])
    spec = GleSpec(
        dim=d, mass=1.0,
        gamma0=MatrixField.const(np.zeros((d, d)), d),
        g=MatrixField(lambda t, x: c_prop * sf(t, x), (d, d), d),
        h=MatrixField(lambda t, x: np.swapaxes(sf(t, x), -1, -2), (d, d), d),
        sigma_f=MatrixField(sf, (d, d), d),
        memory=mem, fast_noise=mem,
        f_nc=None)
    model = markov_then_mass(spec)
    for x in spec.sample_grid(-0.8, 0.8, 3):
        assert np.linalg.norm(model.fields["K_A"](x)) < 1e-10
        assert np.linalg.norm(model.fields["mu_x_A"](x)) < 1e-10
        assert abs(model.functional_rates["W_anom"](0.0, x)) < 1e-10
        assert abs(model.functional_rates["R_anom"](0.0, x)) < 1e-10


def test_markov_then_mass_diagonal_condition_two():
    # K1, Kf proportional to identity; g h positive definite commuting with
    # sigma_f sigma_f^T: K_A = 0
    d = 2
    mem = NoiseTriple.diagonal_exponential([1.0, 1.0])
    fast = NoiseTriple.diagonal_exponential([2.0, 2.0])
    q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((d, d)))
    gh = q @ np.diag([1.0, 2.5]) @ q.T
    sf = q @ np.diag([0.7, 1.3]) @ q.T
    spec = GleSpec(dim=d, mass=1.0,
                   gamma0=MatrixField.const(np.zeros((d, d)), d),
                   g=MatrixField.const(gh, d),
                   h=MatrixField.const(np.eye(d), d),
                   sigma_f=MatrixField.const(sf, d),
                   memory=mem, fast_noise=fast)
    model = markov_then_mass(spec)
    assert np.linalg.norm(model.fields["K_A"](np.zeros(d))) < 1e-10


def test_markov_then_mass_j_lyapunov_and_db_shortcut():
    spec = diagonal_nd(d=2, gamma0=1.0)
    model = markov_then_mass(spec)
    x = np.array([0.1, 0.2])
    gamma = model.fields["Gamma"](x)
    sig = model.fields["Sigma"](x)
    j = model.fields["J"](x)
    assert np.linalg.norm(gamma @ j + j @ gamma.T - sig @ sig.T) < 1e-10
    theta = model.fields["Theta"](x)
    assert np.allclose(j, np.linalg.inv(gamma) @ theta, atol=1e-10)
    assert np.allclose(model.fields["K"](x),
                       np.linalg.inv(gamma) @ np.linalg.inv(gamma) @ theta)


def test_markov_then_mass_drift_matches_general_reducer():
    spec = _scalar_fdr_spec()
    model = markov_then_mass(spec)
    arr = arrange_markov_then_mass(spec)
    for xv in (np.array([0.3]), np.array([-0.5])):
        red = reduce_general(arr, 0.0, xv)
        assert np.max(np.abs(model.system.drift(0.0, xv, 1.0) - red.drift)) \
            < 1e-8


# ---------------------------------------------------------------------------
# mass limit
# ---------------------------------------------------------------------------

def test_mass_limit_requires_stable_gamma0():
    spec = diagonal_nd(d=1, gamma0=0.0)
    with pytest.raises(ModelAssumptionError):
        mass_limit(spec)


def test_mass_limit_drift_definition():
    spec = diagonal_nd(d=1, gamma0=2.0, g=1.0, sigma_f=1.5, potential_k=1.0)
    model = mass_limit(spec)
    sys = model.system
    z = np.array([0.7, 0.2, -0.3])   # (x, y, beta_f)
    drift = sys.drift(0.0, z, 1.0)
    f = -0.7
    xd = (f - 1.0 * 0.2 + 1.5 * (-0.3)) / 2.0
    assert np.isclose(drift[0], xd)
    mem = spec.memory
    assert np.isclose(drift[1], -mem.gamma[0, 0] * 0.2
                      + mem.m[0, 0] * 1.0 * xd)
    # no anomalous functional drifts in the small mass limit
    assert model.functional_rates["W_anom"](0.0, z[:1]) == 0.0
    assert model.functional_rates["R_anom"](0.0, z[:1]) == 0.0


def test_mass_limit_fdr_reduction_is_algebraic_identity():
    # under the FDR, substituting z = beta - y reproduces the limit drift
    spec = diagonal_nd(d=1, gamma0=1.5, g=0.8, h=0.8, sigma_f=0.8,
                       alpha_mem=1.0, alpha_fast=1.0, potential_k=1.0)
    # memory and fast noise must share the triple for the reduction
    spec = GleSpec(dim=1, mass=1.0, gamma0=spec.gamma0, g=spec.g, h=spec.h,
                   sigma_f=spec.sigma_f, memory=spec.memory,
                   fast_noise=spec.memory, potential=spec.potential)
    model = mass_limit(spec)
    sys = model.system
    x = np.array([0.4])
    y = np.array([0.25])
    beta = np.array([-0.15])
    z_full = np.concatenate([x, y, beta])
    drift = sys.drift(0.0, z_full, 1.0)
    zvar = beta - y
    xdot, zdot = mass_limit_fdr_reduced_drift(spec, 0.0, x, zvar)
    # x-drift: gamma0^{-1}(F - g C1 y + sigma_f C1 beta)
    #        = gamma0^{-1}(F + g C1 (beta - y)) under g = sigma_f, C_f = C1
    assert np.allclose(drift[0:1], xdot, atol=1e-12)
    # and d(beta - y)/dt from the full system equals the reduced z-drift
    dz_full = drift[2:3] - drift[1:2]
    assert np.allclose(dz_full, zdot, atol=1e-12)


# ---------------------------------------------------------------------------
# mass then markov
# ---------------------------------------------------------------------------

def _msm_spec(state_dep=True):
    d = 2

    def g0(t, x):
        base = np.array([[2.0, 0.3], [-0.3, 2.5]])
        if not state_dep:
            return np.broadcast_to(base, x.shape[:-1] + (d, d))
        bump = 0.4 * np.tanh(x[..., 0])
        out = np.broadcast_to(base, x.shape[:-1] + (d, d)).copy()
        out = out + bump[..., None, None] * np.eye(d)
        return out

    mem = NoiseTriple.diagonal_exponential([1.0, 2.0])
    fast = rotation_triple(0.5, rate=2.0)
    return GleSpec(dim=d, mass=1.0,
                   gamma0=MatrixField(g0, (d, d), d),
                   g=MatrixField.const(np.array([[1.0, 0.2], [0.0, 0.8]]), d),
                   h=MatrixField.const(np.array([[0.9, 0.1], [0.2, 1.1]]), d),
                   sigma_f=MatrixField.const(np.array([[1.0, 0.0],
                                                       [0.3, 0.7]]), d),
                   memory=mem, fast_noise=fast,
                   potential=Potential(
                       fn=lambda t, x: 0.5 * np.sum(x * x, axis=-1),
                       grad=lambda t, x: x,
                       dt=lambda t, x: np.zeros(x.shape[:-1]), dim=d))


def test_mass_then_markov_matrix_equations_hold():
    spec = _msm_spec()
    model = mass_then_markov(spec)
    mem, fast = spec.memory, spec.fast_noise
    for x in (np.array([0.2, -0.4]), np.array([-0.6, 0.5])):
        g1 = model.fields["gamma1"](x)
        j11 = model.fields["J11"](x)
        j12 = model.fields["J12"](x)
        co_g0 = spec.gamma0.value(0.0, x)
        a = mem.m @ mem.c.T @ spec.h.value(0.0, x) @ np.linalg.inv(co_g0) \
            @ spec.sigma_f.value(0.0, x) @ fast.c
        r1 = g1 @ j12 + j12 @ fast.gamma.T - a @ fast.m
        r2 = g1 @ j11 + j11 @ g1.T - a @ j12.T - j12 @ a.T
        assert np.linalg.norm(r1) < 1e-10
        assert np.linalg.norm(r2) < 1e-10
        assert np.linalg.norm(j11 - j11.T) < 1e-12


def test_mass_then_markov_scalar_gamma2_formula():
    spec = diagonal_nd(d=1, gamma0=2.0, g=1.0, h=1.0, sigma_f=1.0,
                       alpha_mem=1.0, alpha_fast=2.0)
    model = mass_then_markov(spec)
    x = np.zeros(1)
    mem = spec.memory
    g0 = 2.0
    gamma1 = mem.gamma[0, 0] + mem.m[0, 0] * 1.0 / g0 * 1.0
    gamma2_inv = (1.0 / g0) * (1 - 1.0 / gamma1 * mem.m[0, 0] / g0)
    assert abs(model.fields["gamma2_inv"](x)[0, 0] - gamma2_inv) < 1e-12
    assert abs(model.fields["gamma1"](x)[0, 0] - gamma1) < 1e-12


def test_mass_then_markov_constant_coefficients_s_zero():
    spec = _msm_spec(state_dep=False)
    model = mass_then_markov(spec)
    assert np.allclose(model.fields["S"](np.array([0.3, 0.1])), 0.0,
                       atol=1e-11)


def test_mass_then_markov_drift_matches_general_reducer():
    spec = _msm_spec()
    model = mass_then_markov(spec)
    arr = arrange_mass_then_markov(spec)
    for x in (np.array([0.2, -0.4]), np.array([-0.3, 0.6])):
        red = reduce_general(arr, 0.0, x)
        mine = model.system.drift(0.0, x, 1.0)
        assert np.max(np.abs(mine - red.drift)) < 1e-8
        # functional contraction matrix agrees with the reduced mu-block
        phi = model.fields["Phi"](x)
        mu_a = antisym(model.fields["mu"](x))
        assert np.max(np.abs(phi @ mu_a @ phi.T
                             - antisym(arr.U1.value(0.0, x)
                                       @ red.mu
                                       @ arr.U1.value(0.0, x).T))) < 1e-8


def test_mass_then_markov_anomaly_rate_matches_general_a_prime():
    # Ito-form functional anomaly from the generic reducer equals the
    # contraction of Jac f_nc with the full mu (not just its antisymmetric
    # part); the antisymmetric contraction is the Stratonovich-form rate.
    spec = _msm_spec()
    from glehomog.fields import VectorField

    def fnc(t, x):
        out = np.empty_like(x)
        out[..., 0] = -0.5 * x[..., 1]
        out[..., 1] = 0.5 * x[..., 0]
        return out

    spec.f_nc = VectorField(fnc, 2, 2,
                            jacobian=lambda t, x: 0.5 * J_ROT)
    model = mass_then_markov(spec)
    arr = arrange_mass_then_markov(spec, functional="W")
    x = np.array([0.25, -0.35])
    red = reduce_general(arr, 0.0, x)
    u1 = arr.U1.value(0.0, np.concatenate([x]))
    core_a = antisym(u1 @ red.mu @ u1.T)
    rate_strat = float(np.sum(spec.f_nc.jac(0.0, x) * core_a[:2, :2]))
    assert abs(model.functional_rates["W_anom"](0.0, x) - rate_strat) < 1e-8


# ---------------------------------------------------------------------------
# joint limit
# ---------------------------------------------------------------------------

def test_joint_diagonal_lambda_vanishes():
    spec = diagonal_nd(d=3, gamma0=1.0, g=0.7, h=0.7, sigma_f=1.2)
    model = joint_limit(spec)
    rep = anomaly_report(model, spec.sample_grid())
    assert rep.entries["lambda_A"]["vanishes"]
    assert rep.entries["lambda_A"]["reason"] == "diagonal coefficients"


def test_joint_condition_two_lambda_vanishes():
    # gamma0 = 0, FDR of the second kind, Gamma^{-1} sigma_f K_f^T sigma_f^T
    # symmetric
    d = 2
    mem = NoiseTriple.diagonal_exponential([1.0, 1.0])
    sf = np.array([[1.0, 0.2], [0.2, 0.7]])
    spec = GleSpec(dim=d, mass=1.0,
                   gamma0=MatrixField.const(np.zeros((d, d)), d),
                   g=MatrixField.const(sf, d),
                   h=MatrixField.const(sf.T, d),
                   sigma_f=MatrixField.const(sf, d),
                   memory=mem, fast_noise=mem)
    assert check_fdr(spec).fdr2
    model = joint_limit(spec)
    gamma = model.fields["Gamma"](np.zeros(d))
    theta = sf @ spec.kf.T @ sf.T
    cond = np.linalg.inv(gamma) @ theta
    assert np.linalg.norm(cond - cond.T) < 1e-12
    assert np.linalg.norm(model.fields["lambda_A"](np.zeros(d))) < 1e-10


def test_joint_scalar_fdr_matches_sequential():
    spec = _scalar_fdr_spec()
    jl = joint_limit(spec)
    mm = markov_then_mass(spec)
    for xv in (np.array([0.3]), np.array([-0.7]), np.array([1.1])):
        s = jl.fields["S"](xv)
        h = mm.fields["H"](xv)
        assert np.max(np.abs(s - h)) < 1e-10
        assert np.max(np.abs(jl.fields["S_fdr"](xv) - s)) < 1e-10
        # m0 J11 = J of the sequential route
        assert abs(jl.fields["J11"](xv)[0, 0] - mm.fields["J"](xv)[0, 0]) \
            < 1e-10


def test_joint_drift_matches_general_reducer_2d():
    spec = noncommuting_2d()
    model = joint_limit(spec)
    arr = arrange_joint(spec)
    for x in (np.array([0.3, -0.2]), np.array([-0.8, 0.6])):
        red = reduce_general(arr, 0.0, x)
        assert np.max(np.abs(model.system.drift(0.0, x, 1.0) - red.drift)) \
            < 1e-8
        # the work-anomaly contraction is antisym((U2^{-1} J)_vv) = -lambda_A
        mu_vv = red.mu[:2, :2]
        assert np.max(np.abs(antisym(mu_vv)
                             + model.fields["lambda_A"](x))) < 1e-9


def test_joint_kinetic_offset_and_tr_j():
    spec = diagonal_nd(d=1, gamma0=1.0)
    model = joint_limit(spec, m0=2.0)
    x = np.zeros(1)
    j11 = model.fields["J11"](x)
    assert abs(model.kinetic_offset(x) - 0.5 * 2.0 * j11[0, 0]) < 1e-12
    assert abs(model.b_limit(x) - 0.5 * model.tr_j(x)) < 1e-14


def test_reduce_dispatch():
    spec = diagonal_nd(d=1, gamma0=1.0)
    for proc in ("markov", "markov_then_mass", "mass", "mass_then_markov",
                 "joint"):
        model = reduce(spec, proc)
        assert model.procedure == proc
    with pytest.raises(ValueError):
        reduce(spec, "nope")


def test_one_dimensional_anomalies_all_zero():
    spec = diagonal_nd(d=1, gamma0=1.0)
    grid = spec.sample_grid()
    for proc in ("markov", "markov_then_mass", "mass", "mass_then_markov",
                 "joint"):
        model = reduce(spec, proc)
        rep = anomaly_report(model, grid)
        for name, entry in rep.entries.items():
            assert entry["sup_norm"] < 1e-10, (proc, name)
            assert entry["vanishes"]
            assert entry["reason"] == "one-dimensional coefficients"


def test_registry_d1_scenarios_have_zero_anomalies_everywhere():
    specs = [diagonal_nd(d=1, gamma0=1.0), temperature_gradient(d=1)]
    for spec in specs:
        grid = spec.sample_grid()
        for proc in ("markov", "markov_then_mass", "mass", "mass_then_markov",
                     "joint"):
            try:
                model = reduce(spec, proc)
            except ModelAssumptionError:
                continue   # gamma0 = 0 scenarios cannot take the mass routes
            rep = anomaly_report(model, grid)
            for name, entry in rep.entries.items():
                assert entry["sup_norm"] < 1e-10, (spec.name, proc, name)


def test_sigma0_routes_through_overdamped_limits():
    from glehomog.scenarios import magnetic

    spec = magnetic(omega=1.0, fnc_scale=0.0)
    jl = joint_limit(spec)
    # limit diffusion from the white route: gamma0^{-1} sigma0 = I
    nz = jl.system.state_dim
    mat = jl.system.noise(0.0, np.zeros(nz), 1.0)
    ob, wb = jl.system.wiener["b"]
    assert np.allclose(mat[jl.system.blocks["x"], ob:ob + wb], np.eye(2))
    # sequential mass-then-markov refuses direct white forcing
    with pytest.raises(ModelAssumptionError):
        mass_then_markov(spec)
    # the small-mass limit carries it for constant coefficients
    ml = mass_limit(spec)
    mat2 = ml.system.noise(0.0, np.zeros(ml.system.state_dim), 1.0)
    ob2, wb2 = ml.system.wiener["b"]
    assert np.allclose(mat2[ml.system.blocks["x"], ob2:ob2 + wb2], np.eye(2))
