"""Built-in scenario registry.

Four parameterized families of physical systems plus fully custom specs:

* ``magnetic``: charged particle in a constant magnetic field, drag + Lorentz
  force enter through gamma0 = I + Omega J_rot, white forcing
  sigma0 = I + Omega J_rot, and the rotational force f_nc = (-x2, x1)/2 whose
  work equals the stochastic area of the position path.
* ``temperature_gradient``: particle in a bath whose temperature varies with
  position; g = h = sqrt(gamma(x)) I and sigma_f = sqrt(kB T(x) gamma(x)) I
  share one realization triple.
* ``active_matter``: passive equilibrium bath (memory-matched fast noise)
  plus an active slow Ornstein-Uhlenbeck forcing with state-dependent
  coupling.
* ``diagonal_nd``: constant diagonal coefficients in any dimension; d = 1 is
  the scalar reference scenario.
"""

from __future__ import annotations

import numpy as np

from .fields import MatrixField, Potential, VectorField
from .glespec import GleSpec
from .triples import NoiseTriple

J_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def rotation_triple(omega, rate=1.0, scale=1.0):
    """A 2-D fast triple with broken detailed balance: Gamma = rate I +
    omega J_rot, Sigma chosen so M = scale I."""
    gamma = rate * np.eye(2) + omega * J_ROT
    sigma = np.sqrt(2.0 * rate * scale) * np.eye(2)
    return NoiseTriple(gamma=gamma, m=scale * np.eye(2), c=np.eye(2),
                       sigma=sigma)


def magnetic(omega=1.0, mass=1.0, fnc_scale=1.0):
    """Brownian charged particle in the plane orthogonal to a constant
    magnetic field; white-noise forced (sigma0 != 0), so only position-path
    functionals are well defined."""
    d = 2
    a = np.eye(2) + omega * J_ROT
    mem = NoiseTriple.scalar_exponential(1.0)
    fast = NoiseTriple.scalar_exponential(1.0)

    def fnc(t, x):
        out = np.empty_like(x)
        out[..., 0] = -0.5 * fnc_scale * x[..., 1]
        out[..., 1] = 0.5 * fnc_scale * x[..., 0]
        return out

    def fnc_jac(t, x):
        return 0.5 * fnc_scale * J_ROT

    return GleSpec(
        dim=d, mass=mass,
        gamma0=MatrixField.const(a, d, name="I + Omega J"),
        g=MatrixField.const(np.zeros((d, 1)), d),
        h=MatrixField.const(np.zeros((1, d)), d),
        sigma_f=MatrixField.const(np.zeros((d, 1)), d),
        sigma0=MatrixField.const(a, d, name="I + Omega J"),
        memory=mem, fast_noise=fast,
        f_nc=VectorField(fnc, d, d, jacobian=fnc_jac, name="area force"),
        name="magnetic",
    )


def temperature_gradient(d=1, alpha=1.0, gamma_expr=None, temp_expr=None,
                         kb=1.0, mass=1.0):
    """Brownian particle in a temperature gradient: g = h = sqrt(gamma(x)) I,
    sigma_f = sqrt(kB T(x) gamma(x)) I with the memory triple reused for the
    fast noise (generalized FDR).  ``gamma_expr``/``temp_expr`` are callables
    x -> positive scalar (default both 1)."""
    gam = gamma_expr if gamma_expr is not None else (lambda x: np.ones(x.shape[:-1]))
    temp = temp_expr if temp_expr is not None else (lambda x: np.ones(x.shape[:-1]))
    mem = NoiseTriple.diagonal_exponential([alpha] * d)

    def _diag(vals_fn):
        def fn(t, x):
            v = np.asarray(vals_fn(x), dtype=float)
            eye = np.eye(d)
            return v[..., None, None] * eye
        return fn

    g_f = MatrixField(_diag(lambda x: np.sqrt(gam(x))), (d, d), d, name="sqrt(gamma)")
    h_f = MatrixField(_diag(lambda x: np.sqrt(gam(x))), (d, d), d, name="sqrt(gamma)")
    sf = MatrixField(_diag(lambda x: np.sqrt(kb * temp(x) * gam(x))), (d, d), d,
                     name="sqrt(kB T gamma)")
    const = gamma_expr is None and temp_expr is None
    for f in (g_f, h_f, sf):
        f.constant = const
    return GleSpec(
        dim=d, mass=mass,
        gamma0=MatrixField.const(np.zeros((d, d)), d),
        g=g_f, h=h_f, sigma_f=sf,
        memory=mem, fast_noise=mem,
        name="temperature_gradient",
    )


def active_matter(d=2, alpha_passive=1.0, alpha_active=0.25, activity=0.5,
                  kb_t=1.0, mass=1.0, potential_k=1.0):
    """Equilibrium passive bath plus a slower active OU forcing whose
    amplitude grows with distance from the origin."""
    mem = NoiseTriple.diagonal_exponential([alpha_passive] * d)
    slow = NoiseTriple.diagonal_exponential([alpha_active] * d)
    sigma_p = np.sqrt(kb_t) * np.eye(d)

    def sigma_a(t, x):
        amp = activity * (1.0 + 0.5 * np.tanh(x[..., 0]))
        return amp[..., None, None] * np.eye(d)

    pot = Potential(
        fn=lambda t, x: 0.5 * potential_k * np.sum(x * x, axis=-1),
        grad=lambda t, x: potential_k * x,
        dt=lambda t, x: np.zeros(x.shape[:-1]),
        dim=d, name="harmonic")
    return GleSpec(
        dim=d, mass=mass,
        gamma0=MatrixField.const(np.zeros((d, d)), d),
        g=MatrixField.const(sigma_p, d, name="sigma_p"),
        h=MatrixField.const(sigma_p.T, d, name="sigma_p^T"),
        sigma_f=MatrixField.const(sigma_p, d, name="sigma_p"),
        memory=mem, fast_noise=mem,
        slow_noise=slow,
        sigma_s=MatrixField((lambda t, x: sigma_a(t, x)), (d, d), d,
                            name="sigma_a"),
        potential=pot,
        name="active_matter",
    )


def diagonal_nd(d=1, gamma0=1.0, g=1.0, h=None, sigma_f=1.0, alpha_mem=1.0,
                alpha_fast=2.0, mass=1.0, potential_k=1.0, slow=False,
                alpha_slow=0.25, sigma_s=0.5):
    """Constant diagonal coefficients; the d = 1 case is the scalar
    reference scenario of the convergence experiments."""
    h = g if h is None else h
    mem = NoiseTriple.diagonal_exponential([alpha_mem] * d)
    fast = NoiseTriple.diagonal_exponential([alpha_fast] * d)
    pot = None
    if potential_k:
        pot = Potential(
            fn=lambda t, x: 0.5 * potential_k * np.sum(x * x, axis=-1),
            grad=lambda t, x: potential_k * x,
            dt=lambda t, x: np.zeros(x.shape[:-1]),
            dim=d, name="harmonic")
    kwargs = {}
    if slow:
        kwargs["slow_noise"] = NoiseTriple.diagonal_exponential([alpha_slow] * d)
        kwargs["sigma_s"] = MatrixField.const(sigma_s * np.eye(d), d)
    return GleSpec(
        dim=d, mass=mass,
        gamma0=MatrixField.const(gamma0 * np.eye(d), d),
        g=MatrixField.const(g * np.eye(d), d),
        h=MatrixField.const(h * np.eye(d), d),
        sigma_f=MatrixField.const(sigma_f * np.eye(d), d),
        memory=mem, fast_noise=fast,
        potential=pot,
        name="diagonal_nd",
        **kwargs,
    )


def rotational_fast_noise(omega=1.0, gamma0=1.0, mass=1.0, fnc_scale=0.0,
                          potential_k=0.0):
    """2-D scenario whose fast colored noise breaks detailed balance:
    Theta = (I + omega J_rot)/(1 + omega^2) has Theta_A != 0.  Used for the
    anomalous-heat experiments."""
    d = 2
    mem = NoiseTriple.scalar_exponential(1.0)
    fast = rotation_triple(omega)
    pot = None
    if potential_k:
        pot = Potential(
            fn=lambda t, x: 0.5 * potential_k * np.sum(x * x, axis=-1),
            grad=lambda t, x: potential_k * x,
            dt=lambda t, x: np.zeros(x.shape[:-1]),
            dim=d, name="harmonic")
    fnc = None
    if fnc_scale:
        def fnc_fn(t, x):
            out = np.empty_like(x)
            out[..., 0] = -0.5 * fnc_scale * x[..., 1]
            out[..., 1] = 0.5 * fnc_scale * x[..., 0]
            return out

        fnc = VectorField(fnc_fn, d, d,
                          jacobian=lambda t, x: 0.5 * fnc_scale * J_ROT,
                          name="area force")
    return GleSpec(
        dim=d, mass=mass,
        gamma0=MatrixField.const(gamma0 * np.eye(d), d),
        g=MatrixField.const(np.zeros((d, 1)), d),
        h=MatrixField.const(np.zeros((1, d)), d),
        sigma_f=MatrixField.const(np.eye(d), d),
        memory=mem, fast_noise=fast,
        potential=pot, f_nc=fnc,
        name="rotational_fast_noise",
    )


def noncommuting_2d(mass=1.0):
    """2-D state-dependent coefficients chosen so the sequential and joint
    limits disagree: gamma0 = 0, symmetric Theta (no heat divergence), but
    g(x), sigma_f(x) generate non-commuting mobility fields."""
    d = 2
    mem = NoiseTriple.diagonal_exponential([1.0, 1.0])
    fast = NoiseTriple(gamma=np.eye(2), m=np.eye(2), c=np.eye(2),
                       sigma=np.sqrt(2.0) * np.eye(2))

    def gfun(t, x):
        a = 0.5 * np.tanh(x[..., 0])
        b = 0.5 * np.tanh(x[..., 1])
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0 + a
        out[..., 0, 1] = b
        out[..., 1, 1] = 1.0 - 0.3 * a
        return out

    def hfun(t, x):
        return np.swapaxes(gfun(t, x), -1, -2)

    def sffun(t, x):
        s = 1.0 + 0.4 * np.tanh(x[..., 1])
        c = 0.3 * np.tanh(x[..., 0])
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = s
        out[..., 1, 1] = 1.0
        out[..., 0, 1] = c
        out[..., 1, 0] = c
        return out

    return GleSpec(
        dim=d, mass=mass,
        gamma0=MatrixField.const(np.zeros((d, d)), d),
        g=MatrixField(gfun, (d, d), d, name="g"),
        h=MatrixField(hfun, (d, d), d, name="g^T"),
        sigma_f=MatrixField(sffun, (d, d), d, name="sigma_f"),
        memory=mem, fast_noise=fast,
        name="noncommuting_2d",
    )


SCENARIOS = {
    "magnetic": magnetic,
    "temperature_gradient": temperature_gradient,
    "active_matter": active_matter,
    "diagonal_nd": diagonal_nd,
    "rotational_fast_noise": rotational_fast_noise,
    "noncommuting_2d": noncommuting_2d,
}


def scenario(name, **params) -> GleSpec:
    """Instantiate a registered scenario; 'custom' specs are built directly
    through the config layer."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
    return SCENARIOS[name](**params)
