"""Slow-fast arrangements of the GLE embeddings.

These rebuild the accelerated GLE systems in the generic slow-fast form
consumed by ``reduce_general``, giving a second, independent code path for
every effective drift and functional anomaly produced by the dedicated
reducers in ``limits``.
"""

from __future__ import annotations

import numpy as np

from .fields import MatrixField, VectorField
from .glespec import GleSpec
from .slowfast import SlowFastSystem


def _slow_dims(spec):
    ds = spec.slow_noise.state_dim if spec.slow_noise is not None else 0
    return spec.dim + ds, ds


def _functional_p(spec, functional, n):
    """P-row over the slow state X = (x, beta_s) for a position-path
    functional: f_nc for the work, F for the force integral."""
    if functional is None:
        return None, None
    d = spec.dim

    if functional == "W":
        def p_fn(t, xs):
            row = np.zeros((1, n))
            row[0, :d] = spec.f_nc.value(t, xs[:d])
            return row

        r = VectorField(lambda t, xs: np.atleast_1d(spec.potential.dt(t, xs[:d])),
                        1, n, name="dU/dt")
    elif functional == "R":
        def p_fn(t, xs):
            row = np.zeros((1, n))
            row[0, :d] = spec.force(t, xs[:d])
            return row

        r = VectorField.zero(1, n)
    else:
        raise ValueError("functional must be None, 'W' or 'R'")
    return MatrixField(p_fn, (1, n), n, name=f"P[{functional}]"), r


def arrange_joint(spec: GleSpec, m0=1.0, functional=None) -> SlowFastSystem:
    """Slow X = (x, beta_s), fast Y = (v, y, beta_f) of the jointly
    accelerated GLE."""
    d = spec.dim
    mem, fast, slow = spec.memory, spec.fast_noise, spec.slow_noise
    d1, df = mem.state_dim, fast.state_dim
    n, ds = _slow_dims(spec)
    m = d + d1 + df
    mc1t = mem.m @ mem.c.T

    def u2_fn(t, xs):
        x = xs[:d]
        out = np.zeros((m, m))
        out[:d, :d] = spec.gamma0.value(t, x) / m0
        out[:d, d:d + d1] = spec.g.value(t, x) @ mem.c / m0
        out[:d, d + d1:] = -spec.sigma_f.value(t, x) @ fast.c / m0
        out[d:d + d1, :d] = -mc1t @ spec.h.value(t, x)
        out[d:d + d1, d:d + d1] = mem.gamma
        out[d + d1:, d + d1:] = fast.gamma
        return out

    u1_mat = np.zeros((n, m))
    u1_mat[:d, :d] = np.eye(d)

    def smallu2_fn(t, xs):
        x = xs[:d]
        out = np.zeros(m)
        forcing = spec.force(t, x)
        if ds:
            forcing = forcing + spec.sigma_s.value(t, x) @ slow.c @ xs[d:]
        out[:d] = forcing / m0
        return out

    def smallu1_fn(t, xs):
        out = np.zeros(n)
        if ds:
            out[d:] = -slow.gamma @ xs[d:]
        return out

    sig = np.zeros((m, fast.wiener_dim))
    sig[d + d1:, :] = fast.sigma
    sig_t = None
    if ds:
        st = np.zeros((n, slow.wiener_dim))
        st[d:, :] = slow.sigma
        sig_t = MatrixField.const(st, n)

    p, r = _functional_p(spec, functional, n)
    return SlowFastSystem(
        n=n, m=m,
        U1=MatrixField.const(u1_mat, n, name="pick v"),
        U2=MatrixField(u2_fn, (m, m), n, name="U2 joint"),
        u1=VectorField(smallu1_fn, n, n),
        u2=VectorField(smallu2_fn, m, n),
        sigma_tilde=sig_t,
        sigma=MatrixField.const(sig, n, name="fast noise"),
        P=p, r=r,
    )


def arrange_markov_then_mass(spec: GleSpec, m0=1.0,
                             functional=None) -> SlowFastSystem:
    """Slow X = (x, beta_s), fast Y = v of the post-Markovian small-mass
    step."""
    d = spec.dim
    slow = spec.slow_noise
    n, ds = _slow_dims(spec)
    gamma = spec.gamma_eff()
    sigma = spec.sigma_eff()

    def u2_fn(t, xs):
        return gamma.value(t, xs[:d]) / m0

    def sigma_fn(t, xs):
        return sigma.value(t, xs[:d]) / m0

    def smallu2_fn(t, xs):
        x = xs[:d]
        forcing = spec.force(t, x)
        if ds:
            forcing = forcing + spec.sigma_s.value(t, x) @ slow.c @ xs[d:]
        return forcing / m0

    def smallu1_fn(t, xs):
        out = np.zeros(n)
        if ds:
            out[d:] = -slow.gamma @ xs[d:]
        return out

    u1_mat = np.zeros((n, d))
    u1_mat[:d, :] = np.eye(d)
    sig_t = None
    if ds:
        st = np.zeros((n, slow.wiener_dim))
        st[d:, :] = slow.sigma
        sig_t = MatrixField.const(st, n)

    p, r = _functional_p(spec, functional, n)
    return SlowFastSystem(
        n=n, m=d,
        U1=MatrixField.const(u1_mat, n, name="pick v"),
        U2=MatrixField(u2_fn, (d, d), n, name="Gamma/m0"),
        u1=VectorField(smallu1_fn, n, n),
        u2=VectorField(smallu2_fn, d, n),
        sigma_tilde=sig_t,
        sigma=MatrixField(sigma_fn, (d, sigma.shape[1]), n, name="Sigma/m0"),
        P=p, r=r,
    )


def arrange_mass_then_markov(spec: GleSpec, m0=1.0,
                             functional=None) -> SlowFastSystem:
    """Slow X = (x, beta_s), fast Y = (y, beta_f) of the post-small-mass
    Markovian step.  The m0 proportionality drops out of this arrangement:
    only the memory/noise time scales are accelerated."""
    d = spec.dim
    mem, fast, slow = spec.memory, spec.fast_noise, spec.slow_noise
    d1, df = mem.state_dim, fast.state_dim
    n, ds = _slow_dims(spec)
    m = d1 + df
    mc1t = mem.m @ mem.c.T

    def g0inv(t, x):
        return np.linalg.inv(spec.gamma0.value(t, x))

    def u2_fn(t, xs):
        x = xs[:d]
        gi = g0inv(t, x)
        out = np.zeros((m, m))
        out[:d1, :d1] = mem.gamma + mc1t @ spec.h.value(t, x) @ gi \
            @ spec.g.value(t, x) @ mem.c
        out[:d1, d1:] = -mc1t @ spec.h.value(t, x) @ gi \
            @ spec.sigma_f.value(t, x) @ fast.c
        out[d1:, d1:] = fast.gamma
        return out

    def u1_fn(t, xs):
        x = xs[:d]
        gi = g0inv(t, x)
        out = np.zeros((n, m))
        out[:d, :d1] = -gi @ spec.g.value(t, x) @ mem.c
        out[:d, d1:] = gi @ spec.sigma_f.value(t, x) @ fast.c
        return out

    def smallu2_fn(t, xs):
        x = xs[:d]
        forcing = spec.force(t, x)
        if ds:
            forcing = forcing + spec.sigma_s.value(t, x) @ slow.c @ xs[d:]
        out = np.zeros(m)
        out[:d1] = mc1t @ spec.h.value(t, x) @ g0inv(t, x) @ forcing
        return out

    def smallu1_fn(t, xs):
        x = xs[:d]
        forcing = spec.force(t, x)
        if ds:
            forcing = forcing + spec.sigma_s.value(t, x) @ slow.c @ xs[d:]
        out = np.zeros(n)
        out[:d] = g0inv(t, x) @ forcing
        if ds:
            out[d:] = -slow.gamma @ xs[d:]
        return out

    sig = np.zeros((m, fast.wiener_dim))
    sig[d1:, :] = fast.sigma
    sig_t = None
    if ds:
        st = np.zeros((n, slow.wiener_dim))
        st[d:, :] = slow.sigma
        sig_t = MatrixField.const(st, n)

    p, r = _functional_p(spec, functional, n)
    return SlowFastSystem(
        n=n, m=m,
        U1=MatrixField(u1_fn, (n, m), n, name="Phi"),
        U2=MatrixField(u2_fn, (m, m), n, name="U2 seq"),
        u1=VectorField(smallu1_fn, n, n),
        u2=VectorField(smallu2_fn, m, n),
        sigma_tilde=sig_t,
        sigma=MatrixField.const(sig, n, name="fast noise"),
        P=p, r=r,
    )


ARRANGEMENTS = {
    "joint": arrange_joint,
    "markov_then_mass": arrange_markov_then_mass,
    "mass_then_markov": arrange_mass_then_markov,
}
