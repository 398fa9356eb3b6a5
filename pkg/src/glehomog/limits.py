"""The five homogenized limit models of the GLE and their anomaly fields.

Each reducer returns a HomogenizedModel holding (i) a simulable limit
system driven by the same Wiener blocks as the pre-limit embedding, (ii)
matrix fields of the limit (effective damping, diffusion, Green-Kubo and
anomaly matrices) and (iii) the anomalous functional drift rates to add to
midpoint-accumulated functionals of the limit trajectory.

Noise-induced drifts are assembled by exact product rules from coefficient
Jacobians, with dJ obtained by differentiating the stationary covariance
equations.  The anomalous functional rate of a position-path functional
int p(t,x).dx is always the Frobenius contraction of the Jacobian of p
with the antisymmetric part of the relevant Green-Kubo block, written so
all index contractions are explicit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embed import EmbeddedSystem, _block_layout, _wiener_layout
from .fields import mv
from .glespec import GleSpec, ModelAssumptionError, check_fdr, \
    check_uniform_stability
from .matops import antisym, is_positive_stable, solve_coupled_five, \
    solve_lyapunov, solve_sylvester
from .slowfast import lyapunov_derivatives


class AnomalousHeatDivergenceError(RuntimeError):
    """The heat-like functional diverges in the sequential small-mass limit
    when the fast-noise Green-Kubo matrix has an antisymmetric part."""


@dataclass
class HomogenizedModel:
    procedure: str
    spec: GleSpec
    m0: float
    system: EmbeddedSystem            # simulable limit dynamics
    fields: dict                      # name -> callable(x) -> ndarray
    anomaly_matrices: dict            # antisymmetric anomaly fields (reports)
    anomaly_parents: dict             # anomaly name -> parent field name
    functional_rates: dict            # "Q_anom"/"W_anom"/"R_anom" -> f(t, x)
    tr_j: object = None               # callable(x): trace of the fast-block J
    kinetic_offset: object = None     # callable(x) (joint limit)
    notes: dict = field(default_factory=dict)

    def b_limit(self, x):
        """Limit of the time-averaged fast-energy functional eps|Y|^2/2.

        The stationary scaled fast block has covariance J/eps, so the
        time average of eps|Y|^2/2 tends to trace(J)/2."""
        return 0.5 * self.tr_j(x)


def _jacs(fld, t, x):
    j = fld.jac(t, x)
    return [j[:, :, k] for k in range(j.shape[2])]


class _Coeffs:
    """Values and x-derivatives of the GLE coefficient fields at a point."""

    def __init__(self, spec, x, t=0.0):
        self.x = np.asarray(x, dtype=float)
        self.gamma0 = spec.gamma0.value(t, self.x)
        self.g = spec.g.value(t, self.x)
        self.h = spec.h.value(t, self.x)
        self.sigma_f = spec.sigma_f.value(t, self.x)
        self.dgamma0 = _jacs(spec.gamma0, t, self.x)
        self.dg = _jacs(spec.g, t, self.x)
        self.dh = _jacs(spec.h, t, self.x)
        self.dsigma_f = _jacs(spec.sigma_f, t, self.x)
        self.sigma0 = None
        self.dsigma0 = None
        if spec.sigma0 is not None:
            self.sigma0 = spec.sigma0.value(t, self.x)
            self.dsigma0 = _jacs(spec.sigma0, t, self.x)


def _gamma_point(spec, co):
    k1 = spec.k1
    gamma = co.gamma0 + co.g @ k1 @ co.h
    dgamma = [co.dgamma0[k] + co.dg[k] @ k1 @ co.h + co.g @ k1 @ co.dh[k]
              for k in range(spec.dim)]
    return gamma, dgamma


def _sigma_point(spec, co):
    tail = spec.fast_noise.c @ np.linalg.solve(spec.fast_noise.gamma,
                                               spec.fast_noise.sigma)
    sigma = co.sigma_f @ tail
    dsigma = [co.dsigma_f[k] @ tail for k in range(spec.dim)]
    return sigma, dsigma


def _theta_point(spec, co):
    kft = spec.kf.T
    theta = co.sigma_f @ kft @ co.sigma_f.T
    dtheta = [co.dsigma_f[k] @ kft @ co.sigma_f.T
              + co.sigma_f @ kft @ co.dsigma_f[k].T for k in range(spec.dim)]
    return theta, dtheta


def _frobenius(a, b):
    return float(np.sum(a * b))


def _fnc_rate(spec, contraction):
    """Rate  sum_ij (d f_nc^i/dx^j) M^{ij}(x)  of the work anomaly."""

    def rate(t, x):
        return _frobenius(spec.f_nc.jac(t, x), contraction(x))

    return rate


def _force_rate(spec, contraction):
    def rate(t, x):
        return _frobenius(spec.force_jac(t, x), contraction(x))

    return rate


_ZERO_RATES = {"Q_anom": lambda t, x: 0.0, "W_anom": lambda t, x: 0.0,
               "R_anom": lambda t, x: 0.0}


def _overdamped_system(spec, procedure, extra_drift, gamma_inv_times,
                       noise_mat, m0, white_mat=None):
    """Limit dynamics dx = A(x)(F + sigma_s C_s beta_s) dt + extra(x) dt
    + N(x) dW_f [+ Nb(x) dB], plus the surviving slow OU block."""
    d = spec.dim
    ds = spec.slow_noise.state_dim if spec.slow_noise is not None else 0
    names = ["x"] + (["beta_s"] if ds else [])
    sizes = {"x": d, "beta_s": ds}
    slow = spec.slow_noise
    blocks = _block_layout(names, sizes)
    wiener = _wiener_layout(spec)
    nz = d + ds
    nw = sum(s for _, s in wiener.values())

    def drift(t, z, eps):
        x = z[..., blocks["x"]]
        out = np.zeros_like(z)
        forcing = spec.force(t, x)
        if ds:
            bs = z[..., blocks["beta_s"]]
            forcing = forcing + mv(spec.sigma_s.value(t, x) @ slow.c, bs)
            out[..., blocks["beta_s"]] = -mv(slow.gamma, bs)
        out[..., blocks["x"]] = gamma_inv_times(t, x, forcing) + extra_drift(t, x)
        return out

    def noise(t, z, eps):
        x = z[..., blocks["x"]]
        nmat = noise_mat(t, x)
        o, w = wiener["w_f"]
        if nmat.ndim == 2:
            mat = np.zeros((nz, nw))
            mat[blocks["x"], o:o + w] = nmat
        else:
            mat = np.zeros(nmat.shape[:-2] + (nz, nw))
            mat[..., blocks["x"], o:o + w] = nmat
        if white_mat is not None and "b" in wiener:
            ob, wb = wiener["b"]
            bmat = white_mat(t, x)
            if bmat.ndim > 2 and mat.ndim == 2:
                mat = np.broadcast_to(mat, bmat.shape[:-2] + (nz, nw)).copy()
            mat[..., blocks["x"], ob:ob + wb] = bmat
        if "w_s" in wiener:
            os_, ws_ = wiener["w_s"]
            mat[..., blocks["beta_s"], os_:os_ + ws_] = slow.sigma
        return mat

    sys = EmbeddedSystem(spec=spec, procedure=procedure, blocks=blocks,
                         dims={nm: sizes[nm] for nm in names}, wiener=wiener,
                         drift=drift, noise=noise, fast_block_names=(), m0=m0)
    sys.fast_blocks = lambda eps: []
    return sys


# ---------------------------------------------------------------------------
# Markovian limit
# ---------------------------------------------------------------------------

def markovian_limit(spec: GleSpec) -> HomogenizedModel:
    """Memory and fast-noise time scales to zero: Langevin dynamics with
    effective damping Gamma = gamma0 + g K1 h, white noise
    Sigma = sigma_f C_f Gamma_f^{-1} Sigma_f and the surviving slow colored
    noise.  No noise-induced drift appears (the position does not couple
    directly to the eliminated block)."""
    d = spec.dim
    m = spec.mass
    gamma_f = spec.gamma_eff()
    sigma_f = spec.sigma_eff()
    theta_f = spec.theta()
    ds = spec.slow_noise.state_dim if spec.slow_noise is not None else 0
    names = ["x", "v"] + (["beta_s"] if ds else [])
    sizes = {"x": d, "v": d, "beta_s": ds}
    blocks = _block_layout(names, sizes)
    wiener = _wiener_layout(spec)
    slow = spec.slow_noise
    nz = 2 * d + ds
    nw = sum(s for _, s in wiener.values())

    def drift(t, z, eps):
        x = z[..., blocks["x"]]
        v = z[..., blocks["v"]]
        out = np.zeros_like(z)
        acc = spec.force(t, x) - mv(gamma_f.value(t, x), v)
        if ds:
            bs = z[..., blocks["beta_s"]]
            acc = acc + mv(spec.sigma_s.value(t, x) @ slow.c, bs)
            out[..., blocks["beta_s"]] = -mv(slow.gamma, bs)
        out[..., blocks["x"]] = v
        out[..., blocks["v"]] = acc / m
        return out

    def noise(t, z, eps):
        x = z[..., blocks["x"]]
        sig = sigma_f.value(t, x)
        o, w = wiener["w_f"]
        if sig.ndim == 2:
            mat = np.zeros((nz, nw))
            mat[blocks["v"], o:o + w] = sig / m
        else:
            mat = np.zeros(sig.shape[:-2] + (nz, nw))
            mat[..., blocks["v"], o:o + w] = sig / m
        if "b" in wiener:
            ob, wb = wiener["b"]
            s0 = spec.sigma0.value(t, x)
            if s0.ndim > 2 and mat.ndim == 2:
                mat = np.broadcast_to(mat, s0.shape[:-2] + (nz, nw)).copy()
            mat[..., blocks["v"], ob:ob + wb] = s0 / m
        if "w_s" in wiener:
            os_, ws_ = wiener["w_s"]
            mat[..., blocks["beta_s"], os_:os_ + ws_] = slow.sigma
        return mat

    system = EmbeddedSystem(spec=spec, procedure="markov_limit", blocks=blocks,
                            dims={nm: sizes[nm] for nm in names}, wiener=wiener,
                            drift=drift, noise=noise, fast_block_names=(),
                            m0=spec.mass)
    system.fast_blocks = lambda eps: []

    def theta(x):
        return theta_f.value(0.0, x)

    def theta_a(x):
        return antisym(theta(x))

    tr_mf = float(np.trace(spec.fast_noise.m))

    # Ito-form anomalous heat drift: writing the limit kinetic term with
    # left-point increments costs (1/m) trace(Theta) dt; the midpoint form
    # needs no correction.  The work functional is unchanged either way.
    rates = {
        "Q_anom": lambda t, x: float(np.trace(theta(x))) / m,
        "W_anom": lambda t, x: 0.0,
        "R_anom": lambda t, x: 0.0,
    }
    fields = {
        "Gamma": lambda x: gamma_f.value(0.0, x),
        "Sigma": lambda x: sigma_f.value(0.0, x),
        "Theta": theta,
        "Theta_A": theta_a,
    }
    return HomogenizedModel(procedure="markov", spec=spec, m0=spec.mass,
                            system=system, fields=fields,
                            anomaly_matrices={"Theta_A": theta_a},
                            anomaly_parents={"Theta_A": "Theta"},
                            functional_rates=rates,
                            tr_j=lambda x: tr_mf)


# ---------------------------------------------------------------------------
# Markovian limit followed by the small mass limit
# ---------------------------------------------------------------------------

def markov_then_mass(spec: GleSpec, m0=1.0, grid=None) -> HomogenizedModel:
    """Small mass limit of the Markovian-limit dynamics: overdamped model
    with noise-induced drift H = div(Gamma^{-1} J) - Gamma^{-1} div J.

    Refuses when Theta has an antisymmetric part: the inherited anomalous
    heat term scales like 1/eps^2 and the heat-like functional diverges.
    """
    d = spec.dim
    if grid is None:
        grid = spec.sample_grid()
    gamma_f = spec.gamma_eff()
    ok, bad = check_uniform_stability(gamma_f, grid)
    if not ok:
        raise ModelAssumptionError(
            f"Gamma = gamma0 + g K1 h not positive stable at x={bad}")
    theta_fld = spec.theta()
    theta_scale = max(float(np.linalg.norm(theta_fld.value(0.0, x))) for x in grid)
    theta_asym = max(float(np.linalg.norm(antisym(theta_fld.value(0.0, x))))
                     for x in grid)
    if theta_asym > 1e-10 * max(1.0, theta_scale):
        raise AnomalousHeatDivergenceError(
            "anomalous heat divergence: Theta_A != 0 makes the heat-like "
            "functional diverge in the sequential small-mass limit")

    sigma_eff = spec.sigma_eff()

    def parts(x):
        co = _Coeffs(spec, x)
        gamma, dgamma = _gamma_point(spec, co)
        sigma, dsigma = _sigma_point(spec, co)
        ginv = np.linalg.inv(gamma)
        dginv = [-ginv @ dgamma[k] @ ginv for k in range(d)]
        rhs = sigma @ sigma.T
        drhs = [dsigma[k] @ sigma.T + sigma @ dsigma[k].T for k in range(d)]
        if co.sigma0 is not None:
            rhs = rhs + co.sigma0 @ co.sigma0.T
            drhs = [drhs[k] + co.dsigma0[k] @ co.sigma0.T
                    + co.sigma0 @ co.dsigma0[k].T for k in range(d)]
        db = co.sigma0 is None and np.linalg.norm(
            (m := gamma @ rhs) - m.T) <= 1e-9 * max(1.0, np.linalg.norm(m))
        if db:
            # detailed balance shortcut: J = Gamma^{-1} Theta
            theta, dtheta = _theta_point(spec, co)
            j = ginv @ theta
            dj = [dginv[k] @ theta + ginv @ dtheta[k] for k in range(d)]
        else:
            j = solve_lyapunov(gamma, rhs)
            dj = lyapunov_derivatives(gamma, dgamma, j, drhs)
        return co, gamma, dgamma, sigma, j, dj, ginv, dginv

    def h_drift(x):
        _, _, _, _, j, dj, ginv, dginv = parts(x)
        h = np.zeros(d)
        div_j = np.zeros(d)
        for k in range(d):
            h += (dginv[k] @ j + ginv @ dj[k])[:, k]
            div_j += dj[k][:, k]
        return h - ginv @ div_j

    def j_field(x):
        return parts(x)[4]

    def k_field(x):
        co = _Coeffs(spec, x)
        gamma, _ = _gamma_point(spec, co)
        theta, _ = _theta_point(spec, co)
        ginv = np.linalg.inv(gamma)
        return ginv @ ginv @ theta

    def k_a(x):
        return antisym(k_field(x))

    def mu_x_a(x):
        """Antisymmetric part of Gamma^{-1} J, the Green-Kubo matrix of the
        eliminated velocity; equals K_A under detailed balance."""
        _, _, _, _, j, _, ginv, _ = parts(x)
        return antisym(ginv @ j)

    const = (spec.gamma0.constant and spec.g.constant and spec.h.constant
             and spec.sigma_f.constant)
    white = None
    if spec.sigma0 is not None:
        def white(t, x):
            gi = np.linalg.inv(gamma_f.value(t, x))
            return gi @ spec.sigma0.value(t, x)
    if const:
        x0 = grid[0]
        h_const = h_drift(x0)
        gi_const = np.linalg.inv(gamma_f.value(0.0, x0))
        n_const = gi_const @ sigma_eff.value(0.0, x0)

        def extra(t, x):
            return np.broadcast_to(h_const, x.shape)

        def gtimes(t, x, forcing):
            return mv(gi_const, forcing)

        def nmat(t, x):
            return n_const
    else:
        def extra(t, x):
            if x.ndim == 1:
                return h_drift(x)
            return np.stack([h_drift(xi) for xi in x])

        def gtimes(t, x, forcing):
            gi = np.linalg.inv(gamma_f.value(t, x))
            return mv(gi, forcing)

        def nmat(t, x):
            gi = np.linalg.inv(gamma_f.value(t, x))
            return gi @ sigma_eff.value(t, x)

    system = _overdamped_system(spec, "markov_then_mass_limit", extra, gtimes,
                                nmat, m0, white_mat=white)
    fields = {
        "Gamma": lambda x: gamma_f.value(0.0, x),
        "Sigma": lambda x: sigma_eff.value(0.0, x),
        "Theta": lambda x: theta_fld.value(0.0, x),
        "Theta_A": lambda x: antisym(theta_fld.value(0.0, x)),
        "J": j_field,
        "K": k_field,
        "K_A": k_a,
        "mu_x_A": mu_x_a,
        "H": h_drift,
    }
    rates = {
        "Q_anom": lambda t, x: 0.0,
        "W_anom": _fnc_rate(spec, mu_x_a),
        "R_anom": _force_rate(spec, mu_x_a),
    }
    return HomogenizedModel(procedure="markov_then_mass", spec=spec, m0=m0,
                            system=system, fields=fields,
                            anomaly_matrices={"Theta_A": fields["Theta_A"],
                                              "K_A": k_a},
                            anomaly_parents={"Theta_A": "Theta", "K_A": "K"},
                            functional_rates=rates,
                            tr_j=lambda x: float(np.trace(j_field(x))))


# ---------------------------------------------------------------------------
# Small mass limit
# ---------------------------------------------------------------------------

def mass_limit(spec: GleSpec, m0=1.0, grid=None) -> HomogenizedModel:
    """Velocity eliminated; the limit keeps the memory state and both
    colored noises, and no anomalous functional drifts appear."""
    d = spec.dim
    if grid is None:
        grid = spec.sample_grid()
    ok, bad = check_uniform_stability(spec.gamma0, grid)
    if not ok:
        raise ModelAssumptionError(f"gamma0 not positive stable at x={bad}")
    if spec.sigma0 is not None:
        h0 = all(np.linalg.norm(spec.h.value(0.0, x)) < 1e-14 for x in grid)
        if not (spec.gamma0.constant and spec.sigma0.constant and h0):
            raise ModelAssumptionError(
                "white-noise forcing in the small-mass limit is supported "
                "only for constant gamma0/sigma0 with an inert memory "
                "coupling (h = 0)")
    mem, fast, slow = spec.memory, spec.fast_noise, spec.slow_noise
    d1, df = mem.state_dim, fast.state_dim
    ds = slow.state_dim if slow is not None else 0
    names = ["x", "y", "beta_f"] + (["beta_s"] if ds else [])
    sizes = {"x": d, "y": d1, "beta_f": df, "beta_s": ds}
    blocks = _block_layout(names, sizes)
    wiener = _wiener_layout(spec)
    nz = d + d1 + df + ds
    nw = sum(s for _, s in wiener.values())

    def drift(t, z, eps):
        x = z[..., blocks["x"]]
        y = z[..., blocks["y"]]
        bf = z[..., blocks["beta_f"]]
        out = np.zeros_like(z)
        forcing = spec.force(t, x) - mv(spec.g.value(t, x) @ mem.c, y) \
            + mv(spec.sigma_f.value(t, x) @ fast.c, bf)
        if ds:
            bs = z[..., blocks["beta_s"]]
            forcing = forcing + mv(spec.sigma_s.value(t, x) @ slow.c, bs)
            out[..., blocks["beta_s"]] = -mv(slow.gamma, bs)
        g0 = spec.gamma0.value(t, x)
        xd = mv(np.linalg.inv(g0), forcing)
        out[..., blocks["x"]] = xd
        out[..., blocks["y"]] = -mv(mem.gamma, y) \
            + mv(mem.m @ mem.c.T, mv(spec.h.value(t, x), xd))
        out[..., blocks["beta_f"]] = -mv(fast.gamma, bf)
        return out

    def noise(t, z, eps):
        mat = np.zeros((nz, nw))
        o, w = wiener["w_f"]
        mat[blocks["beta_f"], o:o + w] = fast.sigma
        if "b" in wiener:
            ob, wb = wiener["b"]
            x0 = np.zeros(d)
            mat[blocks["x"], ob:ob + wb] = np.linalg.solve(
                spec.gamma0.value(t, x0), spec.sigma0.value(t, x0))
        if "w_s" in wiener:
            os_, ws_ = wiener["w_s"]
            mat[blocks["beta_s"], os_:os_ + ws_] = slow.sigma
        return mat

    system = EmbeddedSystem(spec=spec, procedure="mass_limit", blocks=blocks,
                            dims={nm: sizes[nm] for nm in names}, wiener=wiener,
                            drift=drift, noise=noise, fast_block_names=(),
                            m0=m0)
    system.fast_blocks = lambda eps: []

    return HomogenizedModel(procedure="mass", spec=spec, m0=m0, system=system,
                            fields={}, anomaly_matrices={}, anomaly_parents={},
                            functional_rates=dict(_ZERO_RATES),
                            tr_j=lambda x: 0.0)


def mass_limit_fdr_reduced_drift(spec: GleSpec, t, x, zvar):
    """Drift of the reduced (x, z = beta - y) form valid under the FDR of
    the second kind; algebraic cross-check of the mass limit."""
    mem = spec.memory
    g0 = spec.gamma0.value(t, x)
    g = spec.g.value(t, x)
    f = spec.force(t, x)
    g0inv = np.linalg.inv(g0)
    gc = g @ mem.c
    xdot = g0inv @ (f + gc @ zvar)
    zdot = -(mem.gamma + mem.m @ mem.c.T @ g.T @ g0inv @ gc) @ zvar \
        - mem.m @ mem.c.T @ g.T @ g0inv @ f
    return xdot, zdot


# ---------------------------------------------------------------------------
# Small mass limit followed by the Markovian limit
# ---------------------------------------------------------------------------

def mass_then_markov(spec: GleSpec, m0=1.0, grid=None) -> HomogenizedModel:
    """Markovian limit of the small-mass dynamics: overdamped model with
    effective mobility gamma2^{-1} and noise-induced drift
    S^i = dR^{ij}/dx^l T^{jl} built from the coupling blocks R and T."""
    d = spec.dim
    if grid is None:
        grid = spec.sample_grid()
    ok, bad = check_uniform_stability(spec.gamma0, grid)
    if not ok:
        raise ModelAssumptionError(f"gamma0 not positive stable at x={bad}")
    if spec.sigma0 is not None:
        raise ModelAssumptionError(
            "the sequential mass-then-Markov limit does not support direct "
            "white-noise forcing (sigma0 != 0)")
    mem, fast = spec.memory, spec.fast_noise
    d1, df = mem.state_dim, fast.state_dim
    gf_inv = np.linalg.inv(fast.gamma)
    mc1t = mem.m @ mem.c.T

    def parts(x):
        co = _Coeffs(spec, x)
        g0inv = np.linalg.inv(co.gamma0)
        dg0inv = [-g0inv @ co.dgamma0[k] @ g0inv for k in range(d)]
        gc1 = co.g @ mem.c
        dgc1 = [co.dg[k] @ mem.c for k in range(d)]
        sfcf = co.sigma_f @ fast.c
        dsfcf = [co.dsigma_f[k] @ fast.c for k in range(d)]
        gamma1 = mem.gamma + mc1t @ co.h @ g0inv @ gc1
        if not is_positive_stable(gamma1):
            raise ModelAssumptionError(
                "gamma1 = Gamma1 + M1 C1^T h gamma0^{-1} g C1 "
                f"not positive stable at x={x}")
        dgamma1 = [mc1t @ (co.dh[k] @ g0inv @ gc1 + co.h @ dg0inv[k] @ gc1
                           + co.h @ g0inv @ dgc1[k]) for k in range(d)]
        g1inv = np.linalg.inv(gamma1)
        dg1inv = [-g1inv @ dgamma1[k] @ g1inv for k in range(d)]
        a = mc1t @ co.h @ g0inv @ sfcf            # (d1, df)
        da = [mc1t @ (co.dh[k] @ g0inv @ sfcf + co.h @ dg0inv[k] @ sfcf
                      + co.h @ g0inv @ dsfcf[k]) for k in range(d)]
        j12 = solve_sylvester(gamma1, fast.gamma.T, a @ fast.m)
        j11 = solve_lyapunov(gamma1, a @ j12.T + j12 @ a.T)
        return dict(co=co, g0inv=g0inv, dg0inv=dg0inv, gc1=gc1, dgc1=dgc1,
                    sfcf=sfcf, dsfcf=dsfcf, gamma1=gamma1, g1inv=g1inv,
                    dg1inv=dg1inv, a=a, da=da, j11=j11, j12=j12)

    def gamma2_inv(p):
        return p["g0inv"] @ (np.eye(d) - p["gc1"] @ p["g1inv"] @ mc1t
                             @ p["co"].h @ p["g0inv"])

    def coupling_r(p):
        b1 = p["gc1"] @ p["g1inv"]
        b2 = p["gc1"] @ p["g1inv"] @ p["a"] @ gf_inv - p["sfcf"] @ gf_inv
        return -p["g0inv"] @ np.concatenate([b1, b2], axis=1)

    def coupling_r_deriv(p, k):
        b1 = p["gc1"] @ p["g1inv"]
        db1 = p["dgc1"][k] @ p["g1inv"] + p["gc1"] @ p["dg1inv"][k]
        b2 = b1 @ p["a"] @ gf_inv - p["sfcf"] @ gf_inv
        db2 = (db1 @ p["a"] + b1 @ p["da"][k]) @ gf_inv \
            - p["dsfcf"][k] @ gf_inv
        b = np.concatenate([b1, b2], axis=1)
        db = np.concatenate([db1, db2], axis=1)
        return -(p["dg0inv"][k] @ b + p["g0inv"] @ db)

    def coupling_t(p):
        g0inv_t = p["g0inv"].T
        t1 = -p["j11"] @ p["gc1"].T @ g0inv_t + p["j12"] @ p["sfcf"].T @ g0inv_t
        t2 = -p["j12"].T @ p["gc1"].T @ g0inv_t + fast.m @ p["sfcf"].T @ g0inv_t
        return np.concatenate([t1, t2], axis=0)

    def s_drift_point(p):
        t_mat = coupling_t(p)
        s = np.zeros(d)
        for k in range(d):
            s += coupling_r_deriv(p, k) @ t_mat[:, k]
        return s

    def phi(p):
        return p["g0inv"] @ np.concatenate([-p["gc1"], p["sfcf"]], axis=1)

    def mu_block(p):
        a, g1inv = p["a"], p["g1inv"]
        top = np.concatenate([g1inv @ (p["j11"] + a @ gf_inv @ p["j12"].T),
                              g1inv @ (p["j12"] + a @ gf_inv @ fast.m)], axis=1)
        bot = np.concatenate([gf_inv @ p["j12"].T, gf_inv @ fast.m], axis=1)
        return np.concatenate([top, bot], axis=0)

    def w_contraction(x):
        """Phi mu_A Phi^T: the x-space projection of the fast Green-Kubo
        asymmetry; this (not the raw block) is what enters the functionals
        and what vanishes in one dimension."""
        p = parts(x)
        return phi(p) @ antisym(mu_block(p)) @ phi(p).T

    def mu_projected(x):
        p = parts(x)
        return phi(p) @ mu_block(p) @ phi(p).T

    const = (spec.gamma0.constant and spec.g.constant and spec.h.constant
             and spec.sigma_f.constant)
    if const:
        p0 = parts(grid[0])
        g2i_c = gamma2_inv(p0)
        n_c = g2i_c @ p0["sfcf"] @ gf_inv @ fast.sigma
        s_c = s_drift_point(p0)

        def extra(t, x):
            return np.broadcast_to(s_c, x.shape)

        def gtimes(t, x, forcing):
            return mv(g2i_c, forcing)

        def nmat(t, x):
            return n_c
    else:
        def extra(t, x):
            if x.ndim == 1:
                return s_drift_point(parts(x))
            return np.stack([s_drift_point(parts(xi)) for xi in x])

        def gtimes(t, x, forcing):
            if x.ndim == 1:
                return gamma2_inv(parts(x)) @ forcing
            return np.stack([gamma2_inv(parts(xi)) @ fi
                             for xi, fi in zip(x, forcing)])

        def nmat(t, x):
            if x.ndim == 1:
                p = parts(x)
                return gamma2_inv(p) @ p["sfcf"] @ gf_inv @ fast.sigma
            return np.stack([nmat(t, xi) for xi in x])

    system = _overdamped_system(spec, "mass_then_markov_limit", extra, gtimes,
                                nmat, m0)
    fields = {
        "gamma1": lambda x: parts(x)["gamma1"],
        "gamma2_inv": lambda x: gamma2_inv(parts(x)),
        "J11": lambda x: parts(x)["j11"],
        "J12": lambda x: parts(x)["j12"],
        "CouplingR": lambda x: coupling_r(parts(x)),
        "CouplingT": lambda x: coupling_t(parts(x)),
        "Phi": lambda x: phi(parts(x)),
        "mu": lambda x: mu_block(parts(x)),
        "mu_A_block": lambda x: antisym(mu_block(parts(x))),
        "mu_x": mu_projected,
        "mu_A": w_contraction,
        "S": lambda x: s_drift_point(parts(x)),
    }
    rates = {
        "Q_anom": lambda t, x: 0.0,
        "W_anom": _fnc_rate(spec, w_contraction),
        "R_anom": _force_rate(spec, w_contraction),
    }
    return HomogenizedModel(procedure="mass_then_markov", spec=spec, m0=m0,
                            system=system, fields=fields,
                            anomaly_matrices={"mu_A": w_contraction},
                            anomaly_parents={"mu_A": "mu_x"},
                            functional_rates=rates,
                            tr_j=lambda x: float(np.trace(parts(x)["j11"])
                                                 + np.trace(fast.m)))


# ---------------------------------------------------------------------------
# Joint Markovian and small mass limit
# ---------------------------------------------------------------------------

def joint_limit(spec: GleSpec, m0=1.0, grid=None) -> HomogenizedModel:
    """All fast scales to zero at once; the noise-induced drift involves the
    coupled five-equation stationary covariance of (v, y, beta_f)."""
    d = spec.dim
    if grid is None:
        grid = spec.sample_grid()
    mem, fast = spec.memory, spec.fast_noise
    d1, df = mem.state_dim, fast.state_dim
    nfast = d + d1 + df
    g1_inv = np.linalg.inv(mem.gamma)
    gf_inv = np.linalg.inv(fast.gamma)
    mc1t = mem.m @ mem.c.T

    def parts(x):
        co = _Coeffs(spec, x)
        gamma, dgamma = _gamma_point(spec, co)
        u2 = np.zeros((nfast, nfast))
        u2[:d, :d] = co.gamma0 / m0
        u2[:d, d:d + d1] = co.g @ mem.c / m0
        u2[:d, d + d1:] = -co.sigma_f @ fast.c / m0
        u2[d:d + d1, :d] = -mc1t @ co.h
        u2[d:d + d1, d:d + d1] = mem.gamma
        u2[d + d1:, d + d1:] = fast.gamma
        drhs = None
        if co.sigma0 is None:
            jb = solve_coupled_five(co.gamma0, co.g, co.h, co.sigma_f, m0,
                                    (mem.gamma, mem.m, mem.c),
                                    (fast.gamma, fast.m, fast.c, fast.sigma))
            big = np.zeros((nfast, nfast))
            big[:d, :d] = jb["J11"]
            big[:d, d:d + d1] = jb["J12"]
            big[:d, d + d1:] = jb["J13"]
            big[d:d + d1, :d] = jb["J12"].T
            big[d:d + d1, d:d + d1] = jb["J22"]
            big[d:d + d1, d + d1:] = jb["J23"]
            big[d + d1:, :d] = jb["J13"].T
            big[d + d1:, d:d + d1] = jb["J23"].T
            big[d + d1:, d + d1:] = fast.m
        else:
            # white noise on the fast velocity block augments the
            # stationary-covariance right-hand side
            rhs = np.zeros((nfast, nfast))
            rhs[:d, :d] = co.sigma0 @ co.sigma0.T / m0 ** 2
            rhs[d + d1:, d + d1:] = fast.sigma @ fast.sigma.T
            big = solve_lyapunov(u2, rhs)
            jb = {"J11": big[:d, :d], "J12": big[:d, d:d + d1],
                  "J13": big[:d, d + d1:],
                  "J22": big[d:d + d1, d:d + d1],
                  "J23": big[d:d + d1, d + d1:]}
            drhs = []
            for k in range(d):
                dr = np.zeros((nfast, nfast))
                dr[:d, :d] = (co.dsigma0[k] @ co.sigma0.T
                              + co.sigma0 @ co.dsigma0[k].T) / m0 ** 2
                drhs.append(dr)
        du2 = []
        for k in range(d):
            dm = np.zeros((nfast, nfast))
            dm[:d, :d] = co.dgamma0[k] / m0
            dm[:d, d:d + d1] = co.dg[k] @ mem.c / m0
            dm[:d, d + d1:] = -co.dsigma_f[k] @ fast.c / m0
            dm[d:d + d1, :d] = -mc1t @ co.dh[k]
            du2.append(dm)
        dbig = lyapunov_derivatives(u2, du2, big, drhs)
        return co, gamma, dgamma, jb, dbig

    def mu_vv_point(co, gamma, jb):
        """(U2^{-1} J)_{vv} = Gamma^{-1}(m0 J11 - g C1 G1^{-1} J21
        + sigma_f Cf Gf^{-1} J31); lambda is its negative."""
        gc1g1 = co.g @ mem.c @ g1_inv
        sfgf = co.sigma_f @ fast.c @ gf_inv
        inner = m0 * jb["J11"] - gc1g1 @ jb["J12"].T + sfgf @ jb["J13"].T
        return np.linalg.solve(gamma, inner)

    def s_drift_point(co, gamma, dgamma, jb, dbig):
        ginv = np.linalg.inv(gamma)
        dginv = [-ginv @ dgamma[k] @ ginv for k in range(d)]
        gc1g1 = co.g @ mem.c @ g1_inv
        sfgf = co.sigma_f @ fast.c @ gf_inv
        j21 = jb["J12"].T
        j31 = jb["J13"].T
        inner = m0 * jb["J11"] - gc1g1 @ j21 + sfgf @ j31
        s = np.zeros(d)
        div_j11 = np.zeros(d)
        div_j21 = np.zeros(d1)
        div_j31 = np.zeros(df)
        for k in range(d):
            dj11 = dbig[k][:d, :d]
            dj21 = dbig[k][d:d + d1, :d]
            dj31 = dbig[k][d + d1:, :d]
            dgc1g1 = co.dg[k] @ mem.c @ g1_inv
            dsfgf = co.dsigma_f[k] @ fast.c @ gf_inv
            dinner = m0 * dj11 - dgc1g1 @ j21 - gc1g1 @ dj21 \
                + dsfgf @ j31 + sfgf @ dj31
            s += (dginv[k] @ inner + ginv @ dinner)[:, k]
            div_j11 += dj11[:, k]
            div_j21 += dj21[:, k]
            div_j31 += dj31[:, k]
        return s + ginv @ (gc1g1 @ div_j21 - sfgf @ div_j31 - m0 * div_j11)

    def gamma_field(x):
        co = _Coeffs(spec, x)
        return _gamma_point(spec, co)[0]

    def sigma_field(x):
        co = _Coeffs(spec, x)
        return _sigma_point(spec, co)[0]

    def lam_field(x):
        co, gamma, _, jb, _ = parts(x)
        return -mu_vv_point(co, gamma, jb)

    def lam_a(x):
        return antisym(lam_field(x))

    def w_contraction(x):
        """antisym((U2^{-1} J)_{vv}) = -lambda_A; the Green-Kubo block of
        the eliminated velocity that enters the functional anomalies."""
        co, gamma, _, jb, _ = parts(x)
        return antisym(mu_vv_point(co, gamma, jb))

    def s_field(x):
        co, gamma, dgamma, jb, dbig = parts(x)
        return s_drift_point(co, gamma, dgamma, jb, dbig)

    def s_fdr_form(x):
        """FDR shortcut S = m0 (div(Gamma^{-1} J11) - Gamma^{-1} div J11)."""
        co, gamma, dgamma, jb, dbig = parts(x)
        ginv = np.linalg.inv(gamma)
        dginv = [-ginv @ dgamma[k] @ ginv for k in range(d)]
        s = np.zeros(d)
        div_j11 = np.zeros(d)
        for k in range(d):
            dj11 = dbig[k][:d, :d]
            s += (dginv[k] @ jb["J11"] + ginv @ dj11)[:, k]
            div_j11 += dj11[:, k]
        return m0 * (s - ginv @ div_j11)

    const = (spec.gamma0.constant and spec.g.constant and spec.h.constant
             and spec.sigma_f.constant
             and (spec.sigma0 is None or spec.sigma0.constant))
    white = None
    if spec.sigma0 is not None:
        def white(t, x):
            if x.ndim == 1:
                return np.linalg.solve(gamma_field(x),
                                       spec.sigma0.value(t, x))
            return np.stack([white(t, xi) for xi in x])
    if const:
        co0, gamma_c, dg_c, jb0, dbig0 = parts(grid[0])
        gi_c = np.linalg.inv(gamma_c)
        s_c = s_drift_point(co0, gamma_c, dg_c, jb0, dbig0)
        n_c = gi_c @ _sigma_point(spec, co0)[0]
        if spec.sigma0 is not None:
            w_c = gi_c @ spec.sigma0.value(0.0, grid[0])

            def white(t, x):
                return w_c

        def extra(t, x):
            return np.broadcast_to(s_c, x.shape)

        def gtimes(t, x, forcing):
            return mv(gi_c, forcing)

        def nmat(t, x):
            return n_c
    else:
        def extra(t, x):
            if x.ndim == 1:
                return s_field(x)
            return np.stack([s_field(xi) for xi in x])

        def gtimes(t, x, forcing):
            if x.ndim == 1:
                return np.linalg.solve(gamma_field(x), forcing)
            return np.stack([np.linalg.solve(gamma_field(xi), fi)
                             for xi, fi in zip(x, forcing)])

        def nmat(t, x):
            if x.ndim == 1:
                return np.linalg.solve(gamma_field(x), sigma_field(x))
            return np.stack([nmat(t, xi) for xi in x])

    system = _overdamped_system(spec, "joint_limit", extra, gtimes, nmat, m0,
                                white_mat=white)
    fields = {
        "Gamma": gamma_field,
        "Sigma": sigma_field,
        "J11": lambda x: parts(x)[3]["J11"],
        "J12": lambda x: parts(x)[3]["J12"],
        "J13": lambda x: parts(x)[3]["J13"],
        "J22": lambda x: parts(x)[3]["J22"],
        "J23": lambda x: parts(x)[3]["J23"],
        "lambda": lam_field,
        "lambda_A": lam_a,
        "S": s_field,
        "S_fdr": s_fdr_form,
    }
    rates = {
        "Q_anom": lambda t, x: 0.0,
        "W_anom": _fnc_rate(spec, w_contraction),
        "R_anom": _force_rate(spec, w_contraction),
    }

    def tr_j(x):
        jb = parts(x)[3]
        return float(np.trace(jb["J11"]) + np.trace(jb["J22"])
                     + np.trace(fast.m))

    return HomogenizedModel(procedure="joint", spec=spec, m0=m0, system=system,
                            fields=fields,
                            anomaly_matrices={"lambda_A": lam_a},
                            anomaly_parents={"lambda_A": "lambda"},
                            functional_rates=rates, tr_j=tr_j,
                            kinetic_offset=lambda x: 0.5 * m0 * float(
                                np.trace(parts(x)[3]["J11"])))


REDUCERS = {
    "markov": lambda spec, m0=1.0, grid=None: markovian_limit(spec),
    "markov_then_mass": markov_then_mass,
    "mass": mass_limit,
    "mass_then_markov": mass_then_markov,
    "joint": joint_limit,
}


def reduce(spec: GleSpec, procedure: str, m0=1.0, grid=None) -> HomogenizedModel:
    if procedure not in REDUCERS:
        raise ValueError(f"no reducer for procedure {procedure!r}")
    return REDUCERS[procedure](spec, m0=m0, grid=grid)


# ---------------------------------------------------------------------------
# Anomaly reports
# ---------------------------------------------------------------------------

@dataclass
class AnomalyReport:
    procedure: str
    entries: dict
    n_grid: int

    def to_dict(self):
        return {"procedure": self.procedure, "n_grid": self.n_grid,
                "entries": self.entries}


def _diagonalish(a, tol=1e-12):
    a = np.atleast_2d(a)
    if a.shape[0] != a.shape[1]:
        return False
    return np.linalg.norm(a - np.diag(np.diag(a))) <= tol * max(1.0, np.linalg.norm(a))


def _vanishing_reason(spec, name):
    if spec.dim == 1:
        return "one-dimensional coefficients"
    fast = spec.fast_noise
    fd = fast.gamma @ (fast.sigma @ fast.sigma.T)
    db = np.linalg.norm(fd - fd.T) <= 1e-10 * max(1.0, np.linalg.norm(fd))
    kf_sym = np.linalg.norm(antisym(spec.kf)) <= 1e-10 * max(1.0, np.linalg.norm(spec.kf))
    if name == "Theta_A":
        if db:
            return "detailed balance of the fast noise"
        if kf_sym:
            return "symmetric K_f"
    x0 = np.zeros(spec.dim)
    consts = [spec.gamma0, spec.g, spec.h, spec.sigma_f]
    if all(c.constant for c in consts):
        mats = [c.value(0.0, x0) for c in consts]
        trip = [spec.memory.gamma, spec.memory.m, spec.memory.c,
                fast.gamma, fast.m, fast.c]
        if all(_diagonalish(m) for m in mats if m.shape[0] == m.shape[1]) and \
           all(_diagonalish(m) for m in trip):
            return "diagonal coefficients"
    g0_zero = spec.gamma0.constant and \
        np.linalg.norm(spec.gamma0.value(0.0, x0)) < 1e-14
    if g0_zero and check_fdr(spec).fdr2:
        return "FDR with gamma0 = 0"
    return None


def anomaly_report(model: HomogenizedModel, grid) -> AnomalyReport:
    """Sup-norms of the anomaly matrices over a grid with vanishing verdicts."""
    entries = {}
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    for name, fn in model.anomaly_matrices.items():
        sup = 0.0
        asymmetry = 0.0
        for x in grid:
            a = fn(x)
            sup = max(sup, float(np.linalg.norm(a)))
            asymmetry = max(asymmetry, float(np.linalg.norm(a + a.T)))
        parent = model.anomaly_parents.get(name)
        scale = 1.0
        if parent and parent in model.fields:
            scale = max((float(np.linalg.norm(model.fields[parent](x)))
                         for x in grid), default=1.0)
        vanishes = sup <= 1e-8 * max(scale, 1e-12)
        entry = {"sup_norm": sup, "scale": scale, "vanishes": bool(vanishes),
                 "antisymmetry_defect": asymmetry, "reason": None}
        if vanishes:
            entry["reason"] = _vanishing_reason(model.spec, name) or \
                "numerically zero on the grid"
        entries[name] = entry
    return AnomalyReport(procedure=model.procedure, entries=entries,
                         n_grid=len(grid))
