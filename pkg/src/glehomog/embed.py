"""Markovian embeddings of the GLE with procedure-dependent epsilon scaling.

The full embedded state is z = (x, v, y, beta_f, beta_s); sequential
procedures drop blocks that were already homogenized away.  Which blocks
carry the 1/eps acceleration depends on the procedure:

    none             nothing scaled (reference dynamics at unit scales)
    markov           y and beta_f are fast
    mass             v is fast (mass -> m0 * eps)
    joint            v, y and beta_f are fast
    markov_then_mass state (x, v, beta_s); v fast, memory already contracted
    mass_then_markov state (x, y, beta_f, beta_s); y and beta_f fast

Drift and noise evaluators are batched over leading axes of z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import mv
from .glespec import GleSpec, ModelAssumptionError, check_uniform_stability

PROCEDURES = ("none", "markov", "markov_then_mass", "mass", "mass_then_markov",
              "joint")


@dataclass
class FastBlockInfo:
    """Metadata for the exponential-OU splitting of one fast linear block."""
    name: str
    sl: slice
    # drift matrix A (constant in the state) so the block reads
    # dz_blk = (-A z_blk + b(t, z_slow)) dt + noise dW; all already
    # epsilon-scaled.
    a_matrix: np.ndarray
    affine: object            # callable (t, z) -> (..., nb) or None
    noise_rows: np.ndarray | None   # (nb, nw_total), epsilon-scaled
    state_dependent_a: bool = False


@dataclass
class EmbeddedSystem:
    spec: GleSpec
    procedure: str
    blocks: dict               # name -> slice into z
    dims: dict                 # name -> block size
    wiener: dict               # name -> (offset, size) into the W vector
    drift: object              # callable (t, z, eps) -> like z
    noise: object              # callable (t, z, eps) -> (nz, nw) or (..., nz, nw)
    fast_block_names: tuple
    m0: float = 1.0

    @property
    def state_dim(self):
        return sum(self.dims.values())

    @property
    def wiener_dim(self):
        return sum(size for _, size in self.wiener.values())

    def effective_mass(self, eps):
        if self.procedure in ("mass", "joint", "markov_then_mass"):
            return self.m0 * eps
        return self.spec.mass

    def block(self, z, name):
        return z[..., self.blocks[name]]

    def fast_blocks(self, eps):
        """Exponential-OU metadata for the fast conditionally-linear blocks."""
        raise NotImplementedError

    def initial_state(self, rng, eps, x0=None, v0=None, stationary_fast=True):
        """Default initial condition: x0/v0 given or zero, y0 = 0 and the
        OU blocks stationary (fast blocks at their epsilon-inflated
        stationary covariance when ``stationary_fast``)."""
        spec = self.spec
        z0 = np.zeros(self.state_dim)
        if x0 is not None:
            z0[self.blocks["x"]] = np.asarray(x0, float)
        if "v" in self.blocks and v0 is not None:
            z0[self.blocks["v"]] = np.asarray(v0, float)
        for name, triple, fast in (
            ("beta_f", spec.fast_noise, "beta_f" in self.fast_block_names),
            ("beta_s", spec.slow_noise, False),
        ):
            if name not in self.blocks or triple is None:
                continue
            cov = triple.m / (eps if (fast and stationary_fast) else 1.0)
            chol = np.linalg.cholesky(cov)
            z0[self.blocks[name]] = chol @ rng.standard_normal(triple.state_dim)
        return z0


def _wiener_layout(spec: GleSpec):
    layout = {}
    off = 0
    wf = spec.fast_noise.wiener_dim
    layout["w_f"] = (off, wf)
    off += wf
    if spec.slow_noise is not None:
        ws = spec.slow_noise.wiener_dim
        layout["w_s"] = (off, ws)
        off += ws
    if spec.sigma0 is not None:
        b = spec.sigma0.shape[1]
        layout["b"] = (off, b)
        off += b
    return layout


def _block_layout(names, sizes):
    blocks = {}
    off = 0
    for nm in names:
        blocks[nm] = slice(off, off + sizes[nm])
        off += sizes[nm]
    return blocks


def embed(spec: GleSpec, procedure: str, m0: float | None = None,
          stability_grid=None) -> EmbeddedSystem:
    """Build the pre-limit Markovian system for the chosen procedure."""
    if procedure not in PROCEDURES:
        raise ValueError(f"unknown procedure {procedure!r}")
    m0 = spec.mass if m0 is None else float(m0)

    if procedure in ("mass", "mass_then_markov"):
        grid = stability_grid if stability_grid is not None else spec.sample_grid()
        ok, bad = check_uniform_stability(spec.gamma0, grid)
        if not ok:
            raise ModelAssumptionError(
                f"procedure {procedure!r} needs gamma0 positive stable; fails at x={bad}")
    if procedure == "markov_then_mass":
        grid = stability_grid if stability_grid is not None else spec.sample_grid()
        ok, bad = check_uniform_stability(spec.gamma_eff(), grid)
        if not ok:
            raise ModelAssumptionError(
                f"procedure 'markov_then_mass' needs Gamma = gamma0 + g K1 h "
                f"positive stable; fails at x={bad}")

    if procedure == "markov_then_mass":
        return _embed_markov_then_mass(spec, m0)
    if procedure == "mass_then_markov":
        return _embed_mass_then_markov(spec, m0)
    return _embed_full(spec, procedure, m0)


def _embed_full(spec: GleSpec, procedure: str, m0: float):
    d = spec.dim
    d1 = spec.memory.state_dim
    df = spec.fast_noise.state_dim
    ds = spec.slow_noise.state_dim if spec.slow_noise is not None else 0
    names = ["x", "v", "y", "beta_f"] + (["beta_s"] if ds else [])
    sizes = {"x": d, "v": d, "y": d1, "beta_f": df, "beta_s": ds}
    blocks = _block_layout(names, sizes)
    wiener = _wiener_layout(spec)
    mem, fast, slow = spec.memory, spec.fast_noise, spec.slow_noise

    fast_names = {"none": (), "markov": ("y", "beta_f"), "mass": ("v",),
                  "joint": ("v", "y", "beta_f")}[procedure]

    def scales(eps):
        s_mem = 1.0 / eps if procedure in ("markov", "joint") else 1.0
        mass = m0 * eps if procedure in ("mass", "joint") else spec.mass
        return s_mem, mass

    def drift(t, z, eps):
        s_mem, mass = scales(eps)
        x = z[..., blocks["x"]]
        v = z[..., blocks["v"]]
        y = z[..., blocks["y"]]
        bf = z[..., blocks["beta_f"]]
        out = np.zeros_like(z)
        force = spec.force(t, x)
        acc = force - mv(spec.gamma0.value(t, x), v) \
            - mv(spec.g.value(t, x) @ mem.c, y) \
            + mv(spec.sigma_f.value(t, x) @ fast.c, bf)
        if ds:
            bs = z[..., blocks["beta_s"]]
            acc = acc + mv(spec.sigma_s.value(t, x) @ slow.c, bs)
            out[..., blocks["beta_s"]] = -mv(slow.gamma, bs)
        out[..., blocks["x"]] = v
        out[..., blocks["v"]] = acc / mass
        out[..., blocks["y"]] = s_mem * (-mv(mem.gamma, y)
                                         + mv(mem.m @ mem.c.T, mv(spec.h.value(t, x), v)))
        out[..., blocks["beta_f"]] = -s_mem * mv(fast.gamma, bf)
        return out

    nz = sum(sizes[nm] for nm in names)
    nw = sum(s for _, s in wiener.values())

    def noise(t, z, eps):
        s_mem, mass = scales(eps)
        mat = np.zeros((nz, nw))
        o, w = wiener["w_f"]
        mat[blocks["beta_f"], o:o + w] = s_mem * fast.sigma
        if "w_s" in wiener:
            o, w = wiener["w_s"]
            mat[blocks["beta_s"], o:o + w] = slow.sigma
        if "b" in wiener:
            o, w = wiener["b"]
            x = z[..., blocks["x"]]
            s0 = spec.sigma0.value(t, x)
            if s0.ndim == 2:
                mat[blocks["v"], o:o + w] = s0 / mass
            else:
                mat = np.broadcast_to(mat, s0.shape[:-2] + (nz, nw)).copy()
                mat[..., blocks["v"], o:o + w] = s0 / mass
        return mat

    sys = EmbeddedSystem(spec=spec, procedure=procedure, blocks=blocks,
                         dims={nm: sizes[nm] for nm in names}, wiener=wiener,
                         drift=drift, noise=noise, fast_block_names=fast_names,
                         m0=m0)

    def fast_blocks(eps):
        s_mem, mass = scales(eps)
        infos = []
        if "v" in fast_names:
            g0 = spec.gamma0
            sigma0_ok = spec.sigma0 is None or spec.sigma0.constant
            if not (g0.constant and sigma0_ok):
                infos.append(FastBlockInfo("v", blocks["v"], None, None, None, True))
            else:
                a = g0.value(0.0, np.zeros(d)) / mass

                def affine_v(t, z):
                    x = z[..., blocks["x"]]
                    y = z[..., blocks["y"]]
                    bf = z[..., blocks["beta_f"]]
                    acc = spec.force(t, x) - mv(spec.g.value(t, x) @ mem.c, y) \
                        + mv(spec.sigma_f.value(t, x) @ fast.c, bf)
                    if ds:
                        acc = acc + mv(spec.sigma_s.value(t, x) @ slow.c,
                                       z[..., blocks["beta_s"]])
                    return acc / mass

                rows = None
                if spec.sigma0 is not None and spec.sigma0.constant:
                    rows = np.zeros((d, nw))
                    o, w = wiener["b"]
                    rows[:, o:o + w] = spec.sigma0.value(0.0, np.zeros(d)) / mass
                infos.append(FastBlockInfo("v", blocks["v"], a, affine_v, rows))
        if "y" in fast_names:
            a = mem.gamma * s_mem

            def affine_y(t, z):
                x = z[..., blocks["x"]]
                v = z[..., blocks["v"]]
                return s_mem * mv(mem.m @ mem.c.T, mv(spec.h.value(t, x), v))

            infos.append(FastBlockInfo("y", blocks["y"], a, affine_y, None))
        if "beta_f" in fast_names:
            a = fast.gamma * s_mem
            rows = np.zeros((df, nw))
            o, w = wiener["w_f"]
            rows[:, o:o + w] = s_mem * fast.sigma
            infos.append(FastBlockInfo("beta_f", blocks["beta_f"], a, None, rows))
        return infos

    sys.fast_blocks = fast_blocks
    return sys


def _embed_markov_then_mass(spec: GleSpec, m0: float):
    """Pre-limit of the small-mass step taken after the Markovian limit:
    state (x, v, beta_s), memory contracted into Gamma = gamma0 + g K1 h and
    white noise Sigma = sigma_f C_f Gamma_f^{-1} Sigma_f driven by the same
    fast Wiener path."""
    d = spec.dim
    ds = spec.slow_noise.state_dim if spec.slow_noise is not None else 0
    names = ["x", "v"] + (["beta_s"] if ds else [])
    sizes = {"x": d, "v": d, "beta_s": ds}
    blocks = _block_layout(names, sizes)
    wiener = _wiener_layout(spec)
    gamma = spec.gamma_eff()
    sigma = spec.sigma_eff()
    slow = spec.slow_noise
    nz = sum(sizes[nm] for nm in names)
    nw = sum(s for _, s in wiener.values())

    def drift(t, z, eps):
        mass = m0 * eps
        x = z[..., blocks["x"]]
        v = z[..., blocks["v"]]
        out = np.zeros_like(z)
        acc = spec.force(t, x) - mv(gamma.value(t, x), v)
        if ds:
            bs = z[..., blocks["beta_s"]]
            acc = acc + mv(spec.sigma_s.value(t, x) @ slow.c, bs)
            out[..., blocks["beta_s"]] = -mv(slow.gamma, bs)
        out[..., blocks["x"]] = v
        out[..., blocks["v"]] = acc / mass
        return out

    def noise(t, z, eps):
        mass = m0 * eps
        x = z[..., blocks["x"]]
        sig = sigma.value(t, x)
        o, w = wiener["w_f"]
        if sig.ndim == 2:
            mat = np.zeros((nz, nw))
            mat[blocks["v"], o:o + w] = sig / mass
        else:
            mat = np.zeros(sig.shape[:-2] + (nz, nw))
            mat[..., blocks["v"], o:o + w] = sig / mass
        if "w_s" in wiener:
            os_, ws_ = wiener["w_s"]
            mat[..., blocks["beta_s"], os_:os_ + ws_] = slow.sigma
        return mat

    sys = EmbeddedSystem(spec=spec, procedure="markov_then_mass", blocks=blocks,
                         dims={nm: sizes[nm] for nm in names}, wiener=wiener,
                         drift=drift, noise=noise, fast_block_names=("v",), m0=m0)

    def fast_blocks(eps):
        mass = m0 * eps
        if not (gamma.constant and sigma.constant):
            return [FastBlockInfo("v", blocks["v"], None, None, None, True)]
        a = gamma.value(0.0, np.zeros(d)) / mass
        rows = np.zeros((d, nw))
        o, w = wiener["w_f"]
        rows[:, o:o + w] = sigma.value(0.0, np.zeros(d)) / mass

        def affine_v(t, z):
            x = z[..., blocks["x"]]
            acc = spec.force(t, x)
            if ds:
                acc = acc + mv(spec.sigma_s.value(t, x) @ slow.c,
                               z[..., blocks["beta_s"]])
            return acc / mass

        return [FastBlockInfo("v", blocks["v"], a, affine_v, rows)]

    sys.fast_blocks = fast_blocks
    return sys


def _embed_mass_then_markov(spec: GleSpec, m0: float):
    """Pre-limit of the Markovian step taken after the small-mass limit:
    state (x, y, beta_f, beta_s) with gamma1 = Gamma1 + M1 C1^T h gamma0^{-1} g C1
    damping the accelerated memory block."""
    d = spec.dim
    d1 = spec.memory.state_dim
    df = spec.fast_noise.state_dim
    ds = spec.slow_noise.state_dim if spec.slow_noise is not None else 0
    names = ["x", "y", "beta_f"] + (["beta_s"] if ds else [])
    sizes = {"x": d, "y": d1, "beta_f": df, "beta_s": ds}
    blocks = _block_layout(names, sizes)
    wiener = _wiener_layout(spec)
    mem, fast, slow = spec.memory, spec.fast_noise, spec.slow_noise
    nz = sum(sizes[nm] for nm in names)
    nw = sum(s for _, s in wiener.values())

    def gamma0_inv(t, x):
        return np.linalg.inv(spec.gamma0.value(t, x))

    def drift(t, z, eps):
        x = z[..., blocks["x"]]
        y = z[..., blocks["y"]]
        bf = z[..., blocks["beta_f"]]
        out = np.zeros_like(z)
        g0i = gamma0_inv(t, x)
        forcing = spec.force(t, x) + mv(spec.sigma_f.value(t, x) @ fast.c, bf)
        if ds:
            bs = z[..., blocks["beta_s"]]
            forcing = forcing + mv(spec.sigma_s.value(t, x) @ slow.c, bs)
            out[..., blocks["beta_s"]] = -mv(slow.gamma, bs)
        gv = spec.g.value(t, x) @ mem.c
        out[..., blocks["x"]] = mv(g0i, forcing - mv(gv, y))
        hv = spec.h.value(t, x)
        gamma1 = mem.gamma + mem.m @ mem.c.T @ (hv @ g0i @ gv)
        out[..., blocks["y"]] = (-mv(gamma1, y)
                                 + mv(mem.m @ mem.c.T, mv(hv, mv(g0i, forcing)))) / eps
        out[..., blocks["beta_f"]] = -mv(fast.gamma, bf) / eps
        return out

    def noise(t, z, eps):
        mat = np.zeros((nz, nw))
        o, w = wiener["w_f"]
        mat[blocks["beta_f"], o:o + w] = fast.sigma / eps
        if "w_s" in wiener:
            os_, ws_ = wiener["w_s"]
            mat[blocks["beta_s"], os_:os_ + ws_] = slow.sigma
        return mat

    sys = EmbeddedSystem(spec=spec, procedure="mass_then_markov", blocks=blocks,
                         dims={nm: sizes[nm] for nm in names}, wiener=wiener,
                         drift=drift, noise=noise,
                         fast_block_names=("y", "beta_f"), m0=m0)

    def fast_blocks(eps):
        infos = []
        const_gamma1 = (spec.h.constant and spec.g.constant and spec.gamma0.constant)
        if const_gamma1:
            x0 = np.zeros(d)
            g0i = gamma0_inv(0.0, x0)
            a = (mem.gamma + mem.m @ mem.c.T @ spec.h.value(0.0, x0) @ g0i
                 @ spec.g.value(0.0, x0) @ mem.c) / eps

            def affine_y(t, z):
                x = z[..., blocks["x"]]
                bf = z[..., blocks["beta_f"]]
                forcing = spec.force(t, x) + mv(spec.sigma_f.value(t, x) @ fast.c, bf)
                if ds:
                    forcing = forcing + mv(spec.sigma_s.value(t, x) @ slow.c,
                                           z[..., blocks["beta_s"]])
                return mv(mem.m @ mem.c.T @ spec.h.value(0.0, x0) @ g0i, forcing) / eps

            infos.append(FastBlockInfo("y", blocks["y"], a, affine_y, None))
        else:
            infos.append(FastBlockInfo("y", blocks["y"], None, None, None, True))
        rows = np.zeros((df, nw))
        o, w = wiener["w_f"]
        rows[:, o:o + w] = fast.sigma / eps
        infos.append(FastBlockInfo("beta_f", blocks["beta_f"], fast.gamma / eps,
                                   None, rows))
        return infos

    sys.fast_blocks = fast_blocks
    return sys
