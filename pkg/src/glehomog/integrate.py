"""Time integration of embedded SDE systems along prescribed Wiener paths.

Two schemes:

* ``euler_maruyama``: explicit Euler on the Ito form; consumes the raw path
  increments, which makes trajectories couple exactly across epsilon ladders
  and path refinements.
* ``exp_ou_splitting``: slow blocks by explicit Euler, fast conditionally
  linear blocks by their exact Ornstein-Uhlenbeck transition with slow
  coefficients frozen over the step.  The transition noise is derived from
  the same path increments through a fixed isometry whose small-dt limit is
  the Euler noise, with covariance computed by the Van Loan block
  exponential, so the scheme is stable and statistically exact for any dt.

States are batched: z has shape (nz,) or (B, nz) and all evaluators
broadcast over the leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

SCHEMES = ("euler_maruyama", "exp_ou_splitting")
_NAN_CHECK_EVERY = 64


class IntegrationError(RuntimeError):
    pass


@dataclass
class Trajectory:
    times: np.ndarray           # (K+1,)
    states: np.ndarray          # (K+1, nz) or (B, K+1, nz)
    blocks: dict                # name -> slice
    eps: float
    dt: float
    procedure: str
    scheme: str
    mass: float                 # effective mass along this run
    fast_block_names: tuple = ()
    ledger: object = None

    @property
    def batched(self):
        return self.states.ndim == 3

    def block(self, name):
        return self.states[..., self.blocks[name]]

    def x(self):
        return self.block("x")

    def v(self):
        if "v" not in self.blocks:
            raise KeyError("trajectory has no velocity block")
        return self.block("v")


def sup_distance(a: Trajectory, b: Trajectory, block="x"):
    """Max over the common grid of the Euclidean norm of the block difference."""
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times):
        raise ValueError("trajectories live on different time grids")
    da = a.block(block)
    db = b.block(block)
    if da.shape[-1] != db.shape[-1]:
        raise ValueError("block dimensions differ")
    diff = np.linalg.norm(da - db, axis=-1)
    return diff.max(axis=-1)


def _van_loan_cov(a, rrt, dt):
    """Exact OU step covariance: int_0^dt exp(-A s) RR^T exp(-A^T s) ds."""
    n = a.shape[0]
    m = np.zeros((2 * n, 2 * n))
    m[:n, :n] = a
    m[:n, n:] = rrt
    m[n:, n:] = -a.T
    e = expm(m * dt)
    return e[n:, n:].T @ e[:n, n:]


class _ExactBlockStep:
    """Precomputed exact transition for one fast conditionally-linear block.

    The update reads z' = E z + Phi b(t, z) + xi with E = exp(-A dt),
    Phi = A^{-1}(I - E) and xi ~ N(0, Q_dt) assembled from the standardized
    path increments u = dW / sqrt(dt) as xi = noise_map @ u.
    """

    def __init__(self, info, dt, n_wiener):
        self.sl = info.sl
        a = np.asarray(info.a_matrix, dtype=float)
        nb = a.shape[0]
        self.e = expm(-a * dt)
        self.phi = np.linalg.solve(a, np.eye(nb) - self.e)
        self.affine = info.affine
        self.noise_map = None
        if info.noise_rows is None:
            return
        r = np.asarray(info.noise_rows, dtype=float)
        cov = _van_loan_cov(a, r @ r.T, dt)
        lam, w = np.linalg.eigh(cov)
        lam = np.clip(lam, 0.0, None)
        active = lam > 1e-13 * max(lam.max(initial=0.0), 1e-300)
        u_svd, s, vt = np.linalg.svd(r)
        r_rank = int(np.sum(s > 1e-13 * max(1.0, s.max(initial=0.0))))
        if int(active.sum()) > r_rank:
            raise IntegrationError(
                "exp_ou_splitting: hypoelliptic fast block needs more noise "
                "directions than the path carries; use euler_maruyama")
        w_act = w[:, active]
        lam_act = lam[active]
        # Orthonormal map (polar factor) from the r_rank standardized path
        # normals onto the covariance eigendirections; for small dt this
        # reduces noise_map -> sqrt(dt) R.
        m = w_act.T @ u_svd[:, :r_rank]
        uu, _, vv = np.linalg.svd(m, full_matrices=False)
        o = uu @ vv
        self.noise_map = (w_act * np.sqrt(lam_act)) @ o @ vt[:r_rank]

    def apply(self, t, z_old, z_new, std_normals):
        zb = z_old[..., self.sl]
        upd = (self.e @ zb[..., None])[..., 0]
        if self.affine is not None:
            b = self.affine(t, z_old)
            upd = upd + (self.phi @ b[..., None])[..., 0]
        if self.noise_map is not None:
            upd = upd + (self.noise_map @ std_normals[..., None])[..., 0]
        z_new[..., self.sl] = upd


def _check_finite(z, step):
    if not np.all(np.isfinite(z)):
        raise IntegrationError(f"non-finite state at step {step}")


def simulate(system, increments, eps, dt, scheme="euler_maruyama",
             z0=None, t0=0.0, record_every=1, accumulator=None):
    """Integrate ``system`` along the given increments.

    ``increments``: (n_steps, nw) or (B, n_steps, nw) Wiener increments on
    the dt grid, blocks ordered per ``system.wiener``.
    ``z0``: initial state, (nz,) or (B, nz); zeros by default.
    ``accumulator``: optional object with ``start(t, z, mass)`` and
    ``step(t, z, t1, z1)`` and ``snapshot()`` hooks, fed every integration
    step (functional ledgers accumulate at full resolution even when the
    trajectory is recorded at a stride).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    increments = np.asarray(increments, dtype=float)
    batched = increments.ndim == 3
    n_steps = increments.shape[-2]
    nz = system.state_dim
    nw = system.wiener_dim
    if increments.shape[-1] != nw:
        raise ValueError(f"increments last axis must be {nw}")
    if n_steps % record_every:
        raise ValueError("record_every must divide the number of steps")

    if z0 is None:
        z0 = np.zeros((increments.shape[0], nz)) if batched else np.zeros(nz)
    z = np.array(z0, dtype=float, copy=True)
    if batched and z.ndim == 1:
        z = np.broadcast_to(z, (increments.shape[0], nz)).copy()

    n_rec = n_steps // record_every
    shape = (increments.shape[0], n_rec + 1, nz) if batched else (n_rec + 1, nz)
    states = np.empty(shape)
    states[..., 0, :] = z
    times = t0 + dt * record_every * np.arange(n_rec + 1)

    mass = system.effective_mass(eps)
    exact_blocks = []
    fast_slices = []
    if scheme == "exp_ou_splitting":
        for info in system.fast_blocks(eps):
            if info.state_dependent_a:
                raise IntegrationError(
                    "exp_ou_splitting requires state-independent fast-block "
                    "matrices; use euler_maruyama")
            exact_blocks.append(_ExactBlockStep(info, dt, nw))
            fast_slices.append(info.sl)

    if accumulator is not None:
        accumulator.start(t0, z, mass=mass, eps=eps)

    sqrt_dt = np.sqrt(dt)
    rec = 1
    for k in range(n_steps):
        t = t0 + k * dt
        dw = increments[..., k, :]
        drift = system.drift(t, z, eps)
        noise = system.noise(t, z, eps)
        if scheme == "euler_maruyama":
            z_new = z + drift * dt + (noise @ dw[..., None])[..., 0]
        else:
            z_new = z + drift * dt + (noise @ dw[..., None])[..., 0]
            std = dw / sqrt_dt
            for blk in exact_blocks:
                blk.apply(t, z, z_new, std)
        if accumulator is not None:
            accumulator.step(t, z, t + dt, z_new)
        z = z_new
        if (k + 1) % _NAN_CHECK_EVERY == 0 or k == n_steps - 1:
            _check_finite(z, k + 1)
        if (k + 1) % record_every == 0:
            states[..., rec, :] = z
            if accumulator is not None:
                accumulator.snapshot()
            rec += 1

    ledger = accumulator.finish(times) if accumulator is not None else None
    return Trajectory(times=times, states=states, blocks=system.blocks, eps=eps,
                      dt=dt, procedure=system.procedure, scheme=scheme,
                      mass=mass, fast_block_names=tuple(system.fast_block_names),
                      ledger=ledger)
