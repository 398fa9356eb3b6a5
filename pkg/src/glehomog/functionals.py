"""Thermodynamic functional ledgers along trajectories.

Accumulation conventions: dt-terms use midpoint evaluation in (t, x) and
state-increment terms use the midpoint (Stratonovich) rule.  For pre-limit
paths without direct white noise on the velocity both conventions agree in
the limit; the midpoint rule is kept so the same accumulator is meaningful
on homogenized trajectories.

The potential part of the heat is accumulated through exact increments of
U(t, x) minus the midpoint dU/dt term, which makes the first law
E_t - E_0 = W_t + Q_t an identity of the discretization up to float
roundoff, not merely up to quadrature error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HEAT_LIKE = ("Q", "E", "S_env")
ALL_FUNCTIONALS = ("Q", "W", "R", "E", "S_env", "area", "B")


@dataclass
class FunctionalLedger:
    times: np.ndarray
    mass: float
    eps: float
    beta: float
    series: dict = field(default_factory=dict)   # name -> (n_rec+1,) or (B, n_rec+1)

    def __getitem__(self, name):
        return self.series[name]

    def __contains__(self, name):
        return name in self.series

    def terminal(self, name):
        return self.series[name][..., -1]

    def first_law_gap(self):
        """max_t |E_t - E_0 - W_t - Q_t| / max(1, |E_t|), per path."""
        e = self.series["E"]
        gap = e - e[..., :1] - self.series["W"] - self.series["Q"]
        return np.max(np.abs(gap) / np.maximum(1.0, np.abs(e)), axis=-1)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


class LedgerAccumulator:
    """Step-by-step functional accumulation, fed by the integrator.

    ``kinetic='midpoint'`` (the default) evaluates m v . dv at the midpoint,
    which telescopes the kinetic energy exactly; ``kinetic='leftpoint'``
    gives the Ito-form heat used when reconstructing the limit heat together
    with its anomalous drift."""

    def __init__(self, system, which=None, beta=1.0, kinetic="midpoint"):
        spec = system.spec
        self.spec = spec
        self.blocks = system.blocks
        self.has_v = "v" in system.blocks
        self.fast_names = tuple(n for n in system.fast_block_names
                                if n in system.blocks)
        which = tuple(which) if which is not None else ALL_FUNCTIONALS
        bad = set(which) - set(ALL_FUNCTIONALS)
        if bad:
            raise ValueError(f"unknown functionals {sorted(bad)}")
        if spec.has_white_noise and set(which) & set(HEAT_LIKE):
            raise ValueError(
                "heat-like functionals are ambiguous when sigma0 is non-zero; "
                "request only position-path functionals (W, R, area)")
        if not self.has_v and set(which) & {"Q", "E"}:
            raise ValueError("Q and E need a velocity block")
        if kinetic not in ("midpoint", "leftpoint"):
            raise ValueError("kinetic must be 'midpoint' or 'leftpoint'")
        self.which = which
        self.beta = beta
        self.kinetic = kinetic

    # -- integrator hooks ------------------------------------------------
    def start(self, t0, z0, mass, eps):
        self.mass = mass
        self.eps = eps
        self.t0 = t0
        self.running = {}
        shape = z0.shape[:-1]
        for name in self.which:
            if name in ("E", "S_env"):
                continue
            self.running[name] = np.zeros(shape)
        self.snaps = {name: [np.zeros(shape)] for name in self.which
                      if name not in ("E", "S_env", "B")}
        if "B" in self.which:
            self.running["_int_B"] = np.zeros(shape)
            self.snaps["int_B"] = [np.zeros(shape)]
            self.snaps["B"] = [self._b_value(z0)]
        if "E" in self.which:
            self.snaps["E"] = [self._energy(t0, z0)]
        self._t = t0

    def _b_value(self, z):
        if not self.fast_names:
            return np.zeros(z.shape[:-1])
        total = np.zeros(z.shape[:-1])
        for name in self.fast_names:
            zb = z[..., self.blocks[name]]
            total = total + _dot(zb, zb)
        return 0.5 * self.eps * total

    def _energy(self, t, z):
        x = z[..., self.blocks["x"]]
        v = z[..., self.blocks["v"]]
        return 0.5 * self.mass * _dot(v, v) + self.spec.potential.value(t, x)

    def step(self, t0, z0, t1, z1):
        spec = self.spec
        x0 = z0[..., self.blocks["x"]]
        x1 = z1[..., self.blocks["x"]]
        dx = x1 - x0
        tm = 0.5 * (t0 + t1)
        xm = 0.5 * (x0 + x1)
        dt = t1 - t0
        run = self.running
        need_work_terms = ("Q" in run) or ("W" in run)
        if need_work_terms:
            du_dt = spec.potential.dt(tm, xm)
            fnc = spec.f_nc.value(tm, xm)
            w_inc = du_dt * dt + _dot(fnc, dx)
        if "W" in run:
            run["W"] = run["W"] + w_inc
        if "Q" in run:
            v0 = z0[..., self.blocks["v"]]
            v1 = z1[..., self.blocks["v"]]
            vref = 0.5 * (v0 + v1) if self.kinetic == "midpoint" else v0
            du = spec.potential.value(t1, x1) - spec.potential.value(t0, x0)
            run["Q"] = run["Q"] + self.mass * _dot(vref, v1 - v0) + du - w_inc
        if "R" in run:
            run["R"] = run["R"] + _dot(spec.force(tm, xm), dx)
        if "area" in run and spec.dim >= 2:
            run["area"] = run["area"] + 0.5 * (xm[..., 0] * dx[..., 1]
                                               - xm[..., 1] * dx[..., 0])
        if "_int_B" in run:
            run["_int_B"] = run["_int_B"] + 0.5 * (self._b_value(z0)
                                                   + self._b_value(z1)) * dt
        self._t = t1
        self._z = z1

    def snapshot(self):
        for name in self.snaps:
            if name == "int_B":
                self.snaps[name].append(self.running["_int_B"].copy())
            elif name == "B":
                self.snaps[name].append(self._b_value(self._z))
            elif name == "E":
                self.snaps[name].append(self._energy(self._t, self._z))
            else:
                self.snaps[name].append(self.running[name].copy())

    def finish(self, times):
        series = {}
        for name, snaps in self.snaps.items():
            series[name] = np.stack(snaps, axis=-1)
        if "S_env" in self.which:
            series["S_env"] = -self.beta * series["Q"]
        return FunctionalLedger(times=times, mass=self.mass, eps=self.eps,
                                beta=self.beta, series=series)


def accumulate(trajectory, spec=None, which=None, beta=1.0, system=None,
               kinetic="midpoint"):
    """Recompute ledgers from a recorded trajectory.

    Exact only when the trajectory was recorded at every integration step;
    for strided recordings this is the midpoint rule on the recorded grid.
    """

    class _Sys:
        pass

    sys_like = _Sys()
    if system is not None:
        sys_like.spec = system.spec
        sys_like.blocks = system.blocks
        sys_like.fast_block_names = system.fast_block_names
    else:
        if spec is None:
            raise ValueError("need spec or system")
        sys_like.spec = spec
        sys_like.blocks = trajectory.blocks
        sys_like.fast_block_names = trajectory.fast_block_names
    acc = LedgerAccumulator(sys_like, which=which, beta=beta, kinetic=kinetic)
    states = trajectory.states
    times = trajectory.times
    acc.start(times[0], states[..., 0, :], mass=trajectory.mass,
              eps=trajectory.eps)
    for k in range(len(times) - 1):
        acc.step(times[k], states[..., k, :], times[k + 1], states[..., k + 1, :])
        acc.snapshot()
    return acc.finish(times)


def stratonovich_integral(p, trajectory, block="x"):
    """Midpoint-rule integral sum p(t_mid, x_mid) . dx along a trajectory.

    ``p`` is a callable (t, x) -> (d,)-vector (batched) for scalar output or
    (l, d)-matrix for vector output.
    """
    xs = trajectory.block(block)
    ts = trajectory.times
    x0 = xs[..., :-1, :]
    x1 = xs[..., 1:, :]
    xm = 0.5 * (x0 + x1)
    dx = x1 - x0
    tm = 0.5 * (ts[:-1] + ts[1:])
    total = None
    for k in range(len(tm)):
        xk = xm[..., k, :]
        dxk = dx[..., k, :]
        val = np.asarray(p(tm[k], xk), dtype=float)
        if val.shape[-1] != dxk.shape[-1]:
            raise ValueError("p must return vectors/matrices over the block dim")
        if val.ndim == xk.ndim + 1:
            inc = (val @ dxk[..., None])[..., 0]
        elif val.ndim == xk.ndim:
            inc = _dot(val, dxk)
        else:
            raise ValueError("p output rank does not match the state batch rank")
        total = inc if total is None else total + inc
    return total
