"""Epsilon-ladder convergence experiments with common random numbers.

One Wiener path per noise block drives every epsilon of the ladder and the
homogenized limit equation, so the reported errors measure strong pathwise
coupling directly.  Ladder points run sequentially; path-level work is
vectorized inside the integrator and reduced deterministically by path
index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embed import embed
from .functionals import LedgerAccumulator
from .glespec import GleSpec
from .integrate import simulate
from .limits import HomogenizedModel, reduce as reduce_model
from .scenarios import magnetic
from .slowfast import reduce_general
from .wiener import ensemble_increments, init_stream

BLOCK_IDS = {"w_f": 0, "w_s": 1, "b": 2}


def default_dt_rule(eps, scheme="euler_maruyama"):
    """dt small enough that discretization bias stays below the epsilon
    effects being measured."""
    if scheme == "euler_maruyama":
        return min(1e-3, eps / 20.0)
    return 1e-3


@dataclass
class EpsilonLadder:
    values: tuple
    paths: int = 200
    seed: int = 0
    dt_rule: object = None

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if any(v <= 0 for v in vals):
            raise ValueError("epsilon values must be positive")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("epsilon values must be strictly decreasing")
        self.values = vals
        if self.dt_rule is None:
            self.dt_rule = default_dt_rule

    def dt_for(self, eps, scheme, T):
        dt = self.dt_rule(eps, scheme)
        n = max(1, round(T / dt))
        return T / n


@dataclass
class ConvergenceReport:
    scenario: str
    procedure: str
    seed: int
    paths: int
    eps: list
    mean: dict        # tracked name -> list of per-eps means
    stderr: dict
    rates: dict       # tracked name -> {"slope", "intercept", "r2"}
    extras: dict = field(default_factory=dict)

    def monotone(self, name, slack=1.0):
        """Strict decrease allowing ``slack`` standard errors."""
        m = self.mean[name]
        s = self.stderr[name]
        return all(m[i + 1] < m[i] + slack * s[i] for i in range(len(m) - 1))

    def to_dict(self):
        return {"scenario": self.scenario, "procedure": self.procedure,
                "seed": self.seed, "paths": self.paths, "eps": list(self.eps),
                "mean": {k: list(map(float, v)) for k, v in self.mean.items()},
                "stderr": {k: list(map(float, v)) for k, v in self.stderr.items()},
                "rates": self.rates, "extras": self.extras}


def fit_rate(eps_values, errors):
    """Least-squares log-log fit; returns (slope, intercept, r2)."""
    eps_values = np.asarray(eps_values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if eps_values.size < 3:
        raise ValueError("rate fit needs at least 3 ladder points")
    if np.any(errors <= 0):
        raise ValueError("rate fit needs positive errors")
    lx = np.log(eps_values)
    ly = np.log(errors)
    a = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(a, ly, rcond=None)
    pred = a @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def _make_increments(seed, system, n_paths, n_steps, T):
    nw = system.wiener_dim
    inc = np.zeros((n_paths, n_steps, nw))
    for name, (off, width) in system.wiener.items():
        if width == 0:
            continue
        inc[:, :, off:off + width] = ensemble_increments(
            seed, n_paths, n_steps, width, T, block=BLOCK_IDS[name])
    return inc


def _coarsen(inc, factor):
    if factor == 1:
        return inc
    b, n, w = inc.shape
    return inc.reshape(b, n // factor, factor, w).sum(axis=2)


def _initial_states(spec, system, lsys, model, n_paths, seed, eps, x0, v0_policy,
                    m0):
    """Coupled initial conditions: one unit-normal vector per path scales
    into every epsilon (and into the limit where the block survives)."""
    d = spec.dim
    z0 = np.zeros((n_paths, system.state_dim))
    z0l = np.zeros((n_paths, lsys.state_dim))
    if x0 is not None:
        z0[:, system.blocks["x"]] = x0
        z0l[:, lsys.blocks["x"]] = x0
    v_fast = "v" in system.fast_block_names
    vcov = None
    if isinstance(v0_policy, str) and v0_policy == "stationary" and v_fast:
        xref = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
        if model is not None and "J11" in model.fields:
            vcov = model.fields["J11"](xref) / (m0 * eps)
        elif model is not None and "J" in model.fields:
            vcov = model.fields["J"](xref) / (m0 * eps)
        else:
            vcov = np.eye(d) / eps
    for i in range(n_paths):
        g = init_stream(seed, path_index=i)
        zv = g.standard_normal(d)
        zf = g.standard_normal(spec.fast_noise.state_dim)
        zs = g.standard_normal(spec.slow_noise.state_dim) \
            if spec.slow_noise is not None else None
        if "v" in system.blocks:
            if vcov is not None:
                z0[i, system.blocks["v"]] = np.linalg.cholesky(vcov) @ zv
            elif isinstance(v0_policy, np.ndarray):
                z0[i, system.blocks["v"]] = v0_policy
                if "v" in lsys.blocks:
                    z0l[i, lsys.blocks["v"]] = v0_policy
        if "beta_f" in system.blocks:
            scale = eps if "beta_f" in system.fast_block_names else 1.0
            cov = spec.fast_noise.m / scale
            z0[i, system.blocks["beta_f"]] = np.linalg.cholesky(cov) @ zf
        if "beta_s" in system.blocks and zs is not None:
            draw = np.linalg.cholesky(spec.slow_noise.m) @ zs
            z0[i, system.blocks["beta_s"]] = draw
            if "beta_s" in lsys.blocks:
                z0l[i, lsys.blocks["beta_s"]] = draw
        if "beta_f" in lsys.blocks:
            z0l[i, lsys.blocks["beta_f"]] = np.linalg.cholesky(
                spec.fast_noise.m) @ zf
    return z0, z0l


def _rate_integral(model, name, ltraj):
    """Time integral of an anomalous drift rate along the limit trajectory."""
    rate = model.functional_rates[name]
    xs = ltraj.block("x")
    ts = ltraj.times
    T = ts[-1] - ts[0]
    if _anomaly_is_constant(model):
        d = model.spec.dim
        r0 = rate(ts[0], np.zeros(d))
        r1 = rate(ts[0], 0.37 * np.ones(d))
        if abs(r0 - r1) <= 1e-13 * (1.0 + abs(r0)):
            val = r0 * T
            return np.full(xs.shape[0], val) if xs.ndim == 3 else val
    # midpoint rule on the recorded grid
    x0 = xs[..., :-1, :]
    x1 = xs[..., 1:, :]
    xm = 0.5 * (x0 + x1)
    tm = 0.5 * (ts[:-1] + ts[1:])
    dts = ts[1:] - ts[:-1]
    if xs.ndim == 2:
        return float(sum(rate(tm[k], xm[k]) * dts[k] for k in range(len(tm))))
    out = np.zeros(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = sum(rate(tm[k], xm[i, k]) * dts[k] for k in range(len(tm)))
    return out


def _anomaly_is_constant(model):
    spec = model.spec
    return (spec.gamma0.constant and spec.g.constant and spec.h.constant
            and spec.sigma_f.constant)


def _b_limit_integral(model, ltraj):
    xs = ltraj.block("x")
    ts = ltraj.times
    T = ts[-1] - ts[0]
    if _anomaly_is_constant(model):
        x_ref = xs[0, 0, :] if xs.ndim == 3 else xs[0]
        return model.b_limit(x_ref) * T
    x0 = xs[..., :-1, :]
    x1 = xs[..., 1:, :]
    xm = 0.5 * (x0 + x1)
    dts = ts[1:] - ts[:-1]
    if xs.ndim == 2:
        return float(sum(model.b_limit(xm[k]) * dts[k] for k in range(len(dts))))
    out = np.zeros(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = sum(model.b_limit(xm[i, k]) * dts[k] for k in range(len(dts)))
    return out


def _record_stride(n):
    stride = max(1, n // 200)
    while n % stride:
        stride -= 1
    return stride


def run_convergence(spec: GleSpec, procedure, ladder: EpsilonLadder, T=1.0,
                    m0=1.0, blocks=("x",), x0=None, v0_policy="zero",
                    scheme="euler_maruyama", model: HomogenizedModel = None,
                    scenario_name=None):
    """Strong pathwise errors of tracked state blocks against the
    homogenized limit, one common Wiener path per noise block."""
    if model is None:
        model = reduce_model(spec, procedure, m0=m0)
    system = embed(spec, procedure, m0=m0)
    lsys = model.system
    dts = [ladder.dt_for(eps, scheme, T) for eps in ladder.values]
    dt_base = min(dts)
    n_base = round(T / dt_base)
    for dt in dts:
        if round(T / dt) and n_base % round(T / dt):
            raise ValueError("dt rule must produce commensurate grids")
    inc_base = _make_increments(ladder.seed, system, ladder.paths, n_base, T)
    stride = _record_stride(n_base)
    ltraj = simulate(lsys, inc_base, 1.0, dt_base, scheme="euler_maruyama",
                     z0=_initial_states(spec, system, lsys, model, ladder.paths,
                                        ladder.seed, ladder.values[0], x0,
                                        v0_policy, m0)[1],
                     record_every=stride)
    mean = {b: [] for b in blocks}
    stderr = {b: [] for b in blocks}
    for eps, dt in zip(ladder.values, dts):
        n = round(T / dt)
        inc = _coarsen(inc_base, n_base // n)
        z0, _ = _initial_states(spec, system, lsys, model, ladder.paths,
                                ladder.seed, eps, x0, v0_policy, m0)
        n_records = n_base // stride
        rec = n // n_records
        if rec == 0 or n % rec or n // rec != n_records:
            raise ValueError("ladder dt rule incompatible with the recording grid")
        traj = simulate(system, inc, eps, dt, scheme=scheme, z0=z0,
                        record_every=rec)
        for b in blocks:
            diff = np.linalg.norm(traj.block(b) - ltraj.block(b), axis=-1)
            sup = diff.max(axis=-1)
            mean[b].append(float(sup.mean()))
            stderr[b].append(float(sup.std(ddof=1) / np.sqrt(ladder.paths)))
    rates = {}
    for b in blocks:
        try:
            slope, intercept, r2 = fit_rate(ladder.values, mean[b])
            rates[b] = {"slope": slope, "intercept": intercept, "r2": r2}
        except ValueError:
            rates[b] = None
    return ConvergenceReport(scenario=scenario_name or spec.name,
                             procedure=procedure, seed=ladder.seed,
                             paths=ladder.paths, eps=list(ladder.values),
                             mean=mean, stderr=stderr, rates=rates)


_PRE_FUNCTIONALS = {"Q": ("Q", "W", "E"), "W": ("W",), "R": ("R",),
                    "B": ("B",), "area": ("area",)}


def run_functional_convergence(spec: GleSpec, procedure, ladder: EpsilonLadder,
                               T=1.0, m0=1.0, functionals=("W",), x0=None,
                               v0_policy="zero", scheme="euler_maruyama",
                               model: HomogenizedModel = None,
                               scenario_name=None):
    """Terminal errors of functional ledgers against their limit predictions.

    The limit-side prediction of a position-path functional is its midpoint
    (Stratonovich) accumulation along the limit trajectory plus the model's
    anomalous drift integrated in time; the heat uses the left-point (Ito)
    kinetic term plus its Ito-form anomaly.  For every functional with a
    non-trivial anomaly field the report also carries a ``*_no_anom`` entry
    dropping the anomalous term, so paired experiments can show the anomaly
    is real.
    """
    if model is None:
        model = reduce_model(spec, procedure, m0=m0)
    system = embed(spec, procedure, m0=m0)
    lsys = model.system
    pre_needed = set()
    for f in functionals:
        pre_needed.update(_PRE_FUNCTIONALS[f])
    dts = [ladder.dt_for(eps, scheme, T) for eps in ladder.values]
    dt_base = min(dts)
    n_base = round(T / dt_base)
    inc_base = _make_increments(ladder.seed, system, ladder.paths, n_base, T)
    stride = _record_stride(n_base)

    _, z0l = _initial_states(spec, system, lsys, model, ladder.paths,
                                    ladder.seed, ladder.values[0], x0,
                                    v0_policy, m0)
    lim_which = [f for f in ("W", "R", "area") if f in functionals]
    # midpoint ledgers along the limit path; the Ito-form heat runs separately
    ltraj = simulate(lsys, inc_base, 1.0, dt_base, z0=z0l, record_every=stride,
                     accumulator=LedgerAccumulator(lsys, which=tuple(lim_which))
                     if lim_which else None)
    lim_pred = {}
    if "Q" in functionals and "v" in lsys.blocks:
        qtraj = simulate(lsys, inc_base, 1.0, dt_base, z0=z0l,
                         record_every=n_base,
                         accumulator=LedgerAccumulator(lsys, which=("Q", "W", "E"),
                                                       kinetic="leftpoint"))
        q_base = qtraj.ledger.terminal("Q")
        i_q = _rate_integral(model, "Q_anom", ltraj)
        lim_pred["Q"] = q_base + i_q
        lim_pred["Q_no_anom"] = q_base
    if "W" in functionals:
        w_base = ltraj.ledger.terminal("W")
        i_w = _rate_integral(model, "W_anom", ltraj)
        lim_pred["W"] = w_base + i_w
        lim_pred["W_no_anom"] = w_base
    if "R" in functionals:
        r_base = ltraj.ledger.terminal("R")
        i_r = _rate_integral(model, "R_anom", ltraj)
        lim_pred["R"] = r_base + i_r
        lim_pred["R_no_anom"] = r_base
    if "B" in functionals:
        lim_pred["B"] = _b_limit_integral(model, ltraj)

    names = list(lim_pred.keys())
    mean = {n: [] for n in names}
    stderr = {n: [] for n in names}
    for eps, dt in zip(ladder.values, dts):
        n = round(T / dt)
        inc = _coarsen(inc_base, n_base // n)
        z0, _ = _initial_states(spec, system, lsys, model, ladder.paths,
                                ladder.seed, eps, x0, v0_policy, m0)
        acc = LedgerAccumulator(system, which=tuple(pre_needed))
        traj = simulate(system, inc, eps, dt, scheme=scheme, z0=z0,
                        record_every=n, accumulator=acc)
        led = traj.ledger
        for name in names:
            base = name.split("_")[0]
            if base == "B":
                err = np.abs(led["int_B"][..., -1] - lim_pred["B"])
            else:
                err = np.abs(led.terminal(base) - lim_pred[name])
            mean[name].append(float(err.mean()))
            stderr[name].append(float(err.std(ddof=1) / np.sqrt(ladder.paths)))
    rates = {}
    for name in names:
        try:
            slope, intercept, r2 = fit_rate(ladder.values, mean[name])
            rates[name] = {"slope": slope, "intercept": intercept, "r2": r2}
        except ValueError:
            rates[name] = None
    return ConvergenceReport(scenario=scenario_name or spec.name,
                             procedure=procedure, seed=ladder.seed,
                             paths=ladder.paths, eps=list(ladder.values),
                             mean=mean, stderr=stderr, rates=rates)


def heat_anomaly_experiment(omega=1.0, eps=0.02, paths=2000, T=1.0, dt=1e-3,
                            seed=123):
    """Paired experiment: limit-heat prediction with vs without the
    anomalous drift on a 2-D scenario with Theta_A != 0 (markov limit).

    Errors are |ensemble mean of (Q_eps_T - prediction_T)|; the prediction
    with the anomaly converges, the one without misses by Tr(Theta) T / m.
    """
    from .scenarios import rotational_fast_noise

    spec = rotational_fast_noise(omega=omega)
    model = reduce_model(spec, "markov")
    system = embed(spec, "markov")
    lsys = model.system
    n = round(T / dt)
    inc = _make_increments(seed, system, paths, n, T)
    z0, z0l = _initial_states(spec, system, lsys, model, paths, seed, eps,
                              None, "zero", 1.0)
    # share the velocity initial condition across both systems
    rngv = [init_stream(seed, path_index=i).standard_normal(spec.dim)
            for i in range(paths)]
    for i in range(paths):
        z0[i, system.blocks["v"]] = rngv[i]
        z0l[i, lsys.blocks["v"]] = rngv[i]
    acc = LedgerAccumulator(system, which=("Q", "W", "E"))
    traj = simulate(system, inc, eps, dt, z0=z0, record_every=n,
                    accumulator=acc)
    stride = _record_stride(n)
    ltraj = simulate(lsys, inc, 1.0, dt, z0=z0l, record_every=stride)
    qacc = LedgerAccumulator(lsys, which=("Q", "W", "E"), kinetic="leftpoint")
    qtraj = simulate(lsys, inc, 1.0, dt, z0=z0l, record_every=n,
                     accumulator=qacc)
    q_true = traj.ledger.terminal("Q")
    q_base = qtraj.ledger.terminal("Q")
    i_q = _rate_integral(model, "Q_anom", ltraj)
    diff_with = q_true - (q_base + i_q)
    diff_without = q_true - q_base
    return {
        "omega": omega, "eps": eps, "paths": paths, "T": T, "dt": dt,
        "seed": seed,
        "anomaly_rate": float(model.functional_rates["Q_anom"](0.0,
                                                               np.zeros(2))),
        "err_with": float(abs(diff_with.mean())),
        "err_without": float(abs(diff_without.mean())),
        "stderr": float(diff_with.std(ddof=1) / np.sqrt(paths)),
        "ratio": float(abs(diff_without.mean()) / max(abs(diff_with.mean()),
                                                      1e-300)),
    }


def area_anomaly_demo(omega=1.0, eps_values=(0.05,), paths=10000, T=1.0,
                      dt=1e-3, seed=2024):
    """Mean stochastic area of the magnetic position path per epsilon,
    against the homogenized prediction -Omega T / 2 (the Levy area of the
    limiting Brownian path has zero mean)."""
    spec = magnetic(omega=omega, fnc_scale=0.0)
    system = embed(spec, "mass", m0=1.0)
    n = round(T / dt)
    per_eps = []
    for eps in sorted(eps_values, reverse=True):
        inc = _make_increments(seed, system, paths, n, T)
        z0 = np.zeros((paths, system.state_dim))
        vcov = (1.0 + omega ** 2) / (2.0 * eps) * np.eye(2)
        chol = np.linalg.cholesky(vcov)
        for i in range(paths):
            g = init_stream(seed, path_index=i)
            z0[i, system.blocks["v"]] = chol @ g.standard_normal(2)
        acc = LedgerAccumulator(system, which=("area",))
        traj = simulate(system, inc, eps, dt, z0=z0, record_every=n,
                        accumulator=acc)
        areas = traj.ledger.terminal("area")
        per_eps.append({"eps": eps, "mean_area": float(areas.mean()),
                        "stderr": float(areas.std(ddof=1) / np.sqrt(paths))})
    limit_mean = -0.5 * omega * T
    smallest = per_eps[-1]
    return {
        "omega": omega, "T": T, "paths": paths, "dt": dt, "seed": seed,
        "per_eps": per_eps,
        "limit_mean": limit_mean,
        "anomaly_estimate": smallest["mean_area"],
        "anomaly_stderr": smallest["stderr"],
    }


def commutativity_probe(spec: GleSpec, grid=None, m0=1.0, t=0.0):
    """Sup-norm over a grid of the drift difference between the sequential
    (markov-then-mass) and joint limits, via the dedicated reducers and,
    independently, via the generic slow-fast reducer; plus the difference
    of the work-anomaly contraction matrices."""
    from .arrange import arrange_joint, arrange_markov_then_mass

    if grid is None:
        grid = spec.sample_grid()
    jl = reduce_model(spec, "joint", m0=m0)
    mm = reduce_model(spec, "markov_then_mass", m0=m0)
    arr_j = arrange_joint(spec, m0=m0)
    arr_m = arrange_markov_then_mass(spec, m0=m0)
    sup_drift = 0.0
    sup_drift_general = 0.0
    sup_func = 0.0
    cross_gap = 0.0
    ds = spec.slow_noise.state_dim if spec.slow_noise is not None else 0
    for x in np.atleast_2d(grid):
        s = jl.fields["S"](x)
        h = mm.fields["H"](x)
        sup_drift = max(sup_drift, float(np.linalg.norm(s - h)))
        xs = np.concatenate([x, np.zeros(ds)])
        red_j = reduce_general(arr_j, t, xs)
        red_m = reduce_general(arr_m, t, xs)
        dd = float(np.linalg.norm(red_j.s_ito[:spec.dim]
                                  - red_m.s_ito[:spec.dim]))
        sup_drift_general = max(sup_drift_general, dd)
        cross_gap = max(cross_gap,
                        float(np.linalg.norm(s - red_j.s_ito[:spec.dim])),
                        float(np.linalg.norm(h - red_m.s_ito[:spec.dim])))
        # work-anomaly contraction matrices of both procedures
        mj = -jl.fields["lambda_A"](x)
        mmx = mm.fields["mu_x_A"](x)
        sup_func = max(sup_func, float(np.linalg.norm(mj - mmx)))
    agree = sup_drift < 1e-10 and sup_func < 1e-10
    return {
        "m0": m0,
        "n_grid": int(np.atleast_2d(grid).shape[0]),
        "sup_drift_diff": sup_drift,
        "sup_drift_diff_general_reducer": sup_drift_general,
        "sup_functional_diff": sup_func,
        "code_path_gap": cross_gap,
        "procedures_agree": bool(agree),
    }
