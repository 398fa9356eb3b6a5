"""Command-line interface.

Subcommands: simulate, reduce, converge, area-demo, commute-probe, report.
Every run writes a manifest recording the config hash, seed and package
version; reruns with equal manifests produce byte-identical data files.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys


def _cap_threads():
    cap = os.environ.get("GLEHOMOG_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


_cap_threads()

import numpy as np  # noqa: E402  (after the thread cap)


def _fmt(v):
    if isinstance(v, float):
        if v != v:
            return "nan"
        return repr(v)
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, payload):
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_text(args):
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            return fh.read()
    return "{}"


def _load(args):
    from .config import ConfigError, parse_config

    cfg = parse_config(_config_text(args))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.paths is not None:
        cfg["paths"] = args.paths
    if args.out is not None:
        cfg["out"] = args.out
    if getattr(args, "procedure", None):
        cfg["procedure"] = args.procedure
    if getattr(args, "eps", None):
        cfg["epsilon"] = [float(v) for v in args.eps.split(",")]
    if getattr(args, "omega", None) is not None:
        cfg["omega"] = args.omega
    if getattr(args, "T", None) is not None:
        cfg["T"] = args.T
    return cfg


def _manifest(cfg, command, outputs):
    from . import __version__
    from .config import print_config

    # the output directory is an environment detail, not part of the
    # experiment identity
    canon = print_config({k: v for k, v in cfg.items() if k != "out"})
    return {
        "command": command,
        "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
        "seed": cfg["seed"],
        "version": __version__,
        "outputs": sorted(outputs),
    }


def _outdir(cfg):
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    return out


def cmd_simulate(args):
    from .config import build_spec
    from .embed import embed
    from .functionals import LedgerAccumulator
    from .harness import _initial_states, _make_increments, default_dt_rule
    from .integrate import simulate
    from .limits import reduce as reduce_model

    cfg = _load(args)
    spec = build_spec(cfg)
    out = _outdir(cfg)
    procedure = cfg["procedure"]
    eps = float(cfg["epsilon"][0])
    scheme = cfg["scheme"]
    T = float(cfg["T"])
    dt = cfg["dt"] or default_dt_rule(eps, scheme)
    n = max(1, round(T / dt))
    dt = T / n
    system = embed(spec, procedure, m0=cfg["m0"])
    model = None
    if isinstance(cfg["v0"], str) and cfg["v0"] == "stationary":
        model = reduce_model(spec, procedure, m0=cfg["m0"])
    inc = _make_increments(cfg["seed"], system, 1, n, T)
    x0 = np.array(cfg["x0"], dtype=float) if cfg["x0"] is not None else None
    v0 = cfg["v0"]
    if isinstance(v0, list):
        v0 = np.array(v0, dtype=float)
    z0, _ = _initial_states(spec, system, system, model, 1, cfg["seed"], eps,
                            x0, v0, cfg["m0"])
    which = ["W", "area"]
    if not spec.has_white_noise and "v" in system.blocks:
        which += ["Q", "E"]
    if system.fast_block_names:
        which.append("B")
    acc = LedgerAccumulator(system, which=tuple(which), beta=cfg["beta"])
    record = cfg["record_every"] or max(1, n // 100000)
    while n % record:
        record -= 1
    traj = simulate(system, inc, eps, dt, scheme=scheme, z0=z0,
                    record_every=record, accumulator=acc)
    d = spec.dim
    header = (["t"] + [f"x{i+1}" for i in range(d)]
              + [f"v{i+1}" for i in range(d)] + ["Q", "W", "E", "S_area", "B"])
    led = traj.ledger
    xs = traj.block("x")[0]
    vs = traj.block("v")[0] if "v" in traj.blocks else None
    rows = []
    for k, t in enumerate(traj.times):
        row = [float(t)]
        row += [float(v) for v in xs[k]]
        row += [float(v) for v in vs[k]] if vs is not None else [float("nan")] * d
        for name in ("Q", "W", "E"):
            row.append(float(led[name][0, k]) if name in led else float("nan"))
        row.append(float(led["area"][0, k]) if "area" in led else float("nan"))
        row.append(float(led["B"][0, k]) if "B" in led else float("nan"))
        rows.append(row)
    write_csv(os.path.join(out, "trajectory.csv"), header, rows)
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, "simulate", ["trajectory.csv"]))
    return 0


def cmd_reduce(args):
    from .config import build_spec, grid_from_config
    from .limits import anomaly_report, reduce as reduce_model

    cfg = _load(args)
    spec = build_spec(cfg)
    out = _outdir(cfg)
    grid = grid_from_config(cfg, spec.dim)
    model = reduce_model(spec, cfg["procedure"], m0=cfg["m0"], grid=grid)
    report = anomaly_report(model, grid)
    payload = report.to_dict()
    payload["fields_at_origin"] = {
        name: np.asarray(fn(np.zeros(spec.dim))).tolist()
        for name, fn in model.fields.items()
        if np.asarray(fn(np.zeros(spec.dim))).ndim <= 2
    }
    payload["tr_j_at_origin"] = model.tr_j(np.zeros(spec.dim))
    write_json(os.path.join(out, "reduce.json"), payload)
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, "reduce", ["reduce.json"]))
    return 0


def cmd_converge(args):
    from .config import build_spec
    from .harness import EpsilonLadder, run_convergence, \
        run_functional_convergence

    cfg = _load(args)
    spec = build_spec(cfg)
    out = _outdir(cfg)
    ladder = EpsilonLadder(values=tuple(cfg["epsilon"]), paths=cfg["paths"],
                           seed=cfg["seed"])
    x0 = np.array(cfg["x0"], dtype=float) if cfg["x0"] is not None else None
    v0 = cfg["v0"]
    if isinstance(v0, list):
        v0 = np.array(v0, dtype=float)
    rep = run_convergence(spec, cfg["procedure"], ladder, T=cfg["T"],
                          m0=cfg["m0"], x0=x0, v0_policy=v0,
                          scheme=cfg["scheme"], scenario_name=cfg["scenario"])
    rows = []
    reports = {"state": rep.to_dict()}
    for i, eps in enumerate(rep.eps):
        for block in rep.mean:
            rows.append([eps, block, rep.mean[block][i], rep.stderr[block][i],
                         rep.paths])
    if cfg["functionals"]:
        frep = run_functional_convergence(
            spec, cfg["procedure"], ladder, T=cfg["T"], m0=cfg["m0"],
            functionals=tuple(cfg["functionals"]), x0=x0, v0_policy=v0,
            scheme=cfg["scheme"], scenario_name=cfg["scenario"])
        reports["functionals"] = frep.to_dict()
        for i, eps in enumerate(frep.eps):
            for name in frep.mean:
                rows.append([eps, name, frep.mean[name][i],
                             frep.stderr[name][i], frep.paths])
    write_csv(os.path.join(out, "convergence.csv"),
              ["eps", "block", "mean_sup_err", "stderr", "n_paths"], rows)
    write_json(os.path.join(out, "convergence.json"), reports)
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, "converge",
                         ["convergence.csv", "convergence.json"]))
    return 0


def cmd_area_demo(args):
    from .harness import area_anomaly_demo

    cfg = _load(args)
    out = _outdir(cfg)
    res = area_anomaly_demo(omega=cfg["omega"], eps_values=tuple(cfg["epsilon"]),
                            paths=cfg["paths"], T=cfg["T"],
                            dt=cfg["dt"] or 1e-3, seed=cfg["seed"])
    write_json(os.path.join(out, "area_demo.json"), res)
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, "area-demo", ["area_demo.json"]))
    return 0


def cmd_commute_probe(args):
    from .config import build_spec, grid_from_config
    from .harness import commutativity_probe

    cfg = _load(args)
    if not args.config:
        cfg["scenario"] = "noncommuting_2d"
    spec = build_spec(cfg)
    out = _outdir(cfg)
    grid = grid_from_config(cfg, spec.dim)
    res = commutativity_probe(spec, grid=grid, m0=cfg["m0"])
    res["scenario"] = cfg["scenario"]
    write_json(os.path.join(out, "commute.json"), res)
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, "commute-probe", ["commute.json"]))
    return 0


def cmd_report(args):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cfg = _load(args)
    out = _outdir(cfg)
    outputs = []
    csv_path = os.path.join(out, "convergence.csv")
    if os.path.exists(csv_path):
        import csv as _csv

        with open(csv_path) as fh:
            rows = list(_csv.DictReader(fh))
        series = {}
        for row in rows:
            series.setdefault(row["block"], []).append(
                (float(row["eps"]), float(row["mean_sup_err"]),
                 float(row["stderr"])))
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        for block, pts in sorted(series.items()):
            pts.sort(reverse=True)
            eps = [p[0] for p in pts]
            err = [p[1] for p in pts]
            serr = [p[2] for p in pts]
            ax.errorbar(eps, err, yerr=serr, marker="o", label=block)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(r"$\epsilon$")
        ax.set_ylabel("mean sup error")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig_path = os.path.join(out, "convergence.png")
        fig.savefig(fig_path, dpi=120, metadata={"Software": None})
        plt.close(fig)
        outputs.append("convergence.png")
    demo_path = os.path.join(out, "area_demo.json")
    if os.path.exists(demo_path):
        with open(demo_path) as fh:
            demo = json.load(fh)
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        eps = [p["eps"] for p in demo["per_eps"]]
        means = [p["mean_area"] for p in demo["per_eps"]]
        errs = [3 * p["stderr"] for p in demo["per_eps"]]
        ax.errorbar(eps, means, yerr=errs, marker="s", label="mean area")
        ax.axhline(demo["limit_mean"], ls="--", color="k",
                   label="anomalous limit")
        ax.axhline(0.0, ls=":", color="gray", label="Levy mean")
        ax.set_xscale("log")
        ax.set_xlabel(r"$\epsilon$")
        ax.set_ylabel("E[area]")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig_path = os.path.join(out, "area_demo.png")
        fig.savefig(fig_path, dpi=120, metadata={"Software": None})
        plt.close(fig)
        outputs.append("area_demo.png")
    summary = {"figures": sorted(outputs)}
    write_json(os.path.join(out, "report.json"), summary)
    write_json(os.path.join(out, "manifest.json"),
               _manifest(cfg, "report", outputs + ["report.json"]))
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="glehomog",
        description="Generalized Langevin simulation and model reduction")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, procedure=True, eps=True):
        sp.add_argument("--config", help="configuration file (YAML)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--paths", type=int)
        sp.add_argument("--out", help="output directory")
        if procedure:
            sp.add_argument("--procedure")
        if eps:
            sp.add_argument("--eps", help="comma-separated epsilon list")
        sp.add_argument("--T", type=float)
        sp.add_argument("--omega", type=float)

    sp = sub.add_parser("simulate", help="integrate one trajectory")
    common(sp)
    sp.set_defaults(func=cmd_simulate)
    sp = sub.add_parser("reduce", help="build a homogenized model and report")
    common(sp, eps=False)
    sp.set_defaults(func=cmd_reduce)
    sp = sub.add_parser("converge", help="epsilon-ladder convergence study")
    common(sp)
    sp.set_defaults(func=cmd_converge)
    sp = sub.add_parser("area-demo", help="magnetic stochastic-area anomaly")
    common(sp, procedure=False)
    sp.set_defaults(func=cmd_area_demo)
    sp = sub.add_parser("commute-probe",
                        help="compare sequential and joint limits")
    common(sp, eps=False)
    sp.set_defaults(func=cmd_commute_probe)
    sp = sub.add_parser("report", help="render figures from a run directory")
    common(sp, procedure=False, eps=False)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    from .config import ConfigError
    from .glespec import ModelAssumptionError
    from .integrate import IntegrationError
    from .limits import AnomalousHeatDivergenceError
    from .matops import MatrixEquationError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MatrixEquationError, IntegrationError, ModelAssumptionError,
            AnomalousHeatDivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
