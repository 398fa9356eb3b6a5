"""Scenario configuration files.

A single YAML document with strictly validated keys; unknown keys are hard
errors that name the key and its position.  Matrix entries may be numbers
or expression strings over t, x1..xd (see ``exprs``).  ``print_config``
emits a canonical form whose parse is a fixed point.
"""

from __future__ import annotations

import io

import numpy as np
import yaml

from .exprs import ExprError, eval_expr, free_variables, parse_expr
from .fields import MatrixField, Potential, VectorField
from .glespec import GleSpec
from .scenarios import SCENARIOS, scenario
from .triples import NoiseTriple


class ConfigError(ValueError):
    pass


_TOP_KEYS = {
    "scenario", "params", "spec", "procedure", "m0", "epsilon", "paths",
    "seed", "T", "dt", "scheme", "out", "functionals", "grid", "beta", "x0",
    "v0", "omega", "record_every",
}
_SPEC_KEYS = {"dim", "mass", "gamma0", "g", "h", "sigma_f", "sigma0",
              "sigma_s", "potential", "f_nc", "memory", "fast_noise",
              "slow_noise"}
_TRIPLE_KEYS = {"gamma", "m", "c", "sigma"}
_GRID_KEYS = {"lo", "hi", "n"}
_PROCEDURES = {"none", "markov", "markov_then_mass", "mass",
               "mass_then_markov", "joint"}
_SCHEMES = {"euler_maruyama", "exp_ou_splitting"}

_DEFAULTS = {
    "scenario": "diagonal_nd",
    "params": {},
    "spec": None,
    "procedure": "markov",
    "m0": 1.0,
    "epsilon": [0.2, 0.1, 0.05, 0.02],
    "paths": 200,
    "seed": 0,
    "T": 1.0,
    "dt": None,
    "scheme": "euler_maruyama",
    "out": "out",
    "functionals": ["W"],
    "grid": {"lo": [-1.0], "hi": [1.0], "n": 3},
    "beta": 1.0,
    "x0": None,
    "v0": "zero",
    "omega": 1.0,
    "record_every": None,
}


def _mark_of(node):
    m = node.start_mark
    return f"line {m.line + 1}, column {m.column + 1}"


def _check_keys(node, allowed, where):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{where} must be a mapping ({_mark_of(node)})")
    for key_node, val_node in node.value:
        key = key_node.value
        if key not in allowed:
            raise ConfigError(
                f"unknown key {key!r} in {where} at {_mark_of(key_node)}")
        if key in ("spec",) and isinstance(val_node, yaml.MappingNode):
            _check_keys(val_node, _SPEC_KEYS, "spec")
            for k2, v2 in val_node.value:
                if k2.value in ("memory", "fast_noise", "slow_noise") and \
                        isinstance(v2, yaml.MappingNode):
                    _check_keys(v2, _TRIPLE_KEYS, k2.value)
        if key == "grid" and isinstance(val_node, yaml.MappingNode):
            _check_keys(val_node, _GRID_KEYS, "grid")


def parse_config(text):
    """Parse and validate a configuration document."""
    try:
        node = yaml.compose(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "?"
        raise ConfigError(f"YAML parse error at {where}: {exc.problem}") from exc
    if node is None:
        raise ConfigError("empty configuration")
    _check_keys(node, _TOP_KEYS, "configuration")
    raw = yaml.safe_load(text)
    cfg = dict(_DEFAULTS)
    cfg.update(raw)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["scenario"] != "custom" and cfg["scenario"] not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg['scenario']!r}")
    if cfg["scenario"] == "custom" and not cfg["spec"]:
        raise ConfigError("scenario 'custom' needs a spec section")
    if cfg["procedure"] not in _PROCEDURES:
        raise ConfigError(f"unknown procedure {cfg['procedure']!r}")
    if cfg["scheme"] not in _SCHEMES:
        raise ConfigError(f"unknown scheme {cfg['scheme']!r}")
    eps = cfg["epsilon"]
    if isinstance(eps, (int, float)):
        cfg["epsilon"] = [float(eps)]
    elif not (isinstance(eps, list) and all(isinstance(v, (int, float))
                                            for v in eps)):
        raise ConfigError("epsilon must be a number or list of numbers")
    for key in ("paths", "seed"):
        if not isinstance(cfg[key], int) or cfg[key] < 0:
            raise ConfigError(f"{key} must be a nonnegative integer")
    if cfg["T"] <= 0:
        raise ConfigError("T must be positive")
    if cfg["dt"] is not None and cfg["dt"] <= 0:
        raise ConfigError("dt must be positive when given")


def _entry_exprs(rows, dim, where):
    """Parse a nested list of numbers/expression strings."""
    if not isinstance(rows, list) or not rows or not isinstance(rows[0], list):
        raise ConfigError(f"{where} must be a nested list (matrix)")
    parsed = []
    allowed = {"t"} | {f"x{i}" for i in range(1, dim + 1)}
    for r, row in enumerate(rows):
        prow = []
        for c, entry in enumerate(row):
            if isinstance(entry, (int, float)):
                prow.append(float(entry))
                continue
            try:
                tree = parse_expr(str(entry))
            except ExprError as exc:
                raise ConfigError(f"{where}[{r}][{c}]: {exc}") from exc
            extra = free_variables(tree) - allowed
            if extra:
                raise ConfigError(
                    f"{where}[{r}][{c}]: unknown identifiers {sorted(extra)}")
            prow.append(tree)
        parsed.append(prow)
    widths = {len(r) for r in parsed}
    if len(widths) != 1:
        raise ConfigError(f"{where} rows have unequal lengths")
    return parsed


def _matrix_field(rows, dim, name):
    parsed = _entry_exprs(rows, dim, name)
    shape = (len(parsed), len(parsed[0]))
    if all(isinstance(e, float) for row in parsed for e in row):
        return MatrixField.const(np.array(parsed, dtype=float), dim, name=name)

    def fn(t, x):
        x = np.asarray(x, dtype=float)
        base = x.shape[:-1]
        out = np.zeros(base + shape)
        for i, row in enumerate(parsed):
            for j, e in enumerate(row):
                out[..., i, j] = e if isinstance(e, float) \
                    else eval_expr(e, t=t, x=x)
        return out

    return MatrixField(fn, shape, dim, name=name)


def _vector_field(entries, dim, name):
    parsed = _entry_exprs([entries], dim, name)[0]
    size = len(parsed)
    if all(isinstance(e, float) for e in parsed):
        return VectorField.const(np.array(parsed, dtype=float), dim, name=name)

    def fn(t, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (size,))
        for i, e in enumerate(parsed):
            out[..., i] = e if isinstance(e, float) else eval_expr(e, t=t, x=x)
        return out

    return VectorField(fn, size, dim, name=name)


def _potential(entry, dim):
    if entry in (None, 0, "0"):
        return Potential.zero(dim)
    tree = parse_expr(str(entry))
    allowed = {"t"} | {f"x{i}" for i in range(1, dim + 1)}
    extra = free_variables(tree) - allowed
    if extra:
        raise ConfigError(f"potential: unknown identifiers {sorted(extra)}")

    def fn(t, x):
        return np.asarray(eval_expr(tree, t=t, x=x), dtype=float) \
            * np.ones(np.asarray(x).shape[:-1])

    return Potential(fn=fn, dim=dim, name=str(entry))


def _triple(section, where):
    missing = {"gamma", "c"} - set(section)
    if missing:
        raise ConfigError(f"{where} needs keys {sorted(missing)}")
    gamma = np.atleast_2d(np.array(section["gamma"], dtype=float))
    c = np.atleast_2d(np.array(section["c"], dtype=float))
    if section.get("sigma") is not None:
        sigma = np.atleast_2d(np.array(section["sigma"], dtype=float))
        if section.get("m") is not None:
            return NoiseTriple(gamma=gamma,
                               m=np.atleast_2d(np.array(section["m"], float)),
                               c=c, sigma=sigma)
        return NoiseTriple.from_gamma_sigma(gamma, c, sigma)
    raise ConfigError(f"{where} needs a sigma matrix")


def build_spec(cfg) -> GleSpec:
    """Instantiate the GleSpec described by a parsed configuration."""
    if cfg["scenario"] != "custom":
        return scenario(cfg["scenario"], **cfg["params"])
    sp = cfg["spec"]
    dim = int(sp["dim"])
    memory = _triple(sp["memory"], "memory")
    fast = _triple(sp["fast_noise"], "fast_noise")
    kwargs = dict(
        dim=dim, mass=float(sp.get("mass", 1.0)),
        gamma0=_matrix_field(sp["gamma0"], dim, "gamma0"),
        g=_matrix_field(sp["g"], dim, "g"),
        h=_matrix_field(sp["h"], dim, "h"),
        sigma_f=_matrix_field(sp["sigma_f"], dim, "sigma_f"),
        memory=memory, fast_noise=fast,
        potential=_potential(sp.get("potential"), dim),
    )
    if sp.get("f_nc") is not None:
        kwargs["f_nc"] = _vector_field(sp["f_nc"], dim, "f_nc")
    if sp.get("sigma0") is not None:
        kwargs["sigma0"] = _matrix_field(sp["sigma0"], dim, "sigma0")
    if sp.get("slow_noise") is not None:
        kwargs["slow_noise"] = _triple(sp["slow_noise"], "slow_noise")
        if sp.get("sigma_s") is None:
            raise ConfigError("slow_noise given without sigma_s")
        kwargs["sigma_s"] = _matrix_field(sp["sigma_s"], dim, "sigma_s")
    try:
        return GleSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid spec: {exc}") from exc


def grid_from_config(cfg, dim):
    g = cfg["grid"]
    lo = np.resize(np.array(g.get("lo", [-1.0]), dtype=float), dim)
    hi = np.resize(np.array(g.get("hi", [1.0]), dtype=float), dim)
    n = int(g.get("n", 3))
    axes = [np.linspace(lo[k], hi[k], n) for k in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


def _normalize(value):
    if isinstance(value, dict):
        return {k: _normalize(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    if isinstance(value, float) and value.is_integer() and abs(value) < 1e15:
        return value
    return value


def print_config(cfg):
    """Canonical text form; parse(print(parse(text))) == parse(text)."""
    out = io.StringIO()
    yaml.safe_dump(_normalize(cfg), out, sort_keys=True,
                   default_flow_style=False)
    return out.getvalue()
