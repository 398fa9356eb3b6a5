"""Wiener paths on refinable uniform grids with counter-based keying.

Every stream is a Philox generator keyed by (seed, block, path_index, level),
so ensemble members are independent and order-independent, and refinement of
an existing path is reproducible.  Refinement uses the Brownian bridge: each
child pair sums exactly to the parent increment, so any scheme that consumes
coarse sums of a refined path sees the coarse path unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SALT = {"increments": 0x9E3779B97F4A7C15, "refine": 0xC2B2AE3D27D4EB4F,
         "init": 0x165667B19E3779F9}


def _mix64(*parts):
    """splitmix64-style mixing of integer parts into one uint64."""
    h = np.uint64(0x243F6A8885A308D3)
    for p in parts:
        h = np.uint64((int(h) + (int(p) & 0xFFFFFFFFFFFFFFFF)) & 0xFFFFFFFFFFFFFFFF)
        z = int(h)
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
        h = np.uint64(z ^ (z >> 31))
    return h


def stream(seed, block=0, path_index=0, level=0, kind="increments"):
    """Deterministic Philox generator for one (seed, block, path, level) cell."""
    key = np.array([_mix64(seed, block, level, _SALT[kind]),
                    np.uint64(path_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class WienerPath:
    seed: int
    dims: int
    T: float
    level: int
    increments: np.ndarray   # (n_steps, dims), N(0, dt I) i.i.d. at base level
    block: int = 0
    path_index: int = 0
    base_steps: int = 1

    @property
    def n_steps(self):
        return self.increments.shape[0]

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def cumulative(self):
        w = np.zeros((self.n_steps + 1, self.dims))
        np.cumsum(self.increments, axis=0, out=w[1:])
        return w

    def coarsen_to(self, n_target):
        """Sum consecutive increments down to ``n_target`` steps (exact)."""
        if self.n_steps % n_target:
            raise ValueError(f"cannot coarsen {self.n_steps} steps to {n_target}")
        k = self.n_steps // n_target
        return self.increments.reshape(n_target, k, self.dims).sum(axis=1)


def generate_path(seed, dims, T, levels, base_steps=1, path_index=0, block=0):
    """Sample a Wiener path with base_steps * 2**levels uniform increments."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    n = int(base_steps) << int(levels)
    dt = T / n
    # base increments are keyed by (seed, block, path) alone; resolution
    # coupling happens through refine(), never through shared raw streams
    g = stream(seed, block=block, path_index=path_index, level=0)
    inc = np.sqrt(dt) * g.standard_normal((n, dims))
    return WienerPath(seed=seed, dims=dims, T=T, level=levels, increments=inc,
                      block=block, path_index=path_index, base_steps=base_steps)


def refine(path: WienerPath) -> WienerPath:
    """Halve the step via the Brownian bridge.

    Child increments over [t, t+dt] split as dW1 = dW/2 + xi with
    xi ~ N(0, dt/4) and dW2 = dW - dW1, so each pair sums to the parent
    increment exactly.
    """
    n, dims = path.increments.shape
    dt = path.dt
    new_level = path.level + 1
    g = stream(path.seed, block=path.block, path_index=path.path_index,
               level=new_level, kind="refine")
    xi = np.sqrt(dt / 4.0) * g.standard_normal((n, dims))
    first = 0.5 * path.increments + xi
    second = path.increments - first
    inc = np.empty((2 * n, dims))
    inc[0::2] = first
    inc[1::2] = second
    return WienerPath(seed=path.seed, dims=path.dims, T=path.T, level=new_level,
                      increments=inc, block=path.block,
                      path_index=path.path_index, base_steps=path.base_steps)


def ensemble_increments(seed, n_paths, n_steps, dims, T, block=0, level=0):
    """Increment array (n_paths, n_steps, dims); row i equals the single-path
    stream for path_index = i."""
    dt = T / n_steps
    out = np.empty((n_paths, n_steps, dims))
    root = np.sqrt(dt)
    for i in range(n_paths):
        g = stream(seed, block=block, path_index=i, level=level)
        out[i] = root * g.standard_normal((n_steps, dims))
    return out


def init_stream(seed, path_index=0, block=0):
    """Generator reserved for initial-condition draws of one path."""
    return stream(seed, block=block, path_index=path_index, level=0, kind="init")
