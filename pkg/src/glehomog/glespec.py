"""Full generalized-Langevin model specifications and structural checks.

A GleSpec collects the position dimension, mass, coefficient fields
(gamma0, g, h, sigma0, sigma_s, sigma_f), the force split F = -grad U + f_nc,
the memory realization triple and the slow/fast colored-noise triples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import MatrixField, Potential, VectorField
from .matops import is_positive_stable
from .triples import NoiseTriple, kernel_eval


class ModelAssumptionError(RuntimeError):
    """A standing assumption of a limiting procedure fails on the sampled
    grid (e.g. a damping field is not uniformly positive stable)."""


def _default_grid(dim, lo=-1.0, hi=1.0, n=3):
    axes = [np.linspace(lo, hi, n) for _ in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


@dataclass
class GleSpec:
    dim: int
    mass: float
    gamma0: MatrixField          # (d, d)
    g: MatrixField               # (d, q)
    h: MatrixField               # (q, d)
    sigma_f: MatrixField         # (d, r_f)
    memory: NoiseTriple          # obs dim q
    fast_noise: NoiseTriple      # obs dim r_f
    slow_noise: NoiseTriple | None = None
    sigma_s: MatrixField | None = None   # (d, r_s)
    sigma0: MatrixField | None = None    # (d, b)
    potential: Potential = None
    f_nc: VectorField = None
    name: str = "custom"

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.potential is None:
            self.potential = Potential.zero(self.dim)
        if self.f_nc is None:
            self.f_nc = VectorField.zero(self.dim, self.dim)
        d, q = self.dim, self.memory.obs_dim
        checks = [
            ("gamma0", self.gamma0, (d, d)),
            ("g", self.g, (d, q)),
            ("h", self.h, (q, d)),
            ("sigma_f", self.sigma_f, (d, self.fast_noise.obs_dim)),
        ]
        if self.slow_noise is not None:
            if self.sigma_s is None:
                raise ValueError("slow_noise given without sigma_s")
            checks.append(("sigma_s", self.sigma_s, (d, self.slow_noise.obs_dim)))
        if self.sigma0 is not None:
            if self.sigma0.shape[0] != d:
                raise ValueError("sigma0 must have d rows")
        for name, fld, shape in checks:
            if fld.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {fld.shape}")
        for tname, triple in (("memory", self.memory), ("fast_noise", self.fast_noise)):
            k = triple.k_matrix()
            if np.linalg.norm(k) < 1e-12 or abs(np.linalg.det(k)) < 1e-12:
                raise ValueError(f"{tname} K matrix must be non-zero and invertible")

    @property
    def k1(self):
        return self.memory.k_matrix()

    @property
    def kf(self):
        return self.fast_noise.k_matrix()

    @property
    def has_white_noise(self):
        return self.sigma0 is not None

    def force(self, t, x):
        """F(t, x) = -grad U + f_nc, batched."""
        return -self.potential.grad(t, x) + self.f_nc.value(t, x)

    def force_jac(self, t, x):
        h = 1e-5 * np.maximum(1.0, np.abs(np.asarray(x, float)))
        out = np.empty((self.dim, self.dim))
        for k in range(self.dim):
            xp = np.array(x, float)
            xm = np.array(x, float)
            xp[k] += h[k]
            xm[k] -= h[k]
            out[:, k] = (self.force(t, xp) - self.force(t, xm)) / (2 * h[k])
        return out

    def gamma_eff(self):
        """Gamma(x) = gamma0 + g K1 h as a MatrixField."""
        k1 = self.k1
        g, hh, g0 = self.g, self.h, self.gamma0
        const = g.constant and hh.constant and g0.constant

        def fn(t, x):
            return g0.value(t, x) + g.value(t, x) @ k1 @ hh.value(t, x)

        return MatrixField(fn, (self.dim, self.dim), self.dim, constant=const,
                           name="Gamma")

    def sigma_eff(self):
        """Sigma(x) = sigma_f C_f Gamma_f^{-1} Sigma_f as a MatrixField."""
        tail = np.linalg.solve(self.fast_noise.gamma, self.fast_noise.sigma)
        tail = self.fast_noise.c @ tail
        sf = self.sigma_f

        def fn(t, x):
            return sf.value(t, x) @ tail

        return MatrixField(fn, (self.dim, tail.shape[1]), self.dim,
                           constant=sf.constant, name="Sigma")

    def theta(self):
        """Theta(x) = sigma_f K_f^T sigma_f^T, the fast-noise Green-Kubo matrix."""
        kft = self.kf.T
        sf = self.sigma_f

        def fn(t, x):
            v = sf.value(t, x)
            return v @ kft @ np.swapaxes(v, -1, -2)

        return MatrixField(fn, (self.dim, self.dim), self.dim,
                           constant=sf.constant, name="Theta")

    def sample_grid(self, lo=-1.0, hi=1.0, n=3):
        return _default_grid(self.dim, lo, hi, n)


@dataclass(frozen=True)
class FdrReport:
    fdr1: bool
    fdr2: bool
    details: dict


def check_fdr(spec: GleSpec, grid=None, t_grid=None, tol=1e-9):
    """Check the fluctuation-dissipation relations on sample grids.

    fdr1: sigma0 sigma0^T = gamma0 pointwise.
    fdr2: the memory kernel and the fast-noise covariance agree on a time
    grid, and g = h^T = sigma_f pointwise.
    """
    if grid is None:
        grid = spec.sample_grid()
    if t_grid is None:
        t_grid = np.linspace(0.0, 2.0, 9)
    details = {}

    gap1 = 0.0
    for x in grid:
        g0 = spec.gamma0.value(0.0, x)
        if spec.sigma0 is None:
            gap1 = max(gap1, float(np.linalg.norm(g0)))
        else:
            s0 = spec.sigma0.value(0.0, x)
            gap1 = max(gap1, float(np.linalg.norm(s0 @ s0.T - g0)))
    details["fdr1_gap"] = gap1

    kernel_gap = 0.0
    if spec.memory.obs_dim == spec.fast_noise.obs_dim:
        for t in t_grid:
            kernel_gap = max(kernel_gap, float(np.linalg.norm(
                kernel_eval(spec.memory, t) - kernel_eval(spec.fast_noise, t))))
    else:
        kernel_gap = np.inf
    coef_gap = 0.0
    for x in grid:
        gv = spec.g.value(0.0, x)
        hv = spec.h.value(0.0, x)
        if spec.sigma_f.shape == gv.shape:
            sv = spec.sigma_f.value(0.0, x)
            coef_gap = max(coef_gap, float(np.linalg.norm(gv - hv.T)),
                           float(np.linalg.norm(gv - sv)))
        else:
            coef_gap = np.inf
    details["fdr2_kernel_gap"] = kernel_gap
    details["fdr2_coefficient_gap"] = coef_gap

    return FdrReport(fdr1=gap1 <= tol,
                     fdr2=(kernel_gap <= tol and coef_gap <= tol),
                     details=details)


def check_uniform_stability(mat_field: MatrixField, grid, t=0.0):
    """Falsification sweep: positive stability of a field on a box grid."""
    for x in grid:
        if not is_positive_stable(mat_field.value(t, x)):
            return False, np.asarray(x)
    return True, None
