"""Stochastic realizations of Bohl memory kernels and colored noise.

A noise triple (Gamma, M, C, Sigma) realizes the stationary Gaussian process
xi_t = C beta_t with d beta = -Gamma beta dt + Sigma dW and beta_0 ~ N(0, M),
whose covariance is R(t) = C exp(-Gamma |t|) M C^T.  The same data realizes a
memory kernel kappa(t) of identical exponential form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .matops import is_positive_stable, solve_lyapunov

LYAP_TOL = 1e-10


@dataclass(frozen=True)
class NoiseTriple:
    gamma: np.ndarray   # (n, n), positive stable
    m: np.ndarray       # (n, n), symmetric positive definite
    c: np.ndarray       # (obs, n), observation matrix
    sigma: np.ndarray   # (n, w), diffusion

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        m = np.atleast_2d(np.asarray(self.m, dtype=float))
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "sigma", s)
        if not is_positive_stable(g):
            raise ValueError("triple Gamma must be positive stable")
        if np.linalg.norm(m - m.T) > LYAP_TOL * max(1.0, np.linalg.norm(m)):
            raise ValueError("triple M must be symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (m + m.T))) <= 0:
            raise ValueError("triple M must be positive definite")
        res = np.linalg.norm(g @ m + m @ g.T - s @ s.T)
        if res > LYAP_TOL * max(1.0, np.linalg.norm(s @ s.T)):
            raise ValueError(
                f"triple violates Gamma M + M Gamma^T = Sigma Sigma^T (residual {res:.3e})"
            )

    @property
    def state_dim(self):
        return self.gamma.shape[0]

    @property
    def obs_dim(self):
        return self.c.shape[0]

    @property
    def wiener_dim(self):
        return self.sigma.shape[1]

    @classmethod
    def from_gamma_sigma(cls, gamma, c, sigma):
        """Build the triple with M solved from the Lyapunov equation."""
        gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        m = solve_lyapunov(gamma, sigma @ sigma.T)
        return cls(gamma=gamma, m=m, c=np.atleast_2d(c), sigma=sigma)

    @classmethod
    def scalar_exponential(cls, alpha):
        """The 1-D convention Gamma = alpha, M = alpha/2, C = 1, Sigma = alpha."""
        a = float(alpha)
        if a <= 0:
            raise ValueError("alpha must be positive")
        return cls(gamma=[[a]], m=[[a / 2]], c=[[1.0]], sigma=[[a]])

    @classmethod
    def diagonal_exponential(cls, alphas):
        """Independent scalar exponentials on the diagonal."""
        a = np.asarray(alphas, dtype=float).reshape(-1)
        n = a.size
        return cls(gamma=np.diag(a), m=np.diag(a / 2), c=np.eye(n),
                   sigma=np.diag(a))

    def k_matrix(self):
        """K = C Gamma^{-1} M C^T, the time integral of the kernel."""
        return self.c @ np.linalg.solve(self.gamma, self.m) @ self.c.T


def kernel_eval(triple: NoiseTriple, t):
    """kappa(t) = C exp(-Gamma t) M C^T for t >= 0, extended to negative
    times by stationarity, kappa(-t) = kappa(t)^T.  (For reversible triples
    with Gamma M = M Gamma^T both branches coincide with the symmetric
    exp(-Gamma |t|) form.)"""
    t = float(t)
    if t >= 0:
        return triple.c @ expm(-triple.gamma * t) @ triple.m @ triple.c.T
    return triple.c @ triple.m @ expm(-triple.gamma.T * (-t)) @ triple.c.T


def transform_triple(triple: NoiseTriple, t_mat):
    """Similarity transform (T Gamma T^{-1}, T M T^T, C T^{-1}, T Sigma).

    This is the gauge freedom of the realization: the kernel/covariance it
    generates is unchanged.
    """
    t_mat = np.atleast_2d(np.asarray(t_mat, dtype=float))
    n = triple.state_dim
    if t_mat.shape != (n, n):
        raise ValueError(f"T must be {n}x{n}")
    if abs(np.linalg.det(t_mat)) < 1e-14:
        raise ValueError("T must be invertible")
    t_inv = np.linalg.inv(t_mat)
    return NoiseTriple(
        gamma=t_mat @ triple.gamma @ t_inv,
        m=t_mat @ triple.m @ t_mat.T,
        c=triple.c @ t_inv,
        sigma=t_mat @ triple.sigma,
    )
