"""Dense real matrix kernels: stability tests, Lyapunov/Sylvester solvers,
the coupled five-block stationary-covariance system, and the Onsager
decomposition of a linear fast block.

All matrix equations are solved by Kronecker vectorization and a dense LU
solve.  Problem sizes here are tiny (blocks of order <= ~10), so this one
code path covers Lyapunov, Sylvester and the coupled system without a
Bartels-Stewart implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STABILITY_TOL = 1e-10
RESIDUAL_TOL = 1e-9
COND_LIMIT = 1e12


class MatrixEquationError(ValueError):
    """Raised when a matrix equation has no reliable dense solution."""


def _as_square(a, name="A"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def is_positive_stable(a, tol=STABILITY_TOL):
    """True iff every eigenvalue of ``a`` has real part > tol."""
    a = _as_square(a)
    return bool(np.min(np.linalg.eigvals(a).real) > tol)


def sym(a):
    """Symmetric part (A + A^T)/2."""
    a = _as_square(a)
    return 0.5 * (a + a.T)


def antisym(a):
    """Antisymmetric part (A - A^T)/2."""
    a = _as_square(a)
    return 0.5 * (a - a.T)


def _kron_solve(lhs, rhs_vec, what):
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise MatrixEquationError(
            f"{what}: vectorized system ill-conditioned (cond ~ {cond:.3e})"
        )
    return np.linalg.solve(lhs, rhs_vec)


def solve_sylvester(a, b, c):
    """Solve A X + X B = C for X.

    Uses row-major vectorization: vec(A X) = (A (x) I) vec(X) and
    vec(X B) = (I (x) B^T) vec(X).  Requires spec(A) and spec(-B) disjoint,
    which is checked through the conditioning of the vectorized system.
    """
    a = _as_square(a, "A")
    b = _as_square(b, "B")
    c = np.asarray(c, dtype=float)
    n, m = a.shape[0], b.shape[0]
    if c.shape != (n, m):
        raise ValueError(f"C must have shape {(n, m)}, got {c.shape}")
    ea = np.linalg.eigvals(a)
    eb = np.linalg.eigvals(b)
    gap = np.min(np.abs(ea[:, None] + eb[None, :]))
    if gap < STABILITY_TOL:
        raise MatrixEquationError(
            f"Sylvester spectra overlap: min |lam_A + lam_B| = {gap:.3e}"
        )
    lhs = np.kron(a, np.eye(m)) + np.kron(np.eye(n), b.T)
    x = _kron_solve(lhs, c.reshape(-1), "Sylvester").reshape(n, m)
    res = np.linalg.norm(a @ x + x @ b - c) / max(1.0, np.linalg.norm(c))
    if res > RESIDUAL_TOL:
        raise MatrixEquationError(f"Sylvester residual {res:.3e} above tolerance")
    return x


def solve_lyapunov(a, qrhs, require_stable=True):
    """Solve A J + J A^T = Q for J, with A positive stable and Q symmetric.

    The solution of the continuous Lyapunov equation is symmetric whenever
    Q is; no symmetrization is applied, so tests can assert this property
    of the raw solve.
    """
    a = _as_square(a, "A")
    qrhs = _as_square(qrhs, "Q")
    if np.linalg.norm(qrhs - qrhs.T) > 1e-12 * max(1.0, np.linalg.norm(qrhs)):
        raise ValueError("Lyapunov right-hand side must be symmetric")
    if require_stable and not is_positive_stable(a):
        raise MatrixEquationError("Lyapunov coefficient is not positive stable")
    n = a.shape[0]
    lhs = np.kron(a, np.eye(n)) + np.kron(np.eye(n), a)
    j = _kron_solve(lhs, qrhs.reshape(-1), "Lyapunov").reshape(n, n)
    res = np.linalg.norm(a @ j + j @ a.T - qrhs) / max(1.0, np.linalg.norm(qrhs))
    if res > RESIDUAL_TOL:
        raise MatrixEquationError(f"Lyapunov residual {res:.3e} above tolerance")
    return j


@dataclass(frozen=True)
class OnsagerDecomposition:
    """Stationary decomposition of the fast linear block dY = -U2 Y dt + sigma dW.

    L = U2 J is the Onsager matrix of kinetic coefficients, D = sigma sigma^T
    the diffusion matrix, Q = (L - L^T)/2 the antisymmetric part measuring
    irreversibility, mu = U2^{-1} J the time-integrated autocorrelation
    (Green-Kubo matrix) and nu = U2^{-1} sigma.
    """

    J: np.ndarray
    L: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    mu: np.ndarray
    nu: np.ndarray

    def is_detailed_balance(self, tol=1e-9):
        u2 = np.linalg.solve(self.J.T, self.L.T).T  # U2 = L J^{-1}
        m = u2 @ self.D
        return np.linalg.norm(m - m.T) <= tol * max(1.0, np.linalg.norm(m))


def onsager_decompose(u2, sigma):
    """Decompose the fast block with drift matrix ``u2`` and noise ``sigma``."""
    u2 = _as_square(u2, "U2")
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != u2.shape[0]:
        raise ValueError("sigma must be (m, k) with m matching U2")
    d = sigma @ sigma.T
    j = solve_lyapunov(u2, d)
    l = u2 @ j
    q = antisym(l)
    u2_inv = np.linalg.inv(u2)
    return OnsagerDecomposition(J=j, L=l, D=d, Q=q, mu=u2_inv @ j, nu=u2_inv @ sigma)


def coupled_five_matrices(gamma0, g, h, sigma_f, m0, memory, fast):
    """Assemble the fast-block drift of the jointly accelerated system.

    ``memory`` is (Gamma1, M1, C1) and ``fast`` is (Gammaf, Mf, Cf, Sigmaf).
    Returns (U2, noise) for the stacked fast state (v, y, beta_f): the
    stationary covariance of dY = -U2 Y dt + noise dW is exactly the solution
    of the five coupled matrix equations.
    """
    gamma1_, m1, c1 = memory
    gammaf, mf, cf, sigmaf = fast
    gamma0 = np.asarray(gamma0, float)
    g = np.asarray(g, float)
    h = np.asarray(h, float)
    sigma_f = np.asarray(sigma_f, float)
    d = gamma0.shape[0]
    d1 = gamma1_.shape[0]
    df = gammaf.shape[0]
    u2 = np.zeros((d + d1 + df, d + d1 + df))
    u2[:d, :d] = gamma0 / m0
    u2[:d, d:d + d1] = g @ c1 / m0
    u2[:d, d + d1:] = -sigma_f @ cf / m0
    u2[d:d + d1, :d] = -m1 @ c1.T @ h
    u2[d:d + d1, d:d + d1] = gamma1_
    u2[d + d1:, d + d1:] = gammaf
    noise = np.zeros((d + d1 + df, sigmaf.shape[1]))
    noise[d + d1:, :] = sigmaf
    return u2, noise


def solve_coupled_five(gamma0, g, h, sigma_f, m0, memory, fast):
    """Solve the five coupled stationary matrix equations of the joint limit.

    The five equations are the blocks of one big Lyapunov equation for the
    stacked fast state (v, y, beta_f); we solve that equation densely and
    slice out {J11, J12, J13, J22, J23}.  Residuals of all five original
    equations are verified before returning.
    """
    gamma1_, m1, c1 = memory
    gammaf, mf, cf, sigmaf = fast
    u2, noise = coupled_five_matrices(gamma0, g, h, sigma_f, m0, memory, fast)
    if not is_positive_stable(u2):
        raise MatrixEquationError("coupled fast block (v, y, beta_f) is not stable")
    d = np.asarray(gamma0).shape[0]
    d1 = gamma1_.shape[0]
    big = solve_lyapunov(u2, noise @ noise.T)
    j11 = big[:d, :d]
    j12 = big[:d, d:d + d1]
    j13 = big[:d, d + d1:]
    j22 = big[d:d + d1, d:d + d1]
    j23 = big[d:d + d1, d + d1:]

    gc1 = g @ c1
    sfcf = sigma_f @ cf
    mc1h = m1 @ c1.T @ h
    eqs = [
        (gamma0 @ j11 + j11 @ gamma0.T + gc1 @ j12.T + j12 @ gc1.T,
         sfcf @ j13.T + j13 @ sfcf.T),
        (m0 * j11 @ h.T @ c1 @ m1 + sfcf @ j23.T,
         gc1 @ j22 + m0 * j12 @ gamma1_.T + gamma0 @ j12),
        (gamma0 @ j13 + gc1 @ j23 + m0 * j13 @ gammaf.T, sfcf @ mf),
        (mc1h @ j12 + j12.T @ mc1h.T, gamma1_ @ j22 + j22 @ gamma1_.T),
        (mc1h @ j13, gamma1_ @ j23 + j23 @ gammaf.T),
    ]
    scale = max(1.0, np.linalg.norm(sigmaf @ sigmaf.T))
    for k, (lhs, rhs) in enumerate(eqs, start=1):
        res = np.linalg.norm(lhs - rhs) / scale
        if res > RESIDUAL_TOL:
            raise MatrixEquationError(
                f"coupled system residual {res:.3e} in equation {k}"
            )
    symdefect = max(np.linalg.norm(j11 - j11.T), np.linalg.norm(j22 - j22.T))
    if symdefect > RESIDUAL_TOL * scale:
        raise MatrixEquationError("J11/J22 symmetry defect above tolerance")
    return {"J11": j11, "J12": j12, "J13": j13, "J22": j22, "J23": j23}
