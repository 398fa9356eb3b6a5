"""Homogenization of generic slow-fast SDE systems.

The pre-limit family is

    dX   = U1(t,X) Y dt + u1(t,X) dt + sigma_tilde(t,X) dW_tilde
    e dY = -U2(t,X) Y dt + u2(t,X) dt + sigma(t,X) dW
    dA   = r(t,X) dt + P(t,X) dX

and the reducer returns the effective Ito drift/diffusion of X, the
noise-induced drift, the Ito-form anomalous functional drift of A, and the
Onsager data of the frozen fast block.

All divergences are assembled by exact product rules from the coordinate
derivatives of the coefficient fields (analytic if provided, otherwise
central differences of the fields themselves).  dJ is obtained by
differentiating the Lyapunov equation, so algebraic identities between the
Ito form, the Stratonovich form and the Lie-bracket form hold to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import MatrixField, VectorField
from .matops import onsager_decompose, solve_lyapunov


@dataclass
class SlowFastSystem:
    n: int                      # slow dimension
    m: int                      # fast dimension
    U1: MatrixField             # (n, m)
    U2: MatrixField             # (m, m), uniformly positive stable
    u1: VectorField             # (n,)
    u2: VectorField             # (m,)
    sigma_tilde: MatrixField | None   # (n, k1) slow noise
    sigma: MatrixField          # (m, k2) fast noise
    P: MatrixField | None = None      # (l, n) functional coefficient
    r: VectorField | None = None      # (l,)


@dataclass
class GeneralReduction:
    drift: np.ndarray            # effective Ito drift of X
    s_ito: np.ndarray            # noise-induced drift part
    diffusion_slow: np.ndarray   # sigma_tilde
    diffusion_fast: np.ndarray   # U1 U2^{-1} sigma
    J: np.ndarray
    mu: np.ndarray
    onsager_Q: np.ndarray
    tr_j: float
    a_prime_rate: np.ndarray | None   # Ito-form anomalous functional drift
    h_str: np.ndarray            # Stratonovich-form noise-induced drift
    strat_correction: np.ndarray # c of the Ito->Stratonovich conversion


def _jac_list(field, t, x, rows, cols):
    """Coordinate derivatives of a matrix field as a list of (rows, cols)."""
    if field is None:
        return None
    j = field.jac(t, x)
    return [j[:, :, k] for k in range(j.shape[2])]


def lyapunov_derivatives(u2, du2, j, drhs=None):
    """dJ_k solving U2 dJ + dJ U2^T = dRHS_k - dU2_k J - J dU2_k^T."""
    out = []
    for k, d2 in enumerate(du2):
        rhs = -d2 @ j - j @ d2.T
        if drhs is not None:
            rhs = rhs + drhs[k]
        rhs = 0.5 * (rhs + rhs.T)
        out.append(solve_lyapunov(u2, rhs))
    return out


def reduce_general(sys: SlowFastSystem, t, x):
    """Effective model of the slow process at the point (t, x)."""
    x = np.asarray(x, dtype=float)
    n, m = sys.n, sys.m
    u1v = sys.u1.value(t, x)
    u2v = sys.u2.value(t, x)
    cu1 = sys.U1.value(t, x)
    cu2 = sys.U2.value(t, x)
    sig = sys.sigma.value(t, x)
    sig_t = sys.sigma_tilde.value(t, x) if sys.sigma_tilde is not None \
        else np.zeros((n, 0))

    du1 = _jac_list(sys.U1, t, x, n, m)
    du2 = _jac_list(sys.U2, t, x, m, m)
    dsig = _jac_list(sys.sigma, t, x, m, sig.shape[1])

    u2inv = np.linalg.inv(cu2)
    ons = onsager_decompose(cu2, sig)
    j = ons.J
    mu = ons.mu

    drhs = [dsig[k] @ sig.T + sig @ dsig[k].T for k in range(n)]
    dj = lyapunov_derivatives(cu2, du2, j, drhs)
    du2inv = [-u2inv @ du2[k] @ u2inv for k in range(n)]

    w = cu1 @ u2inv                      # (n, m)
    dw = [du1[k] @ u2inv + cu1 @ du2inv[k] for k in range(n)]

    # S_Ito = div(U1 U2^{-1} J U1^T) - U1 U2^{-1} div(J U1^T)
    s_ito = np.zeros(n)
    div_ju1t = np.zeros(m)
    for k in range(n):
        dm = (dw[k] @ j @ cu1.T + w @ dj[k] @ cu1.T + w @ j @ du1[k].T)
        s_ito += dm[:, k]
        dn = dj[k] @ cu1.T + j @ du1[k].T
        div_ju1t += dn[:, k]
    s_ito = s_ito - w @ div_ju1t

    # Stratonovich conversion c^i = (1/2) dB^{ia}/dx^k B^{ka} over the full
    # diffusion; the slow-noise part contributes only when sigma_tilde is
    # state-dependent.
    c = np.zeros(n)
    b = w @ sig
    db = [dw[k] @ sig + w @ dsig[k] for k in range(n)]
    for k in range(n):
        c += 0.5 * (db[k] @ b.T)[:, k]
    if sys.sigma_tilde is not None and not sys.sigma_tilde.constant:
        dst = _jac_list(sys.sigma_tilde, t, x, n, sig_t.shape[1])
        for k in range(n):
            c += 0.5 * (dst[k] @ sig_t.T)[:, k]

    # Lie-bracket (Stratonovich) form of the noise-induced drift:
    # H^i = dW^{ip}/dx^k W^{kl} Q^{lp}
    q = ons.Q
    h_str = np.zeros(n)
    for k in range(n):
        h_str += dw[k] @ (q.T @ w[k, :])

    a_prime = None
    if sys.P is not None:
        dp = _jac_list(sys.P, t, x, sys.P.shape[0], n)
        core = cu1 @ mu @ cu1.T          # (n, n)
        a_prime = np.zeros(sys.P.shape[0])
        for jx in range(n):
            a_prime += dp[jx] @ core[:, jx]

    drift = u1v + w @ u2v + s_ito
    return GeneralReduction(drift=drift, s_ito=s_ito, diffusion_slow=sig_t,
                            diffusion_fast=b, J=j, mu=mu, onsager_Q=q,
                            tr_j=float(np.trace(j)), a_prime_rate=a_prime,
                            h_str=h_str, strat_correction=c)


def lie_bracket(w_field, t, x, q_idx, j_idx):
    """[G_q, G_j] for the column vector fields of a matrix field, by
    central differences; independent check of the propagated form."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = 1e-5 * np.maximum(1.0, np.abs(x))
    out = np.zeros(n)
    wv = w_field(t, x)
    for k in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h[k]
        xm[k] -= h[k]
        dwk = (w_field(t, xp) - w_field(t, xm)) / (2 * h[k])
        out += wv[k, q_idx] * dwk[:, j_idx] - wv[k, j_idx] * dwk[:, q_idx]
    return out


def drift_alpha(a1_field, a2_field, sigma2, alpha, t, x):
    """Noise-induced drift under the alpha-point discretization convention.

    For the limit written with the integral rule evaluated at
    t_n + alpha (t_{n+1} - t_n): H_alpha^i = (1/2) Q(alpha)^{qj} [G_q, G_j]^i
    with Q(alpha) = alpha J A2^T - (1 - alpha) A2 J and G the columns of
    A1 A2^{-1}.  alpha = 1/2 is Stratonovich, alpha = 0 Ito.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    x = np.asarray(x, dtype=float)
    n = x.size
    a1 = a1_field.value(t, x)
    a2 = a2_field.value(t, x)
    sigma2 = np.asarray(sigma2, dtype=float)
    j = solve_lyapunov(-a2, sigma2 @ sigma2.T)   # A2 J + J A2^T = -S S^T
    qa = alpha * j @ a2.T - (1.0 - alpha) * a2 @ j

    a2inv = np.linalg.inv(a2)
    da1 = _jac_list(a1_field, t, x, *a1.shape)
    da2 = _jac_list(a2_field, t, x, *a2.shape)
    w = a1 @ a2inv
    dw = [da1[k] @ a2inv - w @ da2[k] @ a2inv for k in range(n)]

    m = a2.shape[0]
    h = np.zeros(n)
    for q_idx in range(m):
        for j_idx in range(m):
            if qa[q_idx, j_idx] == 0.0:
                continue
            br = np.zeros(n)
            for k in range(n):
                br += w[k, q_idx] * dw[k][:, j_idx] - w[k, j_idx] * dw[k][:, q_idx]
            h += 0.5 * qa[q_idx, j_idx] * br
    return h
