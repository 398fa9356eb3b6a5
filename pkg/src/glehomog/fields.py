"""Coefficient fields: matrix-, vector- and potential-valued functions of
(t, x) with optional analytic Jacobians and a central-difference fallback.

Evaluation is batched: ``x`` may be a single point of shape (d,) or a batch
of shape (B, d); matrix fields then return (m, n) or (B, m, n).  Constant
fields return an unbatched array that broadcasts through ``np.matmul``.
"""

from __future__ import annotations

import numpy as np

FD_STEP = 1e-5  # central differences, h = FD_STEP * max(1, |x_k|)


def _fd_steps(x):
    return FD_STEP * np.maximum(1.0, np.abs(x))


def mv(mat, vec):
    """Batched matrix @ vector: (…, m, n) @ (…, n) -> (…, m)."""
    return (mat @ vec[..., None])[..., 0]


class MatrixField:
    """A (m x n)-matrix-valued function of (t, x).

    ``fn(t, x)`` must accept x of shape (d,) or (B, d) and return (m, n) or
    (B, m, n).  ``jacobian(t, x)`` (single point only) returns (m, n, d) with
    [:, :, k] = dA/dx_k.
    """

    def __init__(self, fn, shape, dim, jacobian=None, constant=False, name=""):
        self._fn = fn
        self.shape = tuple(shape)
        self.dim = dim
        self._jac = jacobian
        self.constant = constant
        self.name = name

    @classmethod
    def const(cls, value, dim, name=""):
        value = np.atleast_2d(np.asarray(value, dtype=float))
        return cls(lambda t, x: value, value.shape, dim, constant=True, name=name)

    @classmethod
    def from_function(cls, fn, shape, dim, jacobian=None, name=""):
        return cls(fn, shape, dim, jacobian=jacobian, name=name)

    def value(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self._fn(t, x), dtype=float)
        if self.constant:
            return out
        if x.ndim == 1:
            return np.broadcast_to(out, self.shape) if out.shape != self.shape else out
        if out.shape != (x.shape[0],) + self.shape:
            out = np.broadcast_to(out, (x.shape[0],) + self.shape)
        return out

    def __call__(self, t, x):
        return self.value(t, x)

    def jac(self, t, x):
        """d-stack of coordinate derivatives at a single point, (m, n, d)."""
        x = np.asarray(x, dtype=float)
        if self.constant:
            return np.zeros(self.shape + (self.dim,))
        if self._jac is not None:
            return np.asarray(self._jac(t, x), dtype=float)
        h = _fd_steps(x)
        out = np.empty(self.shape + (self.dim,))
        for k in range(self.dim):
            xp = x.copy()
            xm = x.copy()
            xp[k] += h[k]
            xm[k] -= h[k]
            out[:, :, k] = (self.value(t, xp) - self.value(t, xm)) / (2 * h[k])
        return out

    def divergence(self, t, x):
        """(div A)^i = sum_j dA^{ij}/dx_j; requires n == dim."""
        if self.shape[1] != self.dim:
            raise ValueError("divergence needs column count equal to the x-dimension")
        j = self.jac(t, x)
        return np.einsum("ijj->i", j)


class VectorField:
    """A d'-vector-valued function of (t, x), e.g. a force field."""

    def __init__(self, fn, size, dim, jacobian=None, dt=None, constant=False, name=""):
        self._fn = fn
        self.size = size
        self.dim = dim
        self._jac = jacobian
        self._dt = dt
        self.constant = constant
        self.name = name

    @classmethod
    def const(cls, value, dim, name=""):
        value = np.asarray(value, dtype=float).reshape(-1)
        return cls(lambda t, x: value, value.size, dim, constant=True, name=name)

    @classmethod
    def zero(cls, size, dim, name="0"):
        return cls.const(np.zeros(size), dim, name=name)

    def value(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self._fn(t, x), dtype=float)
        if self.constant:
            return out
        want = (self.size,) if x.ndim == 1 else (x.shape[0], self.size)
        if out.shape != want:
            out = np.broadcast_to(out, want)
        return out

    def __call__(self, t, x):
        return self.value(t, x)

    def jac(self, t, x):
        """Jacobian df^i/dx_j at a single point, shape (size, dim)."""
        x = np.asarray(x, dtype=float)
        if self.constant:
            return np.zeros((self.size, self.dim))
        if self._jac is not None:
            return np.asarray(self._jac(t, x), dtype=float)
        h = _fd_steps(x)
        out = np.empty((self.size, self.dim))
        for k in range(self.dim):
            xp = x.copy()
            xm = x.copy()
            xp[k] += h[k]
            xm[k] -= h[k]
            out[:, k] = (self.value(t, xp) - self.value(t, xm)) / (2 * h[k])
        return out

    def dt(self, t, x):
        if self.constant:
            x = np.asarray(x, dtype=float)
            return np.zeros(self.size) if x.ndim == 1 else np.zeros((x.shape[0], self.size))
        if self._dt is not None:
            return np.asarray(self._dt(t, x), dtype=float)
        h = FD_STEP * max(1.0, abs(t))
        return (self.value(t + h, x) - self.value(t - h, x)) / (2 * h)


class Potential:
    """Scalar potential U(t, x) with gradient and explicit time derivative."""

    def __init__(self, fn=None, grad=None, dt=None, dim=1, name="U"):
        self._fn = fn
        self._grad = grad
        self._dt = dt
        self.dim = dim
        self.is_zero = fn is None
        self.name = name

    @classmethod
    def zero(cls, dim):
        return cls(fn=None, dim=dim, name="0")

    def value(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            return 0.0 if x.ndim == 1 else np.zeros(x.shape[0])
        return np.asarray(self._fn(t, x), dtype=float)

    def grad(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            return np.zeros_like(x)
        if self._grad is not None:
            return np.asarray(self._grad(t, x), dtype=float)
        h = _fd_steps(x) if x.ndim == 1 else FD_STEP * np.maximum(1.0, np.abs(x))
        out = np.empty_like(x)
        for k in range(self.dim):
            xp = x.copy()
            xm = x.copy()
            xp[..., k] += h[..., k] if x.ndim > 1 else h[k]
            xm[..., k] -= h[..., k] if x.ndim > 1 else h[k]
            step = h[..., k] if x.ndim > 1 else h[k]
            out[..., k] = (self.value(t, xp) - self.value(t, xm)) / (2 * step)
        return out

    def dt(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.is_zero or self._fn is None:
            return 0.0 if x.ndim == 1 else np.zeros(x.shape[0])
        if self._dt is not None:
            return np.asarray(self._dt(t, x), dtype=float)
        h = FD_STEP * max(1.0, abs(t))
        return (self.value(t + h, x) - self.value(t - h, x)) / (2 * h)


def divergence(field: MatrixField, x, t=0.0):
    """Row-contracted divergence of a matrix field at the point x."""
    return field.divergence(t, np.asarray(x, dtype=float))
