"""Degree-n data model, the integral F, the system matrix A(U) and residuals.

A field point is a float array ``u = (a_0, ..., a_{n-1})`` with ``g = a_{n-1}``;
the top coefficient ``a_n`` is never stored and always equals 1.  Most
functions accept batched input of shape ``(..., n)``.

The integral restricted to the unit energy level reads

    F(phi) = sum_{k=0}^{n} a_k cos^{n-k}(phi) sin^k(phi)

and, in the chart p = sin(phi) with cos(phi) = branch * sqrt(1 - p^2),

    F(p) = sum_{k=0}^{n} a_k (branch sqrt(1 - p^2))^{n-k} p^k.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ArityError, DomainError, InvalidStateError

__all__ = [
    "FieldGrid",
    "as_point",
    "build_matrix",
    "last_column",
    "full_coefficients",
    "eval_integral_angle",
    "eval_integral_dphi",
    "eval_integral_p",
    "centered_dx",
    "time_derivative",
    "quasilinear_residual",
    "bracket_residual",
    "write_grids_csv",
    "read_grids_csv",
]


def as_point(u, n=None):
    """Validate and return a field point (or a stack of them) as a float array."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 0 or u.shape[-1] < 2:
        raise ArityError("a field point needs n >= 2 coefficients (a_0, ..., a_{n-1})")
    if n is not None and u.shape[-1] != n:
        raise ArityError(f"expected {n} coefficients, got {u.shape[-1]}")
    if not np.all(np.isfinite(u)):
        raise InvalidStateError("field point has non-finite entries")
    if np.any(u[..., -1] <= 0.0):
        raise InvalidStateError("metric coefficient g = a_{n-1} must be positive")
    return u


def full_coefficients(u):
    """Append the implicit a_n = 1: shape (..., n) -> (..., n+1)."""
    u = np.asarray(u, dtype=float)
    one = np.ones(u.shape[:-1] + (1,))
    return np.concatenate([u, one], axis=-1)


def last_column(u):
    """Last column of A(U): c_k = k a_k - (n+2-k) a_{k-2}, k = 1..n (a_{j<0} = 0)."""
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    a = full_coefficients(u)
    c = np.empty(u.shape)
    for k in range(1, n + 1):
        c[..., k - 1] = k * a[..., k]
        if k >= 2:
            c[..., k - 1] -= (n + 2 - k) * a[..., k - 2]
    return c


def build_matrix(u):
    """System matrix A(U) of U_t + A(U) U_x = 0.

    Rows 2..n carry g on the sub-diagonal; the last column holds
    ``last_column(u)``; everything else is zero.
    """
    u = as_point(u)
    n = u.shape[-1]
    g = u[..., -1]
    A = np.zeros(u.shape[:-1] + (n, n))
    idx = np.arange(1, n)
    A[..., idx, idx - 1] = g[..., None]
    A[..., :, n - 1] = last_column(u)
    return A


def _broadcast_angle(u, phi):
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    shape = np.broadcast_shapes(u.shape[:-1], phi.shape)
    return np.broadcast_to(u, shape + u.shape[-1:]), np.broadcast_to(phi, shape)


def _trig_basis(c, s, n):
    """Stack of cos^{n-k} sin^k for k = 0..n along a new last axis."""
    k = np.arange(n + 1)
    return c[..., None] ** (n - k) * s[..., None] ** k


def eval_integral_angle(u, phi):
    """F(phi) = sum_k a_k cos^{n-k} phi sin^k phi with a_n = 1."""
    u, phi = _broadcast_angle(u, phi)
    n = u.shape[-1]
    basis = _trig_basis(np.cos(phi), np.sin(phi), n)
    return np.sum(full_coefficients(u) * basis, axis=-1)


def eval_integral_dphi(u, phi):
    """Angular derivative F_phi(phi)."""
    u, phi = _broadcast_angle(u, phi)
    n = u.shape[-1]
    a = full_coefficients(u)
    c, s = np.cos(phi), np.sin(phi)
    out = np.zeros(phi.shape)
    for k in range(n + 1):
        term = np.zeros(phi.shape)
        if k > 0:
            term += k * c ** (n - k + 1) * s ** (k - 1)
        if k < n:
            term -= (n - k) * c ** (n - k - 1) * s ** (k + 1)
        out += a[..., k] * term
    return out


def eval_integral_p(u, p, branch=1):
    """F in the momentum chart p = sin(phi).

    ``branch`` is the sign of cos(phi); +1 is the chart used for graphs
    x = x(t) traversed forward in t.
    """
    p = np.asarray(p, dtype=float)
    if np.any(np.abs(p) > 1.0):
        raise DomainError("|p| must not exceed 1")
    u = np.asarray(u, dtype=float)
    u, p = _broadcast_angle(u, p)
    n = u.shape[-1]
    cos = np.asarray(branch, dtype=float) * np.sqrt(np.maximum(1.0 - p * p, 0.0))
    basis = _trig_basis(np.broadcast_to(cos, p.shape), p, n)
    return np.sum(full_coefficients(u) * basis, axis=-1)


@dataclass(frozen=True)
class FieldGrid:
    """Periodic 1-D grid of field points at cell centers x_j = (j + 1/2) L / M."""

    values: np.ndarray
    time: float = 0.0
    period: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ArityError("grid values must have shape (M, n)")
        if values.shape[0] < 8:
            raise ArityError("a grid needs at least 8 cells")
        if values.shape[1] < 2:
            raise ArityError("degree n must be at least 2")
        if self.period <= 0:
            raise DomainError("period must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def cells(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def dx(self):
        return self.period / self.cells

    @property
    def x(self):
        return (np.arange(self.cells) + 0.5) * self.dx

    @property
    def g(self):
        return self.values[:, -1]

    def is_valid(self):
        return bool(np.all(np.isfinite(self.values)) and np.all(self.g > 0.0))

    def check(self):
        """Raise InvalidStateError at the first cell with g <= 0."""
        bad = np.flatnonzero(~(self.g > 0.0))
        if bad.size:
            raise InvalidStateError(f"g <= 0 at cell {int(bad[0])}")
        return self

    def cell(self, j):
        return self.values[j % self.cells]

    def replace(self, values=None, time=None):
        return FieldGrid(
            self.values if values is None else values,
            self.time if time is None else time,
            self.period,
        )


def centered_dx(values, dx):
    """Second-order centered periodic difference along axis 0."""
    values = np.asarray(values, dtype=float)
    return (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) / (2.0 * dx)


def time_derivative(levels, times):
    """Three-point derivative at the middle of three (possibly uneven) levels."""
    if len(levels) != 3 or len(times) != 3:
        raise ArityError("need exactly three time levels")
    f0, f1, f2 = (np.asarray(v, dtype=float) for v in levels)
    t0, t1, t2 = (float(t) for t in times)
    h1, h2 = t1 - t0, t2 - t1
    if h1 <= 0 or h2 <= 0:
        raise ArityError("time levels must be strictly increasing")
    return (
        -h2 / (h1 * (h1 + h2)) * f0
        + (h2 - h1) / (h1 * h2) * f1
        + h1 / (h2 * (h1 + h2)) * f2
    )


def quasilinear_residual(grid, grid_dt):
    """Per-cell U_t + A(U) U_x with centered periodic U_x."""
    grid_dt = np.asarray(grid_dt, dtype=float)
    if grid_dt.shape != grid.values.shape:
        raise ArityError("grid_dt must have the same shape as the grid values")
    Ux = centered_dx(grid.values, grid.dx)
    A = build_matrix(grid.values)
    return grid_dt + np.einsum("mij,mj->mi", A, Ux)


def _three_levels(history, level):
    history = list(getattr(history, "snapshots", history))
    if len(history) < 3:
        raise ArityError("need at least three consecutive time levels")
    if level is None:
        level = len(history) // 2
    if not 1 <= level <= len(history) - 2:
        raise ArityError("level must have a neighbour on both sides")
    trio = history[level - 1 : level + 2]
    shapes = {grid.values.shape for grid in trio}
    if len(shapes) != 1:
        raise ArityError("time levels are not conformable")
    return trio


def bracket_residual(history, phi, level=None):
    """Poisson bracket {F, H} per cell at the middle level, on the unit energy level.

    Evaluates dF/dtau = F_t cos(phi)/g + F_x sin(phi) + F_phi dphi/dtau with
    dphi/dtau = cos(phi) g_x / g, using finite differences of the sampled
    integral itself (not of the system residual).
    """
    prev, mid, nxt = _three_levels(history, level)
    F = [eval_integral_angle(grid.values, phi) for grid in (prev, mid, nxt)]
    F_t = time_derivative(F, [prev.time, mid.time, nxt.time])
    F_x = centered_dx(F[1], mid.dx)
    g = mid.g
    g_x = centered_dx(g, mid.dx)
    F_phi = eval_integral_dphi(mid.values, phi)
    c, s = np.cos(phi), np.sin(phi)
    return F_t * c / g + F_x * s + F_phi * c * g_x / g


def write_grids_csv(grids, stream=None):
    """Serialize one or more grids as ``t,x,a0,...``; returns the text if no stream."""
    grids = [grids] if isinstance(grids, FieldGrid) else list(grids)
    if not grids:
        raise ArityError("nothing to write")
    n = grids[0].n
    own = stream is None
    out = io.StringIO() if own else stream
    out.write(",".join(["t", "x"] + [f"a{k}" for k in range(n)]) + "\n")
    for grid in grids:
        if grid.n != n:
            raise ArityError("all grids in one stream must share the degree")
        for x, row in zip(grid.x, grid.values):
            fields = [grid.time, x, *row]
            out.write(",".join(f"{float(v):.17g}" for v in fields) + "\n")
    return out.getvalue() if own else None


def read_grids_csv(text, period=1.0):
    """Parse the output of ``write_grids_csv`` back into a list of grids."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header[:2] != ["t", "x"] or not all(h == f"a{k}" for k, h in enumerate(header[2:])):
        raise ArityError(f"unexpected header {header}")
    rows = [[float(v) for v in row] for row in reader if row]
    grids, current, t_cur = [], [], None
    for row in rows:
        if t_cur is not None and row[0] != t_cur:
            grids.append(FieldGrid(np.array(current), t_cur, period))
            current = []
        t_cur = row[0]
        current.append(row[2:])
    if current:
        grids.append(FieldGrid(np.array(current), t_cur, period))
    return grids
