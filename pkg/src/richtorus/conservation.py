"""Conservation laws from invariant-torus graphs and from the e-expansion.

A torus graph near the vertical torus p = 1 is the level set F = c, written
as p = f(t, x).  Parametrising by the fibre angle phi (p = sin phi), the
density p obeys

    p_t + (-g cos phi)_x = 0,

which on the branch cos phi >= 0 is the flux -g sqrt(1 - p^2).  Levels c > 1
are reached with cos phi > 0 and levels c < 1 with cos phi < 0 when the level
is continued away from c = 1; the sign is kept as ``branch``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    as_point,
    centered_dx,
    eval_integral_angle,
    eval_integral_dphi,
    full_coefficients,
    time_derivative,
    _three_levels,
)
from .errors import (
    ArityError,
    CriticalLevelError,
    DegenerateGraphError,
    DomainError,
    InvalidStateError,
    NoConvergenceError,
    PreconditionError,
    RangeError,
    SingularSeriesError,
)
from .series import Series

MARCH_STEP = 2e-3


@dataclass(frozen=True)
class CLawSeries:
    """Coefficients of p(e) = 1 - G_2 e^2 - ... solving F(p(e)) = 1 + e.

    ``flux[m-2]`` is the e^m coefficient of -g cos(phi(e)); the density p_m
    = -G_m is conserved with that flux, i.e. (G_m)_t - (flux_m)_x = 0.
    """

    K: int
    G: np.ndarray
    flux: np.ndarray
    p: Series
    cos: Series

    def p_value(self, eps):
        return self.p(eps)


def _integral_series(a, cos):
    """F = sum_k a_k cos^{n-k} p^k with p = sqrt(1 - cos^2)."""
    n = a.size - 1
    p = (1.0 - cos * cos).sqrt()
    total = Series.constant(0.0, cos.order)
    for k in range(n + 1):
        if a[k] != 0.0:
            total = total + a[k] * (cos ** (n - k)) * (p**k)
    return total, p


def series_claws(u, K):
    """Solve F(p(e)) = 1 + e order by order up to e^K."""
    if int(K) != K or K < 2:
        raise ArityError("truncation order K must be an integer >= 2")
    K = int(K)
    u = as_point(u)
    if u.ndim != 1:
        raise ArityError("series_claws takes a single field point")
    a = full_coefficients(u)
    # d(order-m coefficient)/d(cos_m) = dF/dcos at (cos=0, p=1) = a_{n-1}
    lead = a[-2]
    if not abs(lead) > 1e-300:
        raise SingularSeriesError("vanishing leading coefficient g")
    cos = Series(np.zeros(K + 1))
    for m in range(1, K + 1):
        F, _ = _integral_series(a, cos)
        target = 1.0 if m == 1 else 0.0
        c = cos.c.copy()
        c[m] = (target - F.c[m]) / lead
        cos = Series(c)
    F, p = _integral_series(a, cos)
    expected = np.zeros(K + 1)
    expected[:2] = 1.0
    if not np.allclose(F.c, expected, rtol=0.0, atol=1e-9 * (1.0 + np.max(np.abs(F.c)))):
        raise SingularSeriesError("order-by-order solve did not reproduce 1 + e")
    if abs(p.c[1]) > 1e-14:
        raise SingularSeriesError("p(e) acquired a first-order term")
    flux = -u[-1] * cos.c
    return CLawSeries(K=K, G=-p.c[2:], flux=flux[2:], p=p, cos=cos)


@dataclass(frozen=True)
class TorusGraphSet:
    """Level graphs f_i with F(f_i) = c_i per cell, and their fluxes."""

    c: np.ndarray
    f: np.ndarray
    flux: np.ndarray
    branch: np.ndarray
    angle: np.ndarray


def default_levels(n, spacing=0.1):
    """c_i = 1 - spacing * i, i = 1..n."""
    return 1.0 - spacing * np.arange(1, n + 1)


def level_branch(c):
    """Sign of cos(phi) on the graph continued from p = 1 to level c."""
    c = np.asarray(c, dtype=float)
    return np.where(c >= 1.0, 1.0, -1.0)


def _solve_angles(values, c):
    """Fibre angles phi with F(phi) = c continued from phi = pi/2.

    values: (M, n); c: (L,) -> angles (M, L).
    """
    values = np.asarray(values, dtype=float)
    c = np.asarray(c, dtype=float)
    M, L = values.shape[0], c.size
    u = np.broadcast_to(values[:, None, :], (M, L, values.shape[1]))
    cc = np.broadcast_to(c[None, :], (M, L))
    direction = np.where(cc > 1.0, -1.0, 1.0)
    scale = 1.0 + np.abs(cc)
    angles = np.full((M, L), np.pi / 2)
    at_top = cc == 1.0

    lo = np.full((M, L), np.pi / 2)
    G_lo = np.zeros((M, L)) + (1.0 - cc)
    found = at_top.copy()
    hi = lo.copy()
    steps = int(np.ceil(np.pi / MARCH_STEP))
    for k in range(1, steps + 1):
        todo = ~found
        if not todo.any():
            break
        phi = np.pi / 2 + direction * k * MARCH_STEP
        G = eval_integral_angle(u, phi) - cc
        slope = eval_integral_dphi(u, phi) * direction
        # moving along the branch F approaches c monotonically; a reversal
        # before crossing means c lies beyond the nearest critical value
        against = np.sign(1.0 - cc) * slope > 0.0
        crossed = todo & (np.sign(G) != np.sign(G_lo))
        hi = np.where(crossed, phi, hi)
        found |= crossed
        reversed_ = todo & ~crossed & against
        if reversed_.any():
            j, l = np.argwhere(reversed_)[0]
            raise RangeError(f"level c={c[l]:.17g} is not attained on the branch at cell {j}")
        lo = np.where(todo & ~crossed, phi, lo)
        G_lo = np.where(todo & ~crossed, G, G_lo)
    if not found.all():
        raise RangeError("level not attained within half a turn of the fibre")

    a, b = np.minimum(lo, hi), np.maximum(lo, hi)
    Ga = eval_integral_angle(u, a) - cc
    x = 0.5 * (a + b)
    for _ in range(100):
        Gx = eval_integral_angle(u, x) - cc
        if np.all(np.abs(Gx) <= 1e-15 * scale):
            break
        left = np.sign(Gx) == np.sign(Ga)
        a = np.where(left, x, a)
        Ga = np.where(left, Gx, Ga)
        b = np.where(left, b, x)
        d = eval_integral_dphi(u, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - Gx / d
        ok = np.isfinite(newton) & (newton > a) & (newton < b)
        x = np.where(ok, newton, 0.5 * (a + b))
    else:
        Gx = eval_integral_angle(u, x) - cc
        if np.any(np.abs(Gx) > 1e-12 * scale):
            raise NoConvergenceError("level-set root did not converge")
    angles = np.where(at_top, np.pi / 2, x)
    dF = np.abs(eval_integral_dphi(u, angles))
    critical = ~at_top & (dF < 1e-8 * scale)
    if critical.any():
        j, l = np.argwhere(critical)[0]
        raise CriticalLevelError(f"level c={c[l]:.17g} is critical at cell {j}")
    return angles


def torus_graph_set(values, c):
    """Graphs f_i for every cell of ``values`` (M, n) and level c_i."""
    values = as_point(np.atleast_2d(values))
    c = np.asarray(c, dtype=float)
    if c.ndim != 1:
        raise ArityError("levels must be a 1-D sequence")
    if np.unique(c).size != c.size:
        raise PreconditionError("levels c_i must be pairwise distinct")
    angles = _solve_angles(values, c)
    f = np.sin(angles)
    f = np.where(c[None, :] == 1.0, 1.0, f)
    flux = -values[:, -1:] * np.cos(angles)
    flux = np.where(c[None, :] == 1.0, 0.0, flux)
    return TorusGraphSet(c=c, f=f, flux=flux, branch=level_branch(c), angle=angles)


def torus_graph(u, c):
    """p-value of the torus graph through level c at point u (continuation from p = 1)."""
    u = as_point(u)
    if u.ndim != 1:
        raise ArityError("torus_graph takes a single field point")
    if c == 1.0:
        return 1.0
    return float(np.sin(_solve_angles(u[None, :], np.array([float(c)]))[0, 0]))


def graph_flux(f, g, branch):
    """-g cos(phi) with cos(phi) = branch sqrt(1 - f^2)."""
    f = np.asarray(f, dtype=float)
    return -np.asarray(g)[..., None] * branch * np.sqrt(np.maximum(1.0 - f * f, 0.0))


def _graph_jacobian(f, branch, n, cos=None):
    if cos is None:
        cos = branch * np.sqrt(np.maximum(1.0 - f * f, 0.0))
    k = np.arange(n + 1)
    basis = cos[..., None] ** (n - k) * f[..., None] ** k
    return basis[..., :n], basis[..., n]


def invert_torus_map(f, c, guess, branch=None, tol=1e-13, max_iter=5, cond_max=1e13, cos=None, anchor=None):
    """Recover U from graph values f_i on levels c_i.

    Newton on F(u; f_i) = c_i with Jacobian dF/du_j = cos_i^{n-j} sin_i^j
    (a scaled Vandermonde matrix); F is linear in u so one correction is
    exact up to rounding.  Accepts stacks: f of shape (..., n).

    Near p = 1, cos = sqrt(1 - f^2) cancels badly; pass ``cos`` (e.g. the
    cosine of ``TorusGraphSet.angle``) when it is known more accurately.

    ``anchor`` gives graph values known to belong to ``guess``.  The levels are
    then taken as F(guess; anchor), which keeps the rounding defect of the
    anchor instead of re-resolving it, so unchanged f returns guess exactly.
    """
    f = np.asarray(f, dtype=float)
    c = np.asarray(c, dtype=float)
    u = np.array(as_point(guess), dtype=float)
    n = c.size
    if f.shape[-1] != n or u.shape[-1] != n:
        raise ArityError("need one graph value per coefficient")
    if np.unique(c).size != n:
        raise PreconditionError("levels c_i must be pairwise distinct")
    if np.any(np.abs(f) > 1.0):
        raise DomainError("graph values must satisfy |f| <= 1")
    branch = level_branch(c) if branch is None else np.asarray(branch, dtype=float)
    u = np.broadcast_to(u, f.shape).copy()
    J, top = _graph_jacobian(f, branch, n, None if cos is None else np.asarray(cos, dtype=float))
    if anchor is not None:
        J0, top0 = _graph_jacobian(np.asarray(anchor, dtype=float), branch, n)
        c = np.einsum("...ij,...j->...i", J0, u) + top0
        if np.array_equal(anchor, f):
            return u
    cond = np.linalg.cond(J)
    if np.any(~np.isfinite(cond)) or np.any(cond > cond_max):
        raise DegenerateGraphError("graph Jacobian is singular (coalescing graphs)")
    # the first step is exact up to rounding; at least one more refines it
    for it in range(max_iter):
        resid = np.einsum("...ij,...j->...i", J, u) + top - c
        if it >= 2 and np.all(np.abs(resid) <= tol * (1.0 + np.abs(c))):
            break
        u = u - np.linalg.solve(J, resid[..., None])[..., 0]
    else:
        resid = np.einsum("...ij,...j->...i", J, u) + top - c
        if not np.all(np.abs(resid) <= tol * (1.0 + np.abs(c))):
            raise NoConvergenceError("graph inversion did not converge")
    if np.any(u[..., -1] <= 0.0):
        raise InvalidStateError("recovered g is not positive")
    return u


def claw_residual(history, c, level=None):
    """Discrete d_t f_i + d_x(flux_i) on the middle of three levels; shape (M, n)."""
    trio = _three_levels(history, level)
    c = np.asarray(c, dtype=float)
    sets = [torus_graph_set(grid.values, c) for grid in trio]
    f_t = time_derivative([s.f for s in sets], [grid.time for grid in trio])
    flux_x = centered_dx(sets[1].flux, trio[1].dx)
    return f_t + flux_x
