"""Geodesic flow of ds^2 = g^2 dt^2 + dx^2 and drift of H and F along it.

Full flow (arclength tau, unit energy H = (p1^2/g^2 + p2^2)/2 = 1/2):

    t' = p1/g^2,  x' = p2,  p1' = p1^2 g_t/g^3,  p2' = p1^2 g_x/g^3.

Reduced flow for graphs x = x(t) (momentum p = sin phi, forward branch):

    dx/dt = g p / sqrt(1 - p^2),  dp/dt = g_x sqrt(1 - p^2),

augmented with dtau/dt = g / sqrt(1 - p^2) so both charts share arclength.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .core import full_coefficients
from .errors import ArityError, DomainError

log = logging.getLogger(__name__)


class ClosedFormMetric:
    """Metric from callables g(t, x), g_t(t, x), g_x(t, x).

    ``coefficients(t, x)`` (optional) returns U = (a_0, ..., a_{n-1}) used to
    evaluate F; its last entry should equal g.
    """

    def __init__(self, g, g_t, g_x, coefficients=None, t_range=(-math.inf, math.inf)):
        self._g, self._g_t, self._g_x = g, g_t, g_x
        self._coefficients = coefficients
        self.t_range = tuple(t_range)

    def contains(self, t, x=None):
        return self.t_range[0] <= t <= self.t_range[1]

    def metric(self, t, x):
        return self._g(t, x), self._g_t(t, x), self._g_x(t, x)

    def coefficients(self, t, x):
        if self._coefficients is None:
            return None
        return np.asarray(self._coefficients(t, x), dtype=float)


def flat_metric(u=(0.0, 0.0, 1.0)):
    """g = 1 everywhere with constant coefficients u (a constant solution)."""
    u = np.asarray(u, dtype=float)
    if u[-1] != 1.0:
        raise DomainError("flat metric needs g = a_{n-1} = 1")
    return ClosedFormMetric(lambda t, x: 1.0, lambda t, x: 0.0, lambda t, x: 0.0, lambda t, x: u)


class HistoryMetric:
    """Metric and coefficients interpolated from evolution snapshots.

    ``interpolation="linear"`` is bilinear in (t, x); ``"cubic"`` uses a
    periodic cubic spline in x and stays linear in t.
    """

    def __init__(self, history, interpolation="linear"):
        snaps = history.snapshots if hasattr(history, "snapshots") else list(history)
        if len(snaps) < 2:
            raise ArityError("need at least two snapshots")
        if interpolation not in ("linear", "cubic"):
            raise ValueError("interpolation must be 'linear' or 'cubic'")
        self.interpolation = interpolation
        self.times = np.array([s.time for s in snaps])
        self.data = np.stack([s.values for s in snaps])
        self.period = snaps[0].period
        self.cells = snaps[0].cells
        self.dx = snaps[0].dx
        self.n = snaps[0].n
        self.t_range = (float(self.times[0]), float(self.times[-1]))
        self._splines = {}

    def contains(self, t, x=None):
        return self.t_range[0] <= t <= self.t_range[1]

    def _bracket(self, t):
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        span = self.times[k + 1] - self.times[k]
        return k, (t - self.times[k]) / span, span

    def _spline(self, k):
        if k not in self._splines:
            x = (np.arange(self.cells + 1) + 0.5) * self.dx
            y = np.concatenate([self.data[k], self.data[k][:1]], axis=0)
            self._splines[k] = CubicSpline(x, y, axis=0, bc_type="periodic")
        return self._splines[k]

    def _row(self, k, x):
        """Values and x-derivatives of all fields at snapshot k."""
        if self.interpolation == "cubic":
            s = self._spline(k)
            xx = (x - 0.5 * self.dx) % self.period + 0.5 * self.dx
            return s(xx), s(xx, 1)
        pos = (x / self.dx - 0.5) % self.cells
        j = int(math.floor(pos)) % self.cells
        w = pos - math.floor(pos)
        left, right = self.data[k, j], self.data[k, (j + 1) % self.cells]
        return (1.0 - w) * left + w * right, (right - left) / self.dx

    def fields(self, t, x):
        """(U, U_t, U_x) at (t, x)."""
        k, w, span = self._bracket(t)
        a0, d0 = self._row(k, x)
        a1, d1 = self._row(k + 1, x)
        return (1.0 - w) * a0 + w * a1, (a1 - a0) / span, (1.0 - w) * d0 + w * d1

    def metric(self, t, x):
        U, U_t, U_x = self.fields(t, x)
        return U[-1], U_t[-1], U_x[-1]

    def coefficients(self, t, x):
        return self.fields(t, x)[0]


class PerturbedMetric:
    """Adds amplitude * sin(2 pi m x / L) to one coefficient field of a sampler.

    Perturbing a field other than g leaves the metric (and hence the geodesics)
    unchanged but makes the coefficients a non-solution.
    """

    def __init__(self, base, field, amplitude=1e-2, mode=1, period=1.0):
        self.base = base
        self.field = field
        self.amplitude = amplitude
        self.mode = mode
        self.period = period
        self.t_range = base.t_range

    def contains(self, t, x=None):
        return self.base.contains(t, x)

    def _bump(self, x):
        k = 2.0 * np.pi * self.mode / self.period
        return self.amplitude * np.sin(k * x), self.amplitude * k * np.cos(k * x)

    def coefficients(self, t, x):
        U = np.array(self.base.coefficients(t, x), dtype=float)
        U[self.field] += self._bump(x)[0]
        return U

    def metric(self, t, x):
        g, g_t, g_x = self.base.metric(t, x)
        if self.field == -1 or self.field == len(self.base.coefficients(t, x)) - 1:
            b, db = self._bump(x)
            return g + b, g_t, g_x + db
        return g, g_t, g_x


def integral_value(U, g, p1, p2):
    """F = sum_k a_k p1^{n-k} p2^k / g^{n-k} (a_n = 1)."""
    a = full_coefficients(np.asarray(U, dtype=float))
    n = a.size - 1
    k = np.arange(n + 1)
    return float(np.sum(a * (p1 / g) ** (n - k) * p2**k))


@dataclass
class Trajectory:
    kind: str
    tau: np.ndarray
    t: np.ndarray
    x: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    H: np.ndarray
    F: np.ndarray
    clipped: bool = False

    def __len__(self):
        return self.tau.size


def _rk4(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _OutOfStrip(Exception):
    pass


class _Vertical(Exception):
    pass


def _F_at(metric, t, x, p1, p2):
    U = metric.coefficients(t, x)
    if U is None:
        return math.nan
    g = metric.metric(t, x)[0]
    return integral_value(U, g, p1, p2)


def integrate_geodesic(metric, init, tau_span, dtau, stride=1):
    """Classical RK4 for the full flow from (t, x, phi) on the unit energy level."""
    t0, x0, phi0 = (float(v) for v in init)
    if not metric.contains(t0, x0):
        raise DomainError("initial point outside the metric strip")
    g0 = metric.metric(t0, x0)[0]
    y = np.array([t0, x0, g0 * math.cos(phi0), math.sin(phi0)])

    def rhs(y):
        t, x, p1, p2 = y
        if not metric.contains(t, x):
            raise _OutOfStrip
        g, g_t, g_x = metric.metric(t, x)
        return np.array([p1 / g**2, p2, p1**2 * g_t / g**3, p1**2 * g_x / g**3])

    rows = []

    def record(tau, y):
        t, x, p1, p2 = y
        g = metric.metric(t, x)[0]
        H = 0.5 * (p1**2 / g**2 + p2**2)
        rows.append((tau, t, x, p1, p2, H, _F_at(metric, t, x, p1, p2)))

    steps = int(round(tau_span / dtau))
    record(0.0, y)
    clipped = False
    for k in range(1, steps + 1):
        try:
            y_new = _rk4(rhs, y, dtau)
        except _OutOfStrip:
            clipped = True
            break
        if not metric.contains(y_new[0], y_new[1]):
            clipped = True
            break
        y = y_new
        if k % stride == 0 or k == steps:
            record(k * dtau, y)
    arr = np.array(rows)
    return Trajectory("full", *arr.T, clipped=clipped)


def integrate_reduced(metric, init, t_span, dt, stride=1, p_limit=1.0 - 1e-9):
    """RK4 for the 1.5-degree-of-freedom flow in the time variable t."""
    t0, x0, p0 = (float(v) for v in init)
    if abs(p0) >= 1.0:
        raise DomainError("reduced flow needs |p| < 1 (non-vertical geodesic)")
    if not metric.contains(t0, x0):
        raise DomainError("initial point outside the metric strip")

    def rhs_at(t, y):
        x, p, _ = y
        if not metric.contains(t, x):
            raise _OutOfStrip
        g, _, g_x = metric.metric(t, x)
        if abs(p) >= 1.0:
            raise _Vertical
        root = math.sqrt(1.0 - p * p)
        return np.array([g * p / root, g_x * root, g / root])

    rows = []

    def record(t, y):
        x, p, tau = y
        g = metric.metric(t, x)[0]
        p1, p2 = g * math.sqrt(max(1.0 - p * p, 0.0)), p
        H = 0.5 * (p1**2 / g**2 + p2**2)
        rows.append((tau, t, x, p1, p2, H, _F_at(metric, t, x, p1, p2)))

    y = np.array([x0, p0, 0.0])
    t = t0
    record(t, y)
    steps = int(round(t_span / dt))
    clipped = False
    for k in range(1, steps + 1):
        try:
            k1 = rhs_at(t, y)
            k2 = rhs_at(t + 0.5 * dt, y + 0.5 * dt * k1)
            k3 = rhs_at(t + 0.5 * dt, y + 0.5 * dt * k2)
            k4 = rhs_at(t + dt, y + dt * k3)
        except _OutOfStrip:
            clipped = True
            break
        except _Vertical:
            y_new = np.array([y[0], math.copysign(1.0, y[1]), y[2]])
        else:
            y_new = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if abs(y_new[1]) >= p_limit:
            log.info("reduced trajectory approaches a vertical geodesic at t=%.6g", t + dt)
            clipped = True
            break
        y, t = y_new, t0 + k * dt
        if not metric.contains(t, y[0]):
            clipped = True
            break
        if k % stride == 0 or k == steps:
            record(t, y)
    arr = np.array(rows)
    return Trajectory("reduced", *arr.T, clipped=clipped)


def invariant_drift(traj, u_source=None):
    """Max and RMS deviation of H from 1/2 and of F from its initial value.

    With ``u_source`` the integral is re-evaluated from that sampler's
    coefficients instead of the values stored in the trajectory.
    """
    if len(traj) == 0:
        raise ArityError("empty trajectory")
    F = traj.F
    if u_source is not None:
        F = np.array(
            [_F_at(u_source, t, x, p1, p2) for t, x, p1, p2 in zip(traj.t, traj.x, traj.p1, traj.p2)]
        )
    dH = traj.H - 0.5
    dF = F - F[0]
    return {
        "maxH": float(np.max(np.abs(dH))),
        "rmsH": float(np.sqrt(np.mean(dH**2))),
        "maxF": float(np.max(np.abs(dF))),
        "rmsF": float(np.sqrt(np.mean(dF**2))),
        "clipped": bool(traj.clipped),
    }


def chart_discrepancy(full, reduced, metric):
    """Max |x_full - x_reduced| and |tau_full - tau_reduced| at the full samples' t."""
    g = np.array([metric.metric(t, x)[0] for t, x in zip(reduced.t, reduced.x)])
    p = reduced.p2
    root = np.sqrt(1.0 - p * p)
    x_of_t = CubicHermiteSpline(reduced.t, reduced.x, g * p / root)
    tau_of_t = CubicHermiteSpline(reduced.t, reduced.tau, g / root)
    inside = (full.t >= reduced.t[0]) & (full.t <= reduced.t[-1])
    if not inside.any():
        raise ArityError("trajectories share no time range")
    dx = np.abs(full.x[inside] - x_of_t(full.t[inside]))
    dtau = np.abs(full.tau[inside] - tau_of_t(full.t[inside]))
    return float(dx.max()), float(dtau.max())
