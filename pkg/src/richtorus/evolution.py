"""Cauchy problem for U_t + A(U) U_x = 0 with periodic data.

Two first-order schemes are provided:

* ``upwind-quasilinear``: characteristic upwinding of the non-conservative
  form, A^+ and A^- taken from an eigen-decomposition of A at the average of
  each neighbouring cell pair;
* ``laxfriedrichs-conservative``: Lax-Friedrichs finite volumes on the
  torus-graph densities f_i with flux -g cos(phi_i), U recovered per cell by
  inverting the graph map.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .conservation import default_levels, graph_flux, invert_torus_map, level_branch, torus_graph_set
from .core import FieldGrid, build_matrix
from .errors import ArityError, ClassificationError, ConfigError, RejectedSpecError
from .spectral import DEGENERATE, ELLIPTIC, HYPERBOLIC, riemann_invariants, spectra, spectrum

log = logging.getLogger(__name__)

UPWIND = "upwind-quasilinear"
LAX_FRIEDRICHS = "laxfriedrichs-conservative"
SCHEMES = (UPWIND, LAX_FRIEDRICHS)

REACHED_END = "reached-t-end"
BLOWUP = "blowup-detected"
HYPERBOLICITY_LOST = "hyperbolicity-lost"


@dataclass(frozen=True)
class EvolutionParams:
    scheme: str = UPWIND
    cfl: float = 0.9
    t_end: float = 0.1
    snapshot_stride: int = 1
    # absolute cap on max |da_k/dx|; None means blowup_factor * initial max gradient
    blowup_gradient_cap: float | None = None
    blowup_factor: float = 1e3
    hyperbolicity_policy: str = "halt"
    levels: tuple | None = None
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not 0.0 < self.cfl <= 1.0:
            raise ConfigError("cfl must lie in (0, 1]")
        if self.blowup_gradient_cap is not None and not self.blowup_gradient_cap > 0:
            raise ConfigError("blowup_gradient_cap must be positive")
        if not self.blowup_factor > 0:
            raise ConfigError("blowup_factor must be positive")
        if self.hyperbolicity_policy not in ("halt", "warn"):
            raise ConfigError("hyperbolicity_policy must be 'halt' or 'warn'")
        if self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride must be >= 1")
        if self.t_end < 0:
            raise ConfigError("t_end must be non-negative")

    def level_set(self, n):
        if self.levels is not None:
            c = np.asarray(self.levels, dtype=float)
            if c.size != n:
                raise ConfigError(f"need {n} levels for degree {n}")
            return c
        return default_levels(n)


@dataclass
class EvolutionHistory:
    snapshots: list
    diagnostics: list
    termination: str
    t_final: float
    blowup_time: float | None = None
    params: EvolutionParams | None = None
    conserved_sums: list = field(default_factory=list)

    @property
    def times(self):
        return np.array([s.time for s in self.snapshots])


@dataclass(frozen=True)
class InitialDataSpec:
    """a_k(x) = mean_k + sum amplitude * sin(2 pi m x / L + phase)."""

    means: tuple
    modes: tuple = ()
    cells: int = 256
    period: float = 1.0
    g_min: float = 1e-3

    @property
    def n(self):
        return len(self.means)


def make_initial_data(spec):
    """Sample the initial data at cell centers and check positivity and hyperbolicity."""
    n = spec.n
    if n < 2:
        raise RejectedSpecError("degree must be >= 2")
    if spec.cells < 8:
        raise RejectedSpecError("need at least 8 cells")
    modes = list(spec.modes) + [()] * (n - len(spec.modes))
    if len(modes) != n:
        raise RejectedSpecError("one mode list per field")
    x = (np.arange(spec.cells) + 0.5) * spec.period / spec.cells
    values = np.empty((spec.cells, n))
    for k in range(n):
        values[:, k] = spec.means[k]
        for m, amp, phase in modes[k]:
            values[:, k] += amp * np.sin(2.0 * np.pi * m * x / spec.period + phase)
    bad = np.flatnonzero(~(values[:, -1] > spec.g_min))
    if bad.size:
        raise RejectedSpecError(f"g falls below g_min at cell {int(bad[0])}", int(bad[0]))
    _, labels = spectra(values)
    bad = np.flatnonzero(labels != HYPERBOLIC)
    if bad.size:
        j = int(bad[0])
        raise RejectedSpecError(f"initial data is {labels[j]} at cell {j}", j)
    return FieldGrid(values, 0.0, spec.period)


def _exact_sums(f):
    return np.array([math.fsum(col) for col in f.T])


def max_gradient(values, dx):
    return float(np.max(np.abs(np.roll(values, -1, axis=0) - values)) / dx)


def _stable_dt(values, dx, cfl):
    lam, labels = spectra(values)
    max_lam = float(np.max(np.abs(lam.real)))
    return cfl * dx / max_lam if max_lam > 0 else math.inf, lam, labels


def _upwind_update(U, dx, dt):
    mid = 0.5 * (U + np.roll(U, -1, axis=0))
    w, R = np.linalg.eig(build_matrix(mid))
    w, R = w.real, R.real
    Rinv = np.linalg.inv(R)
    dU = np.roll(U, -1, axis=0) - U
    char = np.einsum("mij,mj->mi", Rinv, dU)
    right = np.einsum("mij,mj->mi", R, np.maximum(w, 0.0) * char)
    left = np.einsum("mij,mj->mi", R, np.minimum(w, 0.0) * char)
    return U - dt / dx * (np.roll(right, 1, axis=0) + left)


def _lf_update(f, U, c, branch, dx, dt):
    H = graph_flux(f, U[:, -1], branch)
    f_next = np.roll(f, -1, axis=0)
    flux = 0.5 * (H + np.roll(H, -1, axis=0)) - dx / (2.0 * dt) * (f_next - f)
    f_new = f - dt / dx * (flux - np.roll(flux, 1, axis=0))
    U_new = invert_torus_map(f_new, c, U, branch=branch, anchor=f)
    return f_new, U_new


def step(grid, params, dt=None):
    """Advance one time level; dt defaults to the CFL limit."""
    grid.check()
    if dt is None:
        dt, _, labels = _stable_dt(grid.values, grid.dx, params.cfl)
        if params.scheme == UPWIND and np.any(labels != HYPERBOLIC):
            raise ClassificationError("upwind scheme needs a strictly hyperbolic grid")
    if not math.isfinite(dt):
        return grid.replace(time=grid.time)
    if params.scheme == UPWIND:
        new = _upwind_update(grid.values, grid.dx, dt)
    else:
        c = params.level_set(grid.n)
        f = torus_graph_set(grid.values, c).f
        _, new = _lf_update(f, grid.values, c, level_branch(c), grid.dx, dt)
    return FieldGrid(new, grid.time + dt, grid.period)


def _census(labels):
    return {
        HYPERBOLIC: int(np.sum(labels == HYPERBOLIC)),
        DEGENERATE: int(np.sum(labels == DEGENERATE)),
        ELLIPTIC: int(np.sum(labels == ELLIPTIC)),
    }


def evolve(grid0, params):
    """Repeated steps with diagnostics until t_end, blow-up or loss of hyperbolicity."""
    grid0.check()
    dx = grid0.dx
    U = np.array(grid0.values)
    t = float(grid0.time)
    t_stop = t + params.t_end
    grad0 = max_gradient(U, dx)
    cap = params.blowup_gradient_cap
    if cap is None:
        cap = params.blowup_factor * grad0 if grad0 > 0 else math.inf

    conservative = params.scheme == LAX_FRIEDRICHS
    if conservative:
        c = params.level_set(grid0.n)
        branch = level_branch(c)
        f = torus_graph_set(U, c).f
    snapshots = [grid0]
    diagnostics = []
    sums = [_exact_sums(f)] if conservative else []
    termination, blowup_time = REACHED_END, None
    grad_prev = grad0

    for k in range(params.max_steps):
        if t >= t_stop:
            break
        dt_cfl, lam, labels = _stable_dt(U, dx, params.cfl)
        census = _census(labels)
        if census[HYPERBOLIC] != U.shape[0]:
            if params.hyperbolicity_policy == "halt":
                termination = HYPERBOLICITY_LOST
                break
            log.warning("t=%.6g: %s", t, census)
        real = np.sort(lam.real, axis=-1)
        max_lam = float(np.max(np.abs(real)))
        dt = min(dt_cfl, t_stop - t)
        if not math.isfinite(dt):
            dt = t_stop - t
        if conservative:
            f, U_new = _lf_update(f, U, c, branch, dx, dt)
        else:
            U_new = _upwind_update(U, dx, dt)
        t_new = t + dt if t_stop - (t + dt) > 1e-14 * max(1.0, abs(t_stop)) else t_stop
        if not np.all(np.isfinite(U_new)):
            termination, blowup_time = BLOWUP, t_new
            break
        grad = max_gradient(U_new, dx)
        diagnostics.append(
            {
                "step": k + 1,
                "t": t_new,
                "dt": dt,
                "max_lambda": max_lam,
                "min_gap": float(np.min(np.diff(real, axis=-1))),
                "max_grad": grad,
                "class_counts": census,
            }
        )
        if grad > cap:
            frac = (cap - grad_prev) / (grad - grad_prev) if grad > grad_prev else 1.0
            termination, blowup_time = BLOWUP, t + frac * dt
            break
        U, t, grad_prev = U_new, t_new, grad
        if conservative:
            sums.append(_exact_sums(f))
        if (k + 1) % params.snapshot_stride == 0 or t >= t_stop:
            snapshots.append(FieldGrid(U, t, grid0.period))
    else:
        log.warning("max_steps reached before t_end")
    if snapshots[-1].time != t:
        snapshots.append(FieldGrid(U, t, grid0.period))
    return EvolutionHistory(
        snapshots=snapshots,
        diagnostics=diagnostics,
        termination=termination,
        t_final=t,
        blowup_time=blowup_time,
        params=params,
        conserved_sums=sums,
    )


class HistoryInterpolator:
    """Piecewise-linear U(t, x): periodic in x, linear in t between snapshots."""

    def __init__(self, history):
        snaps = history.snapshots if hasattr(history, "snapshots") else list(history)
        if not snaps:
            raise ArityError("empty history")
        self.times = np.array([s.time for s in snaps])
        self.data = np.stack([s.values for s in snaps])
        self.period = snaps[0].period
        self.dx = snaps[0].dx
        self.cells = snaps[0].cells

    @property
    def t_range(self):
        return float(self.times[0]), float(self.times[-1])

    def contains(self, t):
        lo, hi = self.t_range
        return lo <= t <= hi

    def _time_bracket(self, t):
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        if len(self.times) == 1:
            return 0, 0, 0.0
        span = self.times[k + 1] - self.times[k]
        return k, k + 1, (t - self.times[k]) / span

    def _space(self, rows, x):
        s = (x / self.dx - 0.5) % self.cells
        j = int(np.floor(s)) % self.cells
        w = s - np.floor(s)
        return (1.0 - w) * rows[..., j, :] + w * rows[..., (j + 1) % self.cells, :]

    def __call__(self, t, x):
        k0, k1, w = self._time_bracket(t)
        a = self._space(self.data[k0], x)
        if k1 == k0:
            return a
        return (1.0 - w) * a + w * self._space(self.data[k1], x)


@dataclass
class CharacteristicTrace:
    t: np.ndarray
    x: np.ndarray
    r: np.ndarray
    drift: float
    truncated: bool


def characteristic_trace(history, i, x0, substeps=1):
    """Follow dx/dt = lambda_i(U(t, x)) through the stored history, sampling r_i."""
    interp = HistoryInterpolator(history)
    n = interp.data.shape[-1]
    if not 0 <= i < n:
        raise ArityError(f"field index {i} out of range for degree {n}")

    def speed(t, x):
        spec = spectrum(interp(t, x))
        if not spec.hyperbolic:
            raise ClassificationError("traced curve left the hyperbolic region")
        return spec.eigenvalues[i]

    ts, xs, rs = [interp.times[0]], [float(x0)], []
    rs.append(riemann_invariants(interp(ts[0], x0))[i])
    truncated = False
    x = float(x0)
    try:
        for k in range(len(interp.times) - 1):
            t_a, t_b = interp.times[k], interp.times[k + 1]
            h = (t_b - t_a) / substeps
            t = t_a
            for _ in range(substeps):
                k1 = speed(t, x)
                k2 = speed(min(t + h, t_b), x + h * k1)
                x = x + 0.5 * h * (k1 + k2)
                t = t + h
            ts.append(t_b)
            xs.append(x)
            rs.append(riemann_invariants(interp(t_b, x))[i])
    except ClassificationError:
        log.info("characteristic trace truncated at t=%.6g", ts[-1])
        truncated = True
    r = np.array(rs)
    return CharacteristicTrace(np.array(ts), np.array(xs), r, float(np.max(np.abs(r - r[0]))), truncated)


def best_shift_discrepancy(history):
    """For each snapshot, min over grid shifts s of max |U(t, x) - U(0, x - s)|.

    Small values indicate travelling-wave (quasi-periodic in t) behaviour; the
    answer is only a diagnostic.  Returns rows (t, shift, discrepancy).
    """
    snaps = history.snapshots if hasattr(history, "snapshots") else list(history)
    base = snaps[0].values
    rows = []
    for grid in snaps:
        errs = [np.max(np.abs(grid.values - np.roll(base, s, axis=0))) for s in range(grid.cells)]
        s = int(np.argmin(errs))
        rows.append((grid.time, s * grid.dx, float(errs[s])))
    return rows
