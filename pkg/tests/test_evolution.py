import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from richtorus.core import FieldGrid, build_matrix, centered_dx
from richtorus.errors import ArityError, ClassificationError, ConfigError, RejectedSpecError
from richtorus.evolution import (
    BLOWUP,
    HYPERBOLICITY_LOST,
    LAX_FRIEDRICHS,
    REACHED_END,
    SCHEMES,
    UPWIND,
    EvolutionParams,
    HistoryInterpolator,
    InitialDataSpec,
    best_shift_discrepancy,
    characteristic_trace,
    evolve,
    make_initial_data,
    max_gradient,
    step,
)
from richtorus.spectral import dense_eigenvalues

SMOOTH_MODES = (((1, 0.05, 0.0),), ((1, 0.03, 1.0),), ((1, 0.02, 0.5),))


def smooth(M, modes=SMOOTH_MODES):
    return make_initial_data(InitialDataSpec(means=(0, 0, 1), modes=modes, cells=M))


class TestParams:
    @pytest.mark.parametrize(
        "kw",
        [
            {"scheme": "weno"},
            {"cfl": 0.0},
            {"cfl": 1.5},
            {"blowup_gradient_cap": 0.0},
            {"hyperbolicity_policy": "ignore"},
            {"snapshot_stride": 0},
            {"t_end": -1.0},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            EvolutionParams(**kw)

    def test_level_count(self):
        with pytest.raises(ConfigError):
            EvolutionParams(levels=(0.9, 0.8)).level_set(3)


class TestInitialData:
    def test_shape_and_centres(self):
        g = smooth(32)
        assert g.values.shape == (32, 3)
        assert np.allclose(g.x, (np.arange(32) + 0.5) / 32)
        assert g.values[:, 0] == pytest.approx(0.05 * np.sin(2 * np.pi * g.x))

    def test_g_crossing_zero(self):
        with pytest.raises(RejectedSpecError) as info:
            make_initial_data(InitialDataSpec(means=(0, 0, 0.5), modes=((), (), ((1, 0.8, 0.0),)), cells=32))
        assert info.value.cell is not None

    def test_non_hyperbolic_rejected(self):
        # (a0, a1) = (4, 0) at g = 1 has complex eigenvalues
        with pytest.raises(RejectedSpecError):
            make_initial_data(InitialDataSpec(means=(4.0, 0.0, 1.0), cells=16))

    def test_steep_data_accepted(self):
        g = make_initial_data(InitialDataSpec(means=(0, 0, 1), modes=(((1, 0.05, 0),),), cells=128))
        lam = np.sort(dense_eigenvalues(g.values).real, axis=-1)
        assert np.min(np.diff(lam, axis=-1)) > 0.1

    def test_too_few_cells(self):
        with pytest.raises(RejectedSpecError):
            make_initial_data(InitialDataSpec(means=(0, 0, 1), cells=4))


class TestStep:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_constant_is_fixed(self, scheme):
        g = FieldGrid(np.tile([0.1, -0.2, 1.0], (32, 1)))
        out = step(g, EvolutionParams(scheme=scheme))
        assert np.max(np.abs(out.values - g.values)) <= 1e-14
        assert out.time > 0

    def test_cfl_dt(self):
        g = FieldGrid(np.tile([0.0, 0.0, 1.0], (64, 1)))
        max_lam = np.max(np.abs(dense_eigenvalues([0.0, 0.0, 1.0]).real))
        assert max_lam == pytest.approx(3.5616, abs=1e-4)
        assert step(g, EvolutionParams()).time == pytest.approx(0.9 * g.dx / max_lam, rel=1e-12)

    def test_schemes_agree_one_step(self):
        # both are consistent first-order schemes: one-step difference is O(dx dt)
        diffs = []
        for M in (64, 128, 256):
            g = smooth(M)
            dt = 0.5 * g.dx / 3.6
            a = step(g, EvolutionParams(scheme=UPWIND), dt)
            b = step(g, EvolutionParams(scheme=LAX_FRIEDRICHS), dt)
            diffs.append(np.max(np.abs(a.values - b.values)))
        assert diffs[0] / diffs[1] >= 1.5 and diffs[1] / diffs[2] >= 1.5

    def test_upwind_needs_hyperbolic(self):
        with pytest.raises(ClassificationError):
            step(FieldGrid(np.tile([4.0, 0.0, 1.0], (16, 1))), EvolutionParams())

    def test_quasilinear_consistency(self):
        # one accepted step satisfies U_t + A U_x = O(dx) at the midpoint
        res = []
        for M in (128, 256):
            g = smooth(M)
            new = step(g, EvolutionParams())
            dt = new.time - g.time
            mid = 0.5 * (g.values + new.values)
            Ux = centered_dx(mid, g.dx)
            r = (new.values - g.values) / dt + np.einsum("mij,mj->mi", build_matrix(mid), Ux)
            res.append(np.max(np.abs(r)))
        assert res[0] / res[1] >= 1.5


class TestEvolve:
    def test_constant_reaches_end(self):
        g = FieldGrid(np.tile([0.0, 0.0, 1.0], (32, 1)))
        for scheme in SCHEMES:
            h = evolve(g, EvolutionParams(scheme=scheme, t_end=0.05))
            assert h.termination == REACHED_END
            assert h.t_final == pytest.approx(0.05, abs=1e-14)
            assert np.max(np.abs(h.snapshots[-1].values - g.values)) <= 1e-13

    def test_times_monotone_and_stride(self):
        h = evolve(smooth(64), EvolutionParams(t_end=0.05, snapshot_stride=3))
        assert np.all(np.diff(h.times) > 0)
        assert h.times[-1] == h.t_final
        assert len(h.snapshots) == 1 + int(np.ceil(len(h.diagnostics) / 3))

    def test_diagnostics_fields(self):
        h = evolve(smooth(64), EvolutionParams(t_end=0.02))
        d = h.diagnostics[0]
        assert set(d) == {"step", "t", "dt", "max_lambda", "min_gap", "max_grad", "class_counts"}
        assert d["class_counts"]["strictly-hyperbolic"] == 64
        assert d["dt"] == pytest.approx(0.9 * (1 / 64) / d["max_lambda"])

    def test_lf_sums_exact(self):
        g = make_initial_data(InitialDataSpec(means=(0, 0, 1), modes=(((1, 0.005, 0),), ((2, 0.003, 1.0),)), cells=64))
        h = evolve(g, EvolutionParams(scheme=LAX_FRIEDRICHS, t_end=1.0))
        s = np.array(h.conserved_sums)
        assert len(s) == len(h.diagnostics) + 1
        assert np.max(np.abs(np.diff(s, axis=0))) <= 1e-12

    def test_blowup_stops_snapshots(self):
        g = make_initial_data(InitialDataSpec(means=(0, 0, 1), modes=(((1, 0.05, 0),),), cells=64))
        h = evolve(g, EvolutionParams(t_end=10.0, blowup_factor=10.0))
        assert h.termination == BLOWUP
        assert h.blowup_time is not None
        assert h.snapshots[-1].time <= h.blowup_time
        assert h.snapshots[-1].time == h.t_final
        assert max_gradient(h.snapshots[-1].values, g.dx) <= 10 * max_gradient(g.values, g.dx)

    def test_absolute_cap(self):
        g = smooth(64)
        h = evolve(g, EvolutionParams(t_end=1.0, blowup_gradient_cap=1.1 * max_gradient(g.values, g.dx)))
        assert h.termination == BLOWUP

    def test_hyperbolicity_halt(self):
        # a grid that is hyperbolic in half the cells only
        vals = np.tile([0.0, 0.0, 1.0], (16, 1))
        vals[8:, 0] = 4.0
        h = evolve(FieldGrid(vals), EvolutionParams(scheme=LAX_FRIEDRICHS, t_end=0.1))
        assert h.termination == HYPERBOLICITY_LOST
        assert len(h.snapshots) == 1

    def test_deterministic(self):
        a = evolve(smooth(64), EvolutionParams(scheme=LAX_FRIEDRICHS, t_end=0.03))
        b = evolve(smooth(64), EvolutionParams(scheme=LAX_FRIEDRICHS, t_end=0.03))
        assert all(np.array_equal(x.values, y.values) for x, y in zip(a.snapshots, b.snapshots))

    def test_schemes_converge_together(self):
        d = []
        for M in (64, 128, 256):
            u = evolve(smooth(M), EvolutionParams(scheme=UPWIND, t_end=0.05)).snapshots[-1]
            f = evolve(smooth(M), EvolutionParams(scheme=LAX_FRIEDRICHS, t_end=0.05)).snapshots[-1]
            d.append(np.max(np.abs(u.values - f.values)))
        assert np.log2(d[0] / d[2]) / 2 >= 0.8


class TestInterpolator:
    def test_reproduces_nodes(self):
        h = evolve(smooth(32), EvolutionParams(t_end=0.02))
        I = HistoryInterpolator(h)
        s = h.snapshots[1]
        assert np.allclose(I(s.time, s.x[5]), s.values[5], atol=1e-15)
        assert np.allclose(I(s.time, s.x[5] + 1.0), s.values[5], atol=1e-13)

    def test_empty(self):
        with pytest.raises(ArityError):
            HistoryInterpolator([])

    @given(st.floats(0, 1), st.integers(-2, 2))
    def test_linear_in_x_between_centres(self, w, wrap):
        g = smooth(16)
        I = HistoryInterpolator([g])
        want = (1 - w) * g.values[3] + w * g.values[4]
        assert np.allclose(I(0.0, g.x[3] + w * g.dx + wrap * g.period), want, atol=1e-13)


class TestTrace:
    def test_constant_background(self):
        g = FieldGrid(np.tile([0.0, 0.0, 1.0], (32, 1)))
        h = evolve(g, EvolutionParams(t_end=0.1))
        lam = np.sort(dense_eigenvalues([0.0, 0.0, 1.0]).real)
        for i in range(3):
            tr = characteristic_trace(h, i, 0.3)
            assert tr.drift <= 1e-13
            assert tr.x[-1] - tr.x[0] == pytest.approx(lam[i] * h.t_final, rel=1e-10)
            assert not tr.truncated

    def test_bad_index(self):
        h = evolve(smooth(16), EvolutionParams(t_end=0.01))
        with pytest.raises(ArityError):
            characteristic_trace(h, 3, 0.2)
        with pytest.raises(ArityError):
            characteristic_trace(h, -1, 0.2)

    def test_drift_refines(self):
        drift = []
        for M in (128, 256):
            h = evolve(smooth(M), EvolutionParams(t_end=0.1))
            drift.append(max(characteristic_trace(h, i, x0).drift for i in range(3) for x0 in (0.1, 0.6)))
        assert drift[1] <= 5e-3
        assert drift[0] / drift[1] >= 1.5

    def test_truncates_outside_hyperbolic(self):
        vals = np.tile([0.0, 0.0, 1.0], (16, 1))
        vals[8:, 0] = 4.0
        hist = [FieldGrid(vals, 0.0), FieldGrid(vals, 0.5)]
        tr = characteristic_trace(hist, 2, 0.2)
        assert tr.truncated
        assert tr.t.size == 1


class TestBestShift:
    def test_travelling_constant(self):
        h = evolve(FieldGrid(np.tile([0.0, 0.0, 1.0], (16, 1))), EvolutionParams(t_end=0.02))
        rows = best_shift_discrepancy(h)
        assert rows[0] == (0.0, 0.0, 0.0)
        assert all(r[2] <= 1e-13 for r in rows)

    def test_rolled_grid(self):
        g = smooth(16)
        rolled = FieldGrid(np.roll(g.values, 3, axis=0), 0.1)
        t, s, err = best_shift_discrepancy([g, rolled])[1]
        assert s == pytest.approx(3 * g.dx)
        assert err == 0.0
