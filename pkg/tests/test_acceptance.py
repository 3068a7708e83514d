"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""
import json
import math
import time

import numpy as np

from richtorus.cli import main
from richtorus.conservation import claw_residual, default_levels, series_claws, torus_graph
from richtorus.evolution import (
    LAX_FRIEDRICHS,
    UPWIND,
    EvolutionParams,
    InitialDataSpec,
    characteristic_trace,
    evolve,
    make_initial_data,
)
from richtorus.geodesics import HistoryMetric, PerturbedMetric, flat_metric, integrate_geodesic, invariant_drift
from richtorus.spectral import (
    char_poly_coeffs,
    companion_roots,
    dense_eigenvalues,
    invert_riemann_map,
    lemma_discrepancy,
    random_hyperbolic_points,
    random_point,
    random_rich_check_points,
    richness_residual,
    riemann_invariants,
    riemann_jacobian,
    spectrum,
)


def smooth_data(M, amp=(0.05, 0.03, 0.02)):
    modes = tuple(((1, a, phase),) for a, phase in zip(amp, (0.0, 1.0, 0.5)))
    return make_initial_data(InitialDataSpec(means=(0, 0, 1), modes=modes, cells=M))


def test_c01_lemma_identity(acceptance):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for n in range(2, 7):
        for _ in range(1000):
            worst = max(worst, lemma_discrepancy(random_point(rng, n), rng.uniform(-5, 5)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 5.0
    acceptance("1 lemma identity", ok, f"max rel residual {worst:.2e} (<= 1e-9), {elapsed:.2f} s (< 5 s)")
    assert ok


def test_c02_example_conservation_laws(acceptance):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        a0, a1, g = random_point(rng, 3)
        want = np.array(
            [
                1 / (2 * g**2),
                (3 - 2 * a1) / (2 * g**4),
                9 / (8 * g**4) + 5 * (3 - 2 * a1) ** 2 / (8 * g**6) - a0 / g**5,
            ]
        )
        got = series_claws([a0, a1, g], 4).G
        worst = max(worst, float(np.max(np.abs(got - want) / np.abs(want))))
    exact = float(np.max(np.abs(series_claws([0, 0, 1], 4).G - [0.5, 1.5, 6.75])))
    ok = worst <= 1e-9 and exact <= 1e-12
    acceptance("2 n=3 conservation laws", ok, f"max rel error {worst:.2e} (<= 1e-9), at (0,0,1) {exact:.1e} (<= 1e-12)")
    assert ok


def test_c03_eigenvalue_routes(acceptance):
    rng = np.random.default_rng(3)
    worst = 0.0
    for u in random_hyperbolic_points(rng, 3, 1000):
        a = companion_roots(char_poly_coeffs(u)).real
        b = np.sort(dense_eigenvalues(u).real)
        worst = max(worst, float(np.max(np.abs(a - b))))
    lam = spectrum([0, 0, 1]).eigenvalues
    ref = np.sort([(3 - math.sqrt(17)) / 2, 0.0, (3 + math.sqrt(17)) / 2])
    exact = float(np.max(np.abs(lam - ref)))
    ok = worst <= 1e-8 and exact <= 1e-12
    acceptance("3 eigenvalue routes", ok, f"max diff {worst:.2e} (<= 1e-8), at (0,0,1) {exact:.1e} (<= 1e-12)")
    assert ok


def test_c04_riemann_machinery(acceptance):
    rng = np.random.default_rng(4)
    fd_err, trip = 0.0, 0.0
    h = 1e-6
    for u in random_hyperbolic_points(rng, 3, 100):
        J = riemann_jacobian(u)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd = (riemann_invariants(u + e) - riemann_invariants(u - e)) / (2 * h)
            fd_err = max(fd_err, float(np.max(np.abs(fd - J[:, k]))))
        d = rng.standard_normal(3)
        back = invert_riemann_map(riemann_invariants(u), u + 1e-2 * d / np.linalg.norm(d))
        trip = max(trip, float(np.max(np.abs(back - u))))
    ok = fd_err <= 1e-6 and trip <= 1e-10
    acceptance("4 Riemann machinery", ok, f"Jacobian vs FD {fd_err:.2e} (<= 1e-6), round trip {trip:.2e} (<= 1e-10)")
    assert ok


def test_c05_riemann_transport(acceptance):
    drift = []
    for M in (128, 256, 512):
        h = evolve(smooth_data(M), EvolutionParams(scheme=UPWIND, t_end=0.1))
        drift.append(max(characteristic_trace(h, i, x0).drift for i in range(3) for x0 in (0.1, 0.35, 0.6, 0.85)))
    factors = [drift[0] / drift[1], drift[1] / drift[2]]
    ok = min(factors) >= 1.5
    detail = "drift " + ", ".join(f"{d:.2e}" for d in drift) + " factors " + ", ".join(f"{f:.2f}" for f in factors)
    acceptance("5 Riemann transport", ok, detail + " (>= 1.5)")
    assert ok


def test_c06_conservation(acceptance):
    g = make_initial_data(InitialDataSpec(means=(0, 0, 1), modes=(((1, 0.005, 0),), ((2, 0.003, 1.0),)), cells=64))
    h = evolve(g, EvolutionParams(scheme=LAX_FRIEDRICHS, t_end=100.0, max_steps=1000, snapshot_stride=100))
    sums = np.array(h.conserved_sums)
    per_step = float(np.max(np.abs(np.diff(sums, axis=0))))
    steps = len(h.diagnostics)

    c = default_levels(3)
    res = []
    for M in (128, 256):
        hist = evolve(smooth_data(M, (0.05, 0.03, 0.0)), EvolutionParams(t_end=0.05))
        res.append(float(np.max(np.abs(claw_residual(hist, c)))))
    claw_factor = res[0] / res[1]

    u = [0.3, -0.2, 1.1]
    eps = np.array([0.02, 0.01, 0.005, 0.0025])
    slopes = {}
    for K in (3, 4, 5):
        claws = series_claws(u, K)
        err = [abs(claws.p_value(-e) - torus_graph(u, 1 - e)) for e in eps]
        slopes[K] = float(np.polyfit(np.log(eps), np.log(err), 1)[0])
    slope_ok = all(s >= K + 0.5 for K, s in slopes.items())

    ok = steps == 1000 and per_step <= 1e-12 and claw_factor >= 1.5 and slope_ok
    detail = (
        f"sum change {per_step:.1e}/step over {steps} steps (<= 1e-12), claw residual factor {claw_factor:.2f} (>= 1.5), "
        "eps slopes " + ", ".join(f"K={K}: {s:.2f}" for K, s in slopes.items()) + " (>= K+0.5)"
    )
    acceptance("6 conservation", ok, detail)
    assert ok


def test_c07_richness(acceptance):
    h = 1e-3
    worst, worst_half, worst_raw = 0.0, 0.0, 0.0
    for n in (3, 4):
        for u in random_rich_check_points(np.random.default_rng(70 + n), n, 50, h=h):
            worst = max(worst, max(abs(v) for v in richness_residual(u, h, scaled=True).values()))
            worst_half = max(worst_half, max(abs(v) for v in richness_residual(u, h / 2, scaled=True).values()))
            worst_raw = max(worst_raw, max(abs(v) for v in richness_residual(u, h).values()))
    ratio = worst / worst_half
    ok = worst <= 1e-4 and ratio >= 3.0
    acceptance(
        "7 richness",
        ok,
        f"scaled residual {worst:.2e} (<= 1e-4), raw {worst_raw:.2e}, halving ratio {ratio:.2f} (>= 3), 100 points",
    )
    assert ok


def test_c08_geodesic_certificate(acceptance):
    flat = invariant_drift(integrate_geodesic(flat_metric(), (0.0, 0.3, 0.4), 10.0, 1e-3))
    flat_ok = flat["maxH"] <= 1e-12 and flat["maxF"] <= 1e-12

    drifts = []
    control = None
    for M in (128, 256, 512):
        modes = (((1, 0.02, 0.0),), ((1, 0.02, 0.5),), ((1, 0.02, 1.0),))
        init = make_initial_data(InitialDataSpec(means=(0, 0, 1), modes=modes, cells=M))
        hist = evolve(init, EvolutionParams(t_end=0.2))
        metric = HistoryMetric(hist)
        tr = integrate_geodesic(metric, (0.0, 0.3, 0.4), 1.0, 1e-3 * 128 / M)
        drifts.append(invariant_drift(tr)["maxF"])
        if M == 128:
            control = invariant_drift(tr, PerturbedMetric(metric, 0, 1e-2))["maxF"]
    shrinking = drifts[0] > drifts[1] > drifts[2]
    ok = flat_ok and drifts[-1] <= 1e-5 and shrinking and control > 1e-3
    detail = (
        f"flat H {flat['maxH']:.1e} F {flat['maxF']:.1e} (<= 1e-12); evolved F "
        + ", ".join(f"{d:.2e}" for d in drifts)
        + f" (finest <= 1e-5, shrinking); perturbed {control:.2e} (> 1e-3)"
    )
    acceptance("8 geodesic certificate", ok, detail)
    assert ok


def test_c09_scheme_cross_validation(acceptance):
    disc = []
    for M in (128, 256, 512):
        a = evolve(smooth_data(M), EvolutionParams(scheme=UPWIND, t_end=0.1)).snapshots[-1]
        b = evolve(smooth_data(M), EvolutionParams(scheme=LAX_FRIEDRICHS, t_end=0.1)).snapshots[-1]
        disc.append(float(np.max(np.abs(a.values - b.values))))
    order = math.log2(disc[0] / disc[2]) / 2

    times = []
    for M in (128, 256):
        g = make_initial_data(InitialDataSpec(means=(0, 0, 1), modes=(((1, 0.05, 0),),), cells=M))
        hist = evolve(g, EvolutionParams(t_end=10.0, blowup_factor=10.0, snapshot_stride=1000))
        times.append(hist.blowup_time)
    rel = abs(times[0] - times[1]) / times[1] if None not in times else math.inf
    ok = order >= 0.8 and rel <= 0.1
    detail = (
        "sup-norm gap " + ", ".join(f"{d:.2e}" for d in disc) + f" order {order:.2f} (>= 0.8); "
        f"blow-up t* {times[0]:.3f} vs {times[1]:.3f}, {100 * rel:.1f}% (<= 10%)"
    )
    acceptance("9 scheme cross-validation", ok, detail)
    assert ok


RUNS = [
    (["validate", "--samples", "200", "--seed", "7"], None),
    (["spectrum"], {"initial": {"modes": [[[1, 0.05, 0]], [], []]}, "grid": {"M": 32}}),
    (["claws", "--point", "0,0,1", "--order", "5"], {"evolution": {"grid": {"M": 32}, "t_end": 0.01}}),
    (["evolve", "--scheme", LAX_FRIEDRICHS], {"grid": {"M": 32}, "initial": {"modes": [[[1, 0.02, 0]], [], []]}}),
    (["trace"], {"evolution": {"grid": {"M": 32}, "initial": {"modes": [[[1, 0.02, 0]], [], []]}, "t_end": 0.05}}),
    (
        ["geodesics"],
        {
            "metric": "evolved",
            "evolution": {"grid": {"M": 32}, "initial": {"modes": [[[1, 0.02, 0]], [], []]}, "t_end": 0.1},
            "tau_span": 0.5,
            "reduced": True,
            "perturbation": {"field": 0},
        },
    ),
    (["gn-scan", "--samples", "5", "--seed", "11"], None),
    (["rich-check", "--samples", "3", "--seed", "13"], None),
]


def test_c10_cli_determinism(acceptance, tmp_path):
    mismatched = []
    files = 0
    for idx, (argv, cfg) in enumerate(RUNS):
        extra = []
        if cfg is not None:
            path = tmp_path / f"cfg{idx}.json"
            path.write_text(json.dumps(cfg))
            extra = ["--config", str(path)]
        trees = []
        for rep in ("a", "b"):
            out = tmp_path / f"{idx}{rep}"
            assert main(argv + extra + ["--out", str(out)]) == 0
            trees.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        files += len(trees[0])
        if trees[0] != trees[1]:
            mismatched.append(argv[0])
    ok = not mismatched
    detail = f"{len(RUNS)} commands, {files} files byte-identical" if ok else "differs: " + ", ".join(mismatched)
    acceptance("10 CLI determinism", ok, detail)
    assert ok

