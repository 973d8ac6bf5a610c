"""End-to-end acceptance checks.

Each test records one PASS/FAIL line; ``conftest.py`` prints them in the
terminal summary. Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import itertools
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from mppc_g2.cli import main as cli_main
from mppc_g2.detector import DetectorConfig, occupancy_pmf, simulate_hbt, simulate_histogram
from mppc_g2.estimator import (
    estimate_g,
    g_from_probabilities,
    hbt_g2,
    predict_g2_crosstalk,
)
from mppc_g2.fitting import CurvePoint, evaluate_model, lm_fit
from mppc_g2.ingest import write_amplitudes
from mppc_g2.sources import Coherent, DegenerateSqueezedSupermode, analytic_g, with_mean
from mppc_g2.sweep import RunConfig, correct_curve, run_sweep

pytestmark = [
    pytest.mark.acceptance,
    pytest.mark.filterwarnings("ignore::mppc_g2.errors.ModelValidityWarning"),
]

P_TRUE = 0.177
ETA = 0.41
S = 1_000_000
FULL_GRID = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0)
# Low-photon part of the grid, where k*P <= 1 holds for nearly every gate.
LINEAR_GRID = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0)

RESULTS = {}


def record(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def zscores(values, truth, sigmas):
    return [(v - t) / s for v, t, s in zip(values, truth, sigmas)]


@pytest.fixture(scope="module")
def coherent_sweep():
    # Dark-free so the check isolates the crosstalk law.
    cfg = RunConfig(Coherent(1.0), DetectorConfig(dark_mean=0.0), trials=S, seed=101,
                    mu_grid=FULL_GRID, resamples=500)
    t0 = time.perf_counter()
    sweep = run_sweep(cfg)
    return sweep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def calibration(coherent_sweep):
    return lm_fit("crosstalk_ref", coherent_sweep[0].curve)


@pytest.fixture(scope="module")
def squeezed_sweep():
    cfg = RunConfig(DegenerateSqueezedSupermode(1.0), DetectorConfig(), trials=S, seed=103,
                    mu_grid=LINEAR_GRID, resamples=500, hbt=True)
    return run_sweep(cfg)


def test_criterion_01_crosstalk_law(coherent_sweep):
    sweep, elapsed = coherent_sweep
    curve = sweep.curve
    pred = [predict_g2_crosstalk(1.0, p.mu, P_TRUE) for p in curve]
    z = zscores([p.g for p in curve], pred, [p.sigma for p in curve])
    ok = all(abs(x) < 3 for x in z) and elapsed < 120
    sat = [sp.event_linear_saturated for sp in sweep.points]
    detail = ", ".join(f"mu={p.mu:.3g}:{x:+.2f}sd" for p, x in zip(curve, z))
    assert record(1, ok, f"[{detail}] saturated gates {sat}; {elapsed:.1f}s")


def test_criterion_02_calibration(calibration):
    p, sp = calibration.params[0], calibration.std_errors[0]
    ok = abs(p - P_TRUE) <= 0.010 and calibration.cod_r2 > 0.97 and calibration.converged
    assert record(2, ok, f"P = {p:.4f} +- {sp:.4f}, COD = {calibration.cod_r2:.4f}")


def test_criterion_03_correction(calibration, squeezed_sweep):
    p = calibration.params[0]
    fit = lm_fit("hyperbola", correct_curve(squeezed_sweep.curve, p))
    (a, b), (sa, sb) = fit.params, fit.std_errors
    ok = abs(a - 1) <= 0.03 and abs(b - ETA) <= 0.1 * ETA and fit.converged
    assert record(3, ok, f"A = {a:.4f} +- {sa:.4f}, B = {b:.4f} +- {sb:.4f} (B_true {ETA}), P used {p:.4f}")


def test_criterion_04_hbt_agreement(calibration, squeezed_sweep):
    corrected = correct_curve(squeezed_sweep.curve, calibration.params[0])
    hbt = squeezed_sweep.hbt_curve
    z = [(c.g - h.g) / math.hypot(c.sigma, h.sigma) for c, h in zip(corrected, hbt)]
    agree = len(z) == len(corrected) and all(abs(x) < 3 for x in z)
    flat = []
    for i, mean in enumerate((0.5, 1.0, 2.0, 5.0)):
        est = hbt_g2(simulate_hbt(Coherent(mean), 0.5, S, seed=104 + i))
        flat.append(est.g)
    flat_ok = all(abs(g - 1) <= 0.03 for g in flat)
    detail = ("MPPC-HBT " + ", ".join(f"{x:+.2f}sd" for x in z)
              + "; coherent HBT " + ", ".join(f"{g:.4f}" for g in flat))
    assert record(4, agree and flat_ok, detail)


def test_criterion_05_efficiency_invariance():
    lines, ok = [], True
    for spec in (Coherent(2.0), DegenerateSqueezedSupermode(1.0)):
        ests = []
        for i, eta in enumerate((1.0, 0.5, 0.1)):
            det = DetectorConfig(efficiency=eta, dark_mean=0.0, crosstalk_mode="off")
            ests.append(estimate_g(simulate_histogram(spec, det, S, seed=110 + i), resamples=500, seed=120 + i))
        for a, b in itertools.combinations(ests, 2):
            ok &= abs(a.g - b.g) < 3 * math.hypot(a.std_error, b.std_error)
        lines.append(f"{type(spec).__name__}: " + ", ".join(f"{e.g:.4f}+-{e.std_error:.4f}" for e in ests))
    assert record(5, ok, "; ".join(lines))


def brute_force_g(weights, m):
    """Exact-m estimator on the exact k distribution, found by listing every pixel assignment."""
    dist = {}
    for n, w in weights.items():
        for assignment in itertools.product(range(m), repeat=n):
            k = len(set(assignment))
            dist[k] = dist.get(k, 0) + Fraction(w) / m**n
    mean = sum(k * q for k, q in dist.items())
    pairs = sum(math.comb(k, 2) * q for k, q in dist.items())
    return float(Fraction(m**2) * pairs / (math.comb(m, 2) * mean**2))


def test_criterion_06_exact_m_oracle():
    m = 4
    cases = {f"n={n}": {n: 1} for n in range(1, 5)}
    cases["uniform 0-4"] = {n: Fraction(1, 5) for n in range(5)}
    cases["mixture"] = {1: Fraction(1, 2), 2: Fraction(1, 4), 3: Fraction(1, 8), 4: Fraction(1, 8)}
    worst = 0.0
    for weights in cases.values():
        p = np.zeros(m + 1)
        for n, w in weights.items():
            occ = occupancy_pmf(n, m)
            p[: occ.size] += float(w) * occ
        worst = max(worst, abs(g_from_probabilities(p, 2, m, "exact_m") - brute_force_g(weights, m)))
    assert record(6, worst <= 1e-10, f"max |difference| = {worst:.2e} over {len(cases)} photon distributions")


def test_criterion_07_dark_residual():
    worst, ok = 0.0, True
    for spec in (Coherent(1.0), DegenerateSqueezedSupermode(1.0)):
        runs = []
        for dark in (0.0, 1.25e-3):
            cfg = RunConfig(spec, DetectorConfig(dark_mean=dark), trials=S, seed=130,
                            mu_grid=FULL_GRID, resamples=100)
            runs.append(run_sweep(cfg).curve)
        for clean, dirty in zip(*runs):
            rel = abs(dirty.g / clean.g - 1)
            worst = max(worst, rel)
            ok &= rel < 0.01
    assert record(7, ok, f"max relative difference {worst:.2e} over mu >= 0.05, coherent and squeezed")


def test_criterion_08_third_order():
    det = DetectorConfig(dark_mean=0.0, crosstalk_mode="off")
    out, ok = [], True
    for i, base in enumerate((Coherent(1.0), DegenerateSqueezedSupermode(1.0))):
        spec = with_mean(base, 1.0 / ETA)
        hist = simulate_histogram(spec, det, 10 * S, seed=140 + i)
        est = estimate_g(hist, l=3, resamples=300, seed=150 + i)
        truth = analytic_g(spec, 3)
        ok &= abs(est.g - truth) < 3 * est.std_error
        out.append(f"{type(base).__name__} g3 = {est.g:.4f} +- {est.std_error:.4f} (oracle {truth:.4f}, mu {est.mu:.3f})")
    assert record(8, ok, "; ".join(out))


def test_criterion_09_fitter_coverage():
    rng = np.random.default_rng(160)
    mu = np.array([0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0])
    truth = np.array([1.0, 0.41])
    sigma = 0.02 * (1 + 0.2 / mu)
    clean = evaluate_model("hyperbola", truth, mu)
    inside = np.zeros(2)
    for _ in range(500):
        g = clean + rng.normal(0, sigma)
        fit = lm_fit("hyperbola", [CurvePoint(*x) for x in zip(mu, g, sigma)])
        inside += np.abs(np.array(fit.params) - truth) <= 2 * np.array(fit.std_errors)
    coverage = inside / 500
    exact = lm_fit("hyperbola", [CurvePoint(*x) for x in zip(mu, clean, sigma)])
    err = np.max(np.abs(np.array(exact.params) - truth))
    ok = np.all(coverage >= 0.9) and err <= 1e-9
    assert record(9, ok, f"coverage A {coverage[0]:.3f}, B {coverage[1]:.3f}; noiseless error {err:.1e}")


def test_criterion_10_cli_determinism(tmp_path):
    cfg = {"source": {"kind": "degenerate_squeezed_supermode", "mu_pairs": 0.5},
           "trials": 20_000, "mu_grid": [0.2, 0.5, 1.0], "resamples": 100}
    ref = {**cfg, "source": {"kind": "coherent", "mu": 1.0}}
    (tmp_path / "sub.json").write_text(json.dumps(cfg))
    (tmp_path / "ref.json").write_text(json.dumps(ref))
    write_amplitudes(tmp_path / "amps.csv", np.random.default_rng(170).uniform(0, 40, 500))
    d = str(tmp_path) + "/"
    commands = {
        "simulate": ["simulate", "--config", d + "sub.json", "--seed", "5", "--out", d + "h.csv",
                     "--dark-out", d + "dk.csv"],
        "sweep": ["sweep", "--config", d + "sub.json", "--seed", "5", "--hbt", "--out", d + "c.csv",
                  "--hbt-out", d + "hbt.csv", "--report", d + "r.json"],
        "estimate": ["estimate", d + "h.csv", "--dark", d + "dk.csv", "--seed", "5", "--out", d + "e.json"],
        "fit": ["fit", d + "c.csv", "--out", d + "f.json"],
        "pipeline": ["pipeline", "--reference-config", d + "ref.json", "--subject-config", d + "sub.json",
                     "--seed", "5", "--out", d + "p.json", "--corrected-out", d + "pc.csv"],
        "discretize": ["discretize", d + "amps.csv", "--unit", "10", "--out", d + "a.csv"],
    }
    snapshots = []
    for _ in range(2):
        codes = {name: cli_main(argv) for name, argv in commands.items()}
        files = sorted(p for p in tmp_path.iterdir() if p.suffix in (".csv", ".json") and p.stem not in ("sub", "ref", "amps"))
        snapshots.append((codes, {p.name: p.read_bytes() for p in files}))
        for p in files:
            p.unlink()
    (codes, first), (_, second) = snapshots
    ok = all(c == 0 for c in codes.values()) and first == second and len(first) >= 12
    assert record(10, ok, f"{len(commands)} subcommands, {len(first)} output files byte-identical across reruns")
