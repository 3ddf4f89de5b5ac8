"""Exit criteria, each at its stated tolerance and runtime limit.

Every test carries an ``acceptance`` marker; the terminal summary prints
one PASS/FAIL line per criterion. Criteria that depend on the closed-form
variance for ``k >= 2`` are expected to fail: the exact oracle, the
stationary autocorrelation solution and plain simulation agree on a
different limit (see ``README.md``).
"""

import io
import math
import os
import time
import warnings

import numba
import numpy as np
import pytest
from scipy.special import ndtr

from ksumwalk.cli import main
from ksumwalk.closed_form import sigma2_ksum, sigma2_stationary, variance_general_branch
from ksumwalk.mc import (
    SimulationConfig,
    SummaryStats,
    elephant_adjudication,
    fclt_report,
    ks_statistic,
    lil_report,
    simulate_statistics,
)
from ksumwalk.model import Elephant, KSum, Minimal, ModelParams, canonical_params
from ksumwalk.oracle import (
    exact_martingale_audit,
    exact_pmf,
    exact_pmf_elephant,
    exact_pmf_minimal,
    variance_trajectory,
)

pytestmark = pytest.mark.slow

SEED = 20240611


def _fmt(parts):
    return "; ".join(f"{name}: {msg}" for name, ok, msg in parts if not ok)


@pytest.mark.acceptance("C1 formula reductions")
def test_c1_formula_reductions():
    t0 = time.perf_counter()
    parts = []
    worst = 0.0
    for p in np.linspace(0.05, 0.95, 10):
        for theta in np.linspace(0.01, 0.91, 10):
            if abs(theta - 0.5) < 1e-3:
                continue
            expected = p * (1 - p) * (1 + theta) / (1 - theta)
            worst = max(worst, abs(variance_general_branch(p, theta, 1) - expected) / expected)
    parts.append(("k=1 reduction", worst <= 1e-10, f"max rel {worst:.2e}"))
    exact = all(sigma2_ksum(p, 0.0, k).sigma2 == p * (1 - p) for p in (0.1, 0.3, 0.5, 0.9) for k in (1, 2, 5, 16))
    parts.append(("theta=0 exact", exact, "not exact"))
    cont = 0.0
    for k in range(2, 11):
        mid = sigma2_ksum(0.5, 0.5, k).sigma2
        for theta in (0.5 - 1e-7, 0.5 + 1e-7):
            cont = max(cont, abs(sigma2_ksum(0.5, theta, k).sigma2 - mid) / mid)
    parts.append(("continuity", cont <= 1e-5, f"max rel {cont:.2e}"))
    elapsed = time.perf_counter() - t0
    parts.append(("runtime", elapsed < 1.0, f"{elapsed:.2f}s"))
    print(f"k=1 max rel {worst:.2e}, continuity max rel {cont:.2e}, {elapsed:.3f}s")
    assert all(ok for _, ok, _ in parts), _fmt(parts)


@pytest.mark.acceptance("C2 oracle vs closed form")
def test_c2_oracle_vs_closed_form():
    t0 = time.perf_counter()
    parts = []
    for p, theta, k in [(0.5, 0.3, 2), (0.3, 0.5, 3), (0.7, 0.6, 4)]:
        traj = variance_trajectory(ModelParams(p, theta, k), 2000)
        target = sigma2_ksum(p, theta, k).sigma2
        dev500, dev2000 = abs(traj[499] - target), abs(traj[1999] - target)
        rel = dev2000 / target
        print(
            f"({p}, {theta}, {k}): exact {traj[1999]:.6f} closed form {target:.6f} rel {rel:.4f} "
            f"dev500 {dev500:.2e} dev2000 {dev2000:.2e} stationary {sigma2_stationary(p, theta, k):.6f}"
        )
        parts.append((f"({p},{theta},{k}) within 2%", rel <= 0.02, f"rel {rel:.4f}"))
        parts.append((f"({p},{theta},{k}) converging", dev2000 < dev500, f"{dev500:.2e} -> {dev2000:.2e}"))
    elapsed = time.perf_counter() - t0
    parts.append(("runtime", elapsed < 120.0, f"{elapsed:.1f}s"))
    assert all(ok for _, ok, _ in parts), _fmt(parts)


@pytest.mark.acceptance("C3 martingale audit")
def test_c3_martingale_audit():
    t0 = time.perf_counter()
    parts = []
    for k in range(1, 9):
        for p, theta in [(0.5, 0.0), (0.2113248654, 0.3), (0.5, 0.5), (0.8, 0.95)]:
            audit = exact_martingale_audit(ModelParams(p, theta, k), 200)
            label = f"({p},{theta},{k})"
            parts.append((label + " mean", audit.max_abs_mean <= 1e-14, f"{audit.max_abs_mean:.2e}"))
            parts.append((label + " second", audit.max_second <= 0.25 + 1e-12, f"{audit.max_second!r}"))
            parts.append((label + " fourth", audit.max_fourth <= 1 / 12 + 1e-12, f"{audit.max_fourth!r}"))
    elapsed = time.perf_counter() - t0
    parts.append(("runtime", elapsed < 30.0, f"{elapsed:.1f}s"))
    assert all(ok for _, ok, _ in parts), _fmt(parts)


@pytest.fixture(scope="module")
def endpoint_run():
    """One simulation at (0.5, 0.5, 2), n=5000, 1e5 paths, shared by C4 and C6."""
    config = SimulationConfig(paths=100_000, n=5000, master_seed=SEED, model=KSum(0.5, 0.5, 2), grid=(1.0,))
    t0 = time.perf_counter()
    samples = simulate_statistics(config)
    return config, samples, time.perf_counter() - t0


@pytest.mark.acceptance("C4 endpoint CLT")
def test_c4_endpoint_clt(endpoint_run):
    config, samples, sim_time = endpoint_run
    t0 = time.perf_counter()
    x = samples[:, config.column_names().index("rate@1")]
    stats = SummaryStats.from_samples(x[:, None], ["rate"])
    var, var_se = float(stats.variance()[0]), float(stats.variance_se()[0])
    z = (var - 0.8125) / var_se
    standardized = (x - stats.mean[0]) / math.sqrt(var)
    ks = ks_statistic(standardized, ndtr)
    skew, kurt = float(stats.skewness()[0]), float(stats.excess_kurtosis()[0])
    elapsed = sim_time + time.perf_counter() - t0
    print(
        f"variance {var:.5f} (se {var_se:.5f}, z {z:+.2f} vs 0.8125; stationary {sigma2_stationary(0.5, 0.5, 2):.5f}) "
        f"ks {ks:.4f} skew {skew:+.4f} exkurt {kurt:+.4f} {elapsed:.1f}s"
    )
    parts = [
        ("variance", abs(z) <= 4.0, f"{var:.5f} is {z:+.2f} SE from 0.8125"),
        ("ks", ks <= 0.015, f"{ks:.4f}"),
        ("skewness", abs(skew) <= 0.05, f"{skew:+.4f}"),
        ("kurtosis", abs(kurt) <= 0.1, f"{kurt:+.4f}"),
        ("runtime", elapsed < 180.0, f"{elapsed:.1f}s"),
    ]
    assert all(ok for _, ok, _ in parts), _fmt(parts)


@pytest.mark.acceptance("C5 FCLT covariance")
def test_c5_fclt_covariance():
    t0 = time.perf_counter()
    config = SimulationConfig(
        paths=50_000, n=8000, master_seed=SEED + 5, model=KSum(0.5, 0.3, 2), grid=(0.25, 0.5, 1.0)
    )
    report = fclt_report(config)
    ratios = {c.name: c.estimate for c in report.checks if c.name.startswith("fclt.cov")}
    elapsed = time.perf_counter() - t0
    print(", ".join(f"{k} {v:.4f}" for k, v in ratios.items()), f"{elapsed:.1f}s")
    parts = [(name, 0.93 <= r <= 1.07, f"{r:.4f}") for name, r in ratios.items()]
    parts.append(("six pairs", len(ratios) == 6, f"{len(ratios)} pairs"))
    parts.append(("runtime", elapsed < 180.0, f"{elapsed:.1f}s"))
    assert all(ok for _, ok, _ in parts), _fmt(parts)


@pytest.mark.acceptance("C6 center of mass")
def test_c6_center_of_mass(endpoint_run):
    config, samples, sim_time = endpoint_run
    t0 = time.perf_counter()
    n, p = config.n, config.params.p
    x = samples[:, config.column_names().index("com")]  # sqrt(n) (C_n/n - p/2)
    stats = SummaryStats.from_samples(x[:, None], ["com"])
    mean = p / 2 + float(stats.mean[0]) / math.sqrt(n)
    mean_se = float(stats.mean_se()[0]) / math.sqrt(n)
    z_mean = (mean - p / 2) / mean_se
    var, var_se = float(stats.variance()[0]), float(stats.variance_se()[0])
    target = 0.8125 / 3
    z_var = (var - target) / var_se
    elapsed = sim_time + time.perf_counter() - t0
    print(
        f"mean {mean:.6f} (z {z_mean:+.2f} vs p/2) variance {var:.5f} (se {var_se:.5f}, z {z_var:+.2f} vs "
        f"{target:.6f}; stationary {sigma2_stationary(0.5, 0.5, 2) / 3:.6f}) {elapsed:.1f}s"
    )
    parts = [
        ("mean", abs(z_mean) <= 4.0, f"{z_mean:+.2f} SE from p/2"),
        ("variance", abs(z_var) <= 4.0, f"{var:.5f} is {z_var:+.2f} SE from {target:.6f}"),
        ("runtime", elapsed < 180.0, f"{elapsed:.1f}s"),
    ]
    assert all(ok for _, ok, _ in parts), _fmt(parts)


@pytest.mark.acceptance("C7 mapping equivalence")
def test_c7_mapping_equivalence():
    t0 = time.perf_counter()
    direct = exact_pmf_minimal(0.6, 0.3, 2, 50).probs
    canonical = exact_pmf(canonical_params(Minimal(0.6, 0.3, 2)), 50).probs
    gap = float(np.abs(direct - canonical).max())
    positions, probs = exact_pmf_elephant(0.75, 2, 50)
    reference = exact_pmf(canonical_params(Elephant(0.75, 2)), 50).probs
    elapsed = time.perf_counter() - t0
    print(f"minimal max gap {gap:.2e}, elephant reflection exact {np.array_equal(probs, reference)}, {elapsed:.2f}s")
    parts = [
        ("minimal pmf", gap <= 1e-12, f"{gap:.2e}"),
        ("positions", np.array_equal(positions, 2 * np.arange(51) - 50), "wrong support"),
        ("reflection", np.array_equal(probs, reference), "not bitwise equal"),
        ("runtime", elapsed < 5.0, f"{elapsed:.2f}s"),
    ]
    assert all(ok for _, ok, _ in parts), _fmt(parts)


@pytest.mark.acceptance("C8 elephant prefactor adjudication")
def test_c8_elephant_adjudication(record_property):
    t0 = time.perf_counter()
    check = elephant_adjudication(0.75, 2, n=2000, tol=0.02)
    elapsed = time.perf_counter() - t0
    d = check.detail
    record_property("printed_agrees", d["printed_agrees"])
    print(
        f"exact 4Var/n {check.estimate:.5f} canonical {d['canonical']:.5f} (rel {d['rel_dev_canonical']:.4f}) "
        f"printed {d['printed']:.5f} (rel {d['rel_dev_printed']:.4f}) printed_agrees={d['printed_agrees']} "
        f"discrepancy={d['discrepancy']} stationary {4 * sigma2_stationary(0.5, 0.5, 2):.5f} {elapsed:.1f}s"
    )
    parts = [
        ("flag reported", isinstance(d["printed_agrees"], bool), "missing flag"),
        ("canonical within 2%", check.verdict == "pass", f"rel {d['rel_dev_canonical']:.4f}"),
        ("runtime", elapsed < 60.0, f"{elapsed:.1f}s"),
    ]
    assert all(ok for _, ok, _ in parts), _fmt(parts)


@pytest.mark.acceptance("C9 LIL envelope")
def test_c9_lil_envelope():
    t0 = time.perf_counter()
    config = SimulationConfig(paths=500, n=1_000_000, master_seed=SEED + 9, model=KSum(0.5, 0.3, 2), grid=(1.0,))
    report = lil_report(config)
    check = report["lil.envelope"]
    elapsed = time.perf_counter() - t0
    print(
        f"median R/sigma {check.estimate:.3f}, above 1.5 {check.detail['fraction_above_1_5']:.3f}, "
        f"verdict {check.verdict}, {elapsed:.1f}s"
    )
    if check.verdict == "warn":
        warnings.warn(f"LIL envelope outside the qualitative band: {check.detail}", stacklevel=1)
    parts = [
        ("never a hard failure", not check.hard and report.passed, "hard failure"),
        ("median", 0.5 <= check.estimate <= 1.5, f"{check.estimate:.3f}"),
        ("runtime", elapsed < 300.0, f"{elapsed:.1f}s"),
    ]
    assert all(ok for _, ok, _ in parts), _fmt(parts)


def _verify(*argv):
    out = io.StringIO()
    code = main(["verify", *argv], out)
    return code, out.getvalue()


@pytest.mark.acceptance("C10 harness calibration")
def test_c10_harness_calibration():
    t0 = time.perf_counter()
    results = []
    for seed in range(1, 21):
        code, _ = _verify("--suite", "all", "--p", "0.5", "--theta", "0", "--k", "2", "--seed", str(seed))
        results.append(code)
    elapsed = time.perf_counter() - t0
    passes = results.count(0)
    print(f"{passes}/20 seeds passed, exit codes {results}, {elapsed:.1f}s")
    parts = [
        ("passes", passes >= 18, f"{passes}/20"),
        ("no errors", set(results) <= {0, 1}, f"exit codes {sorted(set(results))}"),
        ("runtime", elapsed < 1200.0, f"{elapsed:.1f}s"),
    ]
    assert all(ok for _, ok, _ in parts), _fmt(parts)


@pytest.mark.acceptance("C11 determinism")
def test_c11_determinism():
    argv = ("--suite", "all", "--p", "0.4", "--theta", "0.3", "--k", "2", "--seed", "12345")
    max_threads = str(numba.config.NUMBA_NUM_THREADS)
    outputs = [_verify(*argv, "--threads", t)[1] for t in ("1", "1", max_threads, max_threads)]
    print(f"threads 1 and {max_threads} (cpus {os.cpu_count()}), {len(outputs[0])} bytes per report")
    assert outputs[0], "empty report"
    assert all(o == outputs[0] for o in outputs), "reports differ across runs or thread counts"
