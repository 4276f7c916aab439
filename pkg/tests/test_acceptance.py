"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line.  Criteria 5-8 run at a pilot
power of +30 dBm (training SNR about 48 dB); the same sweeps at the stock
-30 dBm pilot are printed as ``INFO`` lines without assertions.
"""

from dataclasses import replace
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from iqbeam.airlink import Pilot, complex_normal, observe_uplink
from iqbeam.checks import run_checks
from iqbeam.estimators import build_normal_system, lse_benchmark, lse_optimal
from iqbeam.impairments import IqiDelta, ideal_profile, make_profile
from iqbeam.montecarlo import (
    AXES,
    DEFAULT_AXIS_VALUES,
    SCHEMES,
    ExperimentConfig,
    dbm_to_w,
    default_link,
    default_workers,
    gain_summary,
    run_sweep,
)
from iqbeam.precoders import build_zab, coupled_power, downlink_coupling, mrt, optimal_precoder
from iqbeam.realcomplex import embed_mat, principal_eigenpair

TRIALS = 10_000
HIGH_PILOT_DBM = 30.0


@pytest.fixture
def report(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            status = "INFO" if ok is None else ("PASS" if ok else "FAIL")
            print(f"\n{status} {tag}: {detail}", end="")

    return emit


def sweeps(p_c_dbm):
    link = replace(default_link(), p_c=dbm_to_w(p_c_dbm))
    workers = min(default_workers(), 4)
    return {axis: run_sweep(ExperimentConfig(trials=TRIALS, link=link, axis=axis,
                                             values=DEFAULT_AXIS_VALUES[axis]), workers)
            for axis in AXES}


@pytest.fixture(scope="module")
def high_pilot():
    return sweeps(HIGH_PILOT_DBM)


@pytest.fixture(scope="module")
def stock_pilot():
    return sweeps(-30.0)


def test_criterion_1_zero_noise_recovery(report):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst_opt, min_bench = 0.0, math.inf
    for _ in range(1000):
        prof = make_profile(10, 1, 0.4, rng)
        h = complex_normal(rng, 10)
        pilot = Pilot(complex(np.exp(1j * rng.uniform(0, 2 * np.pi))))
        obs = observe_uplink(h, prof, pilot, noise=np.zeros(10))
        h_opt = lse_optimal(build_normal_system(obs.y_J, pilot, prof)).h_hat
        h_b = lse_benchmark(obs.y_J, pilot).h_hat
        norm = np.linalg.norm(h)
        worst_opt = max(worst_opt, np.linalg.norm(h_opt - h) / norm)
        min_bench = min(min_bench, np.linalg.norm(h_b - h) / norm)
    elapsed = time.perf_counter() - t0
    ok = worst_opt <= 1e-9 and min_bench > 1e-3 and elapsed < 1.0
    report("criterion 1", ok, f"optimal worst rel. error {worst_opt:.1e}, benchmark min rel. error "
           f"{min_bench:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_2_error_floor(report):
    t0 = time.perf_counter()
    snr = DEFAULT_AXIS_VALUES["snr"]
    improvement = {}
    ok = True
    for delta, need in ((0.4, 8.0), (0.1, 2.0)):
        cfg = ExperimentConfig(trials=TRIALS, delta=IqiDelta.uniform(delta), axis="snr", values=snr,
                               schemes=("benchmark",))
        s = run_sweep(cfg, min(default_workers(), 4))
        opt, bench = s.nmse_db("opt_lse"), s.nmse_db("benchmark")
        slopes = np.diff(opt)
        improvement[delta] = bench[-1] - opt[-1]
        floor = abs(bench[-1] - bench[-2])
        ok_d = bool(np.all(np.abs(slopes + 10) <= 1.5)) and improvement[delta] >= need
        if delta == 0.4:
            ok_d = ok_d and floor <= 1.5
        ok = ok and ok_d
        report(f"criterion 2 (delta={delta})", ok_d,
               f"proposed NMSE {np.round(opt, 2).tolist()} dB (per-decade slopes "
               f"{np.round(slopes, 2).tolist()}), benchmark {np.round(bench, 2).tolist()} dB, "
               f"30->40 dB change {floor:.2f} dB, improvement at 40 dB {improvement[delta]:.2f} dB")
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 120
    report("criterion 2", ok, f"{elapsed:.1f} s")
    assert ok


def test_criterion_3_precoder_global_optimality(report):
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    worst_gap, worst_lam = -math.inf, 0.0
    for N in (1, 2, 3):
        for _ in range(100):
            prof = make_profile(N, 1, 0.4, rng)
            c = downlink_coupling(complex_normal(rng, N), prof)
            x, lam = optimal_precoder(c, 1.0)
            p_opt = coupled_power(c, x)
            probes = complex_normal(rng, (100_000, N))
            probes /= np.linalg.norm(probes, axis=1, keepdims=True)
            p_probe = np.abs(probes @ c.a[0] + np.conj(probes) @ c.b[0]) ** 2
            worst_gap = max(worst_gap, (np.max(p_probe) - p_opt) / p_opt)
            worst_lam = max(worst_lam, abs(p_opt - lam) / lam)
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 0 and worst_lam <= 1e-9 and elapsed < 60
    report("criterion 3", ok, f"best probe exceeds optimum by {worst_gap:.1e} (relative), "
           f"|power - p_i lambda| / p_i lambda <= {worst_lam:.1e}, {elapsed:.1f} s")
    assert ok


def test_criterion_4_no_iqi_reductions(report):
    rng = np.random.default_rng(404)
    exact, worst_p, worst_z = True, 0.0, 0.0
    for _ in range(200):
        h = complex_normal(rng, 10)
        pilot = Pilot(complex(np.exp(1j * rng.uniform(0, 2 * np.pi))))
        obs = observe_uplink(h, ideal_profile(10), pilot, noise=0.1 * complex_normal(rng, 10))
        h_opt = lse_optimal(build_normal_system(obs.y_J, pilot, ideal_profile(10))).h_hat
        h_b = lse_benchmark(obs.y_J, pilot).h_hat
        exact = exact and np.array_equal(h_opt, h_b)
        c = downlink_coupling(h_b, ideal_profile(10))
        p_o = coupled_power(c, optimal_precoder(c, 1.0)[0])
        p_a = coupled_power(c, mrt(h_b, 1.0))
        worst_p = max(worst_p, abs(p_o - p_a) / p_a)
        H = complex_normal(rng, (3, 10))
        Z = build_zab(downlink_coupling(H, ideal_profile(10, 3))).M
        ref = embed_mat(np.conj(H).T @ H)
        worst_z = max(worst_z, np.linalg.norm(Z - ref) / np.linalg.norm(ref))
        lam_ref = np.linalg.eigvalsh(H @ np.conj(H).T)[-1]
        worst_z = max(worst_z, abs(principal_eigenpair(Z).lam - lam_ref) / lam_ref)
    ok = exact and worst_p <= 1e-9 and worst_z <= 1e-9
    report("criterion 4", ok, f"h_hat == h_hat_A bitwise: {exact}, MRT power rel. gap {worst_p:.1e}, "
           f"multiuser Z_ab rel. gap {worst_z:.1e}")
    assert ok


def antenna_gains(series):
    s = series["antennas"]
    i4, i20 = s.values.index(4), s.values.index(20)
    return {k: s.power_dbm(k)[i20] - s.power_dbm(k)[i4] for k in SCHEMES}


def degradations(series):
    s = series["iqi"]
    i0, i5 = s.values.index(0.0), s.values.index(0.5)
    return {k: s.power_dbm(k)[i5] - s.power_dbm(k)[i0] for k in SCHEMES}


def ce_argmax(series):
    s = series["ce_time"]
    return {k: int(np.argmax(s.eff_power_dbm(k))) for k in SCHEMES}


def fmt(d, digits=2, scale=1.0, unit=""):
    return ", ".join(f"{k} {v * scale:+.{digits}f}{unit}" for k, v in d.items())


def test_criterion_5_antenna_scaling(report, high_pilot, stock_pilot):
    g = antenna_gains(high_pilot)
    ok = all(abs(v - 7.0) <= 1.0 for v in g.values())
    report("criterion 5", ok, f"N=20 minus N=4: {fmt(g, unit=' dB')}")
    report("criterion 5 (-30 dBm pilot)", None, fmt(antenna_gains(stock_pilot), unit=" dB"))
    assert ok


def degradation_ok(d):
    mags = [abs(d[k]) for k in ("joint", "opt_precoder", "opt_lse", "benchmark")]
    ordered = all(a <= b for a, b in zip(mags, mags[1:]))
    return -2.3 <= d["joint"] <= -0.9 and -3.5 <= d["benchmark"] <= -2.1 and ordered


def test_criterion_6_iqi_degradation(report, high_pilot, stock_pilot):
    d = degradations(high_pilot)
    ok = degradation_ok(d)
    report("criterion 6", ok, f"delta 0 -> 0.5: {fmt(d, unit=' dB')}")
    d0 = degradations(stock_pilot)
    report("criterion 6 (-30 dBm pilot)", None, f"{fmt(d0, unit=' dB')}; within bounds: {degradation_ok(d0)}")
    assert ok


def gains_ok(o):
    strict = o["joint"] >= o["opt_precoder"] >= o["opt_lse"] >= 0
    return (strict and abs(o["joint"] - 0.24) <= 0.06 and abs(o["opt_precoder"] - 0.18) <= 0.06
            and abs(o["opt_lse"] - 0.06) <= 0.04)


def test_criterion_7_gains_summary(report, high_pilot, stock_pilot):
    o = gain_summary(high_pilot)["overall"]
    ok = gains_ok(o)
    report("criterion 7", ok, f"overall gain over benchmark: {fmt(o, 1, 100, '%')}")
    o0 = gain_summary(stock_pilot)["overall"]
    report("criterion 7 (-30 dBm pilot)", None, f"{fmt(o0, 1, 100, '%')}; within bounds: {gains_ok(o0)}")
    assert ok


def ce_ok(idx, n):
    interior = all(0 < i < n - 1 for i in idx.values())
    return interior and max(idx.values()) - min(idx.values()) <= 1


def test_criterion_8_training_time_optimum(report, high_pilot, stock_pilot):
    grid = high_pilot["ce_time"].values
    idx = ce_argmax(high_pilot)
    ok = ce_ok(idx, len(grid))
    report("criterion 8", ok, "effective-power argmax tau_c/tau: "
           + ", ".join(f"{k} {grid[i]:g}" for k, i in idx.items()))
    idx0 = ce_argmax(stock_pilot)
    report("criterion 8 (-30 dBm pilot)", None, ", ".join(f"{k} {grid[i]:g}" for k, i in idx0.items())
           + f"; interior and aligned: {ce_ok(idx0, len(grid))}")
    assert ok


def test_criterion_9_identity_suite(report):
    results = run_checks(delta=0.4, seed=1)
    failed = [r.name for r in results if not r.passed]
    proc = subprocess.run([sys.executable, "-m", "iqbeam.cli", "validate"], capture_output=True, text=True)
    ok = not failed and proc.returncode == 0
    report("criterion 9", ok, f"{len(results) - len(failed)}/{len(results)} identity checks passed, "
           f"`iqbeam validate` exit code {proc.returncode}")
    assert ok
