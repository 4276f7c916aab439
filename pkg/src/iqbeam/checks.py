"""Invariant and oracle checks run by ``iqbeam validate``.

Each check draws its own inputs from a seeded generator and returns a
:class:`CheckResult`; nothing here raises on a failed property.
"""

from dataclasses import dataclass
import math

import numpy as np

from .airlink import Pilot, complex_normal, observe_uplink
from .estimators import (
    antenna_determinants,
    build_normal_system,
    lse_benchmark,
    lse_optimal,
    ls_residual,
    pilot_coupling,
)
from .impairments import (
    IqiDelta,
    ideal_profile,
    make_profile,
    mismatch_from_uniforms,
    profile_from_uniforms,
)
from .precoders import (
    build_zab,
    coupled_power,
    downlink_coupling,
    mrt,
    optimal_precoder,
    received_signal_power,
    zab_power,
)
from .realcomplex import embed_mat, embed_vec, power_iteration, principal_eigenpair, unembed_vec


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_profiles(rng, count, N, K, delta):
    u = rng.uniform(-0.5, 0.5, size=(count, 2 * K + 2 * N, 2))
    return profile_from_uniforms(u, N, K, delta)


def random_unit_probes(rng, count, N):
    x = complex_normal(rng, (count, N))
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def check_embedding(rng, instances=1000):
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(1, 9))
        U, V = complex_normal(rng, (n, n)), complex_normal(rng, (n, n))
        u = complex_normal(rng, n)
        e1 = np.max(np.abs(embed_mat(U @ V) - embed_mat(U) @ embed_mat(V))) / np.max(np.abs(embed_mat(U @ V)))
        e2 = np.max(np.abs(embed_mat(U) @ embed_vec(u) - embed_vec(U @ u))) / np.max(np.abs(U @ u))
        e3 = np.max(np.abs(unembed_vec(embed_vec(u)) - u))
        worst = max(worst, e1, e2, e3 * 1e12)
    return CheckResult("embedding homomorphism", worst <= 1e-12, f"worst relative error {worst:.2e}")


def check_coefficients(rng, delta, draws=1_000_000):
    prof = random_profiles(rng, draws // 4, 2, 2, delta)
    tx = max(np.max(prof.tx_user.identity_error()), np.max(prof.tx_source.identity_error()))
    rx = max(np.max(prof.rx_user.identity_error()), np.max(prof.rx_source.identity_error()))
    worst = max(tx, rx)
    # 4 ulp: (1 + z)/2 and (1 - z)/2 each round once
    return CheckResult("IQI coefficient identities", worst <= 4 * np.finfo(float).eps,
                       f"max |c1 + c2 - 1| (TX) {tx:.1e}, max |c1 + conj(c2) - 1| (RX) {rx:.1e}")


def check_mismatch_bounds(rng, draws=1_000_000):
    bad = 0
    for d in (0.1, 0.4, 0.5):
        delta = IqiDelta.uniform(d)
        u = rng.uniform(-0.5, 0.5, size=(2, draws))
        m = mismatch_from_uniforms(delta, u[0], u[1])
        (glo, ghi), (plo, phi) = delta.g_bounds(), delta.phi_bounds()
        bad += int(np.sum((m.g < glo) | (m.g > ghi) | (m.phi < plo) | (m.phi > phi)))
    return CheckResult("mismatch range bounds", bad == 0, f"{bad} out-of-range draws")


def check_determinant(rng, delta, draws=1_000_000):
    prof = random_profiles(rng, draws // 10, 10, 1, delta)
    pilot = Pilot(complex(np.exp(1j * rng.uniform(0, 2 * np.pi))))
    c = pilot_coupling(pilot, prof)
    sys = build_normal_system(np.zeros_like(c.A), pilot, prof)
    det = antenna_determinants(sys)
    ref = -(np.abs(c.A) ** 2 - np.abs(c.B) ** 2) ** 2
    err = np.max(np.abs(det - ref) / sys.Z_A ** 2)
    return CheckResult("determinant identity", err <= 1e-12,
                       f"max |det - (-(|A|^2-|B|^2)^2)| / Z_A^2 = {err:.1e}")


def check_uplink_reconstruction(rng, delta, trials=1000, N=10):
    prof = random_profiles(rng, trials, N, 1, delta)
    h = complex_normal(rng, (trials, N))
    pilot = Pilot(complex(1.3 * np.exp(0.7j)))
    obs = observe_uplink(h, prof, pilot, noise=0.1 * complex_normal(rng, (trials, N)))
    err = np.max(np.abs(obs.y_J - (obs.h_A * pilot.s + obs.h_B * np.conj(pilot.s) + obs.n_J)))
    return CheckResult("uplink reconstruction identity", err <= 1e-14, f"max residual {err:.1e}")


def check_exact_recovery(rng, delta, trials=1000, N=10):
    prof = random_profiles(rng, trials, N, 1, delta)
    h = complex_normal(rng, (trials, N))
    pilot = Pilot(1.0)
    obs = observe_uplink(h, prof, pilot, noise=np.zeros_like(h))
    h_hat = lse_optimal(build_normal_system(obs.y_J, pilot, prof)).h_hat
    rel = np.max(np.linalg.norm(h_hat - h, axis=-1) / np.linalg.norm(h, axis=-1))
    return CheckResult("zero-noise exact recovery", rel <= 1e-9, f"worst relative error {rel:.1e}")


def check_stationarity(rng, delta, trials=20, N=4):
    worst = 0.0
    for _ in range(trials):
        prof = make_profile(N, 1, delta, rng)
        h = complex_normal(rng, N)
        pilot = Pilot(1.0)
        obs = observe_uplink(h, prof, pilot, noise=0.3 * complex_normal(rng, N))
        h_hat = lse_optimal(build_normal_system(obs.y_J, pilot, prof)).h_hat
        x0 = embed_vec(h_hat)
        scale = np.linalg.norm(obs.y_J) ** 2
        step = 1e-6 * np.linalg.norm(h_hat)
        grad = np.empty_like(x0)
        for j in range(x0.size):
            e = np.zeros_like(x0)
            e[j] = step
            grad[j] = (ls_residual(unembed_vec(x0 + e), obs.y_J, pilot, prof)
                       - ls_residual(unembed_vec(x0 - e), obs.y_J, pilot, prof)) / (2 * step)
        worst = max(worst, np.linalg.norm(grad) / scale)
    return CheckResult("LS stationarity (finite differences)", worst <= 1e-5,
                       f"max ||grad|| / ||y_J||^2 = {worst:.1e}")


def check_quadratic_form(rng, delta, pairs=1000):
    worst = 0.0
    for _ in range(pairs):
        N, K = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        c = downlink_coupling(complex_normal(rng, (K, N)), make_profile(N, K, delta, rng),
                              np.exp(1j * rng.uniform(0, 2 * np.pi, K)))
        x = complex_normal(rng, N)
        direct = coupled_power(c, x)
        worst = max(worst, abs(zab_power(build_zab(c), x) - direct) / direct)
    return CheckResult("quadratic-form equivalence", worst <= 1e-9, f"worst relative error {worst:.1e}")


def check_zab_symmetric_psd(rng, delta, count=500, N=8):
    worst_asym, worst_neg = 0.0, 0.0
    for _ in range(count):
        K = int(rng.integers(1, 4))
        M = build_zab(downlink_coupling(complex_normal(rng, (K, N)), make_profile(N, K, delta, rng))).M
        scale = np.linalg.norm(M, 2)
        worst_asym = max(worst_asym, np.max(np.abs(M - M.T)) / scale)
        worst_neg = max(worst_neg, -np.linalg.eigvalsh(M)[0] / scale)
    ok = worst_asym <= 1e-10 and worst_neg <= 1e-9
    return CheckResult("Z_ab symmetric PSD", ok,
                       f"max asymmetry {worst_asym:.1e}, most negative eigenvalue {-worst_neg:.1e} (relative)")


def check_rank_bound(rng, delta, count=200):
    worst = 0
    ok = True
    for _ in range(count):
        N, K = int(rng.integers(1, 9)), int(rng.integers(1, 3))
        M = build_zab(downlink_coupling(complex_normal(rng, (K, N)), make_profile(N, K, delta, rng))).M
        w = np.linalg.eigvalsh(M)
        rank = int(np.sum(w > 1e-10 * w[-1]))
        worst = max(worst, rank - 4 * K)
        ok &= rank <= 4 * K
    return CheckResult("Z_ab rank <= 4K", ok, f"max (rank - 4K) = {worst}")


def check_precoder_optimality(rng, delta, draws=20, probes=100_000, p_i=1.0):
    worst_excess, worst_gap = -math.inf, 0.0
    for _ in range(draws):
        N = int(rng.integers(1, 5))
        c = downlink_coupling(complex_normal(rng, N), make_profile(N, 1, delta, rng))
        x, lam = optimal_precoder(c, p_i)
        p_opt = coupled_power(c, x.x)
        worst_gap = max(worst_gap, abs(p_opt - p_i * lam) / (p_i * lam))
        probe = math.sqrt(p_i) * random_unit_probes(rng, probes, N)
        p_probe = coupled_power(c, probe)
        worst_excess = max(worst_excess, (np.max(p_probe) - p_opt) / p_opt)
    ok = worst_excess <= 1e-9 and worst_gap <= 1e-9
    return CheckResult("precoder global optimality", ok,
                       f"best probe excess {worst_excess:.1e}, |P - p_i lambda| / P = {worst_gap:.1e}")


def check_eigensolver_cross(rng, count=50):
    # independent route: power iteration from a random start on strictly dominant spectra
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(2, 12))
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        w = np.sort(rng.uniform(0, 1, n))
        w[-1] = 2.0
        M = (Q * w) @ Q.T
        M = (M + M.T) / 2
        a = principal_eigenpair(M)
        b = power_iteration(M, tol=1e-13, start=rng.standard_normal(n))
        worst = max(worst, abs(a.lam - b.lam) / 2.0)
    return CheckResult("eigensolver cross-check", worst <= 1e-11, f"max |lambda_eigh - lambda_power| / ||M|| = {worst:.1e}")


def check_benchmark_error_identity(rng, delta, trials=1000, N=10):
    prof = random_profiles(rng, trials, N, 1, delta)
    h = complex_normal(rng, (trials, N))
    pilot = Pilot(complex(2.0 * np.exp(1.1j)))
    obs = observe_uplink(h, prof, pilot, noise=np.zeros_like(h))
    err = lse_benchmark(obs.y_J, pilot).h_hat - obs.h_A
    expect = obs.h_B * np.conj(pilot.s) ** 2 / pilot.energy
    worst = np.max(np.abs(err - expect)) / np.max(np.abs(obs.h_A))
    return CheckResult("benchmark error identity", worst <= 1e-14, f"max deviation {worst:.1e}")


def check_no_iqi_reductions(rng, trials=200, N=10, K=3):
    prof = ideal_profile(N)
    worst_est, worst_pow, worst_mu = 0.0, 0.0, 0.0
    for _ in range(trials):
        h = complex_normal(rng, N)
        pilot = Pilot(complex(1.5 * np.exp(1j * rng.uniform(0, 2 * np.pi))))
        obs = observe_uplink(h, prof, pilot, noise=0.2 * complex_normal(rng, N))
        h_A = lse_benchmark(obs.y_J, pilot).h_hat
        h_o = lse_optimal(build_normal_system(obs.y_J, pilot, prof)).h_hat
        worst_est = max(worst_est, np.max(np.abs(h_o - h_A)) / np.max(np.abs(h_A)))
        p_mrt = received_signal_power(h, prof, mrt(h_A, 1.0).x)
        x_o, _ = optimal_precoder(downlink_coupling(h_A, prof), 1.0)
        p_opt = received_signal_power(h, prof, x_o.x)
        worst_pow = max(worst_pow, abs(p_opt - p_mrt) / p_mrt)

        H = complex_normal(rng, (N, K))
        c = downlink_coupling(H.T, ideal_profile(N, K), np.exp(1j * rng.uniform(0, 2 * np.pi, K)))
        M = build_zab(c).M
        ref = embed_mat(np.conj(H) @ H.T)
        lam_ref = np.linalg.eigvalsh(H @ H.conj().T)[-1]
        worst_mu = max(worst_mu, np.max(np.abs(M - ref)) / np.max(np.abs(ref)),
                       abs(principal_eigenpair(M).lam - lam_ref) / lam_ref)
    ok = worst_est <= 1e-12 and worst_pow <= 1e-9 and worst_mu <= 1e-9
    return CheckResult("no-IQI reductions", ok,
                       f"estimator {worst_est:.1e}, MRT vs optimal power {worst_pow:.1e}, multiuser HH^H {worst_mu:.1e}")


def check_phase_sensitivity(rng, delta, N=4):
    """Under IQI the power is not invariant to a common precoder phase."""
    if delta.delta_g == 0 and delta.delta_phi == 0:
        return CheckResult("phase sensitivity under IQI", True, "skipped (no IQI)")
    c = downlink_coupling(complex_normal(rng, N), make_profile(N, 1, delta, rng))
    x = complex_normal(rng, N)
    theta = np.linspace(0, 2 * np.pi, 73)
    p = coupled_power(c, np.exp(1j * theta)[:, None] * x)
    change = (p.max() - p.min()) / p.min()
    return CheckResult("phase sensitivity under IQI", change > 1e-3, f"max relative power change {change:.2e}")


def run_checks(delta=0.4, seed=1):
    if not isinstance(delta, IqiDelta):
        delta = IqiDelta.uniform(float(delta))
    rng = np.random.default_rng([int(seed), 0xC0FFEE])
    return [
        check_embedding(rng),
        check_coefficients(rng, delta),
        check_mismatch_bounds(rng),
        check_determinant(rng, delta),
        check_uplink_reconstruction(rng, delta),
        check_exact_recovery(rng, delta),
        check_stationarity(rng, delta),
        check_benchmark_error_identity(rng, delta),
        check_quadratic_form(rng, delta),
        check_zab_symmetric_psd(rng, delta),
        check_rank_bound(rng, delta),
        check_precoder_optimality(rng, delta),
        check_eigensolver_cross(rng),
        check_no_iqi_reductions(rng),
        check_phase_sensitivity(rng, delta),
    ]
