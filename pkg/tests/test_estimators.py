import math

import numpy as np
import pytest
from scipy.optimize import minimize

from iqbeam.airlink import Pilot, complex_normal, observe_uplink
from iqbeam.estimators import (
    BENCHMARK,
    OPTIMAL,
    SingularAntenna,
    antenna_determinants,
    build_normal_system,
    lse_benchmark,
    lse_optimal,
    ls_residual,
    pilot_coupling,
    solve_normal_system,
)
from iqbeam.impairments import (
    RX,
    TX,
    IqiCoeffPair,
    IqiProfile,
    MismatchDraw,
    ideal_pair,
    ideal_profile,
    make_profile,
    profile_from_uniforms,
    IqiDelta,
    rx_coeffs,
)
from iqbeam.realcomplex import embed_vec, unembed_vec


def tx_only_profile(t1, t2):
    return IqiProfile(IqiCoeffPair(np.array([t1], complex), np.array([t2], complex), TX),
                      ideal_pair(1, RX), ideal_pair(1, TX), ideal_pair(1, RX))


def noisy_problem(rng, N=10, delta=0.4, sigma=0.3, s=1.0):
    prof = make_profile(N, 1, delta, rng)
    h = complex_normal(rng, N)
    pilot = Pilot(complex(s))
    obs = observe_uplink(h, prof, pilot, noise=sigma * complex_normal(rng, N))
    return h, prof, pilot, obs


def test_benchmark_examples():
    est = lse_benchmark(np.array([2 + 2j]), Pilot(2.0))
    assert est.kind == BENCHMARK and est.h_hat[0] == 1 + 1j

    E = 4.0
    prof = tx_only_profile(0.9, 0.1)
    real = Pilot(math.sqrt(E))
    obs = observe_uplink(np.array([2.0]), prof, real, noise=np.zeros(1))
    assert lse_benchmark(obs.y_J, real).h_hat[0] == pytest.approx(2.0)

    imag = Pilot(1j * math.sqrt(E))
    obs = observe_uplink(np.array([2.0]), prof, imag, noise=np.zeros(1))
    # h_A + h_B conj(s)^2 / E = 1.8 - 0.2
    assert lse_benchmark(obs.y_J, imag).h_hat[0] == pytest.approx(1.6)
    with pytest.raises(ValueError):
        lse_benchmark(obs.y_J, Pilot(0.0))


def test_benchmark_error_identity(rng):
    prof = make_profile(10, 1, 0.4, rng)
    pilot = Pilot(complex(1.7 * np.exp(0.4j)))
    obs = observe_uplink(complex_normal(rng, 10), prof, pilot, noise=np.zeros(10))
    err = lse_benchmark(obs.y_J, pilot).h_hat - obs.h_A
    np.testing.assert_allclose(err, obs.h_B * np.conj(pilot.s) ** 2 / pilot.energy, atol=1e-15)


def test_normal_system_no_iqi(rng):
    s = 0.8 - 0.3j
    y = complex_normal(rng, 5)
    prof = ideal_profile(5)
    c = pilot_coupling(Pilot(s), prof)
    np.testing.assert_array_equal(c.A, s)
    np.testing.assert_array_equal(c.B, 0)
    sys = build_normal_system(y, Pilot(s), prof)
    np.testing.assert_allclose(sys.Z_A, abs(s) ** 2)
    np.testing.assert_array_equal(sys.Z_B, 0)
    np.testing.assert_allclose(sys.y_AB, s * np.conj(y))


def test_normal_system_identities(rng):
    for _ in range(200):
        prof = make_profile(8, 1, 0.5, rng)
        pilot = Pilot(complex(np.exp(1j * rng.uniform(0, 2 * np.pi))))
        c = pilot_coupling(pilot, prof)
        sys = build_normal_system(complex_normal(rng, 8), pilot, prof)
        np.testing.assert_allclose(np.abs(sys.Z_B), 2 * np.abs(c.A) * np.abs(c.B), rtol=1e-13)
        assert np.all(sys.Z_A >= np.abs(sys.Z_B))
        ref = -(np.abs(c.A) ** 2 - np.abs(c.B) ** 2) ** 2
        assert np.all(np.abs(antenna_determinants(sys) - ref) <= 1e-12 * sys.Z_A ** 2)


def test_determinant_identity_on_a_million_draws(rng):
    prof = profile_from_uniforms(rng.uniform(-0.5, 0.5, (100_000, 22, 2)), 10, 1, IqiDelta.uniform(0.5))
    pilot = Pilot(complex(np.exp(0.9j)))
    c = pilot_coupling(pilot, prof)
    sys = build_normal_system(np.zeros((100_000, 10)), pilot, prof)
    ref = -(np.abs(c.A) ** 2 - np.abs(c.B) ** 2) ** 2
    assert np.max(np.abs(antenna_determinants(sys) - ref) / sys.Z_A ** 2) <= 1e-12


def test_zero_noise_exact_recovery(rng):
    for _ in range(100):
        h, prof, pilot, obs = noisy_problem(rng, sigma=0.0, s=np.exp(1j * rng.uniform(0, 6)))
        est = lse_optimal(build_normal_system(obs.y_J, pilot, prof))
        assert est.kind == OPTIMAL
        assert np.linalg.norm(est.h_hat - h) <= 1e-9 * np.linalg.norm(h)


def test_no_iqi_optimal_equals_benchmark(rng):
    h = complex_normal(rng, 10)
    pilot = Pilot(0.4 + 1.1j)
    obs = observe_uplink(h, ideal_profile(10), pilot, noise=complex_normal(rng, 10))
    opt = lse_optimal(build_normal_system(obs.y_J, pilot, ideal_profile(10))).h_hat
    np.testing.assert_array_equal(opt, lse_benchmark(obs.y_J, pilot).h_hat)


def test_singular_antenna_is_reported():
    # RX mismatch (g = 1, phi = pi/2) with a real pilot and ideal TX: |A| = |B|
    r = rx_coeffs(MismatchDraw(np.array([1.0, 0.9]), np.array([0.3, math.pi / 2])))
    prof = IqiProfile(ideal_pair(1, TX), r, ideal_pair(2, TX), ideal_pair(1, RX))
    c = pilot_coupling(Pilot(1.0), prof)
    assert abs(c.A[1]) == pytest.approx(abs(c.B[1]), rel=1e-15)
    sys = build_normal_system(np.array([1.0, 1.0]), Pilot(1.0), prof)
    with pytest.raises(SingularAntenna) as err:
        lse_optimal(sys)
    assert err.value.antenna == 1
    h_hat, mask = solve_normal_system(sys)
    assert mask.tolist() == [False, True] and np.isnan(h_hat[1]) and np.isfinite(h_hat[0])


def test_per_antenna_solution_matches_dense_real_system(rng):
    # oracle: assemble the full 2N x 2N real system and solve it densely
    h, prof, pilot, obs = noisy_problem(rng, N=6, s=0.3 + 0.8j)
    sys = build_normal_system(obs.y_J, pilot, prof)
    Za, Zb = np.diag(sys.Z_A), np.diag(sys.Z_B)
    dense = np.block([[Za + Zb.real, -Zb.imag], [Zb.imag, -Za + Zb.real]])
    ref = unembed_vec(np.linalg.solve(dense, embed_vec(sys.y_AB)))
    np.testing.assert_allclose(lse_optimal(sys).h_hat, ref, rtol=1e-12)


def test_ls_residual_examples(rng):
    h, prof, pilot, obs = noisy_problem(rng, sigma=0.0)
    assert ls_residual(h, obs.y_J, pilot, prof) <= 1e-28
    assert ls_residual(np.zeros(10), obs.y_J, pilot, prof) == pytest.approx(np.sum(np.abs(obs.y_J) ** 2))


def test_estimate_beats_local_perturbations(rng):
    h, prof, pilot, obs = noisy_problem(rng)
    h_hat = lse_optimal(build_normal_system(obs.y_J, pilot, prof)).h_hat
    e0 = ls_residual(h_hat, obs.y_J, pilot, prof)
    for _ in range(100):
        d = complex_normal(rng, 10)
        d *= 1e-3 * np.linalg.norm(h_hat) / np.linalg.norm(d)
        assert e0 <= ls_residual(h_hat + d, obs.y_J, pilot, prof)


def test_stationarity_by_finite_differences(rng):
    h, prof, pilot, obs = noisy_problem(rng, N=5)
    x0 = embed_vec(lse_optimal(build_normal_system(obs.y_J, pilot, prof)).h_hat)
    step = 1e-6 * np.linalg.norm(x0)
    grad = []
    for j in range(x0.size):
        e = np.zeros_like(x0)
        e[j] = step
        grad.append((ls_residual(unembed_vec(x0 + e), obs.y_J, pilot, prof)
                     - ls_residual(unembed_vec(x0 - e), obs.y_J, pilot, prof)) / (2 * step))
    assert np.linalg.norm(grad) <= 1e-5 * np.linalg.norm(obs.y_J) ** 2


@pytest.mark.parametrize("N", [1, 2, 3])
def test_global_optimality_by_multistart_descent(rng, N):
    h, prof, pilot, obs = noisy_problem(rng, N=N, sigma=0.5)
    h_hat = lse_optimal(build_normal_system(obs.y_J, pilot, prof)).h_hat
    best = ls_residual(h_hat, obs.y_J, pilot, prof)

    def objective(x):
        return ls_residual(unembed_vec(x), obs.y_J, pilot, prof)

    starts = 3 * rng.standard_normal((334, 2 * N))
    found = min(minimize(objective, x0, method="BFGS").fun for x0 in starts)
    assert found >= best - 1e-9
