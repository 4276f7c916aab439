"""Least-squares channel estimation from an IQI-impaired pilot observation.

With ``A = R_S1 (T_U1 s + T_U2 s*)`` and ``B = R_S2 (T_U2* s + T_U1* s*)`` the
training signal is ``y_J = A h + B h* + n_J``: widely linear in ``h``.  The
benchmark estimator ignores the conjugate term; the optimal one minimizes
``||y_J - A h - B h*||**2`` exactly.  Because ``A`` and ``B`` are diagonal the
real-domain normal equations split into one 2x2 system per antenna.
"""

from dataclasses import dataclass

import numpy as np

from .airlink import effective_uplink_channels

BENCHMARK = "benchmark"
OPTIMAL = "optimal"

SINGULAR_EPS = 1e-10


class SingularAntenna(ArithmeticError):
    """The IQI/pilot combination at one antenna makes ``h`` unidentifiable."""

    def __init__(self, antenna, det, threshold):
        self.antenna = antenna
        self.det = det
        self.threshold = threshold
        super().__init__(f"antenna {antenna}: |det| = {det:.3e} <= {threshold:.3e}")


@dataclass(frozen=True)
class PilotCoupled:
    A: np.ndarray
    B: np.ndarray


@dataclass(frozen=True)
class NormalSystem:
    Z_A: np.ndarray
    Z_B: np.ndarray
    y_AB: np.ndarray
    y_J: np.ndarray = None
    A: np.ndarray = None


@dataclass(frozen=True)
class ChannelEstimate:
    h_hat: np.ndarray
    kind: str


def _matched(y, c):
    # y conj(c) / |c|^2 on full-shape contiguous operands so that scalar and
    # per-antenna coefficients go through the same numpy kernels
    y = np.ascontiguousarray(y, dtype=complex)
    c = np.array(np.broadcast_to(c, y.shape), dtype=complex)
    return y * np.conj(c) / (np.abs(c) ** 2)


def lse_benchmark(y_J, pilot):
    """Pseudo-inverse estimate ``y_J conj(s) / |s|**2`` of the effective channel ``h_A``."""
    if not pilot.energy > 0:
        raise ValueError("pilot energy must be positive")
    return ChannelEstimate(_matched(y_J, pilot.s), BENCHMARK)


def pilot_coupling(pilot, prof, user=0):
    """Diagonals of ``A`` and ``B`` (one entry per source antenna)."""
    s = pilot.s
    t1 = np.asarray(prof.tx_user.c1)[..., user:user + 1]
    t2 = np.asarray(prof.tx_user.c2)[..., user:user + 1]
    A = np.asarray(prof.rx_source.c1) * (t1 * s + t2 * np.conj(s))
    B = np.asarray(prof.rx_source.c2) * (np.conj(t2) * s + np.conj(t1) * np.conj(s))
    return PilotCoupled(A, B)


def build_normal_system(y_J, pilot, prof, user=0):
    c = pilot_coupling(pilot, prof, user)
    y_J = np.asarray(y_J, dtype=complex)
    Z_A = np.abs(c.A) ** 2 + np.abs(c.B) ** 2
    Z_B = 2 * c.A * np.conj(c.B)
    y_AB = c.A * np.conj(y_J) + np.conj(c.B) * y_J
    return NormalSystem(Z_A, Z_B, y_AB, y_J, c.A)


def antenna_determinants(sys):
    """Determinants of the per-antenna 2x2 real systems; equal to ``-(|A|^2 - |B|^2)^2``."""
    zb_r, zb_i = sys.Z_B.real, sys.Z_B.imag
    return (sys.Z_A + zb_r) * (zb_r - sys.Z_A) + zb_i * zb_i


def solve_normal_system(sys, eps=SINGULAR_EPS):
    """Solve every antenna's 2x2 system; returns ``(h_hat, singular_mask)``.

    Singular antennas get NaN entries rather than a regularized value.
    """
    za = sys.Z_A
    zb_r, zb_i = sys.Z_B.real, sys.Z_B.imag
    yr, yi = sys.y_AB.real, sys.y_AB.imag
    det = antenna_determinants(sys)
    singular = ~(np.abs(det) > eps * za * za)
    with np.errstate(divide="ignore", invalid="ignore"):
        hr = ((zb_r - za) * yr + zb_i * yi) / det
        hi = ((za + zb_r) * yi - zb_i * yr) / det
        # B = 0 decouples the system into y_J = A h + n; this closed form
        # reproduces the benchmark bit for bit when A = s
        if sys.y_J is not None:
            direct = _matched(sys.y_J, np.broadcast_to(sys.A, np.shape(sys.y_J)))
        else:
            direct = np.conj(sys.y_AB) / za
    h_hat = np.where(singular, np.nan, np.where(sys.Z_B == 0, direct, hr + 1j * hi))
    return h_hat, singular


def lse_optimal(sys, eps=SINGULAR_EPS):
    """Global minimizer of the training residual.

    Raises
    ------
    SingularAntenna
        If ``(|A_i|^2 - |B_i|^2)^2 <= eps * Z_A,i^2`` at some antenna.
    """
    h_hat, singular = solve_normal_system(sys, eps)
    if np.any(singular):
        i = int(np.flatnonzero(singular.ravel())[0])
        det = abs(antenna_determinants(sys).ravel()[i])
        raise SingularAntenna(i, det, eps * sys.Z_A.ravel()[i] ** 2)
    return ChannelEstimate(h_hat, OPTIMAL)


def ls_residual(h_cand, y_J, pilot, prof, user=0):
    """Training residual ``||y_J - h_A s - h_B s*||**2`` for a candidate channel."""
    h_A, h_B = effective_uplink_channels(h_cand, prof, user)
    r = np.asarray(y_J) - h_A * pilot.s - h_B * np.conj(pilot.s)
    return float(np.sum(np.abs(r) ** 2)) if r.ndim == 1 else np.sum(np.abs(r) ** 2, axis=-1)
