"""Link budget, Rayleigh block fading and the IQI-impaired uplink pilot."""

from dataclasses import dataclass, replace
import math

import numpy as np

SPEED_OF_LIGHT = 3e8


def path_loss(f, d, rho):
    """Unit-distance attenuation ``(c / (4 pi f))**2`` and gain ``varpi / d**rho``."""
    if f <= 0 or d <= 0:
        raise ValueError(f"frequency and distance must be positive, got f={f}, d={d}")
    varpi = (SPEED_OF_LIGHT / (4 * math.pi * f)) ** 2
    return varpi, varpi / d ** rho


@dataclass(frozen=True)
class LinkBudget:
    """Large-scale parameters.  Energies in joules, powers in watts, times in seconds."""

    f: float = 915e6
    d: float = 100.0
    rho: float = 2.5
    sigma1_sq: float = 1e-17
    sigma2_sq: float = 1e-17
    p_c: float = 1e-6
    p_i: float = 1.0
    tau: float = 10e-3
    tau_c: float = 1e-4

    def __post_init__(self):
        if not 0 < self.tau_c <= self.tau:
            raise ValueError(f"need 0 < tau_c <= tau, got tau_c={self.tau_c}, tau={self.tau}")
        for name in ("sigma1_sq", "sigma2_sq", "p_c", "p_i"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        path_loss(self.f, self.d, self.rho)

    @property
    def varpi(self):
        return path_loss(self.f, self.d, self.rho)[0]

    @property
    def beta(self):
        return path_loss(self.f, self.d, self.rho)[1]

    @property
    def pilot_energy(self):
        return self.p_c * self.tau_c

    @property
    def snr(self):
        """Average received training SNR per antenna, ``beta p_c tau_c / sigma1^2``."""
        return self.beta * self.p_c * self.tau_c / self.sigma1_sq

    def with_snr(self, snr):
        """Same budget with the pilot power solved from a linear training SNR."""
        return replace(self, p_c=snr * self.sigma1_sq / (self.beta * self.tau_c))


@dataclass(frozen=True)
class Pilot:
    s: complex

    @classmethod
    def from_budget(cls, link, phase=0.0):
        return cls(complex(math.sqrt(link.pilot_energy) * np.exp(1j * phase)))

    @property
    def energy(self):
        return abs(self.s) ** 2


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    beta: float


@dataclass(frozen=True)
class UplinkObservation:
    y_J: np.ndarray
    h_A: np.ndarray
    h_B: np.ndarray
    n_J: np.ndarray


def complex_normal(rng, size):
    """Unit-variance circular complex Gaussian samples."""
    z = rng.standard_normal(size=(*np.atleast_1d(size), 2))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2)


def draw_channel(N, beta, rng):
    if N < 1 or beta < 0:
        raise ValueError(f"need N >= 1 and beta >= 0, got N={N}, beta={beta}")
    return ChannelRealization(math.sqrt(beta) * complex_normal(rng, N), beta)


def _user_pair(pair, user):
    c1, c2 = np.asarray(pair.c1), np.asarray(pair.c2)
    return c1[..., user:user + 1], c2[..., user:user + 1]


def effective_uplink_channels(h, prof, user=0):
    """Effective channels ``(h_A, h_B)`` seen by the source during training.

    ``h_A = R_S1 h T_U1 + R_S2 conj(h) conj(T_U2)`` and
    ``h_B = R_S1 h T_U2 + R_S2 conj(h) conj(T_U1)``, per antenna.
    """
    h = np.asarray(getattr(h, "h", h), dtype=complex)
    r1, r2 = np.asarray(prof.rx_source.c1), np.asarray(prof.rx_source.c2)
    if r1.shape[-1] != h.shape[-1]:
        raise ValueError(f"profile covers {r1.shape[-1]} antennas, channel has {h.shape[-1]}")
    t1, t2 = _user_pair(prof.tx_user, user)
    hc = np.conj(h)
    h_A = r1 * h * t1 + r2 * hc * np.conj(t2)
    h_B = r1 * h * t2 + r2 * hc * np.conj(t1)
    return h_A, h_B


def impair_noise(n, prof):
    """Receiver IQI applied to ideal-domain noise: ``R_S1 n + R_S2 conj(n)``."""
    return np.asarray(prof.rx_source.c1) * n + np.asarray(prof.rx_source.c2) * np.conj(n)


def observe_uplink(h, prof, pilot, noise=None, sigma1_sq=None, rng=None, user=0):
    """Training observation ``y_J = h_A s + h_B conj(s) + n_J``.

    ``noise`` is the ideal-domain noise vector ``n``.  When omitted it is
    drawn as ``CN(0, sigma1_sq)`` from ``rng``.
    """
    h = np.asarray(getattr(h, "h", h), dtype=complex)
    if noise is None:
        if rng is None or sigma1_sq is None:
            raise ValueError("either noise or (sigma1_sq, rng) is required")
        noise = math.sqrt(sigma1_sq) * complex_normal(rng, h.shape)
    h_A, h_B = effective_uplink_channels(h, prof, user)
    n_J = impair_noise(np.asarray(noise, dtype=complex), prof)
    s = pilot.s
    y_J = h_A * s + h_B * np.conj(s) + n_J
    return UplinkObservation(y_J, h_A, h_B, n_J)
