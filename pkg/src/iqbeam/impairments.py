"""Frequency-independent IQ imbalance: mismatch draws and coefficient pairs.

A chain with amplitude ratio ``g`` and phase error ``phi`` (radians) maps a
baseband signal ``z`` to

* transmitter: ``T1 z + T2 conj(z)`` with ``T1 = (1 + g e^{j phi}) / 2``,
  ``T2 = (1 - g e^{j phi}) / 2``;
* receiver: ``R1 z + R2 conj(z)`` with ``R1 = (1 + g e^{-j phi}) / 2``,
  ``R2 = (1 - g e^{j phi}) / 2``.

The mismatch itself is ``g = 1 - delta_g (1 + psi_g)`` and
``phi = delta_phi (1 + psi_phi)``, with ``psi_g ~ U[-cap_g/2, cap_g/2]`` and
``psi_phi ~ U[-cap_phi/2, cap_phi/2]``.
"""

from dataclasses import dataclass, field

import numpy as np

TX = "TX"
RX = "RX"


@dataclass(frozen=True)
class IqiDelta:
    """The four constants of the random mismatch model."""

    delta_g: float = 0.4
    delta_phi: float = 0.4
    cap_g: float = 0.4
    cap_phi: float = 0.4

    @classmethod
    def uniform(cls, delta):
        return cls(delta, delta, delta, delta)

    def __post_init__(self):
        if not 0.0 <= self.delta_g < 1.0:
            raise ValueError(f"delta_g must lie in [0, 1), got {self.delta_g}")
        if self.cap_g < 0 or self.cap_phi < 0:
            raise ValueError(f"cap_g and cap_phi must be >= 0, got {self.cap_g}, {self.cap_phi}")
        if not np.isfinite(self.delta_phi):
            raise ValueError(f"delta_phi must be finite, got {self.delta_phi}")
        if self.delta_g * (1 + self.cap_g / 2) > 1:
            raise ValueError("delta_g * (1 + cap_g/2) must not exceed 1 (g would go negative)")

    def g_bounds(self):
        return (1 - self.delta_g * (1 + self.cap_g / 2), 1 - self.delta_g * (1 - self.cap_g / 2))

    def phi_bounds(self):
        return (self.delta_phi * (1 - self.cap_phi / 2), self.delta_phi * (1 + self.cap_phi / 2))


@dataclass(frozen=True)
class MismatchDraw:
    g: np.ndarray | float
    phi: np.ndarray | float


@dataclass(frozen=True)
class IqiCoeffPair:
    """Coefficients ``(c1, c2)`` of one chain, or an array of chains."""

    c1: np.ndarray | complex
    c2: np.ndarray | complex
    kind: str

    def __len__(self):
        return np.size(self.c1)

    def __getitem__(self, i):
        return IqiCoeffPair(np.asarray(self.c1)[i], np.asarray(self.c2)[i], self.kind)

    def identity_error(self):
        """Deviation from ``c1 + c2 = 1`` (TX) or ``c1 + conj(c2) = 1`` (RX)."""
        c2 = self.c2 if self.kind == TX else np.conj(self.c2)
        return np.abs(np.asarray(self.c1) + c2 - 1)


@dataclass(frozen=True)
class IqiProfile:
    """Realized IQI coefficients for one coherence block.

    ``tx_user`` and ``rx_user`` carry one pair per user (K), ``tx_source`` and
    ``rx_source`` one pair per source antenna (N).  Coefficient arrays may
    carry leading batch axes, one entry per Monte Carlo trial.
    """

    tx_user: IqiCoeffPair
    rx_source: IqiCoeffPair
    tx_source: IqiCoeffPair
    rx_user: IqiCoeffPair
    delta: IqiDelta = field(default_factory=lambda: IqiDelta.uniform(0.0))

    @property
    def n_antennas(self):
        return np.shape(self.rx_source.c1)[-1]

    @property
    def n_users(self):
        return np.shape(self.rx_user.c1)[-1]

    def __post_init__(self):
        if np.shape(self.rx_source.c1) != np.shape(self.tx_source.c1):
            raise ValueError("rx_source and tx_source must cover the same antennas")
        if np.shape(self.tx_user.c1) != np.shape(self.rx_user.c1):
            raise ValueError("tx_user and rx_user must cover the same users")


def draw_mismatch(delta_g, delta_phi, cap_g, cap_phi, rng, size=None):
    """Draw amplitude/phase mismatch from the uniform random-source model."""
    d = IqiDelta(delta_g, delta_phi, cap_g, cap_phi)
    u = rng.uniform(-0.5, 0.5, size=(2,) if size is None else (2, *np.atleast_1d(size)))
    return mismatch_from_uniforms(d, u[0], u[1])


def mismatch_from_uniforms(delta, u_g, u_phi):
    """Map ``U[-1/2, 1/2]`` variates to a :class:`MismatchDraw`."""
    g = 1.0 - delta.delta_g * (1.0 + delta.cap_g * np.asarray(u_g))
    phi = delta.delta_phi * (1.0 + delta.cap_phi * np.asarray(u_phi))
    return MismatchDraw(g, phi)


def tx_coeffs(m):
    ge = m.g * np.exp(1j * np.asarray(m.phi))
    return IqiCoeffPair((1 + ge) / 2, (1 - ge) / 2, TX)


def rx_coeffs(m):
    phi = np.asarray(m.phi)
    return IqiCoeffPair((1 + m.g * np.exp(-1j * phi)) / 2, (1 - m.g * np.exp(1j * phi)) / 2, RX)


def ideal_pair(n, kind, batch=()):
    shape = (*batch, n)
    return IqiCoeffPair(np.ones(shape, dtype=complex), np.zeros(shape, dtype=complex), kind)


def ideal_profile(N, K=1, batch=()):
    """Profile with every chain ideal, i.e. all pairs ``(1, 0)``."""
    return IqiProfile(ideal_pair(K, TX, batch), ideal_pair(N, RX, batch),
                      ideal_pair(N, TX, batch), ideal_pair(K, RX, batch))


# Order in which a trial consumes its uniform variates; each block is (count, 2).
UNIFORM_LAYOUT = ("tx_user", "rx_source", "tx_source", "rx_user")


def profile_from_uniforms(u, N, K, delta):
    """Build a profile from uniform variates of shape ``(..., 2K + 2N, 2)``.

    Rows are consumed in :data:`UNIFORM_LAYOUT` order; column 0 drives the
    amplitude and column 1 the phase.
    """
    u = np.asarray(u, dtype=float)
    sizes = {"tx_user": K, "rx_source": N, "tx_source": N, "rx_user": K}
    if u.shape[-2] != sum(sizes.values()):
        raise ValueError(f"expected {sum(sizes.values())} uniform rows, got {u.shape[-2]}")
    blocks = {}
    start = 0
    for name in UNIFORM_LAYOUT:
        stop = start + sizes[name]
        m = mismatch_from_uniforms(delta, u[..., start:stop, 0], u[..., start:stop, 1])
        blocks[name] = tx_coeffs(m) if name.startswith("tx") else rx_coeffs(m)
        start = stop
    return IqiProfile(delta=delta, **blocks)


def make_profile(N, K, delta, rng):
    """Draw an independent mismatch for every source antenna and user chain.

    ``delta`` is an :class:`IqiDelta` or a scalar applied to all four
    constants.
    """
    if N < 1 or K < 1:
        raise ValueError(f"need N >= 1 and K >= 1, got N={N}, K={K}")
    if not isinstance(delta, IqiDelta):
        delta = IqiDelta.uniform(float(delta))
    u = rng.uniform(-0.5, 0.5, size=(2 * K + 2 * N, 2))
    return profile_from_uniforms(u, N, K, delta)
