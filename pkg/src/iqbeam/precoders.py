"""Downlink precoding under joint TX/RX IQ imbalance.

With source TX IQI ``(T_S1, T_S2)`` and user RX IQI ``(R_U1, R_U2)`` the
noiseless received signal of user k is ``a_k x + b_k conj(x)``, where

    a_k = (R_U1,k h_k^T T_S1 + R_U2,k h_k^H conj(T_S2)) s_k
    b_k = (R_U1,k h_k^T T_S2 + R_U2,k h_k^H conj(T_S1)) conj(s_k)

The received power ``sum_k |a_k x + b_k x*|**2`` is a real quadratic form in
``[Re x; Im x]``, so the power-maximizing precoder under ``||x||^2 <= p_i`` is
the principal eigenvector of that form scaled to the full budget.
"""

from dataclasses import dataclass

import numpy as np

from .realcomplex import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    embed_vec,
    principal_eigenpair,
    principal_eigenpairs,
    quadratic_form,
    unembed_vec,
)


@dataclass(frozen=True)
class DownlinkCoupling:
    a: np.ndarray  # (..., K, N)
    b: np.ndarray  # (..., K, N)
    sigmaJ_sq: np.ndarray  # (..., K)


@dataclass(frozen=True)
class PrecoderVec:
    x: np.ndarray
    budget: float


@dataclass(frozen=True)
class ZabMatrix:
    M: np.ndarray


def _as_rows(h_rows):
    h = np.asarray(getattr(h_rows, "h", h_rows), dtype=complex)
    return h[..., None, :] if h.ndim == 1 else h


def mrt(h_hat, p_i):
    """Conjugate-matched precoder ``sqrt(p_i) conj(h) / ||h||``."""
    h = np.asarray(getattr(h_hat, "h_hat", h_hat), dtype=complex)
    norm = np.linalg.norm(h, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot match a zero channel estimate")
    return PrecoderVec(np.sqrt(p_i) * np.conj(h) / norm, p_i)


def downlink_coupling(h_rows, prof, symbols=None, sigma2_sq=0.0):
    """Coupling rows ``a`` and ``b`` for ``K`` users; ``h_rows`` is ``(..., K, N)``.

    A 1-D ``h_rows`` is treated as a single user.  ``symbols`` defaults to
    ones (unit-modulus data symbols).
    """
    h = _as_rows(h_rows)
    K, N = h.shape[-2:]
    t1, t2 = np.asarray(prof.tx_source.c1), np.asarray(prof.tx_source.c2)
    r1, r2 = np.asarray(prof.rx_user.c1), np.asarray(prof.rx_user.c2)
    if t1.shape[-1] != N:
        raise ValueError(f"profile covers {t1.shape[-1]} source antennas, channel has {N}")
    if r1.shape[-1] != K:
        raise ValueError(f"profile covers {r1.shape[-1]} users, channel has {K}")
    s = np.ones(K, dtype=complex) if symbols is None else np.asarray(symbols, dtype=complex)
    if s.shape[-1] != K:
        raise ValueError(f"expected {K} symbols, got {s.shape[-1]}")
    t1, t2 = t1[..., None, :], t2[..., None, :]
    r1k, r2k, sk = r1[..., :, None], r2[..., :, None], s[..., :, None]
    hc = np.conj(h)
    a = (r1k * h * t1 + r2k * hc * np.conj(t2)) * sk
    b = (r1k * h * t2 + r2k * hc * np.conj(t1)) * np.conj(sk)
    sigmaJ_sq = (np.abs(r1) ** 2 + np.abs(r2) ** 2) * sigma2_sq
    return DownlinkCoupling(a, b, sigmaJ_sq)


def zab_blocks(c):
    """The complex matrices ``Z_a = a^H a + b^T b*`` and ``Z_b = b^H a + a^T b*``."""
    a, b = c.a, c.b
    Z_a = np.einsum("...ki,...kj->...ij", np.conj(a), a) + np.einsum("...ki,...kj->...ij", b, np.conj(b))
    Z_b = np.einsum("...ki,...kj->...ij", np.conj(b), a) + np.einsum("...ki,...kj->...ij", a, np.conj(b))
    return Z_a, Z_b


def build_zab(c):
    """Real ``2N x 2N`` matrix with ``[Re x; Im x]^T Z_ab [Re x; Im x] = ||a x + b x*||^2``.

    Blocks: ``[[Re Za + Re Zb, -(Im Za + Im Zb)], [Im Za - Im Zb, Re Za - Re Zb]]``.
    """
    Z_a, Z_b = zab_blocks(c)
    top = np.concatenate([Z_a.real + Z_b.real, -(Z_a.imag + Z_b.imag)], axis=-1)
    bottom = np.concatenate([Z_a.imag - Z_b.imag, Z_a.real - Z_b.real], axis=-1)
    M = np.concatenate([top, bottom], axis=-2)
    # exact symmetrization; the blocks are symmetric up to rounding
    return ZabMatrix((M + np.swapaxes(M, -1, -2)) / 2)


def optimal_precoder(c, p_i, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Power-maximizing precoder for coupling ``c``; returns ``(PrecoderVec, lambda_max)``.

    The achieved noiseless power under ``c`` is ``p_i * lambda_max``.
    """
    Z = build_zab(c).M
    if Z.ndim == 2:
        if not np.any(Z):
            raise ValueError("Z_ab is zero; every precoder yields zero power")
        pair = principal_eigenpair(Z, tol, max_iter)
        lam, v = pair.lam, pair.v
    else:
        lam, v = principal_eigenpairs(Z)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    return PrecoderVec(np.sqrt(p_i) * unembed_vec(v), p_i), lam


def coupled_power(c, x):
    """``sum_k |a_k x + b_k x*|**2`` for a coupling and precoder."""
    x = np.asarray(getattr(x, "x", x), dtype=complex)
    y = np.einsum("...kn,...n->...k", c.a, x) + np.einsum("...kn,...n->...k", c.b, np.conj(x))
    return np.sum(np.abs(y) ** 2, axis=-1)


def received_signal_power(h_true_rows, prof, x, symbols=None):
    """Noiseless received signal power (W) of precoder ``x`` over the true channel."""
    return coupled_power(downlink_coupling(h_true_rows, prof, symbols), x)


def zab_power(Z, x):
    return quadratic_form(getattr(Z, "M", Z), embed_vec(np.asarray(getattr(x, "x", x))))
