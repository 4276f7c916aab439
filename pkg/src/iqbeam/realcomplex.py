"""Real composite representations of complex vectors/matrices and the small
dense linear algebra used by the estimator and the precoder.

A complex vector ``u`` of length n maps to ``[Re u; Im u]`` (length 2n) and a
complex matrix ``U`` maps to ``[[Re U, -Im U], [Im U, Re U]]``.  The mapping is
a ring homomorphism, so ``embed_mat(U) @ embed_vec(u) == embed_vec(U @ u)``.
"""

from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000


class SingularSystem(ArithmeticError):
    """Raised when a 2x2 system is numerically singular."""

    def __init__(self, det, threshold):
        self.det = det
        self.threshold = threshold
        super().__init__(f"|det| = {det:.3e} <= threshold {threshold:.3e}")


class NotConverged(ArithmeticError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations (residual {residual:.3e})")


class NotSymmetric(ValueError):
    pass


@dataclass(frozen=True)
class EigenPair:
    lam: float
    v: np.ndarray


def embed_vec(u):
    """Stack real and imaginary parts of ``u`` along the last axis."""
    u = np.asarray(u, dtype=complex)
    return np.concatenate([u.real, u.imag], axis=-1)


def unembed_vec(r):
    r = np.asarray(r, dtype=float)
    n = r.shape[-1]
    if n % 2:
        raise ValueError(f"composite vector must have even length, got {n}")
    return r[..., : n // 2] + 1j * r[..., n // 2:]


def embed_mat(U):
    """Return ``[[Re U, -Im U], [Im U, Re U]]`` (leading axes broadcast)."""
    U = np.asarray(U, dtype=complex)
    top = np.concatenate([U.real, -U.imag], axis=-1)
    bottom = np.concatenate([U.imag, U.real], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def solve2x2(M, r, eps=1e-10):
    """Solve the real 2x2 system ``M x = r`` by Cramer's rule.

    The singularity test is scale free: the system is rejected when
    ``|det M| <= eps * ||M||_F**2``.  Stacks ``(..., 2, 2)`` and ``(..., 2)``
    are solved elementwise; any singular member raises.
    """
    M = np.asarray(M, dtype=float)
    r = np.asarray(r, dtype=float)
    if M.shape[-2:] != (2, 2) or r.shape[-1:] != (2,):
        raise ValueError(f"expected shapes (..., 2, 2) and (..., 2), got {M.shape} and {r.shape}")
    m00, m01, m10, m11 = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    det = m00 * m11 - m01 * m10
    threshold = eps * np.sum(M * M, axis=(-2, -1))
    bad = ~(np.abs(det) > threshold)
    if np.any(bad):
        i = np.flatnonzero(bad.ravel())[0]
        raise SingularSystem(float(np.abs(det).ravel()[i]), float(np.ravel(threshold)[i]))
    return np.stack([(m11 * r[..., 0] - m01 * r[..., 1]) / det,
                     (m00 * r[..., 1] - m10 * r[..., 0]) / det], axis=-1)


def _check_symmetric_psd(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"matrix must be square, got shape {M.shape}")
    scale = np.linalg.norm(M, 2) if M.size else 0.0
    asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    if asym > 1e-10 * scale:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds 1e-10 * ||M|| = {1e-10 * scale:.3e}")
    return M, scale


def power_iteration(M, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, start=None):
    """Plain power iteration on a symmetric PSD matrix.

    Starts from ``start`` (default ``e_0``) and stops once
    ``||M v - lam v|| <= tol * ||M||``.  Converges to the top eigenpair only
    if the start vector is not orthogonal to the top eigenspace, and slowly
    when the top two eigenvalues are close.
    """
    M, scale = _check_symmetric_psd(M)
    n = M.shape[0]
    v = np.zeros(n) if start is None else np.array(start, dtype=float)
    if start is None:
        v[0] = 1.0
    v /= np.linalg.norm(v)
    if scale == 0.0:
        return EigenPair(0.0, v)
    residual = np.inf
    for it in range(1, max_iter + 1):
        w = M @ v
        lam = float(v @ w)
        residual = np.linalg.norm(w - lam * v)
        if residual <= tol * scale:
            return EigenPair(lam, v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return EigenPair(0.0, v)
        v = w / norm
    raise NotConverged(max_iter, residual / scale)


def principal_eigenpair(M, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Largest eigenvalue of a symmetric PSD matrix and a unit eigenvector.

    Uses the LAPACK symmetric solver, which is insensitive to the
    (near-)degenerate top eigenvalues that occur without IQI.  The returned
    pair is checked against ``||M v - lam v|| <= tol * ||M||``; ``max_iter`` is
    accepted for interface parity with :func:`power_iteration`.
    """
    M, scale = _check_symmetric_psd(M)
    w, V = np.linalg.eigh(M)
    if w[0] < -1e-9 * scale:
        raise NotSymmetric(f"matrix is not PSD: smallest eigenvalue {w[0]:.3e}")
    lam = float(w[-1])
    v = V[:, -1]
    residual = np.linalg.norm(M @ v - lam * v)
    if residual > max(tol, 64 * np.finfo(float).eps * M.shape[0]) * scale:
        # eigh is backward stable; this only trips on non-finite input
        raise NotConverged(1, residual / scale if scale else residual)
    return EigenPair(lam, v)


def principal_eigenpairs(M):
    """Batched top eigenpairs for a stack of symmetric matrices ``(..., n, n)``."""
    w, V = np.linalg.eigh(np.asarray(M, dtype=float))
    return w[..., -1], V[..., :, -1]


def quadratic_form(M, v):
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    if M.shape[-2:] != (v.shape[-1], v.shape[-1]):
        raise ValueError(f"dimension mismatch: M {M.shape}, v {v.shape}")
    return np.einsum("...i,...ij,...j->...", v, M, v)
