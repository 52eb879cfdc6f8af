"""Dense linear algebra for the projected problems and the theory checks.

Gram-Schmidt routines are written out here (CGS with one full
reorthogonalization pass); the SVD, eigenvalues and Schur forms come from
LAPACK through numpy/scipy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, PreconditionError, RankDeficiencyError

__all__ = [
    "SingularTriplet",
    "orthonormalize",
    "qr_thin",
    "svd",
    "sign_normalize",
    "orthonormal_completion",
    "departure_from_normality",
    "lee_forms",
    "nonnormality_ratio",
    "nonnormality_ratios",
    "spectral_norm",
    "theorem1_bound_check",
    "arnoldi_relation_residual",
    "lemma_bound_check",
    "Theorem1Report",
]

RANK_TOL = 1e-12


@dataclass(frozen=True)
class SingularTriplet:
    sigma: float
    left: np.ndarray
    right: np.ndarray


def spectral_norm(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def _cgs2(A, tol):
    """Column-by-column classical Gram-Schmidt, two passes.

    Returns (Q, R, deficient) where deficient lists columns whose remaining
    norm fell below ``tol``; those columns of Q are left at zero.
    """
    A = np.array(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    rows, cols = A.shape
    Q = np.zeros((rows, cols))
    R = np.zeros((cols, cols))
    deficient = []
    for j in range(cols):
        w = A[:, j].copy()
        for _ in range(2):
            c = Q[:, :j].T @ w
            w -= Q[:, :j] @ c
            R[:j, j] += c
        nrm = np.linalg.norm(w)
        if nrm <= tol:
            deficient.append(j)
            continue
        R[j, j] = nrm
        Q[:, j] = w / nrm
    return Q, R, deficient


def orthonormalize(block):
    """Orthonormal basis of the column span of ``block`` (CGS2).

    Raises RankDeficiencyError when a column is numerically dependent on
    the previous ones.
    """
    A = np.atleast_2d(np.asarray(block, dtype=float))
    if A.shape[1] > A.shape[0]:
        raise PreconditionError(f"cannot orthonormalize {A.shape[1]} columns in dimension {A.shape[0]}")
    tol = RANK_TOL * spectral_norm(A)
    Q, _, bad = _cgs2(A, tol)
    if bad or tol == 0:
        raise RankDeficiencyError("block is numerically rank deficient", bad or range(A.shape[1]))
    return Q


def qr_thin(W, tol=None):
    """Thin QR ``W = Q R`` with non-negative diagonal of R.

    Near-dependent columns do not abort: the corresponding diagonal entry of R
    is zero, the column of Q is zero, and the indices are returned as the
    third element so the caller can handle the breakdown.  The default
    threshold is ``1e-12 ||W||_2``; pass ``tol`` to measure against another scale.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] < W.shape[1]:
        raise PreconditionError("qr_thin needs rows >= cols")
    if tol is None:
        tol = RANK_TOL * spectral_norm(W)
    Q, R, bad = _cgs2(W, tol)
    return Q, R, bad


def sign_normalize(left, right):
    """Flip both vectors so that the largest-magnitude entry of ``right`` is positive."""
    i = int(np.argmax(np.abs(right)))
    if right[i] < 0:
        return -left, -right
    return left, right


def svd(M, k=None):
    """Singular triplets of ``M`` sorted by decreasing sigma (first ``k`` if given)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise ValueError("svd input has non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD did not converge for a {M.shape} matrix: {exc}") from exc
    count = len(s) if k is None else min(k, len(s))
    out = []
    for i in range(count):
        left, right = sign_normalize(U[:, i], Vt[i])
        out.append(SingularTriplet(float(s[i]), left.copy(), right.copy()))
    return out


def orthonormal_completion(Q, seed=0):
    """Columns W such that ``(Q, W)`` is orthogonal; QR of ``(Q | gaussian)``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n, r = Q.shape
    if r >= n:
        return np.zeros((n, 0))
    rng = np.random.default_rng(seed)
    A = np.hstack([Q, rng.standard_normal((n, n - r))])
    full, _ = np.linalg.qr(A)
    W = full[:, r:]
    # second projection keeps W orthogonal to the given Q, not LAPACK's copy of it
    W = W - Q @ (Q.T @ W)
    W, _ = np.linalg.qr(W)
    return W


# ---------------------------------------------------------------------------
# Normality diagnostics


def _square(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise PreconditionError(f"expected a square matrix, got {M.shape}")
    return M


def departure_from_normality(M):
    """Henrici departure ``||N||_F`` of the strictly upper part of the Schur form."""
    M = _square(M)
    try:
        T, _ = scipy.linalg.schur(M, output="complex")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceError(f"Schur decomposition failed: {exc}") from exc
    return float(np.linalg.norm(np.triu(T, 1)))


def lee_forms(M):
    """``dep_F(M)^2`` evaluated three ways: definition, hermitian part, skew part.

    Returns (from_eigenvalues, from_hermitian_part, from_skew_part).
    """
    M = _square(M)
    try:
        lam = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigenvalues did not converge: {exc}") from exc
    fro2 = np.sum(M * M)
    sym = 0.5 * (M + M.T)
    skew = 0.5 * (M - M.T)
    direct = fro2 - np.sum(np.abs(lam) ** 2)
    herm = 2.0 * (np.sum(sym * sym) - np.sum(lam.real ** 2))
    sk = 2.0 * (np.sum(skew * skew) - np.sum(lam.imag ** 2))
    return float(direct), float(herm), float(sk)


def nonnormality_ratios(M):
    """Commutator norm over ``||M||_2`` and over ``||M||_2^2``."""
    M = _square(M)
    comm = spectral_norm(M @ M.T - M.T @ M)
    nrm = spectral_norm(M)
    if nrm == 0:
        return 0.0, 0.0
    return comm / nrm, comm / nrm ** 2


def nonnormality_ratio(M):
    """``||M M^T - M^T M||_2 / ||M||_2``, taken literally (not scale invariant)."""
    return nonnormality_ratios(M)[0]


# ---------------------------------------------------------------------------
# Singular value error bounds


@dataclass
class Theorem1Report:
    sigmas: np.ndarray          # singular values of H_r
    nearest: np.ndarray         # closest singular value of B for each
    errors: np.ndarray          # |nearest - sigma|
    bound: float                # (1/sqrt 2) sqrt(||Q^T B W||^2 + ||G||^2)
    coupling: float             # ||Q^T B W||_2
    residual: float             # ||G||_2
    arnoldi_residual: float     # ||B Q - Q H - G E^T||_F / ||B||_F
    lemma: dict | None = None

    @property
    def margins(self):
        return self.bound - self.errors

    @property
    def holds(self):
        slack = 1e-12 * max(1.0, float(np.max(self.sigmas, initial=0.0)))
        return bool(np.all(self.margins >= -slack))


def arnoldi_relation_residual(B, Qr, Hr, Gr):
    """Relative Frobenius residual of ``B Q = Q H + G E^T`` (G fills the last block columns)."""
    B = np.asarray(B, dtype=float)
    Qr = np.atleast_2d(Qr)
    Gr = np.zeros((Qr.shape[0], 0)) if Gr is None else np.atleast_2d(Gr)
    R = B @ Qr - Qr @ Hr
    ell = Gr.shape[1]
    if ell:
        R[:, -ell:] -= Gr
    scale = np.linalg.norm(B)
    return float(np.linalg.norm(R) / scale) if scale > 0 else float(np.linalg.norm(R))


def theorem1_bound_check(B, Qr, Hr, Gr, tol=1e-10, seed=0):
    """Check every singular value of ``Hr`` against the true spectrum of ``B``."""
    B = _square(B)
    Qr = np.atleast_2d(np.asarray(Qr, dtype=float))
    Hr = np.atleast_2d(np.asarray(Hr, dtype=float))
    res = arnoldi_relation_residual(B, Qr, Hr, Gr)
    if res > tol:
        raise PreconditionError(f"Arnoldi relation residual {res:.3e} exceeds {tol:.1e}")
    Wr = orthonormal_completion(Qr, seed)
    coupling = spectral_norm(Qr.T @ B @ Wr)
    gnorm = spectral_norm(Gr) if Gr is not None else 0.0
    bound = np.sqrt(0.5 * (coupling ** 2 + gnorm ** 2))

    sig_B = np.linalg.svd(B, compute_uv=False)
    sig_H = np.linalg.svd(Hr, compute_uv=False)
    dist = np.abs(sig_B[None, :] - sig_H[:, None])
    nearest = sig_B[np.argmin(dist, axis=1)]
    report = Theorem1Report(
        sigmas=sig_H,
        nearest=nearest,
        errors=np.min(dist, axis=1),
        bound=float(bound),
        coupling=coupling,
        residual=gnorm,
        arnoldi_residual=res,
    )
    if gnorm <= tol * max(1.0, spectral_norm(B)):
        report.lemma = lemma_bound_check(B, Qr, Hr, Wr)
    return report


def lemma_bound_check(B, Q, H, W=None):
    """Chain ``||Q^T B W||_2 <= ||Q^T B W||_F <= sqrt(dep(B)^2 - dep(H)^2)`` for an invariant Q."""
    if W is None:
        W = orthonormal_completion(Q)
    C = Q.T @ B @ W
    two = spectral_norm(C)
    fro = float(np.linalg.norm(C))
    gap = departure_from_normality(B) ** 2 - departure_from_normality(H) ** 2
    dep_bound = float(np.sqrt(max(gap, 0.0)))
    slack = 1e-8 * max(1.0, float(np.linalg.norm(B)))
    return {
        "two_norm": two,
        "frobenius": fro,
        "departure_bound": dep_bound,
        "holds": bool(two <= fro + slack and fro <= dep_bound + slack),
    }
