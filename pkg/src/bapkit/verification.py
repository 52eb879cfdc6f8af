"""Randomized checks of the singular value error theory.

Each check returns a list of :class:`CheckRecord`; a record whose status is
``"fail"`` carries the data needed to replay it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bap import (
    PerturbationContext,
    bap,
    block_arnoldi,
    build_eim,
    chord_vectors,
    random_block,
    subspace_capture_ratio,
)
from .dynamics import NormKind
from .errors import PreconditionError
from .smalldense import (
    arnoldi_relation_residual,
    departure_from_normality,
    lee_forms,
    lemma_bound_check,
    nonnormality_ratios,
    spectral_norm,
    theorem1_bound_check,
)

__all__ = [
    "CheckRecord",
    "random_test_matrix",
    "arnoldi_relation_fixtures",
    "theorem1_trials",
    "lee_identity_checks",
    "lemma_fixtures",
    "eim_normality_checks",
]


@dataclass
class CheckRecord:
    check: str
    case: str
    value: float
    threshold: float
    status: str                     # "pass", "fail" or "warn"
    replay: dict = field(default_factory=dict)


def random_test_matrix(rng, n):
    """Gaussian matrix mixed with its symmetric part, so near-normal and strongly non-normal cases both occur."""
    A = rng.standard_normal((n, n))
    kind = rng.integers(3)
    if kind == 1:
        A = 0.5 * (A + A.T) + 0.1 * A
    elif kind == 2:
        A = np.triu(A)
    return A


def arnoldi_relation_fixtures(n=50, blocks=(1, 3, 5), loops=(1, 5, 10), seed=0, tol=1e-10):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    out = []
    for ell in blocks:
        for m in loops:
            Q1 = random_block(n, ell, (seed, ell, m))
            Q, H, G, *_ = block_arnoldi(lambda X: B @ X, Q1, m, seed)
            res = arnoldi_relation_residual(B, Q, H, G)
            out.append(CheckRecord(
                "arnoldi_relation", f"l={ell},m={m}", res, tol,
                "pass" if res <= tol else "fail",
                {"B": B, "Q1": Q1, "m": m},
            ))
    return out


def theorem1_trials(trials=1000, seed=0, max_n=30, inject_fault=False):
    """Projected singular values vs. the true spectrum for random Arnoldi runs."""
    rng = np.random.default_rng(seed)
    out = []
    for trial in range(trials):
        n = int(rng.integers(2, max_n + 1))
        ell = int(rng.integers(1, min(5, n) + 1))
        m = int(rng.integers(1, n // ell + 1))
        B = random_test_matrix(rng, n)
        Q1 = rng.standard_normal((n, ell))
        Q, H, G, *_ = block_arnoldi(lambda X: B @ X, Q1, m, trial)
        if inject_fault and trial == 0:
            H = H + np.eye(H.shape[0]) * (10.0 * spectral_norm(B) + 1.0)
        replay = {"B": B, "Q": Q, "H": H, "G": G}
        try:
            rep = theorem1_bound_check(B, Q, H, G, seed=trial)
        except PreconditionError as exc:
            out.append(CheckRecord("theorem1", f"trial {trial}: {exc}", np.inf, 0.0, "fail", replay))
            continue
        worst = float(np.max(rep.errors - rep.bound))
        out.append(CheckRecord(
            "theorem1", f"trial {trial} n={n} l={ell} m={m}", worst, 0.0,
            "pass" if rep.holds else "fail", replay,
        ))
    return out


def lee_identity_checks(count=50, seed=0, max_n=30, rtol=1e-8):
    """The three expressions of dep_F^2 agree, and match the Schur-based departure."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(2, max_n + 1))
        M = rng.standard_normal((n, n))
        direct, herm, skew = lee_forms(M)
        dep2 = departure_from_normality(M) ** 2
        scale = max(abs(dep2), 1e-300)
        spread = max(abs(herm - skew), abs(herm - direct), abs(dep2 - herm)) / scale
        out.append(CheckRecord("lee_identity", f"matrix {i} n={n}", spread, rtol,
                               "pass" if spread <= rtol else "fail", {"M": M}))
    return out


def lemma_fixtures(count=20, seed=0):
    """Matrices with a known invariant subspace ``B Q = Q H``."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(4, 21))
        r = int(rng.integers(1, n))
        Z, _ = np.linalg.qr(rng.standard_normal((n, n)))
        Q, W = Z[:, :r], Z[:, r:]
        T = rng.standard_normal((n, n))
        T[r:, :r] = 0.0
        B = Z @ T @ Z.T
        H = T[:r, :r]
        res = lemma_bound_check(B, Q, H, W)
        gap = res["departure_bound"] - res["frobenius"]
        out.append(CheckRecord("lemma_chain", f"fixture {i} n={n} r={r}", gap, 0.0,
                               "pass" if res["holds"] else "fail", {"B": B, "Q": Q, "H": H}))
    return out


def eim_normality_checks(model, states, T=0.2, h=0.015, norm=NormKind.EUCLIDEAN, ratio_limit=0.05,
                         capture_limit=0.8, subspace=(4, 3), seed=0, histories=None):
    """Non-normality ratio of sampled EIMs and the captured norm of a small Krylov subspace.

    With ``histories`` (one ``lag -> state`` mapping per state) the Krylov
    subspace starts from chord vectors, otherwise from a Gaussian block.

    These are empirical observations rather than bounds, so violations are
    reported as ``"warn"``.
    """
    out = []
    ell, m = subspace
    for i, x0 in enumerate(states):
        ctx = PerturbationContext(model, x0, norm, T, h)
        B = build_eim(ctx)
        literal, scaled = nonnormality_ratios(B)
        out.append(CheckRecord("nonnormality_ratio", f"state {i}", literal, ratio_limit,
                               "pass" if literal < ratio_limit else "warn"))
        out.append(CheckRecord("nonnormality_ratio_scaled", f"state {i}", scaled, np.nan, "pass"))
        if histories is None:
            Q1 = random_block(model.n, ell, (seed, i))
        else:
            Q1 = chord_vectors(histories[i], ell, model, norm)
        res = bap(ctx, Q1, m, 1, seed=seed)
        cap = subspace_capture_ratio(res.H, B)
        out.append(CheckRecord("capture_ratio", f"state {i} dim={ell * m}", cap, capture_limit,
                               "pass" if cap > capture_limit else "warn"))
    return out
