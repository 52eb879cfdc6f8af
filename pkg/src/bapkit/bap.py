"""Evolved increments, the explicit EIM oracle and block Arnoldi perturbations (BAP).

The evolved increment function (EIF) of a direction ``v`` is
``phi_T(x0 + h v) - phi_T(x0)``.  Stacking the increments of the unit vectors
gives the evolved increment matrix (EIM); its leading right singular vector
(EIM-SV) is the perturbation being approximated.  BAP builds a block Krylov
basis of the EIM without forming it, using the EIF itself as the matvec, and
returns the leading right singular vector of the projected block Hessenberg
matrix lifted back through the basis.

All vectors live in *working coordinates*: the model state for the Euclidean
norm, energy-transformed SWM coordinates for the total-energy norm.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import NormKind, StepCounter, n_steps, propagate
from .errors import (
    BapkitError,
    BreakdownError,
    InsufficientHistoryError,
    OffManifoldError,
    PreconditionError,
)
from .smalldense import RANK_TOL, orthonormalize, qr_thin, spectral_norm, svd

__all__ = [
    "PerturbationContext",
    "BapResult",
    "BreakdownEvent",
    "eif",
    "build_eim",
    "eim_leading_sv",
    "chord_vectors",
    "chord_lags",
    "random_block",
    "block_arnoldi",
    "bap",
    "leading_perturbations",
    "subspace_capture_ratio",
    "linearity_defect",
]

log = logging.getLogger(__name__)

CHORD_STRIDE = 15
CHORD_SPAN = 2
MAX_BREAKDOWNS_PER_LOOP = 3


class PerturbationContext:
    """Base state, optimization time and amplitude shared by all EIF evaluations.

    The evolved base state is computed once, on first use, and reused.
    """

    def __init__(self, model, x0, norm=NormKind.EUCLIDEAN, T=0.2, h=0.015):
        if not T >= 0:
            raise PreconditionError("optimization time T must be non-negative")
        if not h > 0:
            raise PreconditionError("perturbation amplitude h must be positive")
        self.model = model
        self.norm = model.check_norm(norm)
        self.x0 = np.asarray(x0, dtype=float)
        if self.x0.shape != (model.n,):
            raise PreconditionError(f"x0 has shape {self.x0.shape}, expected ({model.n},)")
        self.T = float(T)
        self.h = float(h)
        self._x0_working = None
        self._base = None

    @property
    def n(self):
        return self.model.n

    @property
    def steps(self):
        return n_steps(self.T, self.model.dt)

    @property
    def x0_working(self):
        if self._x0_working is None:
            self._x0_working = self.model.to_working(self.x0, self.norm)
        return self._x0_working

    def base_evolved(self, counter=None):
        """``phi_T(x0)`` in working coordinates (cached)."""
        if self._base is None:
            evolved = propagate(self.x0, self.T, self.model, counter)
            self._base = self.model.to_working(evolved, self.norm)
        return self._base


def eif(ctx, v, counter=None):
    """Evolved increment of direction ``v`` (a vector, or an ``n x b`` block of columns)."""
    V = np.asarray(v, dtype=float)
    base = ctx.base_evolved(counter)
    x0w = ctx.x0_working
    if V.ndim == 2:
        x0w = x0w[:, None]
        base = base[:, None]
    try:
        start = ctx.model.from_working(x0w + ctx.h * V, ctx.norm)
    except OffManifoldError as exc:
        raise OffManifoldError(f"perturbed state is unphysical: {exc}") from exc
    evolved = propagate(start, ctx.T, ctx.model, counter)
    return ctx.model.to_working(evolved, ctx.norm) - base


def build_eim(ctx, counter=None, chunk=512):
    """Explicit ``n x n`` EIM; column ``i`` is ``eif(ctx, e_i)``."""
    n = ctx.n
    ctx.base_evolved(counter)
    Y = np.empty((n, n))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        E = np.zeros((n, hi - lo))
        E[np.arange(lo, hi), np.arange(hi - lo)] = 1.0
        try:
            Y[:, lo:hi] = eif(ctx, E, counter)
        except BapkitError:
            for i in range(lo, hi):
                try:
                    Y[:, i] = eif(ctx, E[:, i - lo], counter)
                except BapkitError as exc:
                    raise type(exc)(f"EIM column {i} failed: {exc}") from exc
            raise
    return Y


def eim_leading_sv(ctx, k=1, counter=None):
    """First ``k`` singular triplets of the explicit EIM (the expensive oracle)."""
    return svd(build_eim(ctx, counter), k)


# ---------------------------------------------------------------------------
# Start blocks


def chord_lags(count, stride=CHORD_STRIDE, span=CHORD_SPAN):
    """Step lags (back from t0) whose states are needed for ``count`` chords."""
    lags = []
    for j in range(count):
        lags += [j * stride, j * stride + span]
    return sorted(set(lags))


def chord_vectors(history, count, model=None, norm=NormKind.EUCLIDEAN,
                  stride=CHORD_STRIDE, span=CHORD_SPAN):
    """Differences of past trajectory states, newest first, each scaled to unit norm.

    ``history`` maps a lag in steps back from t0 (0 is t0 itself) to the
    physical state at that time; a callable ``lag -> state`` works too.
    Column ``j`` is ``x(t0 - j*stride) - x(t0 - j*stride - span)`` in working
    coordinates.  Zero chords are left unnormalized so a later
    orthonormalization reports the rank deficiency.
    """
    get = history if callable(history) else history.__getitem__
    needed = (count - 1) * stride + span

    def state(lag):
        try:
            x = get(lag)
        except (KeyError, IndexError) as exc:
            raise InsufficientHistoryError(
                f"{count} chord vectors need {needed} steps of history before t0; lag {lag} is missing"
            ) from exc
        x = np.asarray(x, dtype=float)
        return x if model is None else model.to_working(x, norm)

    cols = []
    for j in range(count):
        c = state(j * stride) - state(j * stride + span)
        nrm = np.linalg.norm(c)
        cols.append(c / nrm if nrm > 0 else c)
    return np.column_stack(cols)


def random_block(n, ell, seed):
    """``n x ell`` standard Gaussian block from a seeded generator."""
    if ell > n:
        raise PreconditionError(f"block size {ell} exceeds dimension {n}")
    return np.random.default_rng(seed).standard_normal((n, ell))


# ---------------------------------------------------------------------------
# Block Arnoldi


@dataclass(frozen=True)
class BreakdownEvent:
    loop: int
    column: int
    norm: float


@dataclass
class BapResult:
    P: np.ndarray               # n x k perturbations
    sigmas: np.ndarray          # singular values of H
    H: np.ndarray               # (l m) x (l m) block Hessenberg projection
    Q: np.ndarray               # n x (l m) orthonormal basis
    G: np.ndarray               # n x l residual block of the last loop
    Q_next: np.ndarray          # orthonormal factor of G
    H_next: np.ndarray          # l x l subdiagonal block with G = Q_next H_next
    block_size: int
    iterations: int
    breakdowns: list = field(default_factory=list)
    integration_steps: int = 0

    def truncated(self, m, k=1):
        """Perturbations from the first ``m`` loops (the Krylov bases are nested)."""
        return leading_perturbations(self.Q, self.H, self.block_size, m, k)


def _replace_column(Qn, c, Qprev, rng):
    n = Qn.shape[0]
    others = np.hstack([Qprev, np.delete(Qn, c, axis=1)])
    for _ in range(MAX_BREAKDOWNS_PER_LOOP):
        w = rng.standard_normal(n)
        for _ in range(2):
            w -= others @ (others.T @ w)
        nrm = np.linalg.norm(w)
        if nrm > 1e-8:
            Qn[:, c] = w / nrm
            return
    raise BreakdownError("could not find a replacement direction orthogonal to the basis")


def block_arnoldi(matvec, Q1, m, seed=0):
    """Run ``m`` loops of block Arnoldi with block classical Gram-Schmidt (two passes).

    ``matvec`` maps an ``n x l`` block to an ``n x l`` block.  Returns
    ``(Q, H, G, Q_next, H_next, breakdowns)`` with
    ``B Q = Q H + G E^T`` for an exact linear ``matvec``.
    """
    Qblk = orthonormalize(Q1)
    n, ell = Qblk.shape
    if m < 1:
        raise PreconditionError("need at least one Arnoldi loop")
    if m * ell > n:
        raise PreconditionError(f"Krylov dimension {m * ell} exceeds n={n}")
    rng = np.random.default_rng(seed)
    blocks = [Qblk]
    H = np.zeros(((m + 1) * ell, m * ell))
    breakdowns = []
    G = None
    for j in range(m):
        W = np.array(matvec(blocks[j]), dtype=float)
        # breakdown is judged against the image size, not the remainder's own
        scale = spectral_norm(W)
        Qprev = np.hstack(blocks)
        cols = slice(j * ell, (j + 1) * ell)
        for _ in range(2):
            C = Qprev.T @ W
            W -= Qprev @ C
            H[: (j + 1) * ell, cols] += C
        G = W.copy()
        Qn, R, bad = qr_thin(W, RANK_TOL * scale)
        H[(j + 1) * ell:(j + 2) * ell, cols] = R
        if bad and j < m - 1:
            if len(bad) > MAX_BREAKDOWNS_PER_LOOP:
                raise BreakdownError(
                    f"{len(bad)} rank breakdowns in Arnoldi loop {j + 1} (columns {bad})"
                )
            for c in bad:
                breakdowns.append(BreakdownEvent(j + 1, c, float(np.linalg.norm(W[:, c]))))
                log.info("Arnoldi breakdown in loop %d, column %d; replacing", j + 1, c)
                _replace_column(Qn, c, Qprev, rng)
        blocks.append(Qn)
    Q = np.hstack(blocks[:m])
    return Q, H[: m * ell, :], G, blocks[m], H[m * ell:, (m - 1) * ell:], breakdowns


def leading_perturbations(Q, H, ell, m, k=1):
    """First ``k`` columns of ``Q V`` from the SVD of the leading ``m`` block loops."""
    r = m * ell
    if k > r:
        raise PreconditionError(f"k={k} exceeds the subspace dimension {r}")
    trips = svd(H[:r, :r], k)
    P = np.empty((Q.shape[0], k))
    for i, t in enumerate(trips):
        p = Q[:, :r] @ t.right
        if p[np.argmax(np.abs(p))] < 0:
            p = -p
        P[:, i] = p
    return P, np.array([t.sigma for t in trips])


def bap(ctx, Q1, m, k=1, seed=0):
    """Block Arnoldi perturbations of the EIM at ``ctx`` from start block ``Q1``."""
    Q1 = np.atleast_2d(np.asarray(Q1, dtype=float))
    if Q1.shape[0] != ctx.n and Q1.shape[1] == ctx.n:
        Q1 = Q1.T
    ell = Q1.shape[1]
    if not 1 <= k <= m * ell:
        raise PreconditionError(f"need 1 <= k <= m*l, got k={k}, m*l={m * ell}")
    counter = StepCounter()
    Q, H, G, Q_next, H_next, events = block_arnoldi(
        lambda X: eif(ctx, X, counter), Q1, m, seed
    )
    P, _ = leading_perturbations(Q, H, ell, m, k)
    return BapResult(
        P=P,
        sigmas=np.linalg.svd(H, compute_uv=False),
        H=H,
        Q=Q,
        G=G,
        Q_next=Q_next,
        H_next=H_next,
        block_size=ell,
        iterations=m,
        breakdowns=events,
        integration_steps=counter.value,
    )


def subspace_capture_ratio(H, B):
    """``||H||_2 / ||B||_2``: how much of the EIM the projection retains."""
    return spectral_norm(H) / spectral_norm(B)


def linearity_defect(ctx, V, B=None, counter=None):
    """Relative gap ``||B v - eif(v)|| / ||eif(v)||`` per column of ``V``.

    Measures how far the EIM-times-vector approximation of the EIF is from
    the nonlinear increment; it should shrink linearly with ``h``.
    """
    V = np.asarray(V, dtype=float)
    single = V.ndim == 1
    if single:
        V = V[:, None]
    if B is None:
        B = build_eim(ctx, counter)
    E = eif(ctx, V, counter)
    out = np.linalg.norm(B @ V - E, axis=0) / np.linalg.norm(E, axis=0)
    return out[0] if single else out
