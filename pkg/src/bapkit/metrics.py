"""Growth diagnostics: EGR/MEGR curves, REGI ratios, sampling and cost accounting."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bap import PerturbationContext
from .dynamics import NormKind, n_steps, step_counter
from .errors import (
    BapkitError,
    DegeneratePerturbationError,
    PreconditionError,
    UndefinedRatioError,
)

__all__ = [
    "GrowthCurve",
    "SampleSet",
    "ContextTemplate",
    "egr_curves",
    "egr_curve",
    "megr",
    "mean_curve",
    "regi",
    "growth_integral",
    "ig_count",
    "cost_ratio",
    "sample_states",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GrowthCurve:
    t: np.ndarray
    egr: np.ndarray

    def __post_init__(self):
        if len(self.t) != len(self.egr):
            raise ValueError("time grid and growth rates differ in length")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("time grid must be strictly increasing")


@dataclass(frozen=True)
class ContextTemplate:
    """Everything of a PerturbationContext except the base state."""

    model: object
    norm: NormKind = NormKind.EUCLIDEAN
    T: float = 0.2
    h: float = 0.015

    def at(self, x0):
        return PerturbationContext(self.model, x0, self.norm, self.T, self.h)


@dataclass
class SampleSet:
    """States drawn from one reference trajectory, plus the lagged states chords need."""

    states: np.ndarray          # count x n
    steps: np.ndarray           # trajectory step index of each state
    times: np.ndarray
    seed: int
    lags: tuple = (0,)
    lagged: np.ndarray | None = None    # count x len(lags) x n

    def __len__(self):
        return len(self.states)

    def history(self, i):
        """Mapping ``lag -> state`` for sample ``i``."""
        if self.lagged is None:
            return {0: self.states[i]}
        return {lag: self.lagged[i, j] for j, lag in enumerate(self.lags)}


def egr_curves(model, norm, x0, V, h, horizon, counter=None):
    """EGR of every column of ``V`` at base state ``x0``; returns ``(t, egr)`` with egr ``steps x k``.

    The base trajectory is integrated once alongside the perturbed ones.
    """
    V = np.asarray(V, dtype=float)
    single = V.ndim == 1
    if single:
        V = V[:, None]
    steps = n_steps(horizon, model.dt)
    x0 = np.asarray(x0, dtype=float)
    x0w = model.to_working(x0, norm)
    X = np.column_stack([x0, model.from_working(x0w[:, None] + h * V, norm)])

    def distances(X):
        W = model.to_working(X, norm)
        # contiguous rows keep the summation order independent of the batch width
        D = np.ascontiguousarray((W[:, 1:] - W[:, :1]).T)
        return np.sqrt(np.sum(D * D, axis=1))

    prev = distances(X)
    if np.any(prev == 0):
        raise DegeneratePerturbationError("perturbation vanishes at t=0")
    egr = np.empty((steps, V.shape[1]))
    done = 0
    try:
        for s in range(steps):
            X = model.step(X, step=s)
            done += 1
            cur = distances(X)
            if np.any(cur == 0):
                raise DegeneratePerturbationError(
                    f"perturbed and base trajectories coincide at step {s + 1}"
                )
            egr[s] = np.log(cur / prev) / model.dt
            prev = cur
    finally:
        step_counter.add(done * X.shape[1])
        if counter is not None:
            counter.add(done * X.shape[1])
    t = model.dt * np.arange(1, steps + 1)
    return t, (egr[:, 0] if single else egr)


def egr_curve(ctx, v, horizon, counter=None):
    """Exponential growth rate of perturbation ``h v`` at ``t = dt, 2 dt, ..., horizon``."""
    t, egr = egr_curves(ctx.model, ctx.norm, ctx.x0, v, ctx.h, horizon, counter)
    return GrowthCurve(t, egr)


def mean_curve(curves):
    """Arithmetic mean of curves on a common grid, summed in list order."""
    if not curves:
        raise PreconditionError("no curves to average")
    total = np.zeros_like(curves[0].egr)
    for c in curves:
        total = total + c.egr
    return GrowthCurve(curves[0].t, total / len(curves))


def megr(template, generator, samples, horizon, max_failure=0.1):
    """Mean EGR over ``samples``; ``generator(ctx, i)`` returns the unit perturbation for sample ``i``.

    Samples whose generator or integration fails are logged and skipped; more
    than ``max_failure`` of them failing aborts.
    """
    if len(samples) < 1:
        raise PreconditionError("megr needs at least one sample")
    curves, failed = [], []
    for i, x0 in enumerate(samples.states):
        ctx = template.at(x0)
        try:
            curves.append(egr_curve(ctx, generator(ctx, i), horizon))
        except BapkitError as exc:
            log.warning("sample %d excluded from MEGR: %s", i, exc)
            failed.append(i)
    if len(failed) > max_failure * len(samples) or not curves:
        raise BapkitError(f"{len(failed)} of {len(samples)} samples failed: {failed}")
    return mean_curve(curves)


def growth_integral(curve, T):
    """Trapezoidal integral of the curve over ``[0, T]``; the value at 0 repeats the first point."""
    t = np.asarray(curve.t)
    keep = t <= T + 1e-9
    if not keep.any() or abs(t[keep][-1] - T) > 1e-9:
        raise PreconditionError(f"curve does not reach T={T}")
    tt = np.concatenate([[0.0], t[keep]])
    yy = np.concatenate([[curve.egr[0]], np.asarray(curve.egr)[keep]])
    return float(np.trapezoid(yy, tt))


def regi(pt_curve, baseline_curve, T):
    """Relative exponential growth integral of ``pt_curve`` against the EIM-SV baseline."""
    if len(pt_curve.t) != len(baseline_curve.t) or not np.allclose(pt_curve.t, baseline_curve.t):
        raise PreconditionError("curves must share a time grid")
    base = growth_integral(baseline_curve, T)
    if not base > 0:
        raise UndefinedRatioError(f"baseline growth integral {base:.4g} is not positive")
    return growth_integral(pt_curve, T) / base


def ig_count(ell, m, T, dt):
    """Model integration steps of one BAP run: ``m l ceil(T/dt)``."""
    return int(m) * int(ell) * n_steps(T, dt)


def cost_ratio(ell, m, n):
    """BAP integrations relative to an explicit EIM (``l m / n``)."""
    return (int(ell) * int(m)) / int(n)


def sample_states(model, spinup_steps=1500, window_steps=10000, count=100, seed=0, lags=(0,)):
    """Draw ``count`` states uniformly from the window following the spin-up.

    States at ``index - lag`` for every lag in ``lags`` are recorded too, so
    chord vectors can be formed later.
    """
    lags = tuple(sorted(set(int(l) for l in lags) | {0}))
    if max(lags) > spinup_steps:
        raise PreconditionError(f"spin-up of {spinup_steps} steps is shorter than the largest lag {max(lags)}")
    if count < 1 or window_steps < 1:
        raise PreconditionError("need count >= 1 and window_steps >= 1")
    rng = np.random.default_rng(seed)
    offsets = rng.choice(window_steps, size=count, replace=count > window_steps)
    steps = np.sort(spinup_steps + offsets)

    wanted = {}
    for i, s in enumerate(steps):
        for j, lag in enumerate(lags):
            wanted.setdefault(int(s) - lag, []).append((i, j))
    lagged = np.empty((count, len(lags), model.n))
    x = model.initial_state()
    last = int(steps[-1])
    done = 0
    try:
        for k in range(last + 1):
            for i, j in wanted.get(k, ()):
                lagged[i, j] = x
            if k < last:
                x = model.step(x, step=k)
                done += 1
    finally:
        step_counter.add(done)
    return SampleSet(
        states=lagged[:, 0].copy(),
        steps=steps,
        times=steps * model.dt,
        seed=seed,
        lags=lags,
        lagged=lagged,
    )
