"""Test systems, fixed-step integrators and the SWM energy coordinates.

Two models are provided:

* Lorenz96 with forcing ``F`` on ``K`` cyclic nodes, advanced by classical RK4.
* A 2-D shallow water model on a square ``mesh x mesh`` grid (spacing ``dz``),
  advanced by the two-step Richtmyer Lax-Wendroff scheme with reflective
  (u = v = 0) walls.

States are flat float vectors.  Any trailing axes are treated as a batch of
independent states, so ``x`` of shape ``(n, b)`` propagates ``b`` columns at
once.  All arithmetic is elementwise, so a column gives bitwise the same
result whether it is integrated alone or inside a batch.

SWM layout: ``[h | u | v]``, each block a ``mesh x mesh`` grid stored row-major
(first grid axis is ``z1``, second is ``z2``).
"""

from __future__ import annotations

import enum
import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidModelError, NumericalBlowupError, OffManifoldError

__all__ = [
    "NormKind",
    "ModelSpec",
    "LinearModel",
    "StepCounter",
    "CFLWarning",
    "step_counter",
    "l96_rhs",
    "rk4_step",
    "lax_wendroff_step",
    "propagate",
    "n_steps",
    "energy_transform",
    "inverse_transform",
    "total_energy",
    "swm_fields",
    "swm_pack",
    "boundary_mask",
]

G_DEFAULT = 9.81
STEP_TOL = 1e-9


class NormKind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    TOTAL_ENERGY = "total_energy"


class CFLWarning(RuntimeWarning):
    pass


class StepCounter:
    """Thread-safe tally of single-state integration steps."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    def add(self, k):
        with self._lock:
            self._value += int(k)

    @property
    def value(self):
        with self._lock:
            return self._value

    def reset(self):
        with self._lock:
            self._value = 0


#: process-wide counter incremented by every :func:`propagate` call
step_counter = StepCounter()


# ---------------------------------------------------------------------------
# Lorenz96


def l96_rhs(state, F):
    """Lorenz96 tendency ``-y[i-2] y[i-1] + y[i-1] y[i+1] - y[i] + F`` (cyclic)."""
    y = np.asarray(state, dtype=float)
    if y.shape[0] < 4:
        raise InvalidModelError(f"Lorenz96 needs K > 3, got K={y.shape[0]}")
    ym1 = np.roll(y, 1, axis=0)
    ym2 = np.roll(y, 2, axis=0)
    yp1 = np.roll(y, -1, axis=0)
    return (yp1 - ym2) * ym1 - y + F


def rk4_step(state, dt, F, step=None):
    """One classical RK4 step of Lorenz96."""
    y = np.asarray(state, dtype=float)
    # overflow is reported below as a blowup, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = l96_rhs(y, F)
        k2 = l96_rhs(y + 0.5 * dt * k1, F)
        k3 = l96_rhs(y + 0.5 * dt * k2, F)
        k4 = l96_rhs(y + dt * k3, F)
        out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowupError("Lorenz96 state became non-finite", step)
    return out


# ---------------------------------------------------------------------------
# Shallow water


def _mesh_from_length(n):
    N = math.isqrt(n // 3)
    if 3 * N * N != n:
        raise InvalidModelError(f"state length {n} is not 3 * mesh**2")
    return N


def swm_fields(state):
    """Return views ``(h, u, v)`` of shape ``(mesh, mesh, *batch)``."""
    x = np.asarray(state, dtype=float)
    N = _mesh_from_length(x.shape[0])
    grids = x.reshape((3, N, N) + x.shape[1:])
    return grids[0], grids[1], grids[2]


def swm_pack(h, u, v):
    N = h.shape[0]
    return np.stack([h, u, v]).reshape((3 * N * N,) + h.shape[2:])


def boundary_mask(mesh):
    """Boolean ``mesh x mesh`` grid, True on the outer ring of points."""
    mask = np.zeros((mesh, mesh), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    return mask


def _swm_fluxes(h, U, V, g):
    """Fluxes of (h, hu, hv) along z1 and z2."""
    F = (U, U * U / h + 0.5 * g * h * h, U * V / h)
    G = (V, U * V / h, V * V / h + 0.5 * g * h * h)
    return F, G


def _corner_differences(f, gg):
    """z1 and z2 differences of point values, each averaged onto cell corners."""
    dx = 0.5 * ((f[1:, 1:] - f[:-1, 1:]) + (f[1:, :-1] - f[:-1, :-1]))
    dy = 0.5 * ((gg[1:, 1:] - gg[1:, :-1]) + (gg[:-1, 1:] - gg[:-1, :-1]))
    return dx, dy


def _richtmyer(h, U, V, g, r):
    """Two-step Lax-Wendroff update of conservative (h, hu, hv); r = dt/dz.

    The half step lives on cell corners and uses both flux directions, which
    keeps the scheme free of the weak diagonal instability of face-by-face
    predictors.  Walls sit half a cell outside the boundary points.  Ghost
    values mirror the boundary points: h and the tangential momentum are even,
    the normal momentum is odd, so no mass crosses a wall.
    """
    width = ((1, 1), (1, 1)) + ((0, 0),) * (h.ndim - 2)
    hp = np.pad(h, width, mode="edge")
    Up = np.pad(U, width, mode="edge")
    Vp = np.pad(V, width, mode="edge")
    Up[0] *= -1
    Up[-1] *= -1
    Vp[:, 0] *= -1
    Vp[:, -1] *= -1

    F, G = _swm_fluxes(hp, Up, Vp, g)
    half = []
    for q, f, gg in zip((hp, Up, Vp), F, G):
        dx, dy = _corner_differences(f, gg)
        avg = 0.25 * (q[1:, 1:] + q[:-1, 1:] + q[1:, :-1] + q[:-1, :-1])
        half.append(avg - 0.5 * r * (dx + dy))

    F, G = _swm_fluxes(*half, g)
    new = []
    for q, f, gg in zip((h, U, V), F, G):
        dx, dy = _corner_differences(f, gg)
        new.append(q - r * (dx + dy))
    return tuple(new)


def lax_wendroff_step(state, spec, step=None):
    """Advance a physical SWM state by ``spec.dt``; velocities vanish on the boundary."""
    h, u, v = swm_fields(state)
    if np.any(h <= 0):
        raise DomainError("SWM state has non-positive height")
    speed = np.max(np.abs(u) + np.sqrt(spec.g * h), initial=0.0)
    courant = max(speed, float(np.max(np.abs(v) + np.sqrt(spec.g * h), initial=0.0)))
    courant *= spec.dt / spec.dz
    if courant > 1:
        warnings.warn(f"CFL number {courant:.3f} exceeds 1", CFLWarning, stacklevel=2)

    with np.errstate(over="ignore", invalid="ignore"):
        h_new, U, V = _richtmyer(h, h * u, h * v, spec.g, spec.dt / spec.dz)
    if not np.all(h_new > 0):
        raise NumericalBlowupError("SWM height became non-positive or non-finite", step)
    with np.errstate(over="ignore", invalid="ignore"):
        u_new = U / h_new
        v_new = V / h_new
    wall = boundary_mask(h.shape[0])
    u_new[wall] = 0.0
    v_new[wall] = 0.0
    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
        raise NumericalBlowupError("SWM velocity became non-finite", step)
    return swm_pack(h_new, u_new, v_new)


def energy_transform(state, g=G_DEFAULT):
    """Map a physical SWM state to coordinates whose squared 2-norm is the total energy.

    ``h~ = sqrt(g/2) h``, ``u~ = sqrt(h/2) u``, ``v~ = sqrt(h/2) v``.
    """
    h, u, v = swm_fields(state)
    if np.any(h <= 0):
        raise DomainError("energy transform needs h > 0 everywhere")
    s = np.sqrt(0.5 * h)
    return swm_pack(math.sqrt(0.5 * g) * h, s * u, s * v)


def inverse_transform(tstate, g=G_DEFAULT):
    ht, ut, vt = swm_fields(tstate)
    if np.any(ht <= 0):
        raise OffManifoldError(
            "transformed height is non-positive; the perturbation left the "
            "physical manifold (reduce the amplitude)"
        )
    h = ht * math.sqrt(2.0 / g)
    s = np.sqrt(2.0 / h)
    return swm_pack(h, ut * s, vt * s)


def total_energy(state, g=G_DEFAULT, dz=1.0):
    """``1/2 sum[h (u^2 + v^2) + g h^2] dz^2`` over all grid points."""
    h, u, v = swm_fields(state)
    density = h * (u * u + v * v) + g * h * h
    return 0.5 * density.sum(axis=(0, 1)) * dz * dz


# ---------------------------------------------------------------------------
# Model specifications


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    dt: float = 0.01
    F: float = 8.0
    K: int = 50
    g: float = G_DEFAULT
    domain_extent: float = 22.0
    mesh: int = 23

    def __post_init__(self):
        if self.kind not in ("lorenz96", "swm"):
            raise InvalidModelError(f"unknown model kind {self.kind!r}")
        if not self.dt > 0:
            raise InvalidModelError("dt must be positive")
        if self.kind == "lorenz96" and self.K < 4:
            raise InvalidModelError(f"Lorenz96 needs K > 3, got K={self.K}")
        if self.kind == "swm" and self.mesh < 3:
            raise InvalidModelError("SWM mesh needs at least 3 points per side")

    @classmethod
    def lorenz96(cls, F=8.0, K=50, dt=0.01):
        return cls("lorenz96", dt=dt, F=F, K=K)

    @classmethod
    def shallow_water(cls, g=G_DEFAULT, mesh=23, domain_extent=22.0, dt=0.01):
        return cls("swm", dt=dt, g=g, mesh=mesh, domain_extent=domain_extent)

    @property
    def n(self):
        return self.K if self.kind == "lorenz96" else 3 * self.mesh * self.mesh

    @property
    def dz(self):
        return self.domain_extent / (self.mesh - 1)

    def step(self, x, step=None):
        if self.kind == "lorenz96":
            return rk4_step(x, self.dt, self.F, step)
        return lax_wendroff_step(x, self, step)

    def initial_state(self):
        """Deterministic start: perturbed fixed point (L96) or a resting central bump (SWM)."""
        if self.kind == "lorenz96":
            x = np.full(self.K, float(self.F))
            x[0] += 0.01
            return x
        z = np.arange(self.mesh) * self.dz
        c = 0.5 * self.domain_extent
        r2 = (z[:, None] - c) ** 2 + (z[None, :] - c) ** 2
        h = 10.0 + 1.5 * np.exp(-r2 / 8.0)
        zero = np.zeros_like(h)
        return swm_pack(h, zero, zero.copy())

    def check_norm(self, norm):
        norm = NormKind(norm)
        if norm is NormKind.TOTAL_ENERGY and self.kind != "swm":
            raise InvalidModelError("the total-energy norm is only defined for the SWM")
        return norm

    def to_working(self, x, norm):
        if self.check_norm(norm) is NormKind.TOTAL_ENERGY:
            return energy_transform(x, self.g)
        return np.asarray(x, dtype=float)

    def from_working(self, xw, norm):
        if self.check_norm(norm) is NormKind.TOTAL_ENERGY:
            return inverse_transform(xw, self.g)
        return np.asarray(xw, dtype=float)


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Linear test double: one step maps ``x`` to ``step_matrix @ x``."""

    step_matrix: np.ndarray
    dt: float = 0.01
    x_init: np.ndarray | None = field(default=None)

    @property
    def n(self):
        return self.step_matrix.shape[0]

    def step(self, x, step=None):
        return self.step_matrix @ x

    def initial_state(self):
        return np.zeros(self.n) if self.x_init is None else np.array(self.x_init, dtype=float)

    def check_norm(self, norm):
        norm = NormKind(norm)
        if norm is not NormKind.EUCLIDEAN:
            raise InvalidModelError("linear test models only support the Euclidean norm")
        return norm

    def to_working(self, x, norm):
        self.check_norm(norm)
        return np.asarray(x, dtype=float)

    def from_working(self, xw, norm):
        self.check_norm(norm)
        return np.asarray(xw, dtype=float)


# ---------------------------------------------------------------------------
# Propagation


def n_steps(T, dt):
    """Steps needed to cover ``T``: the nearest integer if within 1e-9, else the ceiling."""
    if T < 0:
        raise ValueError(f"T must be non-negative, got {T}")
    ratio = T / dt
    k = round(ratio)
    if abs(T - k * dt) <= STEP_TOL:
        return int(k)
    return int(math.ceil(ratio))


def _batch_width(x):
    return int(np.prod(x.shape[1:], dtype=int))


def propagate(state, T, model, counter=None):
    """Integrate ``state`` (or a batch of column states) over time ``T``."""
    steps = n_steps(T, model.dt)
    x = np.asarray(state, dtype=float)
    width = _batch_width(x)
    done = 0
    try:
        for k in range(steps):
            x = model.step(x, step=k)
            done += 1
    finally:
        step_counter.add(done * width)
        if counter is not None:
            counter.add(done * width)
    return x
