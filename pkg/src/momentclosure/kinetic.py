"""Deterministic kinetic reference solver for the relaxation transport equation

    df/dt + v df/dx = sigma (M(v) rho - f),   rho = int f dv,

on a periodic unit interval. First-order Lie splitting: upwind transport plus
exact collision relaxation (unconditionally stable, conserves rho pointwise).
Serves as the benchmark and training-data generator; accuracy requirements are
modest (Nx = 100 default) so the scheme favors robustness over order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .hermite import (
    HermiteTable,
    QuadKind,
    QuadratureRule,
    build_hermite_table,
    gauss_rule,
    moments_from_distribution,
    projection_weights,
)

CFL_FACTOR = 0.1  # dt = 0.1 dx


def maxwellian(v: np.ndarray) -> np.ndarray:
    """Normalized Gaussian equilibrium, unit mass: int M dv = 1."""
    return np.exp(-np.asarray(v, dtype=float) ** 2) / math.sqrt(math.pi)


@dataclass(frozen=True)
class KineticGrid:
    Nx: int = 100
    x_min: float = 0.0
    x_max: float = 1.0
    Nv: int = 8
    velocity_rule: QuadratureRule = None

    def __post_init__(self):
        if self.Nx < 4:
            raise ConfigurationError(f"Nx must be >= 4, got {self.Nx}")
        if self.Nv < 2:
            raise ConfigurationError(f"Nv must be >= 2, got {self.Nv}")
        if self.x_max <= self.x_min:
            raise ConfigurationError("empty spatial domain")
        if self.velocity_rule is None:
            object.__setattr__(
                self, "velocity_rule", gauss_rule(QuadKind.GAUSS_HERMITE, self.Nv)
            )
        elif self.velocity_rule.n != self.Nv:
            raise ConfigurationError("velocity rule size disagrees with Nv")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.Nx

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.Nx)

    @property
    def v(self) -> np.ndarray:
        return self.velocity_rule.nodes

    @property
    def dt(self) -> float:
        return CFL_FACTOR * self.dx

    def density_weights(self) -> np.ndarray:
        """Weights for rho = int f dv at the velocity nodes."""
        return projection_weights(self.velocity_rule)


@dataclass
class KineticState:
    t: float
    f: np.ndarray  # (Nx, Nv)


# ---------------------------------------------------------------------------
# initial conditions

@dataclass(frozen=True)
class DetSine:
    """f0 = M(v) (1 + a0 sin 2 pi x); the deterministic test family."""

    a0: float

    def __post_init__(self):
        if not 0.0 <= self.a0 <= 1.0:
            raise ValueError(f"amplitude a0 must be in [0, 1], got {self.a0}")

    def spatial_profile(self, x):
        return 1.0 + self.a0 * np.sin(2 * np.pi * x)


@dataclass(frozen=True)
class UqAmpSine:
    """f0 = M(v) (3 + (1+z) sin 2 pi x); random amplitude, z uniform on [-1, 1]."""

    z: float

    def __post_init__(self):
        if not -1.0 <= self.z <= 1.0:
            raise ValueError(f"z must be in [-1, 1], got {self.z}")

    def spatial_profile(self, x):
        return 3.0 + (1.0 + self.z) * np.sin(2 * np.pi * x)


@dataclass(frozen=True)
class UqFreqSine:
    """f0 = M(v) (2 + sin(2 pi x (1+z))); random frequency, z uniform on [-1, 1]."""

    z: float

    def __post_init__(self):
        if not -1.0 <= self.z <= 1.0:
            raise ValueError(f"z must be in [-1, 1], got {self.z}")

    def spatial_profile(self, x):
        return 2.0 + np.sin(2 * np.pi * x * (1.0 + self.z))


InitialCondition = DetSine | UqAmpSine | UqFreqSine


def initial_condition(kind: InitialCondition, grid: KineticGrid) -> KineticState:
    if not hasattr(kind, "spatial_profile"):
        raise ValueError(f"unknown initial-condition kind {kind!r}")
    profile = kind.spatial_profile(grid.x)
    f = np.outer(profile, maxwellian(grid.v))
    return KineticState(0.0, f)


# ---------------------------------------------------------------------------
# split steps

def collision_step(grid: KineticGrid, state: KineticState, sigma: float, dt: float) -> KineticState:
    """Exact relaxation toward M(v) rho(x); rho is invariant up to roundoff."""
    if sigma < 0:
        raise ValueError("collision frequency must be >= 0")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if sigma == 0.0:
        return KineticState(state.t, state.f.copy())
    rho = state.f @ grid.density_weights()
    decay = math.exp(-sigma * dt)
    f = decay * state.f + (1.0 - decay) * np.outer(rho, maxwellian(grid.v))
    return KineticState(state.t, f)


def transport_step(grid: KineticGrid, state: KineticState, dt: float) -> KineticState:
    """First-order upwind advection of each velocity slice, periodic in x."""
    v = grid.v
    cfl = dt * np.max(np.abs(v)) / grid.dx
    if cfl > 1.0 + 1e-12:
        raise ConfigurationError(f"CFL violation: dt*max|v|/dx = {cfl:.3f} > 1")
    if dt == 0.0:
        return KineticState(state.t, state.f.copy())
    f = state.f
    c = dt / grid.dx * v  # signed Courant number per velocity node
    f_new = f.copy()
    pos = v > 0
    neg = v < 0
    if np.any(pos):
        f_new[:, pos] -= c[pos] * (f[:, pos] - np.roll(f, 1, axis=0)[:, pos])
    if np.any(neg):
        f_new[:, neg] -= c[neg] * (np.roll(f, -1, axis=0)[:, neg] - f[:, neg])
    return KineticState(state.t, f_new)


def solve_kinetic(
    grid: KineticGrid,
    sigma: float,
    init: InitialCondition,
    t_final: float,
    snapshot_every: int = 1,
) -> list[KineticState]:
    """Advance to t_final with dt = 0.1 dx (last step shortened to land exactly).

    Returns snapshots at t = 0, every `snapshot_every`-th step, and t_final.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")
    state = initial_condition(init, grid)
    snapshots = [KineticState(0.0, state.f.copy())]
    dt = grid.dt
    t = 0.0
    step = 0
    while t < t_final - 1e-12:
        h = min(dt, t_final - t)
        state = transport_step(grid, state, h)
        if sigma > 0:
            state = collision_step(grid, state, sigma, h)
        t += h
        step += 1
        state.t = t
        if step % snapshot_every == 0 or t >= t_final - 1e-12:
            snapshots.append(KineticState(t, state.f.copy()))
    return snapshots


# ---------------------------------------------------------------------------
# diagnostics / projection

def hermite_table_for(grid: KineticGrid, k_max: int) -> HermiteTable:
    return build_hermite_table(k_max, grid.v)


def moments_of_state(
    grid: KineticGrid, state: KineticState, k_max: int, table: HermiteTable | None = None
) -> np.ndarray:
    """(Nx, k_max+1) array of Hermite moments of the snapshot."""
    if table is None:
        table = hermite_table_for(grid, k_max)
    return moments_from_distribution(state.f, grid.velocity_rule, table, k_max)


def total_mass(grid: KineticGrid, state: KineticState) -> float:
    rho = state.f @ grid.density_weights()
    return float(rho.sum() * grid.dx)
