"""Closed moment systems and their WENO5 / SSP-RK3 integration.

State is a periodic field of (K+1)(N+1) moment coefficients (k major, gPC
minor). The linear transport part is handled in conservative flux form with
global Lax-Friedrichs splitting; the learned gradient term of LG-type closures
is a nonconservative product: coefficients frozen pointwise at cell centers
multiplying centrally averaged WENO derivatives. Runaway solutions terminate
with BlowUpError carrying the failure time (expected for non-hyperbolic
closures - a reportable outcome, not a crash).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .closure import ClosureKind, ClosureModel
from .errors import BlowUpError, ConfigurationError
from .gpc import GpcBasis, SgSourceMatrix, collocation_project
from .hyperbolic import pn_flux_matrix
from .kinetic import DetSine, InitialCondition, UqAmpSine, UqFreqSine
from .weno import weno5_central_derivative, weno5_derivative

BLOWUP_LIMIT = 1e10


def build_pn_matrix(N: int) -> np.ndarray:
    """(N+1)x(N+1) symmetric tridiagonal transport matrix of the closed system."""
    return pn_flux_matrix(N)


@dataclass
class MomentField:
    t: float
    N: int
    K: int
    dx: float
    data: np.ndarray  # (Nx, (K+1)(N+1))
    x_min: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        want = (self.K + 1) * (self.N + 1)
        if self.data.ndim != 2 or self.data.shape[1] != want:
            raise ValueError(f"expected (Nx, {want}) data, got {self.data.shape}")

    @property
    def Nx(self) -> int:
        return self.data.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.Nx)

    def as_blocks(self) -> np.ndarray:
        """(Nx, N+1, K+1) view."""
        return self.data.reshape(self.Nx, self.N + 1, self.K + 1)

    def copy(self) -> "MomentField":
        return replace(self, data=self.data.copy())


@dataclass
class SystemSpec:
    N: int
    K: int
    closure: ClosureModel
    sigma: float | SgSourceMatrix
    alpha_lf: float = 5.0
    cfl: float = 0.1
    weno_nonlinear: bool = True

    def __post_init__(self):
        if self.closure.N != self.N or self.closure.K != self.K:
            raise ConfigurationError(
                f"closure is for N={self.closure.N}, K={self.closure.K}; "
                f"system has N={self.N}, K={self.K}"
            )
        if isinstance(self.sigma, SgSourceMatrix):
            if self.sigma.K != self.K:
                raise ConfigurationError("source matrix truncation disagrees with K")
            self._source = self.sigma.S
        else:
            if self.K != 0:
                raise ConfigurationError("scalar sigma requires K = 0")
            if self.sigma < 0:
                raise ConfigurationError("sigma must be >= 0")
            self._source = np.array([[-float(self.sigma)]])
        self._pn = build_pn_matrix(self.N)
        radius = float(np.max(np.abs(np.linalg.eigvalsh(self._pn))))
        if self.alpha_lf < radius:
            warnings.warn(
                f"alpha_LF={self.alpha_lf} below P_N spectral radius {radius:.3f}",
                stacklevel=2,
            )

    @property
    def gamma(self) -> float:
        """Flux weight sqrt((N+1)/2) on the unclosed moment."""
        return math.sqrt((self.N + 1) / 2.0)


def rhs(field_: MomentField, spec: SystemSpec) -> np.ndarray:
    """Semi-discrete right-hand side dm/dt on the periodic grid."""
    if field_.N != spec.N or field_.K != spec.K:
        raise ConfigurationError("field dimensions disagree with system spec")
    m = field_.data
    m3 = field_.as_blocks()
    kind = spec.closure.kind

    flux3 = np.einsum("kl,xli->xki", spec._pn, m3)
    if kind is ClosureKind.LM:
        flux3 = flux3.copy()
        flux3[:, spec.N, :] += spec.gamma * spec.closure.lm_field(m)
    flux = flux3.reshape(m.shape)

    f_plus = 0.5 * (flux + spec.alpha_lf * m)
    f_minus = 0.5 * (flux - spec.alpha_lf * m)
    dflux = weno5_derivative(f_plus, field_.dx, +1, spec.weno_nonlinear) + weno5_derivative(
        f_minus, field_.dx, -1, spec.weno_nonlinear
    )

    out3 = -dflux.reshape(m3.shape)
    # collision source: block-diagonal, zero block on k = 0
    out3[:, 1:, :] += np.einsum("ij,xkj->xki", spec._source, m3[:, 1:, :])

    if kind in (ClosureKind.LG, ClosureKind.LG_HYPER):
        coeffs = spec.closure.coefficient_field(m)  # (Nx, N+1, K+1)
        dm3 = weno5_central_derivative(m, field_.dx, spec.weno_nonlinear).reshape(m3.shape)
        out3[:, spec.N, :] -= spec.gamma * np.sum(coeffs * dm3, axis=1)
    return out3.reshape(m.shape)


def ssp_rk3_step(field_: MomentField, spec: SystemSpec, dt: float) -> MomentField:
    """Shu-Osher three-stage strong-stability-preserving RK3."""
    u = field_.data
    u1 = u + dt * rhs(field_, spec)
    f1 = replace(field_, data=u1)
    u2 = 0.75 * u + 0.25 * (u1 + dt * rhs(f1, spec))
    f2 = replace(field_, data=u2)
    u3 = u / 3.0 + 2.0 / 3.0 * (u2 + dt * rhs(f2, spec))
    return replace(field_, t=field_.t + dt, data=u3)


def _check_finite(field_: MomentField, snapshots) -> None:
    if not np.all(np.isfinite(field_.data)) or np.max(np.abs(field_.data)) > BLOWUP_LIMIT:
        raise BlowUpError(field_.t, snapshots)


def closure_spectral_radius(field_: MomentField, spec: SystemSpec) -> float:
    """Largest |eigenvalue| of the pointwise closure matrix (deterministic LG only)."""
    if spec.K != 0 or spec.closure.kind not in (ClosureKind.LG, ClosureKind.LG_HYPER):
        return float(np.max(np.abs(np.linalg.eigvalsh(spec._pn))))
    coeffs = spec.closure.coefficient_field(field_.data)[:, :, 0]  # (Nx, N+1)
    A = np.tile(spec._pn, (field_.Nx, 1, 1))
    A[:, spec.N, :] = spec.gamma * coeffs
    A[:, spec.N, spec.N - 1] += math.sqrt(spec.N / 2.0)
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def solve_moment_system(
    initial: MomentField,
    spec: SystemSpec,
    t_final: float,
    snapshot_every: int = 1,
    check_wave_speeds: bool = False,
) -> list[MomentField]:
    """March to t_final with dt = cfl * dx; snapshots include t = 0 and t_final."""
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")
    state = initial.copy()
    snapshots = [state.copy()]
    dt = spec.cfl * initial.dx
    warned = False
    elapsed = 0.0
    step = 0
    while elapsed < t_final - 1e-12:
        h = min(dt, t_final - elapsed)
        state = ssp_rk3_step(state, spec, h)
        elapsed += h
        state.t = initial.t + elapsed
        step += 1
        _check_finite(state, snapshots)
        if step % snapshot_every == 0 or elapsed >= t_final - 1e-12:
            snapshots.append(state.copy())
            if check_wave_speeds and not warned:
                radius = closure_spectral_radius(state, spec)
                if radius > spec.alpha_lf:
                    warnings.warn(
                        f"closure wave speed {radius:.3f} exceeds alpha_LF={spec.alpha_lf}",
                        stacklevel=2,
                    )
                    warned = True
    return snapshots


# ---------------------------------------------------------------------------
# initial moment fields

def initial_moments(
    init: InitialCondition | type,
    Nx: int,
    N: int,
    basis: GpcBasis | None = None,
    M: int = 16,
    x_min: float = 0.0,
    x_max: float = 1.0,
) -> MomentField:
    """Project the kinetic initial data onto moments.

    The velocity profile is exactly Maxwellian, so m_0 = pi^{-1/4} g(x) and all
    higher moments vanish. Deterministic: pass a DetSine/UqAmpSine/UqFreqSine
    instance and leave basis None. SG: pass the initial-condition CLASS
    (UqAmpSine or UqFreqSine) plus the basis; the spatial profile is projected
    at M collocation nodes.
    """
    dx = (x_max - x_min) / Nx
    x = x_min + dx * np.arange(Nx)
    amp = math.pi ** -0.25
    if basis is None:
        profile = init.spatial_profile(x)
        data = np.zeros((Nx, N + 1))
        data[:, 0] = amp * profile
        return MomentField(0.0, N, 0, dx, data, x_min)
    if init not in (UqAmpSine, UqFreqSine) and not isinstance(init, DetSine):
        raise ValueError("SG initial data needs UqAmpSine/UqFreqSine class or DetSine instance")
    K = basis.K
    quad = basis.quadrature(M)
    if isinstance(init, DetSine):
        profiles = np.tile(init.spatial_profile(x)[:, None], (1, quad.n))
    else:
        profiles = np.stack([init(z).spatial_profile(x) for z in quad.nodes], axis=1)
    coeffs = collocation_project(amp * profiles, basis, quad)  # (Nx, K+1)
    data = np.zeros((Nx, (N + 1) * (K + 1)))
    data[:, : K + 1] = coeffs
    return MomentField(0.0, N, K, dx, data, x_min)


def total_moment_mass(field_: MomentField) -> float:
    """Integral of the mean density coefficient (the conserved quantity)."""
    return float(field_.as_blocks()[:, 0, 0].sum() * field_.dx)


# ---------------------------------------------------------------------------
# snapshot files

def snapshot_columns(N: int, K: int) -> list[str]:
    cols = [f"m_{k}^{i}" for k in range(N + 1) for i in range(K + 1)]
    if K > 0:
        for k in range(N + 1):
            cols += [f"mean_m_{k}", f"std_m_{k}"]
    return cols


def write_snapshots_csv(snapshots: list[MomentField], path, meta: dict | None = None) -> None:
    if not snapshots:
        raise ValueError("no snapshots to write")
    first = snapshots[0]
    N, K = first.N, first.K
    cols = snapshot_columns(N, K)
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("t,x," + ",".join(cols) + "\n")
        for snap in snapshots:
            x = snap.x
            blocks = snap.as_blocks()
            extra = None
            if K > 0:
                mean = blocks[:, :, 0]
                std = np.sqrt(np.sum(blocks[:, :, 1:] ** 2, axis=2))
                extra = np.stack([mean, std], axis=2).reshape(snap.Nx, -1)
            for j in range(snap.Nx):
                row = [f"{snap.t:.17g}", f"{x[j]:.17g}"]
                row += [f"{v:.17g}" for v in snap.data[j]]
                if extra is not None:
                    row += [f"{v:.17g}" for v in extra[j]]
                fh.write(",".join(row) + "\n")
    doc = dict(meta or {})
    doc.setdefault("N", N)
    doc.setdefault("K", K)
    doc.update(
        Nx=first.Nx,
        x_min=first.x_min,
        dx=first.dx,
        times=[s.t for s in snapshots],
    )
    with open(Path(str(path) + ".meta.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_snapshots_csv(path):
    """Returns (meta, header columns, times array, per-time data arrays (Nx, ncols))."""
    path = Path(path)
    with open(Path(str(path) + ".meta.json")) as fh:
        meta = json.load(fh)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(raw[:, 0])
    panels = {}
    for t in times:
        rows = raw[raw[:, 0] == t]
        panels[round(float(t), 12)] = rows[:, 1:]
    return meta, header[1:], times, panels
