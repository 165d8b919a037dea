"""Orthonormal gPC bases (Legendre/uniform, Laguerre/exponential) and the
stochastic-Galerkin machinery built on them: collision source matrices,
collocation projection, and mean/std extraction from coefficient vectors.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .hermite import QuadKind, QuadratureRule, gauss_rule


class BasisKind(enum.Enum):
    LEGENDRE_UNIFORM = "legendre-uniform"  # pi(z) = 1/2 on [-1, 1]
    LAGUERRE_EXPONENTIAL = "laguerre-exponential"  # pi(z) = e^{-z} on [0, inf)


_QUAD_FAMILY = {
    BasisKind.LEGENDRE_UNIFORM: QuadKind.GAUSS_LEGENDRE,
    BasisKind.LAGUERRE_EXPONENTIAL: QuadKind.GAUSS_LAGUERRE,
}


@dataclass(frozen=True)
class GpcBasis:
    """Orthonormal polynomial family truncated at order K; phi_0 is identically 1."""

    kind: BasisKind
    K: int = 4

    def __post_init__(self):
        if self.K < 0:
            raise ValueError(f"truncation order must be >= 0, got {self.K}")

    @property
    def quad_kind(self) -> QuadKind:
        return _QUAD_FAMILY[self.kind]

    def quadrature(self, n: int = 16) -> QuadratureRule:
        """Gauss rule of the matching family (weights integrate against the raw weight fn)."""
        return gauss_rule(self.quad_kind, n)

    def measure_weights(self, rule: QuadratureRule) -> np.ndarray:
        """Quadrature weights against the probability measure pi(z) dz.

        Gauss-Legendre weights carry plain dz (total 2), so the uniform density
        1/2 is folded in here; Gauss-Laguerre weights already include e^{-z}.
        """
        if rule.kind is not self.quad_kind:
            raise ConfigurationError(
                f"{self.kind.value} basis needs a {self.quad_kind.value} rule, got {rule.kind.value}"
            )
        if self.kind is BasisKind.LEGENDRE_UNIFORM:
            return rule.weights * 0.5
        return rule.weights


def eval_basis(basis: GpcBasis, z, up_to: int | None = None) -> np.ndarray:
    """phi_0..phi_up_to at z (scalar or array); trailing axis indexes the order.

    Legendre: raw three-term recurrence, then the sqrt(2i+1) normalization that
    makes the family orthonormal against pi(z) = 1/2. Laguerre polynomials are
    orthonormal against e^{-z} as-is.
    """
    if up_to is None:
        up_to = basis.K
    if up_to > basis.K:
        raise ValueError(f"order {up_to} exceeds truncation K={basis.K}")
    zz = np.asarray(z, dtype=float)
    scalar = zz.ndim == 0
    zz = np.atleast_1d(zz)

    if basis.kind is BasisKind.LEGENDRE_UNIFORM:
        if np.any(zz < -1.0) or np.any(zz > 1.0):
            raise ValueError("Legendre basis support is [-1, 1]")
        vals = np.empty((up_to + 1, zz.size))
        vals[0] = 1.0
        if up_to >= 1:
            vals[1] = zz
        for i in range(1, up_to):
            vals[i + 1] = ((2 * i + 1) * zz * vals[i] - i * vals[i - 1]) / (i + 1)
        norms = np.sqrt(2.0 * np.arange(up_to + 1) + 1.0)
        vals = vals * norms[:, None]
    else:
        if np.any(zz < 0.0):
            raise ValueError("Laguerre basis support is [0, inf)")
        vals = np.empty((up_to + 1, zz.size))
        vals[0] = 1.0
        if up_to >= 1:
            vals[1] = 1.0 - zz
        for i in range(1, up_to):
            vals[i + 1] = ((2 * i + 1 - zz) * vals[i] - i * vals[i - 1]) / (i + 1)

    out = vals.T
    return out[0] if scalar else out


@dataclass(frozen=True)
class SgSourceMatrix:
    """Galerkin collision matrix S_ij = -int sigma(z) phi_j phi_i pi(z) dz."""

    S: np.ndarray
    sigma_desc: str = ""

    def __post_init__(self):
        object.__setattr__(self, "S", np.asarray(self.S, dtype=float))

    @property
    def K(self) -> int:
        return self.S.shape[0] - 1


def build_source_matrix(
    sigma_fn, basis: GpcBasis, quad: QuadratureRule, sigma_desc: str = ""
) -> SgSourceMatrix:
    """Quadrature assembly of the (K+1)x(K+1) source matrix; symmetrized exactly."""
    w = basis.measure_weights(quad)  # raises on family mismatch
    if quad.n < basis.K + 2:
        raise ConfigurationError(
            f"quadrature order {quad.n} too low for K={basis.K} source assembly"
        )
    phi = eval_basis(basis, quad.nodes)  # (M, K+1)
    sig = np.asarray(sigma_fn(quad.nodes), dtype=float)
    if sig.ndim == 0:
        sig = np.full(quad.n, float(sig))
    S = -(phi * (sig * w)[:, None]).T @ phi
    S = 0.5 * (S + S.T)
    return SgSourceMatrix(S, sigma_desc)


def collocation_project(samples: np.ndarray, basis: GpcBasis, quad: QuadratureRule) -> np.ndarray:
    """gPC coefficients of a function known at the rule's nodes.

    coefficient_i = sum_j samples(z_j) phi_i(z_j) w_j with w_j the probability-
    measure weights. Trailing sample axis must match the node count; leading
    axes are batched.
    """
    s = np.asarray(samples, dtype=float)
    if s.shape[-1] != quad.n:
        raise ValueError(f"{s.shape[-1]} samples but rule has {quad.n} nodes")
    w = basis.measure_weights(quad)
    phi = eval_basis(basis, quad.nodes)  # (M, K+1)
    return (s * w) @ phi


def mean_and_std(coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean = coefficient on phi_0; std = l2 norm of the higher coefficients.

    Works on a single coefficient vector or batched with the gPC index last.
    """
    c = np.asarray(coeffs, dtype=float)
    mean = c[..., 0]
    std = np.sqrt(np.sum(c[..., 1:] ** 2, axis=-1))
    return mean, std
