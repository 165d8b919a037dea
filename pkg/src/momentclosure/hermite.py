"""Normalized Hermite functions, Gaussian quadrature, and velocity-moment projection.

The velocity basis H_k is orthonormal against the weight e^{-v^2}:

    H_0(v) = pi**-0.25,   H_1(v) = sqrt(2) * pi**-0.25 * v,
    H_{k+1}(v) = sqrt(2/(k+1)) v H_k(v) - sqrt(k/(k+1)) H_{k-1}(v).

Moments of a distribution f(v) are m_k = int f H_k dv; on Gauss-Hermite nodes
this becomes sum_q w_q e^{v_q^2} f(v_q) H_k(v_q) because f carries its own
Gaussian decay.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class QuadKind(enum.Enum):
    GAUSS_HERMITE = "gauss-hermite"
    GAUSS_LEGENDRE = "gauss-legendre"
    GAUSS_LAGUERRE = "gauss-laguerre"


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights of a Gaussian rule; weights include the family's weight function."""

    kind: QuadKind
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    @property
    def n(self) -> int:
        return self.nodes.size


def gauss_rule(kind: QuadKind, n: int) -> QuadratureRule:
    """Golub-Welsch: eigen-decompose the symmetric Jacobi matrix of the family.

    One code path serves all three families; weights are mu0 * (first eigenvector
    component)^2 with mu0 the total mass of the weight function.
    """
    if n < 1:
        raise ValueError(f"quadrature order must be >= 1, got {n}")
    k = np.arange(1, n, dtype=float)
    if kind is QuadKind.GAUSS_HERMITE:
        diag = np.zeros(n)
        off = np.sqrt(k / 2.0)
        mu0 = math.sqrt(math.pi)
    elif kind is QuadKind.GAUSS_LEGENDRE:
        diag = np.zeros(n)
        off = k / np.sqrt(4.0 * k * k - 1.0)
        mu0 = 2.0
    elif kind is QuadKind.GAUSS_LAGUERRE:
        diag = 2.0 * np.arange(n, dtype=float) + 1.0
        off = k
        mu0 = 1.0
    else:
        raise ValueError(f"unknown quadrature kind {kind!r}")

    jacobi = np.diag(diag)
    if n > 1:
        jacobi += np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = np.linalg.eigh(jacobi)
    weights = mu0 * vecs[0, :] ** 2
    if kind is QuadKind.GAUSS_HERMITE and n % 2 == 1:
        nodes[n // 2] = 0.0  # symmetric rule: center node is exactly 0
    return QuadratureRule(kind, nodes, weights)


@dataclass(frozen=True)
class HermiteTable:
    """H_0..H_max_order evaluated on a fixed set of points (row k = H_k)."""

    max_order: int
    points: np.ndarray
    values: np.ndarray  # shape (max_order + 1, len(points))


def build_hermite_table(max_order: int, points) -> HermiteTable:
    """Evaluate the normalized Hermite functions by the three-term recurrence."""
    if max_order < 0:
        raise ValueError(f"max_order must be >= 0, got {max_order}")
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    vals = np.empty((max_order + 1, pts.size))
    vals[0] = math.pi ** -0.25
    if max_order >= 1:
        vals[1] = math.sqrt(2.0) * math.pi ** -0.25 * pts
    for k in range(1, max_order):
        vals[k + 1] = (
            math.sqrt(2.0 / (k + 1)) * pts * vals[k]
            - math.sqrt(k / (k + 1.0)) * vals[k - 1]
        )
    return HermiteTable(max_order, pts, vals)


def projection_weights(rule: QuadratureRule) -> np.ndarray:
    """Modified weights w_q e^{v_q^2}: turn Gauss-Hermite sums into plain dv integrals."""
    if rule.kind is not QuadKind.GAUSS_HERMITE:
        raise ValueError("projection weights are defined for Gauss-Hermite rules only")
    return rule.weights * np.exp(rule.nodes**2)


def moments_from_distribution(
    f_at_nodes: np.ndarray,
    rule: QuadratureRule,
    table: HermiteTable,
    k_max: int,
) -> np.ndarray:
    """Project f (sampled on the rule's nodes) onto moments m_0..m_k_max.

    Accepts f of shape (Nv,) or (..., Nv); moments are returned in a trailing
    axis of size k_max + 1.
    """
    f = np.asarray(f_at_nodes, dtype=float)
    if f.shape[-1] != rule.n:
        raise ValueError(
            f"distribution has {f.shape[-1]} velocity samples, rule has {rule.n} nodes"
        )
    if table.values.shape[1] != rule.n or not np.allclose(table.points, rule.nodes):
        raise ValueError("Hermite table was not built on the rule's nodes")
    if k_max > table.max_order:
        raise ValueError(f"k_max={k_max} exceeds table max_order={table.max_order}")
    if k_max >= rule.n:  # H_{k_max}^2 has degree 2k_max > 2n-1: exactness lost
        import warnings

        warnings.warn(
            f"k_max={k_max} is large for an {rule.n}-node rule; moments may be inexact",
            stacklevel=2,
        )
    what = projection_weights(rule)
    # m_k = sum_q (w_q e^{v_q^2}) f_q H_k(v_q)
    return (f * what) @ table.values[: k_max + 1].T
