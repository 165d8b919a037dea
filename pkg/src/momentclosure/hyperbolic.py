"""Hyperbolicity certificates for gradient-learned closure matrices.

The closure matrix A is the symmetric tridiagonal transport matrix with its
last row replaced by learned coefficients (a_{N-2}, a_{N-1}, a_N), zeros
elsewhere. A block-diagonal symmetrizer A_0 = diag(I, B) with B a 2x2 SPD
block exists iff the scalar inequality

    sqrt((N-1)/2) a_{N-1} + a_N a_{N-2} - sqrt(N/2) a_{N-2}^2 > 0

holds; B follows in closed form from a 3x3 linear system solved by Cramer's
rule. For N = 1 the admissible set degenerates to a_0 > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSymmetrizerError, NonHyperbolicError

DEFAULT_MARGIN = 1e-6


def _abc(N: int) -> tuple[float, float, float]:
    """(alpha, beta, gamma) = sqrt((N-1)/2), sqrt(N/2), sqrt((N+1)/2)."""
    return math.sqrt((N - 1) / 2.0), math.sqrt(N / 2.0), math.sqrt((N + 1) / 2.0)


@dataclass(frozen=True)
class ClosureTail:
    """Trailing coefficients of the closure matrix's last row.

    N >= 3: a = (a_{N-2}, a_{N-1}, a_N); N = 1: a = (a_0,).
    """

    N: int
    a: tuple[float, ...]

    def __post_init__(self):
        if self.N == 2 or self.N < 1:
            raise ValueError(f"N must be 1 or >= 3, got {self.N}")
        want = 3 if self.N >= 3 else 1
        if len(self.a) != want:
            raise ValueError(f"N={self.N} tail needs {want} coefficients, got {len(self.a)}")
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))


@dataclass(frozen=True)
class Symmetrizer:
    """The 2x2 block B = [[b1, b2], [b2, b3]] of A_0 = diag(I, B)."""

    b1: float
    b2: float
    b3: float

    def block(self) -> np.ndarray:
        return np.array([[self.b1, self.b2], [self.b2, self.b3]])

    def full(self, N: int) -> np.ndarray:
        a0 = np.eye(N + 1)
        a0[N - 1 :, N - 1 :] = self.block()
        return a0


def coeffs_from_network(net_out, N: int) -> ClosureTail:
    """Map network outputs (n_{N-2}, n_{N-1}, n_N) to last-row coefficients.

    a_j = sqrt((N+1)/2) n_j, plus the transport contribution sqrt(N/2) on the
    j = N-1 slot. Zero network output therefore recovers the closed P_N row.
    """
    if N < 3:
        raise ValueError("coefficient map needs N >= 3; use tail_n1 for N = 1")
    n = np.asarray(net_out, dtype=float)
    if n.shape != (3,):
        raise ValueError(f"expected 3 network outputs, got shape {n.shape}")
    _, beta, gamma = _abc(N)
    return ClosureTail(N, (gamma * n[0], gamma * n[1] + beta, gamma * n[2]))


def tail_n1(n0: float) -> ClosureTail:
    """N = 1 tail: single coefficient a_0 = n_0 + sqrt(1/2)."""
    return ClosureTail(1, (float(n0) + math.sqrt(0.5),))


def hyperbolicity_margin(tail: ClosureTail) -> float:
    """LHS of the hyperbolicity inequality (a_0 itself when N = 1)."""
    if tail.N == 1:
        return tail.a[0]
    alpha, beta, _ = _abc(tail.N)
    am2, am1, an = tail.a
    return alpha * am1 + an * am2 - beta * am2 * am2


def is_hyperbolic(tail: ClosureTail) -> bool:
    return hyperbolicity_margin(tail) > 0.0


def symmetrizer(tail: ClosureTail) -> Symmetrizer:
    """Closed-form Cramer solution of the symmetrizer block equations.

    The 3x3 system comes from requiring A_0 A symmetric:
        alpha b1 + a_{N-2} b2 = alpha
        alpha b2 + a_{N-2} b3 = 0
        beta  b1 + a_N    b2 = a_{N-1} b3
    """
    if tail.N < 3:
        raise ValueError("symmetrizer block is defined for N >= 3")
    if not is_hyperbolic(tail):
        raise NonHyperbolicError(f"tail {tail.a} violates the hyperbolicity inequality")
    alpha, beta, _ = _abc(tail.N)
    am2, am1, an = tail.a
    denom = alpha * (-alpha * am1 - an * am2) + beta * am2 * am2
    if abs(denom) < 1e-14:
        raise DegenerateSymmetrizerError(f"Cramer denominator {denom:.3e} is numerically zero")
    b1 = alpha * (-alpha * am1 - an * am2) / denom
    b2 = alpha * beta * am2 / denom
    b3 = -alpha * alpha * beta / denom
    return Symmetrizer(b1, b2, b3)


def closure_matrix(tail: ClosureTail) -> np.ndarray:
    """Full (N+1)x(N+1) closure matrix: P_N transport block over the learned last row."""
    N = tail.N
    A = pn_flux_matrix(N)
    A[N, :] = 0.0
    if N == 1:
        A[1, 0] = tail.a[0]
    else:
        A[N, N - 2 :] = tail.a
    return A


def pn_flux_matrix(N: int) -> np.ndarray:
    """Symmetric tridiagonal transport matrix with off-diagonal sqrt((k+1)/2)."""
    if N < 1:
        raise ValueError(f"moment order must be >= 1, got {N}")
    off = np.sqrt((np.arange(N) + 1) / 2.0)
    return np.diag(off, 1) + np.diag(off, -1)


def constrain_outputs(raw, N: int, margin: float = DEFAULT_MARGIN) -> np.ndarray:
    """Differentiable map from free network outputs onto the hyperbolic region.

    n_{N-1} is floored at the value solving the constraint as an equality,
    shifted up by softplus(raw[1]) plus margin/(alpha*gamma) so the inequality
    LHS is >= margin for every input.
    """
    if N < 3:
        raise ValueError("three-output constrained head needs N >= 3")
    if margin <= 0:
        raise ValueError("margin must be positive")
    r = np.asarray(raw, dtype=float)
    if r.shape[-1] != 3:
        raise ValueError(f"expected 3 raw outputs, got trailing dim {r.shape[-1]}")
    alpha, beta, gamma = _abc(N)
    u, s, w = r[..., 0], r[..., 1], r[..., 2]
    lower = -(gamma * gamma * (u * w - beta * u * u) + alpha * beta) / (alpha * gamma)
    n1 = lower + _softplus(s) + margin / (alpha * gamma)
    return np.stack([u, n1, w], axis=-1)


def constrain_output_n1(raw, margin: float = DEFAULT_MARGIN) -> np.ndarray:
    """N = 1 head: scalar n_0 > -sqrt(1/2), enforced as -sqrt(1/2) + softplus + margin."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    r = np.asarray(raw, dtype=float)
    return -math.sqrt(0.5) + _softplus(r) + margin


def _softplus(x):
    # log(1 + e^x) computed without overflow for large |x|
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)


def eigen_check(A: np.ndarray, tail: ClosureTail | None = None) -> tuple[float, float]:
    """(max |Im eigenvalue|, Frobenius asymmetry of A_0 A).

    The second entry is NaN when no symmetrizer is available (tail omitted,
    N < 3, or non-hyperbolic).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    eigvals = np.linalg.eigvals(A)
    max_imag = float(np.max(np.abs(eigvals.imag)))
    asym = float("nan")
    if tail is not None and tail.N >= 3 and is_hyperbolic(tail):
        a0 = symmetrizer(tail).full(tail.N)
        m = a0 @ A
        asym = float(np.linalg.norm(m - m.T, "fro"))
    return max_imag, asym
