"""The multiplicative unitary ``W = F(a b^-1 (x) b) chi(b^-1 (x) I, I (x) a)``,
its pentagon residual and the comultiplication checks.

Approximate checks are compressed to the bulk window: on every leg, the
spectral subspace of ``a`` whose modulus index lies in the middle
``window`` fraction of the lattice window.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MemoryBudgetError, NormalityError, PreconditionError, RayError
from .lattice import LatticeParams, bulk_mask, chi_values, ray_coordinates
from .linalg import (
    DEFAULT_POLICY,
    SpectralDecomposition,
    TolerancePolicy,
    apply_legs,
    fro,
    nearest_normal,
    rel_normality,
)
from .qexp import QExp, qexp_eval
from .schrodinger import GPair

__all__ = [
    "MultUnitary",
    "build_W",
    "bicharacter_factor",
    "bulk_basis",
    "leg_residual",
    "pentagon_residual",
    "comultiply",
    "delta_checks",
    "DENSE_BUDGET",
    "NORMALITY_GATE",
    "RAY_GATE",
]

DENSE_BUDGET = 4096  # largest three-leg dimension materialized densely (NM = 16)
NORMALITY_GATE = 1e-6
RAY_GATE = 1e-4


@dataclass
class MultUnitary:
    W: np.ndarray
    pair: GPair = field(repr=False)
    F: QExp = field(repr=False)
    report: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def lattice(self) -> LatticeParams:
        return self.pair.lattice


def _inverse_dec(dec: SpectralDecomposition) -> SpectralDecomposition:
    return SpectralDecomposition(1.0 / dec.eigenvalues, dec.basis, dec.clusters)


def bicharacter_factor(c_dec: SpectralDecomposition, a_dec: SpectralDecomposition,
                       p: LatticeParams) -> np.ndarray:
    """``chi(c (x) I, I (x) a)`` on the product eigenbasis."""
    nx, ny = len(c_dec.eigenvalues), len(a_dec.eigenvalues)
    x = np.repeat(c_dec.eigenvalues, ny)
    y = np.tile(a_dec.eigenvalues, nx)
    vals = chi_values(x, y, p, tol=None)
    U = np.kron(c_dec.basis, a_dec.basis)
    return (U * vals) @ U.conj().T


def qexp_factor(d_dec: SpectralDecomposition, b_dec: SpectralDecomposition,
                F: QExp) -> np.ndarray:
    """``F(d (x) b)`` on the product eigenbasis (values snapped to rays)."""
    vals = qexp_eval(F, np.kron(d_dec.eigenvalues, b_dec.eigenvalues), tol=None)
    U = np.kron(d_dec.basis, b_dec.basis)
    return (U * vals) @ U.conj().T


def build_W(pair: GPair, F: QExp, surrogate: bool = False,
            policy: TolerancePolicy = DEFAULT_POLICY) -> MultUnitary:
    """Assemble W from the pair and the quantum exponential.

    ``a b^-1`` must be normal to ``1e-6`` (relative) with spectrum within
    ``1e-4`` rad of the rays.  On the finite window ``a b^-1`` is not normal;
    ``surrogate=True`` then uses its nearest normal surrogate, snaps its
    eigenvalues to the nearest ray, and records the departure and the snap
    distance in the report instead of raising.

    Raises
    ------
    PreconditionError
        If b has a kernel.
    NormalityError, RayError
        On the measured violations described above (unless ``surrogate``).
    """
    p = pair.lattice
    if np.min(np.abs(pair.b_dec.eigenvalues)) <= 1e-12:
        raise PreconditionError("b has a nontrivial kernel; W needs b^-1")
    binv_dec = _inverse_dec(pair.b_dec)
    binv = binv_dec.reconstruct()
    X = pair.a @ binv
    normality = rel_normality(X)
    if normality > NORMALITY_GATE and not surrogate:
        raise NormalityError(f"a b^-1 normality residual {normality:.3e} > {NORMALITY_GATE:.0e}",
                             normality)
    X_dec = nearest_normal(X, policy, sectors=p.N)
    ray = float(ray_coordinates(X_dec.eigenvalues, p, None)[3].max())
    if ray > RAY_GATE and not surrogate:
        raise RayError(f"spectrum of a b^-1 is {ray:.3e} rad off the rays")
    W = qexp_factor(X_dec, pair.b_dec, F) @ bicharacter_factor(binv_dec, pair.a_dec, p)
    n2 = W.shape[0]
    report = {
        "normality_ab_inv": normality,
        "surrogate": bool(surrogate and normality > NORMALITY_GATE),
        "surrogate_departure": float(X_dec.departure),
        "ray_distance": ray,
        "unitarity": fro(W.conj().T @ W - np.eye(n2)),
        "degenerate": F.degenerate,
    }
    return MultUnitary(W, pair, F, report)


def bulk_basis(dec: SpectralDecomposition, p: LatticeParams, window: float) -> np.ndarray:
    """Orthonormal columns spanning the bulk spectral subspace of ``dec``."""
    return dec.basis[:, bulk_mask(dec.eigenvalues, p, window)]


def _legwise(Qs, T: np.ndarray, adjoint: bool) -> np.ndarray:
    """Apply ``Q1 (x) Q2 (x) Q3`` (or its adjoint) to tensors ``(d1, d2, d3, nv)``."""
    A, B, C = [Q.conj().T if adjoint else Q for Q in Qs]
    return np.einsum("ia,jb,kc,abcv->ijkv", A, B, C, T, optimize=True)


def leg_residual(lhs, rhs, dims, Qs, structured: bool = False, probes: int = 64,
                 seed: int = 0, budget: int = DENSE_BUDGET) -> float:
    """Bulk-compressed relative norm of ``prod(lhs) - prod(rhs)`` on three legs.

    ``lhs`` and ``rhs`` list ``(X, pattern)`` factors left to right, with
    ``pattern`` one of ``'12'``, ``'13'``, ``'23'``.  ``Qs`` are the bulk
    bases of the three legs.  The dense value is
    ``||Q* D Q||_F / sqrt(dim Q)``, computed exactly by applying the factors
    leg by leg to every bulk basis vector; the structured value is the root
    mean square of ``||Q* D Q g||`` over unit Gaussian probes ``g``, an
    unbiased estimate of the same quantity.

    Raises
    ------
    MemoryBudgetError
        When the three-leg dimension exceeds ``budget`` and ``structured``
        is off.
    """
    d = int(np.prod(dims))
    r = [Q.shape[1] for Q in Qs]
    rr = int(np.prod(r))
    if rr == 0:
        return 0.0
    if not structured:
        if d > budget:
            raise MemoryBudgetError(
                f"three-leg dimension {d} exceeds the dense budget {budget}; use structured mode")
        # exact: the probes are the whole bulk basis
        G = np.eye(rr, dtype=complex)
    else:
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((rr, probes)) + 1j * rng.standard_normal((rr, probes))
        G /= np.linalg.norm(G, axis=0)
    nv = G.shape[1]
    X0 = _legwise(Qs, G.reshape(r[0], r[1], r[2], nv), adjoint=False).reshape(d, nv)

    def run(factors):
        Y = X0
        for X, pat in reversed(factors):
            Y = apply_legs(X, pat, dims, Y)
        return Y

    D = (run(lhs) - run(rhs)).reshape(dims[0], dims[1], dims[2], nv)
    PD = _legwise(Qs, D, adjoint=True).reshape(rr, nv)
    return float(np.sqrt(np.mean(np.sum(np.abs(PD) ** 2, axis=0))))


def pentagon_residual(Wu: MultUnitary, window: float = 0.5, structured: bool = False,
                      probes: int = 64, seed: int = 0, budget: int = DENSE_BUDGET) -> float:
    """Bulk residual of ``W23 W12 = W12 W13 W23``."""
    n = Wu.pair.dim
    Q = bulk_basis(Wu.pair.a_dec, Wu.lattice, window)
    W = Wu.W
    return leg_residual([(W, "23"), (W, "12")], [(W, "12"), (W, "13"), (W, "23")],
                        (n, n, n), (Q, Q, Q), structured, probes, seed, budget)


def comultiply(Wu: MultUnitary, x) -> np.ndarray:
    """``W (x (x) I) W*``."""
    x = np.asarray(x, dtype=complex)
    n = Wu.pair.dim
    if x.shape != (n, n):
        raise PreconditionError(f"expected a {n}x{n} operator, got {x.shape}")
    return Wu.W @ np.kron(x, np.eye(n)) @ Wu.W.conj().T


def _bulk_rel(D, ref, Q2) -> float:
    den = fro(Q2.conj().T @ ref @ Q2)
    num = fro(Q2.conj().T @ D @ Q2)
    return num / den if den > 0 else num


def delta_checks(Wu: MultUnitary, pair: GPair | None = None,
                 window: float = 0.5) -> tuple[float, float]:
    """Bulk-relative residuals of ``Delta(a) = a (x) a`` and
    ``Delta(b) = a (x) b + b (x) I``."""
    pair = pair or Wu.pair
    n = pair.dim
    Q = bulk_basis(pair.a_dec, pair.lattice, window)
    Q2 = np.kron(Q, Q)
    I = np.eye(n)
    ta = np.kron(pair.a, pair.a)
    tb = np.kron(pair.a, pair.b) + np.kron(pair.b, I)
    res_a = _bulk_rel(comultiply(Wu, pair.a) - ta, ta, Q2)
    res_b = _bulk_rel(comultiply(Wu, pair.b) - tb, tb, Q2)
    return res_a, res_b
