"""Finite model of the group Gamma = U_k q^k R_+ and its bicharacter.

A group element is a pair ``(k, j)``: ``k`` is the phase index mod ``N`` and
``j`` the modulus index in the centered window ``{-j0, ..., M-1-j0}``.  It
embeds into C as ``q**k * lam**j``.

The modulus step is ``lam = exp(2*pi/sqrt(N*M))``.  With that choice
``(N/2pi) * log(lam)**2 == 2pi/M``, so the modulus clause of the bicharacter,
``|g|**(N/(2pi i) * log r)``, evaluates on lattice points to
``exp(-2pi i j j'/M)``, a genuine bicharacter of Z_M.  Any other step makes
the clause fail to be periodic in ``j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, RayError

__all__ = [
    "LatticeParams",
    "GroupElement",
    "ZERO",
    "make_lattice",
    "embed",
    "mul",
    "inv",
    "chi",
    "chi_ray",
    "chi_values",
    "ray_coordinates",
    "lattice_distance",
    "lattice_label",
    "group_label",
    "chi_matrix",
    "bulk_indices",
    "bulk_mask",
]


class _Zero:
    """Sentinel for the adjoined point 0 of the closure of Gamma."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ZERO"

    def __reduce__(self):
        return (_Zero, ())


ZERO = _Zero()


class GroupElement(NamedTuple):
    k: int
    j: int


@dataclass(frozen=True)
class LatticeParams:
    N: int
    M: int
    q: complex = field(init=False)
    hbar: float = field(init=False)
    lam: float = field(init=False)
    log_lam: float = field(init=False)
    j0: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "q", complex(np.exp(2j * np.pi / self.N)))
        object.__setattr__(self, "hbar", 2 * math.pi / self.N)
        log_lam = 2 * math.pi / math.sqrt(self.N * self.M)
        object.__setattr__(self, "log_lam", log_lam)
        object.__setattr__(self, "lam", math.exp(log_lam))
        object.__setattr__(self, "j0", self.M // 2)

    @property
    def jmin(self) -> int:
        return -self.j0

    @property
    def jmax(self) -> int:
        return self.M - 1 - self.j0

    @property
    def size(self) -> int:
        return self.N * self.M

    def in_window(self, j: int) -> bool:
        return self.jmin <= j <= self.jmax

    def elements(self) -> list[GroupElement]:
        """All group elements in basis order (phase-major)."""
        return [GroupElement(k, j) for k in range(self.N)
                for j in range(self.jmin, self.jmax + 1)]

    def index(self, g: GroupElement) -> int:
        return (g.k % self.N) * self.M + (g.j + self.j0)

    def element(self, index: int) -> GroupElement:
        k, r = divmod(int(index), self.M)
        return GroupElement(k, r - self.j0)

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """``(ks, js)`` integer arrays in basis order."""
        ks = np.repeat(np.arange(self.N), self.M)
        js = np.tile(np.arange(self.jmin, self.jmax + 1), self.N)
        return ks, js

    def embedded(self) -> np.ndarray:
        """Embedding of every element, in basis order."""
        ks, js = self.index_arrays()
        return np.exp(1j * self.hbar * ks) * self.lam ** js

    def reduce(self, k: int, j: int) -> tuple[GroupElement, bool]:
        """Reduce raw indices into the window; flag when j had to wrap."""
        jr = (j + self.j0) % self.M - self.j0
        return GroupElement(k % self.N, jr), jr != j


def make_lattice(N: int, M: int) -> LatticeParams:
    """Validate ``(N, M)`` and return the populated lattice parameters.

    Raises
    ------
    ParameterError
        If ``N`` is odd or smaller than 6, or ``M < 2``.
    """
    if int(N) != N or int(M) != M:
        raise ParameterError(f"N and M must be integers, got {N!r}, {M!r}")
    N, M = int(N), int(M)
    if N % 2 or N < 6:
        raise ParameterError(f"N must be even and >= 6, got {N}")
    if M < 2:
        raise ParameterError(f"M must be >= 2, got {M}")
    return LatticeParams(N, M)


def embed(g, p: LatticeParams) -> complex:
    if g is ZERO:
        return 0j
    k = g[0] % p.N
    return complex(np.exp(1j * p.hbar * k) * p.lam ** g[1])


def mul(g: GroupElement, h: GroupElement, p: LatticeParams) -> tuple[GroupElement, bool]:
    return p.reduce(g[0] + h[0], g[1] + h[1])


def inv(g: GroupElement, p: LatticeParams) -> tuple[GroupElement, bool]:
    return p.reduce(-g[0], -g[1])


def _phase_turns(k1, j1, k2, j2, p: LatticeParams):
    # exact rational reduction keeps |chi| == 1 and the bicharacter law to ~1e-16
    return ((np.asarray(k1) * k2) % p.N) / p.N - ((np.asarray(j1) * j2) % p.M) / p.M


def chi(g: GroupElement, h: GroupElement, p: LatticeParams) -> complex:
    """Bicharacter on lattice points: ``q**(k k') * exp(-2pi i j j'/M)``."""
    return complex(np.exp(2j * np.pi * _phase_turns(g[0], g[1], h[0], h[1], p)))


def chi_matrix(p: LatticeParams) -> np.ndarray:
    """``chi(g, h)`` for all pairs, rows and columns in basis order."""
    ks, js = p.index_arrays()
    turns = _phase_turns(ks[:, None], js[:, None], ks[None, :], js[None, :], p)
    return np.exp(2j * np.pi * turns)


def ray_coordinates(z, p: LatticeParams, tol: float = 1e-6):
    """Split points of the closure of Gamma into ray index and log-modulus.

    Returns ``(k, logmod, is_zero, angle_err)``.  ``angle_err`` is the angular
    distance to the nearest ray in radians.  Raises RayError when a nonzero
    point is farther than ``tol`` from every ray; pass ``tol=None`` to snap
    unconditionally.
    """
    z = np.asarray(z, dtype=complex)
    absz = np.abs(z)
    is_zero = absz <= 1e-300
    ang = np.angle(np.where(is_zero, 1.0, z))
    kf = ang / p.hbar
    k = np.rint(kf).astype(int)
    err = np.abs(kf - k) * p.hbar
    err = np.where(is_zero, 0.0, err)
    if tol is not None and np.any(err > tol):
        worst = float(err.max())
        raise RayError(f"point off the rays q^k R_+: angular distance {worst:.3e} > {tol:.1e}")
    logmod = np.log(np.where(is_zero, 1.0, absz))
    return k % p.N, logmod, is_zero, err


def chi_values(z1, z2, p: LatticeParams, tol: float = 1e-6) -> np.ndarray:
    """Bicharacter with continuous moduli on both slots (broadcasting).

    ``chi(q^k1 r1, q^k2 r2) = q^(k1 k2) * exp(-i N log r1 log r2 / 2pi)``;
    a zero in either slot gives 1.
    """
    k1, l1, z1z, _ = ray_coordinates(z1, p, tol)
    k2, l2, z2z, _ = ray_coordinates(z2, p, tol)
    turns = ((k1 * k2) % p.N) / p.N
    val = np.exp(2j * np.pi * turns - 1j * p.N * l1 * l2 / (2 * np.pi))
    return np.where(z1z | z2z, 1.0 + 0j, val)


def chi_ray(z, g: GroupElement, p: LatticeParams, tol: float = 1e-6):
    """``chi(z, g)`` for ``z`` anywhere on the rays (or 0) and lattice ``g``."""
    out = chi_values(z, embed(g, p), p, tol)
    return complex(out) if np.ndim(out) == 0 else out


def lattice_distance(z, p: LatticeParams) -> np.ndarray:
    """Relative distance from each point to the lattice ``{q^k lam^j} U {0}``.

    ``j`` ranges over all integers, not just the window.  Zero (or anything
    within 1e-300) has distance 0.
    """
    z = np.asarray(z, dtype=complex)
    absz = np.abs(z)
    k = np.rint(np.angle(np.where(absz > 0, z, 1.0)) / p.hbar)
    j = np.rint(np.log(np.where(absz > 0, absz, 1.0)) / p.log_lam)
    nearest = np.exp(1j * p.hbar * k) * p.lam ** j
    return np.where(absz > 1e-300, np.abs(z - nearest) / np.maximum(absz, 1e-300), 0.0)


def lattice_label(z, p: LatticeParams, tol: float = 1e-6):
    """Nearest lattice element of a point, as ``(k, j)`` with unbounded ``j``.

    Returns ``ZERO`` for points of modulus below ``tol``.
    """
    z = complex(z)
    if abs(z) < tol:
        return ZERO
    k = int(np.rint(np.angle(z) / p.hbar)) % p.N
    j = int(np.rint(np.log(abs(z)) / p.log_lam))
    return GroupElement(k, j)


def group_label(z, p: LatticeParams, tol: float = 1e-6):
    """Like :func:`lattice_label` but with ``j`` reduced into the window."""
    lab = lattice_label(z, p, tol)
    if lab is ZERO:
        return ZERO
    return p.reduce(lab.k, lab.j)[0]


def bulk_indices(p: LatticeParams, fraction: float = 0.5) -> list[int]:
    """Modulus indices of the bulk window: the middle ``fraction`` of the
    window, at least one index, leaning toward ``j = 0``."""
    if not 0 < fraction <= 1:
        raise ParameterError(f"window fraction must be in (0, 1], got {fraction}")
    count = max(1, int(round(fraction * p.M)))
    start = -(-(p.M - count) // 2)
    return list(range(p.jmin + start, p.jmin + start + count))


def bulk_mask(values, p: LatticeParams, fraction: float = 0.5) -> np.ndarray:
    """True for spectral values whose modulus index lies in the bulk window.

    Zero values are never bulk.
    """
    values = np.asarray(values, dtype=complex)
    absv = np.abs(values)
    nz = absv > 1e-12
    j = np.rint(np.log(np.where(nz, absv, 1.0)) / p.log_lam).astype(int)
    return nz & np.isin(j, bulk_indices(p, fraction))
