"""Dense complex linear algebra: spectral decompositions, functional calculus,
the z-transform and tensor-leg plumbing.

Single normal matrices go through LAPACK (``eigh`` / complex Schur); families
of commuting matrices, and the nearest-normal surrogate of a non-normal
matrix, go through a complex Jacobi joint diagonalization (Cardoso and
Souloumiac's rotation rule, fixed cyclic sweep order).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import CommutationError, NormalityError, PreconditionError, RayError

__all__ = [
    "TolerancePolicy",
    "DEFAULT_POLICY",
    "SpectralDecomposition",
    "fro",
    "rel_normality",
    "rel_commutator",
    "hermitian_eig",
    "normal_eig",
    "nearest_normal",
    "joint_diag",
    "funcalc",
    "bifuncalc",
    "kron_funcalc",
    "kron_bifuncalc",
    "z_transform",
    "z_inverse",
    "kron",
    "place_legs",
    "apply_legs",
    "off_diagonal_mass",
]


@dataclass(frozen=True)
class TolerancePolicy:
    """Every tolerance used by the numerical checks, in one place."""

    hermitian: float = 1e-10
    normal: float = 1e-8
    commute: float = 1e-8
    cluster: float = 1e-8
    snap: float = 1e-6
    ray: float = 1e-6
    jacobi: float = 1e-14
    jacobi_sweeps: int = 200

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "TolerancePolicy":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    def with_(self, **kw) -> "TolerancePolicy":
        return replace(self, **kw)


DEFAULT_POLICY = TolerancePolicy()


@dataclass
class SpectralDecomposition:
    """Eigenvalues with a unitary eigenbasis (columns of ``basis``).

    For joint decompositions ``joint`` holds one row of eigenvalues per family
    member and ``eigenvalues`` is its first row.  ``departure`` is the
    Frobenius distance between the input and its reconstruction, relative to
    the input; it is the quantity of interest for surrogates of non-normal
    matrices.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray
    clusters: list = field(default_factory=list)
    joint: np.ndarray | None = None
    departure: float = 0.0

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def reconstruct(self, values=None) -> np.ndarray:
        vals = self.eigenvalues if values is None else values
        U = self.basis
        return (U * vals) @ U.conj().T

    def apply(self, f: Callable) -> np.ndarray:
        return self.reconstruct(np.asarray(f(self.eigenvalues), dtype=complex))

    def unitarity(self) -> float:
        U = self.basis
        return fro(U.conj().T @ U - np.eye(U.shape[1]))


def fro(X) -> float:
    return float(np.linalg.norm(X))


def _rel(num: float, den: float) -> float:
    return num / den if den > 0 else num


def rel_normality(T) -> float:
    """``||T T* - T* T||_F / ||T||_F**2``."""
    T = np.asarray(T)
    return _rel(fro(T @ T.conj().T - T.conj().T @ T), fro(T) ** 2)


def rel_commutator(A, B) -> float:
    """``||AB - BA||_F / (||A||_F ||B||_F)``."""
    return _rel(fro(A @ B - B @ A), fro(A) * fro(B))


def off_diagonal_mass(X) -> float:
    """Frobenius norm of the off-diagonal part relative to the whole."""
    X = np.asarray(X)
    off = X - np.diag(np.diag(X))
    return _rel(fro(off), fro(X))


def _canonical_phases(U: np.ndarray) -> np.ndarray:
    # largest component of each column real positive; ties broken by lowest index
    idx = np.argmax(np.round(np.abs(U), 12), axis=0)
    ph = U[idx, np.arange(U.shape[1])]
    ph = np.where(np.abs(ph) > 0, ph / np.abs(ph), 1.0)
    return U / ph


def _clusters(values: np.ndarray, tol: float) -> list:
    """Partition indices so that values within ``tol`` share a cluster."""
    vals = np.atleast_2d(values)
    n = vals.shape[1]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    dist = np.zeros((n, n))
    for row in vals:
        dist = np.maximum(dist, np.abs(row[:, None] - row[None, :]))
    for i, j in zip(*np.nonzero(np.triu(dist <= tol, 1))):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [np.array(g) for g in groups.values()]


def _order_key(values: np.ndarray, sectors: int | None) -> np.ndarray:
    vals = np.atleast_2d(values)
    keys = []
    for row in vals[::-1]:
        ang = np.mod(np.angle(row), 2 * np.pi)
        if sectors:
            sec = np.mod(np.rint(ang / (2 * np.pi / sectors)), sectors)
            keys += [np.round(ang, 9), np.round(np.abs(row), 9), sec]
        else:
            keys += [np.round(np.abs(row), 9), np.round(ang, 9)]
    # np.lexsort sorts by the last key first
    return np.lexsort(keys)


def hermitian_eig(T, policy: TolerancePolicy = DEFAULT_POLICY) -> SpectralDecomposition:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.

    Raises
    ------
    PreconditionError
        When ``||T - T*||_F > policy.hermitian * ||T||_F``.
    """
    T = np.asarray(T, dtype=complex)
    dev = fro(T - T.conj().T)
    if dev > policy.hermitian * max(fro(T), 1e-300):
        raise PreconditionError(f"matrix is not Hermitian: ||T - T*|| = {dev:.3e}")
    w, U = np.linalg.eigh((T + T.conj().T) / 2)
    U = _canonical_phases(U)
    scale = max(float(np.max(np.abs(w))) if w.size else 0.0, 1e-300)
    return SpectralDecomposition(w.astype(float), U, _clusters(w, policy.cluster * scale))


def normal_eig(T, sectors: int | None = None,
               policy: TolerancePolicy = DEFAULT_POLICY) -> SpectralDecomposition:
    """Unitary eigen-decomposition of a normal matrix.

    Eigenvalues are ordered by angular sector (``sectors`` equal sectors, or
    plain angle when ``None``), then modulus.

    Raises
    ------
    NormalityError
        When ``||TT* - T*T||_F > policy.normal * ||T||_F**2``; the measured
        value is attached.
    """
    T = np.asarray(T, dtype=complex)
    res = rel_normality(T)
    if res > policy.normal:
        raise NormalityError(f"matrix is not normal: relative commutator {res:.3e}", res)
    Tt, Z = sla.schur(T, output="complex")
    w = np.diag(Tt).copy()
    order = _order_key(w, sectors)
    w, Z = w[order], _canonical_phases(Z[:, order])
    scale = max(float(np.max(np.abs(w))) if w.size else 0.0, 1e-300)
    dec = SpectralDecomposition(w, Z, _clusters(w, policy.cluster * scale))
    dec.departure = _rel(fro(T - dec.reconstruct()), fro(T))
    return dec


def _jacobi_sweeps(A: np.ndarray, V: np.ndarray, tol: float, max_sweeps: int) -> int:
    """Cyclic complex Jacobi rotations jointly reducing off-diagonal mass.

    ``A`` has shape (K, n, n) and is rotated in place along with ``V``.
    Returns the number of sweeps performed.
    """
    n = A.shape[1]
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for r in range(p + 1, n):
                g = np.stack([A[:, p, p] - A[:, r, r],
                              A[:, p, r] + A[:, r, p],
                              1j * (A[:, r, p] - A[:, p, r])])
                G = np.real(g @ g.conj().T)
                w, vec = np.linalg.eigh(G)
                ang = vec[:, -1]
                if ang[0] < 0:
                    ang = -ang
                c = np.sqrt(0.5 + ang[0] / 2)
                s = 0.5 * (ang[1] - 1j * ang[2]) / c
                if abs(s) <= tol:
                    continue
                rotated = True
                R = np.array([[c, -np.conj(s)], [s, c]])
                pair = [p, r]
                V[:, pair] = V[:, pair] @ R
                A[:, pair, :] = np.einsum("ji,kjm->kim", R.conj(), A[:, pair, :])
                A[:, :, pair] = A[:, :, pair] @ R
        if not rotated:
            return sweep + 1
    return max_sweeps


def joint_diag(family: Sequence, policy: TolerancePolicy = DEFAULT_POLICY,
               approximate: bool = False, sectors: int | None = None) -> SpectralDecomposition:
    """One unitary basis diagonalizing every member of a commuting family.

    With ``approximate=True`` the commutation check is skipped and the result
    is the basis that maximizes the joint diagonal mass; for a single
    non-normal matrix that gives its nearest normal matrix.

    Raises
    ------
    CommutationError
        When some pair has relative commutator above ``policy.commute``.
    """
    mats = [np.asarray(X, dtype=complex) for X in family]
    if not mats:
        raise PreconditionError("empty family")
    n = mats[0].shape[0]
    if any(X.shape != (n, n) for X in mats):
        raise PreconditionError("family members must be square of equal size")
    if not approximate:
        worst = 0.0
        for i in range(len(mats)):
            for j in range(i + 1, len(mats)):
                worst = max(worst, rel_commutator(mats[i], mats[j]))
        if worst > policy.commute:
            raise CommutationError(f"family does not commute: worst {worst:.3e}", worst)
        for X in mats:
            res = rel_normality(X)
            if res > policy.normal:
                raise NormalityError(f"family member not normal: {res:.3e}", res)
    # starting basis: a fixed generic Hermitian combination of the family
    H = np.zeros((n, n), dtype=complex)
    for i, X in enumerate(mats):
        nx = max(fro(X), 1e-300)
        H += np.sqrt(2.0 + i) * (X + X.conj().T) / (2 * nx)
        H += np.sqrt(3.0 + 2 * i) * (X - X.conj().T) / (2j * nx)
    if approximate and len(mats) == 1:
        V = sla.schur(mats[0], output="complex")[1]
    else:
        V = np.linalg.eigh((H + H.conj().T) / 2)[1].astype(complex)
    A = np.stack([V.conj().T @ X @ V for X in mats])
    _jacobi_sweeps(A, V, policy.jacobi, policy.jacobi_sweeps)
    joint = np.stack([np.diag(a) for a in A])
    order = _order_key(joint, sectors)
    joint, V = joint[:, order], _canonical_phases(V[:, order])
    scale = max(max(float(np.max(np.abs(r))) for r in joint), 1e-300)
    dec = SpectralDecomposition(joint[0].copy(), V,
                                _clusters(joint, policy.cluster * scale), joint=joint)
    dec.departure = max(_rel(fro(X - (V * joint[i]) @ V.conj().T), fro(X))
                        for i, X in enumerate(mats))
    return dec


def nearest_normal(T, policy: TolerancePolicy = DEFAULT_POLICY,
                   sectors: int | None = None) -> SpectralDecomposition:
    """Normal surrogate of ``T``: ``U diag(diag(U* T U)) U*`` with ``U``
    maximizing the diagonal mass.

    For a normal input this agrees with :func:`normal_eig`.  ``departure``
    reports ``||T - surrogate||_F / ||T||_F``.
    """
    T = np.asarray(T, dtype=complex)
    if rel_normality(T) <= policy.normal:
        return normal_eig(T, sectors, policy)
    return joint_diag([T], policy, approximate=True, sectors=sectors)


def _snap_values(w, lattice, snap: str | None, policy: TolerancePolicy):
    if snap is None:
        return w
    from .lattice import lattice_distance, ray_coordinates

    if snap == "lattice":
        dist = lattice_distance(w, lattice)
        if np.any(dist > policy.snap):
            raise RayError(f"spectrum off the lattice: relative distance {dist.max():.3e}")
        absw = np.abs(w)
        k = np.rint(np.angle(np.where(absw > 0, w, 1)) / lattice.hbar)
        j = np.rint(np.log(np.where(absw > 0, absw, 1)) / lattice.log_lam)
        return np.where(absw > 1e-300, np.exp(1j * lattice.hbar * k) * lattice.lam ** j, 0)
    if snap == "ray":
        k, logmod, is_zero, _ = ray_coordinates(w, lattice, policy.snap)
        return np.where(is_zero, 0, np.exp(1j * lattice.hbar * k + logmod))
    raise ValueError(f"unknown snap mode {snap!r}")


def funcalc(T, f: Callable, decomposition: SpectralDecomposition | None = None,
            lattice=None, snap: str | None = None,
            policy: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """``f(T)`` for normal ``T`` via its spectral decomposition.

    ``f`` must accept an array of eigenvalues.  With ``snap='lattice'`` or
    ``'ray'`` (and ``lattice`` given) the eigenvalues are first moved onto the
    lattice or the nearest ray; moving farther than ``policy.snap`` raises.
    """
    dec = decomposition if decomposition is not None else normal_eig(T, policy=policy)
    w = _snap_values(dec.eigenvalues, lattice, snap, policy)
    return dec.reconstruct(np.asarray(f(w), dtype=complex))


def bifuncalc(T1, T2, f: Callable, policy: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """``f(T1, T2)`` for commuting normal matrices, on their joint spectrum."""
    dec = joint_diag([T1, T2], policy)
    return dec.reconstruct(np.asarray(f(dec.joint[0], dec.joint[1]), dtype=complex))


def _as_dec(X, policy) -> SpectralDecomposition:
    if isinstance(X, SpectralDecomposition):
        return X
    return normal_eig(X, policy=policy)


def kron_funcalc(X, Y, f: Callable, policy: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """``f(X (x) Y)`` using the product eigenbasis of the two factors.

    ``X`` and ``Y`` are normal matrices or precomputed decompositions; ``f``
    receives the flattened products ``x_i * y_j``.
    """
    dx, dy = _as_dec(X, policy), _as_dec(Y, policy)
    vals = np.asarray(f(np.kron(dx.eigenvalues, dy.eigenvalues)), dtype=complex)
    U = np.kron(dx.basis, dy.basis)
    return (U * vals) @ U.conj().T


def kron_bifuncalc(X, Y, f: Callable, policy: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """``f(X (x) I, I (x) Y)`` using the product eigenbasis."""
    dx, dy = _as_dec(X, policy), _as_dec(Y, policy)
    nx, ny = len(dx.eigenvalues), len(dy.eigenvalues)
    x = np.repeat(dx.eigenvalues, ny)
    y = np.tile(dy.eigenvalues, nx)
    vals = np.asarray(f(x, y), dtype=complex)
    U = np.kron(dx.basis, dy.basis)
    return (U * vals) @ U.conj().T


def z_transform(T) -> np.ndarray:
    """``z_T = T (I + T*T)^{-1/2}``; always a contraction."""
    T = np.asarray(T, dtype=complex)
    w, V = np.linalg.eigh(T.conj().T @ T)
    w = np.clip(w, 0, None)
    return T @ ((V * (1 + w) ** -0.5) @ V.conj().T)


def z_inverse(Z) -> np.ndarray:
    """Recover ``T = Z (I - Z*Z)^{-1/2}``; requires ``||Z|| < 1``."""
    Z = np.asarray(Z, dtype=complex)
    nrm = np.linalg.norm(Z, 2) if Z.size else 0.0
    if nrm >= 1:
        raise PreconditionError(f"z_inverse needs ||Z|| < 1, got {nrm:.6g}")
    w, V = np.linalg.eigh(Z.conj().T @ Z)
    return Z @ ((V * (1 - np.clip(w, 0, None)) ** -0.5) @ V.conj().T)


def kron(X, Y) -> np.ndarray:
    return np.kron(np.asarray(X), np.asarray(Y))


_PATTERNS = {"12": (0, 1), "13": (0, 2), "23": (1, 2)}


def place_legs(X, pattern: str, dims: Sequence[int]) -> np.ndarray:
    """Embed a two-leg operator into three legs, leg-numbering style.

    ``pattern`` is ``'12'``, ``'13'`` or ``'23'``; ``dims = (d1, d2, d3)``.
    """
    if pattern not in _PATTERNS:
        raise ValueError(f"pattern must be one of {sorted(_PATTERNS)}")
    X = np.asarray(X)
    legs = _PATTERNS[pattern]
    other = ({0, 1, 2} - set(legs)).pop()
    da, db, dm = dims[legs[0]], dims[legs[1]], dims[other]
    if X.shape != (da * db, da * db):
        raise PreconditionError(f"operator of shape {X.shape} does not act on legs "
                                f"{pattern} with dims {tuple(dims)}")
    Y = np.kron(X, np.eye(dm)).reshape(da, db, dm, da, db, dm)
    order = [legs[0], legs[1], other]
    perm = [order.index(t) for t in range(3)]
    Y = Y.transpose(perm + [p + 3 for p in perm])
    d = int(np.prod(dims))
    return Y.reshape(d, d)


def apply_legs(X, pattern: str, dims: Sequence[int], vecs) -> np.ndarray:
    """Apply a two-leg operator to the columns of ``vecs`` without building
    the three-leg matrix."""
    if pattern not in _PATTERNS:
        raise ValueError(f"pattern must be one of {sorted(_PATTERNS)}")
    d1, d2, d3 = dims
    X = np.asarray(X)
    vecs = np.asarray(vecs)
    nv = vecs.shape[1]
    T = vecs.reshape(d1, d2, d3, nv)
    if pattern == "12":
        out = (X @ T.reshape(d1 * d2, d3 * nv)).reshape(d1, d2, d3, nv)
    elif pattern == "23":
        out = np.matmul(X, T.reshape(d1, d2 * d3, nv))
    else:
        # move leg 2 out of the way: (d2, d1*d3, nv)
        Tt = T.transpose(1, 0, 2, 3).reshape(d2, d1 * d3, nv)
        out = np.matmul(X, Tt).reshape(d2, d1, d3, nv).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(out).reshape(d1 * d2 * d3, nv)
