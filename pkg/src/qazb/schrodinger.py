"""The canonical operator pair (a, b) on l2 of the finite lattice, its domain
certificate, the crossed-product unitaries and the dual action.

Basis vectors of H are indexed by group elements in ``LatticeParams``
order.  ``a`` is diagonal with ``a e_g = embed(g) e_g`` and ``b`` is its
bicharacter-Fourier transform ``F* a F``, so ``b`` has the same spectrum and
its eigenvectors are the columns of ``F*``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import PreconditionError
from .lattice import (
    GroupElement,
    LatticeParams,
    chi_matrix,
    chi_values,
    lattice_distance,
    lattice_label,
)
from .linalg import (
    DEFAULT_POLICY,
    SpectralDecomposition,
    TolerancePolicy,
    fro,
    nearest_normal,
    rel_normality,
)

MODULUS_LABEL = "modulus relation (t-corrected reading)"


@dataclass
class DomainReport:
    """Measured residuals of the operator-domain relations for a pair.

    All residuals are relative Frobenius norms.  ``modulus_residual`` is
    measured on the spectral subspace of the second operator that excludes
    its lowest modulus index; ``wrap_dim`` is the excluded dimension.
    """

    normality_first: float
    normality_second: float
    spectrum_distance: float
    phase_residual: float
    modulus_residual: float
    wrap_dim: int
    kernel_first: float
    modulus_label: str = MODULUS_LABEL

    def to_dict(self) -> dict:
        return asdict(self)

    def exact_gates(self) -> dict:
        """Gate values for the exact layer of the domain predicate."""
        return {
            "normality_first": 1e-10,
            "normality_second": 1e-10,
            "spectrum_distance": 1e-10,
            "phase_residual": 1e-10,
            "modulus_residual": 1e-10,
        }

    def failures(self, gates: dict | None = None, kernel_required: bool = True) -> list[str]:
        gates = gates or self.exact_gates()
        bad = [k for k, g in gates.items() if getattr(self, k) > g]
        if kernel_required and self.kernel_first <= 1e-12:
            bad.append("kernel_first")
        return bad

    def ok(self, gates: dict | None = None, kernel_required: bool = True) -> bool:
        return not self.failures(gates, kernel_required)


@dataclass
class GPair:
    lattice: LatticeParams
    a: np.ndarray
    b: np.ndarray
    certificate: DomainReport
    a_dec: SpectralDecomposition = field(repr=False)
    b_dec: SpectralDecomposition = field(repr=False)
    canonical: bool = False

    @property
    def dim(self) -> int:
        return self.a.shape[0]


def fourier_chi(p: LatticeParams) -> np.ndarray:
    """Unitary kernel ``chi(g, h) / sqrt(NM)``."""
    return chi_matrix(p) / np.sqrt(p.size)


def _phase_of(dec: SpectralDecomposition) -> np.ndarray:
    w = dec.eigenvalues
    absw = np.abs(w)
    return dec.reconstruct(np.where(absw > 1e-12, w / np.where(absw > 0, absw, 1), 0))


def _abs_power(dec: SpectralDecomposition, t: float) -> np.ndarray:
    absw = np.abs(dec.eigenvalues)
    return dec.reconstruct(np.where(absw > 1e-12, np.exp(1j * t * np.log(np.where(absw > 0, absw, 1))), 1))


def non_wrap_basis(dec: SpectralDecomposition, p: LatticeParams) -> np.ndarray:
    """Eigenvectors whose eigenvalue is not on the lowest modulus shell.

    Zero eigenvalues count as non-wrap.
    """
    w = dec.eigenvalues
    absw = np.abs(w)
    nz = absw > 1e-12
    if not np.any(nz):
        return dec.basis
    jj = np.rint(np.log(np.where(nz, absw, 1)) / p.log_lam).astype(int)
    lowest = jj[nz].min()
    keep = ~nz | (jj != lowest)
    return dec.basis[:, keep]


def check_domain(a, b, p: LatticeParams, policy: TolerancePolicy = DEFAULT_POLICY,
                 a_dec: SpectralDecomposition | None = None,
                 b_dec: SpectralDecomposition | None = None) -> DomainReport:
    """Measure how well ``(a, b)`` satisfies the operator-domain relations.

    A report, not a gate: nothing is raised for violations.  Non-normal
    inputs are measured through their nearest normal surrogates.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise PreconditionError(f"need square matrices of equal size, got {a.shape}, {b.shape}")
    a_dec = a_dec or nearest_normal(a, policy, sectors=p.N)
    b_dec = b_dec or nearest_normal(b, policy, sectors=p.N)
    eigs = np.concatenate([np.linalg.eigvals(a), np.linalg.eigvals(b)])
    # roundoff-sized eigenvalues are the point 0 of the closure
    scale = max(float(np.max(np.abs(eigs))), 1.0) if eigs.size else 1.0
    eigs = np.where(np.abs(eigs) <= 1e-10 * scale, 0, eigs)
    phase_a = _phase_of(a_dec)
    nb = max(fro(b), 1e-300)
    phase_res = fro(phase_a @ b - p.q * b @ phase_a) / nb
    t1 = np.sqrt(p.N / p.M)
    A1 = _abs_power(a_dec, t1)
    Q = non_wrap_basis(b_dec, p)
    lhs = (A1 @ b @ A1.conj().T - b / p.lam) @ Q
    nbq = fro(b @ Q)
    mod_res = fro(lhs) / nbq if nbq > 0 else fro(lhs)
    return DomainReport(
        normality_first=rel_normality(a),
        normality_second=rel_normality(b),
        spectrum_distance=float(np.max(lattice_distance(eigs, p))) if eigs.size else 0.0,
        phase_residual=phase_res,
        modulus_residual=mod_res,
        wrap_dim=int(a.shape[0] - Q.shape[1]),
        kernel_first=float(np.min(np.abs(a_dec.eigenvalues))) if a.size else 0.0,
    )


def canonical_pair(p: LatticeParams, policy: TolerancePolicy = DEFAULT_POLICY) -> GPair:
    F = fourier_chi(p)
    emb = p.embedded()
    a = np.diag(emb)
    Fs = F.conj().T
    b = Fs @ a @ F
    a_dec = SpectralDecomposition(emb.copy(), np.eye(p.size, dtype=complex))
    b_dec = SpectralDecomposition(emb.copy(), Fs)
    cert = check_domain(a, b, p, policy, a_dec, b_dec)
    return GPair(p, a, b, cert, a_dec, b_dec, canonical=True)


def make_pair(a, b, p: LatticeParams, policy: TolerancePolicy = DEFAULT_POLICY) -> GPair:
    """Wrap a user-supplied pair, computing decompositions and certificate."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    a_dec = nearest_normal(a, policy, sectors=p.N)
    b_dec = nearest_normal(b, policy, sectors=p.N)
    cert = check_domain(a, b, p, policy, a_dec, b_dec)
    return GPair(p, a, b, cert, a_dec, b_dec, canonical=False)


def char_unitary(t: GroupElement, pair: GPair) -> np.ndarray:
    """``U_t = chi(a, t)``."""
    p = pair.lattice
    vals = chi_values(pair.a_dec.eigenvalues, complex(p.q ** t[0] * p.lam ** t[1]), p)
    return pair.a_dec.reconstruct(vals)


def sigma_covariance_residual(t: GroupElement, pair: GPair, g=None) -> float:
    """``||(U_t g(b) U_t* - g(t b)) Q|| / ||g(b) Q||`` on the wrap-free subspace.

    ``Q`` spans the b-eigenvectors whose label ``h`` has ``h * t`` inside the
    window.  ``g`` defaults to the identity function.
    """
    p = pair.lattice
    g = g or (lambda z: z)
    U = char_unitary(t, pair)
    tz = complex(p.q ** t[0] * p.lam ** t[1])
    w = pair.b_dec.eigenvalues
    gb = pair.b_dec.reconstruct(g(w))
    gtb = pair.b_dec.reconstruct(g(tz * w))
    keep = []
    for i, z in enumerate(w):
        lab = lattice_label(z, p)
        keep.append(p.in_window(lab.j + t[1]))
    Q = pair.b_dec.basis[:, np.array(keep)]
    den = fro(gb @ Q)
    num = fro((U @ gb @ U.conj().T - gtb) @ Q)
    return num / den if den > 0 else num


def translation(gamma: GroupElement, p: LatticeParams) -> np.ndarray:
    """Position translation ``L e_h = e_{h - gamma}`` (modulus index mod M)."""
    n = p.size
    L = np.zeros((n, n))
    for h in p.elements():
        target, _ = p.reduce(h.k - gamma[0], h.j - gamma[1])
        L[p.index(target), p.index(h)] = 1.0
    return L


def translation_wraps(gamma: GroupElement, p: LatticeParams) -> bool:
    return gamma[1] % p.M != 0


def dual_action(gamma: GroupElement, X, pair: GPair) -> np.ndarray:
    """``theta_gamma(X) = L X L*``; for ``X`` on ``K (x) H`` it acts on the
    last leg only.

    Orientation: ``theta_gamma(a) = embed(gamma) a`` on the positions ``h``
    with ``h * gamma`` inside the window, and ``theta_gamma(b) = b`` exactly.
    Whether the translation wraps anywhere is reported by
    :func:`translation_wraps`.
    """
    if not pair.canonical:
        raise PreconditionError("dual action is defined on the canonical (position) model only")
    X = np.asarray(X)
    n = pair.dim
    if X.shape[0] % n:
        raise PreconditionError(f"dimension {X.shape[0]} is not a multiple of {n}")
    K = X.shape[0] // n
    perm = np.empty(n, dtype=int)
    p = pair.lattice
    for h in p.elements():
        target, _ = p.reduce(h.k - gamma[0], h.j - gamma[1])
        perm[p.index(target)] = p.index(h)
    # (I (x) L) X (I (x) L)^T as an index permutation on the last leg
    T = X.reshape(K, n, K, n)[:, perm][:, :, :, perm]
    return T.reshape(K * n, K * n)


def weyl_decompose(X, pair: GPair) -> dict:
    """Unique expansion ``X = sum_t g_t(b) U_t``.

    Returns ``{t: g_t}`` where ``g_t`` lists the values of the coefficient
    function on the b-eigenvectors (basis order of group labels).
    """
    if not pair.canonical:
        raise PreconditionError("Weyl decomposition needs the canonical model")
    p = pair.lattice
    X = np.asarray(X, dtype=complex)
    if X.shape != (p.size, p.size):
        raise PreconditionError(f"expected {p.size}x{p.size}, got {X.shape}")
    Fs = pair.b_dec.basis
    Xt = Fs.conj().T @ X @ Fs
    els = p.elements()
    coeffs = {}
    for t in els:
        col = np.empty(p.size, dtype=complex)
        for r in els:
            h, _ = p.reduce(r.k + t.k, r.j + t.j)
            col[p.index(r)] = Xt[p.index(r), p.index(h)]
        coeffs[t] = col
    return coeffs


def weyl_reconstruct(coeffs: dict, pair: GPair) -> np.ndarray:
    out = np.zeros((pair.dim, pair.dim), dtype=complex)
    for t, g in coeffs.items():
        out += pair.b_dec.reconstruct(g) @ char_unitary(t, pair)
    return out


@dataclass
class InvarianceResult:
    invariance_residual: float
    offblock_mass: float
    invariant: bool
    implication_holds: bool


def leg2_b_blocks(X, pair: GPair) -> np.ndarray:
    """``X`` on ``K (x) H`` rewritten in the b-eigenbasis of leg 2, shaped
    ``(K, n, K, n)``."""
    n = pair.dim
    X = np.asarray(X)
    K = X.shape[0] // n
    Ub = pair.b_dec.basis
    T = X.reshape(K, n, K, n)
    T = np.einsum("ai,kalb,bj->kilj", Ub.conj(), T, Ub)
    return T


def offblock_mass(X, pair: GPair) -> float:
    T = leg2_b_blocks(X, pair)
    tot = fro(T)
    off = T * (1 - np.eye(T.shape[1]))[None, :, None, :]
    return fro(off) / tot if tot > 0 else 0.0


def invariance_test(X, pair: GPair, inv_gate: float = 1e-9,
                    block_gate: float = 1e-8) -> InvarianceResult:
    """Finite form of: invariance under every ``id (x) theta_gamma`` forces
    ``X`` into ``B(K) (x) functions of b``."""
    X = np.asarray(X, dtype=complex)
    nx = max(fro(X), 1e-300)
    worst = 0.0
    for gamma in pair.lattice.elements():
        worst = max(worst, fro(dual_action(gamma, X, pair) - X) / nx)
    off = offblock_mass(X, pair)
    invariant = worst <= inv_gate
    return InvarianceResult(worst, off, invariant, (not invariant) or off <= block_gate)
