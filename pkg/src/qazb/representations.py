"""Representations ``V = F(d (x) b) chi(c (x) I, I (x) a)`` and their
decomposition back into the parameter pair ``(c, d)``.

Analysis runs in three stages:

* ``extract_c``: the slices ``V* (id (x) theta_gamma)(V)`` are ``u_gamma (x) I``
  with ``u_gamma = chi(c, gamma)``; joint diagonalization of the ``u_gamma``
  and an exhaustive character match give ``c``.
* ``factor_f``: ``f(b) = V chi(c (x) I, I (x) a)*`` is block diagonal in the
  b-eigenbasis of leg 2; its blocks are ``f_beta``.
* ``extract_d``: the blocks are jointly diagonalized and each joint
  eigenvector is matched to ``beta -> F(mu beta)`` over ``mu`` in the window
  and 0.

:func:`phi_slice_diagnostic` is an ungated cross-check of the first stage
through the evaluation character ``phi_gamma`` (``a -> gamma``, ``b -> 0``).
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import unitary_group

from .errors import DecompositionError, PreconditionError, RayError
from .lattice import (
    ZERO,
    GroupElement,
    LatticeParams,
    chi,
    chi_values,
    embed,
    group_label,
    lattice_label,
    ray_coordinates,
)
from .linalg import (
    DEFAULT_POLICY,
    SpectralDecomposition,
    TolerancePolicy,
    apply_legs,
    fro,
    joint_diag,
    nearest_normal,
    normal_eig,
)
from .multunitary import (
    DENSE_BUDGET,
    MultUnitary,
    bicharacter_factor,
    bulk_basis,
    leg_residual,
    qexp_factor,
)
from .qexp import QExp, qexp_eval
from .schrodinger import DomainReport, GPair, check_domain, dual_action, leg2_b_blocks

__all__ = [
    "CDPair",
    "Representation",
    "DecomposeGates",
    "make_cd_pair",
    "regular_cd_pair",
    "random_cd_pair",
    "build_V",
    "random_unitary_rep",
    "rep_residual",
    "extract_c",
    "factor_f",
    "extract_d",
    "decompose",
    "label_match_rate",
    "phi_slice_diagnostic",
]

ZERO_TOL = 1e-10


@dataclass
class CDPair:
    """Parameter pair on K with its domain certificate (kernel gate on c only)."""

    lattice: LatticeParams
    c: np.ndarray
    d: np.ndarray
    certificate: DomainReport
    c_dec: SpectralDecomposition = field(repr=False)
    d_dec: SpectralDecomposition = field(repr=False)
    source: str = "supplied"

    @property
    def Kdim(self) -> int:
        return self.c.shape[0]


@dataclass
class Representation:
    V: np.ndarray
    Kdim: int
    provenance: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DecomposeGates:
    """Gates of the decomposition stages.

    ``slice`` bounds ``||X_gamma - u_gamma (x) I|| / ||X_gamma||``;
    ``character`` bounds the character multiplicativity and match errors;
    ``block`` bounds the off-block mass of f and the commutators of its
    blocks; ``match`` is the ambiguity ratio for the d search.
    """

    slice: float = 1e-3
    character: float = 1e-6
    block: float = 1e-4
    match: float = 0.1

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _clean_zero(dec: SpectralDecomposition) -> SpectralDecomposition:
    w = np.where(np.abs(dec.eigenvalues) < ZERO_TOL, 0, dec.eigenvalues)
    return SpectralDecomposition(w, dec.basis, dec.clusters, dec.joint, dec.departure)


def make_cd_pair(c, d, p: LatticeParams, c_dec: SpectralDecomposition | None = None,
                 d_dec: SpectralDecomposition | None = None, source: str = "supplied",
                 policy: TolerancePolicy = DEFAULT_POLICY) -> CDPair:
    c = np.asarray(c, dtype=complex)
    d = np.asarray(d, dtype=complex)
    if c.shape != d.shape or c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise PreconditionError(f"c and d must be square of equal size, got {c.shape}, {d.shape}")
    c_dec = c_dec or normal_eig(c, p.N, policy.with_(normal=1e-6))
    d_dec = _clean_zero(d_dec or normal_eig(d, p.N, policy.with_(normal=1e-6)))
    cert = check_domain(c, d, p, policy, c_dec, d_dec)
    return CDPair(p, c, d, cert, c_dec, d_dec, source)


def _block_diag(blocks) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n), dtype=complex)
    i = 0
    for b in blocks:
        m = b.shape[0]
        out[i:i + m, i:i + m] = b
        i += m
    return out


def random_cd_pair(pair: GPair, rng: np.random.Generator, characters: int = 2,
                   schrodinger: int = 1, mix: bool = True) -> CDPair:
    """Random pair assembled from one-dimensional character blocks
    ``(embed(g), 0)`` and Schrodinger blocks ``(q**m a, q**m' b)``, optionally
    conjugated by a Haar unitary."""
    p = pair.lattice
    els = p.elements()
    cs, ds, labels = [], [], []
    for _ in range(characters):
        g = els[rng.integers(len(els))]
        cs.append(np.array([[embed(g, p)]]))
        ds.append(np.zeros((1, 1)))
        labels.append(("character", [int(g.k), int(g.j)]))
    for _ in range(schrodinger):
        m, m2 = (int(x) for x in rng.integers(p.N, size=2))
        cs.append(p.q ** m * pair.a)
        ds.append(p.q ** m2 * pair.b)
        labels.append(("schrodinger", [m, m2]))
    c, d = _block_diag(cs), _block_diag(ds)
    if mix and c.shape[0] > 1:
        U = unitary_group.rvs(c.shape[0], random_state=rng)
        c, d = U @ c @ U.conj().T, U @ d @ U.conj().T
    cd = make_cd_pair(c, d, p, source=f"random {labels}")
    return cd


def regular_cd_pair(pair: GPair, policy: TolerancePolicy = DEFAULT_POLICY) -> CDPair:
    """``(b^-1, a b^-1)`` on K = H, decomposed exactly as in ``build_W``."""
    p = pair.lattice
    binv_dec = SpectralDecomposition(1.0 / pair.b_dec.eigenvalues, pair.b_dec.basis,
                                     pair.b_dec.clusters)
    binv = binv_dec.reconstruct()
    X = pair.a @ binv
    X_dec = nearest_normal(X, policy, sectors=p.N)
    cert = check_domain(binv, X, p, policy, binv_dec, X_dec)
    return CDPair(p, binv, X, cert, binv_dec, X_dec, "regular")


def build_V(cd: CDPair, pair: GPair, F: QExp, ray_tol: float = 1e-4) -> Representation:
    """``V = F(d (x) b) chi(c (x) I, I (x) a)``.

    Raises
    ------
    PreconditionError
        If c or b has a kernel.
    RayError
        If the spectrum of d is farther than ``ray_tol`` from the rays.
    """
    p = pair.lattice
    if np.min(np.abs(cd.c_dec.eigenvalues)) <= 1e-12:
        raise PreconditionError("c has a nontrivial kernel")
    if np.min(np.abs(pair.b_dec.eigenvalues)) <= 1e-12:
        raise PreconditionError("b has a nontrivial kernel")
    ray = float(ray_coordinates(cd.d_dec.eigenvalues, p, None)[3].max())
    if ray > ray_tol and cd.source != "regular":
        raise RayError(f"spectrum of d is {ray:.3e} rad off the rays")
    V = qexp_factor(cd.d_dec, pair.b_dec, F) @ bicharacter_factor(cd.c_dec, pair.a_dec, p)
    unit = fro(V.conj().T @ V - np.eye(V.shape[0]))
    return Representation(V, cd.Kdim, {"source": "build_V", "cd": cd.source},
                          {"unitarity": unit, "d_ray_distance": ray})


def random_unitary_rep(Kdim: int, pair: GPair, rng: np.random.Generator) -> Representation:
    """Haar-random unitary on K (x) H (negative control)."""
    V = unitary_group.rvs(Kdim * pair.dim, random_state=rng)
    return Representation(V, Kdim, {"source": "haar"})


def rep_residual(rep: Representation, Wu: MultUnitary, window: float = 0.5,
                 structured: bool = False, probes: int = 64, seed: int = 0,
                 budget: int = DENSE_BUDGET) -> float:
    """Bulk residual of ``W23 V12 = V12 V13 W23`` on ``K (x) H (x) H``.

    Leg 1 is kept whole; legs 2 and 3 are compressed to the a-bulk window.
    """
    n = Wu.pair.dim
    K = rep.Kdim
    if rep.V.shape != (K * n, K * n):
        raise PreconditionError(f"V has shape {rep.V.shape}, expected {(K * n, K * n)}")
    Q = bulk_basis(Wu.pair.a_dec, Wu.lattice, window)
    V, W = rep.V, Wu.W
    return leg_residual([(W, "23"), (V, "12")], [(V, "12"), (V, "13"), (W, "23")],
                        (K, n, n), (np.eye(K), Q, Q), structured, probes, seed, budget)


# ---------------------------------------------------------------- analysis


@dataclass
class CResult:
    c: np.ndarray
    c_dec: SpectralDecomposition
    labels: list
    slices: dict
    slice_deviation: float
    multiplicativity: float
    character_error: float


def extract_c(rep: Representation, pair: GPair, gates: DecomposeGates = DecomposeGates(),
              policy: TolerancePolicy = DEFAULT_POLICY) -> CResult:
    """Recover c from the dual-action slices of V.

    Raises
    ------
    DecompositionError
        If a slice is not of the form ``u (x) I``, the ``u_gamma`` fail to
        multiply like characters, or a joint eigenvector matches no
        character; the message names the worst ``gamma``.
    """
    p = pair.lattice
    n = pair.dim
    K = rep.Kdim
    V = rep.V
    Vs = V.conj().T
    slices, dev, worst = {}, 0.0, None
    for gamma in p.elements():
        X = Vs @ dual_action(gamma, V, pair)
        u = np.einsum("iaja->ij", X.reshape(K, n, K, n)) / n
        e = fro(X - np.kron(u, np.eye(n))) / max(fro(X), 1e-300)
        if e > dev:
            dev, worst = e, gamma
        slices[gamma] = u
    report = {"slice_deviation": dev, "slice_worst": worst}
    if dev > gates.slice:
        raise DecompositionError(f"slice at gamma={tuple(worst)} deviates from u (x) I by "
                                 f"{dev:.3e}", report)
    mult, mworst = 0.0, None
    for g in p.elements():
        for h in p.elements():
            if not p.in_window(g.j + h.j):
                continue
            gh = GroupElement((g.k + h.k) % p.N, g.j + h.j)
            e = fro(slices[g] @ slices[h] - slices[gh]) / np.sqrt(K)
            if e > mult:
                mult, mworst = e, (g, gh)
    report.update(multiplicativity=mult)
    if mult > gates.character:
        raise DecompositionError(f"slices are not multiplicative near gamma={mworst}: {mult:.3e}",
                                 report)
    gammas = p.elements()
    dec = joint_diag([slices[g] for g in gammas], policy.with_(commute=gates.character,
                                                               normal=gates.character))
    # per joint eigenvector: the character tuple gamma -> chi(g, gamma)
    tuples = np.array(dec.joint).T  # (K, |Gamma|)
    table = np.array([[chi(g, gm, p) for gm in gammas] for g in gammas])  # (g, gamma)
    dist = np.abs(tuples[:, None, :] - table[None, :, :]).max(axis=2)
    pick = dist.argmin(axis=1)
    cerr = float(dist[np.arange(K), pick].max()) if K else 0.0
    report.update(character_error=cerr)
    if cerr > gates.character:
        raise DecompositionError(f"joint eigenvector matches no character (error {cerr:.3e})",
                                 report)
    labels = [gammas[i] for i in pick]
    vals = np.array([embed(g, p) for g in labels])
    c_dec = SpectralDecomposition(vals, dec.basis, [])
    return CResult(c_dec.reconstruct(), c_dec, labels, slices, dev, mult, cerr)


@dataclass
class FResult:
    f: np.ndarray
    blocks: list
    betas: np.ndarray
    offblock_mass: float


def factor_f(rep: Representation, cres: CResult, pair: GPair,
             gates: DecomposeGates = DecomposeGates()) -> FResult:
    """``f = V chi(c (x) I, I (x) a)*`` and its leg-2 b-eigenbasis blocks.

    Raises
    ------
    DecompositionError
        If the off-block mass of f exceeds ``gates.block``.
    """
    chi_ca = bicharacter_factor(cres.c_dec, pair.a_dec, pair.lattice)
    f = rep.V @ chi_ca.conj().T
    T = leg2_b_blocks(f, pair)
    tot = fro(T)
    off = T * (1 - np.eye(T.shape[1]))[None, :, None, :]
    mass = fro(off) / tot if tot > 0 else 0.0
    if mass > gates.block:
        raise DecompositionError(f"f is not a function of b: off-block mass {mass:.3e}",
                                 {"offblock_mass": mass})
    blocks = [T[:, h, :, h].copy() for h in range(T.shape[1])]
    return FResult(f, blocks, pair.b_dec.eigenvalues.copy(), mass)


@dataclass
class DResult:
    d: np.ndarray
    d_dec: SpectralDecomposition
    labels: list
    scores: np.ndarray
    ambiguous: list
    block_commutator: float


def extract_d(blocks, betas, F: QExp, gates: DecomposeGates = DecomposeGates(),
              policy: TolerancePolicy = DEFAULT_POLICY) -> DResult:
    """Recover d by matching ``beta -> F(mu beta)`` on joint eigenvectors.

    ``mu`` runs over the window and 0 (``NM + 1`` candidates).  A match is
    ambiguous when the runner-up scores within ``gates.match`` (relative)
    of the winner.

    Raises
    ------
    DecompositionError
        If the blocks fail to commute to ``gates.block``.
    """
    p = F.lattice
    K = blocks[0].shape[0]
    comm = 0.0
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            comm = max(comm, fro(blocks[i] @ blocks[j] - blocks[j] @ blocks[i]) / K)
    if comm > gates.block:
        raise DecompositionError(f"f blocks do not commute: {comm:.3e}", {"block_commutator": comm})
    dec = joint_diag(blocks, policy.with_(commute=gates.block, normal=gates.block))
    phis = np.array(dec.joint).T  # (K, n_beta)
    cands = [ZERO] + p.elements()
    cvals = np.array([0j] + [embed(g, p) for g in p.elements()])
    model = qexp_eval(F, (cvals[:, None] * np.asarray(betas)[None, :]).ravel(), tol=None)
    model = model.reshape(len(cands), len(betas))
    scores = np.sum(np.abs(phis[:, None, :] - model[None, :, :]) ** 2, axis=2)
    order = np.argsort(scores, axis=1, kind="stable")
    pick = order[:, 0]
    best = scores[np.arange(K), pick]
    second = scores[np.arange(K), order[:, 1]]
    ambiguous = [int(i) for i in np.flatnonzero(second - best <= gates.match * second)]
    labels = [cands[i] for i in pick]
    d_dec = SpectralDecomposition(cvals[pick], dec.basis, [])
    return DResult(d_dec.reconstruct(), d_dec, labels, best, ambiguous, comm)


def _diag_apply(bases, vals, X) -> np.ndarray:
    """Apply the operator diagonal in the product basis ``U1 (x) U2 (x) U3`` with
    values ``vals[i, j, k]`` to the columns of ``X``."""
    U1, U2, U3 = bases
    d = (U1.shape[0], U2.shape[0], U3.shape[0])
    T = X.reshape(d + (X.shape[1],))
    T = np.einsum("ai,bj,ck,abcv->ijkv", U1.conj(), U2.conj(), U3.conj(), T, optimize=True)
    T = T * vals[..., None]
    T = np.einsum("ia,jb,kc,abcv->ijkv", U1, U2, U3, T, optimize=True)
    return T.reshape(X.shape)


def _rel(num, den):
    return num / den if den > 0 else num


def _consistency(rep: Representation, cres: CResult, fres: FResult, dres: DResult,
                 pair: GPair, F: QExp, window: float) -> dict:
    p = pair.lattice
    n = pair.dim
    K = rep.Kdim
    V = rep.V
    Ia = np.eye(n)
    Qa = bulk_basis(pair.a_dec, p, window)
    P2 = np.kron(np.eye(K), Qa)
    chi_ca = bicharacter_factor(cres.c_dec, pair.a_dec, p)
    # f(b) reassembled from its diagonal blocks
    Ub = pair.b_dec.basis
    fb = np.zeros((K, n, K, n), dtype=complex)
    for h, blk in enumerate(fres.blocks):
        fb[:, h, :, h] = blk
    fb = np.einsum("ai,kilj,bj->kalb", Ub, fb, Ub.conj()).reshape(K * n, K * n)

    # left_twist: (u_gamma (x) I) f(b) (u_gamma (x) I)* = f(gamma b) on wrap-free beta,
    # compressed to the d-eigenvectors whose label times gamma stays in the window
    left_twist = 0.0
    labs = [lattice_label(z, p) for z in fres.betas]
    Ud = dres.d_dec.basis
    for gamma in p.elements():
        u = cres.slices[gamma]
        keep = np.array([g is ZERO or p.in_window(g.j + gamma.j) for g in dres.labels])
        Qd = Ud[:, keep]
        for h, lab in enumerate(labs):
            if not p.in_window(lab.j + gamma.j):
                continue
            target = p.index(GroupElement(lab.k + gamma.k, lab.j + gamma.j))
            lhs = u @ fres.blocks[h] @ u.conj().T
            rhs = fres.blocks[target]
            left_twist = max(left_twist, _rel(fro((lhs - rhs) @ Qd), fro(rhs @ Qd)))
    # right_twist: V (u_gamma (x) I) = f(b) (u_gamma (x) I) chi(c (x) I, I (x) a)
    right_twist = 0.0
    for gamma in p.elements():
        ug = np.kron(cres.slices[gamma], Ia)
        D = V @ ug - fb @ ug @ chi_ca
        right_twist = max(right_twist, _rel(fro(D @ P2), fro(V @ ug @ P2)))
    # leg13_factor: V13 = chi(c,a)_12^* F(d (x) a (x) b) chi(c (x) I, I (x) a (x) a), legs 2,3 in bulk
    Qb3 = np.kron(np.kron(np.eye(K), Qa), Qa)
    X0 = Qb3
    lhs = apply_legs(V, "13", (K, n, n), X0)
    alpha, beta = pair.a_dec.eigenvalues, pair.b_dec.eigenvalues
    cv, dv = cres.c_dec.eigenvalues, dres.d_dec.eigenvalues
    # chi(c (x) I (x) I, I (x) a (x) a) in basis (c, a, a)
    ch_aa = (chi_values(cv[:, None, None], alpha[None, :, None], p, None)
             * chi_values(cv[:, None, None], alpha[None, None, :], p, None))
    ch_a1 = np.broadcast_to(chi_values(cv[:, None, None], alpha[None, :, None], p, None),
                            (K, n, n))
    fab = qexp_eval(F, (dv[:, None, None] * alpha[None, :, None] * beta[None, None, :]).ravel(),
                    tol=None).reshape(K, n, n)
    Ua = pair.a_dec.basis
    Y = _diag_apply((cres.c_dec.basis, Ua, Ua), ch_aa, X0)
    Y = _diag_apply((dres.d_dec.basis, Ua, Ub), fab, Y)
    Y = _diag_apply((cres.c_dec.basis, Ua, Ua), np.conj(ch_a1), Y)
    leg13 = _rel(fro(Qb3.conj().T @ (lhs - Y)), fro(Qb3.conj().T @ lhs))
    # d_covariance: d (x) I = chi(c (x) I, I (x) a)^* (d (x) a) chi(c (x) I, I (x) a)
    dI = np.kron(dres.d, Ia)
    da = np.kron(dres.d, pair.a)
    D = dI - chi_ca.conj().T @ da @ chi_ca
    d_covariance = _rel(fro(P2.conj().T @ D @ P2), fro(P2.conj().T @ dI @ P2)) \
        if fro(dI) > 0 else fro(P2.conj().T @ D @ P2)
    return {"left_twist": left_twist, "right_twist": right_twist, "leg13_factor": leg13,
            "d_covariance": d_covariance}


def phi_slice_diagnostic(rep: Representation, pair: GPair, c_dec: SpectralDecomposition):
    """Compare ``(id (x) phi_gamma) V`` with ``chi(c, gamma)`` for every ``gamma``.

    ``V`` is expanded leg-2-wise as ``sum_t g_t(b) U_t``; ``phi_gamma`` sends
    it to ``sum_t g_t(0) chi(gamma, t)``.  The finite ``b`` has no eigenvalue
    0, so ``g_t(0)`` is taken as the mean of ``g_t`` over the smallest-modulus
    shell of b.  Returns the largest deviation (Frobenius, divided by
    ``sqrt(K)``) and the slices.  Needs the canonical model; ``(None, {})``
    otherwise.
    """
    if not pair.canonical:
        return None, {}
    p = pair.lattice
    n, K = pair.dim, rep.Kdim
    Fs = pair.b_dec.basis
    Xt = np.einsum("ai,kalb,bj->kilj", Fs.conj(), rep.V.reshape(K, n, K, n), Fs)
    els = p.elements()
    shell = [r for r in els if r.j == p.jmin]
    g0 = {}
    for t in els:
        cols = [(p.index(r), p.index(p.reduce(r.k + t.k, r.j + t.j)[0])) for r in shell]
        g0[t] = np.mean([Xt[:, i, :, h] for i, h in cols], axis=0)
    worst, slices = 0.0, {}
    for gamma in els:
        u = sum(g0[t] * chi(gamma, t, p) for t in els)
        ref = c_dec.reconstruct(chi_values(c_dec.eigenvalues, embed(gamma, p), p, None))
        worst = max(worst, fro(u - ref) / np.sqrt(K))
        slices[gamma] = u
    return worst, slices


def label_match_rate(found, reference, p: LatticeParams, reduce: bool = False) -> float:
    """Multiset overlap of lattice labels, as a fraction of ``len(reference)``.

    With ``reduce`` the modulus index is taken mod M (labels compared as group
    elements); otherwise it is unbounded.
    """
    label = group_label if reduce else lattice_label

    def lab(z):
        lz = label(z, p)
        return ("zero",) if lz is ZERO else (lz.k, lz.j)

    a = Counter(lab(z) for z in found)
    b = Counter(lab(z) for z in reference)
    if not b:
        return 1.0
    return sum((a & b).values()) / sum(b.values())


def decompose(rep: Representation, Wu: MultUnitary | None, pair: GPair, F: QExp,
              gates: DecomposeGates = DecomposeGates(), window: float = 0.5,
              structured: bool = False,
              policy: TolerancePolicy = DEFAULT_POLICY) -> tuple[CDPair, dict]:
    """Run ``extract_c``, ``factor_f`` and ``extract_d`` and certify the result.

    The report collects every measured residual; on a stage failure the
    :class:`DecompositionError` carries the report up to that stage.
    """
    report: dict = {"gates": gates.to_dict(), "window": window}
    n = pair.dim
    if rep.V.shape != (rep.Kdim * n, rep.Kdim * n):
        raise PreconditionError(f"V has shape {rep.V.shape}, expected K*{n}")
    report["unitarity"] = fro(rep.V.conj().T @ rep.V - np.eye(rep.V.shape[0]))
    if Wu is not None:
        report["rep_residual"] = rep_residual(rep, Wu, window, structured)
    try:
        cres = extract_c(rep, pair, gates, policy)
    except DecompositionError as e:
        report.update(e.report)
        raise DecompositionError(str(e), report) from None
    report.update(slice_deviation=cres.slice_deviation, multiplicativity=cres.multiplicativity,
                  character_error=cres.character_error,
                  c_labels=[[int(g.k), int(g.j)] for g in cres.labels])
    try:
        fres = factor_f(rep, cres, pair, gates)
        report["offblock_mass"] = fres.offblock_mass
        dres = extract_d(fres.blocks, fres.betas, F, gates, policy)
    except DecompositionError as e:
        report.update(e.report)
        raise DecompositionError(str(e), report) from None
    report.update(block_commutator=dres.block_commutator,
                  d_labels=[None if g is ZERO else [int(g.k), int(g.j)] for g in dres.labels],
                  d_scores=[float(s) for s in dres.scores], ambiguous=dres.ambiguous)
    report.update(_consistency(rep, cres, fres, dres, pair, F, window))
    report["phi_slice_deviation"] = phi_slice_diagnostic(rep, pair, cres.c_dec)[0]
    cd = make_cd_pair(cres.c, dres.d, pair.lattice, cres.c_dec, dres.d_dec, "decompose", policy)
    rebuilt = build_V(cd, pair, F)
    Q = np.kron(np.eye(rep.Kdim), bulk_basis(pair.a_dec, pair.lattice, window))
    report["roundtrip"] = _rel(fro((rep.V - rebuilt.V) @ Q), fro(rep.V @ Q))
    report["certificate"] = cd.certificate.to_dict()
    report["self_dual"] = cd.certificate.ok(kernel_required=True)
    return cd, report
