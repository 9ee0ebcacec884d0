"""The quantum exponential function as a unit-modulus table on the lattice.

F is characterized only through its functional equation
``F(S + R) = F(S) F(R)`` for the pair ``S = b (x) I``, ``R = a (x) b``.  The
solver searches the ``N*M`` table phases for a minimizer of the commutator
residual ``||[F(S) F(R), S + R]|| / ||S + R||``.

Block structure used throughout: with leg 1 in the a-eigenbasis and leg 2 in
the b-eigenbasis, ``S + R`` is block diagonal with blocks ``b + beta a``
(``beta`` running over the spectrum of b) and ``F(S) F(R)`` has the blocks
``F(b) diag(F(alpha * beta))``.  Everything is computed blockwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConvergenceError, NormalityError, PreconditionError
from .lattice import (
    GroupElement,
    LatticeParams,
    bulk_mask,
    embed,
    ray_coordinates,
)
from .linalg import DEFAULT_POLICY, TolerancePolicy, fro, nearest_normal, rel_normality
from .schrodinger import GPair, canonical_pair

__all__ = [
    "QExp",
    "SRPair",
    "SolverOptions",
    "FuncEqResult",
    "make_sr_pair",
    "qexp_eval",
    "func_eq_residual",
    "commutator_residual",
    "solve",
    "dilate",
    "from_table",
    "constant_qexp",
    "circular_variance",
    "gauge_distance",
]

INTERPOLATION_RULE = "per-ray linear in log-modulus on unwrapped phase"
_KEY_SCALE = 1e6  # cache key resolution in units of the modulus step


def circular_variance(values) -> float:
    """``1 - |mean(v / |v|)|``: 0 for a constant table, near 1 when spread."""
    v = np.asarray(values, dtype=complex).ravel()
    return float(1.0 - abs(np.mean(v / np.abs(v))))


def _interp_phase(theta: np.ndarray, k, t) -> np.ndarray:
    """Phases at ray ``k`` and fractional index ``t`` from a phase table.

    ``theta`` has shape ``(..., N, M)``; rows are unwrapped (each sample
    takes the branch nearest its neighbor) and interpolated linearly in
    ``t``, extrapolating with the edge segment outside ``[0, M-1]``.
    """
    M = theta.shape[-1]
    row = np.unwrap(theta, axis=-1)
    t = np.asarray(t, dtype=float)
    i0 = np.clip(np.floor(t), 0, M - 2).astype(int)
    fr = t - i0
    return row[..., k, i0] * (1 - fr) + row[..., k, i0 + 1] * fr


@dataclass
class QExp:
    """Quantum exponential table with cache and interpolation rule.

    ``table[k, j + j0]`` is the value at ``q**k * lam**j``.  ``cache`` maps
    ``(k, round(1e6 * log|z| / log lam))`` to a unit complex value.
    """

    lattice: LatticeParams
    table: np.ndarray
    cache: dict = field(default_factory=dict)
    rule: str = INTERPOLATION_RULE
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=complex)
        shape = (self.lattice.N, self.lattice.M)
        if self.table.shape != shape:
            raise PreconditionError(f"table shape {self.table.shape} != {shape}")

    def __call__(self, z, tol: float = 1e-6):
        return qexp_eval(self, z, tol)

    def value(self, g: GroupElement) -> complex:
        return complex(self.table[g[0] % self.lattice.N, g[1] + self.lattice.j0])

    @property
    def degenerate(self) -> bool:
        return circular_variance(self.table) < 1e-3


def _cache_key(k: int, logmod: float, p: LatticeParams) -> tuple[int, int]:
    return int(k), int(np.rint(logmod / p.log_lam * _KEY_SCALE))


def qexp_eval(F: QExp, z, tol: float | None = 1e-6):
    """Evaluate F on points of the closure of Gamma.

    0 maps to 1.  Lattice points in the window return the table entry;
    other points return a cached value when present and the interpolated
    value otherwise.  ``tol`` is the ray-membership tolerance (``None``
    snaps to the nearest ray).
    """
    p = F.lattice
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    k, logmod, is_zero, _ = ray_coordinates(z, p, tol)
    t = logmod / p.log_lam + p.j0
    out = np.exp(1j * _interp_phase(np.angle(F.table), k, t))
    ti = np.rint(t).astype(int)
    on = (~is_zero) & (np.abs(t - ti) <= 1e-9) & (ti >= 0) & (ti < p.M)
    out[on] = F.table[k[on], ti[on]]
    if F.cache:
        for i in np.flatnonzero(~on & ~is_zero):
            key = _cache_key(k[i], logmod[i], p)
            for dk in (0, -1, 1):
                hit = F.cache.get((key[0], key[1] + dk))
                if hit is not None:
                    out[i] = hit
                    break
    out[is_zero] = 1.0
    return complex(out[0]) if scalar else out


def from_table(p: LatticeParams, table, cache: dict | None = None,
               source: str = "ingested") -> QExp:
    """Wrap an externally supplied table; entries are normalized to modulus 1."""
    table = np.asarray(table, dtype=complex)
    if np.any(np.abs(table) < 1e-12):
        raise PreconditionError("table entries must be nonzero")
    return QExp(p, table / np.abs(table), dict(cache or {}), report={"source": source})


def constant_qexp(p: LatticeParams) -> QExp:
    """The trivial solution F = 1."""
    return QExp(p, np.ones((p.N, p.M), dtype=complex), report={"source": "constant"})


# ---------------------------------------------------------------- S, R pair


@dataclass
class SRPair:
    """``S = b (x) I`` and ``R = a (x) b`` with measured diagnostics."""

    pair: GPair
    S: np.ndarray
    R: np.ndarray
    qsq_residual: float
    sum_normality: float
    sum_ray_distance: float
    _blocks: list | None = field(default=None, repr=False)

    @property
    def lattice(self) -> LatticeParams:
        return self.pair.lattice

    def block_surrogates(self, policy: TolerancePolicy = DEFAULT_POLICY) -> list:
        """Nearest-normal decompositions of the blocks ``b' + beta diag(alpha)``.

        Coordinates are those of the a-eigenbasis; cached after first use.
        """
        if self._blocks is None:
            bp, alpha, beta = _block_data(self.pair)
            self._blocks = [nearest_normal(bp + bh * np.diag(alpha), policy, sectors=self.lattice.N)
                            for bh in beta]
        return self._blocks


def _block_data(pair: GPair):
    """``(b', alpha, beta)``: b in the a-eigenbasis and both spectra."""
    Ua = pair.a_dec.basis
    bp = Ua.conj().T @ pair.b @ Ua
    return bp, pair.a_dec.eigenvalues, pair.b_dec.eigenvalues


def make_sr_pair(pair: GPair, policy: TolerancePolicy = DEFAULT_POLICY) -> SRPair:
    """Build ``S = b (x) I`` and ``R = a (x) b`` and measure them.

    ``qsq_residual = ||R S - q**2 S R|| / ||R S||``.  The normality of
    ``S + R`` and the largest angular distance of its eigenvalues to the
    rays are recorded.

    Raises
    ------
    PreconditionError
        If b has a kernel.
    """
    p = pair.lattice
    n = pair.dim
    if np.min(np.abs(pair.b_dec.eigenvalues)) <= 1e-12:
        raise PreconditionError("b has a nontrivial kernel; S and R need ker b = {0}")
    I = np.eye(n)
    S = np.kron(pair.b, I)
    R = np.kron(pair.a, pair.b)
    RS = R @ S
    qsq = fro(RS - p.q ** 2 * S @ R) / max(fro(RS), 1e-300)
    T = S + R
    w = np.linalg.eigvals(T)
    ray_err = float(ray_coordinates(w, p, None)[3].max())
    return SRPair(pair, S, R, qsq, rel_normality(T), ray_err)


# ---------------------------------------------------------------- residuals


def _sr_values(theta: np.ndarray, pair: GPair):
    """``F(beta)`` and ``F(alpha_i beta_h)`` for a stack of phase tables.

    Returns arrays shaped ``(..., n)`` and ``(..., n, n)`` (index ``i, h``).
    Uses the table/interpolation rule only (no cache).
    """
    p = pair.lattice
    alpha, beta = pair.a_dec.eigenvalues, pair.b_dec.eigenvalues
    kb, lb, _, _ = ray_coordinates(beta, p, None)
    prod = np.outer(alpha, beta).ravel()
    kp, lp, _, _ = ray_coordinates(prod, p, None)
    fb = np.exp(1j * _interp_phase(theta, kb, lb / p.log_lam + p.j0))
    fp = np.exp(1j * _interp_phase(theta, kp, lp / p.log_lam + p.j0))
    n = len(alpha)
    return fb, fp.reshape(fp.shape[:-1] + (n, n))


def _commutator_batch(theta: np.ndarray, pair: GPair, cached=None) -> np.ndarray:
    """Commutator residual for a stack of phase tables ``(..., N, M)``."""
    if cached is None:
        cached = _commutator_setup(pair)
    Wb, bp, alpha, beta, nT = cached
    fb, phi = _sr_values(theta, pair)
    Fb = np.einsum("ik,...k,jk->...ij", Wb, fb, Wb.conj())
    # P[..., h, i, k] = Fb[i, k] * phi[k, h]
    P = Fb[..., None, :, :] * np.swapaxes(phi, -1, -2)[..., :, None, :]
    T = bp[None] + beta[:, None, None] * np.diag(alpha)[None]
    C = P @ T - T @ P
    return np.sqrt(np.sum(np.abs(C) ** 2, axis=(-3, -2, -1))) / nT


def _commutator_setup(pair: GPair):
    bp, alpha, beta = _block_data(pair)
    Wb = pair.a_dec.basis.conj().T @ pair.b_dec.basis  # b-eigenvectors in a-coordinates
    T = bp[None] + beta[:, None, None] * np.diag(alpha)[None]
    return Wb, bp, alpha, beta, fro(T)


def commutator_residual(F: QExp, sr: SRPair) -> float:
    """``||[F(S) F(R), S + R]||_F / ||S + R||_F`` (table and interpolation only)."""
    return float(_commutator_batch(np.angle(F.table), sr.pair))


@dataclass
class FuncEqResult:
    commutator_residual: float
    equation_residual: float
    degenerate: bool
    sum_normality: float
    surrogate_departure: float
    snap_distance: float
    window: float

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.__dict__.items()}


def _bulk_masks(pair: GPair, window: float):
    p = pair.lattice
    m1 = bulk_mask(pair.a_dec.eigenvalues, p, window)
    m2 = bulk_mask(pair.b_dec.eigenvalues, p, window)
    return m1, m2


def func_eq_residual(F: QExp, sr: SRPair, window: float = 0.5, surrogate: bool = False,
                     policy: TolerancePolicy = DEFAULT_POLICY) -> FuncEqResult:
    """Residuals of the functional equation on the pair ``(S, R)``.

    ``equation_residual`` is ``||P (F(S+R) - F(S) F(R)) P|| / ||P||`` with
    ``P`` the bulk projector (middle ``window`` fraction of modulus indices of
    a on leg 1 and of b on leg 2).  ``F(S+R)`` is evaluated through
    :func:`qexp_eval` on the spectrum of ``S + R``.

    ``S + R`` is normal only up to the finite-window defect.  Without
    ``surrogate=True`` a normality residual above ``policy.normal`` raises
    :class:`NormalityError`; with it, ``F(S+R)`` is taken on the nearest
    normal surrogate, whose relative departure is reported.
    """
    if not surrogate and sr.sum_normality > policy.normal:
        raise NormalityError(
            f"S + R is not normal: relative residual {sr.sum_normality:.3e}", sr.sum_normality)
    pair = sr.pair
    p = pair.lattice
    comm = commutator_residual(F, sr)
    bp, alpha, beta = _block_data(pair)
    Wb = pair.a_dec.basis.conj().T @ pair.b_dec.basis
    fb, phi = _sr_values(np.angle(F.table), pair)
    Fb = (Wb * fb) @ Wb.conj().T
    m1, m2 = _bulk_masks(pair, window)
    num = 0.0
    dep = 0.0
    snap = 0.0
    blocks = sr.block_surrogates(policy) if surrogate else None
    for h in np.flatnonzero(m2):
        P = Fb * phi[:, h][None, :]
        dec = blocks[h] if blocks is not None else nearest_normal(
            bp + beta[h] * np.diag(alpha), policy, sectors=p.N)
        dep = max(dep, dec.departure)
        snap = max(snap, float(ray_coordinates(dec.eigenvalues, p, None)[3].max()))
        FT = dec.reconstruct(qexp_eval(F, dec.eigenvalues, tol=None))
        D = (FT - P)[np.ix_(m1, m1)]
        num += fro(D) ** 2
    den = np.sqrt(m1.sum() * m2.sum())
    return FuncEqResult(comm, float(np.sqrt(num) / den) if den else 0.0, F.degenerate,
                        sr.sum_normality, dep, snap, window)


# ---------------------------------------------------------------- solver


@dataclass(frozen=True)
class SolverOptions:
    """Knobs of :func:`solve`.

    ``deflation`` weights the term that pushes the search away from the
    constant table; ``variance_floor`` is the circular-variance rejection
    threshold; ``threshold`` (optional) is the largest acceptable
    commutator residual.
    """

    seed: int = 0
    starts: int = 8
    max_sweeps: int = 30
    samples: int = 32
    rtol: float = 1e-7
    deflation: float = 1e-2
    variance_floor: float = 1e-3
    threshold: float | None = None
    init: str = "random"
    window: float = 0.5

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _variance_batch(theta: np.ndarray) -> np.ndarray:
    return 1.0 - np.abs(np.mean(np.exp(1j * theta), axis=(-2, -1)))


def _objective(theta, pair, setup, deflation) -> np.ndarray:
    c = _commutator_batch(theta, pair, setup)
    v = np.maximum(_variance_batch(theta), 1e-15)
    return c * (1.0 + deflation / v)


def _descend(theta: np.ndarray, pair: GPair, setup, opts: SolverOptions):
    """Cyclic coordinate descent; returns the final table and the trace."""
    N, M = theta.shape
    grid = 2 * np.pi * np.arange(opts.samples) / opts.samples
    half = np.pi / opts.samples
    cur = float(_objective(theta, pair, setup, opts.deflation))
    trace = [cur]
    for _ in range(opts.max_sweeps):
        start = cur
        for c in range(N * M):
            k, j = divmod(c, M)
            stack = np.repeat(theta[None], opts.samples, axis=0)
            stack[:, k, j] = theta[k, j] + grid
            vals = _objective(stack, pair, setup, opts.deflation)
            m = int(np.argmin(vals))
            x0 = theta[k, j] + grid[m]

            def f1(x, k=k, j=j):
                th = theta.copy()
                th[k, j] = x
                return float(_objective(th, pair, setup, opts.deflation))

            r = minimize_scalar(f1, bounds=(x0 - half, x0 + half), method="bounded",
                                options={"xatol": 1e-10, "maxiter": 60})
            best_x, best_v = (r.x, float(r.fun)) if r.fun < vals[m] else (x0, float(vals[m]))
            if best_v < cur:
                theta = theta.copy()
                theta[k, j] = np.angle(np.exp(1j * best_x))
                cur = best_v
                trace.append(cur)
        if start - cur <= opts.rtol * start:
            break
    return theta, trace


def _gauge_fix(theta: np.ndarray) -> np.ndarray:
    # global phase does not change the commutator; pin it so that the shell
    # closest to 0 has real positive circular mean (F -> 1 at 0)
    mean = np.mean(np.exp(1j * theta[:, 0]))
    return np.angle(np.exp(1j * (theta - np.angle(mean))))


def _assign_cache(F: QExp, sr: SRPair, policy: TolerancePolicy) -> dict:
    """Off-lattice values read off ``F(S) F(R)`` on eigenvectors of ``S + R``."""
    pair = sr.pair
    p = pair.lattice
    Wb = pair.a_dec.basis.conj().T @ pair.b_dec.basis
    fb, phi = _sr_values(np.angle(F.table), pair)
    Fb = (Wb * fb) @ Wb.conj().T
    acc: dict = {}
    for h, dec in enumerate(sr.block_surrogates(policy)):
        P = Fb * phi[:, h][None, :]
        U = dec.basis
        rq = np.einsum("ij,ik,kj->j", U.conj(), P, U)
        k, logmod, is_zero, _ = ray_coordinates(dec.eigenvalues, p, None)
        for m in range(len(rq)):
            if is_zero[m] or abs(rq[m]) < 1e-12:
                continue
            key = _cache_key(k[m], logmod[m], p)
            acc.setdefault(key, []).append(rq[m] / abs(rq[m]))
    cache = {}
    for key, vals in sorted(acc.items()):
        mval = np.mean(vals)
        cache[key] = complex(mval / abs(mval)) if abs(mval) > 1e-12 else complex(vals[0])
    return cache


def solve(p: LatticeParams, opts: SolverOptions = SolverOptions(),
          policy: TolerancePolicy = DEFAULT_POLICY) -> QExp:
    """Find a nonconstant table minimizing the commutator residual.

    Each start draws its initial phases from ``default_rng([seed, start])``
    and runs cyclic coordinate descent on the deflated objective
    ``comm * (1 + deflation / circular_variance)``.  Starts ending with
    circular variance below ``variance_floor`` are rejected.  The accepted
    start is the one with the lowest objective, ties going to the lower
    start index.

    Raises
    ------
    ConvergenceError
        When every start is rejected, or the best commutator residual is above
        ``opts.threshold``; ``.best`` holds the best table found.
    """
    pair = canonical_pair(p, policy)
    sr = make_sr_pair(pair, policy)
    setup = _commutator_setup(pair)
    runs = []
    for s in range(opts.starts):
        rng = np.random.default_rng([opts.seed, s])
        if opts.init == "constant":
            theta0 = np.zeros((p.N, p.M))
        else:
            theta0 = rng.uniform(-np.pi, np.pi, (p.N, p.M))
        escaped = False
        if _variance_batch(theta0) < opts.variance_floor:
            theta0 = theta0 + rng.normal(0.0, 0.5, theta0.shape)
            escaped = True
        theta, trace = _descend(theta0, pair, setup, opts)
        theta = _gauge_fix(theta)
        var = float(_variance_batch(theta))
        runs.append({
            "start": s,
            "theta": theta,
            "objective": trace[-1],
            "commutator": float(_commutator_batch(theta, pair, setup)),
            "variance": var,
            "rejected": var < opts.variance_floor,
            "escaped": escaped,
            "trace": trace,
        })
    ok = [r for r in runs if not r["rejected"]]
    pool = ok or runs
    best = min(pool, key=lambda r: (r["objective"], r["start"]))
    F = QExp(p, np.exp(1j * best["theta"]))
    F.cache = _assign_cache(F, sr, policy)
    res = func_eq_residual(F, sr, opts.window, surrogate=True, policy=policy)
    F.report = {
        "source": "solve",
        "options": opts.to_dict(),
        "accepted_start": best["start"],
        "residuals": res.to_dict(),
        "variance": best["variance"],
        "trace": best["trace"],
        "starts": [{k: r[k] for k in ("start", "objective", "commutator", "variance",
                                      "rejected", "escaped")} for r in runs],
    }
    if not ok:
        raise ConvergenceError("every start collapsed to a near-constant table", F)
    if opts.threshold is not None and best["commutator"] > opts.threshold:
        raise ConvergenceError(
            f"best commutator residual {best['commutator']:.3e} above {opts.threshold:.3e}", F)
    return F


# ---------------------------------------------------------------- gauge


def dilate(F: QExp, mu: GroupElement) -> QExp:
    """``F'(z) = F(embed(mu) z)``.

    Table entries whose dilated point leaves the window are filled by the
    interpolation rule and listed in ``report['edge']``; cache keys move
    with the dilation.
    """
    p = F.lattice
    table = np.empty_like(F.table)
    edge = []
    m = embed(mu, p)
    for g in p.elements():
        jj = g.j + mu[1]
        if not p.in_window(jj):
            edge.append([g.k, g.j])
        table[g.k, g.j + p.j0] = qexp_eval(F, m * embed(g, p), tol=None) if p.in_window(jj) \
            else complex(np.exp(1j * _interp_phase(np.angle(F.table), (g.k + mu[0]) % p.N,
                                                   jj + p.j0)))
    shift = int(round(mu[1] * _KEY_SCALE))
    cache = {((k - mu[0]) % p.N, t - shift): v for (k, t), v in F.cache.items()}
    return QExp(p, table, cache, F.rule, {"source": "dilate", "mu": [int(mu[0]), int(mu[1])],
                                          "edge": edge})


def gauge_distance(F1: QExp, F2: QExp) -> tuple[float, GroupElement]:
    """``min_mu max_g |F2(g) - F1(mu g)|`` over lattice dilations ``mu``.

    The maximum runs over ``g`` whose product with ``mu`` stays in the
    window.  Returns the distance and the minimizing ``mu``.
    """
    p = F1.lattice
    best = (np.inf, GroupElement(0, 0))
    for mu in p.elements():
        worst = 0.0
        for g in p.elements():
            if not p.in_window(g.j + mu.j):
                continue
            worst = max(worst, abs(F2.value(g) - F1.value(GroupElement(g.k + mu.k, g.j + mu.j))))
        if worst < best[0]:
            best = (worst, mu)
    return best
