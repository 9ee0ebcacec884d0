"""Command-line front end.

Exit codes: 0 when every gated check passes, 1 on a residual failure, 2 on a
precondition or format failure.  A report is always written (``--report``
path, default stdout).
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .calibration import (
    CALIBRATION_FORMAT,
    DEFAULT_SCALE,
    load_calibration,
    run_calibration,
)
from .errors import ConvergenceError, DecompositionError, QazbError
from .lattice import make_lattice
from .modelfile import CheckRecord, ModelFile, Report, dumps, load_model, store_model
from .multunitary import build_W, delta_checks, pentagon_residual
from .qexp import SolverOptions, circular_variance, constant_qexp, func_eq_residual, make_sr_pair, solve
from .representations import (
    DecomposeGates,
    Representation,
    build_V,
    decompose,
    label_match_rate,
    make_cd_pair,
    random_cd_pair,
    regular_cd_pair,
    rep_residual,
)
from .schrodinger import GPair, canonical_pair, make_pair

__all__ = ["main", "build_parser"]

EXACT_GATE = 1e-10
UNITARY_GATE = 1e-9
VARIANCE_FLOOR = 1e-3


def _common(sp, lattice: bool = False):
    if lattice:
        sp.add_argument("--n", type=int, default=6, help="order N of the root of unity")
        sp.add_argument("--m", type=int, default=2, help="modulus lattice size M")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--window", type=float, default=0.5, help="bulk window fraction")
    sp.add_argument("--gate-scale", type=float, default=DEFAULT_SCALE,
                    help="gates are this multiple of the calibrated values")
    sp.add_argument("--out", help="output file")
    sp.add_argument("--report", help="report file (default: stdout)")
    sp.add_argument("--calibration", help="calibration file (default: $QAZB_CONFIG or packaged)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qazb", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qazb {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen", help="write the canonical pair and its domain report")
    _common(sp, lattice=True)

    sp = sub.add_parser("solve-qexp", help="solve for the quantum exponential table")
    sp.add_argument("model")
    _common(sp)
    sp.add_argument("--starts", type=int, default=SolverOptions.starts)
    sp.add_argument("--sweeps", type=int, default=SolverOptions.max_sweeps)

    sp = sub.add_parser("check", help="run one family of residual checks")
    sp.add_argument("model")
    sp.add_argument("which", choices=["domain", "pentagon", "delta", "rep"])
    _common(sp)
    sp.add_argument("--rep", dest="rep_file", help="representation file (for 'rep')")
    sp.add_argument("--constant-f", action="store_true", help="use F = 1 (negative control)")
    sp.add_argument("--structured", action="store_true", help="probe-vector evaluation")

    sp = sub.add_parser("rep", help="build a representation V(c, d)")
    sp.add_argument("model")
    _common(sp)
    sp.add_argument("--cd", choices=["random", "regular", "character"], default="random")
    sp.add_argument("--constant-f", action="store_true")

    sp = sub.add_parser("decompose", help="recover (c, d) from a representation")
    sp.add_argument("model")
    sp.add_argument("rep_file")
    _common(sp)

    sp = sub.add_parser("report", help="all model-level checks in one report")
    sp.add_argument("model")
    _common(sp)

    sp = sub.add_parser("calibrate", help="measure calibrated thresholds")
    _common(sp, lattice=True)
    return ap


# ---------------------------------------------------------------- helpers


class _Ctx:
    def __init__(self, args, command: str):
        self.args = args
        flags = {k: v for k, v in vars(args).items() if k not in ("command",)}
        self.report = Report(command, flags, getattr(args, "seed", 0),
                             getattr(args, "model", None), None)
        self._cal = None

    @property
    def cal(self):
        if self._cal is None:
            self._cal = load_calibration(self.args.calibration)
            self.report.calibration_version = self._cal.version
        return self._cal

    def gate(self, name, p):
        return self.cal.gate(name, p, self.args.gate_scale)

    def check(self, name, anchor, fn, gate=None, lower=False, gated=True, detail=None):
        """Time ``fn`` and record its value against ``gate``.

        ``lower`` flips the comparison (value must be at least the gate).
        """
        t = time.perf_counter()
        val = fn()
        wall = time.perf_counter() - t
        val = float(val)
        if gate is None:
            ok = True
        else:
            ok = val >= gate if lower else val <= gate
        return self.report.add(CheckRecord(name, anchor, val, gate, bool(ok), wall,
                                           gated and gate is not None, detail or {}))

    def emit(self) -> int:
        text = self.report.dumps()
        if self.args.report:
            with open(self.args.report, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return self.report.exit_code()


def _pair_from_model(model: ModelFile) -> GPair:
    p = model.lattice
    can = canonical_pair(p, model.policy)
    a, b = model.operators.get("a"), model.operators.get("b")
    if a is None or b is None:
        raise QazbError("model has no operators 'a' and 'b'")
    if np.array_equal(a, can.a) and np.array_equal(b, can.b):
        return can
    return make_pair(a, b, p, model.policy)


def _qexp(model: ModelFile, constant: bool):
    if constant:
        return constant_qexp(model.lattice)
    if model.qexp is None:
        raise QazbError("model has no qexp table; run solve-qexp first or pass --constant-f")
    return model.qexp


def _domain_checks(ctx: _Ctx, pair: GPair):
    cert = pair.certificate
    for name, gate in cert.exact_gates().items():
        ctx.check(f"domain.{name}", _ANCHORS[f"domain.{name}"], lambda n=name: getattr(cert, n),
                  gate)
    ctx.check("domain.kernel_first", "ker a = {0}", lambda: cert.kernel_first, 1e-12, lower=True)


_ANCHORS = {
    "domain.normality_first": "a normal",
    "domain.normality_second": "b normal",
    "domain.spectrum_distance": "Sp a, Sp b in the closure of Gamma",
    "domain.phase_residual": "(Phase a) b = q b (Phase a)",
    "domain.modulus_residual": "|a|^(it) b |a|^(-it) = lam^(-1) b on the non-wrap subspace",
}


def _w_checks(ctx: _Ctx, pair: GPair, F, which: str, structured: bool = False):
    p = pair.lattice
    args = ctx.args
    Wu = build_W(pair, F, surrogate=True)
    ctx.check("W.unitarity", "W* W = I", lambda: Wu.report["unitarity"], UNITARY_GATE)
    ctx.check("W.ab_inv_normality", "a b^-1 normal (measured, surrogate used)",
              lambda: Wu.report["normality_ab_inv"], gated=False,
              detail={"surrogate_departure": Wu.report["surrogate_departure"],
                      "ray_distance": Wu.report["ray_distance"]})
    ctx.check("qexp.nondegenerate", "F nonconstant (circular variance)",
              lambda: circular_variance(F.table), VARIANCE_FLOOR, lower=True)
    if which in ("pentagon", "all"):
        ctx.check("pentagon", "W23 W12 = W12 W13 W23",
                  lambda: pentagon_residual(Wu, args.window, structured=structured,
                                            seed=args.seed),
                  ctx.gate("pentagon", p))
    if which in ("delta", "all"):
        res = delta_checks(Wu, pair, args.window)
        ctx.check("delta.a", "W (a (x) I) W* = a (x) a", lambda: res[0], ctx.gate("delta_a", p))
        ctx.check("delta.b", "W (b (x) I) W* = a (x) b + b (x) I", lambda: res[1],
                  ctx.gate("delta_b", p))
    return Wu


def _load_rep(path: str, model: ModelFile) -> tuple[Representation, ModelFile]:
    rm = load_model(path)
    if rm.lattice != model.lattice:
        raise QazbError("representation file lattice differs from the model")
    if "V" not in rm.operators:
        raise QazbError(f"{path} has no operator 'V'")
    V = rm.operators["V"]
    K = V.shape[0] // model.lattice.size
    return Representation(V, K, {"source": path}), rm


# ---------------------------------------------------------------- commands


def cmd_gen(ctx: _Ctx) -> int:
    a = ctx.args
    p = make_lattice(a.n, a.m)
    pair = canonical_pair(p)
    model = ModelFile(p, a.seed, operators={"a": pair.a, "b": pair.b},
                      notes={"kind": "pair", "domain": pair.certificate.to_dict()})
    _domain_checks(ctx, pair)
    if a.out:
        store_model(model, a.out)
    return ctx.emit()


def cmd_solve_qexp(ctx: _Ctx) -> int:
    a = ctx.args
    model = load_model(a.model)
    p = model.lattice
    opts = SolverOptions(seed=a.seed, starts=a.starts, max_sweeps=a.sweeps, window=a.window)
    try:
        F = solve(p, opts, model.policy)
    except ConvergenceError as e:
        F = e.best
        ctx.report.records.append(CheckRecord("qexp.converged", str(e), 1.0, 0.0, False, 0.0))
    res = F.report["residuals"]
    ctx.check("qexp.commutator", "[F(S) F(R), S + R] = 0",
              lambda: res["commutator_residual"], ctx.gate("qexp_commutator", p))
    ctx.check("qexp.equation", "F(S + R) = F(S) F(R) on the bulk window",
              lambda: res["equation_residual"], gated=False)
    ctx.check("qexp.nondegenerate", "F nonconstant (circular variance)",
              lambda: circular_variance(F.table), VARIANCE_FLOOR, lower=True)
    ctx.check("qexp.zero", "F(0) = 1", lambda: abs(F(0) - 1), EXACT_GATE)
    model.qexp = F
    model.seed = a.seed
    if a.out:
        store_model(model, a.out)
    return ctx.emit()


def cmd_check(ctx: _Ctx) -> int:
    a = ctx.args
    model = load_model(a.model)
    pair = _pair_from_model(model)
    if a.which == "domain":
        _domain_checks(ctx, pair)
        return ctx.emit()
    F = _qexp(model, a.constant_f)
    if a.which in ("pentagon", "delta"):
        _w_checks(ctx, pair, F, a.which, a.structured)
        return ctx.emit()
    if not a.rep_file:
        raise QazbError("check rep needs --rep FILE")
    rep, _ = _load_rep(a.rep_file, model)
    Wu = build_W(pair, F, surrogate=True)
    p = model.lattice
    ctx.check("rep.unitarity", "V* V = I",
              lambda: np.linalg.norm(rep.V.conj().T @ rep.V - np.eye(rep.V.shape[0])),
              UNITARY_GATE)
    ctx.check("rep.residual", "W23 V12 = V12 V13 W23",
              lambda: rep_residual(rep, Wu, a.window, a.structured, seed=a.seed),
              ctx.gate("cd_rep_residual", p))
    return ctx.emit()


def cmd_rep(ctx: _Ctx) -> int:
    a = ctx.args
    model = load_model(a.model)
    pair = _pair_from_model(model)
    p = model.lattice
    F = _qexp(model, a.constant_f)
    rng = np.random.default_rng(a.seed)
    if a.cd == "regular":
        cd = regular_cd_pair(pair, model.policy)
    elif a.cd == "character":
        g = p.elements()[rng.integers(p.size)]
        cd = make_cd_pair(np.array([[complex(p.q ** g.k * p.lam ** g.j)]]), np.zeros((1, 1)), p,
                          source=f"character {list(g)}")
    else:
        cd = random_cd_pair(pair, rng)
    rep = build_V(cd, pair, F)
    ctx.check("rep.unitarity", "V* V = I", lambda: rep.report["unitarity"], UNITARY_GATE)
    out = ModelFile(p, a.seed, model.policy, {"V": rep.V, "c": cd.c, "d": cd.d},
                    F if not a.constant_f else None,
                    {"kind": "representation", "Kdim": cd.Kdim, "cd": cd.source,
                     "constant_f": bool(a.constant_f),
                     "certificate": cd.certificate.to_dict()})
    if a.out:
        store_model(out, a.out)
    return ctx.emit()


def cmd_decompose(ctx: _Ctx) -> int:
    a = ctx.args
    model = load_model(a.model)
    pair = _pair_from_model(model)
    p = model.lattice
    rep, rm = _load_rep(a.rep_file, model)
    F = constant_qexp(p) if rm.notes.get("constant_f") else _qexp(model, False)
    if rm.qexp is not None:
        F = rm.qexp
    Wu = build_W(pair, F, surrogate=True)
    try:
        cd, rpt = decompose(rep, Wu, pair, F, DecomposeGates(), a.window)
    except DecompositionError as e:
        ctx.report.records.append(CheckRecord("decompose", str(e), 1.0, 0.0, False, 0.0,
                                              detail=e.report))
        return ctx.emit()
    anchors = {
        "rep_residual": "W23 V12 = V12 V13 W23",
        "left_twist": "(chi(c, g) (x) id) V = f(g b) chi(c (x) I, g I (x) a)",
        "right_twist": "V (chi(c, g) (x) id) = f(b) chi(c (x) I, g I (x) a)",
        "leg13_factor": "V13 = chi(c, a)_12^* f(a (x) b) chi(c (x) I (x) I, I (x) a (x) a)",
        "d_covariance": "d (x) I = chi(c (x) I, I (x) a)^* (d (x) a) chi(c (x) I, I (x) a)",
        "roundtrip": "V = V(c, d) rebuilt",
    }
    for key, anchor in anchors.items():
        ctx.check(f"decompose.{key}", anchor, lambda k=key: rpt[k], ctx.gate(f"cd_{key}", p))
    ctx.check("decompose.phi_slice", "(id (x) phi_gamma) V = chi(c, gamma), b -> 0 extrapolated",
              lambda: rpt["phi_slice_deviation"] if rpt["phi_slice_deviation"] is not None
              else float("nan"))
    ctx.check("decompose.self_dual", "(c, d) passes the domain predicate",
              lambda: float(rpt["self_dual"]), 1.0, lower=True)
    if "c" in rm.operators and "d" in rm.operators:
        ref = make_cd_pair(rm.operators["c"], rm.operators["d"], p, policy=model.policy) \
            if rm.notes.get("cd") != "regular" else regular_cd_pair(pair, model.policy)
        ctx.check("decompose.c_match", "Sp c recovered (multiset)",
                  lambda: label_match_rate(cd.c_dec.eigenvalues, ref.c_dec.eigenvalues, p,
                                           reduce=True),
                  1.0, lower=True)
        ctx.check("decompose.d_match", "Sp d recovered (lattice match rate)",
                  lambda: label_match_rate(cd.d_dec.eigenvalues, ref.d_dec.eigenvalues, p),
                  0.9, lower=True)
    out = ModelFile(p, a.seed, model.policy, {"c": cd.c, "d": cd.d}, None,
                    {"kind": "cd-pair", "decomposition": rpt})
    if a.out:
        store_model(out, a.out)
    return ctx.emit()


def cmd_report(ctx: _Ctx) -> int:
    a = ctx.args
    model = load_model(a.model)
    pair = _pair_from_model(model)
    _domain_checks(ctx, pair)
    if model.qexp is not None:
        p = model.lattice
        sr = make_sr_pair(pair, model.policy)
        ctx.check("sr.qsq", "R S = q^2 S R", lambda: sr.qsq_residual, EXACT_GATE)
        res = func_eq_residual(model.qexp, sr, a.window, surrogate=True, policy=model.policy)
        ctx.check("qexp.commutator", "[F(S) F(R), S + R] = 0", lambda: res.commutator_residual,
                  ctx.gate("qexp_commutator", p))
        ctx.check("qexp.equation", "F(S + R) = F(S) F(R) on the bulk window",
                  lambda: res.equation_residual, gated=False)
        _w_checks(ctx, pair, model.qexp, "all")
    return ctx.emit()


def cmd_calibrate(ctx: _Ctx) -> int:
    a = ctx.args
    p = make_lattice(a.n, a.m)
    vals = run_calibration(p, window=a.window,
                           log=lambda m: print(m, file=sys.stderr))
    data = {"format": CALIBRATION_FORMAT, "floor": 1e-12, "entries": {}}
    if a.out and os.path.exists(a.out):
        with open(a.out, encoding="utf-8") as fh:
            old = json.load(fh)
        if old.get("format") == CALIBRATION_FORMAT:
            data = old
    today = datetime.date.today().isoformat()
    data["version"] = f"{today}.{p.N}x{p.M}"
    data["entries"][f"{p.N}x{p.M}"] = {
        "values": {k: v for k, v in vals.items() if k != "qexp_table"},
        "qexp_table": vals["qexp_table"],
        "provenance": {"command": f"qazb calibrate --n {p.N} --m {p.M} --window {a.window}",
                       "solver_seeds": [1, 2], "cd_seed": 0, "date": today,
                       "qazb": __version__},
    }
    text = dumps(data)
    if a.out:
        with open(a.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    for k, v in sorted(vals.items()):
        if k != "qexp_table":
            ctx.report.add(CheckRecord(f"calibration.{k}", "measured", v, None, True, 0.0, False))
    return ctx.emit()


COMMANDS = {
    "gen": cmd_gen,
    "solve-qexp": cmd_solve_qexp,
    "check": cmd_check,
    "rep": cmd_rep,
    "decompose": cmd_decompose,
    "report": cmd_report,
    "calibrate": cmd_calibrate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    ctx = _Ctx(args, args.command)
    try:
        return COMMANDS[args.command](ctx)
    except (QazbError, OSError) as e:
        ctx.report.precondition_error = f"{type(e).__name__}: {e}"
        return ctx.emit()


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
