"""JSON model and report files.

Complex matrices are stored row-major as nested lists of ``[re, im]`` pairs.
Floats are written with Python's shortest round-trip repr and keys are
sorted, so ``store(load(store(x)))`` reproduces the bytes of ``store(x)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .lattice import LatticeParams, make_lattice
from .linalg import DEFAULT_POLICY, TolerancePolicy
from .qexp import QExp

__all__ = [
    "MODEL_FORMAT",
    "REPORT_FORMAT",
    "FORMAT_VERSION",
    "ModelFile",
    "Report",
    "CheckRecord",
    "encode_matrix",
    "decode_matrix",
    "dumps",
    "store_model",
    "load_model",
    "model_from_text",
    "to_jsonable",
]

MODEL_FORMAT = "qazb-model"
REPORT_FORMAT = "qazb-report"
FORMAT_VERSION = 1


def encode_matrix(X) -> list:
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2:
        raise FormatError(f"expected a matrix, got shape {X.shape}")
    return [[[float(z.real), float(z.imag)] for z in row] for row in X]


def decode_matrix(blob) -> np.ndarray:
    try:
        arr = np.asarray(blob, dtype=float)
    except (TypeError, ValueError) as e:
        raise FormatError(f"malformed matrix blob: {e}") from None
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise FormatError(f"matrix blob must be rows of [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def to_jsonable(x):
    """Convert numpy scalars/arrays and tuples into plain JSON values.

    Non-finite floats become strings so the output stays strict JSON.
    """
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if x is None or isinstance(x, str):
        return x
    return repr(x)


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


@dataclass
class ModelFile:
    """Lattice header, named operators, optional qexp table and notes."""

    lattice: LatticeParams
    seed: int = 0
    policy: TolerancePolicy = DEFAULT_POLICY
    operators: dict = field(default_factory=dict)
    qexp: QExp | None = None
    notes: dict = field(default_factory=dict)

    def header(self) -> dict:
        return {
            "N": self.lattice.N,
            "M": self.lattice.M,
            "lambda": self.lattice.lam,
            "seed": int(self.seed),
            "policy": self.policy.to_dict(),
            "dims": {k: int(np.shape(v)[0]) for k, v in self.operators.items()},
        }

    def to_dict(self) -> dict:
        out = {
            "format": MODEL_FORMAT,
            "version": FORMAT_VERSION,
            "header": self.header(),
            "operators": {k: encode_matrix(v) for k, v in self.operators.items()},
            "notes": to_jsonable(self.notes),
            "qexp": None,
        }
        if self.qexp is not None:
            F = self.qexp
            out["qexp"] = {
                "table": encode_matrix(F.table),
                "cache": [[int(k), int(t), float(v.real), float(v.imag)]
                          for (k, t), v in sorted(F.cache.items())],
                "rule": F.rule,
                "report": to_jsonable(F.report),
            }
        return out


def store_model(model: ModelFile, path: str | None = None) -> str:
    text = dumps(model.to_dict())
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def model_from_text(text: str) -> ModelFile:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"not valid JSON: {e}") from None
    if not isinstance(data, dict) or data.get("format") != MODEL_FORMAT:
        raise FormatError("not a qazb model file")
    if data.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model version {data.get('version')!r}")
    try:
        h = data["header"]
        p = make_lattice(h["N"], h["M"])
        policy = TolerancePolicy.from_dict(h["policy"])
        seed = int(h["seed"])
        ops = {k: decode_matrix(v) for k, v in data["operators"].items()}
        notes = data.get("notes") or {}
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed model header: {e!r}") from None
    if not math.isclose(float(h["lambda"]), p.lam, rel_tol=0, abs_tol=0):
        raise FormatError(f"header lambda {h['lambda']} disagrees with N, M")
    dims = h.get("dims", {})
    if set(dims) != set(ops):
        raise FormatError(f"header dims {sorted(dims)} do not list the operators {sorted(ops)}")
    for name, X in ops.items():
        if X.shape != (dims[name], dims[name]):
            raise FormatError(f"operator {name!r} of shape {X.shape} disagrees with header "
                              f"dim {dims[name]}")
        if name in ("a", "b") and dims[name] != p.size:
            raise FormatError(f"operator {name!r} must act on the {p.size}-dim lattice space")
    F = None
    if data.get("qexp") is not None:
        qd = data["qexp"]
        table = decode_matrix(qd["table"])
        if table.shape != (p.N, p.M):
            raise FormatError(f"qexp table shape {table.shape} != {(p.N, p.M)}")
        cache = {(int(k), int(t)): complex(re, im) for k, t, re, im in qd.get("cache", [])}
        F = QExp(p, table, cache, qd.get("rule", QExp.__dataclass_fields__["rule"].default),
                 qd.get("report") or {})
    return ModelFile(p, seed, policy, ops, F, notes)


def load_model(path: str) -> ModelFile:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from None
    return model_from_text(text)


@dataclass
class CheckRecord:
    name: str
    anchor: str
    residual: float
    gate: float | None
    passed: bool
    wall_time: float
    gated: bool = True
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check": self.name,
            "anchor": self.anchor,
            "residual": self.residual,
            "gate": self.gate,
            "pass": self.passed,
            "gated": self.gated,
            "wall_time": self.wall_time,
            "detail": to_jsonable(self.detail),
        }


@dataclass
class Report:
    command: str
    flags: dict
    seed: int
    model_file: str | None
    calibration_version: str | None
    records: list = field(default_factory=list)
    precondition_error: str | None = None

    def add(self, rec: CheckRecord) -> CheckRecord:
        self.records.append(rec)
        return rec

    @property
    def ok(self) -> bool:
        return self.precondition_error is None and all(r.passed for r in self.records if r.gated)

    def exit_code(self) -> int:
        if self.precondition_error is not None:
            return 2
        return 0 if self.ok else 1

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": FORMAT_VERSION,
            "command": self.command,
            "flags": to_jsonable(self.flags),
            "seed": int(self.seed),
            "model_file": self.model_file,
            "calibration_version": self.calibration_version,
            "checks": [r.to_dict() for r in self.records],
            "precondition_error": self.precondition_error,
            "ok": self.ok,
            "exit_code": self.exit_code(),
        }

    def dumps(self) -> str:
        return dumps(self.to_dict())
