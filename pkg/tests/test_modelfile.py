import json

import numpy as np
import pytest

from qazb.errors import FormatError
from qazb.lattice import make_lattice
from qazb.modelfile import (
    CheckRecord,
    ModelFile,
    Report,
    decode_matrix,
    encode_matrix,
    load_model,
    model_from_text,
    store_model,
    to_jsonable,
)


@pytest.fixture
def model(pair62, F1):
    return ModelFile(pair62.lattice, 3, operators={"a": pair62.a, "b": pair62.b, "c": np.eye(2)},
                     qexp=F1, notes={"kind": "test", "x": np.float64(0.5)})


def test_matrix_codec_roundtrip(rng):
    X = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    assert np.array_equal(decode_matrix(encode_matrix(X)), X)
    with pytest.raises(FormatError):
        decode_matrix([[1, 2], [3, 4]])
    with pytest.raises(FormatError):
        encode_matrix(np.zeros(3))


def test_byte_stable_roundtrip(model, tmp_path):
    path = tmp_path / "m.json"
    text = store_model(model, str(path))
    again = store_model(load_model(str(path)))
    assert again == text
    m2 = model_from_text(text)
    assert np.array_equal(m2.operators["b"], model.operators["b"])
    assert np.array_equal(m2.qexp.table, model.qexp.table)
    assert m2.qexp.cache == model.qexp.cache
    assert m2.seed == 3 and m2.policy == model.policy


def test_rejects_malformed(model):
    good = json.loads(store_model(model))
    with pytest.raises(FormatError):
        model_from_text("{not json")
    with pytest.raises(FormatError):
        model_from_text(json.dumps({**good, "format": "other"}))
    with pytest.raises(FormatError):
        model_from_text(json.dumps({**good, "version": 99}))
    bad = json.loads(store_model(model))
    bad["header"]["lambda"] = 1.5
    with pytest.raises(FormatError, match="lambda"):
        model_from_text(json.dumps(bad))
    bad = json.loads(store_model(model))
    bad["header"]["dims"]["c"] = 3
    with pytest.raises(FormatError, match="header"):
        model_from_text(json.dumps(bad))
    bad = json.loads(store_model(model))
    del bad["header"]["N"]
    with pytest.raises(FormatError):
        model_from_text(json.dumps(bad))


def test_lattice_operator_dims_enforced():
    p = make_lattice(6, 2)
    m = ModelFile(p, operators={"a": np.eye(5)})
    with pytest.raises(FormatError, match="lattice space"):
        model_from_text(store_model(m))


def test_load_missing_file(tmp_path):
    with pytest.raises(FormatError):
        load_model(str(tmp_path / "nope.json"))


def test_to_jsonable():
    out = to_jsonable({1: (np.int64(2), np.float32(0.5), 1 + 2j, np.array([True]), float("nan"))})
    assert out == {"1": [2, 0.5, [1.0, 2.0], [True], "nan"]}
    json.dumps(out, allow_nan=False)


def test_report_exit_codes():
    r = Report("x", {}, 0, None, None)
    assert r.exit_code() == 0
    r.add(CheckRecord("ungated", "", 5.0, None, False, 0.0, gated=False))
    assert r.exit_code() == 0
    r.add(CheckRecord("bad", "", 5.0, 1.0, False, 0.0))
    assert r.exit_code() == 1
    r.precondition_error = "boom"
    assert r.exit_code() == 2
    d = json.loads(r.dumps())
    assert d["exit_code"] == 2 and d["checks"][1]["check"] == "bad"
