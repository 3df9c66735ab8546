import enum
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np
import pytest

from mixbias.diagnostics import NuVector, permutation_test
from mixbias.plots import emit_boxplot, emit_permutation_plot
from mixbias.serialize import dumps, to_jsonable, write_csv

SVG = "{http://www.w3.org/2000/svg}"


class Color(enum.Enum):
    RED = "red"


@dataclass
class Row:
    a: float
    b: np.ndarray
    c: Color


def test_to_jsonable_types():
    out = to_jsonable(Row(np.float64(0.1), np.array([1, 2]), Color.RED))
    assert out == {"a": 0.1, "b": [1, 2], "c": "red"}
    assert to_jsonable(float("nan")) is None
    assert to_jsonable({1: np.bool_(True)}) == {"1": True}


def test_float_roundtrip_is_exact():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(200) * 10.0 ** rng.integers(-20, 20, 200)
    back = json.loads(dumps({"x": x}))["x"]
    assert np.array_equal(np.array(back), x)


def test_dumps_is_deterministic():
    payload = {"b": 1.0, "a": [np.float64(1 / 3)]}
    assert dumps(payload) == dumps(dict(reversed(list(payload.items()))))


def test_write_csv(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, [Row(1.5, np.array([]), Color.RED)], header=["a", "c"])
    assert path.read_text() == "a,c\n1.5,red\n"


def _perm_result(nu, eta, n=2000):
    return permutation_test(NuVector(np.asarray(nu, float), np.ones(1), 1.0),
                            np.asarray(eta, float), n_perms=n, seed=0)


def _lines(path):
    root = ET.parse(path).getroot()
    return {el.get("id"): float(el.get("data-value")) for el in root.iter(f"{SVG}line")
            if el.get("data-value") is not None}


def test_permutation_plot_lines(tmp_path):
    rng = np.random.default_rng(1)
    res = _perm_result(rng.standard_normal(10), rng.standard_normal(10))
    path = tmp_path / "p.svg"
    emit_permutation_plot(res, path, title="demo")
    lines = _lines(path)
    assert lines["observed"] == res.observed
    assert lines["zero"] == 0.0
    assert lines["q005"] == res.lower_q and lines["q995"] == res.upper_q
    bars = ET.parse(path).getroot().find(f"{SVG}g[@id='histogram']")
    assert len(bars) == 200


def test_degenerate_plot_single_bin(tmp_path):
    res = _perm_result(np.zeros(5), np.arange(5.0), n=500)
    path = tmp_path / "d.svg"
    emit_permutation_plot(res, path)
    lines = _lines(path)
    assert set(lines.values()) == {0.0}
    bars = ET.parse(path).getroot().find(f"{SVG}g[@id='histogram']")
    assert len(bars) == 1


def test_plot_is_byte_identical(tmp_path):
    res = _perm_result([1.0, -1.0, 0.5], [0.2, 0.1, -0.3], n=300)
    emit_permutation_plot(res, tmp_path / "a.svg")
    emit_permutation_plot(res, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_plot_unwritable_path(tmp_path):
    res = _perm_result([1.0, -1.0], [0.2, 0.1], n=100)
    with pytest.raises(OSError):
        emit_permutation_plot(res, tmp_path / "missing" / "x.svg")


def test_boxplot(tmp_path):
    rng = np.random.default_rng(2)
    path = tmp_path / "b.svg"
    emit_boxplot({"mixed": rng.standard_normal(50), "fixed": rng.standard_normal(50) + 1},
                 path, reference={"mixed": 0.7})
    root = ET.parse(path).getroot()
    names = [g.get("data-name") for g in root.iter(f"{SVG}g")]
    assert names == ["mixed", "fixed"]
    assert _lines(path) == {None: 0.7}
