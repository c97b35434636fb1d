import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from selclust import DataError
from selclust.io import load_csv, qq_svg, write_csv


def test_headerless(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("0,0\n2,2\n")
    assert load_csv(f).tolist() == [[0.0, 0.0], [2.0, 2.0]]


def test_single_header(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("bill,flipper\n1.5,2\n3,4e1\n\n")
    assert load_csv(f).tolist() == [[1.5, 2.0], [3.0, 40.0]]


def test_ragged_row_names_line(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("1,2\n3\n")
    with pytest.raises(DataError, match="line 2"):
        load_csv(f)


def test_bad_cell_names_line_and_column(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("a,b\n1,2\n3,x\n")
    with pytest.raises(DataError, match="line 3, column 2"):
        load_csv(f)


@pytest.mark.parametrize("cell", ["nan", "inf", "-inf"])
def test_non_finite_rejected(tmp_path, cell):
    f = tmp_path / "d.csv"
    f.write_text(f"1,2\n3,{cell}\n")
    with pytest.raises(DataError):
        load_csv(f)


def test_missing_and_empty(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv")
    (tmp_path / "e.csv").write_text("x,y\n")
    with pytest.raises(DataError):
        load_csv(tmp_path / "e.csv")


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 4)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_round_trip_bit_exact(tmp_path_factory, m):
    f = tmp_path_factory.mktemp("rt") / "m.csv"
    write_csv(f, m)
    back = load_csv(f)
    assert back.shape == m.shape
    assert np.array_equal(back.view(np.uint64), m.view(np.uint64))


def test_svg_deterministic_and_well_formed():
    import xml.etree.ElementTree as ET

    p = np.random.default_rng(0).uniform(size=50)
    a, b = qq_svg(p, "t"), qq_svg(p.copy(), "t")
    assert a == b
    root = ET.fromstring(a)
    assert root.tag.endswith("svg")
    assert a.count("<circle") == 50
