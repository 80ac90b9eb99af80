import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mptrom import mmio
from mptrom.errors import ParseError


def test_sparse_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    A = sp.random(30, 30, density=0.1, random_state=rng)
    A = (A + A.T).tocsr()
    mmio.write_sparse(tmp_path / "a.mtx", A)
    B = mmio.read(tmp_path / "a.mtx")
    assert (A != B).nnz == 0
    # an independent reader sees the same matrix
    assert np.array_equal(scipy.io.mmread(str(tmp_path / "a.mtx")).toarray(), A.toarray())


def test_complex_general_roundtrip(tmp_path):
    A = sp.csr_matrix(np.array([[1 + 2j, 0], [3.5, -1e-300j]]))
    mmio.write_sparse(tmp_path / "c.mtx", A, symmetric=False)
    assert "complex general" in (tmp_path / "c.mtx").read_text().splitlines()[0]
    assert np.array_equal(mmio.read(tmp_path / "c.mtx").toarray(), A.toarray())


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=12))
def test_array_roundtrip_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("v") / "v.mtx"
    v = np.array(values)
    mmio.write_array(path, v)
    assert np.array_equal(mmio.read_vector(path), v)


def test_array_matches_scipy_reader(tmp_path):
    A = np.arange(6.0).reshape(2, 3) / 7.0
    mmio.write_array(tmp_path / "a.mtx", A)
    assert np.array_equal(scipy.io.mmread(str(tmp_path / "a.mtx")), A)


@pytest.mark.parametrize(
    "body, line",
    [
        ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n1 1 2.0\n", 4),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n", 3),
    ],
)
def test_parse_errors_carry_line_numbers(tmp_path, body, line):
    p = tmp_path / "bad.mtx"
    p.write_text(body)
    with pytest.raises(ParseError) as exc:
        mmio.read(p)
    assert exc.value.line == line
    assert "bad.mtx" in str(exc.value)


def test_bad_header(tmp_path):
    p = tmp_path / "h.mtx"
    p.write_text("not a header\n1 1 0\n")
    with pytest.raises(ParseError):
        mmio.read(p)
