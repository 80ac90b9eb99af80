"""Matrix Market coordinate/array reading and writing.

Values are written with ``repr`` so every float survives a write/read cycle
bit for bit. Errors carry the file name and 1-based line number.
"""

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ParseError


def _fmt(x):
    return repr(float(x))


def _is_real(values):
    return not np.iscomplexobj(values) or not np.any(np.imag(values))


def write_sparse(path, A, symmetric=None):
    A = sp.coo_matrix(A)
    if symmetric is None:
        symmetric = A.shape[0] == A.shape[1] and (abs(A - A.T) > 0).nnz == 0
    real = _is_real(A.data)
    field = "real" if real else "complex"
    sym = "symmetric" if symmetric else "general"
    A = A.tocsr()
    A.sum_duplicates()
    A = A.tocoo()
    mask = A.row >= A.col if symmetric else np.ones(A.nnz, dtype=bool)
    rows, cols, vals = A.row[mask], A.col[mask], A.data[mask]
    order = np.lexsort((rows, cols))
    lines = [f"%%MatrixMarket matrix coordinate {field} {sym}", f"{A.shape[0]} {A.shape[1]} {len(vals)}"]
    for k in order:
        v = vals[k]
        if real:
            lines.append(f"{rows[k] + 1} {cols[k] + 1} {_fmt(np.real(v))}")
        else:
            lines.append(f"{rows[k] + 1} {cols[k] + 1} {_fmt(v.real)} {_fmt(v.imag)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_array(path, A):
    """Dense vector or matrix in array format (column-major)."""
    A = np.asarray(A)
    if A.ndim == 1:
        A = A[:, None]
    real = _is_real(A)
    field = "real" if real else "complex"
    lines = [f"%%MatrixMarket matrix array {field} general", f"{A.shape[0]} {A.shape[1]}"]
    for v in A.ravel(order="F"):
        if real:
            lines.append(_fmt(np.real(v)))
        else:
            lines.append(f"{_fmt(v.real)} {_fmt(v.imag)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _header(path, lines):
    if not lines:
        raise ParseError(path, 1, "empty file")
    parts = lines[0].split()
    if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
        raise ParseError(path, 1, "missing %%MatrixMarket matrix header")
    fmt, field, sym = (x.lower() for x in parts[2:])
    if fmt not in ("coordinate", "array"):
        raise ParseError(path, 1, f"unsupported format {fmt!r}")
    if field not in ("real", "complex", "integer"):
        raise ParseError(path, 1, f"unsupported field {field!r}")
    if sym not in ("general", "symmetric"):
        raise ParseError(path, 1, f"unsupported symmetry {sym!r}")
    body = [(n + 1, ln) for n, ln in enumerate(lines) if n > 0 and ln.strip() and not ln.startswith("%")]
    if not body:
        raise ParseError(path, len(lines), "missing size line")
    return fmt, field, sym, body


def _value(path, lineno, tokens, complex_field):
    try:
        if complex_field:
            return complex(float(tokens[0]), float(tokens[1]))
        return float(tokens[0])
    except (ValueError, IndexError):
        raise ParseError(path, lineno, f"bad value {' '.join(tokens)!r}") from None


def read(path):
    """Read a Matrix Market file; coordinate -> csr_matrix, array -> ndarray."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ParseError(path, 0, str(exc)) from None
    fmt, field, sym, body = _header(path, lines)
    cplx = field == "complex"
    size_no, size_line = body[0]
    try:
        dims = [int(x) for x in size_line.split()]
    except ValueError:
        raise ParseError(path, size_no, "bad size line") from None

    if fmt == "array":
        if len(dims) != 2:
            raise ParseError(path, size_no, "array size line needs 2 integers")
        nr, nc = dims
        entries = body[1:]
        if len(entries) != nr * nc:
            lineno = entries[-1][0] if entries else size_no
            raise ParseError(path, lineno, f"expected {nr * nc} values, found {len(entries)}")
        vals = np.array(
            [_value(path, n, ln.split(), cplx) for n, ln in entries],
            dtype=complex if cplx else float,
        )
        return vals.reshape((nr, nc), order="F")

    if len(dims) != 3:
        raise ParseError(path, size_no, "coordinate size line needs 3 integers")
    nr, nc, nnz = dims
    entries = body[1:]
    if len(entries) != nnz:
        lineno = entries[-1][0] if entries else size_no
        raise ParseError(path, lineno, f"expected {nnz} entries, found {len(entries)}")
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=complex if cplx else float)
    seen = set()
    for k, (n, ln) in enumerate(entries):
        tok = ln.split()
        try:
            i, j = int(tok[0]) - 1, int(tok[1]) - 1
        except (ValueError, IndexError):
            raise ParseError(path, n, "bad index pair") from None
        if not (0 <= i < nr and 0 <= j < nc):
            raise ParseError(path, n, f"index ({i + 1}, {j + 1}) out of range")
        if sym == "symmetric" and i < j:
            raise ParseError(path, n, "symmetric file stores upper-triangle entry")
        if (i, j) in seen:
            raise ParseError(path, n, f"duplicate entry ({i + 1}, {j + 1})")
        seen.add((i, j))
        rows[k], cols[k] = i, j
        vals[k] = _value(path, n, tok[2:], cplx)
    if sym == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return sp.csr_matrix((vals, (rows, cols)), shape=(nr, nc))


def read_vector(path):
    A = read(path)
    if sp.issparse(A):
        A = A.toarray()
    if A.ndim == 2 and A.shape[1] != 1:
        raise ParseError(path, 2, f"expected a column vector, got shape {A.shape}")
    return A.ravel()
