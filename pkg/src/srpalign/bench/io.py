"""CSV readers and writers for point sets and results."""
import csv
import math

import numpy as np

from ..errors import DataError

POINT_KINDS = ("p", "q", "ptilde", "qtilde")


def read_point_csv(path):
    """Read a point-set CSV into ``{kind: d x n array}``.

    Header is ``kind,dim,index,c0,...,c{D-1}``. Each row holds one point;
    ``dim`` must equal ``D`` and indices of each kind must be ``0..n-1``.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[:3] != ["kind", "dim", "index"]:
            raise DataError(f"{path}: header must start with kind,dim,index")
        D = len(header) - 3
        if D < 1 or header[3:] != [f"c{k}" for k in range(D)]:
            raise DataError(f"{path}: coordinate columns must be c0..c{{D-1}}")
        rows = {k: {} for k in POINT_KINDS}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != D + 3:
                raise DataError(f"{path}:{lineno}: expected {D + 3} fields, got {len(row)}")
            kind = row[0].strip()
            if kind not in rows:
                raise DataError(f"{path}:{lineno}: unknown kind {kind!r}")
            try:
                dim = int(row[1])
                idx = int(row[2])
                coords = [float(c) for c in row[3:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if dim != D:
                raise DataError(f"{path}:{lineno}: dim {dim} does not match {D} coordinate columns")
            if not all(math.isfinite(c) for c in coords):
                raise DataError(f"{path}:{lineno}: non-finite coordinate")
            if idx in rows[kind]:
                raise DataError(f"{path}:{lineno}: duplicate {kind} index {idx}")
            rows[kind][idx] = coords
    out = {}
    for kind, pts in rows.items():
        if not pts:
            continue
        n = len(pts)
        if sorted(pts) != list(range(n)):
            raise DataError(f"{path}: {kind} indices must be 0..{n - 1}")
        out[kind] = np.array([pts[i] for i in range(n)], dtype=np.float64).T
    return out


def write_point_csv(path, arrays):
    """Write ``{kind: d x n array}`` in the point-set CSV format."""
    dims = {np.asarray(a).shape[0] for a in arrays.values()}
    if len(dims) != 1:
        raise DataError("all point sets must share the dimension")
    (d,) = dims
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "dim", "index"] + [f"c{k}" for k in range(d)])
        for kind in POINT_KINDS:
            if kind not in arrays:
                continue
            X = np.asarray(arrays[kind], dtype=np.float64)
            for i in range(X.shape[1]):
                w.writerow([kind, d, i] + [repr(float(v)) for v in X[:, i]])


def format_value(v):
    """Render a field: floats round-trip exactly, NaN/None become empty."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if not math.isfinite(v) else repr(v)
    return str(v)


def write_rows(fh, fields, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([format_value(getattr(r, f) if not isinstance(r, dict) else r[f]) for f in fields])


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
