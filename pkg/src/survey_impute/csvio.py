"""CSV ingestion and export of survey samples.

Layout: an optional first line ``# N=<population size>``, then a header with
covariates ``x1..xp``, ``y`` (empty when missing), ``delta`` (0/1) and ``pi``.
Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import math
import re

import numpy as np

from .design import SurveySample
from .errors import SchemaError

_META = re.compile(r"^#\s*N\s*=\s*(\d+)\s*$")
_XCOL = re.compile(r"^x(\d+)$")


def ingest_csv(path, popsize: int | None = None) -> SurveySample:
    """Read and validate a sample file; ``popsize`` overrides the metadata line."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    meta_n = None
    start = 0
    if lines and lines[0].startswith("#"):
        m = _META.match(lines[0])
        if not m:
            raise SchemaError(f"{path}: line 1: expected '# N=<int>' metadata")
        meta_n = int(m.group(1))
        start = 1
    rows = list(csv.reader(lines[start:]))
    if not rows:
        raise SchemaError(f"{path}: missing header")
    header = [h.strip() for h in rows[0]]
    xcols = sorted(((int(m.group(1)), i) for i, h in enumerate(header) if (m := _XCOL.match(h))))
    if not xcols:
        raise SchemaError(f"{path}: header has no x1..xp columns")
    if [j for j, _ in xcols] != list(range(1, len(xcols) + 1)):
        raise SchemaError(f"{path}: covariate columns must be x1..x{len(xcols)} without gaps")
    missing = [c for c in ("y", "delta", "pi") if c not in header]
    if missing:
        raise SchemaError(f"{path}: header lacks column(s) {', '.join(missing)}")
    iy, idl, ipi = header.index("y"), header.index("delta"), header.index("pi")
    N = popsize if popsize is not None else meta_n
    if N is None:
        raise SchemaError(f"{path}: population size unknown; add '# N=...' or pass --pop-size")

    data = rows[1:]
    n = len(data)
    if n == 0:
        raise SchemaError(f"{path}: no data rows")
    x = np.empty((n, len(xcols)))
    y = np.full(n, np.nan)
    delta = np.empty(n, dtype=np.int8)
    pi = np.empty(n)
    for r, row in enumerate(data):
        line = start + r + 2
        if len(row) != len(header):
            raise SchemaError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
        try:
            x[r] = [float(row[i]) for _, i in xcols]
            d = row[idl].strip()
            if d not in ("0", "1"):
                raise SchemaError(f"{path}: line {line}: delta must be 0 or 1, got {d!r}")
            delta[r] = int(d)
            pi[r] = float(row[ipi])
            ytxt = row[iy].strip()
            if ytxt:
                y[r] = float(ytxt)
        except ValueError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"{path}: line {line}: {exc}") from None
        if not all(math.isfinite(v) for v in x[r]):
            raise SchemaError(f"{path}: line {line}: covariates must be finite")
        if delta[r] == 1 and not math.isfinite(y[r]):
            raise SchemaError(f"{path}: line {line}: delta=1 but y is missing")
        if not 0.0 < pi[r] <= 1.0:
            raise SchemaError(f"{path}: line {line}: pi={pi[r]!r} outside (0, 1]")
    return SurveySample(ids=np.arange(n), x=x, y=y, delta=delta, pi=pi, popsize=N)


def write_sample_csv(sample: SurveySample, path, include_popsize: bool = True) -> None:
    p = sample.x.shape[1]
    with open(path, "w", newline="") as fh:
        if include_popsize:
            fh.write(f"# N={sample.popsize}\n")
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(p)] + ["y", "delta", "pi"])
        for xi, yi, di, pii in zip(sample.x.tolist(), sample.y.tolist(),
                                   sample.delta.tolist(), sample.pi.tolist()):
            w.writerow([repr(v) for v in xi] + [repr(yi) if di == 1 else "", str(di), repr(pii)])
