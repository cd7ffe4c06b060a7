"""LIBSVM-format datasets, index partitioning, and shard construction.

The text format is one example per line::

    <label> <index>:<value> <index>:<value> ...

with 1-based, strictly ascending feature indices.  ``#`` starts a comment
that runs to end of line; blank lines are skipped.  Any positive label is
normalized to +1 and everything else to -1.

Partitioning is by contiguous index ranges, deliberately *not* shuffled:
datasets whose rows are ordered by label therefore yield highly
heterogeneous shards, which is the interesting regime for local descent.
"""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ParseError
from .objectives import LogisticL2, ObjectiveSuite, make_suite

__all__ = [
    "SparseDataset",
    "PartitionSpec",
    "parse_libsvm",
    "load_libsvm",
    "serialize_libsvm",
    "partition_by_index",
    "shards_to_suite",
]


@dataclass(frozen=True, eq=False)
class SparseDataset:
    """Immutable sparse design matrix plus normalized +/-1 labels."""

    X: sp.csr_matrix
    y: np.ndarray

    def __post_init__(self):
        X = sp.csr_matrix(self.X, dtype=np.float64, copy=True)
        y = np.asarray(self.y, dtype=np.float64)
        if y.shape != (X.shape[0],):
            raise ValueError(f"labels must have shape ({X.shape[0]},), got {y.shape}")
        if y.size and not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must all be +1 or -1")
        for i in range(X.shape[0]):
            idx = X.indices[X.indptr[i]:X.indptr[i + 1]]
            if idx.size and np.any(np.diff(idx) <= 0):
                raise ValueError(f"row {i}: feature indices must be strictly ascending")
        if X.nnz and (X.indices.min() < 0 or X.indices.max() >= X.shape[1]):
            raise ValueError("feature index out of range")
        for arr in (X.data, X.indices, X.indptr):
            arr.setflags(write=False)
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(indices, values) of row i, 0-based indices."""
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return self.X.indices[lo:hi], self.X.data[lo:hi]


@dataclass(frozen=True)
class PartitionSpec:
    """Contiguous index ranges covering [0, n): shard m is boundaries[m]:boundaries[m+1]."""

    boundaries: tuple[int, ...]

    def __post_init__(self):
        b = tuple(int(v) for v in self.boundaries)
        if len(b) < 2 or b[0] != 0:
            raise ValueError("boundaries must start at 0 and describe at least one shard")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ValueError("every shard must be nonempty")
        object.__setattr__(self, "boundaries", b)

    @property
    def M(self) -> int:
        return len(self.boundaries) - 1

    def shard_range(self, m: int) -> tuple[int, int]:
        return self.boundaries[m], self.boundaries[m + 1]

    def shard_sizes(self) -> tuple[int, ...]:
        b = self.boundaries
        return tuple(b[i + 1] - b[i] for i in range(self.M))


def _parse_line(line: str, line_no: int):
    comment = line.find("#")
    if comment >= 0:
        line = line[:comment]
    tokens = line.split()
    if not tokens:
        return None
    try:
        raw_label = float(tokens[0])
    except ValueError:
        raise ParseError(f"non-numeric label {tokens[0]!r}", line_no) from None
    label = 1.0 if raw_label > 0 else -1.0
    indices: list[int] = []
    values: list[float] = []
    prev = 0
    for tok in tokens[1:]:
        head, sep, tail = tok.partition(":")
        if not sep:
            raise ParseError(f"malformed feature {tok!r} (expected index:value)", line_no)
        try:
            idx = int(head)
        except ValueError:
            raise ParseError(f"non-numeric feature index {head!r}", line_no) from None
        if idx < 1:
            raise ParseError(f"feature index {idx} must be >= 1", line_no)
        if idx <= prev:
            raise ParseError(
                f"feature index {idx} repeats or decreases (previous was {prev})", line_no
            )
        try:
            val = float(tail)
        except ValueError:
            raise ParseError(f"non-numeric feature value {tail!r}", line_no) from None
        indices.append(idx - 1)
        values.append(val)
        prev = idx
    return label, indices, values


def parse_libsvm(source, d: int | None = None) -> SparseDataset:
    """Parse LIBSVM text from a string, bytes, or line-iterable stream.

    ``d`` pads the feature dimension (useful to align train/test splits);
    it must be at least the largest index seen.  Malformed input raises
    :class:`ParseError` with the offending 1-based line number.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        lines = io.StringIO(source)
    else:
        lines = source
    labels: list[float] = []
    indptr = [0]
    all_indices: list[int] = []
    all_values: list[float] = []
    for line_no, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        parsed = _parse_line(raw, line_no)
        if parsed is None:
            continue
        label, indices, values = parsed
        labels.append(label)
        all_indices.extend(indices)
        all_values.extend(values)
        indptr.append(len(all_indices))
    inferred = (max(all_indices) + 1) if all_indices else 0
    if d is None:
        d = inferred
    elif d < inferred:
        raise ValueError(f"requested dimension {d} is below the largest feature index {inferred}")
    X = sp.csr_matrix(
        (
            np.asarray(all_values, dtype=np.float64),
            np.asarray(all_indices, dtype=np.int32),
            np.asarray(indptr, dtype=np.int32),
        ),
        shape=(len(labels), d),
    )
    return SparseDataset(X=X, y=np.asarray(labels, dtype=np.float64))


def load_libsvm(path, d: int | None = None) -> SparseDataset:
    """Parse a LIBSVM file; ``.gz`` paths are decompressed transparently.

    Parse failures are re-raised with the file path prefixed to the
    line-numbered message.
    """
    opener = gzip.open if str(path).endswith(".gz") else open
    try:
        with opener(path, "rt", encoding="utf-8") as fh:
            return parse_libsvm(fh, d=d)
    except ParseError as err:
        wrapped = ParseError(f"{path}: {err}")
        wrapped.line_no = err.line_no
        raise wrapped from err


def serialize_libsvm(ds: SparseDataset) -> str:
    """Canonical text form: +1/-1 labels, 1-based indices, repr-exact floats.

    ``parse_libsvm(serialize_libsvm(ds))`` reproduces ds exactly, and
    serializing again yields the identical bytes.
    """
    out = []
    for i in range(ds.n):
        idx, val = ds.row(i)
        parts = ["+1" if ds.y[i] > 0 else "-1"]
        parts.extend(f"{int(j) + 1}:{float(v)!r}" for j, v in zip(idx, val))
        out.append(" ".join(parts))
    return "\n".join(out) + ("\n" if out else "")


def partition_by_index(ds: SparseDataset, M: int) -> PartitionSpec:
    """Split [0, n) into M contiguous ranges, sizes differing by at most one.

    The first ``n mod M`` shards get the extra row.  Rows are taken in file
    order on purpose — no shuffling — so label-ordered files produce
    heterogeneous shards.
    """
    M = int(M)
    if M < 1:
        raise ValueError("M must be at least 1")
    if ds.n < M:
        raise ValueError(f"cannot split {ds.n} rows into {M} nonempty shards")
    base, extra = divmod(ds.n, M)
    boundaries = [0]
    for m in range(M):
        boundaries.append(boundaries[-1] + base + (1 if m < extra else 0))
    return PartitionSpec(boundaries=tuple(boundaries))


def shards_to_suite(ds: SparseDataset, spec: PartitionSpec, lam: float) -> ObjectiveSuite:
    """Build one logistic-loss local function per shard.

    Each shard normalizes by its own row count, so when shard sizes are
    unequal the suite average is a weighted — not the plain 1/n — average
    of the row losses.  The ridge term (same lam everywhere) is unaffected.
    """
    if spec.boundaries[-1] != ds.n:
        raise ValueError(
            f"partition covers {spec.boundaries[-1]} rows but the dataset has {ds.n}"
        )
    functions = []
    for m in range(spec.M):
        lo, hi = spec.shard_range(m)
        functions.append(LogisticL2(A=ds.X[lo:hi], y=ds.y[lo:hi], lam=lam))
    return make_suite(functions)
