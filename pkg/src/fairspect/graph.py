"""Graph and attribute data model: file ingestion, masking, splitting.

Graphs are simple (no self-loops, no duplicate edges), undirected and
unweighted, stored in compressed sparse row form. All containers are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass

import numpy as np


class EdgeListFormatError(ValueError):
    """Raised when edge-list text cannot be parsed."""


class AttributeTableError(ValueError):
    """Raised when an attribute CSV violates the expected schema."""


_N_HEADER = re.compile(r"#\s*n\s*=\s*(\d+)\s*$")


@dataclass(frozen=True)
class Graph:
    """Symmetric adjacency in CSR form.

    ``row_offsets`` has length n+1; ``col_indices[row_offsets[i]:row_offsets[i+1]]``
    are the neighbours of node i, sorted ascending. Each undirected edge is
    stored twice, so ``row_offsets[n] == 2 * edge_count``.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    edge_count: int

    def __post_init__(self):
        self.row_offsets.setflags(write=False)
        self.col_indices.setflags(write=False)
        if self.row_offsets.shape != (self.n + 1,):
            raise ValueError("row_offsets must have length n+1")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != len(self.col_indices):
            raise ValueError("row_offsets endpoints inconsistent with col_indices")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if len(self.col_indices) != 2 * self.edge_count:
            raise ValueError("stored entries must equal 2 * edge_count")

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def to_scipy(self):
        """CSR matrix with unit weights (float64)."""
        from scipy.sparse import csr_matrix

        data = np.ones(len(self.col_indices), dtype=np.float64)
        return csr_matrix((data, self.col_indices, self.row_offsets), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def undirected_edges(self) -> list[tuple[int, int]]:
        """Unique (u, v) pairs with u < v."""
        out = []
        for u in range(self.n):
            for v in self.neighbors(u):
                if u < v:
                    out.append((u, int(v)))
        return out


def from_edges(n: int, edges) -> Graph:
    """Build a Graph from unique undirected (u, v) pairs, u != v."""
    pairs = sorted({(min(u, v), max(u, v)) for u, v in edges})
    if pairs and pairs[-1][1] >= n:
        raise ValueError("edge endpoint exceeds node count")
    if any(u == v for u, v in pairs):
        raise ValueError("self-loops are not representable")
    if pairs:
        arr = np.array(pairs, dtype=np.int64)
        src = np.concatenate([arr[:, 0], arr[:, 1]])
        dst = np.concatenate([arr[:, 1], arr[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
    else:
        src = dst = np.empty(0, dtype=np.int64)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    offsets = np.cumsum(offsets)
    return Graph(n=n, row_offsets=offsets, col_indices=dst, edge_count=len(pairs))


def load_edge_list(text: str) -> Graph:
    """Parse "u v" pairs into a symmetric Graph.

    Lines starting with ``#`` are comments; an optional ``# n=<N>`` header
    fixes the node count (for trailing isolated nodes). Duplicate edges are
    collapsed and self-loops dropped. Node ids must be nonnegative;
    n = 1 + max id seen unless the header says otherwise.
    """
    header_n = None
    pairs = set()
    max_id = -1
    saw_content = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _N_HEADER.match(line)
            if m:
                header_n = int(m.group(1))
                saw_content = True
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListFormatError(f"line {lineno}: expected two node ids, got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListFormatError(f"line {lineno}: non-integer node id in {raw!r}") from None
        if u < 0 or v < 0:
            raise EdgeListFormatError(f"line {lineno}: negative node id in {raw!r}")
        saw_content = True
        max_id = max(max_id, u, v)
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    if not saw_content:
        raise EdgeListFormatError("empty edge list")
    n = max_id + 1
    if header_n is not None:
        if header_n < n:
            raise EdgeListFormatError(f"header n={header_n} smaller than max id {max_id}")
        n = header_n
    if n == 0:
        raise EdgeListFormatError("graph has no nodes")
    return from_edges(n, pairs)


def to_edge_list_text(graph: Graph) -> str:
    """Serialise a Graph back to edge-list text (round-trips via load_edge_list)."""
    lines = [f"# n={graph.n}"]
    lines += [f"{u} {v}" for u, v in graph.undirected_edges()]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AttributeMatrix:
    """Node feature matrix (n x d) with the sensitive column marked."""

    features: np.ndarray
    sensitive_index: int

    def __post_init__(self):
        self.features.setflags(write=False)
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if not 0 <= self.sensitive_index < self.features.shape[1]:
            raise ValueError("sensitive_index out of range")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SensitiveColumn:
    """Per-node sensitive class ids plus a disclosure mask.

    ``values[i]`` is meaningful only where ``present[i]`` is True; masked
    entries keep their ground-truth value for evaluation, which the model
    never sees.
    """

    values: np.ndarray
    present: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)
        self.present.setflags(write=False)
        if self.values.shape != self.present.shape or self.values.ndim != 1:
            raise ValueError("values and present must be 1-D arrays of equal length")
        if self.present.dtype != np.bool_:
            raise ValueError("present must be boolean")
        if np.any(self.values < 0):
            raise ValueError("sensitive class ids must be nonnegative")
        if not self.present.any():
            raise ValueError("at least one node must have a disclosed sensitive value")

    @property
    def n(self) -> int:
        return len(self.values)

    def complete_vector(self) -> np.ndarray:
        """Ground-truth column as float64 (evaluation view)."""
        return self.values.astype(np.float64)

    def padded_vector(self) -> np.ndarray:
        """Zero-padded column as float64 (what the model may see)."""
        return np.where(self.present, self.values, 0).astype(np.float64)


def load_attributes(csv_text: str, expected_n: int | None = None):
    """Parse an attribute CSV into (AttributeMatrix, SensitiveColumn, labels).

    The header must contain ``id``, ``sensitive`` and ``label``; every other
    column is a real-valued feature. The sensitive column is part of the
    feature matrix. Rows must cover ids 0..n-1 exactly once. Labels greater
    than 1 are merged into class 1.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise AttributeTableError("empty attribute table") from None
    header = [h.strip() for h in header]
    for required in ("id", "sensitive", "label"):
        if required not in header:
            raise AttributeTableError(f"missing required column {required!r}")
    id_col = header.index("id")
    label_col = header.index("label")
    feature_cols = [j for j in range(len(header)) if j not in (id_col, label_col)]
    sensitive_index = feature_cols.index(header.index("sensitive"))

    rows = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise AttributeTableError(f"row {lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            node = int(row[id_col])
        except ValueError:
            raise AttributeTableError(f"row {lineno}: non-integer id {row[id_col]!r}") from None
        if node in rows:
            raise AttributeTableError(f"row {lineno}: duplicate id {node}")
        try:
            feats = [float(row[j]) for j in feature_cols]
        except ValueError:
            raise AttributeTableError(f"row {lineno}: non-numeric feature cell") from None
        try:
            label = int(row[label_col])
        except ValueError:
            raise AttributeTableError(f"row {lineno}: non-integer label {row[label_col]!r}") from None
        if label < 0:
            raise AttributeTableError(f"row {lineno}: negative label {label}")
        rows[node] = (feats, label)

    if not rows:
        raise AttributeTableError("attribute table has no data rows")
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise AttributeTableError("node ids must be contiguous 0..n-1")
    if expected_n is not None and n != expected_n:
        raise AttributeTableError(f"attribute table has {n} rows, graph has {expected_n} nodes")

    features = np.array([rows[i][0] for i in range(n)], dtype=np.float64)
    labels = np.array([min(rows[i][1], 1) for i in range(n)], dtype=np.int64)
    sens_values = features[:, sensitive_index]
    if np.any(sens_values != np.round(sens_values)):
        raise AttributeTableError("sensitive column must hold integer class ids")
    sensitive = SensitiveColumn(
        values=sens_values.astype(np.int64),
        present=np.ones(n, dtype=bool),
    )
    return AttributeMatrix(features=features, sensitive_index=sensitive_index), sensitive, labels


def apply_missing_mask(sensitive: SensitiveColumn, rate: float, seed: int) -> SensitiveColumn:
    """Mask exactly floor(rate * n) uniformly chosen nodes (seeded).

    Ground-truth values are retained; only the presence mask changes.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("missing rate must be in [0, 1)")
    if not sensitive.present.all():
        raise ValueError("input mask must be all-present")
    n = sensitive.n
    count = int(rate * n)
    present = np.ones(n, dtype=bool)
    if count:
        rng = np.random.default_rng(seed)
        masked = rng.choice(n, size=count, replace=False)
        present[masked] = False
    return SensitiveColumn(values=sensitive.values.copy(), present=present)


def parse_mask_file(text: str, sensitive: SensitiveColumn) -> SensitiveColumn:
    """Apply a mask file (one node id per line = missing) to an all-present column."""
    if not sensitive.present.all():
        raise ValueError("input mask must be all-present")
    present = np.ones(sensitive.n, dtype=bool)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            node = int(line)
        except ValueError:
            raise EdgeListFormatError(f"mask line {lineno}: non-integer id {raw!r}") from None
        if not 0 <= node < sensitive.n:
            raise EdgeListFormatError(f"mask line {lineno}: id {node} out of range")
        present[node] = False
    return SensitiveColumn(values=sensitive.values.copy(), present=present)


def mask_file_text(sensitive: SensitiveColumn) -> str:
    """Serialise the missing-node ids of a column, one per line."""
    ids = np.flatnonzero(~sensitive.present)
    return "\n".join(str(i) for i in ids) + ("\n" if len(ids) else "")


@dataclass(frozen=True)
class Split:
    """Disjoint train/val/test node index sets."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for arr in (self.train, self.val, self.test):
            arr.setflags(write=False)
        all_idx = np.concatenate([self.train, self.val, self.test])
        if len(np.unique(all_idx)) != len(all_idx):
            raise ValueError("split index sets must be pairwise disjoint")


def make_split(n: int, train_size: int | None, seed: int) -> Split:
    """Seeded split: floor(n/4) validation, floor(n/4) test, train from the rest."""
    quarter = n // 4
    remainder = n - 2 * quarter
    if train_size is None:
        train_size = remainder
    if not 0 <= train_size <= remainder:
        raise ValueError(f"train_size must be in [0, {remainder}] for n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    val = np.sort(perm[:quarter])
    test = np.sort(perm[quarter:2 * quarter])
    train = np.sort(perm[2 * quarter:2 * quarter + train_size])
    return Split(train=train, val=val, test=test)


def is_connected(graph: Graph) -> bool:
    if graph.n == 0:
        return False
    seen = np.zeros(graph.n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in graph.neighbors(u):
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return bool(seen.all())


def is_bipartite(graph: Graph) -> bool:
    color = np.full(graph.n, -1, dtype=np.int8)
    for start in range(graph.n):
        if color[start] >= 0:
            continue
        color[start] = 0
        stack = [start]
        while stack:
            u = stack.pop()
            for v in graph.neighbors(u):
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    stack.append(int(v))
                elif color[v] == color[u]:
                    return False
    return True
