"""Multi-label and ad-click datasets turned into bandit feedback.

Multi-label files look like::

    # d=3 actions=4
    f0,f1,f2,l0,l1,l2,l3
    0.1,0.5,2.0,0,1,0,1
    ...

Comma or tab separated; the manifest line declares the feature count and the
number of label columns that follow them.

Ad-click files follow the Criteo layout: a click label, then numeric
columns, then categorical columns, tab separated, no header, blanks for
missing values.
"""

from __future__ import annotations

import csv
import hashlib
import io
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..codec import ContextVector, round_units

_MANIFEST = re.compile(r"#\s*d\s*=\s*(\d+)\s+actions\s*=\s*(\d+)")


@dataclass(frozen=True, eq=False)
class MultiLabelDataset:
    features: np.ndarray
    labels: tuple[frozenset[int], ...]
    actions: int

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        if f.ndim != 2 or f.shape[0] != len(self.labels):
            raise ValueError("features must be (n, d) with one label set per row")
        if not np.all(np.isfinite(f)):
            raise ValueError("feature values must be finite")
        for s in self.labels:
            if any(not 0 <= a < self.actions for a in s):
                raise ValueError(f"label set {sorted(s)} has labels outside [0, {self.actions})")
        object.__setattr__(self, "features", f)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.labels)

    def contexts(self, q: int) -> list[ContextVector]:
        """Min-max scale each column, then normalize rows onto the grid.

        Rows that are all zero after scaling become the uniform vector.
        """
        f = self.features
        lo, hi = f.min(axis=0), f.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        scaled = (f - lo) / span
        scaled[scaled.sum(axis=1) <= 0] = 1.0
        return [ContextVector(tuple(int(u) for u in row), q) for row in round_units(scaled, q)]


def multilabel_reward(labels: frozenset[int], proposed: int) -> int:
    return int(proposed in labels)


def _sniff_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def load_multilabel(path, d: int | None = None) -> MultiLabelDataset:
    """Read a multi-label file; ``d`` keeps only the first ``d`` feature columns."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    m = _MANIFEST.match(lines[0].strip())
    if not m:
        raise ValueError(f"{path}: first line must be a manifest like '# d=20 actions=40'")
    file_d, actions = int(m.group(1)), int(m.group(2))
    delim = _sniff_delimiter(lines[1] if len(lines) > 1 else "")
    reader = csv.reader(io.StringIO("\n".join(lines[1:])), delimiter=delim)
    header = next(reader, None)
    if header is None or len(header) != file_d + actions:
        raise ValueError(f"{path}: header must have d+actions={file_d + actions} columns")
    feats, labels = [], []
    for lineno, row in enumerate(reader, start=3):
        if not row:
            continue
        if len(row) != file_d + actions:
            raise ValueError(f"{path}:{lineno}: expected {file_d + actions} columns, got {len(row)}")
        feats.append([float(v) for v in row[:file_d]])
        labels.append(frozenset(i for i, v in enumerate(row[file_d:]) if float(v) != 0.0))
    use_d = file_d if d is None else d
    if not 1 <= use_d <= file_d:
        raise ValueError(f"requested d={use_d} but the file has {file_d} feature columns")
    features = np.asarray(feats, dtype=float).reshape(-1, file_d)[:, :use_d]
    return MultiLabelDataset(features, tuple(labels), actions)


def stable_hash(fields: Sequence[str], buckets: int) -> int:
    """64-bit BLAKE2b hash of the joined field bytes, reduced modulo ``buckets``."""
    digest = hashlib.blake2b("\x1f".join(fields).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % buckets


def hash_categoricals(records: Sequence[Sequence[str]], top_n: int,
                      buckets: int = 2**24) -> tuple[list[int], list[bool]]:
    """Collapse each record's categorical fields to one code and rank codes by frequency.

    The ``top_n`` most frequent codes get labels 1..top_n (1 is the most
    frequent, ties broken by smaller code).  Other records get label 0 and
    are marked as not kept.
    """
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    codes = [stable_hash(r, buckets) for r in records]
    ranked = sorted(Counter(codes).items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    label_of = {code: i + 1 for i, (code, _) in enumerate(ranked)}
    labels = [label_of.get(c, 0) for c in codes]
    return labels, [lab > 0 for lab in labels]


def _to_float(v: str) -> float:
    return float(v) if v.strip() else 0.0


def load_addata(path, numeric: int = 13, categorical: int = 26, context_columns: int = 10,
                top_n: int = 40, buckets: int = 2**24) -> MultiLabelDataset:
    """Read a Criteo-shaped file into single-label bandit data.

    The first ``context_columns`` numeric columns form the context, after
    ``log1p`` of their non-negative part to tame heavy tails.  Categorical
    columns are hashed to a product label; only the ``top_n`` most frequent
    products are kept, and action ``i`` stands for label ``i + 1``.
    """
    if not 1 <= context_columns <= numeric:
        raise ValueError(f"context_columns must lie in [1, {numeric}], got {context_columns}")
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
            if not row:
                continue
            if len(row) != 1 + numeric + categorical:
                raise ValueError(
                    f"{path}:{lineno}: expected {1 + numeric + categorical} columns, got {len(row)}")
            rows.append(row)
    cats = [r[1 + numeric:] for r in rows]
    labels, kept = hash_categoricals(cats, top_n, buckets)
    feats, label_sets = [], []
    for row, lab, keep in zip(rows, labels, kept):
        if not keep:
            continue
        nums = [_to_float(v) for v in row[1:1 + context_columns]]
        feats.append(np.log1p(np.maximum(nums, 0.0)))
        label_sets.append(frozenset({lab - 1}))
    features = np.asarray(feats, dtype=float).reshape(-1, context_columns)
    return MultiLabelDataset(features, tuple(label_sets), top_n)
