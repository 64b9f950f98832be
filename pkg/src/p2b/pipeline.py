"""Randomized reporting, the trusted shuffler and server-side aggregation.

Data path: a local agent decides whether to report (:func:`maybe_report`),
builds a :class:`ReportPayload`, and hands it to a :class:`Shuffler`.  The
shuffler strips metadata, permutes the batch and drops rare codes, then the
server folds the surviving tuples into a :class:`GlobalModel` from which new
agents are warm-started.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, NamedTuple, Sequence, TextIO

import numpy as np

from .bandit import LinUCB, OneHotLinUCB, RewardObservation, merge_statistics


@dataclass(frozen=True)
class ReportPayload:
    """What an agent sends: the encoded tuple plus transport metadata."""

    code: Any
    action: int
    reward: int
    agent_tag: Any = None


class AnonymousReport(NamedTuple):
    # No slot exists for sender metadata.
    code: Any
    action: int
    reward: int


@dataclass
class RefinedBatch:
    tuples: list[AnonymousReport]
    threshold_used: int
    dropped_count: int


@dataclass
class GlobalModel:
    state: LinUCB | OneHotLinUCB
    version: int = 0

    @classmethod
    def for_codes(cls, k: int, actions: int, alpha: float = 1.0) -> "GlobalModel":
        return cls(OneHotLinUCB(k, actions, alpha))

    @classmethod
    def for_contexts(cls, d: int, actions: int, alpha: float = 1.0) -> "GlobalModel":
        return cls(LinUCB(d, actions, alpha))


def maybe_report(rng: np.random.Generator, p_positive: float, p_negative: float,
                 reward: int) -> bool:
    """Bernoulli participation draw; the rate depends on the reward."""
    p = p_positive if reward == 1 else p_negative
    return bool(rng.random() < p)


def anonymize(batch: Sequence[ReportPayload]) -> list[AnonymousReport]:
    return [AnonymousReport(r.code, r.action, r.reward) for r in batch]


def shuffle(rng: np.random.Generator, tuples: Sequence) -> list:
    """Uniformly random permutation of ``tuples``."""
    order = rng.permutation(len(tuples))
    return [tuples[i] for i in order]


def _code_key(code) -> Hashable:
    if isinstance(code, np.ndarray):
        return code.tobytes()
    return code


def apply_threshold(tuples: Sequence[AnonymousReport], threshold: int) -> RefinedBatch:
    """Keep only tuples whose code occurs at least ``threshold`` times in the batch."""
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    counts = Counter(_code_key(t.code) for t in tuples)
    kept = [t for t in tuples if counts[_code_key(t.code)] >= threshold]
    return RefinedBatch(kept, threshold, len(tuples) - len(kept))


def one_hot(code: int, k: int) -> np.ndarray:
    v = np.zeros(k)
    v[code] = 1.0
    return v


def server_ingest(model: GlobalModel, batch: RefinedBatch) -> GlobalModel:
    """Fold a refined batch of encoded tuples into the global model.

    Codes become one-hot contexts of dimension ``k``.  An out-of-range code
    rejects the whole batch, since it means encoder and model disagree on k.
    """
    k = model.state.dim
    for t in batch.tuples:
        if not (isinstance(t.code, (int, np.integer)) and 0 <= t.code < k):
            raise ValueError(f"code {t.code!r} outside [0, {k}): encoder and global model disagree")
    obs = [RewardObservation(one_hot(t.code, k), t.action, t.reward) for t in batch.tuples]
    merge_statistics(model.state, obs)
    model.version += 1
    return model


def ingest_raw(model: GlobalModel, batch: RefinedBatch) -> GlobalModel:
    """Non-private counterpart of :func:`server_ingest`: tuples carry raw context vectors."""
    obs = [RewardObservation(np.asarray(t.code, dtype=float), t.action, t.reward)
           for t in batch.tuples]
    merge_statistics(model.state, obs)
    model.version += 1
    return model


def warm_start(model: GlobalModel):
    """Independent copy of the global bandit state for a new local agent."""
    return model.state.copy()


def write_batch_log(stream: TextIO, index: int, batch: RefinedBatch) -> None:
    stream.write(f"# batch={index} threshold={batch.threshold_used} dropped={batch.dropped_count}\n")
    for t in batch.tuples:
        stream.write(f"{t.code},{t.action},{t.reward}\n")


@dataclass
class Shuffler:
    """Trusted in-process shuffler that batches, anonymizes, permutes and thresholds.

    ``sink`` receives each refined batch.  A batch is emitted once
    ``batch_size`` reports are buffered; :meth:`flush` emits whatever is
    pending and does nothing on an empty buffer.
    """

    rng: np.random.Generator
    threshold: int
    batch_size: int
    sink: Callable[[RefinedBatch], Any]
    log: TextIO | None = None
    _buffer: list[ReportPayload] = field(default_factory=list)
    batches_emitted: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.threshold < 1:
            raise ValueError(f"threshold must be >= 1, got {self.threshold}")

    @property
    def pending(self) -> int:
        return len(self._buffer)

    def submit(self, payload: ReportPayload) -> RefinedBatch | None:
        self._buffer.append(payload)
        if len(self._buffer) >= self.batch_size:
            return self.flush()
        return None

    def flush(self) -> RefinedBatch | None:
        if not self._buffer:
            return None
        pending, self._buffer = self._buffer, []
        refined = apply_threshold(shuffle(self.rng, anonymize(pending)), self.threshold)
        if self.log is not None:
            write_batch_log(self.log, self.batches_emitted, refined)
        self.batches_emitted += 1
        self.sink(refined)
        return refined
