"""Disjoint-arm LinUCB.

Each action keeps a ridge-regression design matrix ``A_a`` (identity prior)
and response vector ``b_a``.  The score of action ``a`` for context ``x`` is
``theta_a . x + alpha * sqrt(x' A_a^-1 x)`` with ``theta_a = A_a^-1 b_a``.

:class:`LinUCB` handles dense contexts and keeps ``A_a^-1`` current with
Sherman-Morrison updates.  :class:`OneHotLinUCB` is the same model
restricted to one-hot contexts over ``k`` codes, where every ``A_a`` stays
diagonal and can be stored as a count vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

STATE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RewardObservation:
    context: np.ndarray | int
    action: int
    reward: int


def _check_shape(dim: int, actions: int, alpha: float) -> None:
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if actions < 1:
        raise ValueError(f"actions must be >= 1, got {actions}")
    if not alpha >= 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")


def _argmax_lowest(scores: np.ndarray) -> int:
    # np.argmax already returns the first maximal index
    return int(np.argmax(scores))


class LinUCB:
    """LinUCB over dense ``dim``-dimensional contexts."""

    def __init__(self, dim: int, actions: int, alpha: float = 1.0):
        _check_shape(dim, actions, alpha)
        self.dim = dim
        self.actions = actions
        self.alpha = float(alpha)
        self.A = np.repeat(np.eye(dim)[None], actions, axis=0)
        self.b = np.zeros((actions, dim))
        self._A_inv = self.A.copy()
        self._theta = np.zeros((actions, dim))

    def _context(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"context has shape {x.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(x)):
            raise ValueError("context entries must be finite")
        return x

    def _action(self, a: int) -> int:
        if not 0 <= a < self.actions:
            raise ValueError(f"action {a} out of range [0, {self.actions})")
        return int(a)

    def scores(self, x) -> np.ndarray:
        x = self._context(x)
        width = np.einsum("i,aij,j->a", x, self._A_inv, x)
        return self._theta @ x + self.alpha * np.sqrt(np.maximum(width, 0.0))

    def select(self, x) -> tuple[int, np.ndarray]:
        s = self.scores(x)
        return _argmax_lowest(s), s

    def update(self, x, action: int, reward: float) -> None:
        x = self._context(x)
        a = self._action(action)
        self.A[a] += np.outer(x, x)
        self.b[a] += reward * x
        Ainv_x = self._A_inv[a] @ x
        self._A_inv[a] -= np.outer(Ainv_x, Ainv_x) / (1.0 + x @ Ainv_x)
        self._theta[a] = self._A_inv[a] @ self.b[a]

    def direct_scores(self, x) -> np.ndarray:
        """Scores from fresh Cholesky solves, bypassing the cached inverses."""
        x = self._context(x)
        out = np.empty(self.actions)
        for a in range(self.actions):
            factor = cho_factor(self.A[a], lower=True)
            theta = cho_solve(factor, self.b[a])
            out[a] = theta @ x + self.alpha * np.sqrt(x @ cho_solve(factor, x))
        return out

    def copy(self) -> "LinUCB":
        new = LinUCB.__new__(LinUCB)
        new.dim, new.actions, new.alpha = self.dim, self.actions, self.alpha
        new.A = self.A.copy()
        new.b = self.b.copy()
        new._A_inv = self._A_inv.copy()
        new._theta = self._theta.copy()
        return new

    def design_matrix(self, action: int) -> np.ndarray:
        return self.A[self._action(action)].copy()

    def to_dict(self) -> dict:
        return {
            "version": STATE_FORMAT_VERSION,
            "kind": "dense",
            "dim": self.dim,
            "actions": self.actions,
            "alpha": self.alpha,
            "A": self.A.tolist(),
            "b": self.b.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LinUCB":
        state = cls(int(doc["dim"]), int(doc["actions"]), float(doc["alpha"]))
        state.A = np.asarray(doc["A"], dtype=float).reshape(state.A.shape)
        state.b = np.asarray(doc["b"], dtype=float).reshape(state.b.shape)
        state._A_inv = np.linalg.inv(state.A)
        state._theta = np.einsum("aij,aj->ai", state._A_inv, state.b)
        return state


class OneHotLinUCB:
    """LinUCB whose contexts are one-hot indicators over ``dim`` codes.

    ``A_a = I + diag(counts[a])`` and ``b_a`` holds summed rewards per code,
    so scores reduce to ``b/(1+n) + alpha/sqrt(1+n)`` at the observed code.
    Contexts may be passed as an integer code or as a one-hot vector.
    """

    def __init__(self, dim: int, actions: int, alpha: float = 1.0):
        _check_shape(dim, actions, alpha)
        self.dim = dim
        self.actions = actions
        self.alpha = float(alpha)
        self.counts = np.zeros((actions, dim))
        self.b = np.zeros((actions, dim))

    def _code(self, x) -> int:
        if isinstance(x, (int, np.integer)):
            code = int(x)
        else:
            v = np.asarray(x, dtype=float)
            if v.shape != (self.dim,):
                raise ValueError(f"context has shape {v.shape}, expected ({self.dim},)")
            nz = np.flatnonzero(v)
            if len(nz) != 1 or v[nz[0]] != 1.0:
                raise ValueError("OneHotLinUCB only accepts one-hot contexts")
            code = int(nz[0])
        if not 0 <= code < self.dim:
            raise ValueError(f"code {code} out of range [0, {self.dim})")
        return code

    def scores(self, x) -> np.ndarray:
        c = self._code(x)
        denom = 1.0 + self.counts[:, c]
        return self.b[:, c] / denom + self.alpha / np.sqrt(denom)

    def select(self, x) -> tuple[int, np.ndarray]:
        s = self.scores(x)
        return _argmax_lowest(s), s

    def update(self, x, action: int, reward: float) -> None:
        c = self._code(x)
        if not 0 <= action < self.actions:
            raise ValueError(f"action {action} out of range [0, {self.actions})")
        self.counts[action, c] += 1.0
        self.b[action, c] += reward

    def copy(self) -> "OneHotLinUCB":
        new = OneHotLinUCB.__new__(OneHotLinUCB)
        new.dim, new.actions, new.alpha = self.dim, self.actions, self.alpha
        new.counts = self.counts.copy()
        new.b = self.b.copy()
        return new

    def design_matrix(self, action: int) -> np.ndarray:
        return np.eye(self.dim) + np.diag(self.counts[action])

    def to_dense(self) -> LinUCB:
        dense = LinUCB(self.dim, self.actions, self.alpha)
        for a in range(self.actions):
            dense.A[a] = self.design_matrix(a)
            dense._A_inv[a] = np.diag(1.0 / (1.0 + self.counts[a]))
        dense.b = self.b.copy()
        dense._theta = self.b / (1.0 + self.counts)
        return dense

    def to_dict(self) -> dict:
        return {
            "version": STATE_FORMAT_VERSION,
            "kind": "onehot",
            "dim": self.dim,
            "actions": self.actions,
            "alpha": self.alpha,
            "counts": self.counts.tolist(),
            "b": self.b.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OneHotLinUCB":
        state = cls(int(doc["dim"]), int(doc["actions"]), float(doc["alpha"]))
        state.counts = np.asarray(doc["counts"], dtype=float).reshape(state.counts.shape)
        state.b = np.asarray(doc["b"], dtype=float).reshape(state.b.shape)
        return state


def new_agent(dim: int, actions: int, alpha: float = 1.0) -> LinUCB:
    return LinUCB(dim, actions, alpha)


def select_action(state, context) -> tuple[int, np.ndarray]:
    """Return the highest-scoring action (lowest index on ties) and all scores."""
    return state.select(context)


def update(state, obs: RewardObservation):
    state.update(obs.context, obs.action, obs.reward)
    return state


def merge_statistics(dst, batch: Iterable[RewardObservation]):
    """Fold a batch of observations into ``dst``.

    The result does not depend on batch order since every update adds
    commuting rank-one terms.  All observations are validated before any is
    applied, so a bad batch leaves ``dst`` untouched.
    """
    batch = list(batch)
    probe = dst.copy()
    for obs in batch:
        probe.update(obs.context, obs.action, obs.reward)
    for obs in batch:
        dst.update(obs.context, obs.action, obs.reward)
    return dst


def save_state(state, path) -> None:
    Path(path).write_text(json.dumps(state.to_dict()) + "\n")


def load_state(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != STATE_FORMAT_VERSION:
        raise ValueError(f"unsupported state version {doc.get('version')!r}")
    kinds = {"dense": LinUCB, "onehot": OneHotLinUCB}
    if doc.get("kind") not in kinds:
        raise ValueError(f"unknown state kind {doc.get('kind')!r}")
    return kinds[doc["kind"]].from_dict(doc)
