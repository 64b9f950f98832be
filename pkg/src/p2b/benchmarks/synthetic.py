"""Synthetic preference environment.

The reward probability of action ``a`` for context ``x`` is driven by
``beta * softmax(W x + b)[a] + z`` with ``z ~ N(0, sigma2)``.  That quantity
is clamped to [0, 1] and used as a Bernoulli rate, so rewards stay binary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..codec import ContextVector, normalize_and_round


def softmax(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("softmax input must be finite")
    e = np.exp(v - v.max())
    return e / e.sum()


@dataclass(frozen=True, eq=False)
class SyntheticEnv:
    W: np.ndarray
    b: np.ndarray
    beta: float = 0.1
    sigma2: float = 0.01
    seed: int | None = None

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        b = np.array(self.b, dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError(f"W must be (|A|, d) and b (|A|,), got {W.shape} and {b.shape}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @classmethod
    def create(cls, d: int, actions: int, beta: float = 0.1, sigma2: float = 0.01,
               seed: int = 0, weight_scale: float = 1.0) -> "SyntheticEnv":
        """Glorot-uniform weights and zero bias, fixed for the lifetime of the env.

        ``weight_scale`` multiplies the Glorot limit; 1.0 is the standard initializer.
        """
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
        limit = weight_scale * np.sqrt(6.0 / (d + actions))
        W = rng.uniform(-limit, limit, size=(actions, d))
        return cls(W=W, b=np.zeros(actions), beta=beta, sigma2=sigma2, seed=seed)

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def actions(self) -> int:
        return self.W.shape[0]

    def preference(self, x) -> np.ndarray:
        values = x.values if isinstance(x, ContextVector) else np.asarray(x, dtype=float)
        return softmax(self.W @ values + self.b)

    def mean_reward(self, x, a: int, rng: np.random.Generator) -> float:
        """One noisy draw of the mean reward, before clamping."""
        z = rng.normal(0.0, np.sqrt(self.sigma2))
        return self.beta * self.preference(x)[a] + z

    def draw_context(self, rng: np.random.Generator, q: int) -> ContextVector:
        return normalize_and_round(rng.random(self.d), q)


def synth_reward(env: SyntheticEnv, x, a: int, rng: np.random.Generator) -> int:
    """Binary reward: Bernoulli(clamp(beta * F_a(x) + z, 0, 1))."""
    if not 0 <= a < env.actions:
        raise ValueError(f"action {a} out of range [0, {env.actions})")
    rate = min(max(env.mean_reward(x, a, rng), 0.0), 1.0)
    return int(rng.random() < rate)
