"""Closed-form privacy accounting for pre-sampling followed by crowd-blending.

``delta_of`` depends on a constant ``omega_c`` that has no published value, so
every delta produced here is a *relative* delta: it is only meaningful as an
absolute bound once the caller supplies the right constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def _check_p(p: float) -> None:
    if not 0.0 <= p < 1.0:
        raise ValueError(f"sampling probability p must lie in [0, 1), got {p}")


def epsilon_of(p: float, epsilon_bar: float = 0.0) -> float:
    """epsilon = ln(p * (2-p)/(1-p) * e^epsilon_bar + (1-p))."""
    _check_p(p)
    if epsilon_bar < 0:
        raise ValueError(f"epsilon_bar must be >= 0, got {epsilon_bar}")
    return math.log(p * ((2.0 - p) / (1.0 - p)) * math.exp(epsilon_bar) + (1.0 - p))


def delta_of(l: int, p: float, omega_c: float = 1.0) -> float:
    """Relative delta = exp(-omega_c * l * (1-p)^2)."""
    if l < 1:
        raise ValueError(f"crowd size l must be >= 1, got {l}")
    _check_p(p)
    if not omega_c > 0:
        raise ValueError(f"omega_c must be > 0, got {omega_c}")
    return math.exp(-omega_c * l * (1.0 - p) ** 2)


def crowd_blending_l(u: int, k: int) -> int:
    """Crowd size guaranteed by an optimal encoder: floor(u / k)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if u < k:
        raise ValueError(
            f"u={u} users cannot fill k={k} codes; lower k or raise the shuffler threshold instead")
    return u // k


def compose(m: int, epsilon: float) -> float:
    """Basic composition over ``m`` reports per user."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    return m * epsilon


def delta_check(delta: float, u: int) -> bool:
    """True when delta <= 1/u, the usual sanity bound for a population of u."""
    if u < 1:
        raise ValueError(f"u must be >= 1, got {u}")
    return delta <= 1.0 / u


def worst_case_p(p_positive: float, p_negative: float) -> float:
    """Reports are sampled at different rates by reward; account with the larger."""
    return max(p_positive, p_negative)


@dataclass(frozen=True)
class PrivacyBudget:
    p: float
    epsilon_bar: float
    l: int
    omega_c: float
    epsilon: float
    delta: float

    @classmethod
    def compute(cls, p: float, l: int, epsilon_bar: float = 0.0,
                omega_c: float = 1.0) -> "PrivacyBudget":
        return cls(p=p, epsilon_bar=epsilon_bar, l=l, omega_c=omega_c,
                   epsilon=epsilon_of(p, epsilon_bar), delta=delta_of(l, p, omega_c))
