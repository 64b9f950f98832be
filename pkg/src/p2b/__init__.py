"""Private contextual bandits with crowd-blended context codes."""

from .bandit import LinUCB, OneHotLinUCB, RewardObservation, merge_statistics, new_agent
from .codec import ContextVector, EncoderModel, cardinality, normalize_and_round, train_encoder
from .privacy import PrivacyBudget, delta_of, epsilon_of

__all__ = [
    "ContextVector", "EncoderModel", "LinUCB", "OneHotLinUCB", "PrivacyBudget",
    "RewardObservation", "cardinality", "delta_of", "epsilon_of", "merge_statistics",
    "new_agent", "normalize_and_round", "train_encoder",
]
