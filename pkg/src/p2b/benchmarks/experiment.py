"""Cold / warm-non-private / warm-private simulations.

A run walks a population of training users in order.  Every user starts an
agent (warm-started from the current global model when one exists), plays
``samples`` interactions, then offers one randomly chosen interaction to the
collection pipeline.  The shuffler releases a batch after ``batch`` reports or
after every ``batch`` users, whichever comes first.  At each checkpoint a separate evaluation cohort is
started from the global model as it stands and scored, without reporting.

Random streams are keyed by (seed, role, user) so every setting sees the same
users and contexts, and the three curves differ only through what the global
model has learned.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ..bandit import LinUCB, OneHotLinUCB
from ..codec import ContextVector, EncoderModel, train_encoder
from ..config import ExperimentConfig, default_checkpoints
from ..pipeline import (GlobalModel, ReportPayload, Shuffler, ingest_raw, maybe_report,
                        server_ingest, warm_start)
from .datasets import MultiLabelDataset, load_addata, load_multilabel, multilabel_reward
from .synthetic import SyntheticEnv, synth_reward

TRAIN, EVAL, SHUFFLE, SPLIT = 0, 1, 2, 3
TRAIN_FRACTION = 0.7


@dataclass
class MetricCurve:
    setting: str
    seed: int
    metric: str
    x: list[int]
    values: list[float]
    versions: list[int] = field(default_factory=list)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


class SyntheticEnvironment:
    metric = "average_reward"

    def __init__(self, env: SyntheticEnv, q: int):
        self.env = env
        self.q = q
        self.d = env.d
        self.actions = env.actions

    def population(self, users: int, seed: int) -> tuple[list[int], None]:
        return list(range(users)), None

    def eval_keys(self, seed: int, checkpoint_index: int, eval_agents: int, test_ids):
        return [(EVAL, checkpoint_index, j) for j in range(eval_agents)]

    def user_items(self, rng: np.random.Generator, n: int) -> list[ContextVector]:
        return [self.env.draw_context(rng, self.q) for _ in range(n)]

    def context(self, item: ContextVector) -> ContextVector:
        return item

    def reward(self, item: ContextVector, action: int, rng: np.random.Generator) -> int:
        return synth_reward(self.env, item, action, rng)


class DatasetEnvironment:
    """Agents each hold up to ``samples`` instances drawn without replacement."""

    def __init__(self, data: MultiLabelDataset, q: int, metric: str):
        self.data = data
        self.metric = metric
        self.d = data.d
        self.actions = data.actions
        self._contexts = data.contexts(q)

    def population(self, users: int, seed: int) -> tuple[list[int], list[int]]:
        perm = _rng(seed, SPLIT).permutation(users)
        n_train = int(round(TRAIN_FRACTION * users))
        return [int(i) for i in perm[:n_train]], [int(i) for i in perm[n_train:]]

    def eval_keys(self, seed: int, checkpoint_index: int, eval_agents: int, test_ids):
        return [(TRAIN, i) for i in test_ids]

    def user_items(self, rng: np.random.Generator, n: int) -> list[int]:
        size = min(n, len(self.data))
        return [int(i) for i in rng.choice(len(self.data), size=size, replace=False)]

    def context(self, item: int) -> ContextVector:
        return self._contexts[item]

    def reward(self, item: int, action: int, rng: np.random.Generator) -> int:
        return multilabel_reward(self.data.labels[item], action)


def build_environment(cfg: ExperimentConfig):
    if cfg.env == "synthetic":
        env = SyntheticEnv.create(cfg.d, cfg.actions, beta=cfg.beta, sigma2=cfg.sigma2,
                                  seed=cfg.seed, weight_scale=cfg.weight_scale)
        return SyntheticEnvironment(env, cfg.q)
    if cfg.env == "multilabel":
        data = load_multilabel(cfg.data, d=cfg.d)
        if data.actions != cfg.actions:
            raise ValueError(f"data declares {data.actions} actions but actions={cfg.actions}")
        return DatasetEnvironment(data, cfg.q, "accuracy")
    data = load_addata(cfg.data, numeric=cfg.numeric_columns, categorical=cfg.categorical_columns,
                       context_columns=cfg.d, top_n=cfg.actions, buckets=cfg.hash_buckets)
    return DatasetEnvironment(data, cfg.q, "ctr")


def build_encoder(cfg: ExperimentConfig) -> EncoderModel:
    if cfg.encoder:
        enc = EncoderModel.load(cfg.encoder)
        if (enc.d, enc.q, enc.k) != (cfg.d, cfg.q, cfg.k):
            raise ValueError(f"encoder has (d, q, k)=({enc.d}, {enc.q}, {enc.k}), "
                             f"config has ({cfg.d}, {cfg.q}, {cfg.k})")
        return enc
    return train_encoder(cfg.d, cfg.q, cfg.k, samples=cfg.encoder_samples, seed=cfg.seed)


class _Codebook:
    """Memoized encoder lookups; contexts repeat heavily on a coarse grid."""

    def __init__(self, encoder: EncoderModel):
        self.encoder = encoder
        self._cache: dict[tuple[int, ...], int] = {}

    def __call__(self, x: ContextVector) -> int:
        code = self._cache.get(x.units)
        if code is None:
            code = self._cache[x.units] = self.encoder.encode(x)
        return code


def centroid_warm_start(model: GlobalModel, encoder: EncoderModel) -> LinUCB:
    """Project a code-space model onto raw contexts by standing each code in for its centroid."""
    state: OneHotLinUCB = model.state
    agent = LinUCB(encoder.d, state.actions, state.alpha)
    C = encoder.centroids
    for a in range(state.actions):
        agent.A[a] = np.eye(encoder.d) + (C.T * state.counts[a]) @ C
        agent.b[a] = state.b[a] @ C
    agent._A_inv = np.linalg.inv(agent.A)
    agent._theta = np.einsum("aij,aj->ai", agent._A_inv, agent.b)
    return agent


class _Simulation:
    def __init__(self, setting: str, environment, encoder: EncoderModel | None,
                 cfg: ExperimentConfig, seed: int, log=None):
        self.setting = setting
        self.environment = environment
        self.cfg = cfg
        self.seed = seed
        self.encoder = encoder
        self.codebook = _Codebook(encoder) if encoder is not None else None
        self.model: GlobalModel | None = None
        self.shuffler: Shuffler | None = None
        if setting == "warm-private":
            self.model = GlobalModel.for_codes(encoder.k, environment.actions, cfg.alpha)
            self.shuffler = Shuffler(_rng(seed, SHUFFLE), cfg.cb_context_threshold, cfg.batch,
                                     lambda b: server_ingest(self.model, b), log=log)
        elif setting == "warm-nonprivate":
            # raw contexts are effectively unique, so no crowd threshold applies
            self.model = GlobalModel.for_contexts(environment.d, environment.actions, cfg.alpha)
            self.shuffler = Shuffler(_rng(seed, SHUFFLE), 1, cfg.batch,
                                     lambda b: ingest_raw(self.model, b))

    def new_agent(self):
        """Return ``(agent, uses_codes)``; a cold agent while no global model exists."""
        if self.model is None or self.model.version == 0:
            return LinUCB(self.environment.d, self.environment.actions, self.cfg.alpha), False
        if self.setting == "warm-private":
            if self.cfg.private_context == "centroid":
                return centroid_warm_start(self.model, self.encoder), False
            return warm_start(self.model), True
        return warm_start(self.model), False

    def play(self, items, rng):
        agent, uses_codes = self.new_agent()
        env = self.environment
        history = []
        for item in items:
            x = env.context(item)
            ctx = self.codebook(x) if uses_codes else x.values
            a, _ = agent.select(ctx)
            r = env.reward(item, a, rng)
            agent.update(ctx, a, r)
            history.append((x, a, r))
        return history

    def train_user(self, user: int) -> None:
        items = self.environment.user_items(_rng(self.seed, TRAIN, user), self.cfg.samples)
        env_rng = _rng(self.seed, TRAIN, user, 1)
        history = self.play(items, env_rng)
        if self.shuffler is None or not history:
            return
        report_rng = _rng(self.seed, TRAIN, user, 2)
        x, a, r = history[int(report_rng.integers(len(history)))]
        if not maybe_report(report_rng, self.cfg.cb_sampling_rate, self.cfg.neg_rew_sam_rate, r):
            return
        code = self.codebook(x) if self.setting == "warm-private" else x.values
        self.shuffler.submit(ReportPayload(code, a, r, agent_tag=user))

    def evaluate(self, keys) -> float:
        total, count = 0, 0
        for key in keys:
            items = self.environment.user_items(_rng(self.seed, *key), self.cfg.samples)
            history = self.play(items, _rng(self.seed, *key, 1))
            total += sum(r for _, _, r in history)
            count += len(history)
        return total / count if count else 0.0


def run_setting(setting: str, environment, encoder: EncoderModel | None, cfg: ExperimentConfig,
                seed: int, log=None) -> MetricCurve:
    sim = _Simulation(setting, environment, encoder, cfg, seed, log=log)
    train_ids, test_ids = environment.population(cfg.users, seed)
    checkpoints = cfg.checkpoints or default_checkpoints(len(train_ids))
    if checkpoints[-1] > len(train_ids):
        raise ValueError(f"checkpoint {checkpoints[-1]} exceeds the {len(train_ids)} training users")
    curve = MetricCurve(setting, seed, environment.metric, [], [])
    done = 0
    for index, cp in enumerate(checkpoints):
        if setting != "cold":
            for position in range(done, cp):
                sim.train_user(train_ids[position])
                # a round is `batch` users; the shuffler releases whatever it holds at round end
                if (position + 1) % cfg.batch == 0:
                    sim.shuffler.flush()
        done = cp
        keys = environment.eval_keys(seed, index, cfg.eval_agents, test_ids)
        curve.x.append(cp)
        curve.values.append(sim.evaluate(keys))
        curve.versions.append(sim.model.version if sim.model is not None else 0)
    return curve


def run_experiment(cfg: ExperimentConfig, batch_log=None) -> list[MetricCurve]:
    """Run every configured setting for ``cfg.runs`` consecutive seeds."""
    cfg.validate()
    environment = build_environment(cfg)
    encoder = build_encoder(cfg) if "warm-private" in cfg.settings else None
    curves = []
    for run in range(cfg.runs):
        seed = cfg.seed + run
        if cfg.env == "synthetic" and run > 0:
            # each seed draws its own preference weights
            environment = build_environment(cfg.replace(seed=seed))
        for setting in cfg.settings:
            log = batch_log if setting == "warm-private" else None
            curves.append(run_setting(setting, environment, encoder, cfg, seed, log=log))
    return curves


def curves_to_csv(curves: list[MetricCurve]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["setting", "seed", "x", "metric", "value"])
    for c in curves:
        for x, v in zip(c.x, c.values):
            writer.writerow([c.setting, c.seed, x, c.metric, repr(float(v))])
    return buf.getvalue()


def mean_at(curves: list[MetricCurve], setting: str, x: int) -> float:
    vals = [c.values[c.x.index(x)] for c in curves if c.setting == setting and x in c.x]
    if not vals:
        raise KeyError(f"no {setting} value at x={x}")
    return float(np.mean(vals))
