"""Training loop: Adam, dev-loss early stopping, top-N checkpoint averaging."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, TrainingError
from ..metrics import TrialScores
from ..model import BONAFIDE, ModelConfig, SsdModel
from ..tensor import no_grad
from .corpus import Corpus, pad_or_trim
from .features import extract_features

log = logging.getLogger(__name__)


RATIONAL_PARAMS = (".numerator", ".denominator")


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    rational_lr_scale: float = 1.0
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 7
    top_n: int = 5
    averaging: str = "params"
    target_samples: int = 64000
    feature_seed: int = 0
    seed: int = 0

    def validate(self):
        self.model.validate()
        if self.lr <= 0:
            raise ContractError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ContractError("Adam betas must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ContractError("weight_decay must be non-negative")
        if self.rational_lr_scale <= 0:
            raise ContractError("rational_lr_scale must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ContractError("batch_size and max_epochs must be positive")
        if self.patience < 1:
            raise ContractError("patience must be at least 1")
        if self.top_n < 1:
            raise ContractError("top_n must be at least 1")
        if self.averaging not in ("params", "scores"):
            raise ContractError(f"averaging must be 'params' or 'scores', got {self.averaging!r}")
        if self.target_samples < 1:
            raise ContractError("target_samples must be positive")
        return self

    @property
    def feature_dim(self):
        return self.model.projector.in_dim


class Adam:
    """Adam with L2 weight decay added to the gradient.

    ``lr_scales`` optionally gives one learning-rate multiplier per parameter.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0, lr_scales=None):
        self.params = list(params)
        self.lr, self.eps, self.weight_decay = lr, eps, weight_decay
        self.lr_scales = [1.0] * len(self.params) if lr_scales is None else list(lr_scales)
        if len(self.lr_scales) != len(self.params):
            raise ContractError("need one lr scale per parameter")
        self.beta1, self.beta2 = betas
        self.steps = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.steps += 1
        c1 = 1.0 - self.beta1**self.steps
        c2 = 1.0 - self.beta2**self.steps
        for p, m, v, scale in zip(self.params, self.m, self.v, self.lr_scales):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data if self.weight_decay else p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= scale * self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class EarlyStopping:
    """Signals a stop after ``patience`` consecutive epochs without strict improvement."""

    def __init__(self, patience):
        self.patience = patience
        self.best = np.inf
        self.stale = 0

    def update(self, loss):
        if loss < self.best:
            self.best = loss
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


class TopN:
    """Keeps the N lowest-loss snapshots; ties go to the earlier epoch."""

    def __init__(self, n):
        self.n = n
        self.entries = []

    def offer(self, loss, epoch, state):
        self.entries.append((loss, epoch, state))
        self.entries.sort(key=lambda e: (e[0], e[1]))
        del self.entries[self.n :]

    @property
    def states(self):
        return [state for _, _, state in self.entries]


def average_states(states):
    """Elementwise arithmetic mean of parameter dicts, summed in the given order."""
    if not states:
        raise ContractError("nothing to average")
    out = {}
    for name in states[0]:
        total = np.zeros_like(states[0][name])
        for state in states:
            total = total + state[name]
        out[name] = total / len(states)
    return out


def label_vector(labels):
    return np.array([BONAFIDE if label == "bonafide" else 1 - BONAFIDE for label in labels], dtype=np.int64)


def featurize(waveforms, width, target_samples=None, seed=0):
    """Feature arrays, padded/trimmed first when ``target_samples`` is given."""
    out = []
    for wave in waveforms:
        if target_samples is not None:
            wave = pad_or_trim(wave, target_samples)
        out.append(extract_features(wave, width, seed))
    return out


@dataclass
class TrainResult:
    model: SsdModel
    config: TrainConfig
    history: list
    members: list
    best_epoch: int
    best_dev_loss: float

    @property
    def epochs_run(self):
        return len(self.history)


def _batch_loss(model, X, y, batch_size):
    total = 0.0
    with no_grad():
        for start in range(0, len(y), batch_size):
            xb, yb = X[start : start + batch_size], y[start : start + batch_size]
            total += model.loss(xb, yb).item() * len(yb)
    return total / len(y)


def train_arrays(config: TrainConfig, X_train, y_train, X_dev, y_dev, epoch_callback=None):
    """Train on stacked fixed-length features ``[N, T, D]`` with integer labels."""
    config.validate()
    X_train, X_dev = np.asarray(X_train, dtype=np.float64), np.asarray(X_dev, dtype=np.float64)
    y_train, y_dev = np.asarray(y_train, dtype=np.int64), np.asarray(y_dev, dtype=np.int64)
    if len(y_train) == 0 or len(y_dev) == 0:
        raise ContractError("train and dev splits must be non-empty")
    init_seed, shuffle_seed, dropout_seed = np.random.SeedSequence(config.seed).spawn(3)
    model = SsdModel(config.model, seed=int(init_seed.generate_state(1)[0]))
    shuffle_rng = np.random.default_rng(shuffle_seed)
    dropout_rng = np.random.default_rng(dropout_seed)
    named = list(model.named_parameters())
    # Adam moves every coefficient by ~lr per step whatever its magnitude;
    # the high-order rational coefficients are tiny, so they get a smaller rate
    scales = [config.rational_lr_scale if name.endswith(RATIONAL_PARAMS) else 1.0 for name, _ in named]
    optimizer = Adam([p for _, p in named], config.lr, (config.beta1, config.beta2), config.eps, config.weight_decay, scales)
    stopper = EarlyStopping(config.patience)
    keeper = TopN(config.top_n)
    history = [{"epoch": 0, "train_loss": None, "dev_loss": _batch_loss(model, X_dev, y_dev, config.batch_size)}]

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(y_train))
        running = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            model.zero_grad()
            loss = model.loss(X_train[idx], y_train[idx], rng=dropout_rng)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError("training loss became non-finite", epoch)
            loss.backward()
            optimizer.step()
            running += value * len(idx)
        dev_loss = _batch_loss(model, X_dev, y_dev, config.batch_size)
        if not np.isfinite(dev_loss):
            raise TrainingError("dev loss became non-finite", epoch)
        entry = {"epoch": epoch, "train_loss": running / len(order), "dev_loss": dev_loss}
        history.append(entry)
        log.info("epoch %d train_loss %.5f dev_loss %.5f", epoch, entry["train_loss"], dev_loss)
        keeper.offer(dev_loss, epoch, model.state_dict())
        if epoch_callback is not None:
            epoch_callback(entry)
        if stopper.update(dev_loss):
            log.info("early stop after epoch %d (no improvement for %d epochs)", epoch, config.patience)
            break

    best_loss, best_epoch, _ = keeper.entries[0]
    members = keeper.states
    if config.averaging == "params":
        model.load_state_dict(average_states(members))
        members = []
    else:
        model.load_state_dict(members[0])
    return TrainResult(model, config, history, members, best_epoch, best_loss)


def train(config: TrainConfig, corpus: Corpus, epoch_callback=None):
    """Featurize the corpus train/dev splits at the target length, then train."""
    config.validate()
    splits = {}
    for split in ("train", "dev"):
        trials = corpus.trials(split)
        feats = featurize([t.waveform for t in trials], config.feature_dim, config.target_samples, config.feature_seed)
        splits[split] = (np.stack(feats), label_vector([t.label for t in trials]))
    return train_arrays(config, *splits["train"], *splits["dev"], epoch_callback=epoch_callback)


def score_features(model, features, members=None):
    """Score each feature matrix on its own (batch of one), optionally averaging members."""
    states = members or []
    saved = model.state_dict() if states else None
    scores = np.zeros(len(features))
    with no_grad():
        if not states:
            for i, f in enumerate(features):
                scores[i] = model(f[None]).item()
        else:
            for state in states:
                model.load_state_dict(state)
                for i, f in enumerate(features):
                    scores[i] += model(f[None]).item()
            scores /= len(states)
            model.load_state_dict(saved)
    return scores


def score_trials(model, config: TrainConfig, trials, mode="fix", members=None):
    """TrialScores for ``trials``; ``mode='fix'`` pads/trims to the training length."""
    if mode not in ("fix", "var"):
        raise ContractError(f"mode must be 'fix' or 'var', got {mode!r}")
    target = config.target_samples if mode == "fix" else None
    feats = featurize([t.waveform for t in trials], config.feature_dim, target, config.feature_seed)
    scores = score_features(model, feats, members)
    return TrialScores([t.trial_id for t in trials], scores, [t.label for t in trials])
