"""Triplet training with in-batch recombination, Adam, and a supervised baseline."""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .encoder import (
    EncoderConfig,
    backward,
    check_params,
    forward,
    init_encoder,
    triplet_gradients,
)
from .errors import ConfigError, NumericError, ShapeError
from .losses import cross_entropy
from .sampler import TileTriplet

AUGMENTATIONS = ("off", "shuffle", "full")


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 50.0
    lam: float = 0.01
    epochs: int = 50
    batch_size: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    augmentation: str = "shuffle"
    seed: int = 0

    def __post_init__(self):
        if self.margin < 0 or self.lam < 0:
            raise ConfigError("margin and lambda must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.augmentation not in AUGMENTATIONS:
            raise ConfigError(f"augmentation must be one of {AUGMENTATIONS}")
        if self.augmentation != "off" and self.batch_size < 2:
            raise ConfigError("recombination needs batch_size >= 2")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ConfigError("learning_rate and epsilon must be > 0")


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


@dataclass
class TrainReport:
    mean_loss: list = field(default_factory=list)
    triplets_seen: list = field(default_factory=list)
    fixed_distants: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    params: dict | None = None

    def log_lines(self):
        """One tab-separated line per epoch: epoch, mean_loss, triplets_seen, seconds."""
        return [
            f"{e + 1}\t{loss:.10g}\t{seen}\t{sec:.3f}"
            for e, (loss, seen, sec) in enumerate(zip(self.mean_loss, self.triplets_seen, self.seconds))
        ]


# ---------------------------------------------------------------------------
# recombination


def random_derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation of ``range(n)`` with no fixed point (rejection sampling)."""
    if n < 2:
        raise ConfigError("a derangement needs at least 2 elements")
    while True:
        perm = rng.permutation(n)
        if not (perm == np.arange(n)).any():
            return perm


def recombination_indices(batch_size: int, mode: str, rng: np.random.Generator):
    """Index triples into the ``3 * batch_size`` flattened tiles of a batch.

    Tile ``3 * i + k`` is member ``k`` (anchor, neighbor, distant) of triplet ``i``.
    """
    b = batch_size
    base = np.arange(b) * 3
    if mode == "off":
        return base, base + 1, base + 2
    if b < 2:
        raise ConfigError(f"mode {mode!r} needs at least 2 triplets per batch, got {b}")
    if mode == "shuffle":
        perm = random_derangement(b, rng)
        return base, base + 1, base[perm] + 2
    if mode == "full":
        owner = np.repeat(np.arange(b), 3 * b)
        other = np.tile(np.arange(3 * b), b)
        keep = other // 3 != owner
        owner, other = owner[keep], other[keep]
        return owner * 3, owner * 3 + 1, other
    raise ConfigError(f"unknown recombination mode {mode!r}")


def recombine_batch(batch, mode: str, rng: np.random.Generator) -> list[TileTriplet]:
    """Re-pair each (anchor, neighbor) with tiles of the other triplets as distants."""
    batch = list(batch)
    ia, in_, id_ = recombination_indices(len(batch), mode, rng)
    flat = [t for trip in batch for t in (trip.anchor, trip.neighbor, trip.distant)]
    return [TileTriplet(flat[a], flat[n], flat[d]) for a, n, d in zip(ia, in_, id_)]


# ---------------------------------------------------------------------------
# optimizer


def adam_step(params, grads, state: AdamState, config: TrainConfig):
    """Bias-corrected Adam update; returns new ``(params, state)`` without mutating inputs."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name}")
    t = state.step + 1
    b1, b2 = config.beta1, config.beta2
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params[name] = p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(new_m, new_v, t)


# ---------------------------------------------------------------------------
# training loops


def _epoch_batches(n, batch_size, mode, rng):
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    # a lone trailing triplet cannot be recombined; fold it into the previous batch
    if mode != "off" and len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def fit_triplets(fetch, n_triplets, enc_config, train_config: TrainConfig, stats=None, params=None,
                 log=None, dtype=np.float64):
    """Generic triplet training loop.

    ``fetch(triplet_indices)`` returns encoder inputs of shape ``(B, 3, ...)``
    for the requested triplets. ``log`` receives one formatted line per epoch.
    """
    if params is None:
        params = init_encoder(enc_config) if isinstance(enc_config, EncoderConfig) else None
    if params is None:
        raise ConfigError("initial params are required for this encoder config")
    check_params(params, enc_config)
    params = {k: v.copy() for k, v in params.items()}
    report = TrainReport(params=params)
    if train_config.epochs == 0 or n_triplets == 0:
        return params, report
    mode = train_config.augmentation
    if mode != "off" and n_triplets < 2:
        raise ConfigError("recombination needs at least 2 triplets")

    state = AdamState.zeros_like(params)
    root = np.random.SeedSequence(train_config.seed)
    for epoch in range(train_config.epochs):
        start = time.perf_counter()
        rng = np.random.default_rng(root.spawn(1)[0])
        total, seen, fixed = 0.0, 0, 0
        for bi, idx in enumerate(_epoch_batches(n_triplets, train_config.batch_size, mode, rng)):
            inputs = np.asarray(fetch(idx))
            inputs = inputs.reshape(-1, *inputs.shape[2:])
            ia, in_, id_ = recombination_indices(len(idx), mode, rng)
            try:
                loss, grads, _ = triplet_gradients(
                    params, enc_config, inputs, ia, in_, id_, train_config.margin, train_config.lam, stats, dtype
                )
                count = len(ia)
                grads = {k: g / count for k, g in grads.items()}
                params, state = adam_step(params, grads, state, train_config)
            except NumericError as exc:
                raise NumericError(str(exc), epoch=epoch + 1, batch=bi + 1) from exc
            total += loss
            seen += count
            fixed += int((id_ == ia + 2).sum())
        report.mean_loss.append(total / seen)
        report.triplets_seen.append(seen)
        report.fixed_distants.append(fixed)
        report.seconds.append(time.perf_counter() - start)
        if log is not None:
            log(report.log_lines()[-1])
    report.params = params
    return params, report


def train(tset, enc_config: EncoderConfig, train_config: TrainConfig, stats=None, params=None,
          log=None, dtype=np.float64):
    """Train a tile encoder on a :class:`~tilembed.sampler.TripletSet`."""
    s = tset.spec.tile_size
    if (enc_config.tile_size, enc_config.bands) != (s, tset.grid.bands):
        raise ShapeError(
            f"encoder expects {enc_config.tile_size}px tiles with {enc_config.bands} bands, "
            f"triplets have {s}px tiles with {tset.grid.bands} bands"
        )

    def fetch(idx):
        flat = (np.asarray(idx)[:, None] * 3 + np.arange(3)).ravel()
        return tset.tiles(flat).reshape(len(idx), 3, s, s, tset.grid.bands)

    return fit_triplets(fetch, len(tset), enc_config, train_config, stats, params, log, dtype)


def stdout_log(line):
    print(line, file=sys.stdout, flush=True)


# ---------------------------------------------------------------------------
# supervised baseline


def init_head(embed_dim, num_classes, seed=0):
    rng = np.random.default_rng(seed)
    return {
        "cls.weight": rng.normal(0.0, np.sqrt(1.0 / embed_dim), size=(num_classes, embed_dim)),
        "cls.bias": np.zeros(num_classes),
    }


def supervised_loss_gradients(params, head, enc_config, inputs, labels, stats=None):
    """Mean cross-entropy of the encoder plus softmax head, with gradients for both."""
    z, cache = forward(params, enc_config, inputs, stats)
    logits = z @ head["cls.weight"].T + head["cls.bias"]
    loss, dlogits = cross_entropy(logits, labels)
    head_grads = {"cls.weight": dlogits.T @ z, "cls.bias": dlogits.sum(0)}
    grads = backward(params, enc_config, cache, dlogits @ head["cls.weight"])
    return loss, grads, head_grads


def train_supervised(tiles, labels, enc_config, train_config: TrainConfig, stats=None):
    """Encoder plus softmax head trained end to end under mean cross-entropy.

    ``tiles`` is a list of :class:`~tilembed.raster.Tile` or an array of inputs.
    Returns ``(params, head, report)``; the report's loss is the epoch-mean
    cross-entropy over examples.
    """
    inputs = np.stack([t.samples for t in tiles]) if not isinstance(tiles, np.ndarray) else tiles
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise ConfigError("supervised training needs at least 2 distinct classes")
    num_classes = int(labels.max()) + 1
    params = init_encoder(enc_config) if isinstance(enc_config, EncoderConfig) else None
    if params is None:
        raise ConfigError("train_supervised expects an EncoderConfig")
    head = init_head(enc_config.embed_dim, num_classes, enc_config.init_seed)
    combined_state = AdamState.zeros_like({**params, **head})
    opt = replace(train_config, augmentation="off")
    report = TrainReport()
    root = np.random.SeedSequence(train_config.seed)
    for epoch in range(train_config.epochs):
        start = time.perf_counter()
        rng = np.random.default_rng(root.spawn(1)[0])
        order = rng.permutation(len(labels))
        total = 0.0
        for i in range(0, len(order), train_config.batch_size):
            idx = order[i:i + train_config.batch_size]
            loss, grads, head_grads = supervised_loss_gradients(params, head, enc_config, inputs[idx], labels[idx], stats)
            merged, combined_state = adam_step({**params, **head}, {**grads, **head_grads}, combined_state, opt)
            params = {k: merged[k] for k in params}
            head = {k: merged[k] for k in head}
            total += loss * len(idx)
        report.mean_loss.append(total / len(labels))
        report.triplets_seen.append(len(labels))
        report.fixed_distants.append(0)
        report.seconds.append(time.perf_counter() - start)
    report.params = params
    return params, head, report


def predict_supervised(params, head, enc_config, inputs, stats=None):
    z, _ = forward(params, enc_config, inputs, stats)
    return np.argmax(z @ head["cls.weight"].T + head["cls.bias"], axis=1)
