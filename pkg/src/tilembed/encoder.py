"""Convolutional tile encoder and a one-hidden-layer point encoder, with exact backprop.

Parameters are ordinary ``dict[str, ndarray]`` mappings whose insertion order
is the declaration order used by the parameter file. Activations are
channels-last, ``(batch, height, width, channels)``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, FormatError, NumericError, ShapeError
from .losses import triplet_objective

PARAMS_MAGIC = b"T2VP"
PARAMS_VERSION = 1


@dataclass(frozen=True)
class Block:
    """3x3 stride-1 convolution (zero padding 1) and ReLU, then optional 2x2 max pool.

    A residual block adds its input to the activated convolution output
    before pooling.
    """

    out_channels: int
    residual: bool = False
    pool: bool = True


@dataclass(frozen=True)
class EncoderConfig:
    tile_size: int = 16
    bands: int = 4
    blocks: tuple[Block, ...] = (Block(16), Block(32), Block(64))
    embed_dim: int = 32
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(Block(**b) if isinstance(b, dict) else b for b in self.blocks))
        if self.tile_size < 1 or self.bands < 1:
            raise ConfigError("tile_size and bands must be >= 1")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be >= 1")
        if not self.blocks:
            raise ConfigError("at least one block is required")
        spatial, channels = self.tile_size, self.bands
        for i, b in enumerate(self.blocks):
            if b.out_channels < 1:
                raise ConfigError(f"block {i}: out_channels must be >= 1")
            if b.residual and b.out_channels != channels:
                raise ConfigError(f"block {i}: residual needs in_channels == out_channels ({channels} != {b.out_channels})")
            if b.pool:
                spatial //= 2
            if spatial < 1:
                raise ConfigError(f"block {i}: spatial size drops below 1 for tile size {self.tile_size}")
            channels = b.out_channels

    def to_dict(self):
        return {"kind": "conv", **asdict(self), "blocks": [asdict(b) for b in self.blocks]}


@dataclass(frozen=True)
class MLPConfig:
    in_dim: int
    hidden_dim: int = 32
    embed_dim: int = 10
    init_seed: int = 0

    def __post_init__(self):
        if min(self.in_dim, self.hidden_dim, self.embed_dim) < 1:
            raise ConfigError("in_dim, hidden_dim and embed_dim must be >= 1")

    def to_dict(self):
        return {"kind": "mlp", **asdict(self)}


def config_from_dict(d):
    d = dict(d)
    kind = d.pop("kind", "conv")
    if kind == "conv":
        return EncoderConfig(**{**d, "blocks": tuple(Block(**b) for b in d["blocks"])})
    if kind == "mlp":
        return MLPConfig(**d)
    raise ConfigError(f"unknown encoder kind {kind!r}")


@dataclass
class Embedding:
    values: np.ndarray
    origin: tuple[int, int] | None = None

    def __len__(self):
        return len(self.values)


# ---------------------------------------------------------------------------
# parameters


def param_shapes(config) -> dict[str, tuple[int, ...]]:
    if isinstance(config, MLPConfig):
        return {
            "fc0.weight": (config.hidden_dim, config.in_dim),
            "fc0.bias": (config.hidden_dim,),
            "fc1.weight": (config.embed_dim, config.hidden_dim),
            "fc1.bias": (config.embed_dim,),
        }
    shapes = {}
    channels = config.bands
    for i, b in enumerate(config.blocks):
        shapes[f"conv{i}.weight"] = (b.out_channels, channels, 3, 3)
        shapes[f"conv{i}.bias"] = (b.out_channels,)
        channels = b.out_channels
    shapes["head.weight"] = (config.embed_dim, channels)
    shapes["head.bias"] = (config.embed_dim,)
    return shapes


def _he_init(config):
    rng = np.random.default_rng(config.init_seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return params


def init_encoder(config: EncoderConfig) -> dict[str, np.ndarray]:
    """He-normal weights with variance ``2 / fan_in`` and zero biases."""
    if not isinstance(config, EncoderConfig):
        raise ConfigError("init_encoder expects an EncoderConfig")
    return _he_init(config)


def init_mlp(in_dim: int, hidden_dim: int, d: int, seed: int = 0) -> dict[str, np.ndarray]:
    return _he_init(MLPConfig(in_dim, hidden_dim, d, seed))


def check_params(params, config):
    expected = param_shapes(config)
    if list(params) != list(expected):
        raise ShapeError(f"parameter names {list(params)} do not match config {list(expected)}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeError(f"{name}: expected shape {shape}, got {params[name].shape}")


# ---------------------------------------------------------------------------
# layers


def _conv_forward(x, w, b):
    n, h, wd, c = x.shape
    o = w.shape[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(n * h * wd, c * 9)
    with np.errstate(invalid="ignore", over="ignore"):  # non-finite values are reported per layer
        out = cols @ w.reshape(o, c * 9).T + b
    return out.reshape(n, h, wd, o), cols


def _conv_backward(dout, cols, w, x_shape, need_dx=True):
    n, h, wd, c = x_shape
    o = w.shape[0]
    d2 = dout.reshape(-1, o)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ w.reshape(o, c * 9)).reshape(n, h, wd, c, 3, 3)
    dxp = np.zeros((n, h + 2, wd + 2, c), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + h, j:j + wd, :] += dcols[..., i, j]
    return dxp[:, 1:-1, 1:-1, :], dw, db


def _pool_forward(x):
    n, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    windows = (
        x[:, :2 * h2, :2 * w2]
        .reshape(n, h2, 2, w2, 2, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, h2, w2, c, 4)
    )
    idx = windows.argmax(-1)
    out = np.take_along_axis(windows, idx[..., None], -1)[..., 0]
    return out, idx


def _pool_backward(dout, idx, x_shape):
    n, h, w, c = x_shape
    h2, w2 = h // 2, w // 2
    g = np.zeros((n, h2, w2, c, 4), dtype=dout.dtype)
    np.put_along_axis(g, idx[..., None], dout[..., None], -1)
    g = g.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * h2, 2 * w2, c)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :2 * h2, :2 * w2] = g
    return dx


def _check_finite(arr, layer):
    if not np.isfinite(arr).all():
        raise NumericError("non-finite activation", layer=layer)


def standardize(tiles, stats, dtype=np.float64):
    x = np.asarray(tiles, dtype=dtype)
    if stats is None:
        return x
    mean, std = stats
    return (x - np.asarray(mean, dtype=dtype)) / np.asarray(std, dtype=dtype)


def _conv_net_forward(params, config, x):
    caches = []
    for i, b in enumerate(config.blocks):
        w, bias = params[f"conv{i}.weight"], params[f"conv{i}.bias"]
        c, cols = _conv_forward(x, w.astype(x.dtype, copy=False), bias.astype(x.dtype, copy=False))
        a = np.maximum(c, 0)
        relu_mask = c > 0
        if b.residual:
            a = a + x
        pre_pool_shape = a.shape
        pool_idx = None
        if b.pool:
            a, pool_idx = _pool_forward(a)
        _check_finite(a, i)
        caches.append((x.shape, cols, relu_mask, pre_pool_shape, pool_idx))
        x = a
    pooled = x.mean(axis=(1, 2))
    with np.errstate(invalid="ignore", over="ignore"):
        wh = params["head.weight"].astype(x.dtype, copy=False)
        z = pooled @ wh.T + params["head.bias"].astype(x.dtype, copy=False)
    _check_finite(z, len(config.blocks))
    return z, {"blocks": caches, "feature_shape": x.shape, "pooled": pooled}


def _conv_net_backward(params, config, cache, dz):
    grads = {}
    wh = params["head.weight"].astype(dz.dtype, copy=False)
    grads["head.weight"] = dz.T @ cache["pooled"]
    grads["head.bias"] = dz.sum(0)
    n, h, w, c = cache["feature_shape"]
    dx = np.broadcast_to((dz @ wh)[:, None, None, :] / (h * w), (n, h, w, c)).copy()
    for i in reversed(range(len(config.blocks))):
        b = config.blocks[i]
        x_shape, cols, relu_mask, pre_pool_shape, pool_idx = cache["blocks"][i]
        if b.pool:
            dx = _pool_backward(dx, pool_idx, pre_pool_shape)
        skip = dx if b.residual else None
        dc = dx * relu_mask
        wconv = params[f"conv{i}.weight"].astype(dz.dtype, copy=False)
        dx, dw, db = _conv_backward(dc, cols, wconv, x_shape, need_dx=i > 0 or b.residual)
        if skip is not None:
            dx = dx + skip
        grads[f"conv{i}.weight"] = dw
        grads[f"conv{i}.bias"] = db
    return {name: grads[name] for name in param_shapes(config)}


def _mlp_forward(params, config, x):
    pre = x @ params["fc0.weight"].astype(x.dtype, copy=False).T + params["fc0.bias"].astype(x.dtype, copy=False)
    hidden = np.maximum(pre, 0)
    _check_finite(hidden, 0)
    z = hidden @ params["fc1.weight"].astype(x.dtype, copy=False).T + params["fc1.bias"].astype(x.dtype, copy=False)
    _check_finite(z, 1)
    return z, {"x": x, "mask": pre > 0, "hidden": hidden}


def _mlp_backward(params, config, cache, dz):
    dh = (dz @ params["fc1.weight"].astype(dz.dtype, copy=False)) * cache["mask"]
    return {
        "fc0.weight": dh.T @ cache["x"],
        "fc0.bias": dh.sum(0),
        "fc1.weight": dz.T @ cache["hidden"],
        "fc1.bias": dz.sum(0),
    }


def forward(params, config, inputs, stats=None, dtype=np.float64):
    """Batched forward pass; returns ``(z, cache)`` with ``z`` of shape ``(n, embed_dim)``."""
    if isinstance(config, MLPConfig):
        x = np.asarray(inputs, dtype=dtype)
        if x.ndim != 2 or x.shape[1] != config.in_dim:
            raise ShapeError(f"expected (n, {config.in_dim}) features, got {x.shape}")
        return _mlp_forward(params, config, x)
    x = standardize(inputs, stats, dtype)
    expected = (config.tile_size, config.tile_size, config.bands)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise ShapeError(f"expected tiles of shape {expected}, got {x.shape[1:]}")
    return _conv_net_forward(params, config, x)


def backward(params, config, cache, dz):
    if isinstance(config, MLPConfig):
        return _mlp_backward(params, config, cache, dz)
    return _conv_net_backward(params, config, cache, dz)


def embed_array(params, config, inputs, stats=None, batch_size=256, dtype=np.float64):
    """Embeddings for an array of tiles or feature rows, computed in chunks."""
    inputs = np.asarray(inputs)
    if len(inputs) == 0:
        return np.zeros((0, config.embed_dim))
    parts = [forward(params, config, inputs[i:i + batch_size], stats, dtype)[0] for i in range(0, len(inputs), batch_size)]
    return np.concatenate(parts)


def encode(params, config, tile, stats=None) -> Embedding:
    z, _ = forward(params, config, tile.samples[None], stats)
    return Embedding(z[0], tile.origin)


def encode_batch(params, config, tiles, stats=None, deterministic=True) -> list[Embedding]:
    """Per-tile embeddings for a list of same-shaped tiles.

    BLAS kernels may reorder floating-point sums depending on the number of
    rows, so a single batched pass can differ from :func:`encode` in the last
    bit. With ``deterministic`` each tile goes through the network on its own
    and the result matches :func:`encode` exactly; pass ``False`` for one
    batched pass instead.
    """
    tiles = list(tiles)
    if not tiles:
        return []
    shapes = {t.samples.shape for t in tiles}
    if len(shapes) > 1:
        raise ShapeError(f"heterogeneous tile shapes in batch: {sorted(shapes)}")
    if deterministic:
        return [encode(params, config, t, stats) for t in tiles]
    z, _ = forward(params, config, np.stack([t.samples for t in tiles]), stats)
    return [Embedding(row, t.origin) for row, t in zip(z, tiles)]


def encode_point(params, features) -> Embedding:
    w0 = params["fc0.weight"]
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (w0.shape[1],):
        raise ShapeError(f"expected {w0.shape[1]} features, got {features.shape}")
    config = MLPConfig(w0.shape[1], w0.shape[0], params["fc1.weight"].shape[0])
    z, _ = _mlp_forward(params, config, features[None])
    return Embedding(z[0])


def _stack_triplets(batch):
    if isinstance(batch, np.ndarray):
        return batch.reshape(-1, *batch.shape[2:])
    return np.stack([t.samples for trip in batch for t in (trip.anchor, trip.neighbor, trip.distant)])


def triplet_gradients(params, config, inputs, ia, in_, id_, margin, lam, stats=None, dtype=np.float64):
    """Objective and parameter gradients for index triples into a stack of encoder inputs.

    Each input is encoded once regardless of how many index triples reference it.
    """
    z, cache = forward(params, config, inputs, stats, dtype)
    loss, dz, info = triplet_objective(z, ia, in_, id_, margin, lam)
    if not np.isfinite(loss):
        raise NumericError("non-finite triplet objective", layer="loss")
    grads = backward(params, config, cache, dz)
    return float(loss), grads, info


def loss_gradients(params, config, batch, margin, lam, stats=None, dtype=np.float64):
    """Summed triplet objective over ``batch`` and its exact (sub)gradient.

    ``batch`` is a list of :class:`~tilembed.sampler.TileTriplet` or an array
    of shape ``(B, 3, ...)`` holding anchor, neighbor, distant inputs.
    """
    if len(batch) == 0:
        raise ShapeError("loss_gradients needs a non-empty batch")
    inputs = _stack_triplets(batch)
    idx = np.arange(len(inputs) // 3) * 3
    loss, grads, _ = triplet_gradients(params, config, inputs, idx, idx + 1, idx + 2, margin, lam, stats, dtype)
    return loss, grads


# ---------------------------------------------------------------------------
# persistence


def save_params(params, config, path) -> None:
    check_params(params, config)
    header = {
        "config": config.to_dict(),
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }
    text = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [PARAMS_MAGIC, struct.pack("<HI", PARAMS_VERSION, len(text)), text]
    chunks += [np.ascontiguousarray(v, dtype="<f8").tobytes() for v in params.values()]
    Path(path).write_bytes(b"".join(chunks))


def load_params(path):
    """Read a parameter file, returning ``(params, config)``."""
    data = Path(path).read_bytes()
    if data[:4] != PARAMS_MAGIC:
        raise FormatError(f"magic: expected {PARAMS_MAGIC!r}, got {data[:4]!r}")
    if len(data) < 10:
        raise FormatError("header: truncated")
    version, length = struct.unpack_from("<HI", data, 4)
    if version != PARAMS_VERSION:
        raise FormatError(f"version: unsupported value {version}")
    try:
        header = json.loads(data[10:10 + length].decode("utf-8"))
        config = config_from_dict(header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"config: unreadable ({exc})") from None
    expected = param_shapes(config)
    declared = {a["name"]: tuple(a["shape"]) for a in header["arrays"]}
    if declared != expected:
        raise ShapeError(f"declared array shapes {declared} do not match config {expected}")
    offset = 10 + length
    params = {}
    for name, shape in expected.items():
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(data):
            raise FormatError(f"{name}: payload truncated")
        params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(data):
        raise FormatError(f"payload: {len(data) - offset} trailing bytes")
    return params, config
