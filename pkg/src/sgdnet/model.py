"""Diffusion layers, the full forward pass, edge scoring, and the training loss.

A layer transforms its input, diffuses the transformed features over the
signed graph, mixes the two diffusion channels, and adds a skip connection:

    h_next = tanh([p || m] @ w_n + h_prev)

The prediction head scores an edge (u, v) from the concatenated endpoint
embeddings, with class 0 meaning a positive sign and class 1 a negative sign.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import diffusion
from .diffusion import DiffusionConfig
from .graph import NormalizedAdjacency

CHECKPOINT_MAGIC = b"SGDN"
CHECKPOINT_VERSION = 1


class NumericError(RuntimeError):
    """Non-finite values appeared during a forward or training pass."""


@dataclass
class LayerParams:
    w_t: np.ndarray  # d x d feature transform
    w_n: np.ndarray  # 2d x d channel-mixing transform


@dataclass
class ModelParams:
    w_in: np.ndarray  # d0 x d input projection
    layers: list[LayerParams]
    w_head: np.ndarray  # 2d x 2 prediction head

    def named(self) -> list[tuple[str, np.ndarray]]:
        """Stable (name, matrix) listing used by the optimizer and gradients."""
        out = [("w_in", self.w_in)]
        for i, layer in enumerate(self.layers):
            out.append((f"layers.{i}.w_t", layer.w_t))
            out.append((f"layers.{i}.w_n", layer.w_n))
        out.append(("w_head", self.w_head))
        return out

    @property
    def dims(self) -> tuple[int, int, int]:
        """(d0, d, layer count)."""
        return self.w_in.shape[0], self.w_in.shape[1], len(self.layers)


def init_params(d0: int, d: int, n_layers: int, seed: int = 0) -> ModelParams:
    """Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialization per matrix."""
    if d0 < 1 or d < 1 or n_layers < 1:
        raise ValueError(f"dimensions must be positive, got d0={d0}, d={d}, layers={n_layers}")
    rng = np.random.default_rng(seed)

    def uniform(fan_in, shape):
        bound = np.sqrt(1.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    w_in = uniform(d0, (d0, d))
    layers = [
        LayerParams(w_t=uniform(d, (d, d)), w_n=uniform(2 * d, (2 * d, d)))
        for _ in range(n_layers)
    ]
    w_head = uniform(2 * d, (2 * d, 2))
    return ModelParams(w_in=w_in, layers=layers, w_head=w_head)


class LayerCache(NamedTuple):
    h_prev: np.ndarray
    p: np.ndarray
    m: np.ndarray
    h_next: np.ndarray


class ForwardCache(NamedTuple):
    x: np.ndarray
    h0: np.ndarray
    layers: list[LayerCache]


def layer_forward(
    na: NormalizedAdjacency,
    h_prev: np.ndarray,
    params: LayerParams,
    cfg: DiffusionConfig,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, LayerCache]:
    """One diffusion layer; the cache keeps what the backward pass needs."""
    h_tilde = h_prev @ params.w_t
    if not np.all(np.isfinite(h_tilde)):
        raise NumericError("non-finite features entering the diffusion")
    p, m = diffusion.diffuse(na, h_tilde, cfg, rng=rng)
    pre = np.hstack([p, m]) @ params.w_n + h_prev
    if not np.all(np.isfinite(pre)):
        raise NumericError("non-finite activations in diffusion layer")
    h_next = np.tanh(pre)
    return h_next, LayerCache(h_prev=h_prev, p=p, m=m, h_next=h_next)


def model_forward(
    na: NormalizedAdjacency,
    x: np.ndarray,
    params: ModelParams,
    cfg: DiffusionConfig,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Project the input features and apply every diffusion layer in order."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.w_in.shape[0]:
        raise ValueError(
            f"input features must be n x {params.w_in.shape[0]}, got shape {x.shape}"
        )
    h = x @ params.w_in
    h0 = h
    caches = []
    for layer in params.layers:
        h, cache = layer_forward(na, h, layer, cfg, rng=rng)
        caches.append(cache)
    return h, ForwardCache(x=x, h0=h0, layers=caches)


class EdgeBatch(NamedTuple):
    uv: np.ndarray  # b x 2 int64 endpoint ids
    signs: np.ndarray  # b int64 labels, +1 or -1

    @classmethod
    def from_edges(cls, edges) -> "EdgeBatch":
        uv = np.array([(e.src, e.dst) for e in edges], dtype=np.int64).reshape(-1, 2)
        signs = np.array([e.sign for e in edges], dtype=np.int64)
        return cls(uv=uv, signs=signs)

    def __len__(self) -> int:
        return self.uv.shape[0]


def edge_logits(h_final: np.ndarray, batch: EdgeBatch, w_head: np.ndarray) -> np.ndarray:
    """Score each (u, v) pair as [h_u || h_v] @ w_head, no bias."""
    n = h_final.shape[0]
    if len(batch) and (batch.uv.min() < 0 or batch.uv.max() >= n):
        raise ValueError(f"edge batch references node ids outside 0..{n - 1}")
    z = np.hstack([h_final[batch.uv[:, 0]], h_final[batch.uv[:, 1]]])
    return z @ w_head


def sign_to_index(signs: np.ndarray) -> np.ndarray:
    """Class index per label: 0 for +1, 1 for -1."""
    return (signs < 0).astype(np.int64)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def params_sq_norm(params: ModelParams) -> float:
    return float(sum(np.sum(w * w) for _, w in params.named()))


def loss_total(
    logits: np.ndarray,
    signs: np.ndarray,
    params: ModelParams,
    weight_decay: float,
) -> float:
    """Mean cross entropy over edges plus weight_decay * sum of squared weights."""
    idx = sign_to_index(np.asarray(signs))
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    data = float(np.mean(log_norm - shifted[np.arange(len(idx)), idx]))
    return data + weight_decay * params_sq_norm(params)


def loss_grad_logits(logits: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Gradient of the mean cross entropy with respect to the logits."""
    idx = sign_to_index(np.asarray(signs))
    grad = softmax(logits)
    grad[np.arange(len(idx)), idx] -= 1.0
    return grad / len(idx)


def save_checkpoint(path, params: ModelParams, cfg: DiffusionConfig) -> None:
    """Write a model checkpoint: magic, version, dims, c, K, then the matrices."""
    d0, d, n_layers = params.dims
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<IIIdI", d0, d, n_layers, cfg.c, cfg.k_steps))
        for _, w in params.named():
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, DiffusionConfig]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        d0, d, n_layers, c, k_steps = struct.unpack("<IIIdI", fh.read(24))

        def matrix(rows, cols):
            raw = fh.read(8 * rows * cols)
            if len(raw) != 8 * rows * cols:
                raise ValueError(f"{path}: truncated checkpoint")
            return np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy()

        w_in = matrix(d0, d)
        layers = [
            LayerParams(w_t=matrix(d, d), w_n=matrix(2 * d, d)) for _ in range(n_layers)
        ]
        w_head = matrix(2 * d, 2)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after checkpoint payload")
    params = ModelParams(w_in=w_in, layers=layers, w_head=w_head)
    return params, DiffusionConfig(c=c, k_steps=k_steps)
