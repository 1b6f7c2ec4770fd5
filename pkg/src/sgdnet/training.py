"""Reverse-mode gradients for the whole model, the Adam optimizer, gradient
verification against finite differences, and the full-batch epoch loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffusion as _diffusion
from . import model as _model
from .diffusion import DiffusionConfig
from .graph import SignedDigraph, normalize
from .model import (
    EdgeBatch,
    ForwardCache,
    ModelParams,
    NumericError,
    edge_logits,
    init_params,
    loss_grad_logits,
    loss_total,
    model_forward,
)
from .seeding import spawn_seeds
from .synthetic import random_signed_graph


def backward(
    na,
    cfg: DiffusionConfig,
    params: ModelParams,
    cache: ForwardCache,
    batch: EdgeBatch,
    grad_logits: np.ndarray,
    weight_decay: float = 0.0,
) -> dict[str, np.ndarray]:
    """Exact gradients of the total loss for every parameter matrix.

    Composes the head adjoint, each layer's tanh/skip/mixing adjoints, the
    diffusion adjoint, and the input projection adjoint, then adds the
    analytic 2 * weight_decay * W regularization term.
    """
    d = params.w_in.shape[1]
    h_final = cache.layers[-1].h_next if cache.layers else cache.h0
    u, v = batch.uv[:, 0], batch.uv[:, 1]

    grads: dict[str, np.ndarray] = {}
    z = np.hstack([h_final[u], h_final[v]])
    grads["w_head"] = z.T @ grad_logits
    dz = grad_logits @ params.w_head.T
    dh = np.zeros_like(h_final)
    np.add.at(dh, u, dz[:, :d])
    np.add.at(dh, v, dz[:, d:])

    for i in reversed(range(len(params.layers))):
        layer = params.layers[i]
        lc = cache.layers[i]
        dpre = dh * (1.0 - lc.h_next * lc.h_next)
        pm = np.hstack([lc.p, lc.m])
        grads[f"layers.{i}.w_n"] = pm.T @ dpre
        dpm = dpre @ layer.w_n.T
        dh_tilde = _diffusion.diffuse_adjoint(na, dpm[:, :d], dpm[:, d:], cfg)
        grads[f"layers.{i}.w_t"] = lc.h_prev.T @ dh_tilde
        dh = dpre + dh_tilde @ layer.w_t.T  # skip path plus transform path

    grads["w_in"] = cache.x.T @ dh

    if weight_decay:
        for name, w in params.named():
            grads[name] = grads[name] + 2.0 * weight_decay * w
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    return grads


class Adam:
    """Bias-corrected Adam; weight decay enters through the loss gradient."""

    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        """Update every parameter matrix in place."""
        self.t += 1
        for name, w in params.named():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(w)
                self.v[name] = np.zeros_like(w)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            w -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: Adam) -> None:
    """Functional alias for Adam.step."""
    state.step(params, grads)


def forward_loss(
    na,
    x: np.ndarray,
    params: ModelParams,
    cfg: DiffusionConfig,
    batch: EdgeBatch,
    weight_decay: float,
    rng: np.random.Generator | None = None,
):
    """One forward pass through model, head, and loss."""
    h_final, cache = model_forward(na, x, params, cfg, rng=rng)
    logits = edge_logits(h_final, batch, params.w_head)
    loss = loss_total(logits, batch.signs, params, weight_decay)
    return loss, logits, cache


@dataclass
class GradCheckReport:
    per_param: dict[str, float]
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.per_param.values())

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def __str__(self) -> str:
        lines = [
            f"{name}: max rel err {err:.3e}" for name, err in self.per_param.items()
        ]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"{verdict} (tolerance {self.tolerance:g})")
        return "\n".join(lines)


def grad_check(
    seed: int = 0,
    n: int = 6,
    d0: int = 4,
    d: int = 3,
    n_layers: int = 2,
    k_steps: int = 3,
    c: float = 0.5,
    weight_decay: float = 1e-3,
    fd_step: float = 1e-6,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences on a toy
    instance. Failure is a reported verdict, not an exception."""
    if n > 10:
        raise ValueError(f"grad_check is a toy-scale harness, keep n <= 10 (got {n})")
    graph_seed, x_seed, init_seed = spawn_seeds(seed, 3)
    g = random_signed_graph(n, avg_out_degree=3.0, deadend_fraction=0.15, seed=graph_seed)
    na = normalize(g)
    x = np.random.default_rng(x_seed).standard_normal((n, d0))
    params = init_params(d0, d, n_layers, seed=init_seed)
    batch = EdgeBatch.from_edges(g.edges)
    cfg = DiffusionConfig(c=c, k_steps=k_steps, m0_mode="zero")

    loss, logits, cache = forward_loss(na, x, params, cfg, batch, weight_decay)
    grads = backward(na, cfg, params, cache, batch, loss_grad_logits(logits, batch.signs),
                     weight_decay=weight_decay)

    def loss_at() -> float:
        value, _, _ = forward_loss(na, x, params, cfg, batch, weight_decay)
        return value

    report: dict[str, float] = {}
    for name, w in params.named():
        analytic = grads[name]
        worst = 0.0
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + fd_step
            up = loss_at()
            w[idx] = orig - fd_step
            down = loss_at()
            w[idx] = orig
            fd = (up - down) / (2 * fd_step)
            a = analytic[idx]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-4)
            worst = max(worst, rel)
        report[name] = worst
    return GradCheckReport(per_param=report, tolerance=tolerance)


@dataclass
class TrainConfig:
    dim: int = 32
    n_layers: int = 1
    c: float = 0.35
    k_steps: int = 10
    lr: float = 0.01
    weight_decay: float = 1e-3
    epochs: int = 100
    m0_mode: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.n_layers < 1:
            raise ValueError(f"dim and n_layers must be positive, got {self.dim}, {self.n_layers}")
        if self.lr < 0 or self.weight_decay < 0 or self.epochs < 0:
            raise ValueError("lr, weight_decay, and epochs must be non-negative")
        self.diffusion()  # validates c, k_steps, m0_mode

    def diffusion(self) -> DiffusionConfig:
        return DiffusionConfig(c=self.c, k_steps=self.k_steps, m0_mode=self.m0_mode)


class TrainingAbort(NumericError):
    """Training hit a non-finite loss; carries the last good parameters."""

    def __init__(self, message, params, history):
        super().__init__(message)
        self.params = params
        self.history = history


def train(
    graph: SignedDigraph,
    x: np.ndarray,
    cfg: TrainConfig,
) -> tuple[ModelParams, list[float]]:
    """Full-batch training on all edges of `graph` (train edges only).

    One gradient step per epoch; the negative diffusion channel is redrawn
    each epoch in uniform mode. Returns the final parameters and the
    per-epoch loss history.
    """
    na = normalize(graph)
    batch = EdgeBatch.from_edges(graph.edges)
    dcfg = cfg.diffusion()
    init_seed, m0_seed = spawn_seeds(cfg.seed, 2)
    params = init_params(x.shape[1], cfg.dim, cfg.n_layers, seed=init_seed)
    rng = np.random.default_rng(m0_seed)
    optimizer = Adam(lr=cfg.lr)

    history: list[float] = []
    last_good = _clone_params(params)
    for epoch in range(cfg.epochs):
        try:
            loss, logits, cache = forward_loss(
                na, x, params, dcfg, batch, cfg.weight_decay, rng=rng
            )
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            grads = backward(
                na, dcfg, params, cache, batch,
                loss_grad_logits(logits, batch.signs), weight_decay=cfg.weight_decay,
            )
        except NumericError as exc:
            raise TrainingAbort(
                f"training aborted at epoch {epoch}: {exc}", last_good, history
            ) from exc
        history.append(loss)
        last_good = _clone_params(params)
        optimizer.step(params, grads)
    return params, history


def _clone_params(params: ModelParams) -> ModelParams:
    return ModelParams(
        w_in=params.w_in.copy(),
        layers=[
            _model.LayerParams(w_t=l.w_t.copy(), w_n=l.w_n.copy()) for l in params.layers
        ],
        w_head=params.w_head.copy(),
    )
