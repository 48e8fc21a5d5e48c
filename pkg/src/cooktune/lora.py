"""Low-rank adaptation of a frozen linear map, at desk scale.

A base layer y = W x stays frozen while a rank-r update is learned as
two small factors: A (r x d_in) and B (d_out x r), scaled by alpha/r.
The adapted map is

    y = W x + (alpha/r) * B (A x)

computed as two rank-r products; the dense delta (alpha/r) * B A is only
ever formed by merge_adapter. B starts at zero so a fresh adapter is an
exact identity over the base layer. Training is plain gradient descent
on mean squared error, which exercises the identical adapter algebra
with gradients small enough to verify against finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DivergedLoss,
    EmptyBatch,
    FileUnreadable,
    MalformedDocument,
    RankTooLarge,
    ShapeMismatch,
)

Batch = Sequence[tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class LinearLayer:
    """Frozen base weights W with shape (d_out, d_in)."""

    weight: np.ndarray

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.d_in:
            raise ShapeMismatch(f"x has last dim {x.shape[-1]}, layer expects {self.d_in}")
        return x @ self.weight.T


@dataclass(frozen=True)
class LoraAdapter:
    """Rank-r factors: a is (rank, d_in), b is (d_out, rank).

    The effective update is scaling * b @ a with scaling = alpha / rank.
    """

    a: np.ndarray
    b: np.ndarray
    rank: int
    alpha: float
    seed: int

    @property
    def d_in(self) -> int:
        return self.a.shape[1]

    @property
    def d_out(self) -> int:
        return self.b.shape[0]

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank


@dataclass(frozen=True)
class ToyTrainConfig:
    learning_rate: float
    steps: int
    seed: int
    batch_size: int


def init_adapter(d_in: int, d_out: int, rank: int, alpha: float, seed: int) -> LoraAdapter:
    """Gaussian A (stddev 1/rank), zero B; deterministic given seed.

    Zero B makes the initial update exactly zero, so an adapted forward
    pass starts identical to the base layer.
    """
    if d_in < 1 or d_out < 1:
        raise ShapeMismatch("d_in and d_out must be positive")
    if rank < 1:
        raise RankTooLarge("rank must be positive")
    if rank > min(d_in, d_out):
        raise RankTooLarge(f"rank {rank} exceeds min(d_in, d_out) = {min(d_in, d_out)}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 1.0 / rank, size=(rank, d_in))
    b = np.zeros((d_out, rank))
    return LoraAdapter(a=a, b=b, rank=rank, alpha=float(alpha), seed=seed)


def _check_pair(layer: LinearLayer, adapter: LoraAdapter) -> None:
    if adapter.d_in != layer.d_in or adapter.d_out != layer.d_out:
        raise ShapeMismatch(
            f"adapter is ({adapter.d_out}, {adapter.d_in}), "
            f"layer is ({layer.d_out}, {layer.d_in})"
        )


def adapted_forward(layer: LinearLayer, adapter: LoraAdapter, x: np.ndarray) -> np.ndarray:
    """W x plus the scaled low-rank correction, as two rank-r products.

    Accepts a single vector (d_in,) or a batch (n, d_in); the dense
    delta matrix is never materialized.
    """
    _check_pair(layer, adapter)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != layer.d_in:
        raise ShapeMismatch(f"x has last dim {x.shape[-1]}, expected {layer.d_in}")
    return x @ layer.weight.T + (x @ adapter.a.T) @ adapter.b.T * adapter.scaling


def merge_adapter(layer: LinearLayer, adapter: LoraAdapter) -> LinearLayer:
    """New layer with W' = W + scaling * B A; the input layer is untouched."""
    _check_pair(layer, adapter)
    merged = layer.weight + adapter.scaling * (adapter.b @ adapter.a)
    return LinearLayer(weight=merged)


def loss_and_grads(
    layer: LinearLayer, adapter: LoraAdapter, batch: Batch
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean over the batch of 0.5 * ||f(x) - y||^2, with analytic grads.

    Only A and B receive gradients; W is frozen. With residuals
    e_i = f(x_i) - y_i stacked into E (n, d_out), X (n, d_in), and
    s = alpha/rank:

        dL/dB = (s/n) * E^T (X A^T)        shape (d_out, rank)
        dL/dA = (s/n) * B^T E^T X          shape (rank, d_in)
    """
    _check_pair(layer, adapter)
    if len(batch) == 0:
        raise EmptyBatch("batch is empty")
    xs, ys = [], []
    for x, y in batch:
        x = np.asarray(x, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if x.shape[0] != layer.d_in:
            raise ShapeMismatch(f"x has dim {x.shape[0]}, expected {layer.d_in}")
        if y.shape[0] != layer.d_out:
            raise ShapeMismatch(f"y has dim {y.shape[0]}, expected {layer.d_out}")
        xs.append(x)
        ys.append(y)
    x_mat = np.stack(xs)
    y_mat = np.stack(ys)
    n = x_mat.shape[0]
    s = adapter.scaling

    # Overflow to inf/nan is tolerated here; train_toy turns a
    # non-finite loss into DivergedLoss.
    with np.errstate(over="ignore", invalid="ignore"):
        projected = x_mat @ adapter.a.T                      # (n, rank)
        residual = x_mat @ layer.weight.T + projected @ adapter.b.T * s - y_mat
        loss = float(0.5 * np.sum(residual * residual) / n)
        grad_b = (s / n) * residual.T @ projected            # (d_out, rank)
        grad_a = (s / n) * adapter.b.T @ residual.T @ x_mat  # (rank, d_in)
    return loss, grad_a, grad_b


def train_toy(
    layer: LinearLayer,
    adapter: LoraAdapter,
    dataset: Batch,
    config: ToyTrainConfig,
) -> tuple[LoraAdapter, list[float]]:
    """Plain gradient descent on the toy objective.

    Returns a new adapter (the input adapter is untouched) and the full
    dataset loss before training plus after every step, so the history
    has length steps + 1. Mini-batches are drawn without replacement by
    a generator seeded from the config, making runs reproducible.
    """
    if len(dataset) == 0:
        raise EmptyBatch("dataset is empty")
    if config.learning_rate < 0:
        raise ValueError("learning_rate must be >= 0")
    if config.steps < 0:
        raise ValueError("steps must be >= 0")
    if config.batch_size < 1:
        raise ValueError("batch_size must be >= 1")

    rng = np.random.default_rng(config.seed)
    current = replace(adapter, a=adapter.a.copy(), b=adapter.b.copy())
    take = min(config.batch_size, len(dataset))

    def full_loss(ad: LoraAdapter) -> float:
        loss, _, _ = loss_and_grads(layer, ad, dataset)
        if not math.isfinite(loss):
            raise DivergedLoss(f"loss is non-finite: {loss}")
        return loss

    history = [full_loss(current)]
    for _ in range(config.steps):
        picks = rng.choice(len(dataset), size=take, replace=False)
        batch = [dataset[i] for i in picks]
        _, grad_a, grad_b = loss_and_grads(layer, current, batch)
        current = replace(
            current,
            a=current.a - config.learning_rate * grad_a,
            b=current.b - config.learning_rate * grad_b,
        )
        history.append(full_loss(current))
    return current, history


def parameter_counts(adapter: LoraAdapter) -> tuple[int, int]:
    """(adapter parameter count, dense-update parameter count)."""
    return adapter.rank * (adapter.d_in + adapter.d_out), adapter.d_in * adapter.d_out


def make_rank_one_task(
    d_in: int, d_out: int, seed: int, n_samples: int = 128
) -> tuple[LinearLayer, list[tuple[np.ndarray, np.ndarray]]]:
    """Synthetic regression whose ideal weight update is exactly rank 1.

    Targets come from a frozen base weight plus a rank-1 shift, so any
    adapter with rank >= 1 can drive the loss toward zero.
    """
    rng = np.random.default_rng(seed)
    weight = rng.normal(0.0, 1.0, (d_out, d_in)) / math.sqrt(d_in)
    shift = np.outer(rng.normal(0.0, 1.0, d_out), rng.normal(0.0, 1.0, d_in))
    target = weight + shift / math.sqrt(d_in)
    xs = rng.normal(0.0, 1.0, (n_samples, d_in))
    ys = xs @ target.T
    return LinearLayer(weight=weight), [(xs[i], ys[i]) for i in range(n_samples)]


def save_adapter(adapter: LoraAdapter, path: str | Path) -> None:
    """Checkpoint as JSON; floats round-trip bit-exactly through repr."""
    obj = {
        "d_in": adapter.d_in,
        "d_out": adapter.d_out,
        "r": adapter.rank,
        "alpha": adapter.alpha,
        "A": adapter.a.tolist(),
        "B": adapter.b.tolist(),
        "seed": adapter.seed,
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_adapter(path: str | Path) -> LoraAdapter:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"checkpoint is not valid JSON: {exc}") from exc
    try:
        a = np.array(obj["A"], dtype=float)
        b = np.array(obj["B"], dtype=float)
        adapter = LoraAdapter(
            a=a, b=b, rank=int(obj["r"]), alpha=float(obj["alpha"]), seed=int(obj["seed"])
        )
        d_in, d_out = int(obj["d_in"]), int(obj["d_out"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"checkpoint lacks a required field: {exc}") from exc
    if a.ndim != 2 or b.ndim != 2 or a.shape != (adapter.rank, d_in) or b.shape != (d_out, adapter.rank):
        raise MalformedDocument("checkpoint factor shapes disagree with d_in/d_out/r")
    return adapter
