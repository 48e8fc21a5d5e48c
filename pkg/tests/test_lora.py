from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from cooktune.errors import (
    DivergedLoss,
    EmptyBatch,
    FileUnreadable,
    MalformedDocument,
    RankTooLarge,
    ShapeMismatch,
)
from cooktune.lora import (
    LinearLayer,
    LoraAdapter,
    ToyTrainConfig,
    adapted_forward,
    init_adapter,
    load_adapter,
    loss_and_grads,
    make_rank_one_task,
    merge_adapter,
    parameter_counts,
    save_adapter,
    train_toy,
)


def _random_layer(rng: np.random.Generator, d_in: int, d_out: int) -> LinearLayer:
    return LinearLayer(weight=rng.normal(0.0, 1.0, (d_out, d_in)))


def _random_batch(rng: np.random.Generator, layer: LinearLayer, n: int) -> list:
    xs = rng.normal(0.0, 1.0, (n, layer.d_in))
    ys = rng.normal(0.0, 1.0, (n, layer.d_out))
    return [(xs[i], ys[i]) for i in range(n)]


# --- initialization ---


def test_init_shapes_and_scaling() -> None:
    adapter = init_adapter(12, 8, rank=3, alpha=6.0, seed=0)
    assert adapter.a.shape == (3, 12)
    assert adapter.b.shape == (8, 3)
    assert adapter.scaling == pytest.approx(2.0)
    assert np.all(adapter.b == 0.0)


def test_init_a_spread_tracks_rank() -> None:
    # A is drawn with stddev 1/rank, so the sample std over many
    # entries should sit near 0.25 at rank 4.
    adapter = init_adapter(400, 4, rank=4, alpha=4.0, seed=7)
    observed = float(adapter.a.std())
    assert observed == pytest.approx(0.25, rel=0.05)


def test_init_is_seed_deterministic() -> None:
    first = init_adapter(10, 10, rank=2, alpha=2.0, seed=11)
    second = init_adapter(10, 10, rank=2, alpha=2.0, seed=11)
    assert np.array_equal(first.a, second.a)
    third = init_adapter(10, 10, rank=2, alpha=2.0, seed=12)
    assert not np.array_equal(first.a, third.a)


def test_init_rank_bounds() -> None:
    with pytest.raises(RankTooLarge):
        init_adapter(4, 8, rank=5, alpha=4.0, seed=0)
    with pytest.raises(RankTooLarge):
        init_adapter(8, 4, rank=5, alpha=4.0, seed=0)
    with pytest.raises(RankTooLarge):
        init_adapter(8, 8, rank=0, alpha=4.0, seed=0)
    with pytest.raises(ValueError):
        init_adapter(8, 8, rank=2, alpha=0.0, seed=0)


# --- forward algebra ---


def test_zero_init_adapter_is_exact_identity() -> None:
    rng = np.random.default_rng(100)
    for trial in range(20):
        d_in = int(rng.integers(1, 40))
        d_out = int(rng.integers(1, 40))
        rank = int(rng.integers(1, min(d_in, d_out) + 1))
        layer = _random_layer(rng, d_in, d_out)
        adapter = init_adapter(d_in, d_out, rank, alpha=float(rank), seed=trial)
        x = rng.normal(0.0, 1.0, (5, d_in))
        base = layer.forward(x)
        adapted = adapted_forward(layer, adapter, x)
        assert np.array_equal(base, adapted), "zero B must change nothing, bit for bit"


def test_adapted_matches_merged_to_tight_tolerance() -> None:
    rng = np.random.default_rng(2024)
    for trial in range(100):
        d_in = int(rng.integers(1, 65))
        d_out = int(rng.integers(1, 65))
        rank = int(rng.integers(1, min(8, d_in, d_out) + 1))
        layer = _random_layer(rng, d_in, d_out)
        adapter = init_adapter(d_in, d_out, rank, alpha=float(2 * rank), seed=trial)
        # give B real content so the two code paths genuinely differ
        adapter = LoraAdapter(
            a=adapter.a,
            b=rng.normal(0.0, 1.0, adapter.b.shape),
            rank=rank,
            alpha=adapter.alpha,
            seed=adapter.seed,
        )
        x = rng.normal(0.0, 1.0, (7, d_in))
        two_step = adapted_forward(layer, adapter, x)
        merged = merge_adapter(layer, adapter).forward(x)
        scale = max(1.0, float(np.abs(merged).max()))
        assert float(np.abs(two_step - merged).max()) / scale <= 1e-9


def test_forward_accepts_single_vectors() -> None:
    rng = np.random.default_rng(5)
    layer = _random_layer(rng, 6, 3)
    adapter = init_adapter(6, 3, rank=2, alpha=2.0, seed=5)
    x = rng.normal(0.0, 1.0, 6)
    out = adapted_forward(layer, adapter, x)
    assert out.shape == (3,)


def test_forward_shape_mismatch() -> None:
    rng = np.random.default_rng(6)
    layer = _random_layer(rng, 6, 3)
    adapter = init_adapter(6, 3, rank=2, alpha=2.0, seed=6)
    with pytest.raises(ShapeMismatch):
        adapted_forward(layer, adapter, rng.normal(0.0, 1.0, (4, 7)))
    other = init_adapter(9, 3, rank=2, alpha=2.0, seed=6)
    with pytest.raises(ShapeMismatch):
        merge_adapter(layer, other)


def test_merge_leaves_input_layer_alone() -> None:
    rng = np.random.default_rng(8)
    layer = _random_layer(rng, 5, 5)
    before = layer.weight.copy()
    adapter = init_adapter(5, 5, rank=1, alpha=1.0, seed=8)
    merge_adapter(layer, adapter)
    assert np.array_equal(layer.weight, before)


# --- gradients ---


def test_gradients_match_finite_differences() -> None:
    rng = np.random.default_rng(31)
    epsilon = 1e-6
    for trial in range(10):
        d_in = int(rng.integers(2, 17))
        d_out = int(rng.integers(2, 17))
        rank = int(rng.integers(1, min(4, d_in, d_out) + 1))
        layer = _random_layer(rng, d_in, d_out)
        adapter = LoraAdapter(
            a=rng.normal(0.0, 0.5, (rank, d_in)),
            b=rng.normal(0.0, 0.5, (d_out, rank)),
            rank=rank,
            alpha=float(rank),
            seed=trial,
        )
        batch = _random_batch(rng, layer, 6)
        _, grad_a, grad_b = loss_and_grads(layer, adapter, batch)

        def loss_at(a: np.ndarray, b: np.ndarray) -> float:
            probe = LoraAdapter(a=a, b=b, rank=rank, alpha=float(rank), seed=0)
            value, _, _ = loss_and_grads(layer, probe, batch)
            return value

        for grad, which in ((grad_a, "a"), (grad_b, "b")):
            numeric = np.zeros_like(grad)
            for index in np.ndindex(grad.shape):
                a_plus, b_plus = adapter.a.copy(), adapter.b.copy()
                a_minus, b_minus = adapter.a.copy(), adapter.b.copy()
                if which == "a":
                    a_plus[index] += epsilon
                    a_minus[index] -= epsilon
                else:
                    b_plus[index] += epsilon
                    b_minus[index] -= epsilon
                numeric[index] = (
                    loss_at(a_plus, b_plus) - loss_at(a_minus, b_minus)
                ) / (2 * epsilon)
            denom = max(1.0, float(np.abs(numeric).max()))
            assert float(np.abs(grad - numeric).max()) / denom <= 1e-4, which


def test_loss_and_grads_rejects_empty_and_mismatched() -> None:
    rng = np.random.default_rng(40)
    layer = _random_layer(rng, 4, 4)
    adapter = init_adapter(4, 4, rank=2, alpha=2.0, seed=40)
    with pytest.raises(EmptyBatch):
        loss_and_grads(layer, adapter, [])
    bad = [(np.zeros(5), np.zeros(4))]
    with pytest.raises(ShapeMismatch):
        loss_and_grads(layer, adapter, bad)


# --- training ---


def test_train_toy_history_and_convergence() -> None:
    layer, dataset = make_rank_one_task(16, 16, seed=0)
    adapter = init_adapter(16, 16, rank=2, alpha=4.0, seed=0)
    config = ToyTrainConfig(learning_rate=0.05, steps=500, seed=0, batch_size=16)
    trained, history = train_toy(layer, adapter, dataset, config)
    assert len(history) == 501
    assert history[-1] <= 0.10 * history[0]
    # the input adapter is untouched
    assert np.all(adapter.b == 0.0)
    assert not np.array_equal(trained.b, adapter.b)


def test_train_toy_zero_steps_returns_initial_loss_only() -> None:
    layer, dataset = make_rank_one_task(8, 8, seed=1)
    adapter = init_adapter(8, 8, rank=1, alpha=2.0, seed=1)
    config = ToyTrainConfig(learning_rate=0.05, steps=0, seed=1, batch_size=4)
    _, history = train_toy(layer, adapter, dataset, config)
    assert len(history) == 1


def test_train_toy_is_seed_deterministic() -> None:
    layer, dataset = make_rank_one_task(10, 10, seed=2)
    adapter = init_adapter(10, 10, rank=2, alpha=4.0, seed=2)
    config = ToyTrainConfig(learning_rate=0.05, steps=50, seed=2, batch_size=8)
    first, history_a = train_toy(layer, adapter, dataset, config)
    second, history_b = train_toy(layer, adapter, dataset, config)
    assert history_a == history_b
    assert np.array_equal(first.a, second.a)
    assert np.array_equal(first.b, second.b)


def test_train_toy_diverges_with_huge_learning_rate() -> None:
    layer, dataset = make_rank_one_task(12, 12, seed=3)
    adapter = init_adapter(12, 12, rank=2, alpha=4.0, seed=3)
    config = ToyTrainConfig(learning_rate=1e6, steps=200, seed=3, batch_size=12)
    with pytest.raises(DivergedLoss):
        train_toy(layer, adapter, dataset, config)


def test_train_toy_rejects_empty_dataset() -> None:
    layer, _ = make_rank_one_task(8, 8, seed=4)
    adapter = init_adapter(8, 8, rank=1, alpha=2.0, seed=4)
    config = ToyTrainConfig(learning_rate=0.05, steps=5, seed=4, batch_size=4)
    with pytest.raises(EmptyBatch):
        train_toy(layer, adapter, [], config)


# --- parameter efficiency ---


def test_parameter_counts_are_far_below_dense() -> None:
    adapter = init_adapter(4096, 4096, rank=8, alpha=16.0, seed=0)
    small, dense = parameter_counts(adapter)
    assert small == 8 * (4096 + 4096)
    assert dense == 4096 * 4096
    assert small < dense / 100


def test_parameter_efficiency_holds_for_configured_ranks() -> None:
    # r*(d_in + d_out) < d_in*d_out whenever r < d_in*d_out/(d_in + d_out),
    # checked for every adapter slot the default config ships.
    from cooktune.config import default_config

    settings = default_config().lora
    for name, slot in settings.adapters.items():
        d_in, d_out = settings.d_in, settings.d_out
        assert slot.rank < d_in * d_out / (d_in + d_out), name
        adapter = init_adapter(d_in, d_out, slot.rank, slot.alpha, slot.seed)
        small, dense = parameter_counts(adapter)
        assert small == slot.rank * (d_in + d_out)
        assert small < dense, name


# --- checkpointing ---


def test_checkpoint_round_trip_is_bit_exact(tmp_path: Path) -> None:
    rng = np.random.default_rng(77)
    adapter = LoraAdapter(
        a=rng.normal(0.0, 1.0, (3, 7)),
        b=rng.normal(0.0, 1.0, (5, 3)),
        rank=3,
        alpha=6.0,
        seed=77,
    )
    target = tmp_path / "adapter.json"
    save_adapter(adapter, target)
    loaded = load_adapter(target)
    assert np.array_equal(loaded.a, adapter.a)
    assert np.array_equal(loaded.b, adapter.b)
    assert (loaded.rank, loaded.alpha, loaded.seed) == (3, 6.0, 77)


def test_checkpoint_key_layout(tmp_path: Path) -> None:
    adapter = init_adapter(4, 3, rank=2, alpha=4.0, seed=5)
    target = tmp_path / "adapter.json"
    save_adapter(adapter, target)
    obj = json.loads(target.read_text(encoding="utf-8"))
    assert list(obj.keys()) == ["d_in", "d_out", "r", "alpha", "A", "B", "seed"]
    assert obj["d_in"] == 4 and obj["d_out"] == 3 and obj["r"] == 2


def test_checkpoint_load_errors(tmp_path: Path) -> None:
    with pytest.raises(FileUnreadable):
        load_adapter(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{oops")
    with pytest.raises(MalformedDocument):
        load_adapter(broken)
    partial = tmp_path / "partial.json"
    partial.write_text(json.dumps({"d_in": 4, "A": [[1, 2]]}))
    with pytest.raises(MalformedDocument):
        load_adapter(partial)
