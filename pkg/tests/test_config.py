from __future__ import annotations

import json
from pathlib import Path

import pytest

from cooktune.config import config_from_obj, default_config, load_config
from cooktune.errors import ConfigInvalid, FileUnreadable


def test_default_config_values() -> None:
    cfg = default_config()
    assert cfg.paths.output_dir == "out"
    assert cfg.paths.cache_dir == "out/judge_cache"
    assert cfg.judge.model == "gpt-3.5-turbo"
    assert cfg.judge.temperature == 0.0
    assert cfg.judge.parallelism == 4
    assert cfg.judge.retry_cap == 3
    assert cfg.generation.temperature == 0.7
    assert cfg.backend.mode == "mock"
    assert cfg.lora.layout == "per-modality"
    assert set(cfg.lora.adapters) == {"image", "video", "text"}
    for slot in cfg.lora.adapters.values():
        assert slot.rank == 4
        assert slot.alpha == 8.0


def test_config_from_obj_partial_override() -> None:
    cfg = config_from_obj(
        {
            "judge": {"parallelism": 8, "model": "judge-x"},
            "backend": {"mode": "replay", "replay_path": "runs/replay.jsonl"},
        }
    )
    assert cfg.judge.parallelism == 8
    assert cfg.judge.model == "judge-x"
    assert cfg.backend.mode == "replay"
    assert cfg.paths.output_dir == "out"  # untouched sections keep defaults


def test_config_rejects_unknown_section() -> None:
    with pytest.raises(ConfigInvalid) as excinfo:
        config_from_obj({"judg": {"model": "x"}})
    assert "judg" in str(excinfo.value)


def test_config_rejects_unknown_key() -> None:
    with pytest.raises(ConfigInvalid) as excinfo:
        config_from_obj({"judge": {"modle": "x"}})
    assert "modle" in str(excinfo.value)


def test_config_rejects_non_object_root() -> None:
    with pytest.raises(ConfigInvalid):
        config_from_obj(["judge"])


@pytest.mark.parametrize(
    "obj",
    [
        {"judge": {"parallelism": 0}},
        {"judge": {"parallelism": 2.5}},
        {"judge": {"retry_cap": -1}},
        {"backend": {"mode": "carrier-pigeon"}},
        {"backend": {"mode": "http"}},  # http requires a url
        {"backend": {"mode": "replay"}},  # replay requires a path
        {"lora": {"rank": 4}},  # rank lives under a named slot
        {"lora": {"adapters": {"video": {"rank": 0}}}},
        {"lora": {"adapters": {"video": {"alpha": -1.0}}}},
        {"lora": {"adapters": {"audio": {"rank": 2}}}},  # no such slot
        {"lora": {"layout": "shared", "adapters": {"video": {"rank": 2}}}},
        {"lora": {"layout": "stacked"}},
        {"lora": {"steps": -5}},
        {"lora": {"batch_size": 0}},
    ],
)
def test_config_value_checks(obj: dict) -> None:
    with pytest.raises(ConfigInvalid):
        config_from_obj(obj)


def test_config_http_mode_with_url() -> None:
    cfg = config_from_obj({"backend": {"mode": "http", "url": "https://gen.invalid/v1"}})
    assert cfg.backend.url == "https://gen.invalid/v1"


def test_config_named_adapter_slots() -> None:
    cfg = config_from_obj(
        {"lora": {"adapters": {"video": {"rank": 2, "alpha": 4.0, "seed": 9}}}}
    )
    assert cfg.lora.slot("video").rank == 2
    assert cfg.lora.slot("video").seed == 9
    # untouched slots keep the defaults
    assert cfg.lora.slot("image").rank == 4
    assert cfg.lora.slot("text").alpha == 8.0
    with pytest.raises(ConfigInvalid):
        cfg.lora.slot("shared")


def test_config_shared_adapter_layout() -> None:
    cfg = config_from_obj({"lora": {"layout": "shared"}})
    assert set(cfg.lora.adapters) == {"shared"}
    assert cfg.lora.slot("shared").rank == 4
    with pytest.raises(ConfigInvalid):
        cfg.lora.slot("video")


def test_load_config_round_trip(tmp_path: Path) -> None:
    path = tmp_path / "cooktune.json"
    path.write_text(json.dumps({"judge": {"model": "judge-y"}}), encoding="utf-8")
    cfg = load_config(path)
    assert cfg.judge.model == "judge-y"


def test_load_config_missing_file(tmp_path: Path) -> None:
    with pytest.raises(FileUnreadable):
        load_config(tmp_path / "absent.json")


def test_load_config_invalid_json(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigInvalid):
        load_config(path)
