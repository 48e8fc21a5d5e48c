from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from cooktune.clients import MockQAClient
from cooktune.errors import (
    ClientError,
    EmptyField,
    EmptyLabel,
    EmptyRecipe,
    GenerationExhausted,
    InvalidId,
    MalformedDocument,
    ZeroBaseline,
)
from cooktune.instruction_data import (
    IMAGE_PROMPT,
    VIDEO_PROMPT,
    ConversationTurn,
    InstructionRecord,
    build_image_record,
    build_text_record,
    build_video_record,
    dataset_stats,
    generate_text_qa,
    load_class_map,
    load_records,
    normalize_class_label,
    parse_records,
    record_to_json,
    save_records,
    serialize_records,
    validate_dataset,
)

DATA = Path(__file__).parent / "data"


# --- label normalization ---


def test_normalize_replaces_underscores_and_title_cases() -> None:
    assert normalize_class_label("beef_wellington") == "Beef Wellington"
    assert normalize_class_label("PAD_THAI") == "Pad Thai"
    assert normalize_class_label("  miso  soup ") == "Miso Soup"


def test_normalize_single_word_and_digits() -> None:
    assert normalize_class_label("ramen") == "Ramen"
    assert normalize_class_label("7_layer_dip") == "7 Layer Dip"


def test_normalize_rejects_empty() -> None:
    with pytest.raises(EmptyLabel):
        normalize_class_label("   ")
    with pytest.raises(EmptyLabel):
        normalize_class_label("___")


# --- record builders ---


def test_image_record_shape() -> None:
    record = build_image_record("42", "dishes/42.jpg", "chicken_tikka")
    assert record.modality == "image"
    assert record.media_path == "dishes/42.jpg"
    assert record.turns[0] == ConversationTurn("human", IMAGE_PROMPT)
    assert record.turns[1] == ConversationTurn("gpt", "Chicken Tikka")


def test_image_record_class_map_wins_verbatim() -> None:
    record = build_image_record(
        "1", "a.jpg", "pho_bo", class_map={"pho_bo": "Phở bò (beef noodle soup)"}
    )
    assert record.turns[1].text == "Phở bò (beef noodle soup)"


def test_image_record_without_map_entry_falls_back() -> None:
    record = build_image_record("1", "a.jpg", "pho_bo", class_map={"other": "x"})
    assert record.turns[1].text == "Pho Bo"


def test_image_record_input_checks() -> None:
    with pytest.raises(InvalidId):
        build_image_record("", "a.jpg", "soup")
    with pytest.raises(EmptyField):
        build_image_record("1", "  ", "soup")
    with pytest.raises(EmptyLabel):
        build_image_record("1", "a.jpg", " ")


def test_video_record_shape_and_checks() -> None:
    record = build_video_record("7", "clips/7.mp4", "Boil 2 cups of water.")
    assert record.modality == "video"
    assert record.turns[0].text == VIDEO_PROMPT
    assert record.turns[1].text == "Boil 2 cups of water."
    with pytest.raises(EmptyRecipe):
        build_video_record("7", "clips/7.mp4", "   ")
    with pytest.raises(EmptyField):
        build_video_record("7", "", "Boil water.")


def test_text_record_carries_empty_model_tag() -> None:
    record = build_text_record("0", "How hot is a wok?", "Very hot, around 370C.")
    assert record.modality == "text"
    assert record.model_tag == ""
    assert record.media_path is None
    with pytest.raises(EmptyField):
        build_text_record("0", "", "answer")
    with pytest.raises(EmptyField):
        build_text_record("0", "question?", " ")


# --- text QA generation ---


class _ListClient:
    """Replies from a fixed list, cycling; tracks call count."""

    def __init__(self, replies: list[str]) -> None:
        self.replies = replies
        self.calls = 0

    def complete(self, messages, *, model=None, temperature=0.0, item_id=None) -> str:
        reply = self.replies[self.calls % len(self.replies)]
        self.calls += 1
        return reply


def _qa_reply(question: str, answer: str = "Stir well.") -> str:
    return json.dumps({"question": question, "answer": answer})


def test_generate_text_qa_sequential_ids_from_zero() -> None:
    client = MockQAClient(seed=3)
    records = generate_text_qa(5, client, seed=3)
    assert [r.record_id for r in records] == ["0", "1", "2", "3", "4"]
    assert all(r.modality == "text" for r in records)
    questions = [r.turns[0].text for r in records]
    assert len(set(questions)) == 5


def test_generate_text_qa_deterministic_across_parallelism() -> None:
    a = generate_text_qa(6, MockQAClient(seed=9), seed=9, parallelism=1)
    b = generate_text_qa(6, MockQAClient(seed=9), seed=9, parallelism=4)
    assert [(r.turns[0].text, r.turns[1].text) for r in a] == [
        (r.turns[0].text, r.turns[1].text) for r in b
    ]


def test_generate_text_qa_dedups_whitespace_and_case() -> None:
    client = _ListClient(
        [
            _qa_reply("How do I  boil eggs?"),
            _qa_reply("how do i boil EGGS?"),
            _qa_reply("What makes bread rise?"),
        ]
    )
    records = generate_text_qa(2, client, seed=0)
    assert records[0].turns[0].text == "How do I  boil eggs?"
    assert records[1].turns[0].text == "What makes bread rise?"


def test_generate_text_qa_skips_unparseable_replies() -> None:
    client = _ListClient(
        [
            "no json here",
            'leading text {"question": "Why rest meat?", "answer": "Juices settle."} trailing',
            _qa_reply("How fine to dice onions?"),
        ]
    )
    records = generate_text_qa(2, client, seed=1)
    assert records[0].turns[0].text == "Why rest meat?"
    assert records[0].turns[1].text == "Juices settle."


def test_generate_text_qa_exhausts_budget() -> None:
    client = _ListClient([_qa_reply("Same question?")])
    with pytest.raises(GenerationExhausted):
        generate_text_qa(3, client, seed=0, max_attempts=10)
    assert client.calls == 10


def test_generate_text_qa_wraps_client_exceptions() -> None:
    class Boom:
        def complete(self, messages, *, model=None, temperature=0.0, item_id=None) -> str:
            raise RuntimeError("socket closed")

    with pytest.raises(ClientError):
        generate_text_qa(1, Boom(), seed=0)


def test_generate_text_qa_rejects_bad_arguments() -> None:
    with pytest.raises(ValueError):
        generate_text_qa(0, MockQAClient(), seed=0)
    with pytest.raises(ValueError):
        generate_text_qa(1, MockQAClient(), seed=0, parallelism=0)


# --- validation ---


def _good_records() -> list[InstructionRecord]:
    return [
        build_image_record("0", "a.jpg", "soup"),
        build_video_record("1", "b.mp4", "Chop 1 onion."),
        build_text_record("2", "Why salt pasta water?", "It seasons from inside."),
    ]


def test_validate_clean_dataset() -> None:
    report = validate_dataset(_good_records())
    assert report.ok
    assert report.violations == ()


def test_validate_duplicate_ids() -> None:
    records = [
        build_image_record("0", "a.jpg", "soup"),
        build_image_record("0", "b.jpg", "stew"),
    ]
    report = validate_dataset(records)
    kinds = [v.kind for v in report.violations]
    assert kinds == ["DuplicateId"]


def test_validate_turn_order_and_empty_text() -> None:
    bad_order = InstructionRecord(
        record_id="5",
        modality="text",
        model_tag="",
        turns=(ConversationTurn("gpt", "answer first"), ConversationTurn("human", "q")),
    )
    empty_text = InstructionRecord(
        record_id="6",
        modality="text",
        model_tag="",
        turns=(ConversationTurn("human", "q?"), ConversationTurn("gpt", "  ")),
    )
    report = validate_dataset([bad_order, empty_text])
    kinds = sorted(v.kind for v in report.violations)
    assert kinds == ["EmptyText", "TurnOrder"]


def test_validate_odd_turn_count_flagged() -> None:
    record = InstructionRecord(
        record_id="7",
        modality="text",
        model_tag="",
        turns=(ConversationTurn("human", "q?"),),
    )
    report = validate_dataset([record])
    assert [v.kind for v in report.violations] == ["TurnOrder"]


def test_validate_modality_field_consistency() -> None:
    text_with_media = InstructionRecord(
        record_id="8",
        modality="text",
        model_tag="",
        media_path="oops.jpg",
        turns=(ConversationTurn("human", "q?"), ConversationTurn("gpt", "a")),
    )
    image_with_model = InstructionRecord(
        record_id="9",
        modality="image",
        media_path="a.jpg",
        model_tag="",
        turns=(ConversationTurn("human", "q?"), ConversationTurn("gpt", "a")),
    )
    report = validate_dataset([text_with_media, image_with_model])
    assert [v.kind for v in report.violations] == [
        "WrongModalityField",
        "WrongModalityField",
    ]


def test_validate_missing_media_files(tmp_path: Path) -> None:
    (tmp_path / "real.jpg").write_bytes(b"\xff\xd8fake")
    records = [
        build_image_record("0", "real.jpg", "soup"),
        build_image_record("1", "gone.jpg", "stew"),
    ]
    report = validate_dataset(records, check_files=True, media_root=tmp_path)
    assert [v.kind for v in report.violations] == ["MissingMediaFile"]
    assert report.violations[0].record_id == "1"


def test_validate_without_file_checks_ignores_paths() -> None:
    records = [build_image_record("0", "nowhere/x.jpg", "soup")]
    assert validate_dataset(records).ok


# --- stats ---


def test_dataset_stats_table_values() -> None:
    assert dataset_stats(158000, 665000).rendered == "23.76%"
    assert dataset_stats(2511, 100000).rendered == "2.51%"


def test_dataset_stats_errors() -> None:
    with pytest.raises(ZeroBaseline):
        dataset_stats(10, 0)
    with pytest.raises(ValueError):
        dataset_stats(-1, 10)


# --- serialization ---


def test_golden_image_record() -> None:
    record = build_image_record(
        "1234567890", "file_name.jpg", "dish", class_map={"dish": "<Dish name>"}
    )
    golden = (DATA / "golden" / "image_record.json").read_text(encoding="utf-8")
    assert record_to_json(record) == golden


def test_golden_video_record() -> None:
    record = build_video_record("0", "video_name.mp4", "<The recipe of the given video.>")
    golden = (DATA / "golden" / "video_record.json").read_text(encoding="utf-8")
    assert record_to_json(record) == golden


def test_golden_text_record() -> None:
    record = build_text_record(
        "0",
        "What is the best way to cook a juicy steak?",
        "The best way to cook a juicy steak is to start by seasoning the steak "
        "with salt and pepper and allowing it to come to room temperature. "
        "Preheat a cast iron skillet over high heat and ...",
    )
    golden = (DATA / "golden" / "text_record.json").read_text(encoding="utf-8")
    assert record_to_json(record) == golden


def test_round_trip_many_random_records() -> None:
    rng = random.Random(1337)
    labels = ["miso_soup", "pad_thai", "beef_stew", "corn_chowder"]
    records: list[InstructionRecord] = []
    for i in range(40):
        kind = rng.choice(["image", "video", "text"])
        if kind == "image":
            records.append(build_image_record(str(i), f"img/{i}.jpg", rng.choice(labels)))
        elif kind == "video":
            records.append(build_video_record(str(i), f"vid/{i}.mp4", f"Stir {i} times."))
        else:
            records.append(build_text_record(str(i), f"Question {i}?", f"Answer {i}."))
    text = serialize_records(records)
    assert parse_records(text) == records


def test_save_and_load_records(tmp_path: Path) -> None:
    records = _good_records()
    target = tmp_path / "records.json"
    save_records(records, target)
    assert load_records(target) == records


def test_parse_records_rejects_non_arrays() -> None:
    with pytest.raises(MalformedDocument):
        parse_records('{"id": "0"}')
    with pytest.raises(MalformedDocument):
        parse_records("not json at all")


def test_parse_records_rejects_ambiguous_modality() -> None:
    both = json.dumps(
        [
            {
                "id": "0",
                "image": "a.jpg",
                "video": "b.mp4",
                "conversations": [
                    {"from": "human", "value": "q"},
                    {"from": "gpt", "value": "a"},
                ],
            }
        ]
    )
    with pytest.raises(MalformedDocument):
        parse_records(both)
    neither = json.dumps([{"id": "0", "conversations": []}])
    with pytest.raises(MalformedDocument):
        parse_records(neither)


def test_serialized_key_order_is_stable() -> None:
    obj = json.loads(record_to_json(build_image_record("3", "x.jpg", "soup")))
    assert list(obj.keys()) == ["id", "image", "conversations"]
    obj = json.loads(
        record_to_json(build_text_record("3", "Why knead dough?", "Gluten structure."))
    )
    assert list(obj.keys()) == ["id", "model", "conversations"]


# --- class map loading ---


def test_load_class_map(tmp_path: Path) -> None:
    target = tmp_path / "names.csv"
    target.write_text("label,name\npho_bo,Pho Bo Soup\nmac_cheese,Mac and Cheese\n")
    mapping = load_class_map(target)
    assert mapping == {"pho_bo": "Pho Bo Soup", "mac_cheese": "Mac and Cheese"}


def test_load_class_map_without_header(tmp_path: Path) -> None:
    target = tmp_path / "names.csv"
    target.write_text("pho_bo,Pho Bo Soup\n")
    assert load_class_map(target) == {"pho_bo": "Pho Bo Soup"}


def test_load_class_map_enforces_two_columns(tmp_path: Path) -> None:
    target = tmp_path / "names.csv"
    target.write_text("a,b,c\n")
    with pytest.raises(MalformedDocument):
        load_class_map(target)
