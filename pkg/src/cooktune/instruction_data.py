"""Build and validate the per-modality instruction datasets.

Three record shapes exist, one per modality. Image records pair a fixed
dish-identification prompt with a class name, video records pair a fixed
recipe-request prompt with a recipe text, and text records pair a general
cooking question with its answer. Serialized records keep the exact key
sets and field order of those shapes: {id, image, conversations},
{id, video, conversations}, and {id, model, conversations}.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    ClientError,
    CooktuneError,
    EmptyField,
    EmptyLabel,
    EmptyRecipe,
    FileUnreadable,
    GenerationExhausted,
    InvalidId,
    MalformedDocument,
    ZeroBaseline,
)
from .jsontext import iter_json_objects
from .rounding import round_ratio_percent

logger = logging.getLogger(__name__)

IMAGE_PROMPT = "What is the dish in this image?"
VIDEO_PROMPT = (
    "Can you give me a recipe from the provided videos and include "
    "specific measurements for each of the ingredients?"
)

QA_GENERATION_PROMPT = (
    "Write one general cooking question, not tied to any specific dish, "
    "together with a thorough answer. Respond with only a JSON object "
    'with keys "question" and "answer".'
)

MODALITIES = ("image", "video", "text")
SPEAKERS = ("human", "gpt")


@dataclass(frozen=True)
class ConversationTurn:
    speaker: str  # "human" or "gpt"
    text: str


@dataclass(frozen=True)
class InstructionRecord:
    record_id: str
    modality: str  # "image", "video", or "text"
    turns: tuple[ConversationTurn, ...]
    media_path: str | None = None
    model_tag: str | None = None


@dataclass(frozen=True)
class DatasetStats:
    record_count: int
    baseline_count: int
    ratio_percent: float

    @property
    def rendered(self) -> str:
        """Two-decimal percentage string, e.g. ``"23.76%"``."""
        return f"{self.ratio_percent:.2f}%"


@dataclass(frozen=True)
class DatasetViolation:
    kind: str
    record_id: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[DatasetViolation, ...] = field(default=())


def normalize_class_label(raw_label: str) -> str:
    """Turn a raw class label into a display name.

    Underscores become single spaces and every word is title-cased:
    "beef_wellington" -> "Beef Wellington". Raises EmptyLabel when
    nothing remains after trimming.
    """
    words = raw_label.replace("_", " ").split()
    if not words:
        raise EmptyLabel("class label is empty or whitespace-only")
    return " ".join(w[:1].upper() + w[1:].lower() for w in words)


def _require_id(record_id: str) -> None:
    if not record_id or not record_id.strip():
        raise InvalidId("record id is empty")


def build_image_record(
    record_id: str,
    image_path: str,
    raw_label: str,
    class_map: Mapping[str, str] | None = None,
) -> InstructionRecord:
    """Build one image record: fixed dish prompt, class name answer.

    When ``class_map`` contains ``raw_label``, the mapped name is used
    verbatim; otherwise the label goes through normalize_class_label.
    """
    _require_id(record_id)
    if not image_path or not image_path.strip():
        raise EmptyField("image path is empty")
    if class_map is not None and raw_label in class_map:
        name = class_map[raw_label].strip()
        if not name:
            raise EmptyLabel(f"class map entry for {raw_label!r} is empty")
    else:
        name = normalize_class_label(raw_label)
    return InstructionRecord(
        record_id=record_id,
        modality="image",
        media_path=image_path,
        turns=(
            ConversationTurn("human", IMAGE_PROMPT),
            ConversationTurn("gpt", name),
        ),
    )


def build_video_record(record_id: str, video_path: str, recipe_text: str) -> InstructionRecord:
    """Build one video record: fixed recipe prompt, recipe text answer."""
    _require_id(record_id)
    if not video_path or not video_path.strip():
        raise EmptyField("video path is empty")
    if not recipe_text or not recipe_text.strip():
        raise EmptyRecipe("recipe text is empty")
    return InstructionRecord(
        record_id=record_id,
        modality="video",
        media_path=video_path,
        turns=(
            ConversationTurn("human", VIDEO_PROMPT),
            ConversationTurn("gpt", recipe_text),
        ),
    )


def build_text_record(record_id: str, question: str, answer: str) -> InstructionRecord:
    """Build one text record; the serialized form carries ``"model": ""``."""
    _require_id(record_id)
    if not question or not question.strip():
        raise EmptyField("question is empty")
    if not answer or not answer.strip():
        raise EmptyField("answer is empty")
    return InstructionRecord(
        record_id=record_id,
        modality="text",
        model_tag="",
        turns=(
            ConversationTurn("human", question),
            ConversationTurn("gpt", answer),
        ),
    )


def _dedup_key(question: str) -> str:
    return " ".join(question.split()).casefold()


def _qa_messages(seed: int, attempt: int) -> list[dict]:
    content = f"{QA_GENERATION_PROMPT}\nVariation token: {seed}-{attempt}."
    return [{"role": "user", "content": content}]


def _extract_qa(raw: str) -> tuple[str, str] | None:
    for obj in iter_json_objects(raw):
        question = obj.get("question")
        answer = obj.get("answer")
        if isinstance(question, str) and isinstance(answer, str):
            if question.strip() and answer.strip():
                return question.strip(), answer.strip()
    return None


def generate_text_qa(
    target_count: int,
    llm,
    seed: int,
    *,
    model: str | None = None,
    temperature: float = 0.7,
    max_attempts: int | None = None,
    parallelism: int = 1,
) -> list[InstructionRecord]:
    """Generate ``target_count`` unique general-cooking QA text records.

    Questions are deduplicated case-insensitively after whitespace
    collapse, and ids are sequential decimal strings from "0". The
    attempt budget defaults to three calls per requested record; when it
    runs out first, GenerationExhausted is raised. Client calls run with
    bounded parallelism but results merge in attempt order, so equal
    clients and seeds yield equal datasets.
    """
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    budget = max_attempts if max_attempts is not None else max(3 * target_count, 8)

    def call(messages: list[dict]) -> str:
        try:
            return llm.complete(messages, model=model, temperature=temperature)
        except CooktuneError:
            raise
        except Exception as exc:
            raise ClientError(f"text client failed: {exc}") from exc

    seen: set[str] = set()
    pairs: list[tuple[str, str]] = []
    attempt = 0
    pool = ThreadPoolExecutor(max_workers=parallelism) if parallelism > 1 else None
    try:
        while attempt < budget and len(pairs) < target_count:
            chunk = min(parallelism, budget - attempt)
            batches = [_qa_messages(seed, attempt + k) for k in range(chunk)]
            if pool is None:
                replies = [call(m) for m in batches]
            else:
                replies = list(pool.map(call, batches))
            attempt += chunk
            for raw in replies:
                if len(pairs) >= target_count:
                    break
                extracted = _extract_qa(raw)
                if extracted is None:
                    logger.debug("discarding unparseable QA reply: %.80s", raw)
                    continue
                question, answer = extracted
                key = _dedup_key(question)
                if key in seen:
                    continue
                seen.add(key)
                pairs.append((question, answer))
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    if len(pairs) < target_count:
        raise GenerationExhausted(
            f"only {len(pairs)} unique questions after {attempt} attempts "
            f"(target {target_count})"
        )
    return [build_text_record(str(i), q, a) for i, (q, a) in enumerate(pairs)]


def validate_dataset(
    records: Sequence[InstructionRecord],
    check_files: bool = False,
    media_root: str | Path | None = None,
) -> ValidationReport:
    """Report every violation in a dataset; violations are data, not errors.

    Checked: duplicate ids, modality/field consistency, turn order
    (starts with human, alternates, ends with gpt), empty turn text, and,
    when ``check_files`` is set, existence of referenced media files
    resolved against ``media_root``.
    """
    violations: list[DatasetViolation] = []
    seen_ids: set[str] = set()
    root = Path(media_root) if media_root is not None else Path(".")
    for record in records:
        rid = record.record_id
        if rid in seen_ids:
            violations.append(DatasetViolation("DuplicateId", rid, "id appears more than once"))
        seen_ids.add(rid)

        if record.modality not in MODALITIES:
            violations.append(
                DatasetViolation("WrongModalityField", rid, f"unknown modality {record.modality!r}")
            )
        elif record.modality == "text":
            if record.media_path is not None:
                violations.append(
                    DatasetViolation("WrongModalityField", rid, "text record carries a media path")
                )
            if record.model_tag is None:
                violations.append(
                    DatasetViolation("WrongModalityField", rid, "text record lacks a model field")
                )
        else:
            if not record.media_path:
                violations.append(
                    DatasetViolation(
                        "WrongModalityField", rid, f"{record.modality} record lacks a media path"
                    )
                )
            if record.model_tag is not None:
                violations.append(
                    DatasetViolation(
                        "WrongModalityField", rid, f"{record.modality} record carries a model field"
                    )
                )

        if not _turns_well_ordered(record.turns):
            violations.append(
                DatasetViolation(
                    "TurnOrder", rid, "turns must start with human, alternate, and end with gpt"
                )
            )
        for turn in record.turns:
            if not turn.text or not turn.text.strip():
                violations.append(
                    DatasetViolation("EmptyText", rid, f"{turn.speaker} turn is empty")
                )

        if check_files and record.modality in ("image", "video") and record.media_path:
            candidate = Path(record.media_path)
            if not candidate.is_absolute():
                candidate = root / candidate
            if not candidate.is_file():
                violations.append(
                    DatasetViolation("MissingMediaFile", rid, f"{candidate} does not exist")
                )
    return ValidationReport(ok=not violations, violations=tuple(violations))


def _turns_well_ordered(turns: Sequence[ConversationTurn]) -> bool:
    if len(turns) < 2 or len(turns) % 2 != 0:
        return False
    for i, turn in enumerate(turns):
        expected = SPEAKERS[i % 2]
        if turn.speaker != expected:
            return False
    return True


def dataset_stats(record_count: int, baseline_count: int) -> DatasetStats:
    """Size of a corpus relative to a baseline, as a 2-decimal percentage."""
    if record_count < 0:
        raise ValueError("record_count must be >= 0")
    if baseline_count <= 0:
        raise ZeroBaseline("baseline_count must be positive")
    ratio = round_ratio_percent(record_count, baseline_count, 2)
    return DatasetStats(record_count, baseline_count, float(ratio))


# serialization


def record_to_obj(record: InstructionRecord) -> dict:
    obj: dict = {"id": record.record_id}
    if record.modality == "image":
        obj["image"] = record.media_path
    elif record.modality == "video":
        obj["video"] = record.media_path
    elif record.modality == "text":
        obj["model"] = record.model_tag if record.model_tag is not None else ""
    else:
        raise ValueError(f"unknown modality {record.modality!r}")
    obj["conversations"] = [{"from": t.speaker, "value": t.text} for t in record.turns]
    return obj


def record_from_obj(obj: dict) -> InstructionRecord:
    if not isinstance(obj, dict) or "id" not in obj or "conversations" not in obj:
        raise MalformedDocument("record object lacks id/conversations")
    media_keys = [k for k in ("image", "video") if k in obj]
    if len(media_keys) > 1:
        raise MalformedDocument(f"record {obj.get('id')!r} carries both image and video fields")
    if media_keys:
        modality = media_keys[0]
        media_path, model_tag = obj[modality], None
    elif "model" in obj:
        modality, media_path, model_tag = "text", None, obj["model"]
    else:
        raise MalformedDocument(f"record {obj.get('id')!r} has no modality field")
    turns = []
    conversations = obj["conversations"]
    if not isinstance(conversations, list):
        raise MalformedDocument(f"record {obj.get('id')!r} conversations is not a list")
    for entry in conversations:
        if not isinstance(entry, dict) or "from" not in entry or "value" not in entry:
            raise MalformedDocument(f"record {obj.get('id')!r} has a malformed turn")
        turns.append(ConversationTurn(str(entry["from"]), str(entry["value"])))
    return InstructionRecord(
        record_id=str(obj["id"]),
        modality=modality,
        media_path=media_path,
        model_tag=model_tag,
        turns=tuple(turns),
    )


def record_to_json(record: InstructionRecord) -> str:
    return json.dumps(record_to_obj(record), indent=2, ensure_ascii=False) + "\n"


def serialize_records(records: Sequence[InstructionRecord]) -> str:
    return json.dumps([record_to_obj(r) for r in records], indent=2, ensure_ascii=False) + "\n"


def parse_records(text: str) -> list[InstructionRecord]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"dataset is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise MalformedDocument("dataset must be a JSON array of records")
    return [record_from_obj(obj) for obj in data]


def save_records(records: Sequence[InstructionRecord], path: str | Path) -> None:
    Path(path).write_text(serialize_records(records), encoding="utf-8")


def load_records(path: str | Path) -> list[InstructionRecord]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"cannot read dataset {path}: {exc}") from exc
    return parse_records(text)


def load_class_map(path: str | Path) -> dict[str, str]:
    """Load the optional two-column ``label,name`` CSV override."""
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise FileUnreadable(f"cannot read class map {path}: {exc}") from exc
    mapping: dict[str, str] = {}
    for i, row in enumerate(rows):
        if not row:
            continue
        if i == 0 and [c.strip().lower() for c in row] == ["label", "name"]:
            continue
        if len(row) != 2:
            raise MalformedDocument(f"class map row {i + 1} must have exactly 2 columns")
        mapping[row[0].strip()] = row[1].strip()
    return mapping
