"""Parse YouCook2-style annotations and build the recipe eval set.

The annotation document maps video ids to entries carrying a recipe
type, a duration, and temporally bounded segments described by
imperative sentences. Ground truth for a video is its segment sentences
as a numbered step list; eval items pair that with a fixed question
asking for a step-by-step recipe with specific measurements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import EmptyResult, FileUnreadable, MalformedDocument
from .jsonio import read_jsonl, write_jsonl

EVAL_QUESTION = (
    "Can you give me a step-by-step recipe for the dish in this video, "
    "and include specific measurements for all of the ingredients?"
)


@dataclass(frozen=True)
class Segment:
    start_s: float
    end_s: float
    sentence: str


@dataclass(frozen=True)
class VideoAnnotation:
    video_id: str
    recipe_type: str
    duration_s: float
    segments: tuple[Segment, ...]


@dataclass(frozen=True)
class RejectedEntry:
    video_id: str
    reason: str


@dataclass(frozen=True)
class ParseResult:
    annotations: tuple[VideoAnnotation, ...]
    rejects: tuple[RejectedEntry, ...]


@dataclass(frozen=True)
class EvalItem:
    item_id: str
    video_id: str
    question: str
    ground_truth: str


def parse_annotations(annotation_file: str | Path) -> ParseResult:
    """Parse an annotation document into per-video annotations.

    Segments come back sorted ascending by start time. Malformed
    segments and malformed video entries land in the rejects list with a
    reason instead of being silently dropped. A top-level "database"
    wrapper, as in the published annotation file, is accepted.
    """
    try:
        text = Path(annotation_file).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"cannot read annotations {annotation_file}: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"annotations are not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise MalformedDocument("annotation document must be a JSON object keyed by video id")
    if isinstance(document.get("database"), dict):
        document = document["database"]

    annotations: list[VideoAnnotation] = []
    rejects: list[RejectedEntry] = []
    for video_id, entry in document.items():
        if not isinstance(entry, dict):
            rejects.append(RejectedEntry(video_id, "entry is not an object"))
            continue
        duration = entry.get("duration")
        if not isinstance(duration, (int, float)) or isinstance(duration, bool) or duration <= 0:
            rejects.append(RejectedEntry(video_id, "missing or non-positive duration"))
            continue
        recipe_type = entry.get("recipe_type")
        if recipe_type is None or (isinstance(recipe_type, str) and not recipe_type.strip()):
            rejects.append(RejectedEntry(video_id, "missing recipe_type"))
            continue
        raw_segments = entry.get("annotations")
        if not isinstance(raw_segments, list) or not raw_segments:
            rejects.append(RejectedEntry(video_id, "missing or empty annotations list"))
            continue

        segments: list[Segment] = []
        for index, raw in enumerate(raw_segments):
            problem = _segment_problem(raw, float(duration))
            if problem is not None:
                rejects.append(RejectedEntry(video_id, f"segment {index}: {problem}"))
                continue
            start, end = raw["segment"]
            segments.append(Segment(float(start), float(end), raw["sentence"].strip()))
        if not segments:
            rejects.append(RejectedEntry(video_id, "no valid segments remain"))
            continue
        segments.sort(key=lambda s: (s.start_s, s.end_s))
        annotations.append(
            VideoAnnotation(
                video_id=str(video_id),
                recipe_type=str(recipe_type),
                duration_s=float(duration),
                segments=tuple(segments),
            )
        )
    return ParseResult(tuple(annotations), tuple(rejects))


def _segment_problem(raw: object, duration: float) -> str | None:
    if not isinstance(raw, dict):
        return "not an object"
    bounds = raw.get("segment")
    if (
        not isinstance(bounds, (list, tuple))
        or len(bounds) != 2
        or not all(isinstance(b, (int, float)) and not isinstance(b, bool) for b in bounds)
    ):
        return "segment bounds must be two numbers"
    start, end = float(bounds[0]), float(bounds[1])
    if start < 0:
        return "negative start"
    if start >= end:
        return "start >= end"
    if end > duration:
        return "end exceeds video duration"
    sentence = raw.get("sentence")
    if not isinstance(sentence, str) or not sentence.strip():
        return "missing sentence"
    return None


def segments_to_ground_truth(annotation: VideoAnnotation) -> str:
    """Render segments as a numbered step list in temporal order."""
    ordered = sorted(annotation.segments, key=lambda s: (s.start_s, s.end_s))
    return "\n".join(f"{i + 1}. {seg.sentence}" for i, seg in enumerate(ordered))


def build_eval_items(
    annotations: Iterable[VideoAnnotation],
    available_video_ids: Iterable[str],
) -> list[EvalItem]:
    """One eval item per annotation whose video is actually available.

    Item ids are sequential decimal strings in annotation order, so equal
    inputs always produce byte-identical serialized output.
    """
    available = set(available_video_ids)
    items: list[EvalItem] = []
    for annotation in annotations:
        if annotation.video_id not in available:
            continue
        items.append(
            EvalItem(
                item_id=str(len(items)),
                video_id=annotation.video_id,
                question=EVAL_QUESTION,
                ground_truth=segments_to_ground_truth(annotation),
            )
        )
    if not items:
        raise EmptyResult("no annotation matches the available video ids")
    return items


def load_available_ids(path: str | Path) -> set[str]:
    """Availability set: newline-delimited id file, or a directory scan
    using file stems."""
    target = Path(path)
    if target.is_dir():
        return {entry.stem for entry in target.iterdir() if entry.is_file()}
    try:
        lines = target.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FileUnreadable(f"cannot read availability list {path}: {exc}") from exc
    return {line.strip() for line in lines if line.strip()}


def write_eval_items(items: Iterable[EvalItem], path: str | Path) -> None:
    rows = [
        {
            "item_id": item.item_id,
            "video_id": item.video_id,
            "question": item.question,
            "ground_truth": item.ground_truth,
        }
        for item in items
    ]
    write_jsonl(path, rows)


def read_eval_items(path: str | Path) -> list[EvalItem]:
    items = []
    for row in read_jsonl(path):
        try:
            items.append(
                EvalItem(
                    item_id=str(row["item_id"]),
                    video_id=str(row["video_id"]),
                    question=str(row["question"]),
                    ground_truth=str(row["ground_truth"]),
                )
            )
        except KeyError as exc:
            raise MalformedDocument(f"eval item row lacks key {exc}") from exc
    return items
