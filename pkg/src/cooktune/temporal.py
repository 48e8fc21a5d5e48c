"""Timestamp claim extraction and consistency checking.

Generated recipe text often places steps at video timestamps. This
module pulls those claims out (clock forms like 1:02:30 or 2:30, spoken
forms like "90 seconds" or "3 minutes", and "from X to Y" ranges) and
checks them against the video for four failure classes: claims past the
end of the video, overlapping claims for distinct steps, identical
intervals for distinct steps, and step starts that go backwards.
"""

from __future__ import annotations

import itertools
import logging
import re
from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

from .errors import CooktuneError, EmptyInput, MalformedDocument, NonPositiveDuration
from .inference import Backend, GenerationRequest, generate
from .youcook2 import EvalItem

logger = logging.getLogger(__name__)

TIMESTAMP_PROMPT_TEMPLATE = (
    "At what timestamp in the video does step {step_number} — "
    "'{step_text}' — occur?"
)

VIOLATION_KINDS = ("ExceedsDuration", "Overlap", "IdenticalSequential", "NonMonotonic")

_TOTAL_KEYS = {
    "ExceedsDuration": "exceeds",
    "Overlap": "overlap",
    "IdenticalSequential": "identical",
    "NonMonotonic": "nonmonotonic",
}

_CLOCK = r"(?:\d+:)?\d{1,2}:\d{2}(?!\d)"
_SPOKEN = r"\d+(?:\.\d+)?\s*(?:seconds?|secs?|minutes?|mins?)\b"
_TIME = rf"(?:{_CLOCK}|{_SPOKEN})"
_RANGE_RE = re.compile(rf"\bfrom\s+({_TIME})\s+to\s+({_TIME})", re.IGNORECASE)
_SINGLE_RE = re.compile(rf"\b({_TIME})", re.IGNORECASE)
_SPOKEN_PARTS_RE = re.compile(r"(\d+(?:\.\d+)?)\s*([a-z]+)", re.IGNORECASE)


@dataclass(frozen=True)
class TimestampClaim:
    step_index: int
    start_s: float
    end_s: float | None
    source_span: str


@dataclass(frozen=True)
class Violation:
    kind: str
    claims: tuple[TimestampClaim, ...]
    detail: str


@dataclass(frozen=True)
class ItemProbe:
    item_id: str
    video_id: str
    claims: tuple[TimestampClaim, ...]
    violations: tuple[Violation, ...]
    error: str | None = None


@dataclass(frozen=True)
class ProbeReport:
    items: tuple[ItemProbe, ...]
    totals: dict[str, int]
    flagged_fraction: float

    def to_json_obj(self) -> dict:
        return {
            "per_item": [
                {
                    "item_id": item.item_id,
                    "video_id": item.video_id,
                    "claims": [
                        {
                            "step_index": c.step_index,
                            "start_s": c.start_s,
                            "end_s": c.end_s,
                            "source_span": c.source_span,
                        }
                        for c in item.claims
                    ],
                    "violations": [
                        {
                            "kind": v.kind,
                            "detail": v.detail,
                            "steps": [c.step_index for c in v.claims],
                        }
                        for v in item.violations
                    ],
                    "error": item.error,
                }
                for item in self.items
            ],
            "totals": {_TOTAL_KEYS[kind]: self.totals[kind] for kind in VIOLATION_KINDS},
            "flagged_fraction": self.flagged_fraction,
        }


def _parse_time(expr: str) -> float:
    expr = expr.strip().lower()
    if ":" in expr:
        parts = [int(p) for p in expr.split(":")]
        if len(parts) == 3:
            hours, minutes, seconds = parts
            return float(hours * 3600 + minutes * 60 + seconds)
        minutes, seconds = parts
        return float(minutes * 60 + seconds)
    match = _SPOKEN_PARTS_RE.match(expr)
    assert match is not None  # expr came from _SPOKEN
    value, unit = float(match.group(1)), match.group(2)
    return value * 60.0 if unit.startswith("min") else value


def extract_timestamps(text: str) -> list[TimestampClaim]:
    """All timestamp claims in the text, numbered in order of appearance.

    A "from X to Y" range yields a single claim with both endpoints;
    other matches yield point claims. Total on arbitrary text.
    """
    found: list[tuple[int, str, float, float | None]] = []
    taken: list[tuple[int, int]] = []
    for match in _RANGE_RE.finditer(text):
        taken.append(match.span())
        found.append(
            (match.start(), match.group(0), _parse_time(match.group(1)), _parse_time(match.group(2)))
        )
    for match in _SINGLE_RE.finditer(text):
        if any(lo <= match.start() < hi for lo, hi in taken):
            continue
        found.append((match.start(), match.group(0), _parse_time(match.group(1)), None))
    found.sort(key=lambda entry: entry[0])
    return [
        TimestampClaim(step_index=i + 1, start_s=start, end_s=end, source_span=span)
        for i, (_, span, start, end) in enumerate(found)
    ]


def _interval(claim: TimestampClaim) -> tuple[float, float]:
    return claim.start_s, claim.end_s if claim.end_s is not None else claim.start_s


def validate_claims(
    claims: Sequence[TimestampClaim], video_duration_s: float
) -> list[Violation]:
    """Check a claim sequence against the four failure classes.

    Touching intervals do not overlap, identical intervals report as
    IdenticalSequential rather than Overlap, and NonMonotonic flags a
    claim whose start precedes the previous claim's start.
    """
    if video_duration_s <= 0:
        raise NonPositiveDuration(f"duration must be positive, got {video_duration_s}")
    violations: list[Violation] = []

    for claim in claims:
        _, high = _interval(claim)
        if claim.start_s > video_duration_s or high > video_duration_s:
            violations.append(
                Violation(
                    "ExceedsDuration",
                    (claim,),
                    f"step {claim.step_index} claims up to {high:g}s "
                    f"but the video is {video_duration_s:g}s long",
                )
            )

    for first, second in itertools.combinations(claims, 2):
        if first.step_index == second.step_index:
            continue
        lo_a, hi_a = _interval(first)
        lo_b, hi_b = _interval(second)
        if (lo_a, hi_a) == (lo_b, hi_b):
            violations.append(
                Violation(
                    "IdenticalSequential",
                    (first, second),
                    f"steps {first.step_index} and {second.step_index} claim "
                    f"the identical interval [{lo_a:g}, {hi_a:g}]",
                )
            )
        elif max(lo_a, lo_b) < min(hi_a, hi_b):
            violations.append(
                Violation(
                    "Overlap",
                    (first, second),
                    f"steps {first.step_index} and {second.step_index} claim "
                    f"overlapping intervals",
                )
            )

    previous: TimestampClaim | None = None
    for claim in claims:
        if previous is not None and claim.start_s < previous.start_s:
            violations.append(
                Violation(
                    "NonMonotonic",
                    (claim,),
                    f"step {claim.step_index} starts at {claim.start_s:g}s, "
                    f"before step {previous.step_index} at {previous.start_s:g}s",
                )
            )
        previous = claim
    return violations


_STEP_LINE_RE = re.compile(r"\s*(\d+)[.)]\s+(.*\S)")


def _ground_truth_steps(ground_truth: str) -> list[tuple[int, str]]:
    steps = []
    for line in ground_truth.splitlines():
        match = _STEP_LINE_RE.fullmatch(line)
        if match:
            steps.append((int(match.group(1)), match.group(2)))
    if not steps:
        steps = [
            (i + 1, line.strip())
            for i, line in enumerate(ground_truth.splitlines())
            if line.strip()
        ]
    return steps


def _probe_one(
    backend: Backend,
    item: EvalItem,
    duration_s: float,
    media_resolver: Callable[[str], str] | None,
) -> ItemProbe:
    media_ref = media_resolver(item.video_id) if media_resolver else item.video_id
    claims: list[TimestampClaim] = []
    for step_number, step_text in _ground_truth_steps(item.ground_truth):
        request = GenerationRequest(
            item_id=f"{item.item_id}::step{step_number}",
            prompt=TIMESTAMP_PROMPT_TEMPLATE.format(
                step_number=step_number, step_text=step_text
            ),
            media_kind="video",
            media_ref=media_ref,
        )
        try:
            reply = generate(backend, request).text
        except CooktuneError as exc:
            logger.warning("probe failed on %s: %s", request.item_id, exc)
            return ItemProbe(
                item.item_id, item.video_id, (), (), error=f"{type(exc).__name__}: {exc}"
            )
        extracted = extract_timestamps(reply)
        if extracted:
            claims.append(replace(extracted[0], step_index=step_number))
    violations = validate_claims(claims, duration_s)
    return ItemProbe(item.item_id, item.video_id, tuple(claims), tuple(violations))


def probe_backend(
    backend: Backend,
    items: Sequence[EvalItem],
    durations: Mapping[str, float],
    *,
    parallelism: int = 4,
    media_resolver: Callable[[str], str] | None = None,
) -> ProbeReport:
    """Ask the backend where each step occurs and validate the answers.

    One query per ground-truth step, using the fixed prompt template;
    the first timestamp claim in each reply becomes that step's claim.
    Backend failures become per-item error rows. Replay files for probe
    runs key responses by "<item_id>::step<k>".
    """
    if not items:
        raise EmptyInput("no items to probe")
    missing = sorted({item.video_id for item in items} - set(durations))
    if missing:
        raise MalformedDocument(f"durations lack entries for video ids: {', '.join(missing)}")

    workers = max(1, min(parallelism, len(items)))
    if backend.max_parallelism is not None:
        workers = min(workers, backend.max_parallelism)
    if workers == 1:
        probes = [
            _probe_one(backend, item, float(durations[item.video_id]), media_resolver)
            for item in items
        ]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            probes = list(
                pool.map(
                    lambda item: _probe_one(
                        backend, item, float(durations[item.video_id]), media_resolver
                    ),
                    items,
                )
            )

    totals: Counter[str] = Counter()
    flagged = 0
    errored = 0
    for probe in probes:
        if probe.error is not None:
            errored += 1
            continue
        totals.update(v.kind for v in probe.violations)
        if probe.violations:
            flagged += 1
    probed_ok = len(items) - errored
    fraction = flagged / probed_ok if probed_ok else 0.0
    report_totals = {kind: totals.get(kind, 0) for kind in VIOLATION_KINDS}
    return ProbeReport(items=tuple(probes), totals=report_totals, flagged_fraction=fraction)
