"""LLM-judge scoring of generated recipes and Table-style reporting.

The judge receives a fixed system prompt and a user message carrying
the question, the reference recipe, and the prediction, and is asked
for a 1-5 score. A score of 3.5 or above counts as a yes verdict.
Accuracy renders half-up at three decimals and the average score at
four; the exact unrounded values come from integer arithmetic over the
verdict counts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Callable, Sequence

from .clients import ChatClient
from .errors import (
    ClientError,
    EmptyEvaluation,
    EmptyPrediction,
    JudgeUnreachable,
    UnparseableVerdict,
)
from .jsontext import iter_json_objects
from .rounding import round_ratio_percent, round_value
from .youcook2 import EvalItem

logger = logging.getLogger(__name__)

YES_THRESHOLD = 3.5

JUDGE_SYSTEM_PROMPT = (
    "You are an intelligent chatbot designed for evaluating the correctness "
    "of generative outputs for question-answer pairs. "
    "Your task is to compare the predicted answer with the correct answer "
    "and determine if they match meaningfully. Here's how you can accomplish "
    "the task:"
    "-----"
    "##INSTRUCTIONS: "
    "- Focus on the meaningful match between the predicted answer and the "
    "correct answer.\n"
    "- Consider synonyms or paraphrases as valid matches.\n"
    "- Evaluate the correctness of the prediction compared to the answer."
    "- Consider the similarity between ingredient lists and measurements."
)

JUDGE_USER_TEMPLATE = (
    "Please evaluate the following video-based question-answer pair:\n"
    "\n"
    "Question: {question}\n"
    "Correct Answer: {answer}\n"
    "Predicted Answer: {prediction}\n"
    "\n"
    "Provide your evaluation as a JSON object with a \"score\" key holding a "
    "number from 1 to 5 and a \"pred\" key holding \"yes\" or \"no\". "
    "Respond with only the JSON object."
)


@dataclass(frozen=True)
class JudgeVerdict:
    item_id: str
    score: float
    pred: str  # "yes" or "no"
    raw: str


@dataclass(frozen=True)
class EvalReport:
    yes_count: int
    no_count: int
    accuracy_percent: float  # half-up, 3 decimals
    average_score: float  # half-up, 4 decimals

    @property
    def total(self) -> int:
        return self.yes_count + self.no_count

    @property
    def accuracy_rendered(self) -> str:
        return f"{self.accuracy_percent:.3f}%"

    @property
    def average_rendered(self) -> str:
        return f"{self.average_score:.4f}"


@dataclass(frozen=True)
class ReportDoc:
    markdown: str
    data: dict


def threshold_pred(score: float) -> str:
    return "yes" if score >= YES_THRESHOLD else "no"


def build_judge_messages(item: EvalItem, prediction: str) -> list[dict]:
    """System prompt plus one user message carrying the QA pair."""
    if not prediction or not prediction.strip():
        raise EmptyPrediction(f"prediction for item '{item.item_id}' is empty")
    user = JUDGE_USER_TEMPLATE.format(
        question=item.question, answer=item.ground_truth, prediction=prediction
    )
    return [
        {"role": "system", "content": JUDGE_SYSTEM_PROMPT},
        {"role": "user", "content": user},
    ]


_NUMBER_RE = re.compile(r"(?<![-\w.])(\d+(?:\.\d+)?)(?![\w.])")


def parse_verdict(raw: str) -> tuple[float, str]:
    """Extract (score, pred) from a judge reply.

    The first JSON object with a numeric "score" wins; an explicit
    "pred" must agree with the threshold rule. Without such an object,
    the first standalone number in [1, 5] is taken as the score.
    """
    for obj in iter_json_objects(raw):
        score_value = obj.get("score")
        if isinstance(score_value, bool) or not isinstance(score_value, (int, float)):
            continue
        score = float(score_value)
        if not 1.0 <= score <= 5.0:
            raise UnparseableVerdict(f"score {score} outside [1, 5]", raw=raw)
        pred_value = obj.get("pred")
        if pred_value is not None:
            if not isinstance(pred_value, str) or pred_value.strip().lower() not in ("yes", "no"):
                raise UnparseableVerdict(f"pred {pred_value!r} is not yes/no", raw=raw)
            if pred_value.strip().lower() != threshold_pred(score):
                raise UnparseableVerdict(
                    f"pred {pred_value!r} contradicts score {score}", raw=raw
                )
        return score, threshold_pred(score)
    for match in _NUMBER_RE.finditer(raw):
        value = float(match.group(1))
        if 1.0 <= value <= 5.0:
            return value, threshold_pred(value)
    raise UnparseableVerdict("no usable score in judge reply", raw=raw)


def _cache_key(item_id: str, model: str, messages: list[dict]) -> str:
    digest = hashlib.sha256()
    digest.update(item_id.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(model.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(json.dumps(messages, sort_keys=True, ensure_ascii=False).encode("utf-8"))
    return digest.hexdigest()


def score_item(
    judge_client: ChatClient,
    item: EvalItem,
    prediction: str,
    *,
    model: str = "gpt-3.5-turbo",
    temperature: float = 0.0,
    cache_dir: str | Path | None = None,
    retry_cap: int = 3,
    retry_base_s: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> JudgeVerdict:
    """Score one prediction, with retries and a content-addressed cache.

    Transport errors retry with exponential backoff up to retry_cap
    attempts, then raise JudgeUnreachable. A cache hit returns the
    stored verdict without any client call. Unparseable replies are not
    retried; the raw reply rides along in the exception.
    """
    messages = build_judge_messages(item, prediction)
    cache_file = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / f"{_cache_key(item.item_id, model, messages)}.json"
        cached = _read_cached(cache_file)
        if cached is not None:
            return cached

    raw = None
    last_error: Exception | None = None
    for attempt in range(retry_cap):
        try:
            raw = judge_client.complete(
                messages, model=model, temperature=temperature, item_id=item.item_id
            )
            break
        except ClientError as exc:
            last_error = exc
            if attempt + 1 < retry_cap:
                delay = retry_base_s * (2**attempt)
                logger.debug("judge attempt %d failed (%s); retrying in %.2fs", attempt + 1, exc, delay)
                sleep(delay)
    if raw is None:
        raise JudgeUnreachable(f"judge failed after {retry_cap} attempts: {last_error}")

    score, pred = parse_verdict(raw)
    verdict = JudgeVerdict(item_id=item.item_id, score=score, pred=pred, raw=raw)
    if cache_file is not None:
        _write_cached(cache_file, verdict)
    return verdict


def _read_cached(cache_file: Path) -> JudgeVerdict | None:
    if not cache_file.is_file():
        return None
    try:
        obj = json.loads(cache_file.read_text(encoding="utf-8"))
        return JudgeVerdict(
            item_id=str(obj["item_id"]),
            score=float(obj["score"]),
            pred=str(obj["pred"]),
            raw=str(obj["raw"]),
        )
    except (OSError, ValueError, KeyError):
        logger.warning("ignoring unreadable cache entry %s", cache_file)
        return None


def _write_cached(cache_file: Path, verdict: JudgeVerdict) -> None:
    cache_file.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(
        {
            "item_id": verdict.item_id,
            "score": verdict.score,
            "pred": verdict.pred,
            "raw": verdict.raw,
        },
        ensure_ascii=False,
    )
    # Atomic per key: concurrent writers of distinct keys never collide,
    # and same-key writers race benignly to identical content.
    temp = cache_file.with_suffix(f".tmp{os.getpid()}")
    temp.write_text(payload, encoding="utf-8")
    os.replace(temp, cache_file)


def aggregate(verdicts: Sequence[JudgeVerdict]) -> EvalReport:
    """Counts, accuracy, and mean score over a verdict set."""
    if not verdicts:
        raise EmptyEvaluation("no verdicts to aggregate")
    yes_count = sum(1 for v in verdicts if v.pred == "yes")
    no_count = len(verdicts) - yes_count
    accuracy = round_ratio_percent(yes_count, len(verdicts), 3)
    mean = sum(Decimal(repr(v.score)) for v in verdicts) / Decimal(len(verdicts))
    average = round_value(float(mean), 4)
    return EvalReport(
        yes_count=yes_count,
        no_count=no_count,
        accuracy_percent=float(accuracy),
        average_score=float(average),
    )


ROUNDING_NOTE = (
    "Accuracy is the share of yes verdicts rounded half-up to three decimals; "
    "the average score is rounded half-up to four decimals."
)

# The 183/408 split is widely quoted at 44.852%, which is a truncation
# of 44.85294...%; half-up rendering gives 44.853%. When a report
# reproduces that exact split, its footer points out the difference.
TRUNCATION_FLAG = (
    "Note: 183 of 408 is 44.85294...%, rendered here as 44.853% (half-up); "
    "a renderer that truncates instead prints 44.852%."
)


def render_report(
    fine_tuned: EvalReport,
    baseline: EvalReport | None = None,
    labels: tuple[str, str] = ("Fine-Tuned", "Baseline"),
) -> ReportDoc:
    """Markdown table (rows: Yes Count, No Count, Accuracy, Average Score)
    plus a JSON document carrying the identical numbers."""
    reports = [(labels[0], fine_tuned)]
    if baseline is not None:
        reports.append((labels[1], baseline))

    header = "| Metric | " + " | ".join(label for label, _ in reports) + " |"
    divider = "| --- |" + " --- |" * len(reports)
    rows = [
        "| Yes Count | " + " | ".join(str(r.yes_count) for _, r in reports) + " |",
        "| No Count | " + " | ".join(str(r.no_count) for _, r in reports) + " |",
        "| Accuracy | " + " | ".join(r.accuracy_rendered for _, r in reports) + " |",
        "| Average Score | " + " | ".join(r.average_rendered for _, r in reports) + " |",
    ]
    footer = [ROUNDING_NOTE]
    if any((r.yes_count, r.no_count) == (183, 225) for _, r in reports):
        footer.append(TRUNCATION_FLAG)
    markdown = "\n".join([header, divider, *rows]) + "\n\n" + "\n".join(footer) + "\n"

    data = {
        "columns": [
            {
                "label": label,
                "yes_count": r.yes_count,
                "no_count": r.no_count,
                "accuracy_percent": r.accuracy_percent,
                "average_score": r.average_score,
            }
            for label, r in reports
        ],
        "rounding": ROUNDING_NOTE,
        "notes": footer[1:],
    }
    return ReportDoc(markdown=markdown, data=data)
