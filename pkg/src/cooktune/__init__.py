"""Cooking-domain instruction tuning toolkit.

Builds per-modality instruction datasets, constructs a video recipe
evaluation set from temporal annotations, runs pluggable generation
backends, scores predictions with a chat-model judge, probes generated
recipes for timestamp inconsistencies, and trains toy low-rank adapters
entirely in numpy.
"""

from __future__ import annotations

from .errors import CooktuneError
from .inference import HttpBackend, MockBackend, ReplayBackend, run_inference
from .instruction_data import (
    IMAGE_PROMPT,
    VIDEO_PROMPT,
    InstructionRecord,
    build_image_record,
    build_text_record,
    build_video_record,
    dataset_stats,
    generate_text_qa,
    validate_dataset,
)
from .judge import (
    JUDGE_SYSTEM_PROMPT,
    YES_THRESHOLD,
    aggregate,
    build_judge_messages,
    parse_verdict,
    render_report,
    score_item,
    threshold_pred,
)
from .lora import (
    LinearLayer,
    LoraAdapter,
    adapted_forward,
    init_adapter,
    load_adapter,
    merge_adapter,
    save_adapter,
    train_toy,
)
from .temporal import extract_timestamps, probe_backend, validate_claims
from .youcook2 import EVAL_QUESTION, build_eval_items, parse_annotations

__version__ = "0.1.0"

__all__ = [
    "CooktuneError",
    "EVAL_QUESTION",
    "HttpBackend",
    "IMAGE_PROMPT",
    "InstructionRecord",
    "JUDGE_SYSTEM_PROMPT",
    "LinearLayer",
    "LoraAdapter",
    "MockBackend",
    "ReplayBackend",
    "VIDEO_PROMPT",
    "YES_THRESHOLD",
    "adapted_forward",
    "aggregate",
    "build_eval_items",
    "build_image_record",
    "build_judge_messages",
    "build_text_record",
    "build_video_record",
    "dataset_stats",
    "extract_timestamps",
    "generate_text_qa",
    "init_adapter",
    "load_adapter",
    "merge_adapter",
    "parse_annotations",
    "parse_verdict",
    "probe_backend",
    "render_report",
    "run_inference",
    "save_adapter",
    "score_item",
    "threshold_pred",
    "train_toy",
    "validate_claims",
    "validate_dataset",
    "__version__",
]
