"""Command line front end for the cooking instruction-tuning pipeline.

Subcommands cover dataset construction (build-image, build-video,
gen-questions, validate, stats), evaluation set construction
(build-eval), the inference/judging loop (infer, judge, report), the
timestamp-consistency probe (probe-temporal), and a self-contained
low-rank adaptation demo (lora-demo).

Exit status: 0 success, 1 validation failure, 2 configuration error,
3 partial or failed run. Secrets never live in the config file; the
judge key comes from JUDGE_API_KEY and the backend token from
BACKEND_AUTH_TOKEN.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping, Sequence

from .clients import ChatClient, MockQAClient, OpenAICompatClient, ScriptedJudge
from .config import PipelineConfig, default_config, load_config
from .errors import (
    ConfigInvalid,
    CooktuneError,
    EmptyBatch,
    EmptyEvaluation,
    EmptyField,
    EmptyInput,
    EmptyLabel,
    EmptyPrediction,
    EmptyRecipe,
    EmptyResult,
    FileUnreadable,
    InvalidId,
    MalformedDocument,
    NonPositiveDuration,
    OutputUnwritable,
    RankTooLarge,
    ShapeMismatch,
    ZeroBaseline,
)
from .inference import Backend, HttpBackend, MockBackend, ReplayBackend, run_inference
from .instruction_data import (
    build_image_record,
    build_video_record,
    dataset_stats,
    generate_text_qa,
    load_class_map,
    load_records,
    save_records,
    validate_dataset,
)
from .jsonio import read_json, read_jsonl, write_json, write_jsonl
from .judge import JudgeVerdict, aggregate, render_report, score_item
from .lora import (
    ToyTrainConfig,
    init_adapter,
    make_rank_one_task,
    parameter_counts,
    save_adapter,
    train_toy,
)
from .temporal import probe_backend
from .youcook2 import (
    build_eval_items,
    load_available_ids,
    parse_annotations,
    read_eval_items,
    write_eval_items,
)

logger = logging.getLogger(__name__)

_CONFIG_ERRORS = (
    ConfigInvalid,
    FileUnreadable,
    MalformedDocument,
    OutputUnwritable,
    RankTooLarge,
    ShapeMismatch,
    ZeroBaseline,
    NonPositiveDuration,
)
_VALIDATION_ERRORS = (
    EmptyEvaluation,
    EmptyInput,
    EmptyResult,
    EmptyBatch,
    EmptyPrediction,
    EmptyLabel,
    EmptyRecipe,
    EmptyField,
    InvalidId,
)
# Remaining CooktuneError subtypes (backend failures, judge transport
# errors, exhausted generation, diverged training) signal partial or
# failed runs and map to status 3 in dispatch.


def _fail(exc: Exception) -> None:
    print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)


def _plan(command: str, details: Mapping[str, object]) -> None:
    print(f"{command} plan (dry run):")
    for key, value in details.items():
        print(f"  {key}: {value}")


def _make_backend(cfg: PipelineConfig) -> Backend:
    mode = cfg.backend.mode
    if mode == "mock":
        return MockBackend(template=cfg.backend.template)
    if mode == "replay":
        return ReplayBackend(cfg.backend.replay_path)
    return HttpBackend(cfg.backend.url)


def _make_judge_client(cfg: PipelineConfig) -> ChatClient:
    if cfg.judge.script_path:
        return ScriptedJudge.from_file(cfg.judge.script_path)
    return OpenAICompatClient(endpoint=cfg.judge.endpoint, default_model=cfg.judge.model)


def _cmd_build_image(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    if args.dry_run:
        _plan(
            "build-image",
            {
                "input csv": args.input,
                "class map": args.class_map or "(none)",
                "output": args.out,
            },
        )
        return 0
    class_map = load_class_map(args.class_map) if args.class_map else None
    try:
        with open(args.input, "r", encoding="utf-8", newline="") as handle:
            rows = [row for row in csv.reader(handle) if row]
    except OSError as exc:
        raise FileUnreadable(f"cannot read {args.input}: {exc}") from exc
    if rows and [cell.strip().lower() for cell in rows[0]] == ["id", "image", "label"]:
        rows = rows[1:]
    records = []
    for line_no, row in enumerate(rows, start=1):
        if len(row) != 3:
            raise MalformedDocument(
                f"{args.input}: row {line_no} has {len(row)} columns, expected id,image,label"
            )
        records.append(build_image_record(row[0], row[1], row[2], class_map=class_map))
    save_records(records, args.out)
    print(f"wrote {len(records)} image records to {args.out}")
    return 0


def _cmd_build_video(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    if args.dry_run:
        _plan("build-video", {"input json": args.input, "output": args.out})
        return 0
    raw = read_json(args.input)
    if not isinstance(raw, list):
        raise MalformedDocument(f"{args.input}: expected a JSON array of objects")
    records = []
    for index, entry in enumerate(raw):
        if not isinstance(entry, dict) or not {"id", "video", "recipe"} <= set(entry):
            raise MalformedDocument(
                f"{args.input}: entry {index} must be an object with id, video, recipe"
            )
        records.append(
            build_video_record(str(entry["id"]), str(entry["video"]), str(entry["recipe"]))
        )
    save_records(records, args.out)
    print(f"wrote {len(records)} video records to {args.out}")
    return 0


def _cmd_gen_questions(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    source = "live chat endpoint" if args.live else "offline mock client"
    if args.dry_run:
        _plan(
            "gen-questions",
            {
                "count": args.count,
                "seed": args.seed,
                "client": source,
                "output": args.out,
            },
        )
        return 0
    if args.live:
        client: ChatClient = OpenAICompatClient()
    else:
        client = MockQAClient(seed=args.seed)
    records = generate_text_qa(
        args.count,
        client,
        args.seed,
        model=cfg.generation.model,
        temperature=cfg.generation.temperature,
        max_attempts=cfg.generation.max_attempts,
        parallelism=cfg.generation.parallelism,
    )
    save_records(records, args.out)
    print(f"wrote {len(records)} text records to {args.out}")
    return 0


def _cmd_validate(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    if args.dry_run:
        _plan(
            "validate",
            {
                "input": args.input,
                "check files": bool(args.check_files),
                "media root": args.media_root or "(none)",
            },
        )
        return 0
    records = load_records(args.input)
    report = validate_dataset(
        records, check_files=args.check_files, media_root=args.media_root
    )
    if report.ok:
        print(f"ok: {len(records)} records, no violations")
        return 0
    for violation in report.violations:
        print(f"{violation.kind} {violation.record_id}: {violation.detail}")
    print(f"{len(report.violations)} violations in {len(records)} records")
    return 1


def _cmd_stats(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    if args.dry_run:
        _plan("stats", {"count": args.count, "baseline": args.baseline})
        return 0
    print(dataset_stats(args.count, args.baseline).rendered)
    return 0


def _cmd_build_eval(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    if args.dry_run:
        _plan(
            "build-eval",
            {
                "annotations": args.annotations,
                "available": args.available,
                "output": args.out,
            },
        )
        return 0
    parsed = parse_annotations(args.annotations)
    available = load_available_ids(args.available)
    items = build_eval_items(parsed.annotations, available)
    write_eval_items(items, args.out)
    kept = {item.video_id for item in items}
    recipe_types = len(
        {a.recipe_type for a in parsed.annotations if a.video_id in kept}
    )
    print(
        f"wrote {len(items)} eval items to {args.out} "
        f"({len(parsed.annotations)} annotations parsed, {len(parsed.rejects)} rejected, "
        f"{recipe_types} recipe types kept)"
    )
    return 0


def _cmd_infer(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    if args.dry_run:
        _plan(
            "infer",
            {
                "items": args.items,
                "backend": cfg.backend.mode,
                "parallelism": cfg.backend.parallelism,
                "output": args.out,
            },
        )
        return 0
    backend = _make_backend(cfg)
    items = read_eval_items(args.items)
    summary = run_inference(
        backend, items, args.out, parallelism=cfg.backend.parallelism
    )
    print(f"inference: {summary.ok} ok, {summary.failed} failed -> {args.out}")
    return 3 if summary.failed else 0


def _cmd_judge(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    if args.dry_run:
        _plan(
            "judge",
            {
                "items": args.items,
                "predictions": args.predictions,
                "judge": "scripted" if cfg.judge.script_path else cfg.judge.model,
                "cache dir": cfg.paths.cache_dir,
                "output": args.out,
            },
        )
        return 0
    items = read_eval_items(args.items)
    predictions: dict[str, str] = {}
    for row in read_jsonl(args.predictions):
        if "item_id" in row and isinstance(row.get("text"), str):
            predictions[str(row["item_id"])] = row["text"]
    pairs = [(item, predictions[item.item_id]) for item in items if item.item_id in predictions]
    skipped = len(items) - len(pairs)
    if skipped:
        logger.warning("%d items lack predictions and are skipped", skipped)
    if not pairs:
        raise EmptyEvaluation("no predictions to judge")

    client = _make_judge_client(cfg)

    def judge_one(pair: tuple) -> JudgeVerdict:
        item, prediction = pair
        return score_item(
            client,
            item,
            prediction,
            model=cfg.judge.model,
            temperature=cfg.judge.temperature,
            cache_dir=cfg.paths.cache_dir,
            retry_cap=cfg.judge.retry_cap,
        )

    if cfg.judge.parallelism == 1 or len(pairs) == 1:
        verdicts = [judge_one(pair) for pair in pairs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.judge.parallelism) as pool:
            verdicts = list(pool.map(judge_one, pairs))

    write_jsonl(
        args.out,
        (
            {"item_id": v.item_id, "score": v.score, "pred": v.pred, "raw": v.raw}
            for v in verdicts
        ),
    )
    yes = sum(1 for v in verdicts if v.pred == "yes")
    print(f"judged {len(verdicts)} items: {yes} yes, {len(verdicts) - yes} no -> {args.out}")
    return 0


def _read_verdicts(path: str) -> list[JudgeVerdict]:
    verdicts = []
    for row in read_jsonl(path):
        try:
            verdicts.append(
                JudgeVerdict(
                    item_id=str(row["item_id"]),
                    score=float(row["score"]),
                    pred=str(row["pred"]),
                    raw=str(row.get("raw", "")),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"{path}: bad verdict row: {exc}") from exc
    return verdicts


def _cmd_report(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    if args.dry_run:
        _plan(
            "report",
            {
                "verdicts": args.verdicts,
                "baseline verdicts": args.baseline or "(none)",
                "markdown": args.out_md,
                "json": args.out_json,
            },
        )
        return 0
    main_report = aggregate(_read_verdicts(args.verdicts))
    baseline_report = aggregate(_read_verdicts(args.baseline)) if args.baseline else None
    labels = tuple(args.labels.split(",", 1)) if args.labels else ("Fine-Tuned", "Baseline")
    if len(labels) != 2:
        raise ConfigInvalid("--labels needs two comma-separated names")
    doc = render_report(main_report, baseline_report, labels=labels)
    try:
        out_md = Path(args.out_md)
        out_md.parent.mkdir(parents=True, exist_ok=True)
        with open(out_md, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(doc.markdown)
    except OSError as exc:
        raise OutputUnwritable(f"cannot write {args.out_md}: {exc}") from exc
    write_json(args.out_json, doc.data)
    print(
        f"{labels[0]}: accuracy {main_report.accuracy_rendered}, "
        f"average score {main_report.average_rendered}"
    )
    if baseline_report is not None:
        print(
            f"{labels[1]}: accuracy {baseline_report.accuracy_rendered}, "
            f"average score {baseline_report.average_rendered}"
        )
    return 0


def _cmd_probe_temporal(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    if args.dry_run:
        _plan(
            "probe-temporal",
            {
                "items": args.items,
                "durations": args.durations,
                "backend": cfg.backend.mode,
                "output": args.out,
            },
        )
        return 0
    items = read_eval_items(args.items)
    raw = read_json(args.durations)
    if not isinstance(raw, dict) or not all(
        isinstance(v, (int, float)) for v in raw.values()
    ):
        raise MalformedDocument(f"{args.durations}: expected an object of video_id -> seconds")
    durations = {str(k): float(v) for k, v in raw.items()}
    backend = _make_backend(cfg)
    report = probe_backend(
        backend, items, durations, parallelism=cfg.backend.parallelism
    )
    write_json(args.out, report.to_json_obj())
    errored = sum(1 for probe in report.items if probe.error is not None)
    flagged = sum(
        1 for probe in report.items if probe.error is None and probe.violations
    )
    totals = ", ".join(f"{k} {v}" for k, v in report.totals.items())
    print(
        f"probed {len(report.items)} items: {flagged} flagged, {errored} errored "
        f"({totals}) -> {args.out}"
    )
    return 3 if errored else 0


def _cmd_lora_demo(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    settings = cfg.lora
    slot_name = args.slot or settings.slot_names()[0]
    slot = settings.slot(slot_name)
    if args.dry_run:
        _plan(
            "lora-demo",
            {
                "layout": settings.layout,
                "slot": slot_name,
                "dims": f"{settings.d_in} -> {settings.d_out}",
                "rank": slot.rank,
                "alpha": slot.alpha,
                "steps": settings.steps,
                "checkpoint": args.out,
            },
        )
        return 0
    layer, dataset = make_rank_one_task(settings.d_in, settings.d_out, slot.seed)
    adapter = init_adapter(settings.d_in, settings.d_out, slot.rank, slot.alpha, slot.seed)
    train_config = ToyTrainConfig(
        learning_rate=settings.learning_rate,
        steps=settings.steps,
        seed=slot.seed,
        batch_size=settings.batch_size,
    )
    trained, history = train_toy(layer, adapter, dataset, train_config)
    save_adapter(trained, args.out)
    small, dense = parameter_counts(trained)
    reduction = 100.0 * (1.0 - history[-1] / history[0]) if history[0] else 0.0
    print(
        f"slot '{slot_name}' ({settings.layout}): loss {history[0]:.4f} -> "
        f"{history[-1]:.4f} ({reduction:.1f}% reduction over {settings.steps} steps)"
    )
    print(
        f"adapter parameters: {small} vs dense update {dense} "
        f"({100.0 * small / dense:.2f}%)"
    )
    print(f"checkpoint -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="path to a JSON pipeline config")
    shared.add_argument(
        "--dry-run", action="store_true", help="print the plan and exit without writing"
    )
    shared.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="cooktune",
        description="Cooking-domain instruction tuning and evaluation pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "build-image", parents=[shared], help="image records from an id,image,label csv"
    )
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--class-map", help="csv mapping raw labels to display names")
    p.set_defaults(handler=_cmd_build_image)

    p = sub.add_parser(
        "build-video", parents=[shared], help="video records from an id/video/recipe json array"
    )
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_build_video)

    p = sub.add_parser(
        "gen-questions", parents=[shared], help="generate deduplicated text qa records"
    )
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--live", action="store_true", help="use the chat endpoint instead of the mock bank"
    )
    p.set_defaults(handler=_cmd_gen_questions)

    p = sub.add_parser("validate", parents=[shared], help="check a record file for violations")
    p.add_argument("--input", required=True)
    p.add_argument("--check-files", action="store_true")
    p.add_argument("--media-root")
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("stats", parents=[shared], help="dataset-to-baseline ratio")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--baseline", type=int, required=True)
    p.set_defaults(handler=_cmd_stats)

    p = sub.add_parser(
        "build-eval", parents=[shared], help="eval items from annotations and availability"
    )
    p.add_argument("--annotations", required=True)
    p.add_argument("--available", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_build_eval)

    p = sub.add_parser("infer", parents=[shared], help="run the generation backend over eval items")
    p.add_argument("--items", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_infer)

    p = sub.add_parser("judge", parents=[shared], help="score predictions with the judge")
    p.add_argument("--items", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_judge)

    p = sub.add_parser("report", parents=[shared], help="aggregate verdicts into a report")
    p.add_argument("--verdicts", required=True)
    p.add_argument("--baseline", help="second verdicts file for a comparison column")
    p.add_argument("--labels", help="two comma-separated column labels")
    p.add_argument("--out-md", required=True)
    p.add_argument("--out-json", required=True)
    p.set_defaults(handler=_cmd_report)

    p = sub.add_parser(
        "probe-temporal", parents=[shared], help="timestamp-consistency probe over eval items"
    )
    p.add_argument("--items", required=True)
    p.add_argument("--durations", required=True, help="json object video_id -> seconds")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_probe_temporal)

    p = sub.add_parser(
        "lora-demo", parents=[shared], help="train a toy adapter and save a checkpoint"
    )
    p.add_argument(
        "--slot",
        help="adapter slot to train (image/video/text, or shared; "
        "default: first slot of the configured layout)",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_lora_demo)

    return parser


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
        return 0 if code == 0 else 2
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config) if args.config else default_config()
        return args.handler(args, cfg)
    except _CONFIG_ERRORS as exc:
        _fail(exc)
        return 2
    except _VALIDATION_ERRORS as exc:
        _fail(exc)
        return 1
    except ValueError as exc:
        _fail(exc)
        return 2
    except CooktuneError as exc:
        _fail(exc)
        return 3


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
