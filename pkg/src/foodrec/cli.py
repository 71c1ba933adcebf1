"""Command-line entry point.

Pipeline subcommands (gen-corpus, split, train, eval, keys, report) are
thin wrappers over the package operations and act on local storage; the
annotation subcommands (fams ...) are a thin HTTP client against a
running service; `serve` starts the service itself.

Machine-readable JSON goes to stdout; pass --pretty for text tables.
Exit code is 0 on success, 1 with a diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

from . import analytics, pipeline
from .config import AppConfig, ConfigError, load_config
from .corpus import CorpusStore, SplitSpec, generate_synthetic_corpus, stratified_split
from .evaluation import EvalReport, confusion_report, measure_checkpoint_throughput
from .keys import KeyStore
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.losses import FocalLossConfig
from .model.training import TrainConfig
from .taxonomy import Taxonomy


def _load_config(args) -> AppConfig:
    if args.config is None and not Path("foodrec.json").exists():
        import os

        if os.environ.get("FOODAI_CONFIG") is None:
            return AppConfig()
    return load_config(args.config)


def _emit(payload, pretty_lines=None, pretty=False) -> None:
    if pretty and pretty_lines is not None:
        print("\n".join(pretty_lines))
    else:
        print(json.dumps(payload, indent=2))


def _taxonomy(config: AppConfig) -> Taxonomy:
    if config.taxonomy_path.exists():
        return Taxonomy.load(config.taxonomy_path)
    return Taxonomy()


# ---------------------------------------------------------------------------
# Subcommand handlers


def cmd_gen_corpus(args) -> int:
    config = _load_config(args)
    if args.standard:
        spec_dict = pipeline.standard_spec_dict(seed=args.seed or 0)
    else:
        spec_dict = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        if args.seed is not None:
            spec_dict["seed"] = args.seed
    taxonomy = pipeline.build_taxonomy_for_spec(spec_dict, _taxonomy(config))
    config.storage.mkdir(parents=True, exist_ok=True)
    taxonomy.save(config.taxonomy_path)
    store = CorpusStore(config.corpus_root)
    spec = pipeline.corpus_spec_from_dict(spec_dict, taxonomy)
    version = generate_synthetic_corpus(spec, store, taxonomy)
    _emit(
        {
            "version": version.version,
            "manifest_digest": version.manifest_digest,
            "total_images": version.total_images,
            "per_class_counts": version.per_class_counts,
        },
        pretty=args.pretty,
        pretty_lines=[
            f"dataset version {version.version}: {version.total_images} images",
            f"manifest digest {version.manifest_digest}",
        ],
    )
    return 0


def cmd_split(args) -> int:
    config = _load_config(args)
    store = CorpusStore(config.corpus_root)
    spec = SplitSpec(args.train, args.val, args.test, seed=args.seed)
    splits = stratified_split(store, args.version, spec)
    if args.out:
        Path(args.out).write_text(json.dumps(splits, indent=2) + "\n", encoding="utf-8")
    _emit(
        {name: len(ids) for name, ids in splits.items()}
        if args.out
        else splits,
        pretty=args.pretty,
        pretty_lines=[f"{name}: {len(ids)} images" for name, ids in splits.items()],
    )
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    store = CorpusStore(config.corpus_root)
    taxonomy = _taxonomy(config)
    splits = json.loads(Path(args.splits).read_text(encoding="utf-8"))
    version = args.version if args.version is not None else store.latest_version()
    focal = None
    if args.loss == "focal" and args.gamma is not None:
        focal = FocalLossConfig(
            gamma=args.gamma,
            alpha=pipeline.resolve_alpha(store, version, taxonomy.label_space(), args.alpha),
        )
    train_config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        momentum=args.momentum,
        seed=args.seed,
        loss=args.loss,
        focal=focal,
    )
    ckpt, history = pipeline.train_on_version(
        store, taxonomy, version, splits, train_config, alpha_mode=args.alpha
    )
    out = args.out or config.checkpoint_path
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out)
    _emit(
        {
            "checkpoint": str(out),
            "digest": ckpt.digest,
            "best_epoch": ckpt.metadata["best_epoch"],
            "best_val_top1": ckpt.metadata["best_val_top1"],
        },
        pretty=args.pretty,
        pretty_lines=[
            f"epoch {m.epoch}: train_top1={m.train_top1:.3f} val_top1={m.val_top1:.3f}"
            for m in history
        ]
        + [f"saved {out} (digest {ckpt.digest[:12]})"],
    )
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    store = CorpusStore(config.corpus_root)
    ckpt = load_checkpoint(args.checkpoint or config.checkpoint_path)
    splits = json.loads(Path(args.splits).read_text(encoding="utf-8"))
    version = args.version if args.version is not None else store.latest_version()
    report = pipeline.evaluate_on_split(store, ckpt, version, splits[args.split])
    if args.out:
        report.save(args.out)
    payload = report.to_dict()
    speed = ""
    if args.throughput:
        images, _ = pipeline.load_split_arrays(
            store, version, splits[args.split], ckpt.label_space
        )
        rate = measure_checkpoint_throughput(ckpt, images, batch_size=64)
        payload["throughput"] = rate.to_dict()
        speed = f"  {rate.images_per_second:.0f}"
    recalls = sorted(report.per_class_recall.items(), key=lambda kv: kv[1])
    _emit(
        payload,
        pretty=args.pretty,
        pretty_lines=[
            "Top-1 Accuracy  Top-5 Accuracy" + ("  Testing Speed (#Images/second)" if speed else ""),
            f"{report.top1:<14.4f}  {report.top5:<14.4f}" + speed,
            "lowest recall: "
            + ", ".join(f"{cls}={r:.2f}" for cls, r in recalls[:5]),
        ],
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    config = _load_config(args)
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
    return 0


def cmd_keys(args) -> int:
    config = _load_config(args)
    store = KeyStore(config.keys_path, seed=config.seed)
    if args.keys_action == "create":
        key = store.register(args.organization)
        _emit(
            {"key": key.key, "organization": key.organization, "status": key.status},
            pretty=args.pretty,
            pretty_lines=[f"{key.key}  {key.status}  {key.organization}"],
        )
    elif args.keys_action == "approve":
        key = store.approve(args.key)
        _emit(
            {"key": key.key, "status": key.status},
            pretty=args.pretty,
            pretty_lines=[f"{key.key} approved"],
        )
    else:
        keys = store.list()
        _emit(
            [{"key": k.key, "organization": k.organization, "status": k.status} for k in keys],
            pretty=args.pretty,
            pretty_lines=[f"{k.key}  {k.status:9s}  {k.organization}" for k in keys],
        )
    return 0


def cmd_report(args) -> int:
    config = _load_config(args)
    queries = analytics.read_jsonl(config.query_log_path)
    feedbacks = analytics.read_jsonl(config.feedback_log_path)
    if args.report_kind == "accuracy":
        acc = analytics.feedback_accuracy(queries, feedbacks, window=args.window)
        top1 = "n/a" if acc.top1 is None else f"{acc.top1:.4f}"
        top5 = "n/a" if acc.top5 is None else f"{acc.top5:.4f}"
        _emit(
            acc.to_dict(),
            pretty=args.pretty,
            pretty_lines=[
                f"feedback count {acc.feedback_count}",
                f"top-1 {top1}  top-5 {top5}",
            ],
        )
    elif args.report_kind == "usage":
        hist = analytics.usage_histogram(queries, config.tzinfo(), window=args.window)
        peaks = analytics.detect_peaks(hist)
        _emit(
            {"histogram": hist.to_dict(), "peaks": peaks},
            pretty=args.pretty,
            pretty_lines=[
                "hour  count",
                *(f"{h:4d}  {c}" for h, c in enumerate(hist.hourly)),
                f"peaks: {peaks}",
            ],
        )
    elif args.report_kind == "case-studies":
        entries = analytics.low_top1_high_top5(
            queries,
            feedbacks,
            min_queries=args.min_queries,
            top5_floor=args.top5_floor,
            top1_ceiling=args.top1_ceiling,
            window=args.window,
        )
        _emit(
            [e.to_dict() for e in entries],
            pretty=args.pretty,
            pretty_lines=[
                f"{e.visual_food}: n={e.query_count} top1={e.top1:.2f} "
                f"top5={e.top5:.2f} usually predicted {e.most_common_top1}"
                for e in entries
            ]
            or ["no classes flagged"],
        )
    else:  # confusion
        report = EvalReport.from_dict(
            json.loads(Path(args.report).read_text(encoding="utf-8"))
        )
        entries = confusion_report(report, args.worst)
        width = max([len(e.visual_food) for e in entries], default=12)
        _emit(
            [
                {
                    "visual_food": e.visual_food,
                    "recall": e.recall,
                    "most_common_incorrect": e.most_common_incorrect,
                }
                for e in entries
            ],
            pretty=args.pretty,
            pretty_lines=[
                f"{'Visual Food':{width}s}  Recall  Most common incorrect prediction",
                *(
                    f"{e.visual_food:{width}s}  {e.recall:.2f}    {e.most_common_incorrect}"
                    for e in entries
                ),
            ]
            if entries
            else ["no incorrect predictions"],
        )
    return 0


def cmd_fams(args) -> int:
    config = _load_config(args)
    base = args.server or f"http://{config.host}:{config.port}"
    params = {"api_key": args.api_key}
    try:
        if args.fams_action == "create-task":
            resp = httpx.post(
                f"{base}/fams/tasks",
                params=params,
                json={
                    "keywords": [k.strip() for k in args.keywords.split(",")],
                    "count_per_keyword": args.count,
                    "label": args.label,
                },
                timeout=30.0,
            )
        elif args.fams_action == "list":
            query = dict(params)
            if args.assignee:
                query["assignee"] = args.assignee
            resp = httpx.get(f"{base}/fams/tasks", params=query, timeout=30.0)
        else:  # confirm
            resp = httpx.post(
                f"{base}/fams/tasks/{args.task}/confirm", params=params, timeout=120.0
            )
    except httpx.HTTPError as e:
        print(f"error: cannot reach service at {base}: {e}", file=sys.stderr)
        return 1
    payload = resp.json()
    _emit(payload, pretty=args.pretty, pretty_lines=[json.dumps(payload, indent=2)])
    return 0 if resp.status_code < 400 else 1


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foodrec",
        description="Food image recognition pipeline, service and reports",
    )
    parser.add_argument(
        "--config", "-c", default=None, help="config file (or FOODAI_CONFIG env var)"
    )
    parser.add_argument("--pretty", action="store_true", help="human-readable output")
    # Accepted before or after the subcommand; SUPPRESS keeps a late flag
    # from clobbering an early one with its default.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", default=argparse.SUPPRESS)
    common.add_argument("--pretty", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", parents=[common], help="generate a synthetic dataset version")
    p.add_argument("--spec", help="corpus spec JSON file")
    p.add_argument("--standard", action="store_true", help="use the built-in 12-class benchmark spec")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_gen_corpus)

    p = sub.add_parser("split", parents=[common], help="stratified train/val/test split")
    p.add_argument("--version", type=int, required=True)
    p.add_argument("--train", type=float, default=0.7)
    p.add_argument("--val", type=float, default=0.15)
    p.add_argument("--test", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write id lists to this JSON file")
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train a checkpoint")
    p.add_argument("--version", type=int, default=None)
    p.add_argument("--splits", required=True, help="split JSON from `split --out`")
    p.add_argument("--loss", choices=["cross_entropy", "focal"], default="cross_entropy")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--alpha", choices=["uniform", "inverse_frequency"], default="uniform")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="checkpoint path (default from config)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--version", type=int, default=None)
    p.add_argument("--splits", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--throughput", action="store_true",
                   help="also measure forward-pass images/second")
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("keys", parents=[common], help="API key administration")
    keys_sub = p.add_subparsers(dest="keys_action", required=True)
    pc = keys_sub.add_parser("create", parents=[common])
    pc.add_argument("--organization", required=True)
    pa = keys_sub.add_parser("approve", parents=[common])
    pa.add_argument("--key", required=True)
    keys_sub.add_parser("list", parents=[common])
    p.set_defaults(fn=cmd_keys)

    p = sub.add_parser("report", parents=[common], help="production analytics and confusion reports")
    report_sub = p.add_subparsers(dest="report_kind", required=True)
    pr = report_sub.add_parser("accuracy", parents=[common])
    pr.add_argument("--window", default=None, help="ISO-8601 interval start/end")
    pr = report_sub.add_parser("usage", parents=[common])
    pr.add_argument("--window", default=None)
    pr = report_sub.add_parser("case-studies", parents=[common])
    pr.add_argument("--window", default=None)
    pr.add_argument("--min-queries", type=int, default=10)
    pr.add_argument("--top5-floor", type=float, default=0.8)
    pr.add_argument("--top1-ceiling", type=float, default=0.4)
    pr = report_sub.add_parser("confusion", parents=[common])
    pr.add_argument("--report", required=True, help="EvalReport JSON from `eval --out`")
    pr.add_argument("--worst", type=int, default=10)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("fams", parents=[common], help="annotation workflow (talks to a running service)")
    fams_sub = p.add_subparsers(dest="fams_action", required=True)
    pf = fams_sub.add_parser("create-task", parents=[common])
    pf.add_argument("--keywords", required=True, help="comma-separated")
    pf.add_argument("--count", type=int, required=True)
    pf.add_argument("--label", required=True)
    pf.add_argument("--api-key", required=True)
    pf.add_argument("--server", default=None)
    pf = fams_sub.add_parser("list", parents=[common])
    pf.add_argument("--assignee", default=None)
    pf.add_argument("--api-key", required=True)
    pf.add_argument("--server", default=None)
    pf = fams_sub.add_parser("confirm", parents=[common])
    pf.add_argument("--task", required=True)
    pf.add_argument("--api-key", required=True)
    pf.add_argument("--server", default=None)
    p.set_defaults(fn=cmd_fams)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen-corpus" and not args.standard and not args.spec:
        parser.error("gen-corpus needs --spec FILE or --standard")
    try:
        return args.fn(args)
    except (ValueError, ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
