"""Command-line surface: writing runs, the single-call baseline, evaluators,
benchmark material synthesis, fixture management, and the annotation service."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path

from . import autoraters, benchkit, ingest, pipeline, refine, sxs_service
from .errors import PaperforgeError, StageFailure
from .providers import (
    CallLedger,
    IndexClient,
    LlmClient,
    ProviderConfig,
    RateLimiter,
    ReplayStore,
)

logger = logging.getLogger(__name__)


def build_hub(config: ProviderConfig) -> pipeline.ProviderHub:
    store = ReplayStore(config.fixture_dir) if config.fixture_dir else None
    ledger = CallLedger()
    llm = LlmClient(config, store=store, ledger=ledger)
    index = IndexClient(config, store=store, limiter=RateLimiter(), ledger=ledger)
    return pipeline.ProviderHub(llm=llm, index=index, ledger=ledger)


def _provider_config(args) -> ProviderConfig:
    overrides = {
        "mode": getattr(args, "mode", None),
        "fixture_dir": getattr(args, "fixture_dir", None),
    }
    return ProviderConfig.from_env(overrides, config_file=getattr(args, "config", None))


def _emit(args, payload: dict) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        for key, value in payload.items():
            print(f"{key}: {value}")


def _parse_cutoff_flag(value: str | None) -> date | None:
    if not value:
        return None
    year_s, _, month_s = value.partition("-")
    return date(int(year_s), int(month_s), 1)


def _load_bundle(args) -> ingest.InputBundle:
    return ingest.load_bundle(
        args.bundle, args.venue, cutoff_override=_parse_cutoff_flag(getattr(args, "cutoff", None))
    )


def cmd_write(args) -> int:
    bundle = _load_bundle(args)
    cfg = pipeline.RunConfig(
        venue=args.venue,
        idea_density=args.density,
        plot_mode=args.plot,
        refine_limit=args.refine_iters,
        provider_mode=args.mode or "replay",
    )
    hub = build_hub(_provider_config(args))
    try:
        package = pipeline.run_pipeline(bundle, cfg, hub, args.out)
    except StageFailure as exc:
        _emit(args, {"status": "failed", "stage": exc.stage, "detail": str(exc.cause)})
        return 1
    _emit(
        args,
        {
            "status": "ok",
            "run_dir": str(package.run_dir),
            "pdf_bytes": len(package.pdf),
            "llm_calls": sum(package.call_ledger.values()),
        },
    )
    return 0


def cmd_single_agent(args) -> int:
    bundle = _load_bundle(args)
    cfg = pipeline.RunConfig(venue=args.venue, provider_mode=args.mode or "replay")
    hub = build_hub(_provider_config(args))
    try:
        package = pipeline.run_single_agent(bundle, cfg, hub, args.out)
    except StageFailure as exc:
        _emit(args, {"status": "failed", "stage": exc.stage, "detail": str(exc.cause)})
        return 1
    _emit(args, {"status": "ok", "run_dir": str(package.run_dir), "pdf_bytes": len(package.pdf)})
    return 0


def _judge_from_args(args):
    hub = build_hub(_provider_config(args))
    return hub, hub.llm.complete


def cmd_eval_cite_f1(args) -> int:
    hub, judge = _judge_from_args(args)
    gt_refs = _read_reference_list(args.gt)
    gen_refs = _read_reference_list(args.gen)
    paper_text = Path(args.paper_text).read_text(encoding="utf-8") if args.paper_text else ""
    partition = autoraters.partition_references(paper_text, gt_refs, judge)
    gt_resolved = autoraters.resolve_entities(gt_refs, hub.index.search)
    gen_resolved = autoraters.resolve_entities(gen_refs, hub.index.search)
    gt_entities = [
        (gt_resolved[ordinal], partition.assignments[ordinal])
        for ordinal in range(1, len(gt_refs) + 1)
    ]
    report = autoraters.citation_f1(gt_entities, list(gen_resolved.values()))
    payload = report.as_dict()
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _emit(args, {"status": "ok", "out": args.out, "overall_f1": payload["overall"]["f1"]})
    return 0


def _read_reference_list(path: str) -> list:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        return json.loads(text)
    return [line.strip() for line in text.splitlines() if line.strip()]


def cmd_eval_lit(args) -> int:
    _, judge = _judge_from_args(args)
    venue = ingest.venue_profile(args.venue)
    text = Path(args.sections).read_text(encoding="utf-8")
    report = autoraters.score_lit_review(text, venue, judge)
    Path(args.out).write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _emit(args, {"status": "ok", "out": args.out, "overall_score": report.overall_score})
    return 0


def cmd_eval_sxs(args) -> int:
    _, judge = _judge_from_args(args)
    a_text = Path(args.a).read_text(encoding="utf-8", errors="replace")
    b_text = Path(args.b).read_text(encoding="utf-8", errors="replace")
    verdict = autoraters.sxs_compare(a_text, b_text, args.aspect, judge)
    payload = verdict.as_dict()
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _emit(args, {"status": "ok", "out": args.out, "aggregated": verdict.aggregated})
    return 0


def cmd_eval_review(args) -> int:
    _, llm = _judge_from_args(args)
    tex = Path(args.tex).read_text(encoding="utf-8")
    pdf = Path(args.pdf).read_bytes() if args.pdf else b""
    reviewer = refine.simulated_reviewer(llm)
    score = reviewer(pdf, tex)
    payload = {"overall": score.overall, "sub_axes": score.sub_axes, "decision": score.decision}
    _emit(args, payload)
    return 0


def cmd_bench_synthesize(args) -> int:
    _, llm = _judge_from_args(args)
    source_dir = Path(args.paper_dir)
    markdown = (source_dir / "parsed.md").read_text(encoding="utf-8")
    captions_path = source_dir / "captions.json"
    captions = json.loads(captions_path.read_text(encoding="utf-8")) if captions_path.is_file() else []
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sparse = benchkit.synthesize_idea(markdown, benchkit.SPARSE, llm)
    dense = benchkit.synthesize_idea(markdown, benchkit.DENSE, llm)
    log = benchkit.synthesize_log(markdown, captions, llm)
    materials = benchkit.RawMaterialSet(
        idea_sparse=sparse, idea_dense=dense, experimental_log=log, source_id=source_dir.name
    )
    (out_dir / "idea_sparse.md").write_text(materials.idea_sparse + "\n", encoding="utf-8")
    (out_dir / "idea_dense.md").write_text(materials.idea_dense + "\n", encoding="utf-8")
    (out_dir / "experimental_log.md").write_text(materials.experimental_log + "\n", encoding="utf-8")
    (out_dir / "leak_report.json").write_text(
        json.dumps(benchkit.detect_leaks(sparse).as_dict(), indent=2) + "\n", encoding="utf-8"
    )
    _emit(args, {"status": "ok", "out": str(out_dir)})
    return 0


def cmd_bench_check_leaks(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8")
    report = benchkit.detect_leaks(text)
    _emit(args, {"clean": report.clean, "violations": [vars(v) for v in report.violations]})
    return 0 if report.clean else 1


def cmd_bench_stats(args) -> int:
    corpus_dir = Path(args.corpus)
    materials = []
    gt_meta = []
    for paper_dir in sorted(p for p in corpus_dir.iterdir() if p.is_dir()):
        materials.append(
            benchkit.RawMaterialSet(
                idea_sparse=(paper_dir / "idea_sparse.md").read_text(encoding="utf-8"),
                idea_dense=(paper_dir / "idea_dense.md").read_text(encoding="utf-8"),
                experimental_log=(paper_dir / "experimental_log.md").read_text(encoding="utf-8"),
                source_id=paper_dir.name,
            )
        )
        meta_path = paper_dir / "gt_meta.json"
        if meta_path.is_file():
            gt_meta.append(json.loads(meta_path.read_text(encoding="utf-8")))
        else:
            gt_meta.append({"citation_count": 0, "figure_count": 0, "table_count": 0})
    stats = benchkit.corpus_stats(materials, gt_meta)
    Path(args.out).write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _emit(args, {"status": "ok", "out": args.out, "papers": len(materials)})
    return 0


def cmd_serve_sxs(args) -> int:
    import random

    rng = random.Random(args.seed) if args.seed is not None else None
    service = sxs_service.SxsService(args.pairs, args.out, docs_root=args.docs_root, rng=rng)
    ui_root = Path(args.ui) if args.ui else None
    server = sxs_service.serve(service, args.port, ui_root=ui_root)
    print(f"serving on http://127.0.0.1:{server.server_address[1]}/ (Ctrl-C to stop)")
    sys.stdout.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


def cmd_fixtures_verify(args) -> int:
    store = ReplayStore(args.dir)
    problems = store.verify()
    _emit(args, {"fixtures": store.count(), "problems": problems})
    return 0 if not problems else 1


def cmd_fixtures_record(args) -> int:
    args.mode = "record"
    return cmd_write(args)


def _add_write_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--bundle", required=True, help="directory with the pre-writing materials")
    sub.add_argument("--venue", required=True)
    sub.add_argument("--cutoff", help="YYYY-MM override of the venue cutoff")
    sub.add_argument("--density", choices=["sparse", "dense"], default="sparse")
    sub.add_argument("--plot", choices=["on", "off"], default="off")
    sub.add_argument("--refine-iters", type=int, default=3)
    sub.add_argument("--out", required=True, help="run directory")
    _add_provider_flags(sub)


def _add_provider_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--mode", choices=["live", "record", "replay"])
    sub.add_argument("--fixture-dir", dest="fixture_dir")
    sub.add_argument("--config", help="JSON config file (lowest precedence)")
    sub.add_argument("--json", action="store_true", help="machine-readable summary on stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paperforge", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    write = subs.add_parser("write", help="run the full writing pipeline")
    _add_write_flags(write)
    write.set_defaults(func=cmd_write)

    single = subs.add_parser("single-agent", help="one-call baseline")
    _add_write_flags(single)
    single.set_defaults(func=cmd_single_agent)

    evals = subs.add_parser("eval", help="autoraters").add_subparsers(dest="evaluator", required=True)
    cite = evals.add_parser("cite-f1")
    cite.add_argument("--gt", required=True, help="ground-truth reference list (.txt lines or .json)")
    cite.add_argument("--gen", required=True, help="generated reference list")
    cite.add_argument("--paper-text", dest="paper_text", help="ground-truth paper text for partitioning")
    cite.add_argument("--out", default="cite_f1.json")
    _add_provider_flags(cite)
    cite.set_defaults(func=cmd_eval_cite_f1)

    lit = evals.add_parser("lit")
    lit.add_argument("--sections", required=True, help="Introduction+Related Work text file")
    lit.add_argument("--venue", required=True)
    lit.add_argument("--out", default="lit_review.json")
    _add_provider_flags(lit)
    lit.set_defaults(func=cmd_eval_lit)

    sxs = evals.add_parser("sxs")
    sxs.add_argument("--a", required=True)
    sxs.add_argument("--b", required=True)
    sxs.add_argument("--aspect", choices=["lit", "overall"], required=True)
    sxs.add_argument("--out", default="sxs.json")
    _add_provider_flags(sxs)
    sxs.set_defaults(func=cmd_eval_sxs)

    review = evals.add_parser("review")
    review.add_argument("--tex", required=True)
    review.add_argument("--pdf")
    _add_provider_flags(review)
    review.set_defaults(func=cmd_eval_review)

    bench = subs.add_parser("bench", help="benchmark raw materials").add_subparsers(
        dest="bench_command", required=True
    )
    synth = bench.add_parser("synthesize")
    synth.add_argument("--paper-dir", dest="paper_dir", required=True)
    synth.add_argument("--out", required=True)
    _add_provider_flags(synth)
    synth.set_defaults(func=cmd_bench_synthesize)

    leaks = bench.add_parser("check-leaks")
    leaks.add_argument("file")
    leaks.add_argument("--json", action="store_true")
    leaks.set_defaults(func=cmd_bench_check_leaks)

    stats = bench.add_parser("stats")
    stats.add_argument("--corpus", required=True)
    stats.add_argument("--out", default="stats.json")
    stats.add_argument("--json", action="store_true")
    stats.set_defaults(func=cmd_bench_stats)

    serve = subs.add_parser("serve-sxs", help="human annotation service")
    serve.add_argument("--pairs", required=True, help="pairs_manifest.json")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--out", default="judgments.ndjson")
    serve.add_argument("--docs-root", dest="docs_root")
    serve.add_argument("--ui", help="static dir for the browser client")
    serve.add_argument("--seed", type=int, help="seed the left/right randomization")
    serve.set_defaults(func=cmd_serve_sxs)

    fixtures = subs.add_parser("fixtures", help="fixture store management").add_subparsers(
        dest="fixtures_command", required=True
    )
    record = fixtures.add_parser("record", help="run `write` in record mode")
    _add_write_flags(record)
    record.set_defaults(func=cmd_fixtures_record)
    verify = fixtures.add_parser("verify")
    verify.add_argument("--dir", required=True)
    verify.add_argument("--json", action="store_true")
    verify.set_defaults(func=cmd_fixtures_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PaperforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
