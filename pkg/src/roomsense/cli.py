"""Command-line entrypoint: convert, ingest, cooc, infer, eval.

The four pipeline commands compose: ``ingest`` produces a preprocessed
graph file, ``cooc`` a co-occurrence table, ``infer`` a predictions file,
``eval`` the reports. Defaults reproduce the strongest trial condition
(fine-grained object space, ground-truth co-occurrence, k=3) with the
deterministic offline backend. Identical inputs and flags give
byte-identical data outputs; the run manifest sidecar (which carries a
timestamp) is the one exception, and every data file references its
manifest by the timestamp-free digest.

Exit codes: 0 success, 1 usage error, 2 data error, 3 backend failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import evaluation, house_convert, inference, ingest
from .cooccurrence import (
    build_proxy_table,
    count_ground_truth,
    read_table,
    write_table,
)
from .ingest import DataError, IngestConfig
from .lm_scoring import TransportError, make_scorer
from .querygen import QueryTemplate
from .scene_model import validate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_manifest(command: str, flags: dict, inputs, outputs, backend: str | None,
                   template_version: str | None) -> tuple[dict, str]:
    """Run manifest plus its id (digest over everything but the timestamp)."""
    stable = {
        "command": command,
        "flags": {k: v for k, v in sorted(flags.items())},
        "inputs": {str(p): _sha256_file(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "backend": backend,
        "template_version": template_version,
    }
    manifest_id = hashlib.sha256(
        json.dumps(stable, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]
    manifest = dict(stable)
    manifest["manifest_id"] = manifest_id
    manifest["timestamp"] = datetime.now(timezone.utc).isoformat()
    return manifest, manifest_id


def _write_manifest(manifest: dict, out_path) -> None:
    side = Path(str(out_path) + ".manifest.json")
    side.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _flags_dict(args: argparse.Namespace, skip=("func", "command")) -> dict:
    return {k: _jsonable(v) for k, v in vars(args).items() if k not in skip}


def _resolve_object_space(graph, choice: str) -> str:
    """Map fine/coarse onto the graph's declared spaces (coarse first)."""
    names = [s.name for s in graph.object_spaces]
    if not names:
        raise DataError("graph declares no object label spaces")
    return names[0] if choice == "coarse" else names[-1]


def _add_scorer_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("scorer")
    group.add_argument("--backend", choices=["offline", "remote"], default="offline")
    group.add_argument("--seed", type=int, default=0, help="offline scorer seed")
    group.add_argument("--offline-bonus-file", type=Path, default=None)
    group.add_argument("--endpoint", default=None, help="remote endpoint URL")
    group.add_argument("--model", default=None, help="remote model identity")
    group.add_argument("--max-inflight", type=int, default=4)
    group.add_argument("--max-attempts", type=int, default=5,
                       help="remote retry budget per sentence")
    group.add_argument("--cache-dir", type=Path, default=None)


def _make_scorer(args: argparse.Namespace):
    cache_path = None
    if args.cache_dir is not None:
        args.cache_dir.mkdir(parents=True, exist_ok=True)
        cache_path = args.cache_dir / "scores.jsonl"
    return make_scorer(
        backend=args.backend,
        seed=args.seed,
        bonus_file=args.offline_bonus_file,
        cache_path=cache_path,
        max_inflight=args.max_inflight,
        endpoint=args.endpoint,
        model=args.model,
        max_attempts=args.max_attempts,
    )


def cmd_convert(args) -> int:
    graph = house_convert.convert_house(args.house, args.out, args.category_map)
    inputs = [args.house] + ([args.category_map] if args.category_map else [])
    manifest, manifest_id = build_manifest(
        "convert", _flags_dict(args), inputs, [args.out], None, None
    )
    ingest.write_scene_file(graph, args.out, manifest_id=manifest_id)
    _write_manifest(manifest, args.out)
    print(f"converted {args.house}: {len(graph.rooms)} rooms, {len(graph.objects)} objects")
    return EXIT_OK


def cmd_ingest(args) -> int:
    fixes = (
        ingest.load_spelling_fixes(args.spelling_fixes)
        if args.spelling_fixes
        else ingest.default_spelling_fixes()
    )
    config = IngestConfig(
        spelling_fixes=fixes,
        keep_object_category_for_secondary_space=args.keep_object_category,
    )
    processed = []
    for scene in args.scene:
        raw = ingest.parse_scene_file(scene, config)
        space = _resolve_object_space(raw, args.object_space) if raw.object_spaces else None
        if space is None:
            processed.append(raw)
            continue
        processed.append(ingest.run_pipeline(raw, config, space))
    graph = ingest.merge_graphs(processed) if len(processed) != 1 else processed[0]

    violations = validate(graph)
    if violations:
        for violation in violations:
            print(f"invariant violation: {violation}", file=sys.stderr)
        raise DataError(f"preprocessed graph fails validation ({len(violations)} violations)")

    manifest, manifest_id = build_manifest(
        "ingest", _flags_dict(args), list(args.scene), [args.out], None, None
    )
    ingest.write_scene_file(graph, args.out, manifest_id=manifest_id)
    _write_manifest(manifest, args.out)

    print(f"rooms: {len(graph.rooms)}")
    print(f"objects: {len(graph.objects)}")
    total = max(len(graph.rooms), 1)
    for label, count in ingest.room_label_histogram(graph).items():
        print(f"  {label}: {count} ({count / total * 100:.2f}%)")
    return EXIT_OK


def cmd_cooc(args) -> int:
    graph = ingest.parse_scene_file(args.graph)
    space_name = _resolve_object_space(graph, args.object_space)
    template = QueryTemplate(article_mode=args.article)
    if args.mode == "gt":
        table = count_ground_truth(
            graph, space_name, alpha=args.alpha, presence=args.presence
        )
        backend = None
    else:
        scorer = _make_scorer(args)
        room_space = graph.room_space
        if room_space is None:
            raise DataError("graph declares no room label space")
        table = build_proxy_table(
            scorer,
            graph.object_space(space_name),
            room_space,
            template=template,
            max_workers=args.max_inflight,
        )
        backend = scorer.identity
    manifest, manifest_id = build_manifest(
        "cooc", _flags_dict(args), [args.graph], [args.out], backend, template.version
    )
    write_table(table, args.out, manifest_id=manifest_id)
    _write_manifest(manifest, args.out)
    print(f"wrote {len(table.rows)} rows over {len(table.room_labels)} room labels")
    return EXIT_OK


def cmd_infer(args) -> int:
    graph = ingest.parse_scene_file(args.graph)
    table = read_table(args.cooc)
    names = [s.name for s in graph.object_spaces]
    if table.object_space not in names:
        raise DataError(
            f"table object space {table.object_space!r} not in graph spaces {names}"
        )
    scorer = _make_scorer(args)
    template = QueryTemplate(article_mode=args.article)
    result = inference.classify_graph(graph, table, scorer, k=args.k, template=template)
    manifest, manifest_id = build_manifest(
        "infer",
        _flags_dict(args),
        [args.graph, args.cooc],
        [args.out],
        scorer.identity,
        template.version,
    )
    inference.write_predictions(result, args.out, manifest_id=manifest_id)
    _write_manifest(manifest, args.out)
    print(f"predicted {len(result.predictions)} rooms, {len(result.failures)} failed")
    if result.failures and not result.predictions:
        raise TransportError("every room failed to score")
    return EXIT_OK


def cmd_eval(args) -> int:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for path in args.predictions:
        run = inference.read_predictions(path)
        room_labels = _room_labels_from(run)
        report = evaluation.evaluate(
            run.predictions, room_labels, failed_rooms=[f.room_id for f in run.failures]
        )
        reports.append(report)
        stem = Path(path).stem
        manifest, manifest_id = build_manifest(
            "eval", _flags_dict(args, skip=("func", "command", "predictions")),
            [path],
            [args.out_dir / f"{stem}.report.json"],
            None,
            None,
        )
        evaluation.write_report(report, args.out_dir / f"{stem}.report.json", manifest_id)
        (args.out_dir / f"{stem}.report.txt").write_text(
            evaluation.format_report(report) + f"\nmanifest: {manifest_id}\n", "utf-8"
        )
        evaluation.emit_label_breakdown(
            report, args.out_dir / f"{stem}.breakdown.csv", manifest_id
        )
        _write_manifest(manifest, args.out_dir / f"{stem}.report.json")
        print(f"{path}: overall accuracy {report.overall_accuracy * 100:.2f}%")
    if len(reports) > 1:
        table = evaluation.compare_conditions(reports)
        text = evaluation.format_condition_table(table)
        manifest, manifest_id = build_manifest(
            "eval", _flags_dict(args, skip=("func", "command", "predictions")),
            list(args.predictions),
            [args.out_dir / "conditions.txt"],
            None,
            None,
        )
        (args.out_dir / "conditions.txt").write_text(
            text + f"\nmanifest: {manifest_id}\n", "utf-8"
        )
        _write_manifest(manifest, args.out_dir / "conditions.txt")
        print(text)
    return EXIT_OK


def _room_labels_from(run: inference.GraphClassification) -> tuple[str, ...]:
    if not run.predictions:
        raise evaluation.EvaluationError("predictions file holds no successful rooms")
    return tuple(c.room_label for c in run.predictions[0].candidates)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roomsense", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="convert a .house file to a scene file")
    p.add_argument("--house", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--category-map", type=Path, default=None,
                   help="official category mapping TSV for nyuClass labels")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("ingest", help="preprocess scene files into a clean graph")
    p.add_argument("--scene", type=Path, action="append", required=True,
                   help="scene file; repeat to merge several buildings")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--object-space", choices=["fine", "coarse"], default="fine")
    p.add_argument("--spelling-fixes", type=Path, default=None,
                   help="override the packaged spelling-fix table")
    p.add_argument("--keep-object-category", action=argparse.BooleanOptionalAction,
                   default=True,
                   help="retain coarse-'object' nodes in fine-grained runs")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("cooc", help="build a co-occurrence table")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--mode", "--cooc", dest="mode", choices=["gt", "proxy"], default="gt")
    p.add_argument("--alpha", type=float, default=1.0, help="Laplace smoothing constant")
    p.add_argument("--presence", action="store_true",
                   help="count labels once per room instead of per instance")
    p.add_argument("--object-space", choices=["fine", "coarse"], default="fine")
    p.add_argument("--article", choices=["grammatical", "literal"], default="grammatical")
    _add_scorer_flags(p)
    p.set_defaults(func=cmd_cooc)

    p = sub.add_parser("infer", help="classify every room in a graph")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--cooc", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--k", type=int, default=3, help="objects per query sentence")
    p.add_argument("--article", choices=["grammatical", "literal"], default="grammatical")
    _add_scorer_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score prediction files and emit reports")
    p.add_argument("predictions", nargs="+", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        print(f"roomsense: {err}", file=sys.stderr)
        return EXIT_USAGE
    except TransportError as err:
        print(f"roomsense: backend failure: {err}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, evaluation.EvaluationError, ValueError, KeyError) as err:
        print(f"roomsense: data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
