"""Command-line entry point: ``mmkg <command> ...``.

Commands: build, filter, stats, split, train, evaluate, gen-synth. Every
command that writes files writes a ``manifest.json`` next to them. Exit
codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import shutil
import sys
import time
from pathlib import Path

from mmkg import __version__
from mmkg.exceptions import MMKGError

logger = logging.getLogger("mmkg")

SPLIT_FILES = ("train.tsv", "valid.tsv", "test.tsv")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _digest_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _digests(paths) -> dict:
    out = {}
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        if p.is_dir():
            for child in sorted(p.iterdir()):
                if child.is_file() and child.name != "manifest.json":
                    out[str(child)] = _digest_file(child)
        elif p.exists():
            out[str(p)] = _digest_file(p)
    return out


def _prepare_out(path, force: bool) -> Path:
    out = Path(path)
    if out.exists():
        if not force:
            raise UsageError(f"output directory {out} already exists (use --force to overwrite)")
        if out.is_dir():
            shutil.rmtree(out)
        else:
            out.unlink()
    out.mkdir(parents=True)
    return out


def _load_config(args) -> dict:
    if not args.config:
        return {}
    with open(args.config, encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise ValueError(f"{args.config}: config must be a JSON object")
    return cfg


def _pick(flag, cfg: dict, key: str, default):
    """flag > config file > default."""
    if flag is not None:
        return flag
    return cfg.get(key, default)


def _write_manifest(out: Path, command: str, config: dict, inputs, seed, started: float) -> None:
    canonical = json.dumps(config, sort_keys=True, default=str)
    outputs = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "command": command,
        "config": json.loads(canonical),
        "config_hash": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "inputs": _digests(inputs),
        "seed": seed,
        "version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
        "outputs": {name: _digest_file(out / name) for name in outputs},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _seed(args, cfg):
    return int(_pick(args.seed, cfg, "seed", 42))


def _graph(path):
    from mmkg.io import parse_graph

    return parse_graph(path)


def _load_split(path):
    from mmkg.io import load_triples
    from mmkg.training import SplitSpec

    d = Path(path)
    train, valid, test = (load_triples(d / name) for name in SPLIT_FILES)
    return SplitSpec(train, valid, test)


# ---------------------------------------------------------------------------
# commands


def cmd_build(args) -> int:
    from mmkg.construction import (
        GraphBuilder,
        HttpAnnotator,
        MockAnnotator,
        filter_record,
        load_exclusion_list,
        read_annotations,
        read_relation_table,
    )
    from mmkg.io import parse_streams, serialize_graph

    started = time.time()
    cfg = _load_config(args)
    records = list(read_annotations(args.annotations))
    if not records:
        print("error: no records in annotation file", file=sys.stderr)
        return 1
    exclusion_path = _pick(args.exclusion, cfg, "exclusion", None)
    exclusion = load_exclusion_list(exclusion_path)
    declared = None
    relations_path = _pick(args.relations, cfg, "relations", None)
    if relations_path:
        with open(relations_path, encoding="utf-8") as f:
            rels = parse_streams(io.StringIO(""), f, io.StringIO("")).relations
        declared = set(rels)
    table = read_relation_table(args.relation_table, declared)
    kind = _pick(args.annotator, cfg, "annotator", "mock")
    if kind == "mock":
        client = MockAnnotator(polarity=_pick(args.mock_polarity, cfg, "mock_polarity", "cue"))
    else:
        client = HttpAnnotator(
            url=_pick(args.annotator_url, cfg, "annotator_url", None),
            model=_pick(args.annotator_model, cfg, "annotator_model", "default"),
            backoff=tuple(cfg.get("annotator_backoff", (1.0, 2.0, 4.0))),
            timeout=float(cfg.get("annotator_timeout", 60.0)),
        )
    intra_mode = _pick(args.intra_mode, cfg, "intra_mode", "record")
    full_text = bool(args.full_text or cfg.get("full_text", False))
    workers = _pick(args.workers, cfg, "workers", os.cpu_count() or 1)
    filtered = [filter_record(r, exclusion) for r in records]
    builder = GraphBuilder(table, client, intra_mode=intra_mode, full_text=full_text, workers=workers)
    graph = builder.build(filtered)
    s = builder.summary
    for report_id, reason in s.failures[:20]:
        print(f"warning: record {report_id} skipped: {reason}", file=sys.stderr)
    print(f"records: {s.records_ok} ok, {s.records_failed} failed; skipped lines {s.skipped_lines}; "
          f"rejected selections {s.rejected_selections}", file=sys.stderr)
    if s.records_ok == 0:
        print("error: no record was annotated successfully", file=sys.stderr)
        return 1
    out = _prepare_out(args.out, args.force)
    serialize_graph(graph.freeze(), out)
    config = {"annotator": kind, "intra_mode": intra_mode, "full_text": full_text,
              "exclusion": sorted(exclusion), "seed": _seed(args, cfg)}
    _write_manifest(out, "build", config, [args.annotations, args.relation_table, exclusion_path, relations_path],
                    _seed(args, cfg), started)
    print(graph)
    return 0


def cmd_filter(args) -> int:
    from mmkg.io import serialize_graph
    from mmkg.naf import run_naf, subgraph_from_selection

    started = time.time()
    cfg = _load_config(args)
    graph = _graph(args.graph)
    coverage = _pick(args.coverage, cfg, "coverage", "reachable")
    outcome = run_naf(graph, coverage=coverage)
    out = _prepare_out(args.out, args.force)
    with open(out / "scores.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write("# image_id\tscore\n")
        for s in outcome.scores:
            f.write(f"{s.image_id}\t{s.score!r}\n")
    with open(out / "selected.txt", "w", encoding="utf-8", newline="\n") as f:
        for m in outcome.selected:
            f.write(m + "\n")
    serialize_graph(subgraph_from_selection(graph, outcome), out)
    _write_manifest(out, "filter", {"coverage": coverage}, [args.graph], _seed(args, cfg), started)
    msg = f"selected {len(outcome.selected)} of {len(graph.images)} images; covered {len(outcome.covered_concepts)} concepts"
    if outcome.coverage_incomplete:
        msg += " (coverage incomplete)"
    print(msg)
    return 0


def cmd_stats(args) -> int:
    from mmkg.graph import compute_stats

    started = time.time()
    cfg = _load_config(args)
    stats = compute_stats(_graph(args.graph))
    if args.json:
        print(json.dumps(stats.to_dict(), indent=2))
    else:
        print(stats.format_table())
    if args.out:
        out = _prepare_out(args.out, args.force)
        with open(out / "stats.json", "w", encoding="utf-8") as f:
            json.dump(stats.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        _write_manifest(out, "stats", {}, [args.graph], _seed(args, cfg), started)
    return 0


def cmd_split(args) -> int:
    from mmkg.io import save_triples
    from mmkg.training import split_triples

    started = time.time()
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    ratios = _pick(args.ratios, cfg, "ratios", "8:1:1")
    graph = _graph(args.graph)
    split = split_triples(graph.sorted_triples(), ratios, seed)
    out = _prepare_out(args.out, args.force)
    for name, part in zip(SPLIT_FILES, (split.train, split.valid, split.test)):
        save_triples(part, out / name)
    _write_manifest(out, "split", {"ratios": list(split.ratios), "seed": seed}, [args.graph], seed, started)
    print(f"train {len(split.train)} / valid {len(split.valid)} / test {len(split.test)}")
    return 0


_TRAIN_FLAGS = {
    "dim": "dim", "epochs": "max_epochs", "batch_size": "batch_size", "lr": "learning_rate",
    "patience": "patience", "negatives": "negatives_per_positive", "loss": "loss_kind", "margin": "margin",
    "weight_decay": "weight_decay",
}


def cmd_train(args) -> int:
    from mmkg.models import VocabIndex, save_checkpoint
    from mmkg.training import TrainConfig, train

    started = time.time()
    cfg = _load_config(args)
    model_kind = _pick(args.model, cfg, "model", "transe")
    train_cfg = {k: v for k, v in cfg.items() if k not in ("model", "workers")}
    for flag, key in _TRAIN_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            train_cfg[key] = value
    train_cfg["seed"] = _seed(args, cfg)
    config = TrainConfig.from_dict(train_cfg)
    graph = _graph(args.graph)
    split = _load_split(args.split)
    vocab = VocabIndex.from_graph(graph)
    workers = _pick(args.workers, cfg, "workers", os.cpu_count() or 1)
    result = train(graph, split, model_kind, config, vocab=vocab, workers=workers,
                   progress=lambda rec: logger.info("epoch %d loss %.6f val_mr %.2f", rec.epoch, rec.loss, rec.val_mr))
    out = _prepare_out(args.out, args.force)
    save_checkpoint(result.state, out / "model.ckpt", extra={"best_epoch": result.best_epoch})
    result.write_history(out / "history.csv")
    with open(out / "config.json", "w", encoding="utf-8") as f:
        json.dump({"model": model_kind, **config.to_dict()}, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(out, "train", {"model": model_kind, **config.to_dict()}, [args.graph, args.split],
                    config.seed, started)
    print(f"{model_kind}: {len(result.history)} epochs, best epoch {result.best_epoch} "
          f"(val tail MR {min(r.val_mr for r in result.history):.2f})")
    return 0


def cmd_evaluate(args) -> int:
    from mmkg.evaluation import evaluate
    from mmkg.io import load_triples
    from mmkg.models import VocabIndex, init_model, load_checkpoint

    started = time.time()
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    graph = _graph(args.graph)
    vocab = VocabIndex.from_graph(graph)
    if args.triples:
        test = load_triples(args.triples)
    elif args.split:
        test = load_triples(Path(args.split) / "test.tsv")
    else:
        raise UsageError("give --split or --triples")
    state = load_checkpoint(args.checkpoint, vocab)
    workers = _pick(args.workers, cfg, "workers", os.cpu_count() or 1)
    ids = vocab.encode(test)
    report = evaluate(state, ids, workers=workers)
    out = _prepare_out(args.out, args.force)
    payload = report.to_dict()
    text = report.format_table()
    if args.baseline:
        base = evaluate(init_model(state.kind, state.dim, vocab, seed), ids, workers=workers,
                        model_name=f"{state.kind}-untrained")
        payload["baseline"] = base.to_dict()
        text += "\n\n" + base.format_table()
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(out / "report.txt", "w", encoding="utf-8") as f:
        f.write(text + "\n")
    _write_manifest(out, "evaluate", {"baseline": bool(args.baseline), "seed": seed},
                    [args.graph, args.checkpoint, args.triples or (Path(args.split) / "test.tsv")], seed, started)
    print(text)
    return 0


def cmd_gensynth(args) -> int:
    from mmkg.io import serialize_graph
    from mmkg.synth import TABLE1_SPEC, PlantedSpec, SynthSpec, generate

    started = time.time()
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    if args.spec:
        base = SynthSpec.from_json(args.spec).to_dict()
    elif args.table1:
        base = TABLE1_SPEC.to_dict()
    else:
        base = {"num_concepts": 250, "num_images": 250, "num_relations": 10, "cross_edges": 2500,
                "intra_edges": 2500, "planted": None}
    for flag, key in (("concepts", "num_concepts"), ("images", "num_images"), ("relations", "num_relations"),
                      ("cross", "cross_edges"), ("intra", "intra_edges")):
        if getattr(args, flag) is not None:
            base[key] = getattr(args, flag)
    if args.planted or args.latent_dim is not None or args.noise is not None:
        planted = dict(base.get("planted") or {})
        if args.latent_dim is not None:
            planted["latent_dim"] = args.latent_dim
        if args.noise is not None:
            planted["noise_sigma"] = args.noise
        base["planted"] = planted
    base["seed"] = seed
    spec = SynthSpec.from_dict(base)
    graph = generate(spec)
    out = _prepare_out(args.out, args.force)
    serialize_graph(graph.freeze(), out)
    with open(out / "spec.json", "w", encoding="utf-8") as f:
        json.dump(spec.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(out, "gen-synth", spec.to_dict(), [args.spec], seed, started)
    print(graph)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 42)")
    common.add_argument("--config", help="JSON config file; flags take precedence")
    common.add_argument("--workers", type=int, default=None, help="threads for parallel stages (default: all cores)")
    common.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mmkg", description="Multimodal medical knowledge graph toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[common], help="build a graph from candidate annotations")
    p.add_argument("--annotations", required=True, help="JSONL annotation records")
    p.add_argument("--relation-table", required=True, help="TSV cui_a, relation_id, cui_b")
    p.add_argument("--relations", help="optional relations.tsv declaring the allowed intra relation ids")
    p.add_argument("--exclusion", help="semantic-type exclusion list (default: bundled list)")
    p.add_argument("--annotator", choices=("mock", "http"), default=None)
    p.add_argument("--annotator-url", help="HTTP annotator endpoint (or $MMKG_ANNOTATOR_URL)")
    p.add_argument("--annotator-model", help="model name sent to the HTTP annotator")
    p.add_argument("--mock-polarity", choices=("cue", "Positive", "Negative", "Uncertain"), default=None)
    p.add_argument("--intra-mode", choices=("record", "global"), default=None)
    p.add_argument("--full-text", action="store_true", help="send the whole report instead of findings/impression")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("filter", parents=[common], help="neighbor-aware image filtering")
    p.add_argument("--graph", required=True)
    p.add_argument("--coverage", choices=("reachable", "all"), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("stats", parents=[common], help="graph summary statistics")
    p.add_argument("--graph", required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", parents=[common], help="train/valid/test split of the graph triples")
    p.add_argument("--graph", required=True)
    p.add_argument("--ratios", default=None, help="e.g. 8:1:1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train a link-prediction model")
    p.add_argument("--graph", required=True)
    p.add_argument("--split", required=True, help="directory with train/valid/test.tsv")
    p.add_argument("--model", default=None, help="transe, transh, transr, transd, rotate, rescal, distmult, "
                                                 "complex, simple, tucker, mure")
    p.add_argument("--dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--loss", choices=("logsigmoid", "margin"))
    p.add_argument("--margin", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="head/relation/tail ranking evaluation")
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", help="directory with test.tsv")
    p.add_argument("--triples", help="explicit triple file to evaluate")
    p.add_argument("--baseline", action="store_true", help="also evaluate an untrained model of the same kind")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-synth", parents=[common], help="generate a synthetic graph")
    p.add_argument("--spec", help="JSON synthetic spec")
    p.add_argument("--table1", action="store_true", help="use the published graph's summary counts")
    p.add_argument("--concepts", type=int)
    p.add_argument("--images", type=int)
    p.add_argument("--relations", type=int)
    p.add_argument("--cross", type=int)
    p.add_argument("--intra", type=int)
    p.add_argument("--planted", action="store_true", help="planted translational structure")
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gensynth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers is not None and args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (MMKGError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
