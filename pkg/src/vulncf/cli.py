"""Command-line pipeline: parse, gen-synth, augment, build-bench, train,
explain, metrics, serve, report. Every stage reads and writes the documented
file formats, accepts --seed wherever randomness exists, and exits nonzero
with a machine-readable error on failure."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _fail(code: str, detail: str, errors: list | None = None) -> int:
    sys.stderr.write(json.dumps({"error": {"code": code, "detail": detail, "fields": errors or []}}) + "\n")
    return 1


def cmd_parse(args) -> int:
    from .dataset import load_manifest
    from .lang import serialize_cpg
    from .pipeline import build_graphs

    functions = load_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graphs, errors = build_graphs(functions)
    for fn, g in graphs:
        path = out_dir / f"{fn.id}.{fn.provenance.value}.cpg.json"
        path.write_text(serialize_cpg(g))
    (out_dir / "errors.json").write_text(json.dumps(errors, indent=2) + "\n")
    print(f"wrote {len(graphs)} graphs to {out_dir} ({len(errors)} excluded)")
    return 0


def cmd_gen_synth(args) -> int:
    from .dataset import save_manifest
    from .synth import SynthConfig, gen_synthetic_corpus

    cfg = SynthConfig(
        n_pairs=args.n_pairs, spurious_strength=args.spurious_strength,
        seed=args.seed, benign_fraction=args.benign_fraction,
    )
    corpus = gen_synthetic_corpus(cfg)
    save_manifest(corpus, args.out, header={
        "n_pairs": cfg.n_pairs, "spurious_strength": cfg.spurious_strength,
        "seed": cfg.seed, "benign_fraction": cfg.benign_fraction,
    })
    print(f"wrote {len(corpus)} functions ({cfg.n_pairs} pairs) to {args.out}")
    return 0


def cmd_augment(args) -> int:
    from .dataset import Provenance, load_manifest, save_manifest
    from .pipeline import augment_originals

    functions = load_manifest(args.manifest)
    originals = [f for f in functions if f.provenance is Provenance.ORIGINAL]
    llm = None
    if args.llm_endpoint:
        from .counterfactual import CounterfactualCandidate, token_edit_distance
        from .llm import LlmClientConfig, build_llm_prompt, request_llm

        cfg = LlmClientConfig(endpoint_url=args.llm_endpoint, model_tag=args.llm_model)

        def llm(fn):
            code = request_llm(build_llm_prompt(fn), cfg)
            return CounterfactualCandidate(
                paired_id=fn.id, source=code, target_label=fn.label.flipped(),
                generator=f"llm:{cfg.model_tag}",
                edit_distance=token_edit_distance(fn.source, code),
            )

    dataset, records = augment_originals(
        originals, seed=args.seed, max_edit_tokens=args.max_edit_tokens, llm=llm,
    )
    out_dir = Path(args.out_dir)
    fn_dir = out_dir / "functions"
    fn_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[tuple[str, str], str] = {}
    for fn in dataset:
        suffix = "orig" if fn.provenance is Provenance.ORIGINAL else "cf"
        rel = f"functions/{fn.id}.{suffix}.c"
        (out_dir / rel).write_text(fn.source)
        paths[(fn.id, suffix)] = rel
    for rec in records:
        rec["original_path"] = paths.get((rec["id"], "orig"))
        rec["counterfactual_path"] = paths.get((rec["id"], "cf"))
    (out_dir / "augmentation.json").write_text(json.dumps({"pairs": records}, indent=2) + "\n")
    save_manifest(dataset, out_dir / "dataset.json", header={"seed": args.seed})
    accepted = sum(1 for r in records if r["validation"]["status"] == "accept")
    print(f"augmented {accepted}/{len(records)} pairs into {out_dir}")
    return 0


def cmd_build_bench(args) -> int:
    from .benchmark import build_all_benchmarks
    from .dataset import check_pairing, load_manifest

    corpus = load_manifest(args.corpus)
    check_pairing(corpus)
    written = build_all_benchmarks(
        corpus, total_train_size=args.total_train_size, seed=args.seed, out_dir=args.out_dir,
    )
    print(f"wrote {len(written)} ratio benchmarks plus val/test to {args.out_dir}")
    return 0


def cmd_train(args) -> int:
    from .benchmark import load_benchmark
    from .dataset import load_manifest
    from .pipeline import TrainSettings, train_classifier

    train_fns, header = load_benchmark(args.bench)
    val_fns = load_manifest(args.val)
    settings = TrainSettings(
        seed=args.seed, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
    )
    clf = train_classifier(train_fns, val_fns, settings)
    clf.save(args.out_dir)
    best = max((e.val_acc for e in clf.log), default=0.0)
    print(f"trained on {header.get('ratio')}% originals; best val acc {best:.3f}; saved to {args.out_dir}")
    return 0


def cmd_explain(args) -> int:
    from .dataset import load_manifest
    from .explain import ExplainerConfig, attribute, dependency_matrix
    from .model import Classifier
    from .pipeline import build_graphs

    clf = Classifier.load(args.model)
    functions = load_manifest(args.manifest)
    if args.limit:
        functions = functions[: args.limit]
    graphs, errors = build_graphs(functions)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = ExplainerConfig(seed=args.seed)
    for fn, g in graphs:
        res = attribute(clf, g, cfg)
        res.save(out_dir / f"{fn.id}.{fn.provenance.value}.attr.json")
        if args.dependency and len(g.nodes) >= 2:
            dm = dependency_matrix(clf, g, cfg, base_scores=res.scores)
            dm.save(out_dir / f"{fn.id}.{fn.provenance.value}.dep.json")
    print(f"explained {len(graphs)} functions into {out_dir} ({len(errors)} excluded)")
    return 0


def cmd_metrics(args) -> int:
    from .dataset import load_manifest
    from .explain import ExplainerConfig
    from .metrics import load_reports_json, write_reports_csv, write_reports_json
    from .model import Classifier
    from .pipeline import evaluate_on_test, write_projection_csv

    clf = Classifier.load(args.model)
    test_fns = load_manifest(args.test)
    art = evaluate_on_test(
        clf, test_fns, split_tag=args.split, seed=args.seed,
        explainer_cfg=ExplainerConfig(seed=args.seed),
        attribution_limit=args.attribution_limit,
    )
    reports = []
    out_json = Path(args.out_json)
    if args.append and out_json.exists():
        reports = load_reports_json(out_json)
    reports = [r for r in reports if r.split != args.split] + [art.report]
    write_reports_json(reports, out_json)
    if args.out_csv:
        write_reports_csv(reports, args.out_csv)
    if args.projection:
        write_projection_csv(art, args.projection)
    r = art.report
    print(f"[{r.split}] acc={r.accuracy:.3f} P-C={r.p_c:.2f} WGA2={r.wga[2]:.3f} "
          f"purity={r.purity:.3f} inter-D={r.inter_distance:.4f}")
    return 0


def cmd_serve(args) -> int:
    from .explain import ExplainerConfig
    from .service import build_state, serve

    state = build_state(
        model_dir=args.model, manifest_path=args.manifest,
        cache_dir=args.cache_dir, metrics_path=args.metrics,
        explainer_cfg=ExplainerConfig(seed=args.seed, masking_policy=args.masking_policy),
    )
    serve(state, host=args.host, port=args.port, ui_dir=args.ui_dir)
    return 0


def cmd_report(args) -> int:
    from .metrics import REPORT_COLUMNS, load_reports_json

    reports = []
    for path in args.metrics:
        reports.extend(load_reports_json(path))
    if not reports:
        return _fail("EmptyReport", "no metric rows found")
    widths = {c: max(len(c), 8) for c in REPORT_COLUMNS}
    print(" | ".join(c.ljust(widths[c]) for c in REPORT_COLUMNS))
    print("-+-".join("-" * widths[c] for c in REPORT_COLUMNS))
    for r in reports:
        row = r.row()
        cells = []
        for c in REPORT_COLUMNS:
            v = row[c]
            cells.append((f"{v:.4f}" if isinstance(v, float) else str(v)).ljust(widths[c]))
        print(" | ".join(cells))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vulncf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="dataset manifest -> CPG files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("gen-synth", help="generate the synthetic paired corpus")
    p.add_argument("--n-pairs", type=int, default=1000)
    p.add_argument("--spurious-strength", type=float, default=0.95)
    p.add_argument("--benign-fraction", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("augment", help="counterfactual generation + validation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-edit-tokens", type=int, default=25)
    p.add_argument("--llm-endpoint", default=None, help="OpenAI-compatible chat completions URL")
    p.add_argument("--llm-model", default="gpt-4o-mini")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("build-bench", help="build the 11 ratio benchmarks")
    p.add_argument("--corpus", required=True)
    p.add_argument("--total-train-size", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_build_bench)

    p = sub.add_parser("train", help="train on one benchmark")
    p.add_argument("--bench", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1.5e-3)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="attributions (and optionally dependency matrices)")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=0)
    p.add_argument("--dependency", action="store_true")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("metrics", help="full metric report for one trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--split", required=True, help="ratio tag, e.g. 50/50")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--attribution-limit", type=int, default=None)
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--projection", default=None)
    p.add_argument("--append", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("serve", help="start the inspection service")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--metrics", default=None)
    p.add_argument("--masking-policy", default="remove", choices=["remove", "zero"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8601)
    p.add_argument("--ui-dir", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="render stored metric rows as a table")
    p.add_argument("metrics", nargs="+")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
