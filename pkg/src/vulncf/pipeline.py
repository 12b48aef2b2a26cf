"""End-to-end orchestration: corpus -> graphs -> embeddings -> classifier
-> metrics report. Shared by the command-line entry points, the inspection
service, and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .counterfactual import token_edit_distance
from .dataset import Label, SourceFunction
from .embedding import SkipgramConfig, build_vocab, pretrain_skipgram
from .explain import ExplainerConfig, attribute
from .lang import LexError, ParseError, assemble_cpg
from .lang.cpg import CodePropertyGraph
from .metrics import (
    MetricsReport,
    attribution_signature,
    collect_pairs,
    inter_class_distance,
    intra_class_variance,
    neighborhood_purity,
    pairwise_metrics,
    project_2d,
    standard_metrics,
    worst_group_accuracy,
)
from .model import CLASS_INDEX, Classifier, fresh_params
from .nn import TrainConfig, train


@dataclass
class TrainSettings:
    seed: int = 0
    epochs: int = 12
    batch_size: int = 32
    lr: float = 1.5e-3
    d_h: int = 64
    steps: int = 6
    c1: int = 32
    c2: int = 16
    d_tok: int = 32
    skipgram_epochs: int = 3
    min_count: int = 1


def build_graphs(
    functions: list[SourceFunction],
) -> tuple[list[tuple[SourceFunction, CodePropertyGraph]], list[dict]]:
    """Assemble graphs, excluding functions that fail to parse; failures are
    returned as records rather than raised."""
    ok: list[tuple[SourceFunction, CodePropertyGraph]] = []
    errors: list[dict] = []
    for fn in functions:
        try:
            ok.append((fn, assemble_cpg(fn)))
        except (LexError, ParseError) as exc:
            errors.append({
                "id": fn.id, "provenance": fn.provenance.value, "error": str(exc),
            })
    return ok, errors


def train_classifier(
    train_fns: list[SourceFunction],
    val_fns: list[SourceFunction],
    settings: TrainSettings | None = None,
) -> Classifier:
    settings = settings or TrainSettings()
    vocab = build_vocab(train_fns, min_count=settings.min_count)
    table = pretrain_skipgram(
        train_fns, vocab,
        SkipgramConfig(d_tok=settings.d_tok, epochs=settings.skipgram_epochs, seed=settings.seed),
    )
    clf = Classifier(
        params=fresh_params(
            table, seed=settings.seed, d_h=settings.d_h, steps=settings.steps,
            c1=settings.c1, c2=settings.c2,
        ),
        table=table,
    )
    train_graphs, train_errors = build_graphs(train_fns)
    val_graphs, val_errors = build_graphs(val_fns)
    if train_errors or val_errors:
        raise ValueError(f"unparsable functions in training data: {train_errors + val_errors}")
    train_samples = [(clf.tensors_for(g), CLASS_INDEX[fn.label]) for fn, g in train_graphs]
    val_samples = [(clf.tensors_for(g), CLASS_INDEX[fn.label]) for fn, g in val_graphs]
    clf.params, clf.log = train(
        train_samples, val_samples, clf.params,
        TrainConfig(epochs=settings.epochs, batch_size=settings.batch_size,
                    lr=settings.lr, seed=settings.seed),
    )
    return clf


@dataclass
class EvaluationArtifacts:
    report: MetricsReport
    ids_provenance: list[tuple[str, str]]
    labels: list[Label]
    preds: list[Label]
    confidences: list[float]
    embeddings: np.ndarray
    projection: np.ndarray
    attributed_ids: list[str] = field(default_factory=list)


def evaluate_on_test(
    clf: Classifier,
    test_fns: list[SourceFunction],
    split_tag: str,
    seed: int = 0,
    explainer_cfg: ExplainerConfig | None = None,
    attribution_limit: int | None = None,
) -> EvaluationArtifacts:
    """Full per-split report over a paired test set.

    Attribution signatures are computed over the first `attribution_limit`
    test functions (all of them by default); everything else uses the whole
    set.
    """
    explainer_cfg = explainer_cfg or ExplainerConfig(seed=seed)
    graphs, errors = build_graphs(test_fns)
    if errors:
        raise ValueError(f"unparsable functions in test data: {errors}")

    from .nn import forward, softmax

    ids_provenance, labels, preds, confs, embeddings = [], [], [], [], []
    for fn, g in graphs:
        cache = forward(clf.tensors_for(g), clf.params)
        probs = softmax(cache.logits)
        idx = int(np.argmax(probs))
        ids_provenance.append((fn.id, fn.provenance.value))
        labels.append(fn.label)
        preds.append([Label.BENIGN, Label.VULNERABLE][idx])
        confs.append(float(probs[idx]))
        embeddings.append(cache.pooled)
    emb = np.asarray(embeddings)

    std = standard_metrics(preds, labels)
    pw = pairwise_metrics(collect_pairs(ids_provenance, preds, labels))
    wga = {k: worst_group_accuracy(emb, labels, preds, k, seed=seed) for k in range(2, 8)}
    purity = neighborhood_purity(emb, labels, k_nn=10)

    limit = len(graphs) if attribution_limit is None else min(attribution_limit, len(graphs))
    signatures, sig_labels, attributed = [], [], []
    for fn, g in graphs[:limit]:
        res = attribute(clf, g, explainer_cfg)
        signatures.append(attribution_signature(res.scores, g))
        sig_labels.append(fn.label)
        attributed.append(fn.id)
    sig = np.asarray(signatures)
    intra = intra_class_variance(sig, sig_labels)
    inter = inter_class_distance(sig, sig_labels)

    report = MetricsReport(
        split=split_tag,
        accuracy=std["accuracy"], precision=std["precision"],
        recall=std["recall"], f1=std["f1"],
        p_c=pw["P-C"], p_v=pw["P-V"], p_b=pw["P-B"], p_r=pw["P-R"],
        wga=wga, purity=purity,
        intra_benign=intra["intra_benign"],
        intra_vulnerable=intra["intra_vulnerable"],
        inter_distance=inter,
        flags=std["flags"],
    )
    report.validate()
    return EvaluationArtifacts(
        report=report, ids_provenance=ids_provenance, labels=labels, preds=preds,
        confidences=confs, embeddings=emb, projection=project_2d(emb),
        attributed_ids=attributed,
    )


def write_projection_csv(art: EvaluationArtifacts, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["function_id", "x", "y", "label"])
        for (fid, prov), (x, y), label in zip(art.ids_provenance, art.projection, art.labels):
            writer.writerow([f"{fid}/{prov}", repr(float(x)), repr(float(y)), label.value])


def augment_originals(
    originals: list[SourceFunction],
    seed: int = 0,
    max_edit_tokens: int = 25,
    llm=None,
) -> tuple[list[SourceFunction], list[dict]]:
    """Counterfactual per original via the rule engine (or a caller-supplied
    generator); rejected or failed pairs drop both members. Returns the
    paired dataset and the per-pair augmentation records."""
    from .counterfactual import (
        NoApplicableRule,
        ValidationPolicy,
        generate_rule_based,
        validate_counterfactual,
    )
    from .dataset import Provenance

    policy = ValidationPolicy(max_edit_tokens=max_edit_tokens)
    out: list[SourceFunction] = []
    records: list[dict] = []
    for fn in originals:
        record = {"id": fn.id, "generator": None, "edit_distance": None, "validation": None}
        try:
            cand = llm(fn) if llm is not None else generate_rule_based(fn, rng_seed=seed)
        except NoApplicableRule as exc:
            record["validation"] = {"status": "reject", "reason": f"NoApplicableRule: {exc}"}
            records.append(record)
            continue
        record["generator"] = cand.generator
        record["edit_distance"] = cand.edit_distance
        verdict = validate_counterfactual(fn, cand, policy)
        if verdict.accepted:
            record["validation"] = {"status": "accept"}
            out.append(fn)
            out.append(SourceFunction(
                id=fn.id, source=cand.source, label=cand.target_label,
                provenance=Provenance.COUNTERFACTUAL, cwe=fn.cwe,
            ))
        else:
            record["validation"] = {"status": "reject", "reason": verdict.reason}
        records.append(record)
    return out, records
