"""HTTP inspection service: a read-only model, its dataset, explanations,
what-if masking and stored metric reports behind a versioned JSON API.

The model and dataset are loaded once at startup and never mutated by
requests; attribution results and dependency matrices are computed lazily
and cached to disk with atomic writes.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .dataset import Label, Provenance, SourceFunction, load_manifest
from .explain import (
    DegenerateGraph,
    DependencyMatrix,
    ExplainerConfig,
    attribute,
    dependency_matrix,
    evaluate_subset,
    induced_subgraph,
    negative_subgraph,
    optimal_subgraph,
    positive_subgraph,
)
from .lang.cpg import CodePropertyGraph
from .metrics import MetricsReport, load_reports_json
from .model import Classifier
from .pipeline import build_graphs

API_PREFIX = "/api/v1"

SUBGRAPH_MODES = ("positive", "negative", "optimal")


@dataclass
class SessionState:
    classifier: Classifier
    functions: dict[tuple[str, str], SourceFunction]
    graphs: dict[tuple[str, str], CodePropertyGraph]
    explainer_cfg: ExplainerConfig
    cache_dir: Path | None
    reports: dict[str, MetricsReport] = field(default_factory=dict)
    attr_cache: dict = field(default_factory=dict)
    dep_cache: dict = field(default_factory=dict)
    projection: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def policy_tag(self) -> str:
        meta = json.dumps(self.explainer_cfg.meta(), sort_keys=True)
        return hashlib.sha256(meta.encode()).hexdigest()[:12]


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _key(fid: str, provenance: str) -> tuple[str, str]:
    return (fid, provenance)


def build_state(
    model_dir: str | Path,
    manifest_path: str | Path,
    cache_dir: str | Path | None = None,
    metrics_path: str | Path | None = None,
    explainer_cfg: ExplainerConfig | None = None,
) -> SessionState:
    classifier = Classifier.load(model_dir)
    functions = load_manifest(manifest_path)
    graphs, errors = build_graphs(functions)
    if errors:
        raise ValueError(f"manifest contains unparsable functions: {errors}")
    state = SessionState(
        classifier=classifier,
        functions={_key(fn.id, fn.provenance.value): fn for fn, _ in graphs},
        graphs={_key(fn.id, fn.provenance.value): g for fn, g in graphs},
        explainer_cfg=explainer_cfg or ExplainerConfig(),
        cache_dir=Path(cache_dir) if cache_dir else None,
    )
    if state.cache_dir:
        state.cache_dir.mkdir(parents=True, exist_ok=True)
    if metrics_path:
        state.reports = {r.split: r for r in load_reports_json(metrics_path)}
    from .metrics import project_2d

    keys = sorted(state.graphs)
    embeddings = np.asarray([
        classifier.graph_embedding(state.graphs[k]) for k in keys
    ])
    coords = project_2d(embeddings) if len(keys) >= 2 else np.zeros((len(keys), 2))
    state.projection = [
        {
            "function_id": fid, "provenance": prov,
            "x": float(x), "y": float(y),
            "label": state.functions[(fid, prov)].label.value,
        }
        for (fid, prov), (x, y) in zip(keys, coords)
    ]
    return state


def _cached_attribution(state: SessionState, key: tuple[str, str]):
    cache_key = (*key, state.policy_tag())
    with state.lock:
        if cache_key in state.attr_cache:
            return state.attr_cache[cache_key]
    disk = None
    if state.cache_dir:
        disk = state.cache_dir / f"attr_{key[0]}_{key[1]}_{state.policy_tag()}.json"
        if disk.exists():
            doc = json.loads(disk.read_text())
            result = doc["scores"], doc["prediction"], doc["confidence"]
            with state.lock:
                state.attr_cache[cache_key] = result
            return result
    res = attribute(state.classifier, state.graphs[key], state.explainer_cfg)
    result = ([float(s) for s in res.scores], res.prediction.value, res.confidence)
    if disk is not None:
        _atomic_write(disk, json.dumps(res.to_json_dict(), indent=2) + "\n")
    with state.lock:
        state.attr_cache[cache_key] = result
    return result


def _cached_dependency(state: SessionState, key: tuple[str, str]) -> DependencyMatrix:
    cache_key = (*key, state.policy_tag())
    with state.lock:
        if cache_key in state.dep_cache:
            return state.dep_cache[cache_key]
    disk = None
    if state.cache_dir:
        disk = state.cache_dir / f"dep_{key[0]}_{key[1]}_{state.policy_tag()}.json"
        if disk.exists():
            dm = DependencyMatrix.load(disk)
            with state.lock:
                state.dep_cache[cache_key] = dm
            return dm
    scores, _, _ = _cached_attribution(state, key)
    dm = dependency_matrix(
        state.classifier, state.graphs[key], state.explainer_cfg,
        base_scores=np.asarray(scores),
    )
    if disk is not None:
        _atomic_write(disk, json.dumps(dm.to_json_dict(), indent=2) + "\n")
    with state.lock:
        state.dep_cache[cache_key] = dm
    return dm


class WhatIfRequest(BaseModel):
    node_ids: list[int]
    provenance: str = "Original"


def _lookup(state: SessionState, fid: str, provenance: str) -> tuple[str, str]:
    key = _key(fid, provenance)
    if key not in state.graphs:
        raise HTTPException(status_code=404, detail=f"unknown function {fid}/{provenance}")
    return key


def _explanation_payload(state: SessionState, key: tuple[str, str]) -> dict:
    fn = state.functions[key]
    g = state.graphs[key]
    scores, prediction, confidence = _cached_attribution(state, key)
    return {
        "function_id": fn.id,
        "provenance": fn.provenance.value,
        "label": fn.label.value,
        "source": fn.source,
        "prediction": prediction,
        "confidence": confidence,
        "correct": prediction == fn.label.value,
        "scores": scores,
        "nodes": [
            {
                "id": n.node_id, "kind": n.kind, "line": n.line,
                "span": [n.span[0], n.span[1]], "code": n.code,
            }
            for n in g.nodes
        ],
        "edges": [{"src": e.src, "dst": e.dst, "kind": e.kind} for e in g.edges],
    }


def create_app(state: SessionState, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="vulncf inspection service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    app.state.session = state
    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    @app.get(API_PREFIX + "/functions")
    def list_functions(
        label: str | None = None,
        provenance: str | None = None,
        page: int = Query(1, ge=1),
        page_size: int = Query(50, ge=1, le=500),
    ):
        rows = []
        for key in sorted(state.functions):
            fn = state.functions[key]
            if label is not None and fn.label.value != label:
                continue
            if provenance is not None and fn.provenance.value != provenance:
                continue
            pred, conf = state.classifier.predict(state.graphs[key])
            rows.append({
                "id": fn.id,
                "provenance": fn.provenance.value,
                "label": fn.label.value,
                "prediction": pred.value,
                "confidence": conf,
                "correct": pred is fn.label,
            })
        start = (page - 1) * page_size
        return {
            "total": len(rows),
            "page": page,
            "page_size": page_size,
            "functions": rows[start : start + page_size],
        }

    @app.get(API_PREFIX + "/functions/{fid}/explanation")
    def get_explanation(fid: str, provenance: str = "Original"):
        key = _lookup(state, fid, provenance)
        return _explanation_payload(state, key)

    @app.get(API_PREFIX + "/functions/{fid}/subgraph")
    def get_subgraph(fid: str, mode: str, provenance: str = "Original"):
        if mode not in SUBGRAPH_MODES:
            raise HTTPException(status_code=400, detail=f"mode must be one of {SUBGRAPH_MODES}")
        key = _lookup(state, fid, provenance)
        fn = state.functions[key]
        g = state.graphs[key]
        scores, _, _ = _cached_attribution(state, key)
        scores_arr = np.asarray(scores)
        policy = state.explainer_cfg.masking_policy
        if mode == "positive":
            res = positive_subgraph(state.classifier, g, scores_arr, fn.label, policy)
        elif mode == "negative":
            res = negative_subgraph(state.classifier, g, scores_arr, policy)
        else:
            res = optimal_subgraph(state.classifier, g, scores_arr, policy)
        return res.to_json_dict()

    @app.post(API_PREFIX + "/functions/{fid}/what-if")
    def what_if_mask(fid: str, request: WhatIfRequest):
        key = _lookup(state, fid, request.provenance)
        g = state.graphs[key]
        n = len(g.nodes)
        bad = [i for i in request.node_ids if not 0 <= i < n]
        if bad:
            raise HTTPException(status_code=400, detail=f"invalid node ids {bad}")
        masked = set(request.node_ids)
        if len(masked) >= n:
            raise HTTPException(status_code=400, detail="mask would remove every node")
        if not masked:
            return _explanation_payload(state, key)
        keep = [i for i in range(n) if i not in masked]
        policy = state.explainer_cfg.masking_policy
        pred, conf, _ = evaluate_subset(state.classifier, g, keep, policy)
        if policy == "zero":
            sub = g
            remap = {i: i for i in keep}
        else:
            sub, remap = induced_subgraph(g, keep)
        res = attribute(state.classifier, sub, state.explainer_cfg)
        mapped = np.zeros(n)
        for old, new in remap.items():
            mapped[old] = res.scores[new]
        for i in masked:
            mapped[i] = 0.0
        fn = state.functions[key]
        return {
            "function_id": fn.id,
            "provenance": fn.provenance.value,
            "masked_node_ids": sorted(masked),
            "prediction": pred.value,
            "confidence": conf,
            "scores": [float(s) for s in mapped],
        }

    @app.get(API_PREFIX + "/functions/{fid}/dependency")
    def get_dependency(fid: str, provenance: str = "Original"):
        key = _lookup(state, fid, provenance)
        g = state.graphs[key]
        try:
            dm = _cached_dependency(state, key)
        except DegenerateGraph as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        doc = dm.to_json_dict()
        doc["node_labels"] = [f"{n.node_id}:{n.kind}" for n in g.nodes]
        return doc

    @app.get(API_PREFIX + "/metrics/{tag}")
    def get_metrics(tag: str):
        split = tag.replace("-", "/").replace("_", "/")
        if split not in state.reports:
            raise HTTPException(status_code=404, detail=f"no report for split {split}")
        return state.reports[split].to_json_dict()

    @app.get(API_PREFIX + "/projection")
    def get_projection():
        return {"points": state.projection}

    return app


def serve(state: SessionState, host: str = "127.0.0.1", port: int = 8601,
          ui_dir: str | Path | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(state, ui_dir=ui_dir), host=host, port=port, log_level="info")
