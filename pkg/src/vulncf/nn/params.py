"""Trainable tensors of the gated-graph classifier and checkpoint I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1

# AST/CFG/DFG plus a reverse type per kind so information flows both ways
EDGE_TYPES = ["AST", "CFG", "DFG", "AST_rev", "CFG_rev", "DFG_rev"]


@dataclass
class Hyper:
    d_in: int
    d_h: int = 64
    steps: int = 6  # propagation rounds
    c1: int = 32
    c2: int = 16
    w1: int = 3
    w2: int = 2
    seed: int = 0

    def as_dict(self) -> dict:
        return {
            "d_in": self.d_in, "d_h": self.d_h, "steps": self.steps,
            "c1": self.c1, "c2": self.c2, "w1": self.w1, "w2": self.w2,
            "seed": self.seed,
        }


@dataclass
class ModelParams:
    hyper: Hyper
    proj: np.ndarray         # d_h x d_in
    edge_w: np.ndarray       # 6 x d_h x d_h
    gru_wz: np.ndarray       # d_h x 2*d_h
    gru_wr: np.ndarray
    gru_wh: np.ndarray
    gru_bz: np.ndarray       # d_h
    gru_br: np.ndarray
    gru_bh: np.ndarray
    conv1_w: np.ndarray      # c1 x w1 x (d_h + d_in)
    conv1_b: np.ndarray      # c1
    conv2_w: np.ndarray      # c2 x w2 x c1
    conv2_b: np.ndarray      # c2
    cls_w: np.ndarray        # 2 x c2
    cls_b: np.ndarray        # 2

    def tensors(self) -> dict[str, np.ndarray]:
        return {
            "proj": self.proj, "edge_w": self.edge_w,
            "gru_wz": self.gru_wz, "gru_wr": self.gru_wr, "gru_wh": self.gru_wh,
            "gru_bz": self.gru_bz, "gru_br": self.gru_br, "gru_bh": self.gru_bh,
            "conv1_w": self.conv1_w, "conv1_b": self.conv1_b,
            "conv2_w": self.conv2_w, "conv2_b": self.conv2_b,
            "cls_w": self.cls_w, "cls_b": self.cls_b,
        }

    def copy(self) -> "ModelParams":
        return ModelParams(
            hyper=self.hyper, **{k: v.copy() for k, v in self.tensors().items()}
        )

    def check_finite(self) -> None:
        for name, t in self.tensors().items():
            if not np.isfinite(t).all():
                raise ValueError(f"tensor {name} contains non-finite values")


class ShapeError(ValueError):
    pass


def init_params(hyper: Hyper) -> ModelParams:
    rng = np.random.default_rng(hyper.seed)
    d_h, d_in = hyper.d_h, hyper.d_in
    d_seq = d_h + d_in

    def glorot(*shape: int) -> np.ndarray:
        fan = shape[-1] + shape[0]
        return rng.normal(0.0, np.sqrt(2.0 / fan), size=shape)

    return ModelParams(
        hyper=hyper,
        proj=glorot(d_h, d_in),
        edge_w=np.stack([glorot(d_h, d_h) / len(EDGE_TYPES) for _ in EDGE_TYPES]),
        gru_wz=glorot(d_h, 2 * d_h),
        gru_wr=glorot(d_h, 2 * d_h),
        gru_wh=glorot(d_h, 2 * d_h),
        gru_bz=np.zeros(d_h),
        gru_br=np.zeros(d_h),
        gru_bh=np.zeros(d_h),
        conv1_w=glorot(hyper.c1, hyper.w1, d_seq) / hyper.w1,
        conv1_b=np.zeros(hyper.c1),
        conv2_w=glorot(hyper.c2, hyper.w2, hyper.c1) / hyper.w2,
        conv2_b=np.zeros(hyper.c2),
        cls_w=glorot(2, hyper.c2),
        cls_b=np.zeros(2),
    )


def zeros_like_params(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors().items()}


def save_checkpoint(params: ModelParams, vocab_hash: str, path: str | Path,
                    extra: dict | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "hyper": params.hyper.as_dict(),
        "vocab_hash": vocab_hash,
        "extra": extra or {},
        "tensors": {k: v.tolist() for k, v in params.tensors().items()},
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path: str | Path, expect_vocab_hash: str | None = None) -> tuple[ModelParams, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    if expect_vocab_hash is not None and doc["vocab_hash"] != expect_vocab_hash:
        raise ValueError("checkpoint vocab hash does not match the provided vocabulary")
    hyper = Hyper(**doc["hyper"])
    tensors = {k: np.asarray(v, dtype=np.float64) for k, v in doc["tensors"].items()}
    params = ModelParams(hyper=hyper, **tensors)
    _check_shapes(params)
    return params, doc


def _check_shapes(p: ModelParams) -> None:
    h = p.hyper
    d_seq = h.d_h + h.d_in
    expected = {
        "proj": (h.d_h, h.d_in),
        "edge_w": (len(EDGE_TYPES), h.d_h, h.d_h),
        "gru_wz": (h.d_h, 2 * h.d_h), "gru_wr": (h.d_h, 2 * h.d_h), "gru_wh": (h.d_h, 2 * h.d_h),
        "gru_bz": (h.d_h,), "gru_br": (h.d_h,), "gru_bh": (h.d_h,),
        "conv1_w": (h.c1, h.w1, d_seq), "conv1_b": (h.c1,),
        "conv2_w": (h.c2, h.w2, h.c1), "conv2_b": (h.c2,),
        "cls_w": (2, h.c2), "cls_b": (2,),
    }
    for name, t in p.tensors().items():
        if t.shape != expected[name]:
            raise ShapeError(f"{name}: expected {expected[name]}, got {t.shape}")
