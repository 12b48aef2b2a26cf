"""Trained classifier bundle: embedding table + network parameters."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Label
from .embedding import EmbeddingTable, feature_dim, node_features
from .lang.cpg import CodePropertyGraph
from .nn import (
    GraphTensors,
    Hyper,
    ModelParams,
    TrainLogEntry,
    graph_tensors,
    init_params,
    load_checkpoint,
    predict_index,
    save_checkpoint,
)

CLASS_LABELS = [Label.BENIGN, Label.VULNERABLE]
CLASS_INDEX = {Label.BENIGN: 0, Label.VULNERABLE: 1}


@dataclass
class Classifier:
    params: ModelParams
    table: EmbeddingTable
    log: list[TrainLogEntry] = field(default_factory=list)

    def tensors_for(self, g: CodePropertyGraph) -> GraphTensors:
        return graph_tensors(g, node_features(g, self.table))

    def predict(self, g: CodePropertyGraph) -> tuple[Label, float]:
        idx, conf = predict_index(self.tensors_for(g), self.params)
        return CLASS_LABELS[idx], conf

    def graph_embedding(self, g: CodePropertyGraph) -> np.ndarray:
        from .nn import forward

        return forward(self.tensors_for(g), self.params).pooled

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.table.save(directory / "embedding.json")
        save_checkpoint(
            self.params,
            vocab_hash=self.table.vocab.content_hash(),
            path=directory / "checkpoint.json",
            extra={"log": [[e.epoch, e.train_loss, e.val_acc] for e in self.log]},
        )
        with open(directory / "training_log.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_acc"])
            for e in self.log:
                writer.writerow([e.epoch, repr(e.train_loss), repr(e.val_acc)])

    @classmethod
    def load(cls, directory: str | Path) -> "Classifier":
        directory = Path(directory)
        table = EmbeddingTable.load(directory / "embedding.json")
        params, doc = load_checkpoint(
            directory / "checkpoint.json", expect_vocab_hash=table.vocab.content_hash()
        )
        log = [TrainLogEntry(epoch=int(e), train_loss=l, val_acc=a) for e, l, a in doc["extra"].get("log", [])]
        return cls(params=params, table=table, log=log)


def fresh_params(table: EmbeddingTable, seed: int = 0, **overrides) -> ModelParams:
    hyper = Hyper(d_in=feature_dim(table), seed=seed, **overrides)
    return init_params(hyper)
