"""Labeled function records and dataset manifest I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path


class Label(str, Enum):
    BENIGN = "Benign"
    VULNERABLE = "Vulnerable"

    def flipped(self) -> "Label":
        return Label.VULNERABLE if self is Label.BENIGN else Label.BENIGN


class Provenance(str, Enum):
    ORIGINAL = "Original"
    COUNTERFACTUAL = "Counterfactual"
    UPSAMPLED = "Upsampled"


@dataclass(frozen=True)
class SourceFunction:
    """One labeled mini-C function.

    An original and its counterfactual share `id` and differ in provenance;
    their labels are negations of each other.
    """

    id: str
    source: str
    label: Label
    provenance: Provenance = Provenance.ORIGINAL
    cwe: str = "CWE-20"

    def as_record(self) -> dict:
        return {
            "id": self.id,
            "label": self.label.value,
            "provenance": self.provenance.value,
            "cwe": self.cwe,
            "source": self.source,
        }


class ManifestError(ValueError):
    """Malformed dataset manifest."""


def _function_from_record(rec: dict, base_dir: Path | None) -> SourceFunction:
    for key in ("id", "label", "provenance"):
        if key not in rec:
            raise ManifestError(f"function record missing field {key!r}")
    if "source" in rec:
        source = rec["source"]
    elif "source_path" in rec:
        if base_dir is None:
            raise ManifestError("source_path record requires a manifest file path")
        source = (base_dir / rec["source_path"]).read_text()
    else:
        raise ManifestError("function record needs 'source' or 'source_path'")
    try:
        label = Label(rec["label"])
        provenance = Provenance(rec["provenance"])
    except ValueError as exc:
        raise ManifestError(str(exc)) from None
    return SourceFunction(
        id=rec["id"],
        source=source,
        label=label,
        provenance=provenance,
        cwe=rec.get("cwe", "CWE-20"),
    )


def load_manifest(path: str | Path) -> list[SourceFunction]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or "functions" not in doc:
        raise ManifestError(f"{path}: manifest must be an object with 'functions'")
    return [_function_from_record(rec, path.parent) for rec in doc["functions"]]


def save_manifest(functions: list[SourceFunction], path: str | Path, header: dict | None = None) -> None:
    """Write a manifest with inline sources, ordered by (id, provenance)."""
    ordered = sorted(functions, key=lambda f: (f.id, f.provenance.value))
    doc: dict = dict(header or {})
    doc["functions"] = [f.as_record() for f in ordered]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def check_pairing(functions: list[SourceFunction]) -> None:
    """Validate id/label invariants of an original+counterfactual dataset."""
    by_id: dict[str, dict[Provenance, SourceFunction]] = {}
    for fn in functions:
        if not fn.id:
            raise ManifestError("empty function id")
        slot = by_id.setdefault(fn.id, {})
        if fn.provenance in slot:
            raise ManifestError(f"duplicate (id, provenance): {fn.id}/{fn.provenance.value}")
        slot[fn.provenance] = fn
    for fid, slot in by_id.items():
        orig = slot.get(Provenance.ORIGINAL)
        cf = slot.get(Provenance.COUNTERFACTUAL)
        if orig is not None and cf is not None and cf.label is not orig.label.flipped():
            raise ManifestError(f"counterfactual of {fid} does not flip the label")


def upsampled_copy(fn: SourceFunction) -> SourceFunction:
    return replace(fn, provenance=Provenance.UPSAMPLED)
