"""Benchmark construction: id-level splits, ratio-controlled training sets
with per-cell upsampling, and the fixed paired test set shared by every
ratio."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Label, Provenance, SourceFunction, load_manifest, save_manifest, upsampled_copy

RATIO_STEPS = tuple(range(0, 101, 10))


class InsufficientData(ValueError):
    pass


class EmptyCell(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkSpec:
    ratio_original: int     # percent of each class drawn from originals
    total_train_size: int
    seed: int

    def validate(self) -> None:
        if self.ratio_original not in RATIO_STEPS:
            raise ValueError(f"ratio_original must be one of {RATIO_STEPS}")
        if self.total_train_size < 2 or self.total_train_size % 20 != 0:
            # divisibility by 20 keeps every class x source quota integral
            raise ValueError("total_train_size must be a positive multiple of 20")

    @property
    def tag(self) -> str:
        return f"{self.ratio_original}/{100 - self.ratio_original}"


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[SourceFunction, ...]
    val: tuple[SourceFunction, ...]
    test: tuple[SourceFunction, ...]

    def ids(self, part: str) -> set[str]:
        return {f.id for f in getattr(self, part)}


def split_by_id(
    pairs: list[SourceFunction],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Shuffle unique ids and partition them; both pair members follow
    their id so originals and counterfactuals never straddle splits."""
    ids = sorted({f.id for f in pairs})
    n = len(ids)
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise InsufficientData(f"{n} ids cannot fill a {ratios} split")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(n)]
    train_ids = set(order[:n_train])
    val_ids = set(order[n_train : n_train + n_val])

    def part(member_ids: set[str]) -> tuple[SourceFunction, ...]:
        return tuple(sorted(
            (f for f in pairs if f.id in member_ids),
            key=lambda f: (f.id, f.provenance.value),
        ))

    test_ids = set(order[n_train + n_val :])
    return DatasetSplit(train=part(train_ids), val=part(val_ids), test=part(test_ids))


def quota_table(spec: BenchmarkSpec) -> dict[tuple[Label, Provenance], int]:
    per_class = spec.total_train_size // 2
    orig = per_class * spec.ratio_original // 100
    return {
        (Label.BENIGN, Provenance.ORIGINAL): orig,
        (Label.BENIGN, Provenance.COUNTERFACTUAL): per_class - orig,
        (Label.VULNERABLE, Provenance.ORIGINAL): orig,
        (Label.VULNERABLE, Provenance.COUNTERFACTUAL): per_class - orig,
    }


def compose_ratio_benchmark(train_pool: list[SourceFunction], spec: BenchmarkSpec) -> list[SourceFunction]:
    """Exact class balance and exact source ratio; short cells are filled by
    sampling with replacement, marked as upsampled."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    out: list[SourceFunction] = []
    for (label, provenance), quota in quota_table(spec).items():
        cell = sorted(
            (f for f in train_pool if f.label is label and f.provenance is provenance),
            key=lambda f: f.id,
        )
        if quota == 0:
            continue
        if not cell:
            raise EmptyCell(f"no {provenance.value} {label.value} examples to fill quota {quota}")
        if quota <= len(cell):
            picked = [cell[i] for i in rng.permutation(len(cell))[:quota]]
            out.extend(sorted(picked, key=lambda f: f.id))
        else:
            out.extend(cell)
            extra_idx = rng.integers(0, len(cell), size=quota - len(cell))
            out.extend(upsampled_copy(cell[i]) for i in extra_idx)
    order = np.random.default_rng(spec.seed + 1).permutation(len(out))
    return [out[i] for i in order]


def build_paired_test_set(split: DatasetSplit) -> list[SourceFunction]:
    """Both members of every test id, ordered by id with originals first."""
    by_id: dict[str, dict[Provenance, SourceFunction]] = {}
    for f in split.test:
        by_id.setdefault(f.id, {})[f.provenance] = f
    out: list[SourceFunction] = []
    for fid in sorted(by_id):
        members = by_id[fid]
        if Provenance.ORIGINAL not in members or Provenance.COUNTERFACTUAL not in members:
            raise InsufficientData(f"test id {fid} is missing a pair member")
        out.append(members[Provenance.ORIGINAL])
        out.append(members[Provenance.COUNTERFACTUAL])
    return out


def source_counts(functions: list[SourceFunction]) -> dict[str, dict[str, int]]:
    counts = {
        label.value: {"original": 0, "counterfactual": 0, "upsampled": 0}
        for label in Label
    }
    key = {
        Provenance.ORIGINAL: "original",
        Provenance.COUNTERFACTUAL: "counterfactual",
        Provenance.UPSAMPLED: "upsampled",
    }
    for f in functions:
        counts[f.label.value][key[f.provenance]] += 1
    return counts


def save_benchmark(functions: list[SourceFunction], spec: BenchmarkSpec, path: str | Path) -> None:
    doc = {
        "ratio": spec.ratio_original,
        "seed": spec.seed,
        "total_train_size": spec.total_train_size,
        "counts": source_counts(functions),
        "functions": [f.as_record() for f in functions],  # composition order preserved
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_benchmark(path: str | Path) -> tuple[list[SourceFunction], dict]:
    doc = json.loads(Path(path).read_text())
    functions = [
        SourceFunction(
            id=r["id"], source=r["source"], label=Label(r["label"]),
            provenance=Provenance(r["provenance"]), cwe=r.get("cwe", "CWE-20"),
        )
        for r in doc["functions"]
    ]
    return functions, {k: v for k, v in doc.items() if k != "functions"}


def build_all_benchmarks(
    corpus: list[SourceFunction],
    total_train_size: int,
    seed: int,
    out_dir: str | Path,
) -> dict:
    """One split, eleven ratio benchmarks sharing the same paired test set."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    split = split_by_id(corpus, seed=seed)
    save_manifest(list(split.val), out_dir / "val.json", header={"part": "val", "seed": seed})
    test = build_paired_test_set(split)
    save_manifest(test, out_dir / "test.json", header={"part": "test", "seed": seed})
    written = {}
    for ratio in RATIO_STEPS:
        spec = BenchmarkSpec(ratio_original=ratio, total_train_size=total_train_size, seed=seed)
        bench = compose_ratio_benchmark(list(split.train), spec)
        name = f"ratio_{ratio:03d}.json"
        save_benchmark(bench, spec, out_dir / name)
        written[spec.tag] = name
    (out_dir / "index.json").write_text(json.dumps(
        {"seed": seed, "total_train_size": total_train_size, "benchmarks": written,
         "val": "val.json", "test": "test.json"}, indent=2) + "\n")
    return written
