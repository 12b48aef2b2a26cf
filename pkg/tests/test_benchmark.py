import math
from collections import Counter

import numpy as np
import pytest

from vulncf.benchmark import (
    BenchmarkSpec,
    EmptyCell,
    InsufficientData,
    build_all_benchmarks,
    build_paired_test_set,
    compose_ratio_benchmark,
    load_benchmark,
    quota_table,
    source_counts,
    split_by_id,
)
from vulncf.dataset import Label, Provenance, SourceFunction, check_pairing, load_manifest
from vulncf.lang import assemble_cpg
from vulncf.synth import DECOY_TOKEN, SynthConfig, gen_synthetic_corpus


def make_pairs(n, benign_fraction=0.5, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        benign = rng.random() < benign_fraction
        label = Label.BENIGN if benign else Label.VULNERABLE
        out.append(SourceFunction(id=f"p{i:04d}", source=f"int f{i}(){{return {i % 7};}}",
                                  label=label, provenance=Provenance.ORIGINAL))
        out.append(SourceFunction(id=f"p{i:04d}", source=f"int f{i}(){{return {i % 5 + 1};}}",
                                  label=label.flipped(), provenance=Provenance.COUNTERFACTUAL))
    return out


class TestSplit:
    def test_ten_ids_split_8_1_1(self):
        split = split_by_id(make_pairs(10), seed=1)
        assert len(split.ids("train")) == 8
        assert len(split.ids("val")) == 1
        assert len(split.ids("test")) == 1

    def test_same_seed_identical(self):
        pairs = make_pairs(40)
        a = split_by_id(pairs, seed=9)
        b = split_by_id(pairs, seed=9)
        assert a == b

    def test_pair_members_never_straddle(self):
        for seed in range(5):
            pairs = make_pairs(50, seed=seed)
            split = split_by_id(pairs, seed=seed)
            parts = [split.ids("train"), split.ids("val"), split.ids("test")]
            for i, a in enumerate(parts):
                for b in parts[i + 1 :]:
                    assert not (a & b)
            for part in ("train", "val", "test"):
                members = Counter(f.id for f in getattr(split, part))
                assert all(c == 2 for c in members.values())

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            split_by_id(make_pairs(5), seed=0)


class TestComposeRatio:
    def test_closed_form_counts(self):
        pairs = make_pairs(200)
        for ratio in (0, 30, 50, 100):
            spec = BenchmarkSpec(ratio_original=ratio, total_train_size=400, seed=2)
            bench = compose_ratio_benchmark(pairs, spec)
            assert len(bench) == 400
            per_class = Counter(f.label for f in bench)
            assert per_class[Label.BENIGN] == 200 and per_class[Label.VULNERABLE] == 200
            counts = source_counts(bench)
            expected = quota_table(spec)
            for label in Label:
                cell_orig = expected[(label, Provenance.ORIGINAL)]
                cell_cf = expected[(label, Provenance.COUNTERFACTUAL)]
                got = counts[label.value]
                # upsampled entries count toward neither named source
                assert got["original"] + got["counterfactual"] + got["upsampled"] == 200
                assert got["original"] <= cell_orig and got["counterfactual"] <= cell_cf

    def test_balanced_50_50_with_ample_pool(self):
        pairs = make_pairs(500)
        spec = BenchmarkSpec(ratio_original=50, total_train_size=400, seed=0)
        bench = compose_ratio_benchmark(pairs, spec)
        combo = Counter((f.label, f.provenance) for f in bench)
        assert all(v == 100 for v in combo.values())

    def test_single_member_cell_is_repeated_to_quota(self):
        # one original vulnerable function; ratio 100/0 forces upsampling it
        pairs = make_pairs(40, benign_fraction=1.0)
        lone = SourceFunction(id="v0", source="int v(){return 1;}", label=Label.VULNERABLE,
                              provenance=Provenance.ORIGINAL)
        lone_cf = SourceFunction(id="v0", source="int v(){return 2;}", label=Label.BENIGN,
                                 provenance=Provenance.COUNTERFACTUAL)
        spec = BenchmarkSpec(ratio_original=100, total_train_size=40, seed=1)
        bench = compose_ratio_benchmark(pairs + [lone, lone_cf], spec)
        vulns = [f for f in bench if f.label is Label.VULNERABLE]
        assert len(vulns) == 20
        assert {f.id for f in vulns} == {"v0"}
        assert sum(1 for f in vulns if f.provenance is Provenance.UPSAMPLED) == 19

    def test_empty_cell_raises(self):
        pairs = make_pairs(40, benign_fraction=1.0)  # no original vulnerables at all
        spec = BenchmarkSpec(ratio_original=100, total_train_size=40, seed=1)
        with pytest.raises(EmptyCell):
            compose_ratio_benchmark(pairs, spec)

    def test_deterministic(self):
        pairs = make_pairs(100)
        spec = BenchmarkSpec(ratio_original=70, total_train_size=200, seed=5)
        a = compose_ratio_benchmark(pairs, spec)
        b = compose_ratio_benchmark(pairs, spec)
        assert a == b

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            BenchmarkSpec(ratio_original=55, total_train_size=200, seed=0).validate()
        with pytest.raises(ValueError):
            BenchmarkSpec(ratio_original=50, total_train_size=50, seed=0).validate()


class TestPairedTestSet:
    def test_both_members_sorted_and_balanced(self):
        split = split_by_id(make_pairs(30), seed=3)
        test = build_paired_test_set(split)
        assert len(test) == 2 * len(split.ids("test"))
        labels = Counter(f.label for f in test)
        assert labels[Label.BENIGN] == labels[Label.VULNERABLE]
        assert all(f.provenance is not Provenance.UPSAMPLED for f in test)
        for a, b in zip(test[::2], test[1::2]):
            assert a.id == b.id
            assert a.provenance is Provenance.ORIGINAL
            assert b.provenance is Provenance.COUNTERFACTUAL

    def test_idempotent(self):
        split = split_by_id(make_pairs(30), seed=3)
        assert build_paired_test_set(split) == build_paired_test_set(split)


class TestBuildAll:
    def test_eleven_benchmarks_share_one_test_set(self, tmp_path):
        corpus = gen_synthetic_corpus(SynthConfig(n_pairs=40, seed=4, benign_fraction=0.8))
        written = build_all_benchmarks(corpus, total_train_size=40, seed=4, out_dir=tmp_path)
        assert len(written) == 11
        test_fns = load_manifest(tmp_path / "test.json")
        check_pairing(test_fns)
        for name in written.values():
            bench, header = load_benchmark(tmp_path / name)
            assert len(bench) == 40
            labels = Counter(f.label for f in bench)
            assert labels[Label.BENIGN] == labels[Label.VULNERABLE] == 20

    def test_rebuild_is_byte_identical(self, tmp_path):
        corpus = gen_synthetic_corpus(SynthConfig(n_pairs=40, seed=4, benign_fraction=0.8))
        build_all_benchmarks(corpus, total_train_size=40, seed=4, out_dir=tmp_path / "a")
        build_all_benchmarks(corpus, total_train_size=40, seed=4, out_dir=tmp_path / "b")
        for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestSyntheticCorpus:
    def test_all_functions_parse(self):
        corpus = gen_synthetic_corpus(SynthConfig(n_pairs=30, seed=6))
        for f in corpus:
            assemble_cpg(f)

    def test_pairing_invariants(self):
        corpus = gen_synthetic_corpus(SynthConfig(n_pairs=30, seed=6))
        check_pairing(corpus)

    def test_full_spuriousness_is_a_perfect_predictor_among_originals(self):
        corpus = gen_synthetic_corpus(SynthConfig(n_pairs=120, spurious_strength=1.0, seed=8))
        for f in corpus:
            if f.provenance is Provenance.ORIGINAL:
                has_decoy = DECOY_TOKEN in f.source
                assert has_decoy == (f.label is Label.BENIGN)

    def test_zero_spuriousness_decoy_independent_of_label(self):
        corpus = gen_synthetic_corpus(
            SynthConfig(n_pairs=500, spurious_strength=0.0, seed=9, benign_fraction=0.5)
        )
        originals = [f for f in corpus if f.provenance is Provenance.ORIGINAL]
        table = np.zeros((2, 2))
        for f in originals:
            i = 0 if f.label is Label.BENIGN else 1
            j = 1 if DECOY_TOKEN in f.source else 0
            table[i, j] += 1
        # Pearson chi-squared with 1 dof; p = erfc(sqrt(x/2))
        row = table.sum(axis=1, keepdims=True)
        col = table.sum(axis=0, keepdims=True)
        expected = row @ col / table.sum()
        chi2 = float(((table - expected) ** 2 / expected).sum())
        p_value = math.erfc(math.sqrt(chi2 / 2.0))
        assert p_value > 0.05

    def test_ground_truth_agrees_with_oracle_everywhere(self):
        from vulncf.counterfactual import oracle_label_source

        corpus = gen_synthetic_corpus(SynthConfig(n_pairs=50, seed=10))
        for f in corpus:
            assert oracle_label_source(f.source) is f.label

    def test_config_validation(self):
        with pytest.raises(ValueError):
            gen_synthetic_corpus(SynthConfig(n_pairs=0))
        with pytest.raises(ValueError):
            gen_synthetic_corpus(SynthConfig(spurious_strength=1.5))

    def test_deterministic(self):
        a = gen_synthetic_corpus(SynthConfig(n_pairs=15, seed=12))
        b = gen_synthetic_corpus(SynthConfig(n_pairs=15, seed=12))
        assert a == b
