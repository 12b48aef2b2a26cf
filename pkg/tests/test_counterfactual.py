import pytest

from vulncf.counterfactual import (
    CounterfactualCandidate,
    NoApplicableRule,
    ValidationPolicy,
    generate_rule_based,
    oracle_label_source,
    token_edit_distance,
    validate_counterfactual,
)
from vulncf.dataset import Label, Provenance, SourceFunction
from vulncf.synth import SynthConfig, gen_synthetic_corpus


def fn(source, label, fid="t"):
    return SourceFunction(id=fid, source=source, label=label)


class TestOracle:
    def test_unguarded_index_is_vulnerable(self):
        src = "int f(int screen, char *arr){return arr[screen];}"
        assert oracle_label_source(src) is Label.VULNERABLE

    def test_lower_guard_makes_benign(self):
        src = "int f(int screen, char *arr){if(screen<0){return -1;}return arr[screen];}"
        assert oracle_label_source(src) is Label.BENIGN

    def test_upper_bound_only_still_vulnerable(self):
        src = "int f(int screen, char *arr){if(screen>64){return -1;}return arr[screen];}"
        assert oracle_label_source(src) is Label.VULNERABLE

    def test_constant_sink_is_benign(self):
        assert oracle_label_source('void f(char *d,char *s){memcpy(d,s,16);}') is Label.BENIGN

    def test_tainted_size_arg_is_vulnerable(self):
        assert oracle_label_source("void f(char *d,char *s,int n){memcpy(d,s,n);}") is Label.VULNERABLE

    def test_local_index_is_benign(self):
        src = "int f(char *a){int i=3;return a[i];}"
        assert oracle_label_source(src) is Label.BENIGN


class TestRules:
    def test_add_guard_on_upper_bounded_index(self):
        # vulnerable: upper bound checked, negative values not
        src = "int f(int screen, char *arr){if(screen>8){return 0;}return arr[screen];}"
        cand = generate_rule_based(fn(src, Label.VULNERABLE))
        assert cand.generator == "rule:add_lower_guard"
        assert cand.target_label is Label.BENIGN
        assert "screen < 0" in cand.source
        assert oracle_label_source(cand.source) is Label.BENIGN

    def test_taint_constant_call_argument(self):
        src = "void f(char *dev){net_cmd(dev, NULL);}"
        cand = generate_rule_based(fn(src, Label.BENIGN))
        assert cand.generator == "rule:taint_constant_arg"
        assert "user_input" in cand.source
        assert oracle_label_source(cand.source) is Label.VULNERABLE
        assert cand.edit_distance <= 10

    def test_drop_guard(self):
        src = "int f(int n,char *b){if(n<0){return -1;}b[n]=1;return 0;}"
        cand = generate_rule_based(fn(src, Label.BENIGN))
        assert cand.generator == "rule:drop_lower_guard"
        assert oracle_label_source(cand.source) is Label.VULNERABLE

    def test_no_applicable_rule(self):
        src = "int f(int a){int b=a+1;return b;}"
        with pytest.raises(NoApplicableRule):
            generate_rule_based(fn(src, Label.BENIGN))

    def test_deterministic(self):
        src = "int f(int n,char *b){if(n<0){return -1;}b[n]=1;return 0;}"
        a = generate_rule_based(fn(src, Label.BENIGN), rng_seed=1)
        b = generate_rule_based(fn(src, Label.BENIGN), rng_seed=1)
        assert a == b

    def test_fresh_parameter_name_avoids_collision(self):
        src = 'void f(char *dev,int user_input){log_event(user_input);net_cmd(dev,NULL);}'
        cand = generate_rule_based(fn(src, Label.BENIGN))
        assert "user_input2" in cand.source


class TestEditDistance:
    def test_zero_for_identical(self):
        assert token_edit_distance("int f(){return 0;}", "int  f(){return 0;}") == 0

    def test_counts_token_replacements(self):
        assert token_edit_distance("int f(){return 0;}", "int g(){return 1;}") == 2

    def test_insertion_run(self):
        a = "int f(int n){return n;}"
        b = "int f(int n){if(n<0){return -1;}return n;}"
        # inserted: if ( n < 0 ) { return - 1 ; }
        assert token_edit_distance(a, b) == 12

    def test_cap_short_circuits(self):
        a = "int f(){return 0;}"
        b = "int g(int a,int b,int c,int d,int e,int f,int g,int h,int i,int j){return 1;}"
        assert token_edit_distance(a, b, cap=5) > 5


class TestValidation:
    def make_pair(self):
        src = "int f(int n,char *b){if(n<0){return -1;}b[n]=1;return 0;}"
        orig = fn(src, Label.BENIGN)
        return orig, generate_rule_based(orig)

    def test_rule_generated_accepts(self):
        orig, cand = self.make_pair()
        assert validate_counterfactual(orig, cand).accepted

    def test_unparsable_candidate_rejected(self):
        orig, cand = self.make_pair()
        broken = CounterfactualCandidate(
            paired_id=cand.paired_id, source="int f({", target_label=cand.target_label,
            generator=cand.generator, edit_distance=3,
        )
        verdict = validate_counterfactual(orig, broken)
        assert not verdict.accepted and verdict.reason.startswith("ParseError")

    def test_identical_candidate_rejected(self):
        orig, cand = self.make_pair()
        same = CounterfactualCandidate(
            paired_id=orig.id, source=orig.source, target_label=orig.label.flipped(),
            generator="llm:test", edit_distance=0,
        )
        verdict = validate_counterfactual(orig, same)
        assert not verdict.accepted and verdict.reason.startswith("NoEdit")

    def test_oversized_edit_rejected(self):
        orig, cand = self.make_pair()
        bloated_src = cand.source.replace(
            "int f(", "int f(int p1,int p2,int p3,int p4,int p5,int p6,int p7,int p8,int p9,int pa,int pb,int pc,int pd,"
        )
        bloated = CounterfactualCandidate(
            paired_id=orig.id, source=bloated_src, target_label=cand.target_label,
            generator="llm:test", edit_distance=99,
        )
        verdict = validate_counterfactual(orig, bloated, ValidationPolicy(max_edit_tokens=25))
        assert not verdict.accepted and verdict.reason.startswith("EditTooLarge")

    def test_label_not_flipped_rejected(self):
        orig, _ = self.make_pair()
        benign_again = CounterfactualCandidate(
            paired_id=orig.id,
            source=orig.source.replace("return 0;", "return 1;"),
            target_label=Label.VULNERABLE,
            generator="llm:test", edit_distance=1,
        )
        verdict = validate_counterfactual(orig, benign_again)
        assert not verdict.accepted and verdict.reason.startswith("OracleMismatch")


@pytest.fixture(scope="module")
def corpus():
    return gen_synthetic_corpus(SynthConfig(n_pairs=60, spurious_strength=0.9, seed=3))


class TestCorpusWide:

    def test_rule_generated_counterfactuals_all_validate(self, corpus):
        originals = [f for f in corpus if f.provenance is Provenance.ORIGINAL]
        for orig in originals:
            cand = generate_rule_based(orig)
            verdict = validate_counterfactual(orig, cand)
            assert verdict.accepted, (orig.source, verdict.reason)
            assert 1 <= cand.edit_distance <= 25

    def test_opposite_rule_restores_original_label(self, corpus):
        # counterfactual of a counterfactual carries the original label
        originals = [f for f in corpus if f.provenance is Provenance.ORIGINAL]
        cfs = {f.id: f for f in corpus if f.provenance is Provenance.COUNTERFACTUAL}
        for orig in originals[:30]:
            cf = cfs[orig.id]
            back = generate_rule_based(cf)
            assert back.target_label is orig.label
            assert oracle_label_source(back.source) is orig.label

    def test_no_unpaired_counterfactuals(self, corpus):
        ids = {}
        for f in corpus:
            ids.setdefault(f.id, set()).add(f.provenance)
        for fid, provs in ids.items():
            assert provs == {Provenance.ORIGINAL, Provenance.COUNTERFACTUAL}
