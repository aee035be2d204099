import pytest

from ehrkg import evidence as ev
from ehrkg import prompts as pr
from ehrkg.codes import CodeId, CodeType
from ehrkg.ingest import VocabEntry
from ehrkg.relations import pool_for, relations_for, TypePair


def entry(code_id, code_type, name=None):
    code = CodeId(code_id, code_type)
    return VocabEntry(code=code, name=name or f"name of {code_id}",
                      parent_category="grp", frequency=42)


def channel(support=12, condprob=0.1234, pmi_val=1.5, p=0.002):
    return ev.ChannelEvidence(support=support, condprob=condprob, pmi=pmi_val, p=p)


def record(src, tgt, **kw):
    return ev.EvidenceRecord(src=src, tgt=tgt, cooc=channel(**kw), trans=channel(**kw))


def relation_input(ta=CodeType.DX, tb=CodeType.DX):
    a, b = entry("A1", ta), entry("B2", tb)
    return pr.RelationPromptInput(
        entry_a=a, entry_b=b,
        forward=record(a.code, b.code), backward=record(b.code, a.code),
        pool=relations_for(ta, tb))


class TestRelationPrompt:
    def test_deterministic(self):
        p1 = pr.build_relation_prompt(relation_input())
        p2 = pr.build_relation_prompt(relation_input())
        assert p1.content_hash == p2.content_hash
        assert p1.text == p2.text

    def test_lists_exactly_the_pool_labels(self):
        for ta, tb in [(CodeType.DX, CodeType.DX), (CodeType.RX, CodeType.RX),
                       (CodeType.PX, CodeType.RX)]:
            inp = relation_input(ta, tb)
            text = pr.build_relation_prompt(inp).text
            in_prompt = {line[2:].split(":")[0] for line in text.splitlines()
                         if line.startswith("- ") and ":" in line
                         and line[2:].split(":")[0] in
                         set(inp.pool.allowed) | {"x"}}
            assert in_prompt == set(inp.pool.allowed)

    def test_dx_dx_prompt_has_seven_labels(self):
        text = pr.build_relation_prompt(relation_input()).text
        pool = relations_for(CodeType.DX, CodeType.DX)
        for label in pool.allowed:
            assert f"- {label}:" in text
        assert "- treats:" not in text

    def test_sentinel_rendering(self):
        a, b = entry("A1", CodeType.DX), entry("B2", CodeType.DX)
        zero = ev.ChannelEvidence(support=0, condprob=0.01, pmi=None, p=1.0)
        fwd = ev.EvidenceRecord(src=a.code, tgt=b.code, cooc=channel(), trans=zero)
        bwd = ev.EvidenceRecord(src=b.code, tgt=a.code, cooc=channel(), trans=zero)
        inp = pr.RelationPromptInput(entry_a=a, entry_b=b, forward=fwd, backward=bwd,
                                     pool=relations_for(CodeType.DX, CodeType.DX))
        text = pr.build_relation_prompt(inp).text
        assert "support=0" in text and "pmi=n/a" in text and "p=1.0000" in text

    def test_contains_required_sections_in_order(self):
        text = pr.build_relation_prompt(relation_input()).text
        anchors = ["codeA:", "Statistical evidence", "Metrics glossary",
                   "Allowed relations", "Decision rubric", "strict JSON"]
        positions = [text.index(a) for a in anchors]
        assert positions == sorted(positions)

    def test_pool_mismatch_rejected(self):
        a, b = entry("A1", CodeType.DX), entry("B2", CodeType.DX)
        with pytest.raises(ValueError, match="does not match"):
            pr.RelationPromptInput(entry_a=a, entry_b=b,
                                   forward=record(a.code, b.code),
                                   backward=record(b.code, a.code),
                                   pool=pool_for(TypePair.RX_RX))

    def test_metrics_round_trip(self):
        inp = relation_input()
        text = pr.build_relation_prompt(inp).text
        metrics = pr.extract_metrics(text)
        fwd = metrics["A->B"]
        assert fwd["cooc_support"] == inp.forward.cooc.support
        assert fwd["cooc_condprob"] == pytest.approx(inp.forward.cooc.condprob, abs=5e-5)
        assert fwd["cooc_pmi"] == pytest.approx(inp.forward.cooc.pmi, abs=5e-5)
        assert fwd["trans_p"] == pytest.approx(inp.forward.trans.p, abs=5e-5)

    def test_pair_extraction(self):
        text = pr.build_relation_prompt(relation_input()).text
        assert pr.extract_pair(text) == ("dx:A1", "dx:B2")


class TestNodePrompt:
    def test_deterministic(self):
        e = entry("A1", CodeType.DX)
        assert pr.build_node_prompt(e).content_hash == pr.build_node_prompt(e).content_hash

    def test_type_specific_bodies(self):
        texts = {t: pr.build_node_prompt(entry("A1", t, name="Same name")).text
                 for t in CodeType}
        assert len(set(texts.values())) == 3

    def test_distinct_hashes_over_synthetic_vocab(self, standard_run):
        _, _, vocab, _ = standard_run
        hashes = {pr.build_node_prompt(e).content_hash for e in vocab.entries.values()}
        assert len(hashes) == len(vocab)


class TestGlossary:
    def test_mentions_conditional_probability(self):
        assert "conditional probability" in pr.metrics_glossary()

    def test_stable(self):
        assert pr.metrics_glossary() == pr.metrics_glossary()

    def test_pinned_hash(self):
        # Golden hash, frozen at first implementation; a change here means the
        # glossary text changed and every cached prompt is invalidated.
        import hashlib
        digest = hashlib.sha256(pr.metrics_glossary().encode()).hexdigest()
        assert digest == GLOSSARY_SHA256


GLOSSARY_SHA256 = "b75bb178072e1ce6d82a246586480aa36cde0fac4575a7d60e89c8efbefd44ed"
