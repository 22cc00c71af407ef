import random

import pytest

from fiscal.assembly import (
    InfeasibleRatios,
    PromptTemplate,
    SlotMissing,
    SplitPlan,
    assign_splits,
    balance_report,
    build_ablation_variant,
    build_manifest,
    deduplicate,
    emit_training_records,
)
from fiscal.core import Label, LabeledTriplet, ModuleKind


def make_triplet(i, kind=ModuleKind.PARAPHRASE, doc_id=None, claim=None, document=None):
    return LabeledTriplet.build(
        claim=claim or f"Claim {i} states revenue of ${i}.5 million.",
        document=document or f"Document {i} shows revenue of ${i}.5 million in 2020.",
        provenance=kind,
        parent_doc_id=doc_id or f"doc-{i:04d}",
        parent_claim_id=f"claim-{i:04d}",
    )


def uniform_triplets(n, kind=ModuleKind.PARAPHRASE):
    return [make_triplet(i, kind=kind) for i in range(n)]


class TestDeduplicate:
    def test_whitespace_duplicates_collapse(self):
        a = make_triplet(1)
        b = LabeledTriplet.build(
            claim=a.claim + "  ",
            document=" " + a.document.replace(" shows", "  shows"),
            provenance=a.provenance,
            parent_doc_id=a.parent_doc_id,
            parent_claim_id=a.parent_claim_id,
        )
        assert a.content_key == b.content_key
        assert len(deduplicate([a, b])) == 1

    def test_distinct_input_identity(self):
        triplets = uniform_triplets(20)
        assert deduplicate(triplets) == sorted(triplets, key=lambda t: t.triplet_id)

    def test_planted_duplicates_exact_count(self):
        rng = random.Random(13)
        triplets = uniform_triplets(900)
        duplicates = [
            LabeledTriplet.build(
                claim=t.claim,
                document=t.document,
                provenance=t.provenance,
                parent_doc_id=t.parent_doc_id,
                parent_claim_id=t.parent_claim_id,
            )
            for t in rng.sample(triplets, 100)
        ]
        mixed = triplets + duplicates
        rng.shuffle(mixed)
        out = deduplicate(mixed)
        assert len(out) == 900
        assert len({t.content_key for t in out}) == 900


class TestAssignSplits:
    def test_exact_sizes_on_uniform_docs(self):
        triplets = uniform_triplets(100)
        assignment = assign_splits(triplets, SplitPlan(ratios=(0.8, 0.1, 0.1), seed=42))
        counts = {"train": 0, "eval": 0, "test": 0}
        for split in assignment.values():
            counts[split] += 1
        assert counts == {"train": 80, "eval": 10, "test": 10}

    def test_doc_groups_stay_together(self):
        triplets = []
        for i in range(30):
            doc_id = f"doc-{i % 10:04d}"
            triplets.append(
                make_triplet(
                    i,
                    doc_id=doc_id,
                    claim=f"Claim {i} cites ${i}.1 million.",
                    document=f"Document for {doc_id} case {i} shows ${i}.1 million.",
                )
            )
        assignment = assign_splits(triplets, SplitPlan(seed=1))
        by_doc = {}
        for t in triplets:
            by_doc.setdefault(t.parent_doc_id, set()).add(assignment[t.triplet_id])
        assert all(len(splits) == 1 for splits in by_doc.values())

    def test_train_test_docs_disjoint(self):
        triplets = uniform_triplets(200)
        assignment = assign_splits(triplets, SplitPlan(seed=9))
        train_docs = {
            t.parent_doc_id for t in triplets if assignment[t.triplet_id] == "train"
        }
        test_docs = {
            t.parent_doc_id for t in triplets if assignment[t.triplet_id] == "test"
        }
        assert train_docs.isdisjoint(test_docs)

    def test_all_train_ratio(self):
        triplets = uniform_triplets(25)
        assignment = assign_splits(triplets, SplitPlan(ratios=(1.0, 0.0, 0.0), seed=0))
        assert set(assignment.values()) == {"train"}

    def test_deterministic_given_seed(self):
        triplets = uniform_triplets(60)
        a = assign_splits(triplets, SplitPlan(seed=5))
        b = assign_splits(triplets, SplitPlan(seed=5))
        assert a == b

    def test_seed_changes_assignment(self):
        triplets = uniform_triplets(60)
        a = assign_splits(triplets, SplitPlan(seed=5))
        b = assign_splits(triplets, SplitPlan(seed=6))
        assert a != b

    def test_every_triplet_assigned_once(self):
        triplets = uniform_triplets(137)
        assignment = assign_splits(triplets, SplitPlan(seed=3))
        assert set(assignment) == {t.triplet_id for t in triplets}

    def test_giant_group_infeasible(self):
        triplets = [
            make_triplet(
                i,
                doc_id="doc-giant",
                claim=f"Giant case {i} reports ${i}.9 million.",
                document=f"Giant doc entry {i} shows ${i}.9 million in 2020.",
            )
            for i in range(95)
        ] + uniform_triplets(5)
        with pytest.raises(InfeasibleRatios):
            assign_splits(triplets, SplitPlan(ratios=(0.8, 0.1, 0.1), seed=0))

    def test_ungrouped_when_unseen_disabled(self):
        triplets = [
            make_triplet(
                i,
                doc_id="doc-shared",
                claim=f"Shared case {i} reports ${i}.7 million.",
                document=f"Shared doc entry {i} shows ${i}.7 million in 2020.",
            )
            for i in range(100)
        ]
        plan = SplitPlan(ratios=(0.8, 0.1, 0.1), seed=2, test_docs_unseen=False)
        assignment = assign_splits(triplets, plan)
        counts = {"train": 0, "eval": 0, "test": 0}
        for split in assignment.values():
            counts[split] += 1
        assert counts == {"train": 80, "eval": 10, "test": 10}


class TestBalanceReport:
    def _with_split(self, triplets, split):
        return [t.with_split(split) for t in triplets]

    def test_even_split_unflagged(self):
        pos = uniform_triplets(50)
        neg = [
            make_triplet(
                100 + i,
                kind=ModuleKind.CONFLICT_INSERTION,
                claim=f"Neg {i} reports ${i}.3 million.",
                document=f"Neg doc {i} contradicts the ${i}.3 million figure.",
            )
            for i in range(50)
        ]
        report = balance_report(self._with_split(pos + neg, "train"))
        assert report["train"].flags == ()
        assert report["train"].supported == 50
        assert report["train"].unsupported == 50

    def test_60_40_flagged_at_default_tolerance(self):
        pos = uniform_triplets(60)
        neg = [
            make_triplet(
                200 + i,
                kind=ModuleKind.FACT_EXCLUSION,
                claim=f"Case {i} reports ${i}.8 million.",
                document=f"Doc {i} omits the figures entirely, entry {i}.",
            )
            for i in range(40)
        ]
        report = balance_report(self._with_split(pos + neg, "train"))
        assert "imbalanced" in report["train"].flags

    def test_one_sided_split_degenerate(self):
        report = balance_report(self._with_split(uniform_triplets(10), "eval"))
        assert "degenerate" in report["eval"].flags


class TestAblationVariant:
    def _mixed(self):
        triplets = []
        kinds = list(ModuleKind)
        for i in range(60):
            kind = kinds[i % len(kinds)]
            triplets.append(
                make_triplet(
                    i,
                    kind=kind,
                    claim=f"Mixed case {i} reports ${i}.2 million.",
                    document=f"Mixed doc {i} discusses ${i}.2 million in 2021.",
                )
            )
        return triplets

    def test_excluded_kind_absent(self):
        triplets = self._mixed()
        variant = build_ablation_variant(triplets, ModuleKind.CONFLICT_INSERTION)
        assert all(t.provenance is not ModuleKind.CONFLICT_INSERTION for t in variant)

    def test_partition_property_every_kind(self):
        triplets = self._mixed()
        for kind in ModuleKind:
            variant = build_ablation_variant(triplets, kind)
            excluded = [t for t in triplets if t.provenance is kind]
            assert len(variant) + len(excluded) == len(triplets)
            assert {t.triplet_id for t in variant}.isdisjoint(
                {t.triplet_id for t in excluded}
            )

    def test_absent_kind_identity(self):
        triplets = uniform_triplets(10)
        assert build_ablation_variant(triplets, ModuleKind.MISATTRIBUTION) == triplets


TEMPLATE = PromptTemplate(
    system_instruction="Verify the claim against the document.",
    body_format="Claim: {claim}\nDocument: {document}\nSupported?",
)


class TestEmitTraining:
    def test_supported_gets_yes(self):
        records = emit_training_records([make_triplet(1)], TEMPLATE)
        assert records[0]["target"] == "yes"

    def test_unsupported_gets_no(self):
        t = make_triplet(2, kind=ModuleKind.VALUE_DISTORTION,
                         document="Doc shows revenue of $9.9 million in 2020.")
        records = emit_training_records([t], TEMPLATE)
        assert records[0]["target"] == "no"

    def test_round_trip_prompt_and_target(self):
        rng = random.Random(31)
        kinds = list(ModuleKind)
        triplets = [
            make_triplet(
                i,
                kind=rng.choice(kinds),
                claim=f"Case {i} reports ${i}.4 million.",
                document=f"Doc {i} mentions ${i}.4 million in 2019.",
            )
            for i in range(100)
        ]
        records = emit_training_records(triplets, TEMPLATE)
        for t, record in zip(triplets, records):
            assert record["triplet_id"] == t.triplet_id
            assert record["prompt"] == TEMPLATE.render_prompt(t.claim, t.document)
            assert record["prompt"].startswith(TEMPLATE.system_instruction)
            assert t.claim in record["prompt"] and t.document in record["prompt"]
            expected = "yes" if t.label is Label.SUPPORTED else "no"
            assert record["target"] == expected

    def test_slot_missing(self):
        with pytest.raises(SlotMissing):
            PromptTemplate(system_instruction="s", body_format="Claim: {claim} only")
        with pytest.raises(SlotMissing):
            PromptTemplate(
                system_instruction="s",
                body_format="{claim} {claim} {document}",
            )


class TestSplitPlanAndManifest:
    def test_ratios_must_sum_to_one(self):
        with pytest.raises(ValueError):
            SplitPlan(ratios=(0.5, 0.2, 0.2))
        with pytest.raises(ValueError):
            SplitPlan(ratios=(0.9, 0.2, -0.1))

    def test_manifest_counts_match(self):
        triplets = [t.with_split("train") for t in uniform_triplets(6)]
        triplets += [
            make_triplet(
                50 + i,
                kind=ModuleKind.CONFLICT_INSERTION,
                claim=f"Conflict case {i} cites ${i}.6 million.",
                document=f"Conflict doc {i} disputes the ${i}.6 million entry.",
            ).with_split("test")
            for i in range(4)
        ]
        manifest = build_manifest(triplets, config_hash="abc", excluded_module=None)
        assert manifest["total"] == 10
        assert manifest["counts_per_split"] == {"test": 4, "train": 6}
        assert manifest["counts_per_module"]["paraphrase"] == 6
        assert manifest["counts_per_module"]["conflict_insertion"] == 4
        assert manifest["hash_algorithm"] == "murmur3-x64-128"
