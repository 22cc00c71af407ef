import pytest

from fiscal.core import Claim, Document
from fiscal.extraction import (
    CandidateClaim,
    canonical_numeric_tokens,
    extract_numerical_claims,
    find_numeric_spans,
    parse_claim_lines,
    screen_atomicity,
)
from fiscal.gateway import BackendKind, BackendSpec, Gateway, MockRule

EXTRACTION_TEMPLATE = "List the quantitative claims.\n\nDocument:\n{document}"
ATOMICITY_TEMPLATE = "Is this claim atomic? Answer yes or no.\n\nClaim: {claim}"


def mock_gateway(rules, name="mock"):
    return Gateway(
        BackendSpec(kind=BackendKind.MOCK, model_name=name, script=tuple(rules))
    )


class TestNumericSpans:
    def test_currency_amount_single_span(self):
        text = "The company's revenue was $750,000 in 2018."
        spans = find_numeric_spans(text)
        span_texts = [text[s:e] for s, e in spans]
        assert "$750,000" in span_texts
        assert "2018" in span_texts

    def test_percent_and_magnitude(self):
        text = "Margins grew 12.5% on sales of $3.2 billion."
        span_texts = [text[s:e] for s, e in find_numeric_spans(text)]
        assert "12.5%" in span_texts
        assert "$3.2 billion" in span_texts

    def test_spans_non_overlapping_and_ordered(self):
        text = "Totals: 1,234.5 million then 99 percent then $7."
        spans = find_numeric_spans(text)
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 <= s2

    def test_canonical_tokens_strip_styling(self):
        assert canonical_numeric_tokens("$750,000") == canonical_numeric_tokens(
            "750,000 dollars"
        )
        tokens = canonical_numeric_tokens("Revenue was $5.5 million and 5.5%")
        assert tokens["5.5"] == 2


class TestParseClaimLines:
    def test_bullets_and_numbering_stripped(self):
        reply = "- Revenue was $5M.\n* Debt was $2M.\n2. Cash was $1M."
        assert parse_claim_lines(reply) == [
            "Revenue was $5M.",
            "Debt was $2M.",
            "Cash was $1M.",
        ]

    def test_decimal_start_not_mangled(self):
        assert parse_claim_lines("3.5% growth was reported.") == [
            "3.5% growth was reported."
        ]

    def test_digitless_lines_dropped(self):
        reply = "- Revenue was $5M.\n- The CEO resigned."
        assert parse_claim_lines(reply) == ["Revenue was $5M."]


class TestExtractNumericalClaims:
    def test_single_candidate_with_span(self):
        doc = Document(
            doc_id="d1",
            text="Revenue was $750,000 in 2018. The CEO resigned.",
            source="test",
        )
        gw = mock_gateway(
            [MockRule(match="", reply="- The company's revenue was $750,000 in 2018.")]
        )
        candidates = extract_numerical_claims(doc, gw, EXTRACTION_TEMPLATE)
        assert len(candidates) == 1
        claim = candidates[0].claim
        assert claim.text == "The company's revenue was $750,000 in 2018."
        s, e = claim.numeric_spans[0]
        assert claim.text[s:e] == "$750,000"
        assert claim.parent_doc_id == "d1"

    def test_no_digit_document_empty_reply(self):
        doc = Document(doc_id="d2", text="The board met and resigned.", source="test")
        gw = mock_gateway([MockRule(match="", reply="(none)")])
        assert extract_numerical_claims(doc, gw, EXTRACTION_TEMPLATE) == []

    def test_digitless_claim_line_dropped(self):
        doc = Document(doc_id="d3", text="Revenue was $5M.", source="test")
        gw = mock_gateway(
            [MockRule(match="", reply="- Revenue was $5M.\n- The outlook is strong.")]
        )
        candidates = extract_numerical_claims(doc, gw, EXTRACTION_TEMPLATE)
        assert [c.claim.text for c in candidates] == ["Revenue was $5M."]

    def test_unparseable_reply_warns_not_fatal(self, caplog):
        doc = Document(doc_id="d4", text="Revenue was $5M in 2020.", source="test")
        gw = mock_gateway([MockRule(match="", reply="no quantitative claims here")])
        with caplog.at_level("WARNING"):
            result = extract_numerical_claims(doc, gw, EXTRACTION_TEMPLATE)
        assert result == []
        assert any("unparseable extraction reply" in r.message for r in caplog.records)

    def test_output_order_stable_and_ids_reproducible(self):
        doc = Document(doc_id="d5", text="A 12 B 3 C 45", source="test")
        reply = "- We counted 45 widgets.\n- A total of 12 units shipped."
        gw = mock_gateway([MockRule(match="", reply=reply)])
        first = extract_numerical_claims(doc, gw, EXTRACTION_TEMPLATE)
        second = extract_numerical_claims(doc, gw, EXTRACTION_TEMPLATE)
        assert [c.claim.claim_id for c in first] == [c.claim.claim_id for c in second]
        # Both claims start with a numeric token at a different offset; order
        # follows (first span offset, text).
        offsets = [c.claim.numeric_spans[0][0] for c in first]
        assert offsets == sorted(offsets)

    def test_candidate_requires_numeric_span(self):
        claim = Claim(claim_id="c", text="no numbers here", parent_doc_id="d")
        with pytest.raises(ValueError):
            CandidateClaim(claim=claim, extraction_raw="no numbers here")


def make_candidate(text="Revenue was $5M in 2020."):
    spans = find_numeric_spans(text)
    return CandidateClaim(
        claim=Claim(
            claim_id="c1", text=text, parent_doc_id="d1", numeric_spans=spans
        ),
        extraction_raw=text,
    )


class TestScreenAtomicity:
    def _judges(self, reply_a, reply_b):
        return [
            mock_gateway([MockRule(match="", reply=reply_a)], name="judge-a"),
            mock_gateway([MockRule(match="", reply=reply_b)], name="judge-b"),
        ]

    def test_unanimous_yes_kept(self):
        kept, verdicts = screen_atomicity(
            make_candidate(), self._judges("yes", "yes - single fact"), ATOMICITY_TEMPLATE
        )
        assert kept is True
        assert all(v.atomic for v in verdicts)
        assert {v.judge_id for v in verdicts} == {"judge-a", "judge-b"}

    def test_split_vote_dropped(self):
        kept, verdicts = screen_atomicity(
            make_candidate(), self._judges("yes", "no"), ATOMICITY_TEMPLATE
        )
        assert kept is False

    def test_compound_claim_rejected_by_both(self):
        candidate = make_candidate("Revenue was $5M and debt was $2M.")
        kept, verdicts = screen_atomicity(
            candidate,
            self._judges("no - two facts", "no, it bundles assertions"),
            ATOMICITY_TEMPLATE,
        )
        assert kept is False
        assert [v.atomic for v in verdicts] == [False, False]

    def test_unparseable_verdict_fails_closed(self, caplog):
        with caplog.at_level("WARNING"):
            kept, verdicts = screen_atomicity(
                make_candidate(), self._judges("hmm, unclear", "yes"), ATOMICITY_TEMPLATE
            )
        assert kept is False
        assert verdicts[0].atomic is False

    def test_requires_two_judges(self):
        with pytest.raises(ValueError):
            screen_atomicity(
                make_candidate(),
                [mock_gateway([MockRule(match="", reply="yes")])],
                ATOMICITY_TEMPLATE,
            )

    def test_kept_implies_all_atomic_random(self):
        import random

        rng = random.Random(11)
        for _ in range(50):
            replies = [rng.choice(["yes", "no", "??"]) for _ in range(2)]
            kept, verdicts = screen_atomicity(
                make_candidate(), self._judges(*replies), ATOMICITY_TEMPLATE
            )
            assert kept == all(v.atomic for v in verdicts)
