"""Numerical claim extraction and atomicity screening.

A prompt pipeline pulls quantitative statements out of each document; a
pattern scan attaches numeric spans so the every-claim-has-a-number
invariant is checkable offline; two judges then screen each candidate for
atomicity and only unanimous keeps survive.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .core import Claim, Document, content_key
from .gateway import ChatRequest, Gateway, JUDGE_TEMPERATURE, parse_yes_no

logger = logging.getLogger(__name__)

# Quantitative content: currency-prefixed amounts, plain numbers with
# optional thousands separators and decimals, percent signs and magnitude
# words.  Currency branch first so "$750,000" matches as one span.
NUMBER_PATTERN = re.compile(
    r"""
    [$€£]\s?\d[\d,]*(?:\.\d+)?(?:\s?(?:million|billion|trillion))?
    |
    \d[\d,]*(?:\.\d+)?\s?(?:%|percent|million|billion|trillion)?
    """,
    re.VERBOSE | re.IGNORECASE,
)

_BULLET_RE = re.compile(r"^\s*(?:[-*•]+\s+|\d+[.)]\s+)")

EXTRACTION_SYSTEM = (
    "You are a meticulous financial annotator. Follow the instructions exactly."
)
ATOMICITY_SYSTEM = (
    "You are a strict reviewer of dataset claims. Answer yes or no first."
)


def find_numeric_spans(text: str) -> tuple[tuple[int, int], ...]:
    """Character ranges of quantitative tokens, non-overlapping, in order."""
    return tuple((m.start(), m.end()) for m in NUMBER_PATTERN.finditer(text))


def canonical_numeric_tokens(text: str) -> Counter:
    """Multiset of numeric tokens reduced to bare digit/point form.

    "$750,000" and "750,000" both canonicalize to "750000", so presence
    checks survive currency and separator styling.
    """
    tokens: Counter = Counter()
    for m in NUMBER_PATTERN.finditer(text):
        bare = re.sub(r"[^\d.]", "", m.group(0)).rstrip(".")
        if bare:
            tokens[bare] += 1
    return tokens


@dataclass(frozen=True)
class CandidateClaim:
    claim: Claim
    extraction_raw: str

    def __post_init__(self) -> None:
        if not self.claim.numeric_spans:
            raise ValueError(
                f"candidate claim {self.claim.claim_id} has no numeric span"
            )


@dataclass(frozen=True)
class AtomicityVerdict:
    claim_id: str
    judge_id: str
    atomic: bool
    rationale: str


def parse_claim_lines(reply: str) -> list[str]:
    """Split a model reply into claim lines, stripping bullets and numbering
    prefixes and dropping lines without a digit."""
    lines = []
    for raw_line in reply.splitlines():
        line = _BULLET_RE.sub("", raw_line).strip()
        if not line:
            continue
        if not any(ch.isdigit() for ch in line):
            continue
        lines.append(line)
    return lines


def extract_numerical_claims(
    doc: Document, backend: Gateway, template: str
) -> list[CandidateClaim]:
    """Prompt the backend for quantitative claims in ``doc``.

    Output order is stable: candidates sorted by (first span offset, text)
    before IDs are assigned, and IDs derive from content so re-runs
    reproduce them.
    """
    req = ChatRequest(
        system=EXTRACTION_SYSTEM,
        user=template.replace("{document}", doc.text),
        temperature=JUDGE_TEMPERATURE,
        max_tokens=1024,
    )
    resp = backend.chat(req)
    lines = parse_claim_lines(resp.text)
    if not lines:
        if any(ch.isdigit() for ch in doc.text):
            logger.warning(
                "unparseable extraction reply for doc %s: no claim lines in %r",
                doc.doc_id,
                resp.text[:120],
            )
        return []

    candidates = []
    for line in lines:
        text = " ".join(line.split())
        spans = find_numeric_spans(text)
        if not spans:
            continue
        candidates.append((spans[0][0], text, spans, line))

    candidates.sort(key=lambda item: (item[0], item[1]))
    result = []
    seen_ids = set()
    for _, text, spans, raw in candidates:
        claim_id = content_key(text, doc.doc_id)
        if claim_id in seen_ids:
            continue
        seen_ids.add(claim_id)
        claim = Claim(
            claim_id=claim_id,
            text=text,
            parent_doc_id=doc.doc_id,
            numeric_spans=spans,
        )
        result.append(CandidateClaim(claim=claim, extraction_raw=raw))
    return result


def screen_atomicity(
    candidate: CandidateClaim, judges: Sequence[Gateway], template: str
) -> tuple[bool, list[AtomicityVerdict]]:
    """Ask every judge whether the claim is atomic; keep only on unanimity.

    Unparseable judge replies count as non-atomic: discarding a candidate is
    cheaper than letting a compound claim into the dataset.
    """
    if len(judges) < 2:
        raise ValueError(f"atomicity screening needs >= 2 judges, got {len(judges)}")
    verdicts = []
    for judge in judges:
        req = ChatRequest(
            system=ATOMICITY_SYSTEM,
            user=template.replace("{claim}", candidate.claim.text),
            temperature=JUDGE_TEMPERATURE,
            max_tokens=200,
        )
        resp = judge.chat(req)
        parsed = parse_yes_no(resp.text)
        if parsed is None:
            logger.warning(
                "unparseable atomicity verdict from %s for claim %s: %r",
                resp.backend_id,
                candidate.claim.claim_id,
                resp.text[:80],
            )
        verdicts.append(
            AtomicityVerdict(
                claim_id=candidate.claim.claim_id,
                judge_id=resp.backend_id,
                atomic=bool(parsed),
                rationale=resp.text.strip(),
            )
        )
    kept = all(v.atomic for v in verdicts)
    return kept, verdicts
