"""Dual-judge review of synthesized triplets and inter-judge agreement.

Judges see the asserted label and answer whether it is correct, so the
unanimity filter and Cohen's kappa both operate on plain booleans.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import EmptyInput, FiscalError, LabeledTriplet
from .gateway import ChatRequest, Gateway, JUDGE_TEMPERATURE, parse_yes_no

logger = logging.getLogger(__name__)

TRIPLET_JUDGE_SYSTEM = (
    "You are a strict reviewer of dataset entries. Answer yes or no first."
)


class InsufficientVerdicts(FiscalError):
    """Unanimity needs at least two verdicts from distinct judges."""


class DegenerateMarginals(FiscalError):
    """Chance agreement is 1 while observed agreement is not."""


@dataclass(frozen=True)
class TripletVerdict:
    triplet_id: str
    judge_id: str
    label_correct: bool
    rationale: str


@dataclass(frozen=True)
class AgreementReport:
    n: int
    observed_agreement: float
    expected_agreement: float
    kappa: float
    contingency: Mapping[str, int]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "observed_agreement": self.observed_agreement,
            "expected_agreement": self.expected_agreement,
            "kappa": self.kappa,
            "contingency": dict(self.contingency),
        }


def judge_triplet(
    t: LabeledTriplet, judge: Gateway, template: str
) -> TripletVerdict:
    """One judge's call on whether the triplet's asserted label is correct.

    Unparseable replies count as incorrect (fail-closed)."""
    label_word = "supported" if t.label.to_int() == 1 else "unsupported"
    user = (
        template.replace("{claim}", t.claim)
        .replace("{document}", t.document)
        .replace("{label}", label_word)
    )
    resp = judge.chat(
        ChatRequest(
            system=TRIPLET_JUDGE_SYSTEM,
            user=user,
            temperature=JUDGE_TEMPERATURE,
            max_tokens=200,
        )
    )
    parsed = parse_yes_no(resp.text)
    if parsed is None:
        logger.warning(
            "unparseable triplet verdict from %s for %s: %r",
            resp.backend_id,
            t.triplet_id,
            resp.text[:80],
        )
    return TripletVerdict(
        triplet_id=t.triplet_id,
        judge_id=resp.backend_id,
        label_correct=bool(parsed),
        rationale=resp.text.strip(),
    )


def unanimity_filter(t: LabeledTriplet, verdicts: Sequence[TripletVerdict]) -> bool:
    """Keep a triplet only when every judge approved its label."""
    distinct = {v.judge_id for v in verdicts}
    if len(distinct) < 2:
        raise InsufficientVerdicts(
            f"triplet {t.triplet_id} has verdicts from {len(distinct)} distinct "
            f"judge(s), need >= 2"
        )
    return all(v.label_correct for v in verdicts)


def cohens_kappa(pairs: Sequence[tuple[bool, bool]]) -> AgreementReport:
    """Chance-corrected agreement over paired boolean verdicts.

    p_o is the fraction of agreeing pairs; p_e comes from the two judges'
    marginal rates.  Perfect agreement with degenerate marginals is defined
    as kappa 1.
    """
    if not pairs:
        raise EmptyInput("cohens_kappa needs at least one verdict pair")
    n = len(pairs)
    tt = sum(1 for a, b in pairs if a and b)
    ff = sum(1 for a, b in pairs if not a and not b)
    tf = sum(1 for a, b in pairs if a and not b)
    ft = n - tt - ff - tf

    p_o = (tt + ff) / n
    a_true = (tt + tf) / n
    b_true = (tt + ft) / n
    p_e = a_true * b_true + (1 - a_true) * (1 - b_true)

    if p_e >= 1.0:
        if p_o >= 1.0:
            kappa = 1.0
        else:
            raise DegenerateMarginals(
                f"expected agreement is 1 but observed is {p_o:.4f}"
            )
    else:
        kappa = (p_o - p_e) / (1 - p_e)

    return AgreementReport(
        n=n,
        observed_agreement=p_o,
        expected_agreement=p_e,
        kappa=kappa,
        contingency={"tt": tt, "tf": tf, "ft": ft, "ff": ff},
    )
