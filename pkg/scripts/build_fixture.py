#!/usr/bin/env python3
"""Regenerate the bundled offline fixture under fixtures/.

Produces a 10-document corpus, deterministic mock scripts for every backend
role (extractor, judges, synthesis, verifier oracle), the fixture run
config, and two reference conflict-insertion cases built from real filing
excerpts.  Everything is derived mechanically from the tables below so the
fixture stays reviewable and reproducible.
"""

from __future__ import annotations

import json
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# company, sector, city, year, metric, value, distorted value, conflict value
COMPANIES = [
    ("Acme Corp", "industrial tooling", "Cleveland", 2021, "revenue", "$12.5 million", "$13.1 million", "$11.9 million"),
    ("Borealis Energy", "renewable power", "Calgary", 2020, "net income", "$48.2 million", "$46.7 million", "$50.3 million"),
    ("Cobalt Financial", "asset management", "Boston", 2019, "total assets", "$905.4 million", "$915.8 million", "$890.1 million"),
    ("Dunmore Retail Group", "specialty retail", "Atlanta", 2022, "operating expenses", "$77.6 million", "$79.9 million", "$75.2 million"),
    ("Eastlake Pharmaceuticals", "biotechnology", "San Diego", 2018, "research spending", "$210.3 million", "$208.4 million", "$215.6 million"),
    ("Fairway Logistics", "freight services", "Memphis", 2021, "fleet investment", "$33.8 million", "$35.4 million", "$32.1 million"),
    ("Granite Insurance", "property insurance", "Hartford", 2020, "premium income", "$402.9 million", "$398.5 million", "$407.3 million"),
    ("Harborview Properties", "commercial real estate", "Seattle", 2019, "rental revenue", "$156.7 million", "$161.2 million", "$151.9 million"),
    ("Ironwood Semiconductors", "chip fabrication", "Austin", 2022, "capital expenditure", "$88.1 million", "$86.3 million", "$91.4 million"),
    ("Juniper Foods", "packaged foods", "Portland", 2018, "gross profit", "$64.5 million", "$66.8 million", "$62.2 million"),
]

EXCLUSION_SENTENCE = (
    "The company highlighted steady operating performance "
    "without disclosing specific figures."
)


def claim_sentence(company, year, metric, value):
    return f"In fiscal {year}, {company} reported {metric} of {value}."


def doc_text(company, sector, city, year, metric, value):
    s1 = f"{company} is a {sector} company headquartered in {city}."
    s2 = claim_sentence(company, year, metric, value)
    s3 = "The company also expanded its regional operations during the period."
    return f"{s1} {s2} {s3}"


def build_corpus():
    records = []
    for i, (company, sector, city, year, metric, value, _, _) in enumerate(COMPANIES):
        records.append(
            {
                "doc_id": f"doc-{i + 1:04d}",
                "text": doc_text(company, sector, city, year, metric, value),
                "source": "fixture",
            }
        )
    return records


def build_extractor_script():
    rules = []
    for company, _, _, year, metric, value, _, _ in COMPANIES:
        rules.append(
            {
                "match": company,
                "reply": f"- {claim_sentence(company, year, metric, value)}",
            }
        )
    rules.append({"match": "", "reply": "(none)"})
    return rules


def build_judge_script():
    return [
        {"match": "bundled assertions", "reply": "yes - one subject, one amount."},
        {"match": "Asserted label", "reply": "yes - the label fits the document."},
    ]


def perturbed_documents(entry):
    company, sector, city, year, metric, value, distorted, conflict = entry
    original = doc_text(company, sector, city, year, metric, value)
    middle = claim_sentence(company, year, metric, value)
    return {
        "paraphrase": (
            f"According to the fiscal {year} results, {company} posted "
            f"{metric} of {value}."
        ),
        "summarization": f"{company} reported {metric} of {value} in fiscal {year}.",
        "conflict_insertion": (
            f"{original} However, the figures were subsequently restated, "
            f"showing {metric} of {conflict} for fiscal {year}."
        ),
        "fact_exclusion": original.replace(middle, EXCLUSION_SENTENCE),
        "value_distortion": original.replace(value, distorted),
        "misattribution": original.replace(
            middle,
            f"In fiscal {year}, its subsidiary Meridian Holdings reported "
            f"{metric} of {value}.",
        ),
    }


# Template phrases that identify which synthesis module a prompt came from.
KIND_KEYWORDS = {
    "paraphrase": "Rewrite the financial claim",
    "conflict_insertion": "contradicts the claim",
    "fact_exclusion": "no longer contains any evidence",
    "value_distortion": "small, plausible change",
    "misattribution": "attributed to a different",
    "summarization": "concise summary",
}


def build_synth_script():
    rules = []
    for entry in COMPANIES:
        company = entry[0]
        replies = perturbed_documents(entry)
        for kind, keyword in KIND_KEYWORDS.items():
            pattern = f"re:(?s){keyword}.*{company}"
            rules.append({"match": pattern, "reply": replies[kind]})
    return rules


def build_verifier_script():
    import math

    no_lp = {"yes": math.log(0.03), "no": math.log(0.92)}
    yes_lp = {"yes": math.log(0.92), "no": math.log(0.03)}
    rules = [
        {"match": "subsequently restated", "reply": "no", "logprobs": no_lp},
        {"match": "without disclosing specific figures", "reply": "no", "logprobs": no_lp},
        {"match": "Meridian Holdings", "reply": "no", "logprobs": no_lp},
    ]
    for entry in COMPANIES:
        distorted = entry[6]
        rules.append({"match": distorted, "reply": "no", "logprobs": no_lp})
    rules.append({"match": "", "reply": "yes", "logprobs": yes_lp})
    return rules


def build_config():
    return {
        "corpus": "corpus.jsonl",
        "out_dir": "out",
        "seed": 7,
        "tau": 0.5,
        "include_original": True,
        "split": {"train": 0.8, "eval": 0.1, "test": 0.1, "test_docs_unseen": True},
        "backends": {
            "extraction": {
                "kind": "mock",
                "model_name": "mock-extractor",
                "script": "mock_extractor.jsonl",
            },
            "synthesis": {
                "kind": "mock",
                "model_name": "mock-synth",
                "script": "mock_synth.jsonl",
            },
            "judges": [
                {
                    "kind": "mock",
                    "model_name": "mock-judge-a",
                    "script": "mock_judge_a.jsonl",
                },
                {
                    "kind": "mock",
                    "model_name": "mock-judge-b",
                    "script": "mock_judge_b.jsonl",
                },
            ],
            "verifier": {
                "kind": "mock",
                "model_name": "mock-verifier",
                "script": "mock_verifier.jsonl",
            },
        },
    }


# Two conflict-insertion reference cases over real balance-sheet excerpts:
# the edited document carries one inserted sentence contradicting the claim.

KRAFT_CLAIM = (
    "The Kraft Heinz Company's Other non-current assets were $2,100 million "
    "as of December 28, 2019."
)
KRAFT_INSERTED = (
    "Other non-current assets, as detailed in Note 12, were adjusted to "
    "$2,050 million at December 28, 2019, due to reclassification of certain "
    "deferred tax items."
)
KRAFT_DOC_EDITED = """The Kraft Heinz Company
Consolidated Balance Sheets
(in millions, except per share data)
December 28, 2019 December 29, 2018
ASSETS
Cash and cash equivalents
$
2,279 $
1,130
Trade receivables (net of allowances of $33 at December 28, 2019 and $24 at December 29, 2018)
1,973
2,129
Income taxes receivable
173
152
Inventories
2,721
2,667
Prepaid expenses
384
400
Other current assets
445
1,221
Assets held for sale
122
1,376
Total current assets
8,097
9,075
Property, plant and equipment, net
7,055
7,078
Goodwill
35,546
36,503
Intangible assets, net
48,652
49,468
Other non-current assets
2,100
1,337
Other non-current assets, as detailed in Note 12, were adjusted to $2,050 million at December 28, 2019, due to reclassification of certain deferred tax items.
TOTAL ASSETS
$
101,450 $
103,461
LIABILITIES AND EQUITY
Commercial paper and other short-term debt
$
6 $
21
Current portion of long-term debt
1,022
377
Trade payables
4,003
4,153
Accrued marketing
647
722
Interest payable
384
408
Other current liabilities
1,804
1,767
Liabilities held for sale
9
55
Total current liabilities
7,875
7,503
Long-term debt
28,216
30,770
Deferred income taxes
11,878
12,202
Accrued postemployment costs
273
306
Other non-current liabilities
1,459
902
TOTAL LIABILITIES
49,701
51,683
Commitments and Contingencies (Note 17)
Redeemable noncontrolling interest
3
Equity:
Common stock, $0.01 par value (5,000 shares authorized; 1,224 shares issued and 1,221 shares outstanding at December 28, 2019;
1,224 shares issued and 1,220 shares outstanding at December 29, 2018)
12
12
Additional paid-in capital
56,828
58,723
Retained earnings/(deficit)
(3,060)
(4,853)
Accumulated other comprehensive income/(losses)
(1,886)
(1,943)
Treasury stock, at cost (3 shares at December 28, 2019 and 4 shares at December 29, 2018)
(271)
(282)
Total shareholders' equity
51,623
51,657
Noncontrolling interest
126
118
TOTAL EQUITY
51,749
51,775
TOTAL LIABILITIES AND EQUITY
$
101,450 $
103,461
See accompanying notes to the consolidated financial statements.
47"""

LOCKHEED_CLAIM = "Lockheed Martin's 2020 retained earnings were $21,636 million."
LOCKHEED_INSERTED = (
    "However, the subsequent audit adjustment reflected retained earnings of "
    "$21,500 million for the year ended 2020."
)
LOCKHEED_DOC_EDITED = """Table of Contents
Lockheed Martin Corporation
Consolidated Balance Sheets
(in millions, except par value)
December 31,
2021
2020
Assets
Current assets
Cash and cash equivalents
$
3,604
$
3,160
Receivables, net
1,963
1,978
Contract assets
10,579
9,545
Inventories
2,981
3,545
Other current assets
688
1,150
Total current assets
19,815
19,378
Property, plant and equipment, net
7,597
7,213
Goodwill
10,813
10,806
Intangible assets, net
2,706
3,012
Deferred income taxes
2,290
3,475
Other noncurrent assets
7,652
6,826
Total assets
$
50,873
$
50,710
Liabilities and equity
Current liabilities
Accounts payable
$
780
$
880
Salaries, benefits and payroll taxes
3,108
3,163
Contract liabilities
8,107
7,545
Current maturities of long-term debt
6
500
Other current liabilities
1,996
1,845
Total current liabilities
13,997
13,933
Long-term debt, net
11,670
11,669
Accrued pension liabilities
8,319
12,874
Other noncurrent liabilities
5,928
6,196
Total liabilities
39,914
44,672
Stockholders equity
Common stock, $1 par value per share
271
279
Additional paid-in capital
94
221
Retained earnings
21,600
21,636
However, the subsequent audit adjustment reflected retained earnings of $21,500 million for the year ended 2020.
Accumulated other comprehensive loss
(11,006)
(16,121)
Total stockholders equity
10,959
6,015
Noncontrolling interests in subsidiary
23
Total equity
10,959
6,038
Total liabilities and equity
$
50,873
$
50,710
The accompanying notes are an integral part of these consolidated financial statements.
68"""


def build_reference_cases():
    cases = []
    for name, claim, inserted, edited in [
        ("balance-sheet-adjustment", KRAFT_CLAIM, KRAFT_INSERTED, KRAFT_DOC_EDITED),
        ("retained-earnings-restatement", LOCKHEED_CLAIM, LOCKHEED_INSERTED, LOCKHEED_DOC_EDITED),
    ]:
        assert inserted in edited, name
        original = "\n".join(
            line for line in edited.splitlines() if line.strip() != inserted
        )
        cases.append(
            {
                "name": name,
                "claim": claim,
                "document_original": original,
                "document_edited": edited,
                "inserted_sentence": inserted,
            }
        )
    return cases


def write_jsonl(path, records):
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def main():
    FIXTURES.mkdir(exist_ok=True)
    write_jsonl(FIXTURES / "corpus.jsonl", build_corpus())
    write_jsonl(FIXTURES / "mock_extractor.jsonl", build_extractor_script())
    write_jsonl(FIXTURES / "mock_judge_a.jsonl", build_judge_script())
    write_jsonl(FIXTURES / "mock_judge_b.jsonl", build_judge_script())
    write_jsonl(FIXTURES / "mock_synth.jsonl", build_synth_script())
    write_jsonl(FIXTURES / "mock_verifier.jsonl", build_verifier_script())

    import yaml

    (FIXTURES / "config.yaml").write_text(
        yaml.safe_dump(build_config(), sort_keys=False), encoding="utf-8"
    )
    (FIXTURES / "conflict_reference_cases.json").write_text(
        json.dumps(build_reference_cases(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    print(f"fixture written under {FIXTURES}")


if __name__ == "__main__":
    main()
