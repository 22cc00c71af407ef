import json
import random

import pytest


def write_training_file(path, n=32, seed=5, header=True, balanced=True):
    """Synthetic single-token training records in the pipeline's format."""
    rng = random.Random(seed)
    with path.open("w", encoding="utf-8") as fh:
        if header:
            fh.write("# synthetic fixture\n")
        for i in range(n):
            yes = (i % 2 == 0) if balanced else (rng.random() < 0.5)
            claim_value = f"{i}.5"
            doc_value = claim_value if yes else f"{i}.9"
            verdict_cue = "matching" if yes else "contradicting"
            record = {
                "prompt": (
                    f"Verify the claim. Claim: company {i} earned "
                    f"${claim_value} million. Document: filing {i} reports "
                    f"${doc_value} million, {verdict_cue} the claim."
                ),
                "target": "yes" if yes else "no",
                "triplet_id": f"t{i:04d}",
            }
            fh.write(json.dumps(record) + "\n")
    return path


@pytest.fixture
def training_file(tmp_path):
    return write_training_file(tmp_path / "train.jsonl")


@pytest.fixture
def random_prompt_file(tmp_path):
    """Balanced labels over prompts that carry no signal about the answer."""
    rng = random.Random(17)
    path = tmp_path / "random_eval.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        for i in range(128):
            words = " ".join(
                rng.choice(["alpha", "bravo", "delta", "metric", "ledger", "quarter"])
                for _ in range(12)
            )
            record = {
                "prompt": f"Verify. Claim: {words} {i}. Document: {words} notes {i}.",
                "target": "yes" if i % 2 == 0 else "no",
                "triplet_id": f"r{i:04d}",
            }
            fh.write(json.dumps(record) + "\n")
    return path
