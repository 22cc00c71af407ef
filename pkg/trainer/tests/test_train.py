import json

import pytest
import torch

from fiscal_trainer.data import (
    ANSWER_TOKENS,
    encode_batch,
    read_training_file,
)
from fiscal_trainer.evaluate import evaluate_adapter, score_batch
from fiscal_trainer.model import (
    ModelSpec,
    apply_lora,
    build_base_model,
    lora_parameters,
    lora_state_dict,
)
from fiscal_trainer.tokenizer import BOS_ID, UNK_ID, WordTokenizer
from fiscal_trainer.train import TrainConfig, masked_answer_loss, train


class TestTokenizer:
    def test_answer_tokens_single_and_distinct(self):
        tok = WordTokenizer.build(["some filing text"], extra_tokens=ANSWER_TOKENS)
        assert tok.token_id("yes") != tok.token_id("no")
        assert tok.encode("Yes") == [tok.token_id("yes")]  # case folds

    def test_unknown_words_map_to_unk(self):
        tok = WordTokenizer.build(["known words only"])
        assert tok.encode("unseen")[0] == UNK_ID

    def test_save_load_round_trip(self, tmp_path):
        tok = WordTokenizer.build(["revenue was $12.5 million"], extra_tokens=ANSWER_TOKENS)
        tok.save(tmp_path / "tok.json")
        loaded = WordTokenizer.load(tmp_path / "tok.json")
        assert loaded.vocab == tok.vocab


class TestDataLoading:
    def test_header_and_counts(self, training_file):
        examples, stats = read_training_file(training_file)
        assert len(examples) == 32
        assert stats.kept == 32 and stats.skipped_malformed == 0

    def test_unknown_target_skipped_with_count(self, tmp_path, caplog):
        path = tmp_path / "bad.jsonl"
        records = [
            {"prompt": "p one 1", "target": "yes", "triplet_id": "a"},
            {"prompt": "p two 2", "target": "maybe", "triplet_id": "b"},
            {"prompt": "p three 3", "target": "no", "triplet_id": "c"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in records))
        with caplog.at_level("WARNING"):
            examples, stats = read_training_file(path)
        assert [e.triplet_id for e in examples] == ["a", "c"]
        assert stats.skipped_malformed == 1

    def test_multi_token_target_skipped(self, tmp_path):
        path = tmp_path / "multi.jsonl"
        records = [
            {"prompt": "p 1", "target": "yes", "triplet_id": "a"},
            {"prompt": "p 2", "target": "not sure", "triplet_id": "b"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in records))
        examples, stats = read_training_file(path)
        assert stats.skipped_multi_token == 1
        assert len(examples) == 1

    def test_long_prompt_left_truncated(self):
        tok = WordTokenizer.build(["w"], extra_tokens=ANSWER_TOKENS)
        from fiscal_trainer.data import encode_prompt

        ids = encode_prompt(tok, "w " * 500, max_len=64)
        assert len(ids) == 63  # BOS + 62 tokens, one slot left for the answer
        assert ids[0] == BOS_ID


class TestModel:
    def test_fresh_adapter_equals_base(self, training_file):
        examples, _ = read_training_file(training_file)
        tok = WordTokenizer.build((e.prompt for e in examples), extra_tokens=ANSWER_TOKENS)
        spec = ModelSpec(preset="tiny-2x64", vocab_size=len(tok), seed=3)
        base = build_base_model(spec)
        batch = encode_batch(tok, examples[:4], base.max_len)
        with torch.no_grad():
            base_logits = base(batch.input_ids)
        adapted = apply_lora(build_base_model(spec), rank=4, alpha=8.0, seed=3)
        with torch.no_grad():
            adapted_logits = adapted(batch.input_ids)
        assert torch.equal(base_logits, adapted_logits)

    def test_base_rebuild_deterministic(self):
        spec = ModelSpec(preset="tiny-2x64", vocab_size=100, seed=9)
        a, b = build_base_model(spec), build_base_model(spec)
        for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert torch.equal(pa, pb), name

    def test_only_lora_parameters_trainable(self):
        spec = ModelSpec(preset="tiny-2x64", vocab_size=100, seed=1)
        model = apply_lora(build_base_model(spec), rank=4, alpha=8.0, seed=1)
        trainable = lora_parameters(model)
        assert trainable
        names = {n for n, p in model.named_parameters() if p.requires_grad}
        assert all("lora_" in n for n in names)


class TestMaskedLoss:
    def _setup(self, training_file):
        examples, _ = read_training_file(training_file)
        tok = WordTokenizer.build((e.prompt for e in examples), extra_tokens=ANSWER_TOKENS)
        spec = ModelSpec(preset="tiny-2x64", vocab_size=len(tok), seed=2)
        model = build_base_model(spec)
        batch = encode_batch(tok, examples[:8], model.max_len)
        return model, batch

    def test_prompt_label_perturbation_has_no_effect(self, training_file):
        model, batch = self._setup(training_file)
        with torch.no_grad():
            logits = model(batch.input_ids)
        loss = masked_answer_loss(logits, batch.labels, batch.loss_mask)

        perturbed = batch.labels.clone()
        noise = torch.randint_like(perturbed, high=50)
        perturbed[~batch.loss_mask] = noise[~batch.loss_mask]
        perturbed_loss = masked_answer_loss(logits, perturbed, batch.loss_mask)
        assert abs(loss.item() - perturbed_loss.item()) <= 1e-6

    def test_loss_matches_target_token_nll(self, training_file):
        model, batch = self._setup(training_file)
        with torch.no_grad():
            logits = model(batch.input_ids)
        loss = masked_answer_loss(logits, batch.labels, batch.loss_mask)
        probs = torch.softmax(logits[batch.loss_mask], dim=-1)
        targets = batch.labels[batch.loss_mask]
        nll = -torch.log(probs[torch.arange(len(targets)), targets]).mean()
        assert loss.item() == pytest.approx(nll.item(), abs=1e-6)


class TestTraining:
    def test_loss_drops_on_smoke_set(self, training_file, tmp_path):
        result = train(
            TrainConfig(
                training_file=str(training_file),
                output_dir=str(tmp_path / "adapter"),
                max_steps=50,
                seed=1,
            )
        )
        assert result.final_loss < result.initial_loss
        assert (tmp_path / "adapter" / "adapter_model.pt").exists()
        assert (tmp_path / "adapter" / "loss_log.jsonl").exists()

    def test_initial_loss_is_base_target_nll(self, training_file, tmp_path):
        # At step 0 the adapter is exactly the base model, so the logged
        # starting loss must equal -log p0 of the answer token.
        result = train(
            TrainConfig(
                training_file=str(training_file),
                output_dir=str(tmp_path / "adapter"),
                max_steps=0,
                seed=4,
            )
        )
        examples, _ = read_training_file(training_file)
        tok = WordTokenizer.load(tmp_path / "adapter" / "tokenizer.json")
        spec = ModelSpec(preset="tiny-2x64", vocab_size=len(tok), seed=4)
        base = build_base_model(spec)
        nlls = []
        batch = encode_batch(tok, examples, base.max_len)
        with torch.no_grad():
            logits = base(batch.input_ids)
        probs = torch.softmax(logits[batch.loss_mask], dim=-1)
        targets = batch.labels[batch.loss_mask]
        nlls = -torch.log(probs[torch.arange(len(targets)), targets])
        assert result.initial_loss == pytest.approx(nlls.mean().item(), abs=1e-5)

    def test_zero_steps_adapter_equals_initialization(self, training_file, tmp_path):
        result = train(
            TrainConfig(
                training_file=str(training_file),
                output_dir=str(tmp_path / "adapter"),
                max_steps=0,
                seed=6,
            )
        )
        assert result.final_loss == pytest.approx(result.initial_loss, abs=1e-6)
        saved = torch.load(
            tmp_path / "adapter" / "adapter_model.pt", weights_only=True
        )
        tok = WordTokenizer.load(tmp_path / "adapter" / "tokenizer.json")
        spec = ModelSpec(preset="tiny-2x64", vocab_size=len(tok), seed=6)
        fresh = apply_lora(build_base_model(spec), rank=8, alpha=16.0, seed=6)
        fresh_state = lora_state_dict(fresh)
        assert saved.keys() == fresh_state.keys()
        for name in saved:
            assert torch.equal(saved[name], fresh_state[name]), name

    def test_untrained_accuracy_near_chance(self, random_prompt_file, tmp_path):
        train(
            TrainConfig(
                training_file=str(random_prompt_file),
                output_dir=str(tmp_path / "adapter"),
                max_steps=0,
                seed=8,
            )
        )
        result = evaluate_adapter(
            tmp_path / "adapter", random_prompt_file, tmp_path / "preds.jsonl"
        )
        assert result.n == 128
        assert abs(result.accuracy - 0.5) <= 0.15

    def test_overfit_beats_untrained(self, training_file, tmp_path):
        untrained = train(
            TrainConfig(
                training_file=str(training_file),
                output_dir=str(tmp_path / "a0"),
                max_steps=0,
                seed=2,
            )
        )
        trained = train(
            TrainConfig(
                training_file=str(training_file),
                output_dir=str(tmp_path / "a50"),
                max_steps=50,
                seed=2,
            )
        )
        acc_untrained = evaluate_adapter(
            tmp_path / "a0", training_file, tmp_path / "p0.jsonl"
        ).accuracy
        acc_trained = evaluate_adapter(
            tmp_path / "a50", training_file, tmp_path / "p50.jsonl"
        ).accuracy
        assert acc_trained > acc_untrained

    def test_loss_log_structure(self, training_file, tmp_path):
        train(
            TrainConfig(
                training_file=str(training_file),
                output_dir=str(tmp_path / "adapter"),
                max_steps=5,
                seed=3,
            )
        )
        lines = [
            json.loads(l)
            for l in (tmp_path / "adapter" / "loss_log.jsonl").read_text().splitlines()
        ]
        assert lines[0]["step"] == 0
        assert [l["step"] for l in lines[1:-1]] == [1, 2, 3, 4, 5]
        assert lines[-1]["step"] == "final"


class TestEvaluation:
    def test_confidences_renormalized(self, training_file, tmp_path):
        train(
            TrainConfig(
                training_file=str(training_file),
                output_dir=str(tmp_path / "adapter"),
                max_steps=0,
                seed=11,
            )
        )
        from fiscal_trainer.train import load_adapter

        model, tok, answer_ids = load_adapter(tmp_path / "adapter")
        examples, _ = read_training_file(training_file)
        confidences = score_batch(model, tok, examples[:8], model.max_len, answer_ids)
        assert all(0.0 <= c <= 1.0 for c in confidences)
        # Renormalization: p_yes/(p_yes + p_no) against raw softmax by hand.
        batch = encode_batch(tok, examples[:1], model.max_len, include_answer=False)
        with torch.no_grad():
            logits = model(batch.input_ids)
        probs = torch.softmax(logits[batch.loss_mask], dim=-1)[0]
        expected = probs[answer_ids["yes"]] / (
            probs[answer_ids["yes"]] + probs[answer_ids["no"]]
        )
        assert confidences[0] == pytest.approx(expected.item(), abs=1e-9)

    def test_predictions_format(self, training_file, tmp_path):
        train(
            TrainConfig(
                training_file=str(training_file),
                output_dir=str(tmp_path / "adapter"),
                max_steps=5,
                seed=13,
            )
        )
        result = evaluate_adapter(
            tmp_path / "adapter", training_file, tmp_path / "preds.jsonl"
        )
        lines = (tmp_path / "preds.jsonl").read_text().splitlines()
        assert len(lines) == result.n
        record = json.loads(lines[0])
        assert set(record) == {"triplet_id", "confidence", "gold", "predicted", "tau"}
        assert record["gold"] in (0, 1) and record["predicted"] in (0, 1)
