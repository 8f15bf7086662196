import numpy as np
import pytest
import torch
from torch import nn

from lgv_extractor.capture import (
    capture_and_score,
    score_from_gram,
    targeted_linears,
)
from lgv_extractor.errors import ExtractionError
from lgv_extractor.job import ExtractionJob
from lgv_extractor.sampling import byte_tokenizer, sample_calibration

from conftest import ToyLM


def job_for(tmp_path, budget=4096, seq=256, seed=0, name="uk.lgv"):
    return ExtractionJob(
        model_id="toy",
        corpus_id="synthetic",
        language="uk",
        output_path=str(tmp_path / name),
        token_budget=budget,
        sequence_length=seq,
        seed=seed,
    )


class TestTargetedLinears:
    def test_default_excludes_embedding_and_head(self, toy_model):
        names = [name for name, _ in targeted_linears(toy_model)]
        assert names == ["fc1", "fc2"]

    def test_include_list_overrides(self, toy_model):
        names = [name for name, _ in targeted_linears(toy_model, include=["fc2", "lm_head"])]
        assert names == ["fc2", "lm_head"]

    def test_no_match_rejected(self, toy_model):
        with pytest.raises(ExtractionError, match="no linear"):
            targeted_linears(toy_model, include=["nonexistent"])


class TestCaptureAndScore:
    def test_writes_vector_and_orders_layers(self, tmp_path, toy_model, corpus):
        job = job_for(tmp_path)
        batches = sample_calibration(job, corpus, byte_tokenizer)
        result = capture_and_score(job, batches, toy_model)
        assert result.layer_names == ["fc1", "fc2"]
        assert [layer_id for layer_id, _ in result.bits_per_layer] == [0, 1]
        # fc1 is 32x16, fc2 is 16x32: 512 bits each
        assert [bits.size for _, bits in result.bits_per_layer] == [512, 512]
        assert (tmp_path / "uk.lgv").read_bytes() == result.payload

    def test_ones_fraction_at_most_half(self, tmp_path, toy_model, corpus):
        # strict median thresholding sets exactly half the bits for even,
        # all-distinct score counts and fewer for odd counts or ties
        job = job_for(tmp_path)
        batches = sample_calibration(job, corpus, byte_tokenizer)
        result = capture_and_score(job, batches, toy_model)
        for _, bits in result.bits_per_layer:
            assert 0 < int(bits.sum()) <= bits.size // 2
            assert int(bits.sum()) < bits.size

    def test_deterministic_payload(self, tmp_path, toy_model, corpus):
        job_a = job_for(tmp_path, name="a.lgv")
        job_b = job_for(tmp_path, name="b.lgv")
        batches = sample_calibration(job_a, corpus, byte_tokenizer)
        first = capture_and_score(job_a, batches, ToyLM())
        second = capture_and_score(job_b, batches, ToyLM())
        assert first.payload == second.payload

    def test_batch_size_does_not_change_scores(self, tmp_path, toy_model, corpus):
        job_small = ExtractionJob(
            model_id="toy", corpus_id="s", language="uk",
            output_path=str(tmp_path / "s.lgv"),
            token_budget=4096, sequence_length=256, batch_size=2,
        )
        job_large = ExtractionJob(
            model_id="toy", corpus_id="s", language="uk",
            output_path=str(tmp_path / "l.lgv"),
            token_budget=4096, sequence_length=256, batch_size=16,
        )
        batches = sample_calibration(job_small, corpus, byte_tokenizer)
        a = capture_and_score(job_small, batches, toy_model)
        b = capture_and_score(job_large, batches, toy_model)
        for left, right in zip(a.scores, b.scores):
            np.testing.assert_allclose(left, right, rtol=1e-10)

    def test_unreached_layer_rejected(self, tmp_path, corpus):
        class Detached(nn.Module):
            def __init__(self):
                super().__init__()
                self.embed_tokens = nn.Embedding(256, 8)
                self.fc1 = nn.Linear(8, 8)
                self.orphan = nn.Linear(8, 8)  # never called in forward

            def forward(self, ids):
                return self.fc1(self.embed_tokens(ids))

        job = job_for(tmp_path)
        batches = sample_calibration(job, corpus, byte_tokenizer)
        with pytest.raises(ExtractionError, match="no activations"):
            capture_and_score(job, batches, Detached())

    def test_dump_wx_container(self, tmp_path, toy_model, corpus):
        job = job_for(tmp_path)
        batches = sample_calibration(job, corpus, byte_tokenizer)
        dump = tmp_path / "wx.npz"
        capture_and_score(job, batches, toy_model, dump_wx_layer=0, dump_wx_path=str(dump))
        with np.load(dump) as bundle:
            assert set(bundle.keys()) == {"W_00000000", "X_00000000"}
            assert bundle["W_00000000"].shape == (32, 16)
            assert bundle["X_00000000"].shape == (4096, 16)


class TestScoreFromGram:
    def test_identity_gram_with_absolute_zero_damping(self):
        weight = np.array([[3.0, 4.0]])
        scores = score_from_gram(weight, np.eye(2), damping_absolute=0.0)
        np.testing.assert_allclose(scores, weight**2)

    def test_relative_damping_applied(self):
        weight = np.ones((1, 2))
        gram = np.diag([2.0, 4.0])
        scores = score_from_gram(weight, gram, damping_factor=0.5)
        lam = 0.5 * 3.0  # mean(diag) = 3
        expected = 1.0 / np.diag(np.linalg.inv(gram + lam * np.eye(2)))
        np.testing.assert_allclose(scores[0], expected)
