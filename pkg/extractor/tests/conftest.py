import numpy as np
import pytest
import torch
from torch import nn

from lgv_extractor.sampling import DictCorpus


class ToyLM(nn.Module):
    """Tiny causal-ish model: embedding, two linear blocks, output head.

    Only fc1 and fc2 are importance-scored; the embedding and head are
    excluded by the default layer filter.
    """

    def __init__(self, vocab=256, dim=16, hidden=32, seed=0):
        super().__init__()
        torch.manual_seed(seed)
        self.embed_tokens = nn.Embedding(vocab, dim)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)
        self.lm_head = nn.Linear(dim, vocab)

    def forward(self, token_ids):
        hidden = self.embed_tokens(token_ids)
        hidden = torch.tanh(self.fc1(hidden))
        hidden = self.fc2(hidden)
        return self.lm_head(hidden)


def synthetic_corpus(languages, docs_per_language=40, chars_per_doc=2048, seed=0):
    """Pseudo-random ASCII documents; byte tokenizer gives one token per char."""
    gen = np.random.default_rng(seed)
    table = {}
    for offset, language in enumerate(languages):
        docs = []
        for _ in range(docs_per_language):
            codes = gen.integers(97 + offset % 3, 97 + offset % 3 + 20, size=chars_per_doc)
            docs.append(bytes(codes.tolist()).decode("ascii"))
        table[language] = docs
    return DictCorpus(table)


@pytest.fixture
def toy_model():
    return ToyLM()


@pytest.fixture
def corpus():
    return synthetic_corpus(["uk", "pl", "fi"])
