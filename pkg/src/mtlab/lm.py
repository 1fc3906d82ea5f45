"""Add-one-smoothed bigram language model over the base lexical tokens."""

import json
import math

import numpy as np

BOS = -1  # start-of-sequence history


class BigramLM:
    def __init__(self, base_size, counts=None):
        self.base_size = base_size          # K, blank included
        self.n_lex = base_size - 1          # lexical ids 1..K-1
        # counts[h][k]: h in {BOS} + lexical ids, k lexical
        self.counts = counts if counts is not None else {}

    @classmethod
    def train(cls, corpus, base_size):
        """`corpus`: iterable of token-id sequences (lexical ids only)."""
        lm = cls(base_size)
        for seq in corpus:
            h = BOS
            for tok in seq:
                if not 1 <= tok < base_size:
                    raise ValueError(f"token {tok} outside base vocabulary")
                lm.counts.setdefault(h, {})
                lm.counts[h][tok] = lm.counts[h].get(tok, 0) + 1
                h = tok
        return lm

    def score(self, history, token):
        """log P(token | history); history is the previous lexical token
        or None/BOS at sequence start.  Unseen histories and tokens fall
        back to the smoothing floor."""
        if not 1 <= token < self.base_size:
            raise ValueError(f"token {token} outside base vocabulary")
        h = BOS if history is None else history
        row = self.counts.get(h, {})
        total = sum(row.values())
        return math.log(row.get(token, 0) + 1) - math.log(total + self.n_lex)

    def score_all(self, history):
        """Vector of log P(k | history) indexed by token id (blank slot
        gets -inf)."""
        out = np.full(self.base_size, -np.inf)
        for k in range(1, self.base_size):
            out[k] = self.score(history, k)
        return out

    def perplexity(self, corpus):
        nll = 0.0
        n = 0
        for seq in corpus:
            h = BOS
            for tok in seq:
                nll -= self.score(None if h == BOS else h, tok)
                n += 1
                h = tok
        return math.exp(nll / n)

    def save(self, path):
        with open(path, "w") as f:
            json.dump({"base_size": self.base_size,
                       "counts": {str(h): v for h, v in self.counts.items()}},
                      f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            d = json.load(f)
        counts = {int(h): {int(k): c for k, c in row.items()}
                  for h, row in d["counts"].items()}
        return cls(d["base_size"], counts)


class UnigramLM:
    """Baseline for perplexity comparisons."""

    def __init__(self, base_size):
        self.base_size = base_size
        self.counts = {}

    @classmethod
    def train(cls, corpus, base_size):
        lm = cls(base_size)
        for seq in corpus:
            for tok in seq:
                lm.counts[tok] = lm.counts.get(tok, 0) + 1
        return lm

    def perplexity(self, corpus):
        total = sum(self.counts.values())
        n_lex = self.base_size - 1
        nll = 0.0
        n = 0
        for seq in corpus:
            for tok in seq:
                nll -= math.log(self.counts.get(tok, 0) + 1) - math.log(total + n_lex)
                n += 1
        return math.exp(nll / n)
