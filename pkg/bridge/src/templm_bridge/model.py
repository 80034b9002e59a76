"""Word-level scoring on top of a small character-level causal transformer.

The wire protocol deals in whitespace words; internally every word is a
character sequence (the "subword" units here), and a word's log-probability
is the sum of its character log-probabilities plus the word-boundary
character. Renormalizing those joint scores over the word vocabulary plus
the end-of-sequence event yields exactly normalized word distributions.

The transformer is randomly initialized from a fixed seed: it stands in
for any finetuned checkpoint, and everything above it (scoring, beam
search, the wire protocol) is checkpoint-agnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn

END_WORD = "__end__"
SEP = "[SEP]"

BOS_CHAR = "\x02"
EOS_CHAR = "\x03"
UNK_CHAR = "\x01"
CHARSET = [UNK_CHAR, BOS_CHAR, EOS_CHAR] + [chr(c) for c in range(32, 127)]
CHAR_INDEX = {c: i for i, c in enumerate(CHARSET)}


class CharTransformer(nn.Module):
    """Tiny causal transformer over characters."""

    def __init__(self, dim: int = 48, heads: int = 4, layers: int = 2,
                 max_len: int = 512, seed: int = 1234):
        super().__init__()
        torch.manual_seed(seed)
        self.max_len = max_len
        self.embed = nn.Embedding(len(CHARSET), dim)
        self.pos = nn.Embedding(max_len, dim)
        layer = nn.TransformerEncoderLayer(
            d_model=dim, nhead=heads, dim_feedforward=dim * 2,
            batch_first=True, dropout=0.0,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=layers)
        self.head = nn.Linear(dim, len(CHARSET))
        self.eval()

    def forward(self, idx: torch.Tensor) -> torch.Tensor:
        n = idx.shape[1]
        mask = torch.triu(torch.full((n, n), float("-inf")), diagonal=1)
        x = self.embed(idx) + self.pos(torch.arange(n)).unsqueeze(0)
        x = self.encoder(x, mask=mask)
        return self.head(x)


def encode(text: str) -> list[int]:
    return [CHAR_INDEX.get(c, CHAR_INDEX[UNK_CHAR]) for c in text]


def linearize(data: dict[str, list[str]]) -> str:
    parts = []
    for i, field in enumerate(sorted(data)):
        if i:
            parts.append(SEP)
        parts.append(field)
        parts.append(":")
        for j, value in enumerate(data[field]):
            if j:
                parts.append("|")
            parts.append(value)
    return " ".join(parts)


@dataclass(frozen=True)
class WordDistribution:
    logprobs: dict[str, float]  # includes END_WORD; sums to 1 exactly

    def logprob(self, word: str) -> float:
        return self.logprobs.get(word, -1e9)

    def argmax(self) -> str:
        return min(self.logprobs, key=lambda w: (-self.logprobs[w], w))


class WordScorer:
    """Exact word-level distributions from the character model."""

    def __init__(self, model: CharTransformer, vocab: Sequence[str]):
        self.model = model
        self.vocab = tuple(sorted(set(vocab)))
        if not self.vocab:
            raise ValueError("word vocabulary must be non-empty")
        self._cache: dict[str, WordDistribution] = {}

    # -- character-level joints ------------------------------------------

    @torch.no_grad()
    def _char_logprobs(self, contexts: list[str], continuations: list[str]) -> list[float]:
        """Joint log-prob of each continuation's characters given its context."""
        rows = []
        spans = []
        for ctx, cont in zip(contexts, continuations):
            ids = encode(BOS_CHAR + ctx) + encode(cont)
            if len(ids) > self.model.max_len:
                ids = ids[-self.model.max_len :]
            rows.append(ids)
            spans.append(len(encode(cont)))
        width = max(len(r) for r in rows)
        batch = torch.zeros((len(rows), width), dtype=torch.long)
        for i, r in enumerate(rows):
            batch[i, : len(r)] = torch.tensor(r)
        logits = self.model(batch)
        logprobs = torch.log_softmax(logits, dim=-1)
        out = []
        for i, r in enumerate(rows):
            total = 0.0
            start = len(r) - spans[i]
            for pos in range(start, len(r)):
                total += float(logprobs[i, pos - 1, r[pos]])
            out.append(total)
        return out

    # -- word-level API ----------------------------------------------------

    def next_word_logprobs(
        self,
        data: dict[str, list[str]],
        prefix: Sequence[str],
        mode: str = "ltr",
        infill_left: Sequence[str] = (),
        infill_right: Sequence[str] = (),
    ) -> WordDistribution:
        if mode == "infill":
            left = " ".join([linearize(data)] + list(infill_left) + list(prefix)).strip()
            closing = " ".join(infill_right)
        elif mode == "ltr":
            left = " ".join([linearize(data)] + list(prefix)).strip()
            closing = ""
        else:
            raise ValueError(f"unknown mode {mode!r}")
        cache_key = f"{mode}\x00{left}\x00{closing}"
        hit = self._cache.get(cache_key)
        if hit is not None:
            return hit
        ctx = left + " " if left else ""
        contexts = [ctx] * (len(self.vocab) + 1)
        continuations = [w + " " for w in self.vocab]
        if mode == "infill" and closing:
            continuations.append(closing + EOS_CHAR)
        else:
            continuations.append(EOS_CHAR)
        raw = self._char_logprobs(contexts, continuations)
        names = list(self.vocab) + [END_WORD]
        norm = _logsumexp(raw)
        dist = WordDistribution({w: lp - norm for w, lp in zip(names, raw)})
        self._cache[cache_key] = dist
        return dist

    def beam_generate(
        self, data: dict[str, list[str]], k: int, max_len: int
    ) -> tuple[str, ...]:
        """Word-level beam search; hypotheses that emit END freeze and keep
        competing on total score, so k=1 reduces to greedy decoding."""
        beam: list[tuple[float, tuple[str, ...], bool]] = [(0.0, (), False)]
        for _ in range(max_len):
            candidates: list[tuple[float, tuple[str, ...], bool]] = []
            live = 0
            for score, words, finished in beam:
                if finished:
                    candidates.append((score, words, True))
                    continue
                live += 1
                dist = self.next_word_logprobs(data, words)
                for word, lp in dist.logprobs.items():
                    if word == END_WORD:
                        candidates.append((score + lp, words, True))
                    else:
                        candidates.append((score + lp, words + (word,), False))
            if not live:
                break
            candidates.sort(key=lambda c: (-c[0], c[1], not c[2]))
            beam = candidates[:k]
        finished = [c for c in beam if c[2]]
        pool = finished or beam
        best = min(pool, key=lambda c: (-c[0], c[1]))
        return best[1]


def _logsumexp(values: list[float]) -> float:
    top = max(values)
    return top + math.log(math.fsum(math.exp(v - top) for v in values))


def build_vocab_from_corpus(path: str) -> list[str]:
    """Word vocabulary from a JSONL corpus: data values plus text tokens."""
    import json

    words: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            for values in row.get("data", {}).values():
                vals = values if isinstance(values, list) else [values]
                for v in vals:
                    words.update(str(v).split())
            if row.get("text"):
                words.update(str(row["text"]).split())
    return sorted(words)


DEFAULT_VOCAB = (
    "a an the is are was in near serves and it has of restaurant pub "
    "place food city centre riverside cheap moderate high low average "
    "rating customer family friendly not Aromi Zizzi Cotto Strada ."
).split()
