"""Word-level tokenizer with a vocabulary built from the training file.

Lowercasing folds the surface variants of the answer tokens, so "Yes" and
"yes" share one id.  Unknown words at evaluation time map to UNK.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

PAD_ID = 0
BOS_ID = 1
UNK_ID = 2
SPECIALS = ("<pad>", "<bos>", "<unk>")

_WORD_RE = re.compile(r"[a-z0-9]+(?:[.,][0-9]+)*|[^\sa-z0-9]")


def word_split(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


class WordTokenizer:
    def __init__(self, vocab: dict[str, int]):
        self.vocab = vocab
        self.inverse = {i: w for w, i in vocab.items()}

    @classmethod
    def build(cls, texts, extra_tokens=()) -> "WordTokenizer":
        words = set()
        for text in texts:
            words.update(word_split(text))
        for token in extra_tokens:
            words.update(word_split(token))
        vocab = {w: i for i, w in enumerate(SPECIALS)}
        for w in sorted(words):
            vocab[w] = len(vocab)
        return cls(vocab)

    def __len__(self) -> int:
        return len(self.vocab)

    def encode(self, text: str) -> list[int]:
        return [self.vocab.get(w, UNK_ID) for w in word_split(text)]

    def token_id(self, token: str) -> int:
        ids = self.encode(token)
        if len(ids) != 1:
            raise ValueError(f"{token!r} is not a single token ({len(ids)} pieces)")
        return ids[0]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.vocab, ensure_ascii=False, sort_keys=True),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))
