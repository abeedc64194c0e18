"""Whitespace-and-punctuation tokenizer plus a closed vocabulary.

All corpus text is lowercased; ids 0..4 are reserved for the special
tokens shared by every model in this package.
"""

from __future__ import annotations

import re

PAD = "<pad>"
BOS = "<bos>"
EOS = "<eos>"
SEP = "<sep>"
UNK = "<unk>"
SPECIALS = [PAD, BOS, EOS, SEP, UNK]

_TOKEN_RE = re.compile(r"[a-z0-9']+|[^\sa-z0-9']")


class TokenOutOfVocab(KeyError):
    """Raised when encoding meets a token absent from a closed vocabulary."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word / punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Bidirectional token/id map with fixed special ids."""

    def __init__(self, tokens: list[str]):
        self.tokens = list(SPECIALS)
        seen = set(SPECIALS)
        for t in tokens:
            if t not in seen:
                seen.add(t)
                self.tokens.append(t)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.pad_id = self.index[PAD]
        self.bos_id = self.index[BOS]
        self.eos_id = self.index[EOS]
        self.sep_id = self.index[SEP]
        self.unk_id = self.index[UNK]

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, token_lists) -> "Vocabulary":
        """Deterministic vocabulary: sorted union of all tokens."""
        pool = set()
        for toks in token_lists:
            pool.update(toks)
        pool.difference_update(SPECIALS)
        return cls(sorted(pool))

    def encode(self, toks: list[str], allow_unk: bool = True) -> list[int]:
        ids = []
        for t in toks:
            i = self.index.get(t)
            if i is None:
                if not allow_unk:
                    raise TokenOutOfVocab(t)
                i = self.unk_id
            ids.append(i)
        return ids

    def decode(self, ids, strip_specials: bool = True) -> list[str]:
        out = []
        for i in ids:
            if i < 0 or i >= len(self.tokens):
                raise TokenOutOfVocab(int(i))
            t = self.tokens[i]
            if strip_specials and t in (PAD, BOS, EOS):
                continue
            out.append(t)
        return out
