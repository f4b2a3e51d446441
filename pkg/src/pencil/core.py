"""Token-level primitives: special tokens, tokenization, vocabularies.

Traces are sequences of surface tokens separated by single spaces. Three
control tokens drive the reduction rule; three delimiters frame prompts and
completions. Everything else is task text.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

CALL = "[CALL]"
SEP = "[SEP]"
RETURN = "[RETURN]"
START_OF_TEXT = "<|startoftext|>"
END_OF_PROMPT = "<|endofprompt|>"
END_OF_TEXT = "<|endoftext|>"

#: All special tokens, in canonical id order (ids 0..5 in every vocabulary).
SPECIAL_TOKENS: tuple[str, ...] = (
    CALL,
    SEP,
    RETURN,
    START_OF_TEXT,
    END_OF_PROMPT,
    END_OF_TEXT,
)

#: The control subset that the reduction rule matches on.
CONTROL_TOKENS = frozenset((CALL, SEP, RETURN))


def tokenize(text: str) -> list[str]:
    """Split trace text into tokens (any whitespace separates)."""
    return text.split()


def detokenize(tokens: Iterable[str]) -> str:
    """Join tokens back into canonical single-space text."""
    return " ".join(tokens)


class UnknownTokenError(KeyError):
    """A surface form is missing from the vocabulary."""


@dataclass(frozen=True)
class Vocab:
    """Immutable surface <-> id mapping.

    Ids are line numbers of the on-disk format: one surface per line, the six
    special tokens first (ids 0-5), remaining surfaces sorted lexicographically
    so repeated builds over the same corpus are byte-identical.
    """

    surfaces: tuple[str, ...]

    def __post_init__(self) -> None:
        if tuple(self.surfaces[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        if len(set(self.surfaces)) != len(self.surfaces):
            raise ValueError("duplicate surface in vocabulary")
        object.__setattr__(
            self, "_ids", {s: i for i, s in enumerate(self.surfaces)}
        )

    @classmethod
    def build(cls, corpora: Iterable[Sequence[str]]) -> "Vocab":
        """Collect every surface appearing in the corpora."""
        seen: set[str] = set()
        for seq in corpora:
            seen.update(seq)
        rest = sorted(seen - set(SPECIAL_TOKENS))
        return cls(surfaces=SPECIAL_TOKENS + tuple(rest))

    def __len__(self) -> int:
        return len(self.surfaces)

    def __contains__(self, surface: str) -> bool:
        return surface in self._ids  # type: ignore[attr-defined]

    def id_of(self, surface: str) -> int:
        try:
            return self._ids[surface]  # type: ignore[attr-defined]
        except KeyError:
            raise UnknownTokenError(surface) from None

    def surface_of(self, token_id: int) -> str:
        return self.surfaces[token_id]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.surfaces[i] for i in ids]

    def save(self, path: str) -> None:
        """Write one surface per line (UTF-8, LF, trailing newline)."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for s in self.surfaces:
                fh.write(s + "\n")

    @classmethod
    def load(cls, path: str) -> "Vocab":
        with open(path, "r", encoding="utf-8") as fh:
            surfaces = tuple(fh.read().splitlines())
        return cls(surfaces=surfaces)
