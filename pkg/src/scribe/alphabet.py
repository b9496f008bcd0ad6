"""Character inventories and one-hot encoding."""

from __future__ import annotations

import numpy as np

__all__ = ["Alphabet", "UnknownCharacterError", "default_alphabet", "one_hot_encode", "DEFAULT_CHARACTERS"]

# Space, digits, letters, then punctuation/symbols. 86 characters total; the
# blank used by the segmentation lattice is appended as the final index.
DEFAULT_CHARACTERS = (
    " "
    "0123456789"
    "abcdefghijklmnopqrstuvwxyz"
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    "!?\"'*+-=:;,.<>\\/[]()#$&"
)


class UnknownCharacterError(ValueError):
    def __init__(self, char: str):
        self.char = char
        super().__init__(f"character {char!r} (U+{ord(char):04X}) is not in the alphabet")


class Alphabet:
    """Ordered character set plus one trailing blank token.

    ``size`` counts the blank, so one-hot vectors have length ``size`` and the
    blank lives at index ``size - 1``. Indices are stable: they depend only on
    the character string used to build the alphabet.
    """

    def __init__(self, characters: str):
        if len(set(characters)) != len(characters):
            raise ValueError("alphabet characters must be unique")
        if not characters:
            raise ValueError("alphabet must contain at least one character")
        self.characters = characters
        self._index = {c: i for i, c in enumerate(characters)}

    @property
    def size(self) -> int:
        return len(self.characters) + 1

    @property
    def blank_index(self) -> int:
        return len(self.characters)

    def index(self, char: str) -> int:
        try:
            return self._index[char]
        except KeyError:
            raise UnknownCharacterError(char) from None

    def __contains__(self, char: str) -> bool:
        return char in self._index

    def char(self, index: int) -> str:
        return self.characters[index]

    def indices(self, text: str) -> np.ndarray:
        return np.array([self.index(c) for c in text], dtype=np.intp)

    def __eq__(self, other):
        return isinstance(other, Alphabet) and other.characters == self.characters

    def __repr__(self):
        return f"Alphabet({len(self.characters)} characters + blank)"


def default_alphabet() -> Alphabet:
    return Alphabet(DEFAULT_CHARACTERS)


def one_hot_encode(text: str, alphabet: Alphabet) -> np.ndarray:
    """(M, Q) one-hot matrix for a non-empty string."""
    if len(text) == 0:
        raise ValueError("cannot encode an empty string (need at least one character)")
    out = np.zeros((len(text), alphabet.size))
    out[np.arange(len(text)), alphabet.indices(text)] = 1.0
    return out
