"""Item vocabulary with reserved padding and mask ids."""
from __future__ import annotations

from ..errors import VocabularyError

PAD_ID = 0
MASK_ID = 1
N_RESERVED = 2


class Vocabulary:
    """Maps external item ids (strings) to contiguous integers from 2."""

    def __init__(self, items):
        self.items = []
        self.index = {}
        for it in items:
            it = str(it)
            if it not in self.index:
                self.index[it] = N_RESERVED + len(self.items)
                self.items.append(it)

    @classmethod
    def from_sessions(cls, sessions):
        return cls(it for s in sessions for it in s)

    def __len__(self):
        """Size including the reserved ids."""
        return N_RESERVED + len(self.items)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def encode(self, item) -> int:
        try:
            return self.index[str(item)]
        except KeyError:
            raise VocabularyError(f"unknown item {item!r}") from None

    def decode(self, idx: int) -> str:
        if not N_RESERVED <= idx < len(self):
            raise VocabularyError(f"id {idx} is not an item")
        return self.items[idx - N_RESERVED]

    def encode_session(self, session) -> list:
        return [self.encode(it) for it in session]
