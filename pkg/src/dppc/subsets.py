"""Subsets of the ground set ``{0, ..., n-1}`` and their bit-vector twins.

A subset ``A`` and the binary assignment ``x_A`` (``x_i = 1`` iff ``i in A``)
are the same object here; :class:`Subset` stores the sorted members and the
ground-set size.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class Subset:
    n: int
    members: tuple[int, ...] = ()

    def __post_init__(self):
        members = tuple(int(i) for i in self.members)
        if any(b <= a for a, b in zip(members, members[1:])):
            members = tuple(sorted(set(members)))
        for i in members:
            if not 0 <= i < self.n:
                raise DimensionError(f"index {i} out of range for ground set of size {self.n}")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_bits(cls, bits: Sequence[int] | str) -> "Subset":
        """``"101"`` or ``[1, 0, 1]`` -> ``Subset(3, (0, 2))``."""
        if isinstance(bits, str):
            if set(bits) - {"0", "1"}:
                raise DimensionError(f"not a bitstring: {bits!r}")
            bits = [int(c) for c in bits]
        return cls(len(bits), tuple(i for i, b in enumerate(bits) if b))

    @classmethod
    def from_mask(cls, n: int, mask: int) -> "Subset":
        return cls(n, tuple(i for i in range(n) if mask >> i & 1))

    @property
    def mask(self) -> int:
        return sum(1 << i for i in self.members)

    def bits(self) -> np.ndarray:
        x = np.zeros(self.n, dtype=np.int8)
        x[list(self.members)] = 1
        return x

    def bitstring(self) -> str:
        return "".join(map(str, self.bits()))

    def complement(self) -> "Subset":
        s = set(self.members)
        return Subset(self.n, tuple(i for i in range(self.n) if i not in s))

    def __iter__(self) -> Iterator[int]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, i) -> bool:
        return i in self.members


def as_members(s, n: int | None = None) -> tuple[int, ...]:
    """Normalize a Subset or an iterable of indices to a sorted tuple.

    When ``n`` is given the indices are range-checked and a Subset's ground
    set size must equal ``n``.
    """
    if isinstance(s, Subset):
        if n is not None and s.n != n:
            raise DimensionError(f"subset over {s.n} items, expected {n}")
        return s.members
    members = tuple(sorted(set(int(i) for i in s)))
    if n is not None:
        for i in members:
            if not 0 <= i < n:
                raise DimensionError(f"index {i} out of range for ground set of size {n}")
    return members


def all_subsets(n: int) -> Iterator[Subset]:
    """All 2**n subsets, in mask order (bit i <-> item i)."""
    for mask in range(1 << n):
        yield Subset.from_mask(n, mask)


def subsets_of(items: Iterable[int]) -> Iterator[tuple[int, ...]]:
    items = tuple(items)
    for k in range(len(items) + 1):
        yield from combinations(items, k)


def assignment_matrix(n: int) -> np.ndarray:
    """``(2**n, n)`` 0/1 matrix; row ``mask`` is the assignment of that mask."""
    masks = np.arange(1 << n)
    return ((masks[:, None] >> np.arange(n)) & 1).astype(np.float64)
