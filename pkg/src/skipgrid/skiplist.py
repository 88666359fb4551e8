"""Ordered integer-keyed map backed by a probabilistic skip list.

The base level is a singly linked list holding every entry in ascending
key order; each higher level links a random subset of the nodes below it,
giving expected O(log n) search and insertion. Node heights are drawn
from a seedable generator so structures are reproducible.
"""
from __future__ import annotations

import random
from typing import Any, Callable, Iterator, Optional

DEFAULT_MAX_LEVEL = 8
PROMOTION_PROBABILITY = 0.5


class OpCounter:
    """Shared counter incremented on every traversing list operation."""

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0


class Node:
    """Skip list entry: a key, its value, and one forward link per level."""

    __slots__ = ("key", "value", "forward")

    def __init__(self, key: int, value: Any, height: int) -> None:
        self.key = key
        self.value = value
        self.forward: list[Optional[Node]] = [None] * height

    def __repr__(self) -> str:  # pragma: no cover
        return f"Node({self.key!r}, {self.value!r})"


class SkipList:
    """Ordered map from signed integers to arbitrary values.

    One list has a single writer at a time; concurrent reads are safe
    only while no writer is active. Cross-list parallelism is handled by
    callers that own disjoint lists.
    """

    __slots__ = ("max_level", "level", "count", "head", "_rng", "ops")

    def __init__(
        self,
        max_level: int = DEFAULT_MAX_LEVEL,
        rng: Optional[random.Random] = None,
        ops: Optional[OpCounter] = None,
    ) -> None:
        if max_level < 1:
            raise ValueError(f"max_level must be >= 1, got {max_level}")
        self.max_level = max_level
        self.level = 1
        self.count = 0
        self.head = Node(0, None, max_level)  # sentinel; key unused
        self._rng = rng if rng is not None else random.Random()
        self.ops = ops

    def __len__(self) -> int:
        return self.count

    def __contains__(self, key: int) -> bool:
        return self.find(key) is not None

    def _random_height(self) -> int:
        # The coin-flip sequence is independent of max_level: the draw is
        # capped only afterwards, so the same seed yields pointwise
        # comparable heights across different depth settings.
        h = 1
        rnd = self._rng.random
        while rnd() < PROMOTION_PROBABILITY:
            h += 1
        return min(h, self.max_level)

    def _find_predecessors(self, key: int, update: list[Node]) -> Node:
        """Fill ``update`` with the last node before ``key`` per level."""
        node = self.head
        for i in range(self.level - 1, -1, -1):
            nxt = node.forward[i]
            while nxt is not None and nxt.key < key:
                node = nxt
                nxt = node.forward[i]
            update[i] = node
        return node

    def find(self, key: int) -> Optional[Node]:
        """Return the node holding ``key``, or None. Never mutates."""
        if self.ops is not None:
            self.ops.count += 1
        node = self.head
        for i in range(self.level - 1, -1, -1):
            nxt = node.forward[i]
            while nxt is not None and nxt.key < key:
                node = nxt
                nxt = node.forward[i]
        node = node.forward[0]
        if node is not None and node.key == key:
            return node
        return None

    def get(self, key: int, default: Any = None) -> Any:
        node = self.find(key)
        return node.value if node is not None else default

    def insert_or_get(
        self, key: int, factory: Callable[[], Any]
    ) -> tuple[Node, bool]:
        """Return (node, created) for ``key``, creating it via ``factory``.

        An existing entry is returned untouched with created=False.
        """
        if self.ops is not None:
            self.ops.count += 1
        update: list[Node] = [self.head] * self.max_level
        node = self._find_predecessors(key, update).forward[0]
        if node is not None and node.key == key:
            return node, False

        height = self._random_height()
        if height > self.level:
            self.level = height
        new = Node(key, factory(), height)
        for i in range(height):
            prev = update[i]
            new.forward[i] = prev.forward[i]
            prev.forward[i] = new
        self.count += 1
        return new, True

    def remove(self, key: int) -> bool:
        """Delete ``key``; True iff it was present. Repairs all links."""
        if self.ops is not None:
            self.ops.count += 1
        update: list[Node] = [self.head] * self.max_level
        node = self._find_predecessors(key, update).forward[0]
        if node is None or node.key != key:
            return False
        for i in range(len(node.forward)):
            if update[i].forward[i] is node:
                update[i].forward[i] = node.forward[i]
        while self.level > 1 and self.head.forward[self.level - 1] is None:
            self.level -= 1
        self.count -= 1
        return True

    def find_neighbors(
        self, key: int
    ) -> tuple[Optional[Node], Optional[Node]]:
        """Strict neighbors of ``key``: (greatest < key, least > key).

        An exact match is reported by neither side; use find() for it.
        """
        if self.ops is not None:
            self.ops.count += 1
        node = self.head
        for i in range(self.level - 1, -1, -1):
            nxt = node.forward[i]
            while nxt is not None and nxt.key < key:
                node = nxt
                nxt = node.forward[i]
        pred = node if node is not self.head else None
        succ = node.forward[0]
        if succ is not None and succ.key == key:
            succ = succ.forward[0]
        return pred, succ

    def irange(self, lo: int, hi: int) -> Iterator[Node]:
        """Yield nodes with lo <= key <= hi in ascending order."""
        if lo > hi:
            raise ValueError(f"empty range: lo={lo} > hi={hi}")
        if self.ops is not None:
            self.ops.count += 1
        node = self.head
        for i in range(self.level - 1, -1, -1):
            nxt = node.forward[i]
            while nxt is not None and nxt.key < lo:
                node = nxt
                nxt = node.forward[i]
        node = node.forward[0]
        while node is not None and node.key <= hi:
            yield node
            node = node.forward[0]

    def range_iterate(
        self, lo: int, hi: int, visitor: Callable[[Node], None]
    ) -> int:
        """Call ``visitor`` once per entry with lo <= key <= hi; return count."""
        n = 0
        for node in self.irange(lo, hi):
            visitor(node)
            n += 1
        return n

    def nodes(self) -> Iterator[Node]:
        """All nodes in ascending key order."""
        if self.ops is not None:
            self.ops.count += 1
        node = self.head.forward[0]
        while node is not None:
            yield node
            node = node.forward[0]

    def items(self) -> Iterator[tuple[int, Any]]:
        for node in self.nodes():
            yield node.key, node.value

    def keys(self) -> Iterator[int]:
        for node in self.nodes():
            yield node.key

    def first(self) -> Optional[Node]:
        return self.head.forward[0]

    def level_keys(self, i: int) -> list[int]:
        """Keys linked at level ``i`` (1-based), for structural checks."""
        if not 1 <= i <= self.max_level:
            raise ValueError(f"level {i} outside [1, {self.max_level}]")
        out = []
        node = self.head.forward[i - 1]
        while node is not None:
            out.append(node.key)
            node = node.forward[i - 1]
        return out

    def check_invariants(self) -> None:
        """Full-walk assertion of ordering, subset property, and count."""
        base = self.level_keys(1)
        assert base == sorted(set(base)), "level-1 chain not strictly ascending"
        assert len(base) == self.count, (
            f"count {self.count} != level-1 length {len(base)}"
        )
        prev = set(base)
        for i in range(2, self.level + 1):
            cur = set(self.level_keys(i))
            assert cur <= prev, f"level {i} is not a subset of level {i - 1}"
            prev = cur
        for i in range(self.level + 1, self.max_level + 1):
            assert self.head.forward[i - 1] is None, (
                f"links above current level {self.level}"
            )
