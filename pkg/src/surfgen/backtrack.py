"""The table of backtrack points: substring reuse across solutions.

A backtrack point is recorded wherever a conflict set held more than one
rule.  Its *ego* collects one preterminal sequence per rule that succeeded
there; the *pre-context* (known at recording time, thanks to left-to-right
processing) and the *post-context* (filled once the first full solution
exists) hold the surrounding material, with nested points appearing
symbolically.  Producing another solution never re-derives the contexts:
a new ego is generated from the point's stored input and combined with
everything already in the table, so the solution set reads off as

    pre-context . {ego variants} . post-context

expanded through nested points, all combinations.  Partial results are
additionally memoized by (category, input) and spliced instead of being
re-derived when they recur.

Every ego variant carries the constraint obligations its rules asserted.
A combination is realized only if the union of its obligations is
consistent; inflection calls are resolved against that union, so agreement
features flipped by a new ego re-inflect material outside it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

from .engine import ChoiceRef, DerivationNode, Slot, _atom_eq, flatten_frontier
from .gil import FeatureStructure, fs_digest, fs_equal
from .tgl import Rule


@dataclass(eq=False)
class Variant:
    """One successful ego alternative: the rule that fired and its subtree.

    Compared by identity: a variant also serves as the ownership tag for
    the feature bindings asserted while it was being built.
    """

    rule_name: str
    node: Optional[DerivationNode]

    def frontier(self) -> tuple:
        return flatten_frontier([self.node])

    def __repr__(self) -> str:
        return f"Variant({self.rule_name!r})"


class BacktrackPoint:
    """A recorded conflict set with its surrounding context."""

    __slots__ = ("id", "category", "input", "node_id", "parent",
                 "conflict_rules", "remainder", "consumed", "variants",
                 "pre_context", "post_local", "committed")

    def __init__(self, id: int, category: str, input: FeatureStructure,
                 node_id: int, rules: list[Rule],
                 parent: Optional[tuple["BacktrackPoint", int]],
                 pre_context: tuple):
        self.id = id
        self.category = category
        self.input = input
        self.node_id = node_id
        self.parent = parent
        self.conflict_rules = tuple(rules)
        self.remainder: list[Rule] = list(rules)
        self.consumed: list[str] = []
        self.variants: list[Variant] = []
        self.pre_context = pre_context
        self.post_local: Optional[tuple] = None
        self.committed = False

    @property
    def all_rules(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.conflict_rules)

    @property
    def exhausted(self) -> bool:
        return not self.remainder

    @property
    def post_context(self) -> Optional[tuple]:
        """Material to the right, through enclosing points; None while open."""
        if self.post_local is None:
            return None
        if self.parent is None:
            return self.post_local
        outer = self.parent[0].post_context
        if outer is None:
            return None
        return self.post_local + outer

    def ego_frontiers(self) -> list[tuple]:
        return [v.frontier() for v in self.variants]

    def __repr__(self) -> str:
        return (f"<B{self.id} {self.category} variants={len(self.variants)} "
                f"remainder={len(self.remainder)}>")


class BTTable:
    """All backtrack points of one generation session, in creation order."""

    def __init__(self):
        self.points: dict[int, BacktrackPoint] = {}
        self._next_id = 1

    def record(self, category: str, input: FeatureStructure, node_id: int,
               rules: list[Rule], parent, pre_context: tuple) -> BacktrackPoint:
        point = BacktrackPoint(self._next_id, category, input, node_id,
                               rules, parent, pre_context)
        self._next_id += 1
        self.points[point.id] = point
        return point

    def remove(self, point: BacktrackPoint) -> None:
        self.points.pop(point.id, None)

    def open_points(self) -> list[BacktrackPoint]:
        """Unexhausted points, most recently created first."""
        return [p for p in reversed(self.points.values())
                if not p.exhausted]

    def __iter__(self) -> Iterator[BacktrackPoint]:
        return iter(self.points.values())

    def __len__(self) -> int:
        return len(self.points)


def fill_post_contexts(items) -> tuple:
    """Fill post-contexts of points found in this (now complete) layer.

    Walks one container subtree: nested nodes are flattened, choice points
    stay symbolic and receive the frontier to their right as their local
    post-context.  Points inside ego variants are handled when their own
    variant completes.
    """
    segs: list = []
    refs: list[tuple[BacktrackPoint, int]] = []

    def walk(items) -> None:
        for item in items:
            if isinstance(item, DerivationNode):
                walk(item.children)
            elif isinstance(item, ChoiceRef):
                refs.append((item.point, len(segs)))
                segs.append(item)
            else:
                segs.append(item)

    walk(items)
    for point, idx in refs:
        if point.post_local is None:
            point.post_local = tuple(segs[idx + 1:])
    return tuple(segs)


# ---------------------------------------------------------------------------
# Memo cache for successfully generated partial results

class MemoCache:
    """(category, input) -> first generated result for that pair.

    A hit is only valid when the stored category equals the current one and
    the input structures are equal; the stored subtree is then spliced
    (copied with fresh feature nodes and re-recorded choice points) instead
    of being re-derived.
    """

    def __init__(self):
        self._entries: dict[tuple[str, int], list[tuple[FeatureStructure, object]]] = {}

    def lookup(self, category: str, fs: FeatureStructure):
        bucket = self._entries.get((category, fs_digest(fs)), ())
        for stored_fs, item in bucket:
            if fs_equal(stored_fs, fs):
                return item
        return None

    def store(self, category: str, fs: FeatureStructure, item) -> None:
        key = (category, fs_digest(fs))
        bucket = self._entries.setdefault(key, [])
        for stored_fs, _ in bucket:
            if fs_equal(stored_fs, fs):
                return
        bucket.append((fs, item))

    def flush(self) -> None:
        self._entries.clear()

    def __len__(self) -> int:
        return sum(len(b) for b in self._entries.values())


# ---------------------------------------------------------------------------
# Combinations: enumerating assignments over the table

def layer_points(items) -> list[BacktrackPoint]:
    """Choice points of one container layer, document order, not descending
    into ego variants."""
    out: list[BacktrackPoint] = []

    def walk(items) -> None:
        for item in items:
            if isinstance(item, ChoiceRef):
                out.append(item.point)
            elif isinstance(item, DerivationNode):
                walk(item.children)

    walk(items)
    return out


def iter_assignments(items, fixed: dict[int, int]) -> Iterator[dict[int, int]]:
    """All choice assignments for the subtree, leftmost point slowest.

    ``fixed`` pins given point ids to a variant index; every other
    reachable point ranges over its current variants.  A reachable point
    without variants yields no assignments at all.
    """
    points = layer_points(items)

    def rec(idx: int, acc: dict[int, int]) -> Iterator[dict[int, int]]:
        if idx == len(points):
            yield dict(acc)
            return
        point = points[idx]
        if point.id in fixed:
            choices: tuple = (fixed[point.id],)
            if not point.variants or fixed[point.id] >= len(point.variants):
                return
        else:
            choices = tuple(range(len(point.variants)))
        for k in choices:
            acc[point.id] = k
            inner = point.variants[k].node.children
            for sub in iter_assignments(inner, fixed):
                acc.update(sub)
                yield from rec(idx + 1, acc)
        acc.pop(point.id, None)

    yield from rec(0, {})


def resolve_items(items, assignment: dict[int, int]) -> Iterator:
    """Depth-first walk of one combination: yields (kind, payload) events.

    Events come in document order: ("node", DerivationNode) on entering a
    fired rule and ("leaf", preterminal) for frontier material.
    """
    for item in items:
        if isinstance(item, DerivationNode):
            yield ("node", item)
            yield from resolve_items(item.children, assignment)
        elif isinstance(item, ChoiceRef):
            k = assignment[item.point.id]
            yield from resolve_items([item.point.variants[k].node], assignment)
        else:
            yield ("leaf", item)


class ComboGraph:
    """Throwaway union-find used to check and realize one combination."""

    def __init__(self):
        self.parent: dict[Slot, Slot] = {}
        self.binding: dict[Slot, object] = {}

    def find(self, slot: Slot) -> Slot:
        while slot in self.parent:
            slot = self.parent[slot]
        return slot

    def assert_obligation(self, ob: tuple) -> bool:
        if ob[0] == "assign":
            _, slot, atom = ob
            root = self.find(slot)
            current = self.binding.get(root)
            if current is None:
                self.binding[root] = atom
                return True
            return _atom_eq(current, atom)
        _, slots = ob
        first = self.find(slots[0])
        for other in slots[1:]:
            other = self.find(other)
            if other == first:
                continue
            b1, b2 = self.binding.get(first), self.binding.get(other)
            if b1 is not None and b2 is not None and not _atom_eq(b1, b2):
                return False
            self.parent[other] = first
            if b2 is not None and b1 is None:
                self.binding[first] = b2
            self.binding.pop(other, None)
        return True

    def value(self, slot: Slot):
        return self.binding.get(self.find(slot))


def combination_state(items, assignment: dict[int, int]):
    """Assert all obligations of one combination; None when inconsistent."""
    graph = ComboGraph()
    for kind, payload in resolve_items(items, assignment):
        if kind == "node":
            for ob in payload.obligations:
                if not graph.assert_obligation(ob):
                    return None
    return graph


def combination_frontier(items, assignment: dict[int, int]) -> list:
    return [payload for kind, payload in resolve_items(items, assignment)
            if kind == "leaf"]
