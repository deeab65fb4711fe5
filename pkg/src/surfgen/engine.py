"""Interpreter primitives: feature graph, trail, and derivation trees.

Generation fires rules top-down, depth-first, actions left to right.  Every
fired rule owns a feature node; constraint equations bind values on those
nodes (``Assign``) or merge them into shared agreement classes (``Equate``),
PATR style.  All mutations go through the trail so a failed rule can be
undone completely.

The frontier of a derivation consists of preterminals: literal tokens and
deferred inflection calls.  Inflection calls are turned into strings only at
output time, against the feature values of the combination being realized,
so a backtracked choice that flips an agreement feature re-realizes exactly
the word forms it touches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .gil import Atom, FeatureStructure, Sym
from .morpho import FunctionRegistry, InflectionRequest, inflect
from .tgl import Assign, Equate, Grammar, Lhs, Registries, Rule, eval_test


class EngineError(Exception):
    pass


#: Owner tag for feature bindings asserted outside any alternative.
ROOT_OWNER = "root"

Slot = tuple  # (node_id, FEATURE)


class ConstraintClash(Exception):
    """A feature class would receive two different atoms.

    ``owners`` names who asserted the existing binding(s); the caller uses
    this to tell pruning failures (conflict with material present in every
    solution through this point) from combination-dependent ones.
    """

    def __init__(self, slot: Slot, existing: Atom, incoming: Atom, owners: tuple):
        super().__init__(
            f"feature {slot[1]} already {existing!r}, cannot become {incoming!r}"
        )
        self.slot = slot
        self.existing = existing
        self.incoming = incoming
        self.owners = owners


class Trail:
    """Reversible log of every state change made while firing rules."""

    def __init__(self):
        self.events: list[tuple] = []

    def mark(self) -> int:
        return len(self.events)

    def push(self, event: tuple) -> None:
        self.events.append(event)

    def __len__(self) -> int:
        return len(self.events)

    def undo_to(self, mark: int) -> None:
        if mark < 0 or mark > len(self.events):
            raise EngineError(f"unknown trail mark {mark}")
        while len(self.events) > mark:
            event = self.events.pop()
            kind = event[0]
            if kind == "bind":
                _, graph, root = event
                del graph.binding[root]
                del graph.owner[root]
            elif kind == "union":
                _, graph, child, parent, child_binding, parent_was_bound = event
                del graph.parent[child]
                graph.size[parent] -= graph.size.get(child, 1)
                if child_binding is not None:
                    graph.binding[child], graph.owner[child] = child_binding
                    if not parent_was_bound:
                        del graph.binding[parent]
                        del graph.owner[parent]
            elif kind == "effect":
                _, undo, memory, args, saved = event
                undo(memory, args, saved)
            elif kind == "btpoint":
                _, table, point = event
                if not point.committed:
                    table.remove(point)
            else:  # pragma: no cover
                raise EngineError(f"unknown trail event {kind}")


class FeatureGraph:
    """Union-find over (node, feature) slots with at most one atom per class."""

    def __init__(self, trail: Trail):
        self.trail = trail
        self.parent: dict[Slot, Slot] = {}
        self.size: dict[Slot, int] = {}
        self.binding: dict[Slot, Atom] = {}
        self.owner: dict[Slot, object] = {}

    def find(self, slot: Slot) -> Slot:
        # no path compression: keeps undo trivial
        while slot in self.parent:
            slot = self.parent[slot]
        return slot

    def value(self, slot: Slot) -> Optional[Atom]:
        return self.binding.get(self.find(slot))

    def same_class(self, a: Slot, b: Slot) -> bool:
        return self.find(a) == self.find(b)

    def bind(self, slot: Slot, atom: Atom, owner: object = ROOT_OWNER) -> None:
        root = self.find(slot)
        current = self.binding.get(root)
        if current is None:
            self.binding[root] = atom
            self.owner[root] = owner
            self.trail.push(("bind", self, root))
        elif not _atom_eq(current, atom):
            raise ConstraintClash(slot, current, atom, (self.owner[root],))

    def equate(self, slots, owner: object = ROOT_OWNER) -> None:
        first = slots[0]
        for other in slots[1:]:
            self._union(first, other)

    def _union(self, a: Slot, b: Slot) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size.get(ra, 1) > self.size.get(rb, 1):
            ra, rb = rb, ra
        bind_a, bind_b = self.binding.get(ra), self.binding.get(rb)
        if bind_a is not None and bind_b is not None and not _atom_eq(bind_a, bind_b):
            raise ConstraintClash(a, bind_b, bind_a,
                                  (self.owner[ra], self.owner[rb]))
        child_binding = None
        parent_was_bound = bind_b is not None
        if bind_a is not None:
            child_binding = (bind_a, self.owner[ra])
            del self.binding[ra]
            old_owner = self.owner.pop(ra)
            if not parent_was_bound:
                self.binding[rb] = bind_a
                self.owner[rb] = old_owner
        self.parent[ra] = rb
        self.size[rb] = self.size.get(rb, 1) + self.size.get(ra, 1)
        self.trail.push(("union", self, ra, rb, child_binding, parent_was_bound))

    def is_empty(self) -> bool:
        return not self.parent and not self.binding


def _atom_eq(a: Atom, b: Atom) -> bool:
    if isinstance(a, Sym) and isinstance(b, Sym):
        return a == b
    return type(a) is type(b) and a == b


# ---------------------------------------------------------------------------
# Frontier elements

@dataclass(frozen=True)
class LiteralTok:
    text: str


class InflectCall:
    """A deferred word form: function name, arguments, feature hooks.

    ``hooks`` are (feature, node) pairs read at realization time.  Realized
    strings are cached per observed feature values, so re-realization
    happens exactly when a hooked value changed.
    """

    __slots__ = ("function", "args", "hooks", "_cache")

    def __init__(self, function: str, args: tuple, hooks: tuple):
        self.function = function
        self.args = args
        self.hooks = hooks
        self._cache: dict[tuple, str] = {}

    def realize(self, values: Callable[[Slot], Optional[Atom]],
                registry: FunctionRegistry, stats: Optional["Stats"] = None) -> str:
        bound = tuple(
            (feature, v)
            for feature, node in self.hooks
            if (v := values((node, feature))) is not None
        )
        cached = self._cache.get(bound)
        if cached is not None:
            return cached
        text = inflect(InflectionRequest(self.function, self.args, bound), registry)
        if stats is not None:
            stats.morpho_calls += 1
            if self._cache:
                stats.re_realizations += 1
        self._cache[bound] = text
        return text

    def copy(self, node_map: dict[int, int]) -> "InflectCall":
        hooks = tuple((f, node_map.get(n, n)) for f, n in self.hooks)
        return InflectCall(self.function, self.args, hooks)

    def __repr__(self) -> str:
        return f"InflectCall({self.function}, {self.args})"


@dataclass(frozen=True)
class ChoiceRef:
    """Placeholder in a frontier for a recorded backtrack point."""

    point: object

    def __repr__(self) -> str:
        return f"ChoiceRef(B{self.point.id})"


class DerivationNode:
    """One fired rule: its category, covered input, feature node, children.

    Children appear in template order and are preterminals, nested nodes,
    or choice placeholders.  ``obligations`` records the rule's constraint
    actions with constituent references resolved to feature-node slots.
    """

    __slots__ = ("category", "rule_name", "input", "node_id", "children",
                 "obligations", "bt_point")

    def __init__(self, category: str, rule_name: str, input: FeatureStructure,
                 node_id: int):
        self.category = category
        self.rule_name = rule_name
        self.input = input
        self.node_id = node_id
        self.children: list = []
        self.obligations: list[tuple] = []
        self.bt_point: Optional[int] = None

    def __repr__(self) -> str:
        return f"<{self.category} {self.rule_name!r}>"


# ---------------------------------------------------------------------------
# Matching and constraint application

def match(category: str, fs: FeatureStructure, grammar: Grammar,
          registries: Optional[Registries] = None) -> list[Rule]:
    """All rules of the category whose test holds, in grammar source order."""
    predicates = registries.predicates if registries else None
    return [rule for rule in grammar.rules_for(category)
            if eval_test(rule.test, fs, predicates)]


def resolve_ref(ref, lhs_node: int, rule: Rule,
                position_nodes: dict[int, int]) -> int:
    if isinstance(ref, Lhs):
        return lhs_node
    positions = rule.constituent_positions()
    index = positions.get((ref.category, ref.occurrence))
    if index is None or index not in position_nodes:
        raise EngineError(f"rule {rule.name!r}: constraint names {ref} "
                          f"but the template has no such constituent")
    return position_nodes[index]


def apply_constraints(rule: Rule, lhs_node: int, position_nodes: dict[int, int],
                      graph: FeatureGraph, owner: object = ROOT_OWNER) -> list[tuple]:
    """Assert the rule's equations; returns them in slot-resolved form.

    Raises ConstraintClash when a class would be overwritten with a
    different atom; the caller treats that as failure of the rule.
    """
    obligations: list[tuple] = []
    for eq in rule.constraints:
        if isinstance(eq, Assign):
            node = resolve_ref(eq.at, lhs_node, rule, position_nodes)
            slot = (node, eq.feature)
            graph.bind(slot, eq.value, owner)
            obligations.append(("assign", slot, eq.value))
        elif isinstance(eq, Equate):
            slots = tuple(
                (resolve_ref(ref, lhs_node, rule, position_nodes), eq.feature)
                for ref in eq.at
            )
            graph.equate(slots, owner)
            obligations.append(("equate", slots))
        else:  # pragma: no cover
            raise EngineError(f"unknown equation {eq!r}")
    return obligations


# ---------------------------------------------------------------------------
# Realization

def join_tokens(tokens) -> str:
    """Single spaces between tokens; tab/newline boundaries suppress them."""
    out: list[str] = []
    for tok in tokens:
        if not tok:
            continue
        if out and not out[-1].endswith(("\t", "\n")) \
                and not tok.startswith(("\t", "\n")):
            out.append(" ")
        out.append(tok)
    return "".join(out)


def realize(frontier, registry: FunctionRegistry,
            values: Callable[[Slot], Optional[Atom]] = lambda slot: None,
            stats: Optional["Stats"] = None) -> str:
    """Turn a complete frontier of preterminals into its surface string."""
    tokens = []
    for item in frontier:
        if isinstance(item, LiteralTok):
            tokens.append(item.text)
        elif isinstance(item, InflectCall):
            tokens.append(item.realize(values, registry, stats))
        else:
            raise EngineError(f"frontier holds a non-preterminal: {item!r}")
    return join_tokens(tokens)


def flatten_frontier(items) -> tuple:
    """In-order frontier of an item sequence; choice points stay symbolic."""
    out: list = []
    _flatten_into(items, out)
    return tuple(out)


def _flatten_into(items, out: list) -> None:
    for item in items:
        if isinstance(item, DerivationNode):
            _flatten_into(item.children, out)
        else:
            out.append(item)


# ---------------------------------------------------------------------------
# Statistics and tracing

@dataclass
class Stats:
    rules_fired: int = 0
    rules_succeeded: int = 0
    memo_hits: int = 0
    memo_stores: int = 0
    morpho_calls: int = 0
    re_realizations: int = 0
    bt_points_created: int = 0
    bt_expansions: int = 0
    solutions_emitted: int = 0
    combinations_filtered: int = 0
    constraint_clashes: int = 0
    side_effects_run: int = 0
    fired_by_rule: dict = field(default_factory=dict)

    def count_fire(self, rule_name: str) -> None:
        self.rules_fired += 1
        self.fired_by_rule[rule_name] = self.fired_by_rule.get(rule_name, 0) + 1

    def snapshot(self) -> dict:
        return {
            "solutions": self.solutions_emitted,
            "rules-fired": self.rules_fired,
            "rules-succeeded": self.rules_succeeded,
            "memo-hits": self.memo_hits,
            "memo-stores": self.memo_stores,
            "morpho-calls": self.morpho_calls,
            "re-realizations": self.re_realizations,
            "bt-points-created": self.bt_points_created,
            "bt-expansions": self.bt_expansions,
            "combinations-filtered": self.combinations_filtered,
            "constraint-clashes": self.constraint_clashes,
            "side-effects-run": self.side_effects_run,
        }


@dataclass(frozen=True)
class TraceEvent:
    kind: str  # rule-firing | rule-fired | rule-failed | bt-created | ...
    category: str = ""
    rule: str = ""
    detail: str = ""
    depth: int = 0

    def __str__(self) -> str:
        pad = "  " * self.depth
        bits = [b for b in (self.category, repr(self.rule) if self.rule else "",
                            self.detail) if b]
        return f"{pad}{self.kind:<12} " + " ".join(bits)
