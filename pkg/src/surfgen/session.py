"""One generation run: first solution depth-first, then table-driven variants.

The session owns all mutable state (trail, feature graph, backtrack table,
memo cache, side-effect memory).  ``solutions()`` is a lazy stream: the
first solution is derived top-down depth-first; every further solution is
produced on demand by picking an unexhausted backtrack point, firing its
next rule against the stored input substructure, and combining the new ego
with the already-known contexts.  Only the new ego's subtree fires rules;
everything else is reused, modulo word forms whose agreement features
changed.

A rule whose constraints clash with material that is *not* part of every
solution through its position (a closed sibling alternative) is not
discarded: it stays in its conflict set's remainder and is retried during
expansion, where only the always-present context is in force.  Whether any
given combination of alternatives is consistent is decided per emitted
solution, against the union of the combination's constraint obligations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional

from .backtrack import (
    BacktrackPoint,
    BTTable,
    MemoCache,
    Variant,
    combination_frontier,
    combination_state,
    fill_post_contexts,
    iter_assignments,
    layer_points,
)
from .engine import (
    ROOT_OWNER,
    ChoiceRef,
    ConstraintClash,
    DerivationNode,
    EngineError,
    FeatureGraph,
    InflectCall,
    LiteralTok,
    Stats,
    TraceEvent,
    Trail,
    apply_constraints,
    flatten_frontier,
    match,
    realize,
)
from .gil import FeatureStructure, is_atom
from .tgl import FunCall, Grammar, Literal, Registries, Rule, RuleCall, eval_selector


@dataclass(frozen=True)
class ResolvedNode:
    """Derivation tree of one emitted solution, choices resolved."""

    rule_name: str
    category: str
    children: tuple  # ResolvedNode | LiteralTok | InflectCall

    def rule_names(self) -> Iterator[str]:
        yield self.rule_name
        for child in self.children:
            if isinstance(child, ResolvedNode):
                yield from child.rule_names()


@dataclass(frozen=True)
class Solution:
    text: str
    weight: Fraction
    derivation: ResolvedNode
    assignment: dict


class DefaultStrategy:
    """No criteria: source order, most recently created point first."""

    def order_conflict_set(self, rules: list[Rule]) -> list[Rule]:
        return list(rules)

    def choose_point(self, open_points: list[BacktrackPoint]):
        return open_points[0] if open_points else None

    def weight(self, derivation: ResolvedNode) -> Fraction:
        return Fraction(0)


class GenerationSession:
    """Single-use generator state for one grammar and one input."""

    def __init__(self, grammar: Grammar, registries: Optional[Registries] = None,
                 *, strategy=None, use_memo: bool = True, trace=None,
                 max_depth: int = 64):
        self.grammar = grammar
        self.registries = registries or Registries.standard()
        self.strategy = strategy or DefaultStrategy()
        self.trace = trace
        self.max_depth = max_depth
        self.trail = Trail()
        self.graph = FeatureGraph(self.trail)
        self.table = BTTable()
        self.memo: Optional[MemoCache] = MemoCache() if use_memo else None
        self.memory: dict = {}
        self.stats = Stats()
        self._node_ids = itertools.count(1)
        self._root_items: list = []
        self._frames: list[list] = []
        self._pre_prefix: tuple = ()
        self._owner_stack: list = []
        self._variant_stack: list = []
        self._chain_owners: set = set()
        self._depth = 0
        self._last_retryable = False
        self._fail_reason = ""
        self._started = False

    # -- public API ---------------------------------------------------------

    def solutions(self, input_fs: FeatureStructure,
                  start: Optional[str] = None) -> Iterator[Solution]:
        """Lazy best-first stream of all solutions, cheapest variants first."""
        if self._started:
            raise EngineError("a GenerationSession runs exactly once")
        self._started = True
        start_cat = (start or self.grammar.start).upper()
        base = self.trail.mark()
        self._frames = [self._root_items]
        try:
            ok = self._generate(start_cat, input_fs, self._new_node())
            if not ok:
                self.trail.undo_to(base)
                return
            self._capture(self._root_items)
            self.trail.undo_to(base)
            yield from self._emit({})
            while True:
                point = self.strategy.choose_point(self.table.open_points())
                if point is None:
                    break
                k = self._expand(point)
                if k is None:
                    continue
                fixed = {point.id: k}
                parent = point.parent
                while parent is not None:
                    fixed[parent[0].id] = parent[1]
                    parent = parent[0].parent
                yield from self._emit(fixed)
        finally:
            self.trail.undo_to(base)

    def first(self, input_fs: FeatureStructure,
              start: Optional[str] = None) -> Optional[Solution]:
        return next(self.solutions(input_fs, start), None)

    # -- construction -------------------------------------------------------

    def _new_node(self) -> int:
        return next(self._node_ids)

    def _trace(self, kind: str, category: str = "", rule: str = "",
               detail: str = "") -> None:
        if self.trace is not None:
            self.trace(TraceEvent(kind, category, rule, detail, self._depth))

    @property
    def _current_owner(self):
        return self._owner_stack[-1] if self._owner_stack else ROOT_OWNER

    @property
    def _current_parent(self):
        return self._variant_stack[-1] if self._variant_stack else None

    def _is_permanent(self, owner) -> bool:
        return (owner is ROOT_OWNER or owner in self._chain_owners
                or any(owner is v for v in self._owner_stack))

    def _pre_context(self) -> tuple:
        parts = [self._pre_prefix]
        parts.extend(flatten_frontier(frame) for frame in self._frames)
        return tuple(itertools.chain.from_iterable(parts))

    def _generate(self, category: str, fs: FeatureStructure, node_id: int) -> bool:
        """Derive one category over fs into the current frame."""
        if self._depth > self.max_depth:
            self._last_retryable = False
            return False
        sink = self._frames[-1]
        mark = self.trail.mark()
        effects_before = self.stats.side_effects_run
        if self.memo is not None:
            stored = self.memo.lookup(category, fs)
            if stored is not None and self._splice(stored, node_id):
                self.stats.memo_hits += 1
                self._trace("memo-hit", category)
                return True
        conflict_set = match(category, fs, self.grammar, self.registries)
        conflict_set = self.strategy.order_conflict_set(conflict_set)
        if not conflict_set:
            self._last_retryable = False
            return False
        if len(conflict_set) == 1:
            rule = conflict_set[0]
            node = self._fire(rule, fs, node_id)
            if node is not None:
                sink.append(node)
                self._memo_store(category, fs, node, effects_before)
                return True
            if self._last_retryable:
                # keep the rule for a retry under the always-present context
                point = self._record_point(category, fs, node_id, conflict_set)
                sink.append(ChoiceRef(point))
                return True
            return False
        point = self._record_point(category, fs, node_id, conflict_set)
        i = 0
        while i < len(point.remainder):
            rule = point.remainder[i]
            variant = self._try_variant(point, rule)
            if variant is not None:
                point.remainder.pop(i)
                point.variants.append(variant)
                ref = ChoiceRef(point)
                sink.append(ref)
                self._memo_store(category, fs, ref, effects_before)
                return True
            if self._last_retryable:
                i += 1
            else:
                point.remainder.pop(i)
                point.consumed.append(rule.name)
        if point.remainder:
            # nothing derivable right here, but alternatives stay open
            sink.append(ChoiceRef(point))
            return True
        self.trail.undo_to(mark)
        self._last_retryable = False
        return False

    def _record_point(self, category, fs, node_id, rules) -> BacktrackPoint:
        point = self.table.record(category, fs, node_id, list(rules),
                                  self._current_parent, self._pre_context())
        self.trail.push(("btpoint", self.table, point))
        self.stats.bt_points_created += 1
        self._trace("bt-created", category,
                    detail=f"B{point.id} conflict={len(rules)}")
        return point

    def _try_variant(self, point: BacktrackPoint, rule: Rule) -> Optional[Variant]:
        variant = Variant(rule.name, None)
        self._owner_stack.append(variant)
        self._variant_stack.append((point, len(point.variants)))
        try:
            node = self._fire(rule, point.input, point.node_id)
        finally:
            self._variant_stack.pop()
            self._owner_stack.pop()
        if node is None:
            return None
        node.bt_point = point.id
        variant.node = node
        return variant

    def _fire(self, rule: Rule, fs: FeatureStructure,
              lhs_node: int) -> Optional[DerivationNode]:
        self._last_retryable = False
        self.stats.count_fire(rule.name)
        self._trace("rule-firing", rule.category, rule.name)
        mark = self.trail.mark()
        node = DerivationNode(rule.category, rule.name, fs, lhs_node)
        self._frames.append(node.children)
        self._depth += 1
        try:
            ok = self._fire_body(rule, fs, node)
        finally:
            self._depth -= 1
            self._frames.pop()
        if ok:
            self.stats.rules_succeeded += 1
            self._trace("rule-fired", rule.category, rule.name)
            return node
        self.trail.undo_to(mark)
        self._trace("rule-failed", rule.category, rule.name, self._fail_reason)
        return None

    def _fire_body(self, rule: Rule, fs: FeatureStructure,
                   node: DerivationNode) -> bool:
        retryable = False
        self._fail_reason = ""
        for call in rule.side_effects:
            entry = self.registries.functions.require(call.name)
            if not entry.is_side_effect:
                raise EngineError(f"{call.name!r} lacks an undo callback and "
                                  f"cannot run as a side effect")
            args = tuple(self._effect_arg(a, fs) for a in call.args)
            saved = entry.fn(self.memory, args)
            self.trail.push(("effect", entry.undo, self.memory, args, saved))
            self.stats.side_effects_run += 1
            if self.memo is not None:
                self.memo.flush()
        position_nodes = {
            i: self._new_node()
            for i, action in enumerate(rule.template)
            if isinstance(action, RuleCall)
        }
        try:
            node.obligations = apply_constraints(rule, node.node_id,
                                                 position_nodes, self.graph,
                                                 self._current_owner)
        except ConstraintClash as clash:
            self.stats.constraint_clashes += 1
            retryable = any(not self._is_permanent(o) for o in clash.owners)
            self._fail_reason = str(clash)
            self._last_retryable = retryable
            return False
        sink = self._frames[-1]
        for i, action in enumerate(rule.template):
            if isinstance(action, Literal):
                sink.append(LiteralTok(action.text))
            elif isinstance(action, FunCall):
                segment = self._make_inflect(action, fs, node.node_id)
                if segment is None:
                    self._fail_reason = f"argument of {action.name!r} is absent"
                    self._last_retryable = False
                    return False
                sink.append(segment)
            else:
                sub = eval_selector(action.selector, fs, self.registries.selectors)
                if not isinstance(sub, FeatureStructure):
                    if action.optional:
                        continue
                    self._fail_reason = f"selector for {action.category} is absent"
                    self._last_retryable = False
                    return False
                if not self._generate(action.category, sub, position_nodes[i]):
                    if action.optional:
                        continue
                    self._fail_reason = f"no {action.category} derivation"
                    self._last_retryable = False
                    return False
        self._last_retryable = False
        return True

    def _make_inflect(self, call: FunCall, fs: FeatureStructure,
                      lhs_node: int) -> Optional[InflectCall]:
        entry = self.registries.functions.require(call.name)
        if entry.is_side_effect:
            raise EngineError(f"side effect {call.name!r} in a template slot")
        args = []
        for arg in call.args:
            value = arg if is_atom(arg) else \
                eval_selector(arg, fs, self.registries.selectors)
            if value is None or not is_atom(value):
                return None
            args.append(value)
        hooks = tuple((feature, lhs_node) for feature in entry.features)
        return InflectCall(entry.name, tuple(args), hooks)

    def _effect_arg(self, arg, fs: FeatureStructure):
        return arg if is_atom(arg) else \
            eval_selector(arg, fs, self.registries.selectors)

    def _memo_store(self, category: str, fs: FeatureStructure, item,
                    effects_before: int) -> None:
        # results whose subtree ran side effects cannot be spliced: the
        # effects would not run again at the new position
        if self.memo is not None \
                and effects_before == self.stats.side_effects_run:
            self.memo.store(category, fs, item)
            self.stats.memo_stores += 1

    # -- memo splicing ------------------------------------------------------

    def _splice(self, stored, node_id: int) -> bool:
        """Copy a memoized result here: fresh nodes, re-recorded choices."""
        mark = self.trail.mark()
        root_node = stored.node_id if isinstance(stored, DerivationNode) \
            else stored.point.node_id
        node_map = {root_node: node_id}
        try:
            copied = self._copy_item(stored, node_map, replay=True)
        except ConstraintClash:
            self.stats.constraint_clashes += 1
            self.trail.undo_to(mark)
            return False
        self._frames[-1].append(copied)
        return True

    def _copy_item(self, item, node_map: dict[int, int], replay: bool):
        if isinstance(item, LiteralTok):
            return item
        if isinstance(item, InflectCall):
            return item.copy(node_map)
        if isinstance(item, DerivationNode):
            return self._copy_node(item, node_map, replay)
        if isinstance(item, ChoiceRef):
            return ChoiceRef(self._copy_point(item.point, node_map, replay))
        raise EngineError(f"cannot copy {item!r}")

    def _copy_node(self, node: DerivationNode, node_map, replay: bool):
        def mapped(n: int) -> int:
            if n not in node_map:
                node_map[n] = self._new_node()
            return node_map[n]

        new = DerivationNode(node.category, node.rule_name, node.input,
                             mapped(node.node_id))
        for ob in node.obligations:
            if ob[0] == "assign":
                _, slot, atom = ob
                new_ob = ("assign", (mapped(slot[0]), slot[1]), atom)
            else:
                _, slots = ob
                new_ob = ("equate", tuple((mapped(s[0]), s[1]) for s in slots))
            new.obligations.append(new_ob)
            if replay:
                self._assert_obligation(new_ob, self._current_owner)
        self._frames.append(new.children)
        try:
            for child in node.children:
                new.children.append(self._copy_item(child, node_map, replay))
        finally:
            self._frames.pop()
        return new

    def _copy_point(self, old: BacktrackPoint, node_map, replay: bool):
        def mapped(n: int) -> int:
            if n not in node_map:
                node_map[n] = self._new_node()
            return node_map[n]

        # rules the original consumed were pruned against the obligations of
        # *its* position; at the new position they are merely untried
        succeeded = {v.rule_name for v in old.variants}
        untried = [r for r in old.conflict_rules if r.name not in succeeded]
        point = self.table.record(old.category, old.input, mapped(old.node_id),
                                  untried, self._current_parent,
                                  self._pre_context())
        point.conflict_rules = old.conflict_rules
        self.trail.push(("btpoint", self.table, point))
        self.stats.bt_points_created += 1
        for index, variant in enumerate(old.variants):
            new_variant = Variant(variant.rule_name, None)
            self._owner_stack.append(new_variant)
            self._variant_stack.append((point, index))
            try:
                copied = self._copy_node(variant.node, node_map,
                                         replay and index == 0)
            finally:
                self._variant_stack.pop()
                self._owner_stack.pop()
            copied.bt_point = point.id
            new_variant.node = copied
            point.variants.append(new_variant)
        return point

    def _assert_obligation(self, ob: tuple, owner) -> None:
        if ob[0] == "assign":
            _, slot, atom = ob
            self.graph.bind(slot, atom, owner)
        else:
            self.graph.equate(ob[1], owner)

    # -- expansion ----------------------------------------------------------

    def _expand(self, point: BacktrackPoint) -> Optional[int]:
        """Fire the point's next rule against its stored input.

        Returns the new ego variant's index, or None when the rule failed
        and was consumed.  Only rules inside the new ego subtree fire.
        """
        if not point.remainder:
            return None
        rule = point.remainder[0]
        self.stats.bt_expansions += 1
        self._trace("expand", point.category, rule.name, f"B{point.id}")
        mark = self.trail.mark()
        saved_frames, saved_prefix = self._frames, self._pre_prefix
        self._frames = [[]]
        self._pre_prefix = point.pre_context
        chain: list[Variant] = []
        parent = point.parent
        while parent is not None:
            chain.append(parent[0].variants[parent[1]])
            parent = parent[0].parent
        self._chain_owners = set(chain)
        try:
            self._replay_chain(point)
            variant = self._try_variant(point, rule)
        finally:
            self._frames, self._pre_prefix = saved_frames, saved_prefix
            self._chain_owners = set()
        point.remainder.pop(0)
        if variant is None:
            point.consumed.append(rule.name)
            self.trail.undo_to(mark)
            return None
        point.variants.append(variant)
        fill_post_contexts([variant.node])
        self._capture(variant.node.children)
        self.trail.undo_to(mark)
        return len(point.variants) - 1

    def _replay_chain(self, point: BacktrackPoint) -> None:
        """Re-assert the obligations present in every solution through the
        point: root-layer material plus its ancestor egos."""
        chain_index: dict[int, int] = {}
        parent = point.parent
        while parent is not None:
            chain_index[parent[0].id] = parent[1]
            parent = parent[0].parent

        def walk(items, owner) -> None:
            for item in items:
                if isinstance(item, DerivationNode):
                    for ob in item.obligations:
                        self._assert_obligation(ob, owner)
                    walk(item.children, owner)
                elif isinstance(item, ChoiceRef):
                    index = chain_index.get(item.point.id)
                    if index is not None:
                        variant = item.point.variants[index]
                        walk([variant.node], variant)

        walk(self._root_items, ROOT_OWNER)

    def _capture(self, items) -> None:
        """Freeze a completed layer: post-contexts filled, points committed."""
        fill_post_contexts(items)
        for point in layer_points(items):
            point.committed = True
            for variant in point.variants:
                self._capture(variant.node.children)

    # -- emission -----------------------------------------------------------

    def _emit(self, fixed: dict[int, int]) -> Iterator[Solution]:
        for assignment in iter_assignments(self._root_items, fixed):
            state = combination_state(self._root_items, assignment)
            if state is None:
                self.stats.combinations_filtered += 1
                continue
            frontier = combination_frontier(self._root_items, assignment)
            text = realize(frontier, self.registries.functions,
                           state.value, self.stats)
            derivation = self._resolve(self._root_items[0], assignment)
            weight = self.strategy.weight(derivation)
            self.stats.solutions_emitted += 1
            self._trace("solution", detail=text)
            yield Solution(text, weight, derivation, dict(assignment))

    def _resolve(self, item, assignment: dict[int, int]):
        if isinstance(item, DerivationNode):
            return ResolvedNode(item.rule_name, item.category,
                                tuple(self._resolve(c, assignment)
                                      for c in item.children))
        if isinstance(item, ChoiceRef):
            chosen = item.point.variants[assignment[item.point.id]]
            return self._resolve(chosen.node, assignment)
        return item
