"""User preferences: weighted criteria steering the order of solutions.

A criterion names a grammar rule (a *c-rule*) and is fulfilled when that
rule is applied in a solution.  Criteria bias generation two ways: inside a
conflict set, c-rules are tried first; among open backtrack points, those
whose pending alternatives still contain a c-rule are expanded first.
Applied incrementally this yields the solutions fulfilling criteria before
the others; it does not (and cannot, without look-ahead) guarantee the
globally heaviest solution first, so an exact post-hoc ranking over an
exhausted stream is offered separately.

A solution's weight sums, over the distinct c-rules it applies, the rule's
weight: each of the n occurrences of a c-rule contributes weight/n.  The
alternative reading (a c-rule applied n times contributes weight/n in
total) is available as ``weight_formula="per-distinct"``.

Criteria file format (UTF-8, ``#`` comments): one criterion per line,
``<rule-name> [weight]``; names containing spaces are double-quoted;
weights are non-negative rationals (``2``, ``0.5``, ``1/3``), default 1.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Optional

from .backtrack import BacktrackPoint, BTTable
from .gil import FeatureStructure
from .session import GenerationSession, ResolvedNode, Solution
from .tgl import Grammar, Registries, Rule

MODES = ("first-solution-bias", "weight-ranked")
FORMULAS = ("per-occurrence", "per-distinct")


class CriteriaError(Exception):
    pass


@dataclass(frozen=True)
class Criterion:
    rule_name: str
    weight: Fraction = Fraction(1)

    def __post_init__(self):
        if self.weight < 0:
            raise CriteriaError(f"criterion {self.rule_name!r}: "
                                f"weight must be non-negative")


@dataclass(frozen=True)
class CriteriaSpec:
    criteria: tuple = ()
    mode: str = "first-solution-bias"
    weight_formula: str = "per-occurrence"

    def __post_init__(self):
        names = [c.rule_name for c in self.criteria]
        if len(set(names)) != len(names):
            raise CriteriaError("criteria name a rule more than once")
        if self.mode not in MODES:
            raise CriteriaError(f"unknown mode {self.mode!r}")
        if self.weight_formula not in FORMULAS:
            raise CriteriaError(f"unknown weight formula {self.weight_formula!r}")

    @property
    def weights(self) -> dict[str, Fraction]:
        return {c.rule_name: c.weight for c in self.criteria}

    def is_c_rule(self, rule_name: str) -> bool:
        return any(c.rule_name == rule_name for c in self.criteria)

    def weight_of(self, rule_name: str) -> Optional[Fraction]:
        for c in self.criteria:
            if c.rule_name == rule_name:
                return c.weight
        return None


EMPTY_SPEC = CriteriaSpec()


def parse_criteria(text: str, mode: str = "first-solution-bias",
                   weight_formula: str = "per-occurrence") -> CriteriaSpec:
    criteria = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith('"'):
            end = line.find('"', 1)
            if end < 0:
                raise CriteriaError(f"line {lineno}: unterminated quoted name")
            name, rest = line[1:end], line[end + 1:].strip()
        else:
            name, rest = line, ""
            parts = line.rsplit(None, 1)
            if len(parts) == 2 and _is_weight(parts[1]):
                name, rest = parts
        weight = Fraction(1)
        if rest:
            if not _is_weight(rest):
                raise CriteriaError(f"line {lineno}: bad weight {rest!r}")
            weight = Fraction(rest)
        criteria.append(Criterion(name, weight))
    return CriteriaSpec(tuple(criteria), mode, weight_formula)


def _is_weight(text: str) -> bool:
    try:
        Fraction(text)
        return True
    except (ValueError, ZeroDivisionError):
        return False


def load_criteria(path, **kwargs) -> CriteriaSpec:
    import pathlib

    return parse_criteria(pathlib.Path(path).read_text(encoding="utf-8"), **kwargs)


# ---------------------------------------------------------------------------
# Choice ordering

def order_conflict_set(conflict_set: list[Rule], spec: CriteriaSpec) -> list[Rule]:
    """Stable partition: c-rules first by descending weight, rest after."""
    if not spec.criteria:
        return list(conflict_set)
    c_rules = [r for r in conflict_set if spec.is_c_rule(r.name)]
    c_rules.sort(key=lambda r: -spec.weight_of(r.name))  # stable for ties
    others = [r for r in conflict_set if not spec.is_c_rule(r.name)]
    return c_rules + others


def choose_backtrack_point(open_points, spec: CriteriaSpec) -> Optional[BacktrackPoint]:
    """Prefer points whose remainder still holds a c-rule, then deepest.

    Accepts a table or the list of open points; returns None on exhaustion.
    """
    if isinstance(open_points, BTTable):
        open_points = open_points.open_points()
    if not open_points:
        return None
    if spec.criteria:
        best: Optional[tuple[Fraction, BacktrackPoint]] = None
        for point in open_points:
            weights = [spec.weight_of(r.name) for r in point.remainder
                       if spec.is_c_rule(r.name)]
            if not weights:
                continue
            if spec.mode == "first-solution-bias":
                return point  # deepest-first among c-rule carriers
            top = max(weights)
            if best is None or top > best[0]:
                best = (top, point)
        if best is not None:
            return best[1]
    return open_points[0]


def solution_weight(derivation: ResolvedNode, spec: CriteriaSpec) -> Fraction:
    """Aggregate the weights of the c-rules a solution applied."""
    counts = applied_rules(derivation)
    total = Fraction(0)
    for criterion in spec.criteria:
        n = counts.get(criterion.rule_name, 0)
        if n == 0:
            continue
        if spec.weight_formula == "per-occurrence":
            total += n * (criterion.weight / n)
        else:
            total += criterion.weight / n
    return total


def applied_rules(derivation: ResolvedNode) -> Counter:
    return Counter(derivation.rule_names())


class CriteriaStrategy:
    """Session strategy driven by a CriteriaSpec."""

    def __init__(self, spec: CriteriaSpec = EMPTY_SPEC):
        self.spec = spec

    def order_conflict_set(self, rules: list[Rule]) -> list[Rule]:
        return order_conflict_set(rules, self.spec)

    def choose_point(self, open_points: list[BacktrackPoint]):
        return choose_backtrack_point(open_points, self.spec)

    def weight(self, derivation: ResolvedNode) -> Fraction:
        return solution_weight(derivation, self.spec)


# ---------------------------------------------------------------------------
# Stream drivers

def make_session(grammar: Grammar, spec: Optional[CriteriaSpec] = None,
                 *, registries: Optional[Registries] = None,
                 use_memo: bool = True, trace=None) -> GenerationSession:
    return GenerationSession(grammar, registries,
                             strategy=CriteriaStrategy(spec or EMPTY_SPEC),
                             use_memo=use_memo, trace=trace)


def best_first_stream(grammar: Grammar, input_fs: FeatureStructure,
                      spec: Optional[CriteriaSpec] = None,
                      *, start: Optional[str] = None,
                      registries: Optional[Registries] = None,
                      use_memo: bool = True, trace=None) -> Iterator[Solution]:
    """All solutions, lazily, criteria-fulfilling ones first."""
    session = make_session(grammar, spec, registries=registries,
                           use_memo=use_memo, trace=trace)
    return session.solutions(input_fs, start)


def rank_solutions(solutions: Iterable[Solution]) -> list[Solution]:
    """Exact post-hoc ranking by weight, stable within equal weights."""
    return sorted(solutions, key=lambda s: -s.weight)


# ---------------------------------------------------------------------------
# Derivational history for offline statistics

@dataclass
class DerivationHistory:
    """Per applied rule, the c-rules applied later in its subtree.

    Collected from generated solutions so that the filtering effect of rule
    tests is reflected; merged additively across a corpus.
    """

    per_rule: dict = field(default_factory=dict)  # rule -> Counter of c-rules
    c_rule_totals: Counter = field(default_factory=Counter)
    solutions: int = 0

    def merge(self, other: "DerivationHistory") -> "DerivationHistory":
        for rule, counter in other.per_rule.items():
            self.per_rule.setdefault(rule, Counter()).update(counter)
        self.c_rule_totals.update(other.c_rule_totals)
        self.solutions += other.solutions
        return self

    def report(self) -> str:
        lines = [f"solutions: {self.solutions}"]
        for name, count in sorted(self.c_rule_totals.items()):
            lines.append(f"c-rule {name!r}: applied {count} time(s)")
        for rule in sorted(self.per_rule):
            below = self.per_rule[rule]
            if below:
                inner = ", ".join(f"{n}:{c}" for n, c in sorted(below.items()))
                lines.append(f"after {rule!r}: {inner}")
        return "\n".join(lines)


def record_history(derivation: ResolvedNode,
                   spec: CriteriaSpec) -> DerivationHistory:
    """History of one solution: c-rules per subtree, plus global counts."""
    history = DerivationHistory(solutions=1)

    def walk(node: ResolvedNode) -> Counter:
        below: Counter = Counter()
        for child in node.children:
            if isinstance(child, ResolvedNode):
                below.update(walk(child))
        entry = history.per_rule.setdefault(node.rule_name, Counter())
        entry.update(below)
        if spec.is_c_rule(node.rule_name):
            below = below + Counter({node.rule_name: 1})
        return below

    top = walk(derivation)
    history.c_rule_totals.update(top)
    return history
