"""The template grammar language: rule AST, reader, and static checks.

A grammar is an ordered set of named production rules.  Each rule guards a
category with a boolean test over the input structure and, when fired,
executes its template actions left to right: literal text, deferred word
forms, and recursive calls into other categories on a selected substructure.
Rules may add PATR-style feature equations and reversible side effects.

Concrete syntax (``;`` comments, case-insensitive keywords)::

    (DEFPRODUCTION "VPinf with temp/loc adjuncts"
      (:PRECOND (:CAT VP :TEST ((ROLE-FILLER-P patient)))
       :ACTIONS (:TEMPLATE (:RULE NP (ROLE-FILLER patient))
                           (:OPTRULE PP (TEMP-ADJUNCT))
                           (:OPTRULE PPDUR (TEMP-DURATION))
                           (:OPTRULE PP (LOC-ADJUNCT))
                           (:RULE INF (THEME))
                 :CONSTRAINTS (CASE (NP) :VAL akk))))

Tests:      (AND e+) (OR e+) (NOT e) (TRUE) (EXISTS path) (EQ path atom)
            (ROLE-FILLER-P role) (HAS-ADJUNCT kind) (PRED name arg*)
Selectors:  (PATH p) (ROLE-FILLER role) (THEME) (TEMP-ADJUNCT)
            (TEMP-DURATION) (LOC-ADJUNCT) (SELF) (SEL name arg*)
Equations:  (FEAT ref :VAL atom) introduces a value,
            (FEAT ref ref+) equates it across constituents,
            where ref is LHS, (CAT) or (CAT k).

Built-in role and adjunct lookups resolve against the structure a rule was
handed, falling back to its THEME substructure, so the same rule works
whether it gets the whole input or the event structure directly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .gil import Atom, FeatureStructure, Path, Sym, get_path, is_atom
from .morpho import FunctionRegistry

START_CATEGORY = "TXT"


class TglError(Exception):
    """Grammar text problem, with a 1-based line/column position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col

    def __str__(self) -> str:
        if self.line:
            return f"{self.line}:{self.col}: {self.message}"
        return self.message


# ---------------------------------------------------------------------------
# Test expressions

@dataclass(frozen=True)
class TrueTest:
    pass


@dataclass(frozen=True)
class Exists:
    path: Path


@dataclass(frozen=True)
class AtomEq:
    path: Path
    atom: Atom


@dataclass(frozen=True)
class RoleFillerP:
    role: Sym


@dataclass(frozen=True)
class HasAdjunct:
    kind: Sym  # temp | dur | loc


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: object


@dataclass(frozen=True)
class CallPred:
    name: str
    args: tuple


TestExpr = Union[TrueTest, Exists, AtomEq, RoleFillerP, HasAdjunct,
                 And, Or, Not, CallPred]


# ---------------------------------------------------------------------------
# Selector expressions

@dataclass(frozen=True)
class PathSel:
    path: Path


@dataclass(frozen=True)
class RoleFiller:
    role: Sym


@dataclass(frozen=True)
class Theme:
    pass


@dataclass(frozen=True)
class TempAdjunct:
    pass


@dataclass(frozen=True)
class TempDuration:
    pass


@dataclass(frozen=True)
class LocAdjunct:
    pass


@dataclass(frozen=True)
class SelfSel:
    pass


@dataclass(frozen=True)
class CallSel:
    name: str
    args: tuple


SelectorExpr = Union[PathSel, RoleFiller, Theme, TempAdjunct, TempDuration,
                     LocAdjunct, SelfSel, CallSel]


# ---------------------------------------------------------------------------
# Actions, constraints, rules

@dataclass(frozen=True)
class RuleCall:
    category: str
    selector: SelectorExpr
    optional: bool = False


@dataclass(frozen=True)
class FunCall:
    name: str
    args: tuple  # atoms and selector expressions


@dataclass(frozen=True)
class Literal:
    text: str


Action = Union[RuleCall, FunCall, Literal]


@dataclass(frozen=True)
class Lhs:
    def __str__(self) -> str:
        return "LHS"


@dataclass(frozen=True)
class Rhs:
    category: str
    occurrence: int = 1

    def __str__(self) -> str:
        if self.occurrence == 1:
            return f"({self.category})"
        return f"({self.category} {self.occurrence})"


ConstituentRef = Union[Lhs, Rhs]


@dataclass(frozen=True)
class Assign:
    feature: str
    at: ConstituentRef
    value: Atom


@dataclass(frozen=True)
class Equate:
    feature: str
    at: tuple  # >= 2 distinct ConstituentRefs


ConstraintEquation = Union[Assign, Equate]


@dataclass(frozen=True)
class Rule:
    name: str
    category: str
    test: TestExpr
    template: tuple  # non-empty Actions
    side_effects: tuple = ()  # FunCalls
    constraints: tuple = ()  # ConstraintEquations
    line: int = 0

    def constituent_positions(self) -> dict[tuple[str, int], int]:
        """Map (category, k) to the template index of its k-th call."""
        seen: dict[str, int] = {}
        out: dict[tuple[str, int], int] = {}
        for i, action in enumerate(self.template):
            if isinstance(action, RuleCall):
                seen[action.category] = seen.get(action.category, 0) + 1
                out[(action.category, seen[action.category])] = i
        return out


@dataclass
class Grammar:
    rules: list = field(default_factory=list)
    start: str = START_CATEGORY

    def __post_init__(self):
        self.rule_index: dict[str, list[Rule]] = {}
        self.by_name: dict[str, Rule] = {}
        for rule in self.rules:
            self._index(rule)

    def _index(self, rule: Rule) -> None:
        if rule.name in self.by_name:
            raise TglError(f"rule name {rule.name!r} used twice", rule.line)
        self.by_name[rule.name] = rule
        self.rule_index.setdefault(rule.category, []).append(rule)

    def add(self, rule: Rule) -> None:
        self.rules.append(rule)
        self._index(rule)

    @property
    def categories(self) -> set[str]:
        cats = {START_CATEGORY}
        for rule in self.rules:
            cats.add(rule.category)
            for action in rule.template:
                if isinstance(action, RuleCall):
                    cats.add(action.category)
        return cats

    def rules_for(self, category: str) -> list[Rule]:
        return self.rule_index.get(category.upper(), [])

    def has_side_effects(self) -> bool:
        return any(rule.side_effects for rule in self.rules)


# ---------------------------------------------------------------------------
# Reader: s-expressions over the shared token shapes

_PUNCT = {"(": "lparen", ")": "rparen"}
_SYM_START = set("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz")
_SYM_CONT = _SYM_START | set("0123456789_-.")


@dataclass
class _Tok:
    kind: str  # lparen rparen symbol keyword string int eof
    value: object
    line: int
    col: int


def _lex(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def err(msg):
        raise TglError(msg, line, col)

    while i < n:
        c = text[i]
        if c == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c in _PUNCT:
            toks.append(_Tok(_PUNCT[c], c, start_line, start_col))
            i += 1
            col += 1
            continue
        if c == ":":
            j = i + 1
            while j < n and text[j] in _SYM_CONT:
                j += 1
            if j == i + 1:
                err("expected a keyword name after ':'")
            toks.append(_Tok("keyword", text[i + 1:j].upper(), start_line, start_col))
            col += j - i
            i = j
            continue
        if c == '"':
            j = i + 1
            out = []
            while True:
                if j >= n:
                    err("unterminated string")
                ch = text[j]
                if ch == "\\":
                    if j + 1 >= n:
                        err("unterminated escape")
                    esc = text[j + 1]
                    rep = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc)
                    if rep is None:
                        err(f"unknown escape \\{esc}")
                    out.append(rep)
                    j += 2
                elif ch == '"':
                    j += 1
                    break
                elif ch == "\n":
                    err("newline in string literal")
                else:
                    out.append(ch)
                    j += 1
            toks.append(_Tok("string", "".join(out), start_line, start_col))
            col += j - i
            i = j
            continue
        if c.isdigit() or (c == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and text[j].isdigit():
                j += 1
            toks.append(_Tok("int", int(text[i:j]), start_line, start_col))
            col += j - i
            i = j
            continue
        if c in _SYM_START:
            j = i + 1
            while j < n and text[j] in _SYM_CONT:
                j += 1
            toks.append(_Tok("symbol", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        err(f"unexpected character {c!r}")
    toks.append(_Tok("eof", None, line, col))
    return toks


@dataclass
class _SExpr:
    items: list
    line: int
    col: int


def _read_all(text: str) -> list:
    toks = _lex(text)
    pos = 0

    def read_one():
        nonlocal pos
        t = toks[pos]
        pos += 1
        if t.kind == "lparen":
            items = []
            while True:
                nxt = toks[pos]
                if nxt.kind == "rparen":
                    pos += 1
                    return _SExpr(items, t.line, t.col)
                if nxt.kind == "eof":
                    raise TglError("unbalanced '('", t.line, t.col)
                items.append(read_one())
        if t.kind == "rparen":
            raise TglError("unmatched ')'", t.line, t.col)
        return t

    forms = []
    while toks[pos].kind != "eof":
        forms.append(read_one())
    return forms


def _is_sym(x, name: Optional[str] = None) -> bool:
    return (isinstance(x, _Tok) and x.kind == "symbol"
            and (name is None or x.value.upper() == name))


def _is_kw(x, name: str) -> bool:
    return isinstance(x, _Tok) and x.kind == "keyword" and x.value == name


def _where(x) -> tuple[int, int]:
    return (x.line, x.col)


def _atom_of(tok) -> Atom:
    if tok.kind == "symbol":
        return Sym(tok.value)
    if tok.kind == "string":
        return tok.value
    if tok.kind == "int":
        return tok.value
    raise TglError(f"expected an atom, found {tok.kind}", *_where(tok))


def _path_of(tok) -> Path:
    if not _is_sym(tok):
        raise TglError("expected an attribute path", *_where(tok))
    try:
        return Path.parse(tok.value)
    except ValueError as e:
        raise TglError(str(e), *_where(tok)) from None


class _GrammarReader:
    def parse(self, text: str) -> Grammar:
        grammar = Grammar()
        for form in _read_all(text):
            if not isinstance(form, _SExpr):
                raise TglError("top level expects (DEFPRODUCTION ...)", *_where(form))
            grammar.add(self.production(form))
        return grammar

    def production(self, form: _SExpr) -> Rule:
        items = form.items
        if not items or not _is_sym(items[0], "DEFPRODUCTION"):
            raise TglError("expected (DEFPRODUCTION ...)", form.line, form.col)
        if len(items) != 3:
            raise TglError("DEFPRODUCTION wants a name and a rule body",
                           form.line, form.col)
        name_tok, body = items[1], items[2]
        if not (isinstance(name_tok, _Tok) and name_tok.kind == "string"):
            raise TglError("rule name must be a quoted string", *_where(name_tok))
        if not isinstance(body, _SExpr):
            raise TglError("rule body must be a list", *_where(body))

        precond = actions = None
        i = 0
        while i < len(body.items):
            item = body.items[i]
            if _is_kw(item, "PRECOND"):
                precond = body.items[i + 1] if i + 1 < len(body.items) else None
                i += 2
            elif _is_kw(item, "ACTIONS"):
                actions = body.items[i + 1] if i + 1 < len(body.items) else None
                i += 2
            else:
                raise TglError("rule body allows :PRECOND and :ACTIONS",
                               *_where(item))
        if not isinstance(precond, _SExpr):
            raise TglError("missing (:PRECOND ...)", body.line, body.col)
        if not isinstance(actions, _SExpr):
            raise TglError("missing (:ACTIONS ...)", body.line, body.col)

        category, test = self.precond(precond)
        template, side_effects, constraints = self.actions(actions)
        return Rule(name=name_tok.value, category=category, test=test,
                    template=template, side_effects=side_effects,
                    constraints=constraints, line=form.line)

    def precond(self, form: _SExpr):
        category = None
        test: TestExpr = TrueTest()
        i = 0
        while i < len(form.items):
            item = form.items[i]
            if _is_kw(item, "CAT"):
                cat_tok = form.items[i + 1] if i + 1 < len(form.items) else None
                if cat_tok is None or not _is_sym(cat_tok):
                    raise TglError(":CAT wants a category symbol", *_where(item))
                category = cat_tok.value.upper()
                i += 2
            elif _is_kw(item, "TEST"):
                test_form = form.items[i + 1] if i + 1 < len(form.items) else None
                if not isinstance(test_form, _SExpr):
                    raise TglError(":TEST wants a list of test expressions",
                                   *_where(item))
                exprs = [self.test(e) for e in test_form.items]
                if not exprs:
                    test = TrueTest()
                elif len(exprs) == 1:
                    test = exprs[0]
                else:
                    test = And(tuple(exprs))
                i += 2
            else:
                raise TglError(":PRECOND allows :CAT and :TEST", *_where(item))
        if category is None:
            raise TglError("rule lacks a :CAT", form.line, form.col)
        return category, test

    def test(self, form) -> TestExpr:
        if not isinstance(form, _SExpr) or not form.items or not _is_sym(form.items[0]):
            raise TglError("test expression must be (OP ...)",
                           *_where(form))
        op = form.items[0].value.upper()
        args = form.items[1:]
        if op == "TRUE":
            return TrueTest()
        if op == "AND" or op == "OR":
            if not args:
                raise TglError(f"{op} wants at least one expression",
                               form.line, form.col)
            items = tuple(self.test(a) for a in args)
            return And(items) if op == "AND" else Or(items)
        if op == "NOT":
            if len(args) != 1:
                raise TglError("NOT wants exactly one expression",
                               form.line, form.col)
            return Not(self.test(args[0]))
        if op == "EXISTS":
            if len(args) != 1:
                raise TglError("EXISTS wants a path", form.line, form.col)
            return Exists(_path_of(args[0]))
        if op == "EQ":
            if len(args) != 2:
                raise TglError("EQ wants a path and an atom", form.line, form.col)
            return AtomEq(_path_of(args[0]), _atom_of(args[1]))
        if op == "ROLE-FILLER-P":
            if len(args) != 1 or not _is_sym(args[0]):
                raise TglError("ROLE-FILLER-P wants a role symbol",
                               form.line, form.col)
            return RoleFillerP(Sym(args[0].value))
        if op == "HAS-ADJUNCT":
            if len(args) != 1 or not _is_sym(args[0]):
                raise TglError("HAS-ADJUNCT wants temp, dur or loc",
                               form.line, form.col)
            kind = Sym(args[0].value)
            if kind not in (Sym("temp"), Sym("dur"), Sym("loc")):
                raise TglError("HAS-ADJUNCT wants temp, dur or loc",
                               form.line, form.col)
            return HasAdjunct(kind)
        if op == "PRED":
            if not args or not _is_sym(args[0]):
                raise TglError("PRED wants a predicate name", form.line, form.col)
            return CallPred(args[0].value,
                            tuple(self.pred_arg(a) for a in args[1:]))
        raise TglError(f"unknown test operator {op}", form.line, form.col)

    def pred_arg(self, form):
        if isinstance(form, _Tok):
            return _atom_of(form)
        return self.selector(form)

    def selector(self, form) -> SelectorExpr:
        if not isinstance(form, _SExpr) or not form.items or not _is_sym(form.items[0]):
            raise TglError("selector must be (OP ...)", *_where(form))
        op = form.items[0].value.upper()
        args = form.items[1:]
        simple = {"THEME": Theme, "TEMP-ADJUNCT": TempAdjunct,
                  "TEMP-DURATION": TempDuration, "LOC-ADJUNCT": LocAdjunct,
                  "SELF": SelfSel}
        if op in simple:
            if args:
                raise TglError(f"{op} takes no arguments", form.line, form.col)
            return simple[op]()
        if op == "PATH":
            if len(args) != 1:
                raise TglError("PATH wants one path", form.line, form.col)
            return PathSel(_path_of(args[0]))
        if op == "ROLE-FILLER":
            if len(args) != 1 or not _is_sym(args[0]):
                raise TglError("ROLE-FILLER wants a role symbol",
                               form.line, form.col)
            return RoleFiller(Sym(args[0].value))
        if op == "SEL":
            if not args or not _is_sym(args[0]):
                raise TglError("SEL wants a selector name", form.line, form.col)
            return CallSel(args[0].value,
                           tuple(self.pred_arg(a) for a in args[1:]))
        raise TglError(f"unknown selector {op}", form.line, form.col)

    def actions(self, form: _SExpr):
        template: list[Action] = []
        side_effects: list[FunCall] = []
        constraints: list[ConstraintEquation] = []
        if not form.items or not _is_kw(form.items[0], "TEMPLATE"):
            raise TglError(":ACTIONS must start with :TEMPLATE",
                           form.line, form.col)
        i = 1
        while i < len(form.items):
            item = form.items[i]
            if self._is_template_action(item):
                template.append(self.action(item))
                i += 1
                continue
            if _is_kw(item, "SIDE-EFFECTS"):
                block = form.items[i + 1] if i + 1 < len(form.items) else None
                if not isinstance(block, _SExpr):
                    raise TglError(":SIDE-EFFECTS wants (fun-call+)", *_where(item))
                for call in block.items:
                    if not (isinstance(call, _SExpr) and call.items
                            and _is_sym(call.items[0])):
                        raise TglError("side effects must be function calls",
                                       *_where(call))
                    side_effects.append(
                        FunCall(call.items[0].value,
                                tuple(self.pred_arg(a) for a in call.items[1:]))
                    )
                i += 2
                continue
            if _is_kw(item, "CONSTRAINT") or _is_kw(item, "CONSTRAINTS"):
                i += 1
                count = 0
                while i < len(form.items) and isinstance(form.items[i], _SExpr):
                    constraints.append(self.equation(form.items[i]))
                    count += 1
                    i += 1
                if count == 0:
                    raise TglError(":CONSTRAINTS wants at least one equation",
                                   *_where(item))
                continue
            raise TglError("unexpected item in :ACTIONS", *_where(item))
        if not template:
            raise TglError(":TEMPLATE must hold at least one action",
                           form.line, form.col)
        return tuple(template), tuple(side_effects), tuple(constraints)

    @staticmethod
    def _is_template_action(item) -> bool:
        if isinstance(item, _Tok):
            return item.kind == "string"
        return bool(item.items) and any(
            _is_kw(item.items[0], kw) for kw in ("RULE", "OPTRULE", "FUN")
        )

    def action(self, form) -> Action:
        if isinstance(form, _Tok):
            if form.kind == "string":
                return Literal(form.value)
            raise TglError("template actions are strings or (:OP ...)",
                           *_where(form))
        head = form.items[0]
        op = head.value
        args = form.items[1:]
        if op in ("RULE", "OPTRULE"):
            if len(args) != 2 or not _is_sym(args[0]):
                raise TglError(f":{op} wants a category and a selector",
                               form.line, form.col)
            return RuleCall(args[0].value.upper(), self.selector(args[1]),
                            optional=(op == "OPTRULE"))
        if op == "FUN":
            if len(args) != 1 or not isinstance(args[0], _SExpr):
                raise TglError(":FUN wants one (name arg*) call",
                               form.line, form.col)
            call = args[0]
            if not call.items or not _is_sym(call.items[0]):
                raise TglError("function call wants a name", call.line, call.col)
            return FunCall(call.items[0].value,
                           tuple(self.pred_arg(a) for a in call.items[1:]))
        raise TglError(f"unknown template action :{op}", form.line, form.col)

    def equation(self, form: _SExpr) -> ConstraintEquation:
        items = form.items
        if not items or not _is_sym(items[0]):
            raise TglError("equation wants a feature name", form.line, form.col)
        feature = items[0].value.upper()
        refs: list[ConstituentRef] = []
        i = 1
        while i < len(items) and not _is_kw(items[i], "VAL"):
            refs.append(self.ref(items[i]))
            i += 1
        if i < len(items):  # :VAL form
            if len(items) != i + 2:
                raise TglError(":VAL wants exactly one atom", form.line, form.col)
            if len(refs) != 1:
                raise TglError("value assignment wants exactly one constituent",
                               form.line, form.col)
            return Assign(feature, refs[0], _atom_of(items[i + 1]))
        if len(refs) < 2:
            raise TglError("equation needs :VAL or at least two constituents",
                           form.line, form.col)
        if len(set(map(str, refs))) != len(refs):
            raise TglError("equated constituents must be distinct",
                           form.line, form.col)
        return Equate(feature, tuple(refs))

    def ref(self, form) -> ConstituentRef:
        if _is_sym(form, "LHS"):
            return Lhs()
        if isinstance(form, _SExpr) and form.items and _is_sym(form.items[0]):
            cat = form.items[0].value.upper()
            if len(form.items) == 1:
                return Rhs(cat, 1)
            if len(form.items) == 2 and isinstance(form.items[1], _Tok) \
                    and form.items[1].kind == "int":
                return Rhs(cat, form.items[1].value)
        raise TglError("constituent reference is LHS, (CAT) or (CAT k)",
                       *_where(form))


def parse_grammar(text: str) -> Grammar:
    """Read rules in source order; no name/registry checks beyond syntax."""
    return _GrammarReader().parse(text)


# ---------------------------------------------------------------------------
# Pretty printer (round-trips through parse_grammar)

def format_grammar(grammar: Grammar) -> str:
    return "\n\n".join(format_rule(rule) for rule in grammar.rules) + "\n"


def format_rule(rule: Rule) -> str:
    lines = [f'(DEFPRODUCTION "{rule.name}"']
    lines.append(f"  (:PRECOND (:CAT {rule.category} :TEST ({_fmt_test(rule.test)}))")
    actions = " ".join(_fmt_action(a) for a in rule.template)
    body = f"   :ACTIONS (:TEMPLATE {actions}"
    if rule.side_effects:
        calls = " ".join(_fmt_call(c) for c in rule.side_effects)
        body += f" :SIDE-EFFECTS ({calls})"
    if rule.constraints:
        eqs = " ".join(_fmt_equation(e) for e in rule.constraints)
        body += f" :CONSTRAINTS {eqs}"
    lines.append(body + ")))")
    return "\n".join(lines)


def _fmt_atom(a: Atom) -> str:
    if isinstance(a, Sym):
        return a.text
    if isinstance(a, str):
        body = a.replace("\\", "\\\\").replace('"', '\\"')
        body = body.replace("\n", "\\n").replace("\t", "\\t")
        return f'"{body}"'
    return str(a)


def _fmt_test(t: TestExpr) -> str:
    if isinstance(t, TrueTest):
        return "(TRUE)"
    if isinstance(t, Exists):
        return f"(EXISTS {t.path})"
    if isinstance(t, AtomEq):
        return f"(EQ {t.path} {_fmt_atom(t.atom)})"
    if isinstance(t, RoleFillerP):
        return f"(ROLE-FILLER-P {t.role})"
    if isinstance(t, HasAdjunct):
        return f"(HAS-ADJUNCT {t.kind})"
    if isinstance(t, And):
        return "(AND " + " ".join(_fmt_test(i) for i in t.items) + ")"
    if isinstance(t, Or):
        return "(OR " + " ".join(_fmt_test(i) for i in t.items) + ")"
    if isinstance(t, Not):
        return f"(NOT {_fmt_test(t.item)})"
    if isinstance(t, CallPred):
        return "(PRED " + " ".join([t.name] + [_fmt_arg(a) for a in t.args]) + ")"
    raise TypeError(t)


def _fmt_sel(s: SelectorExpr) -> str:
    if isinstance(s, PathSel):
        return f"(PATH {s.path})"
    if isinstance(s, RoleFiller):
        return f"(ROLE-FILLER {s.role})"
    if isinstance(s, Theme):
        return "(THEME)"
    if isinstance(s, TempAdjunct):
        return "(TEMP-ADJUNCT)"
    if isinstance(s, TempDuration):
        return "(TEMP-DURATION)"
    if isinstance(s, LocAdjunct):
        return "(LOC-ADJUNCT)"
    if isinstance(s, SelfSel):
        return "(SELF)"
    if isinstance(s, CallSel):
        return "(SEL " + " ".join([s.name] + [_fmt_arg(a) for a in s.args]) + ")"
    raise TypeError(s)


def _fmt_arg(a) -> str:
    if is_atom(a):
        return _fmt_atom(a)
    return _fmt_sel(a)


def _fmt_call(c: FunCall) -> str:
    return "(" + " ".join([c.name] + [_fmt_arg(a) for a in c.args]) + ")"


def _fmt_action(a: Action) -> str:
    if isinstance(a, Literal):
        return _fmt_atom(a.text)
    if isinstance(a, FunCall):
        return f"(:FUN {_fmt_call(a)})"
    if isinstance(a, RuleCall):
        op = ":OPTRULE" if a.optional else ":RULE"
        return f"({op} {a.category} {_fmt_sel(a.selector)})"
    raise TypeError(a)


def _fmt_equation(e: ConstraintEquation) -> str:
    if isinstance(e, Assign):
        return f"({e.feature} {e.at} :VAL {_fmt_atom(e.value)})"
    return "(" + " ".join([e.feature] + [str(r) for r in e.at]) + ")"


# ---------------------------------------------------------------------------
# Predicate / selector registries

class Registry:
    """Named user extensions for tests (predicates) or selectors."""

    def __init__(self, kind: str):
        self.kind = kind
        self._entries: dict[str, Callable] = {}

    def register(self, name: str, fn: Callable) -> None:
        key = name.casefold()
        if key in self._entries:
            raise TglError(f"{self.kind} {name!r} registered twice")
        self._entries[key] = fn

    def get(self, name: str) -> Optional[Callable]:
        return self._entries.get(name.casefold())


@dataclass
class Registries:
    predicates: Registry
    selectors: Registry
    functions: FunctionRegistry

    @classmethod
    def standard(cls, lexicon=None) -> "Registries":
        from .morpho import default_lexicon, standard_functions

        return cls(Registry("predicate"), Registry("selector"),
                   standard_functions(lexicon or default_lexicon()))


# ---------------------------------------------------------------------------
# Evaluation of tests and selectors

def _relative(fs: FeatureStructure, *paths: str):
    """Look up the first present path, trying THEME.<path> as a fallback."""
    for p in paths:
        v = get_path(fs, p)
        if v is not None:
            return v
    for p in paths:
        v = get_path(fs, "THEME." + p)
        if v is not None:
            return v
    return None


def _args_list(fs: FeatureStructure):
    args = _relative(fs, "ARGS")
    return args if isinstance(args, tuple) else None


def _role_filler(fs: FeatureStructure, role: Sym):
    args = _args_list(fs)
    if args is None:
        return None
    for item in args:
        if isinstance(item, FeatureStructure) and get_path(item, "ROLE") == role:
            return item
    return None


_ADJUNCT_PATHS = {Sym("temp"): "TIME-ADJ", Sym("dur"): "DUR-ADJ",
                  Sym("loc"): "LOC-ADJ"}


def eval_test(test: TestExpr, fs: FeatureStructure,
              predicates: Optional[Registry] = None) -> bool:
    if isinstance(test, TrueTest):
        return True
    if isinstance(test, Exists):
        return get_path(fs, test.path) is not None
    if isinstance(test, AtomEq):
        value = get_path(fs, test.path)
        return value is not None and _atoms_equal(value, test.atom)
    if isinstance(test, RoleFillerP):
        return _role_filler(fs, test.role) is not None
    if isinstance(test, HasAdjunct):
        return _relative(fs, _ADJUNCT_PATHS[test.kind]) is not None
    if isinstance(test, And):
        return all(eval_test(t, fs, predicates) for t in test.items)
    if isinstance(test, Or):
        return any(eval_test(t, fs, predicates) for t in test.items)
    if isinstance(test, Not):
        return not eval_test(test.item, fs, predicates)
    if isinstance(test, CallPred):
        fn = predicates.get(test.name) if predicates else None
        if fn is None:
            raise TglError(f"unknown predicate {test.name!r}")
        args = tuple(_eval_arg(a, fs, None) for a in test.args)
        return bool(fn(fs, *args))
    raise TypeError(test)


def _atoms_equal(a, b) -> bool:
    if isinstance(a, Sym) and isinstance(b, Sym):
        return a == b
    if type(a) is type(b):
        return a == b
    if isinstance(a, int) and isinstance(b, int):
        return a == b
    return False


def eval_selector(selector: SelectorExpr, fs: FeatureStructure,
                  selectors: Optional[Registry] = None):
    """Pick the substructure an action works on; None means absent."""
    if isinstance(selector, SelfSel):
        return fs
    if isinstance(selector, PathSel):
        return get_path(fs, selector.path)
    if isinstance(selector, RoleFiller):
        return _role_filler(fs, selector.role)
    if isinstance(selector, Theme):
        theme = get_path(fs, "THEME")
        return theme if theme is not None else fs
    if isinstance(selector, TempAdjunct):
        return _relative(fs, "TIME-ADJ")
    if isinstance(selector, TempDuration):
        return _relative(fs, "DUR-ADJ")
    if isinstance(selector, LocAdjunct):
        return _relative(fs, "LOC-ADJ")
    if isinstance(selector, CallSel):
        fn = selectors.get(selector.name) if selectors else None
        if fn is None:
            raise TglError(f"unknown selector {selector.name!r}")
        args = tuple(_eval_arg(a, fs, selectors) for a in selector.args)
        return fn(fs, *args)
    raise TypeError(selector)


def _eval_arg(arg, fs, selectors):
    if is_atom(arg):
        return arg
    return eval_selector(arg, fs, selectors)


# ---------------------------------------------------------------------------
# Static validation

class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    message: str
    rule: Optional[str] = None
    line: int = 0

    def __str__(self) -> str:
        where = f"rule {self.rule!r}" if self.rule else "grammar"
        loc = f" (line {self.line})" if self.line else ""
        return f"{self.severity.value}: {where}{loc}: {self.message}"


def validate_grammar(grammar: Grammar,
                     registries: Optional[Registries] = None) -> list[Diagnostic]:
    """Static checks; an empty result means the grammar is clean."""
    out: list[Diagnostic] = []

    def error(msg, rule=None, line=0):
        out.append(Diagnostic(Severity.ERROR, msg, rule, line))

    def warn(msg, rule=None, line=0):
        out.append(Diagnostic(Severity.WARNING, msg, rule, line))

    if not grammar.rules_for(grammar.start):
        error(f"start category {grammar.start} has no rules")

    for rule in grammar.rules:
        positions = rule.constituent_positions()
        for action in rule.template:
            if isinstance(action, RuleCall) and not grammar.rules_for(action.category):
                warn(f"no rule produces category {action.category}",
                     rule.name, rule.line)
            if isinstance(action, FunCall):
                _check_fun(action, rule, registries, error, side_effect=False)
                for arg in action.args:
                    _check_sel_names(arg, rule, registries, error)
            if isinstance(action, RuleCall):
                _check_sel_names(action.selector, rule, registries, error)
        _check_test_names(rule.test, rule, registries, error)
        for call in rule.side_effects:
            _check_fun(call, rule, registries, error, side_effect=True)
        for eq in rule.constraints:
            refs = [eq.at] if isinstance(eq, Assign) else list(eq.at)
            for ref in refs:
                if isinstance(ref, Rhs) and (ref.category, ref.occurrence) not in positions:
                    error(f"constraint names constituent {ref} "
                          f"but the template has no such call",
                          rule.name, rule.line)
        if _optional_subtree_constrained(rule, grammar):
            warn("optional constituent leads to rules with constraints; "
                 "their inclusion follows the first derivation's context",
                 rule.name, rule.line)
    return out


def _check_fun(call: FunCall, rule: Rule, registries, error, side_effect: bool):
    if registries is None:
        return
    entry = registries.functions.get(call.name)
    if entry is None:
        error(f"unknown function {call.name!r}", rule.name, rule.line)
    elif side_effect and not entry.is_side_effect:
        error(f"function {call.name!r} has no undo callback and cannot "
              f"be used under :SIDE-EFFECTS", rule.name, rule.line)
    elif not side_effect and entry.is_side_effect:
        error(f"side effect {call.name!r} cannot appear in a template",
              rule.name, rule.line)


def _check_test_names(test: TestExpr, rule: Rule, registries, error):
    if isinstance(test, CallPred):
        if registries is not None and registries.predicates.get(test.name) is None:
            error(f"unknown predicate {test.name!r}", rule.name, rule.line)
        for arg in test.args:
            _check_sel_names(arg, rule, registries, error)
    elif isinstance(test, (And, Or)):
        for item in test.items:
            _check_test_names(item, rule, registries, error)
    elif isinstance(test, Not):
        _check_test_names(test.item, rule, registries, error)


def _check_sel_names(sel, rule: Rule, registries, error):
    if isinstance(sel, CallSel):
        if registries is not None and registries.selectors.get(sel.name) is None:
            error(f"unknown selector {sel.name!r}", rule.name, rule.line)
        for arg in sel.args:
            _check_sel_names(arg, rule, registries, error)


def _optional_subtree_constrained(rule: Rule, grammar: Grammar) -> bool:
    """True when an :OPTRULE can reach rules carrying constraint equations."""
    for action in rule.template:
        if isinstance(action, RuleCall) and action.optional:
            seen: set[str] = set()
            stack = [action.category]
            while stack:
                cat = stack.pop()
                if cat in seen:
                    continue
                seen.add(cat)
                for r in grammar.rules_for(cat):
                    if r.constraints:
                        return True
                    for a in r.template:
                        if isinstance(a, RuleCall):
                            stack.append(a.category)
    return False
