import pytest

from surfgen.backtrack import iter_assignments
from surfgen.engine import ChoiceRef, InflectCall, LiteralTok
from surfgen.gil import FeatureStructure, parse_gil
from surfgen.session import GenerationSession
from surfgen.tgl import Registries, parse_grammar

# A grammar shaped like the worked three-point table: an early choice, a
# later choice whose second alternative fails, and a choice nested inside
# the second one's ego.
TABLE_GRAMMAR = """
(DEFPRODUCTION "top"
  (:PRECOND (:CAT TXT :TEST ((TRUE)))
   :ACTIONS (:TEMPLATE "s1" (:RULE A (SELF)) "s3" (:RULE B (SELF)) "s8")))

(DEFPRODUCTION "a1" (:PRECOND (:CAT A :TEST ((TRUE))) :ACTIONS (:TEMPLATE "s21")))
(DEFPRODUCTION "a2" (:PRECOND (:CAT A :TEST ((TRUE))) :ACTIONS (:TEMPLATE "s22")))

(DEFPRODUCTION "b1"
  (:PRECOND (:CAT B :TEST ((TRUE)))
   :ACTIONS (:TEMPLATE "s51" (:RULE C (SELF)) "s71")))
(DEFPRODUCTION "b2"
  (:PRECOND (:CAT B :TEST ((TRUE)))
   :ACTIONS (:TEMPLATE (:RULE D (PATH MISSING)))))

(DEFPRODUCTION "c1" (:PRECOND (:CAT C :TEST ((TRUE))) :ACTIONS (:TEMPLATE "s61")))
(DEFPRODUCTION "c2" (:PRECOND (:CAT C :TEST ((TRUE))) :ACTIONS (:TEMPLATE "s62")))

(DEFPRODUCTION "d" (:PRECOND (:CAT D :TEST ((TRUE))) :ACTIONS (:TEMPLATE "d")))
"""


@pytest.fixture(scope="module")
def regs():
    return Registries.standard()


def _texts(items):
    return [seg.text if isinstance(seg, LiteralTok) else seg for seg in items]


def _ctx(segments):
    """Readable form of a context: literal texts, B<i> for nested points."""
    out = []
    for seg in segments:
        if isinstance(seg, LiteralTok):
            out.append(seg.text)
        elif isinstance(seg, ChoiceRef):
            out.append(f"B{seg.point.id}")
        elif isinstance(seg, InflectCall):
            out.append(f"<{seg.function}>")
    return out


def test_first_solution_and_total(regs):
    g = parse_grammar(TABLE_GRAMMAR)
    session = GenerationSession(g, regs)
    sols = [s.text for s in session.solutions(FeatureStructure())]
    assert sols[0] == "s1 s21 s3 s51 s61 s71 s8"
    assert sols[1] == "s1 s21 s3 s51 s62 s71 s8"
    assert sols[2:] == ["s1 s22 s3 s51 s61 s71 s8", "s1 s22 s3 s51 s62 s71 s8"]
    assert len(sols) == 4


def test_table_shape(regs):
    g = parse_grammar(TABLE_GRAMMAR)
    session = GenerationSession(g, regs)
    list(session.solutions(FeatureStructure()))

    points = {p.id: p for p in session.table}
    assert len(points) == 3
    b1, b2, b3 = points[1], points[2], points[3]

    # pre-contexts were known at recording time, left to right
    assert _ctx(b1.pre_context) == ["s1"]
    assert _ctx(b2.pre_context) == ["s1", "B1", "s3"]
    assert _ctx(b3.pre_context) == ["s1", "B1", "s3", "s51"]

    # post-contexts got filled once the first solution existed
    assert _ctx(b1.post_context) == ["s3", "B2", "s8"]
    assert _ctx(b2.post_context) == ["s8"]
    assert _ctx(b3.post_context) == ["s71", "s8"]

    # egos: one sequence per successfully applied conflict-set rule
    assert [_ctx(f) for f in b1.ego_frontiers()] == [["s21"], ["s22"]]
    assert [_ctx(f) for f in b2.ego_frontiers()] == [["s51", "B3", "s71"]]
    assert [_ctx(f) for f in b3.ego_frontiers()] == [["s61"], ["s62"]]

    # the failing alternative was consumed without producing a variant
    assert b2.consumed == ["b2"]
    assert b2.exhausted

    # nesting is recorded: B3 sits inside the first ego of B2
    assert b3.parent == (b2, 0)
    assert b1.parent is None


def test_expansion_fires_only_ego_rules(regs):
    g = parse_grammar(TABLE_GRAMMAR)
    session = GenerationSession(g, regs)
    stream = session.solutions(FeatureStructure())
    next(stream)  # first solution
    before = dict(session.stats.fired_by_rule)
    next(stream)  # expansion of the nested point
    after = dict(session.stats.fired_by_rule)
    delta = {k: v - before.get(k, 0) for k, v in after.items() if v != before.get(k, 0)}
    assert delta == {"c2": 1}


def test_point_only_for_real_conflicts(regs):
    g = parse_grammar(
        '(DEFPRODUCTION "t" (:PRECOND (:CAT TXT :TEST ((TRUE)))'
        ' :ACTIONS (:TEMPLATE (:RULE A (SELF)))))\n'
        '(DEFPRODUCTION "only" (:PRECOND (:CAT A :TEST ((TRUE)))'
        ' :ACTIONS (:TEMPLATE "w")))\n'
    )
    session = GenerationSession(g, regs)
    assert [s.text for s in session.solutions(FeatureStructure())] == ["w"]
    assert len(session.table) == 0
    assert session.stats.bt_points_created == 0


def test_conflict_of_three_leaves_remainder_of_two(regs):
    text = "".join(
        f'(DEFPRODUCTION "r{i}" (:PRECOND (:CAT TXT :TEST ((TRUE)))'
        f' :ACTIONS (:TEMPLATE "w{i}")))\n'
        for i in range(3)
    )
    session = GenerationSession(parse_grammar(text), regs)
    stream = session.solutions(FeatureStructure())
    assert next(stream).text == "w0"
    point = next(iter(session.table))
    assert len(point.remainder) == 2
    assert [s.text for s in stream] == ["w1", "w2"]


# --- memoization --------------------------------------------------------------

MEMO_GRAMMAR = """
(DEFPRODUCTION "top"
  (:PRECOND (:CAT TXT :TEST ((TRUE)))
   :ACTIONS (:TEMPLATE (:RULE X (SELF)))))
(DEFPRODUCTION "x1"
  (:PRECOND (:CAT X :TEST ((TRUE)))
   :ACTIONS (:TEMPLATE (:RULE NP (PATH A)) "mid" (:RULE NP (PATH A)))))
(DEFPRODUCTION "x2" (:PRECOND (:CAT X :TEST ((TRUE))) :ACTIONS (:TEMPLATE "alt")))
(DEFPRODUCTION "np" (:PRECOND (:CAT NP :TEST ((TRUE))) :ACTIONS (:TEMPLATE "noun")))
"""


def test_memo_hit_for_repeated_substructure(regs):
    fs = parse_gil("[(A [(K v)])]")
    session = GenerationSession(parse_grammar(MEMO_GRAMMAR), regs)
    sols = [s.text for s in session.solutions(fs)]
    assert sols == ["noun mid noun", "alt"]
    assert session.stats.fired_by_rule["np"] == 1  # second call was a hit
    assert session.stats.memo_hits == 1


def test_memo_miss_on_different_input(regs):
    g = parse_grammar(
        '(DEFPRODUCTION "t" (:PRECOND (:CAT TXT :TEST ((TRUE)))'
        ' :ACTIONS (:TEMPLATE (:RULE NP (PATH A)) (:RULE NP (PATH B)))))\n'
        '(DEFPRODUCTION "np" (:PRECOND (:CAT NP :TEST ((TRUE)))'
        ' :ACTIONS (:TEMPLATE "n")))\n'
    )
    fs = parse_gil("[(A [(K 1)]) (B [(K 2)])]")
    session = GenerationSession(g, regs)
    assert [s.text for s in session.solutions(fs)] == ["n n"]
    assert session.stats.memo_hits == 0
    assert session.stats.fired_by_rule["np"] == 2


def test_memo_disabled_same_solutions_more_firing(regs):
    fs = parse_gil("[(A [(K v)])]")
    with_memo = GenerationSession(parse_grammar(MEMO_GRAMMAR), regs)
    res_a = [s.text for s in with_memo.solutions(fs)]
    without = GenerationSession(parse_grammar(MEMO_GRAMMAR), regs, use_memo=False)
    res_b = [s.text for s in without.solutions(fs)]
    assert res_a == res_b
    assert without.stats.rules_fired >= with_memo.stats.rules_fired
    assert without.stats.memo_hits == 0


def test_side_effects_flush_memo(regs):
    g = parse_grammar(
        '(DEFPRODUCTION "t" (:PRECOND (:CAT TXT :TEST ((TRUE)))'
        ' :ACTIONS (:TEMPLATE (:RULE NP (PATH A)) (:RULE NP (PATH A))'
        ' :SIDE-EFFECTS ((note go)))))\n'
        '(DEFPRODUCTION "np" (:PRECOND (:CAT NP :TEST ((TRUE)))'
        ' :ACTIONS (:TEMPLATE "n" :SIDE-EFFECTS ((note np)))))\n'
    )
    fs = parse_gil("[(A [(K v)])]")
    session = GenerationSession(g, regs)
    assert [s.text for s in session.solutions(fs)] == ["n n"]
    # every np firing ran its own effect, so nothing was reused
    assert session.stats.fired_by_rule["np"] == 2


# --- inflection recomputation --------------------------------------------------

AGREEMENT_GRAMMAR = """
(DEFPRODUCTION "top"
  (:PRECOND (:CAT TXT :TEST ((TRUE)))
   :ACTIONS (:TEMPLATE (:RULE NP (PATH SUBJ)) (:FUN (verb (PATH PRED))) "heute"
             :CONSTRAINTS (NUM LHS (NP))
                          (TENSE LHS :VAL pres)
                          (PERSON LHS :VAL 3))))
(DEFPRODUCTION "np-sg"
  (:PRECOND (:CAT NP :TEST ((TRUE)))
   :ACTIONS (:TEMPLATE (:FUN (noun-phrase (PATH NOUN)))
             :CONSTRAINTS (NUM LHS :VAL sg) (CASE LHS :VAL nom) (DET LHS :VAL def))))
(DEFPRODUCTION "np-pl"
  (:PRECOND (:CAT NP :TEST ((TRUE)))
   :ACTIONS (:TEMPLATE (:FUN (noun-phrase (PATH NOUN)))
             :CONSTRAINTS (NUM LHS :VAL pl) (CASE LHS :VAL nom) (DET LHS :VAL def))))
"""


def test_flipped_agreement_reinflects_post_context(regs):
    fs = parse_gil("[(SUBJ [(NOUN appointment)]) (PRED fit)]")
    session = GenerationSession(parse_grammar(AGREEMENT_GRAMMAR), regs)
    sols = [s.text for s in session.solutions(fs)]
    assert sols == ["der Termin passt heute", "die Termine passen heute"]
    # the verb sits outside the ego and was re-realized exactly once
    assert session.stats.re_realizations == 1


def test_untouched_ego_triggers_no_rerealization(regs):
    g = parse_grammar(TABLE_GRAMMAR)
    session = GenerationSession(g, regs)
    list(session.solutions(FeatureStructure()))
    assert session.stats.re_realizations == 0


def test_literals_are_reused_verbatim(regs):
    fs = parse_gil("[(SUBJ [(NOUN appointment)]) (PRED fit)]")
    session = GenerationSession(parse_grammar(AGREEMENT_GRAMMAR), regs)
    sols = list(session.solutions(fs))
    lit_first = [c for c in sols[0].derivation.children if isinstance(c, LiteralTok)]
    lit_second = [c for c in sols[1].derivation.children if isinstance(c, LiteralTok)]
    assert lit_first and all(a is b for a, b in zip(lit_first, lit_second))


def test_first_solution_fills_every_post_context_once(regs):
    g = parse_grammar(TABLE_GRAMMAR)
    session = GenerationSession(g, regs)
    stream = session.solutions(FeatureStructure())
    next(stream)
    # after the first solution every ego set holds exactly one element and
    # every post-context is known
    for point in session.table:
        assert len(point.variants) == 1
        assert point.post_local is not None
        assert point.post_context is not None
    stream.close()


def test_recursive_grammar_terminates(regs):
    g = parse_grammar(
        '(DEFPRODUCTION "loop" (:PRECOND (:CAT TXT :TEST ((TRUE)))'
        ' :ACTIONS (:TEMPLATE (:RULE TXT (SELF)))))'
    )
    session = GenerationSession(g, regs, max_depth=16)
    assert list(session.solutions(FeatureStructure())) == []
    assert len(session.trail) == 0


def test_session_is_single_use(regs):
    g = parse_grammar('(DEFPRODUCTION "hi" (:PRECOND (:CAT TXT :TEST ((TRUE)))'
                      ' :ACTIONS (:TEMPLATE "hello")))')
    session = GenerationSession(g, regs)
    assert session.first(FeatureStructure()).text == "hello"
    with pytest.raises(Exception, match="exactly once"):
        list(session.solutions(FeatureStructure()))


def test_abandoned_stream_restores_state(regs):
    g = parse_grammar(TABLE_GRAMMAR)
    session = GenerationSession(g, regs)
    stream = session.solutions(FeatureStructure())
    next(stream)
    stream.close()  # caller stops early; cleanup must still run
    assert len(session.trail) == 0
    assert session.graph.is_empty()


# --- assignment enumeration ----------------------------------------------------

def test_iter_assignments_cross_product(regs):
    g = parse_grammar(TABLE_GRAMMAR)
    session = GenerationSession(g, regs)
    list(session.solutions(FeatureStructure()))
    combos = list(iter_assignments(session._root_items, {}))
    assert len(combos) == 4  # |B1| = 2 times |B3| = 2; B2 contributes 1
    points = {p.id: p for p in session.table}
    assert all(a[points[2].id] == 0 for a in combos)
