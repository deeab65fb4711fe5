import random

import pytest

from surfgen.gil import (
    FeatureStructure,
    GilError,
    Path,
    Sym,
    fs_digest,
    fs_equal,
    get_path,
    parse_gil,
    serialize_gil,
)


def test_parse_meeting_document(meeting_fs):
    assert get_path(meeting_fs, "PRED") == Sym("request")
    args = get_path(meeting_fs, "THEME.ARGS")
    assert isinstance(args, tuple) and len(args) == 2
    assert get_path(args[0], "ROLE") == Sym("agent")
    assert get_path(args[1], "ROLE") == Sym("patient")
    # the topicalized constituent is the very same node as the agent argument
    topic = get_path(meeting_fs, "THEME.SMOOD.TOPIC")
    assert topic is args[0]


def test_parse_meeting_values(meeting_fs):
    assert get_path(meeting_fs, "THEME.PRED") == Sym("meet")
    assert get_path(meeting_fs, "THEME.TIME-ADJ.CONTENT.WEEKDAY") == 5
    agent = get_path(meeting_fs, "THEME.ARGS")[0]
    assert get_path(agent, "CONTENT.NAME.TITLE") == "Prof."
    assert get_path(agent, "CONTENT.NAME.SURNAME") == "Zweig"
    patient = get_path(meeting_fs, "THEME.ARGS")[1]
    assert get_path(patient, "CONTENT.QFORCE") == Sym("iota")


def test_empty_structure():
    fs = parse_gil("[]")
    assert len(fs) == 0
    assert get_path(fs, "ANYTHING") is None


def test_symbols_case_insensitive():
    a = parse_gil("[(Pred Request)]")
    b = parse_gil("[(PRED request)]")
    assert fs_equal(a, b)
    assert get_path(a, "pred") == Sym("REQUEST")


def test_strings_case_sensitive():
    a = parse_gil('[(NAME "Zweig")]')
    b = parse_gil('[(NAME "zweig")]')
    assert not fs_equal(a, b)


def test_string_and_symbol_are_distinct():
    a = parse_gil('[(A "pres")]')
    b = parse_gil("[(A pres)]")
    assert not fs_equal(a, b)


def test_empty_list_is_legal():
    fs = parse_gil("[(L < >)]")
    assert get_path(fs, "L") == ()


def test_dangling_coref_is_an_error():
    with pytest.raises(GilError, match="never defined"):
        parse_gil("[(A #1)]")


def test_duplicate_coref_definition():
    with pytest.raises(GilError, match="defined twice"):
        parse_gil("[(A #1= [(X 1)]) (B #1= [(Y 2)])]")


def test_duplicate_attribute():
    with pytest.raises(GilError, match="duplicate attribute"):
        parse_gil("[(A 1) (a 2)]")


def test_coref_cycle_rejected():
    with pytest.raises(GilError, match="cycle"):
        parse_gil("[(A #1= [(B #1)])]")


def test_unbalanced_brackets():
    with pytest.raises(GilError):
        parse_gil("[(A [(B 1)]")
    with pytest.raises(GilError):
        parse_gil("[(A < 1, 2)]")


def test_lexical_error_reports_position():
    with pytest.raises(GilError) as exc:
        parse_gil("[(A 1)\n (B $)]")
    assert exc.value.line == 2
    assert exc.value.col == 5


def test_coref_definition_binds_tighter_than_list_separator():
    fs = parse_gil("[(A < #1= [(K v)], #1 >)]")
    items = get_path(fs, "A")
    assert len(items) == 2
    assert items[0] is items[1]
    assert items[0].coref_tag == 1


def test_forward_reference_resolves(meeting_text):
    # TOPIC #1 precedes the #1= definition inside ARGS
    fs = parse_gil(meeting_text)
    assert get_path(fs, "THEME.SMOOD.TOPIC") is get_path(fs, "THEME.ARGS")[0]


# --- serialization -----------------------------------------------------------

def test_serialize_empty():
    assert serialize_gil(FeatureStructure()) == "[]"


def test_roundtrip_meeting(meeting_text):
    # fixpoint check: parse, serialize, parse again, compare structurally
    first = parse_gil(meeting_text)
    second = parse_gil(serialize_gil(first))
    assert fs_equal(first, second)
    third = parse_gil(serialize_gil(second))
    assert fs_equal(second, third)


def test_serialize_shared_child_emits_one_definition():
    shared = parse_gil("[(X #1= [(K v)]) (Y #1)]")
    out = serialize_gil(shared)
    assert out.count("#1=") == 1
    assert out.count("#1") == 2  # one definition, one reference
    again = parse_gil(out)
    assert get_path(again, "X") is get_path(again, "Y")


def test_serialize_escapes():
    fs = FeatureStructure([("A", 'line\nbreak\t"quoted"')])
    assert fs_equal(parse_gil(serialize_gil(fs)), fs)


# --- get_path ----------------------------------------------------------------

def test_get_path_through_nonstructure_is_absent():
    fs = parse_gil("[(A 5)]")
    assert get_path(fs, "A.B") is None


def test_get_path_distributivity(meeting_fs):
    p, q = Path.parse("THEME"), Path.parse("TIME-ADJ.CONTENT")
    via_full = get_path(meeting_fs, "THEME.TIME-ADJ.CONTENT")
    mid = get_path(meeting_fs, p)
    assert isinstance(mid, FeatureStructure)
    assert get_path(mid, q) is via_full


def test_path_rejects_empty_segments():
    with pytest.raises(ValueError):
        Path.parse("A..B")


# --- equality ----------------------------------------------------------------

def test_fs_equal_simple():
    assert fs_equal(parse_gil("[(A 1)]"), parse_gil("[(A 1)]"))


def test_fs_equal_ignores_attribute_order():
    assert fs_equal(parse_gil("[(A 1) (B 2)]"), parse_gil("[(B 2) (A 1)]"))


def test_fs_equal_detects_single_field_mutation(meeting_text):
    # oracle: textual mutation of one leaf must flip equality
    mutated = meeting_text.replace("(WEEKDAY 5)", "(WEEKDAY 4)")
    assert mutated != meeting_text
    assert not fs_equal(parse_gil(meeting_text), parse_gil(mutated))


def test_fs_equal_list_order_matters():
    assert not fs_equal(parse_gil("[(L < 1, 2 >)]"), parse_gil("[(L < 2, 1 >)]"))


def test_tag_numbering_is_invisible():
    a = parse_gil("[(X #1= [(K v)]) (Y #1)]")
    b = parse_gil("[(X #7= [(K v)]) (Y #7)]")
    c = parse_gil("[(X [(K v)]) (Y [(K v)])]")  # copies instead of sharing
    assert fs_equal(a, b)
    assert fs_equal(a, c)


def test_digest_agrees_with_equality(meeting_text):
    a, b = parse_gil(meeting_text), parse_gil(meeting_text)
    assert fs_digest(a) == fs_digest(b)


def _random_structure(rng: random.Random, depth: int) -> FeatureStructure:
    pairs = []
    for i in range(rng.randint(0, 3)):
        name = f"A{i}"
        kind = rng.random()
        if kind < 0.4 or depth >= 3:
            value = rng.choice([Sym("x"), Sym("y"), rng.randint(0, 9), "s"])
        elif kind < 0.7:
            value = tuple(
                _random_structure(rng, depth + 1) for _ in range(rng.randint(0, 2))
            )
        else:
            value = _random_structure(rng, depth + 1)
        pairs.append((name, value))
    return FeatureStructure(pairs)


def test_pretty_serialization_roundtrips(meeting_text):
    fs = parse_gil(meeting_text)
    pretty = serialize_gil(fs, pretty=True)
    assert "\n" in pretty
    assert fs_equal(parse_gil(pretty), fs)


def test_get_path_through_shared_node(meeting_fs):
    # SMOOD.TOPIC is the shared agent node; paths continue through it
    assert get_path(meeting_fs, "THEME.SMOOD.TOPIC.CONTENT.NAME.SURNAME") \
        == "Zweig"


def test_roundtrip_random_structures():
    rng = random.Random(7)
    for _ in range(100):
        fs = _random_structure(rng, 0)
        assert fs_equal(fs, parse_gil(serialize_gil(fs)))
