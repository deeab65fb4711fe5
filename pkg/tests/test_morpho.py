import pytest

from surfgen.gil import Sym
from surfgen.morpho import (
    WEEKDAYS,
    FunctionRegistry,
    InflectionRequest,
    MorphoError,
    default_lexicon,
    inflect,
    parse_lexicon,
    standard_functions,
)


@pytest.fixture(scope="module")
def lexicon():
    return default_lexicon()


@pytest.fixture(scope="module")
def registry(lexicon):
    return standard_functions(lexicon)


def _req(fn, args=(), **features):
    return InflectionRequest(fn, tuple(args), tuple(features.items()))


def test_infinitive_verb(registry):
    assert inflect(_req("verb", [Sym("meet")], VFORM=Sym("inf")), registry) == "treffen"


def test_finite_verb(registry):
    req = _req("verb", [Sym("meet")],
               TENSE=Sym("pres"), NUM=Sym("sg"), PERSON=3)
    assert inflect(req, registry) == "trifft"


def test_weekday_pp(registry):
    assert inflect(_req("weekday-pp", [5]), registry) == "am Freitag"


def test_weekday_mapping(registry):
    assert WEEKDAYS == ("Montag", "Dienstag", "Mittwoch", "Donnerstag",
                        "Freitag", "Samstag", "Sonntag")
    for n, name in enumerate(WEEKDAYS, start=1):
        assert inflect(_req("weekday", [n]), registry) == name
    with pytest.raises(MorphoError):
        inflect(_req("weekday", [8]), registry)


def test_unknown_lemma(registry):
    with pytest.raises(MorphoError, match="unknown lemma"):
        inflect(_req("verb", [Sym("xyzzy")], VFORM=Sym("inf")), registry)


def test_unknown_function(registry):
    with pytest.raises(MorphoError, match="unknown function"):
        inflect(_req("frobnicate", []), registry)


def test_fallback_form(registry):
    # sie-formal has a fallback for feature sets matching no cell
    assert inflect(_req("pronoun-2-formal", []), registry) == "Sie"


def test_most_specific_cell_wins():
    lex = parse_lexicon("w | a=1 -> narrow | a=1,b=2 -> wide\n")
    assert lex.inflect("w", {"A": "1", "B": "2"}) == "wide"
    assert lex.inflect("w", {"A": "1"}) == "narrow"


def test_ambiguous_paradigm_match():
    lex = parse_lexicon("w | a=1 -> one | b=2 -> two\n")
    with pytest.raises(MorphoError, match="ambiguous"):
        lex.inflect("w", {"A": "1", "B": "2"})


def test_no_matching_cell_without_fallback():
    lex = parse_lexicon("w | a=1 -> one\n")
    with pytest.raises(MorphoError, match="no form"):
        lex.inflect("w", {"A": "2"})


def test_feature_sensitivity(registry):
    sg = _req("verb", [Sym("fit")], TENSE=Sym("pres"), NUM=Sym("sg"), PERSON=3)
    pl = _req("verb", [Sym("fit")], TENSE=Sym("pres"), NUM=Sym("pl"), PERSON=3)
    assert inflect(sg, registry) == "passt"
    assert inflect(pl, registry) == "passen"


def test_determinism(registry):
    req = _req("noun-phrase", [Sym("document")],
               DET=Sym("def"), CASE=Sym("akk"), NUM=Sym("sg"))
    assert inflect(req, registry) == inflect(req, registry) == "den Bericht"


def test_duplicate_registration():
    reg = FunctionRegistry()
    reg.register_function("f", lambda a, f: "x")
    with pytest.raises(MorphoError, match="twice"):
        reg.register_function("F", lambda a, f: "y")


def test_side_effect_requires_undo():
    reg = FunctionRegistry()
    with pytest.raises(MorphoError, match="undo"):
        reg.register_function("boom", lambda m, a: None, undoable=True)


def test_side_effect_not_usable_as_word_form(registry):
    with pytest.raises(MorphoError, match="side effect"):
        inflect(_req("note", []), registry)


def test_lexicon_parse_errors():
    with pytest.raises(MorphoError, match="lacks '->'"):
        parse_lexicon("w | a=1 form\n")
    with pytest.raises(MorphoError, match="defined twice"):
        parse_lexicon("w | -> x\nW | -> y\n")
