import pytest

from app.core.errors import EvaluationError
from app.modules.evaluation.negatives import attribute_type, generate_negatives, substitute_phrase
from app.modules.vocabulary.types import FineGrainedClass
from tests.factories import caption

POOLS = {"color": ["red", "blue", "green"], "material": ["wooden", "metal", "plastic"]}


def changed(positive, negative):
    return sum(a != b for a, b in zip(positive.attributes, negative.attributes))


def test_single_substitution_exhausts_small_pools():
    positive = caption("cup", "red", "wooden")
    result = generate_negatives(positive, 1, POOLS, count=10)
    assert result.status == "insufficient"
    assert sorted(n.full_name for n in result.negatives) == [
        "blue wooden cup",
        "green wooden cup",
        "red metal cup",
        "red plastic cup",
    ]
    assert all(changed(positive, n) == 1 for n in result.negatives)
    assert all(n.subject == "cup" for n in result.negatives)


def test_double_substitution():
    positive = caption("lamp", "green", "metal")
    result = generate_negatives(positive, 2, POOLS, count=4)
    assert result.status == "ok"
    assert len(result.negatives) == 4
    assert all(changed(positive, n) == 2 for n in result.negatives)
    assert [n.class_id for n in result.negatives] == [0, 1, 2, 3]


def test_count_and_seed():
    positive = caption("cup", "red", "wooden")
    first = generate_negatives(positive, 1, POOLS, count=3, seed=5)
    again = generate_negatives(positive, 1, POOLS, count=3, seed=5)
    assert first.status == "ok"
    assert len(first.negatives) == 3
    assert first == again


def test_typed_substitution():
    positive = caption("cup", "red", "wooden")
    result = generate_negatives(positive, 1, POOLS, count=2, only_type="color")
    assert sorted(n.full_name for n in result.negatives) == ["blue wooden cup", "green wooden cup"]
    assert all(n.attributes[1] == "wooden" for n in result.negatives)


def test_too_few_attributes():
    result = generate_negatives(caption("cup", "red", "wooden"), 3, POOLS)
    assert result.status == "insufficient"
    assert result.negatives == []
    assert "needs 3" in result.message


def test_substitutions_must_be_positive():
    with pytest.raises(EvaluationError):
        generate_negatives(caption("cup", "red", "wooden"), 0, POOLS)


def test_name_is_rebuilt_when_wording_differs():
    positive = FineGrainedClass(class_id=0, full_name="cup in red", subject="cup", attributes=["red", "plastic"])
    result = generate_negatives(positive, 1, POOLS, count=10, only_type="material")
    assert sorted(n.full_name for n in result.negatives) == ["red metal cup", "red wooden cup"]


def test_attribute_type_lookup():
    assert attribute_type("blue", POOLS) == "color"
    assert attribute_type("light grey", POOLS) == "color"
    assert attribute_type("striped", POOLS) == "pattern"
    assert attribute_type("shiny", POOLS) is None


def test_substitute_phrase_matches_whole_words():
    assert substitute_phrase("redwood red table", "red", "blue") == "redwood blue table"
    assert substitute_phrase("wooden cup", "metal", "glass") == "wooden cup"
