"""
Hard-negative captions by attribute substitution.

A negative keeps the positive's wording and subject and swaps a fixed number
of attribute phrases for other values of the same attribute type.
"""

import itertools
import random
import re
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import structlog

from app.core.errors import EvaluationError
from app.modules.vocabulary.types import FineGrainedClass

from .types import MAX_NEGATIVES, NegativeSet

logger = structlog.get_logger(__name__)

# Fallback typing for attribute words missing from the configured pools.
TYPE_LEXICON: Dict[str, Tuple[str, ...]] = {
    "color": (
        "red", "blue", "green", "yellow", "orange", "purple", "pink", "brown", "black",
        "white", "gray", "grey", "beige", "silver", "gold", "golden", "cyan", "navy",
    ),
    "material": (
        "wooden", "wood", "metal", "metallic", "plastic", "glass", "ceramic", "leather",
        "fabric", "paper", "cardboard", "stone", "rubber", "wicker", "steel", "cotton",
    ),
    "pattern": ("striped", "dotted", "checkered", "plain", "floral", "plaid", "spotted", "textured", "patterned"),
    "transparency": ("transparent", "opaque", "translucent"),
}


def attribute_type(phrase: str, pools: Mapping[str, Sequence[str]]) -> Optional[str]:
    """Type of an attribute phrase: configured pools first, then the lexicon."""
    for kind, values in pools.items():
        if phrase in values:
            return kind
    tokens = phrase.lower().split()
    for kind, words in TYPE_LEXICON.items():
        if any(token in words for token in tokens):
            return kind
    return None


def substitute_phrase(name: str, old: str, new: str) -> str:
    """Replace the first whole-word occurrence of ``old``."""
    pattern = re.compile(rf"\b{re.escape(old)}\b")
    if pattern.search(name):
        return pattern.sub(new, name, count=1)
    return name


def _caption(positive: FineGrainedClass, replacements: Sequence[Tuple[int, str]]) -> Tuple[str, List[str]]:
    attributes = list(positive.attributes)
    name = positive.full_name
    verbatim = True
    for index, new in replacements:
        replaced = substitute_phrase(name, attributes[index], new)
        verbatim = verbatim and replaced != name
        name = replaced
        attributes[index] = new
    if not verbatim:
        # wording not found in the name; rebuild it as "attributes subject"
        name = " ".join(attributes + [positive.subject])
    return name, attributes


def generate_negatives(
    positive: FineGrainedClass,
    substitutions: int,
    attribute_pools: Mapping[str, Sequence[str]],
    count: int = MAX_NEGATIVES,
    seed: int = 0,
    only_type: Optional[str] = None,
) -> NegativeSet:
    """Up to ``count`` negatives, each substituting exactly ``substitutions`` attributes.

    Substituted values are same-type alternatives not already used by the
    positive. When fewer distinct negatives exist the result is marked
    ``insufficient``.
    """
    if substitutions < 1:
        raise EvaluationError("substitutions must be at least 1", substitutions=substitutions)
    slots = []
    for index, phrase in enumerate(positive.attributes):
        kind = attribute_type(phrase, attribute_pools)
        if kind is None or (only_type is not None and kind != only_type):
            continue
        alternatives = [v for v in attribute_pools.get(kind, ()) if v not in positive.attributes]
        if alternatives:
            slots.append((index, alternatives))

    if len(slots) < substitutions:
        message = f"{positive.full_name!r} has {len(slots)} substitutable attributes, needs {substitutions}"
        logger.warning("Not enough substitutable attributes", name=positive.full_name, substitutions=substitutions)
        return NegativeSet(status="insufficient", message=message)

    candidates: Dict[str, List[str]] = {}
    for combo in itertools.combinations(slots, substitutions):
        indices = [index for index, _ in combo]
        for values in itertools.product(*(alternatives for _, alternatives in combo)):
            if len(set(values)) < len(values):
                continue
            name, attributes = _caption(positive, list(zip(indices, values)))
            if name != positive.full_name:
                candidates.setdefault(name, attributes)

    names = list(candidates)
    rng = random.Random(seed)
    chosen = rng.sample(names, min(count, len(names)))
    negatives = [
        FineGrainedClass(
            class_id=i,
            full_name=name,
            subject=positive.subject,
            attributes=candidates[name],
            status=positive.status,
        )
        for i, name in enumerate(chosen)
    ]
    if len(negatives) < count:
        logger.warning(
            "Attribute pools yield fewer negatives than requested",
            name=positive.full_name,
            requested=count,
            generated=len(negatives),
        )
        return NegativeSet(
            negatives=negatives,
            status="insufficient",
            message=f"{len(negatives)}/{count} negatives for {positive.full_name!r}",
        )
    return NegativeSet(negatives=negatives, message=f"{len(negatives)} negatives")
