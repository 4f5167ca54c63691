"""
Subject identification service.

Fine-grained class names are decomposed into a coarse subject and verbatim
attribute phrases, either by a deterministic rule-based parser or by an LLM
prompted with the subject-identification template. Every parse is validated
against the original name before it enters a vocabulary.
"""

import asyncio
from collections import Counter
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import structlog
import yaml

from app.core.errors import ArtifactIOError, GuidedError, ParseError

from .cache import ParseCache
from .llm_client import LLMClient
from .prompts import attribute_prompt, subject_prompt
from .types import FineGrainedClass, ParseStatus, SubjectParse, VocabularyResult

logger = structlog.get_logger(__name__)

STOP_WORDS = frozenset(
    {"a", "an", "the", "some", "any", "this", "that", "these", "those",
     "its", "their", "his", "her", "my", "and", "or", "of"}
)

# Tokens that open a prepositional attribute phrase after the head noun phrase.
PHRASE_BREAKS = frozenset(
    {"with", "without", "on", "in", "at", "under", "near", "behind", "beside",
     "above", "below", "inside", "next", "against", "over"}
)

INTENSIFIERS = frozenset({"dark", "light", "pale", "bright", "deep", "very"})

DEFAULT_ATTRIBUTE_WORDS = frozenset(
    {
        # color
        "red", "blue", "green", "yellow", "black", "white", "gray", "grey", "brown",
        "orange", "pink", "purple", "beige", "golden", "silver", "dark", "light",
        # material
        "wooden", "metal", "metallic", "plastic", "ceramic", "leather", "woolen",
        "cotton", "rubber", "stone", "paper",
        # pattern
        "striped", "dotted", "checkered", "plaid", "floral", "spotted", "patterned",
        "plain", "solid",
        # transparency
        "transparent", "opaque", "translucent",
        # size and shape
        "small", "large", "big", "tiny", "huge", "tall", "short", "long", "round",
        "square", "rectangular",
    }
)


def _tokens(text: str) -> List[str]:
    return [t.strip(",;") for t in text.split() if t.strip(",;")]


def _lower_tokens(text: str) -> List[str]:
    return [t.lower().strip(".!?\"'()") for t in _tokens(text)]


def _dedupe(phrases: Iterable[str], subject: str) -> List[str]:
    seen = set()
    result = []
    for phrase in phrases:
        if phrase and phrase != subject and phrase not in seen:
            seen.add(phrase)
            result.append(phrase)
    return result


def _split_phrases(tail: Sequence[str]) -> List[str]:
    phrases: List[List[str]] = []
    for token in tail:
        if token.lower() in PHRASE_BREAKS or not phrases:
            phrases.append([token])
        else:
            phrases[-1].append(token)
    return [" ".join(p) for p in phrases]


def _group_modifiers(modifiers: Sequence[str]) -> List[str]:
    grouped: List[str] = []
    i = 0
    while i < len(modifiers):
        token = modifiers[i]
        if token.lower() in INTENSIFIERS and i + 1 < len(modifiers):
            grouped.append(f"{token} {modifiers[i + 1]}")
            i += 2
        else:
            grouped.append(token)
            i += 1
    return grouped


def rule_based_parse(
    name: str,
    attribute_words: Optional[Iterable[str]] = None,
) -> SubjectParse:
    """Deterministic subject/attribute split of a class name.

    The head noun phrase ends at the first preposition; its last token is the
    subject, the other modifiers (minus stop words) and every prepositional
    phrase become attributes. Case and wording are kept verbatim.
    """
    if not name or not name.strip():
        raise ParseError("Class name must be non-empty")
    words = frozenset(w.lower() for w in attribute_words) if attribute_words else DEFAULT_ATTRIBUTE_WORDS
    tokens = _tokens(name)

    split_at = len(tokens)
    for i, token in enumerate(tokens):
        if i > 0 and token.lower() in PHRASE_BREAKS:
            split_at = i
            break
    head = [t for t in tokens[:split_at] if t.lower() not in STOP_WORDS]
    tail = tokens[split_at:]

    failed = SubjectParse(
        input_name=name,
        subject=name.strip(),
        attributes=[],
        parser_id="rules",
        status=ParseStatus.OTHER_ERROR,
    )
    if not head or head[0].lower() in PHRASE_BREAKS:
        return failed
    subject = head[-1]
    if subject.lower() in words or subject.lower() in INTENSIFIERS or subject.isdigit():
        return failed

    attributes = _group_modifiers(head[:-1]) + _split_phrases(tail)
    return SubjectParse(
        input_name=name,
        subject=subject,
        attributes=_dedupe(attributes, subject),
        parser_id="rules",
        status=ParseStatus.OK,
    )


def validate_parse(
    parse: SubjectParse,
    original: str,
    hypernym_lexicon: Optional[Mapping[str, str]] = None,
    attribute_words: Optional[Iterable[str]] = None,
) -> ParseStatus:
    """Classify a parse as grounded, hallucinated or otherwise broken."""
    words = frozenset(w.lower() for w in attribute_words) if attribute_words else DEFAULT_ATTRIBUTE_WORDS
    subject = parse.subject.strip().lower()
    if not subject or subject in words:
        return ParseStatus.OTHER_ERROR

    original_tokens = _lower_tokens(original)
    subject_tokens = _lower_tokens(subject)
    if subject_tokens and all(t in original_tokens for t in subject_tokens):
        return ParseStatus.OK

    # superclass case: a phrase of the original maps to the subject
    for phrase, hypernym in (hypernym_lexicon or {}).items():
        if hypernym.strip().lower() != subject:
            continue
        key = _lower_tokens(phrase)
        if not key:
            continue
        for start in range(len(original_tokens) - len(key) + 1):
            if original_tokens[start:start + len(key)] == key:
                return ParseStatus.OK
    return ParseStatus.HALLUCINATION


def parse_structured_response(text: str) -> Optional[Tuple[str, List[str]]]:
    """Read ``subject:`` / ``attributes:`` lines; None when the format is broken."""
    subject: Optional[str] = None
    attributes: List[str] = []
    for line in text.splitlines():
        key, sep, value = line.partition(":")
        if not sep:
            continue
        key = key.strip().lower()
        if key == "subject" and subject is None:
            subject = value.strip()
        elif key == "attributes":
            value = value.strip()
            if value.lower() not in ("", "none", "-"):
                attributes = [a.strip() for a in value.split(",") if a.strip()]
    if not subject:
        return None
    return subject, attributes


def summarize_statuses(items: Iterable) -> Dict[str, int]:
    """Failure-taxonomy counts over parses or classes."""
    counts = Counter(item.status.value for item in items)
    return {status.value: counts.get(status.value, 0) for status in ParseStatus}


def load_lexicon(path: Optional[str]) -> Dict[str, str]:
    """Read a user-supplied hypernym lexicon (YAML/JSON mapping phrase -> subject)."""
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ArtifactIOError(f"Lexicon file not found: {path}")
    except yaml.YAMLError as e:
        raise ArtifactIOError(f"Lexicon file is not a valid mapping: {path}", error=str(e))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ArtifactIOError(f"Lexicon file must hold a mapping: {path}")
    return {str(k): str(v) for k, v in data.items()}


class RuleBasedParser:
    """Offline parser; ``descriptions`` supplies class-level attributes for describe."""

    parser_id = "rules"

    def __init__(self, descriptions: Optional[Mapping[str, List[str]]] = None):
        self.descriptions = dict(descriptions or {})

    async def parse(self, name: str) -> SubjectParse:
        return rule_based_parse(name)

    async def describe(self, name: str) -> List[str]:
        if name in self.descriptions:
            return list(self.descriptions[name])
        return list(rule_based_parse(name).attributes)


class LLMParser:
    """Prompts an LLM; malformed answers are retried once, then handed to the rules."""

    parser_id = "llm"

    def __init__(self, client: LLMClient):
        self.client = client

    async def parse(self, name: str) -> SubjectParse:
        prompt = subject_prompt(name)
        for attempt in range(2):
            text = await self.client.complete(prompt)
            if not text or not text.strip():
                logger.warning("Empty LLM response", name=name)
                return SubjectParse(
                    input_name=name,
                    subject="",
                    parser_id=self.parser_id,
                    status=ParseStatus.OTHER_ERROR,
                )
            parsed = parse_structured_response(text)
            if parsed is not None:
                subject, attributes = parsed
                return SubjectParse(
                    input_name=name,
                    subject=subject,
                    attributes=_dedupe(attributes, subject),
                    parser_id=self.parser_id,
                )
            logger.warning("Malformed LLM response", name=name, attempt=attempt + 1)
        fallback = rule_based_parse(name)
        return fallback.model_copy(update={"parser_id": "llm+rules"})

    async def describe(self, name: str) -> List[str]:
        text = await self.client.complete(attribute_prompt(name))
        for line in text.splitlines():
            key, sep, value = line.partition(":")
            if sep and key.strip().lower() == "attributes":
                return _dedupe((a.strip() for a in value.split(",")), name)
        return []


class VocabularyService:
    """Builds validated vocabularies from class names."""

    def __init__(
        self,
        parser=None,
        cache: Optional[ParseCache] = None,
        hypernym_lexicon: Optional[Mapping[str, str]] = None,
    ):
        self.parser = parser or RuleBasedParser()
        self.cache = cache
        self.hypernym_lexicon = dict(hypernym_lexicon or {})
        self.parser_invocations = 0

    async def parse_class_name(self, name: str) -> SubjectParse:
        """Parse one name (cache first) and attach its validated status."""
        if not name or not name.strip():
            raise ParseError("Class name must be non-empty")
        if self.cache is not None:
            cached = self.cache.lookup(name)
            if cached is not None:
                return cached
        self.parser_invocations += 1
        raw = await self.parser.parse(name)
        status = raw.status
        if status != ParseStatus.OTHER_ERROR:
            status = validate_parse(raw, name, self.hypernym_lexicon)
        parse = raw.model_copy(update={"status": status})
        if self.cache is not None:
            self.cache.store(parse)
        return parse

    async def build_vocabulary(self, names: Sequence[str]) -> VocabularyResult:
        """One class per name, ids by input position; failures are collected, not raised."""
        if not names:
            raise ParseError("Vocabulary needs at least one class name")
        start = self.parser_invocations
        unique = list(dict.fromkeys(names))

        async def attempt(name: str):
            try:
                return await self.parse_class_name(name)
            except GuidedError as e:
                logger.error("Subject identification failed", name=name, error=str(e))
                return e

        outcomes = await asyncio.gather(*(attempt(n) for n in unique))
        by_name = dict(zip(unique, outcomes))

        classes: List[FineGrainedClass] = []
        failures: Dict[str, str] = {}
        for class_id, name in enumerate(names):
            outcome = by_name[name]
            if isinstance(outcome, Exception):
                failures[name] = str(outcome)
                classes.append(
                    FineGrainedClass(
                        class_id=class_id,
                        full_name=name,
                        subject=name.strip(),
                        status=ParseStatus.OTHER_ERROR,
                    )
                )
                continue
            classes.append(
                FineGrainedClass(
                    class_id=class_id,
                    full_name=name,
                    subject=outcome.subject,
                    attributes=_dedupe(outcome.attributes, outcome.subject),
                    status=outcome.status,
                )
            )

        counts = summarize_statuses(classes)
        ok = counts[ParseStatus.OK.value]
        if ok == len(classes) and not failures:
            status = "ok"
        elif ok == 0:
            status = "failed"
        else:
            status = "partial"
        invocations = self.parser_invocations - start
        logger.info(
            "Vocabulary built",
            classes=len(classes),
            status=status,
            parser_invocations=invocations,
            **counts,
        )
        return VocabularyResult(
            status=status,
            message=f"{ok}/{len(classes)} class names parsed",
            classes=classes,
            failures=failures,
            status_counts=counts,
            parser_invocations=invocations,
        )

    async def describe_class(self, name: str) -> List[str]:
        """Class-level attribute description (attribute-identification prompt)."""
        return await self.parser.describe(name)

    def decompose(self, name: str, class_id: int = 0) -> FineGrainedClass:
        """Synchronous rule-based decomposition used by dataset generators."""
        parse = rule_based_parse(name)
        status = parse.status
        if status == ParseStatus.OK:
            status = validate_parse(parse, name, self.hypernym_lexicon)
        return FineGrainedClass(
            class_id=class_id,
            full_name=name,
            subject=parse.subject,
            attributes=parse.attributes,
            status=status,
        )


# Global instance
vocabulary_service = VocabularyService()
