"""
Prompt templates for subject and attribute identification.

Responses are requested in a two-line structured format so that any backend
can be parsed the same way:

    subject: <noun phrase>
    attributes: <comma-separated phrases or "none">
"""

SUBJECT_PROMPT = """You decompose object category names for an object detector.
Given a fine-grained category name, return the coarse-grained subject (the
object class itself, a single noun phrase) and the descriptive attributes that
modify it. Copy attribute phrases verbatim from the name. Answer with exactly
two lines and nothing else.

Name: a small brown dog
subject: dog
attributes: small, brown

Name: dark brown wooden lamp
subject: lamp
attributes: dark brown, wooden

Name: suitcase on the conveyor belt
subject: suitcase
attributes: on the conveyor belt

Name: {name}
"""

ATTRIBUTE_PROMPT = """You describe object categories for an object detector.
Given a category name, list the visual attributes (color, material, pattern,
transparency, shape, typical parts) that describe what instances of the
category usually look like. Answer with exactly one line and nothing else.

Category: dog
attributes: furry, four-legged, brown, with a tail

Category: {name}
"""


def subject_prompt(name: str) -> str:
    return SUBJECT_PROMPT.format(name=name)


def attribute_prompt(name: str) -> str:
    return ATTRIBUTE_PROMPT.format(name=name)
