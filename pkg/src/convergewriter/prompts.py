"""Prompt template registry.

Every model instruction used by the pipeline lives here under a fixed id.
Placeholders use ``str.format`` syntax; bound values are inserted verbatim.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Mapping

from .errors import MissingBinding


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    temperature: float = 0.7
    max_output_tokens: int = 1024

    @property
    def placeholders(self) -> tuple[str, ...]:
        names = []
        for _, field, _, _ in string.Formatter().parse(self.body):
            if field is not None and field not in names:
                names.append(field)
        return tuple(names)

    def render(self, bindings: Mapping[str, str]) -> str:
        for name in self.placeholders:
            if name not in bindings:
                raise MissingBinding(name)
        return self.body.format_map({k: bindings[k] for k in self.placeholders})


KEYWORD_GEN = PromptTemplate(
    "keyword_gen",
    """You are preparing research for an encyclopedic article on the topic below.
List search keywords that together cover the breadth of the topic: its core concepts,
sub-fields, history, key entities and applications.

Topic: {topic}

Answer with one line of the form
KEYWORDS: keyword one, keyword two, keyword three
and nothing else.""",
    temperature=0.7,
    max_output_tokens=256,
)

REL_FILTER = PromptTemplate(
    "rel_filter",
    """Decide whether the document below is relevant to the topic. A document is relevant
if it contains information that could support a section of an article on the topic.

Topic: {topic}
Document title: {title}
Document text:
{text}

Answer with exactly one word: RELEVANT or IRRELEVANT.""",
    temperature=0.0,
    max_output_tokens=8,
)

DEPTH_EXP = PromptTemplate(
    "depth_exp",
    """The document below is relevant to the topic. Propose follow-up search keywords that
would retrieve deeper or complementary information about the topic which this document
mentions but does not fully explain.

Topic: {topic}
Document title: {title}
Document text:
{text}

Answer with one line of the form
KEYWORDS: keyword one, keyword two
with at most {max_keywords} keywords.""",
    temperature=0.7,
    max_output_tokens=128,
)

SUMMARIZE = PromptTemplate(
    "summarize",
    """Write a concise, factual summary of the text below. Keep names, numbers and dates.
Do not add information that is not in the text. Use at most {budget} tokens.

Title: {title}
Text:
{text}

Summary:""",
    temperature=0.7,
    max_output_tokens=400,
)

CLUSTER_SUMMARIZE = PromptTemplate(
    "cluster_summarize",
    """The summaries below all come from one group of related documents about "{topic}".
Write a single descriptive summary of what this group of documents covers: its shared
theme, the main facts and the sub-aspects present. Begin with one sentence naming the
theme. Use at most {budget} tokens.

Summaries:
{summaries}

Group summary:""",
    temperature=0.7,
    max_output_tokens=1000,
)

OUTLINE_GEN = PromptTemplate(
    "outline_gen",
    """You are planning an article on "{topic}". The available knowledge has been organised
into the document clusters below. Each cluster is labeled [CLUSTER j].

{clusters}

Write the article outline. Rules:
- Strictly comply with Markdown syntax.
- Start with "# {topic}", then use "## " for every main section.
- The first main section is "## Introduction" and the last is "## Conclusion".
- Every other main section must correspond to exactly one cluster: put the comment
  <!-- cluster: j --> right after its heading, with j the cluster number.
- Use every cluster exactly once; order sections for the most logical argument flow.
- Below each main section list 2-4 subpoints as "- " bullets, drawn only from the
  cluster summary.
{feedback}""",
    temperature=0.7,
    max_output_tokens=2000,
)

SECTION_GEN = PromptTemplate(
    "section_gen",
    """You are writing one section of an article on "{topic}".

Section title: {title}
Points to cover:
{subpoints}

Evidence documents:
{evidence}

Write the body of this section as several well-developed paragraphs separated by blank
lines. Use ONLY the evidence documents above; do not add outside facts. Cite the
supporting document after each claim with its number in square brackets, e.g. [2].
Do not write the section heading.""",
    temperature=0.7,
    max_output_tokens=3000,
)

INTRO_GEN = PromptTemplate(
    "intro_gen",
    """Write the introduction of an article on "{topic}". The article body consists of the
sections digested below.

{digests}

Write one or two paragraphs that introduce the topic and preview the sections in order.
Do not use citations and do not write a heading.""",
    temperature=0.7,
    max_output_tokens=800,
)

CONCLUSION_GEN = PromptTemplate(
    "conclusion_gen",
    """Write the conclusion of an article on "{topic}". The article body consists of the
sections digested below.

{digests}

Write one or two paragraphs that draw the sections together. Introduce no new facts,
do not use citations and do not write a heading.""",
    temperature=0.7,
    max_output_tokens=800,
)

REFINE = PromptTemplate(
    "refine",
    """You are polishing one section of an article on "{topic}" for fluency, grammar and
a consistent style. The end of the previous section is given for stylistic continuity.

Previous section ending:
{previous}

Section "{title}":
{text}

Return only the polished section text. Keep every citation marker such as [3] exactly
as written and attached to the same claim. Do not add facts or headings.""",
    temperature=0.7,
    max_output_tokens=3000,
)

RUBRIC_JUDGE = PromptTemplate(
    "rubric_judge",
    """You are grading an article on the topic "{topic}".
Dimension: {dimension}
Definition: {definition}

Article:
{article}

Score the article on this dimension from 0 to 5 (decimals allowed).
Answer with one line of the form SCORE: <number>.""",
    temperature=0.0,
    max_output_tokens=16,
)

SUPPORT_JUDGE = PromptTemplate(
    "support_judge",
    """Judge strictly whether the document supports the paragraph: the document must be
relevant to what the paragraph states and must not conflict with it.

Paragraph:
{paragraph}

Document:
{document}

Answer with exactly one word: SUPPORTED or UNSUPPORTED.""",
    temperature=0.0,
    max_output_tokens=8,
)

REGISTRY: dict[str, PromptTemplate] = {
    t.template_id: t
    for t in (
        KEYWORD_GEN,
        REL_FILTER,
        DEPTH_EXP,
        SUMMARIZE,
        CLUSTER_SUMMARIZE,
        OUTLINE_GEN,
        SECTION_GEN,
        INTRO_GEN,
        CONCLUSION_GEN,
        REFINE,
        RUBRIC_JUDGE,
        SUPPORT_JUDGE,
    )
}

REASK_NOTE = (
    "\n\nYour previous answer could not be used because it did not follow the required "
    "answer format. Answer again, following the format exactly."
)


def get_template(template_id: str) -> PromptTemplate:
    try:
        return REGISTRY[template_id]
    except KeyError:
        raise KeyError(f"unknown prompt template {template_id!r}") from None


def render_prompt(template: str | PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Substitute ``bindings`` into a registered template (or an ad-hoc one)."""
    if isinstance(template, str):
        template = REGISTRY.get(template) or PromptTemplate("adhoc", template)
    return template.render(bindings)
