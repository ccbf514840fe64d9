"""Prompt templates for every agent role.

Placeholders use ``str.format`` syntax. The first line of each template is a
``TASK:`` marker that the offline agent dispatches on.
"""

from __future__ import annotations

import string
from typing import Mapping, Optional

from kgf.errors import KgfError


class PromptError(KgfError):
    pass


TEMPLATES: dict[str, str] = {
    "extract_eav": """TASK: extract_eav
You are a clinical information extraction agent. Read the narrative and list
every entity-attribute-value fact it states. Type each entity with one FHIR
resource type from: {fhir_types}.
Write one record per line, fields separated by tabs:
EAV<TAB>entity=<entity><TAB>type=<FHIR type><TAB>attribute=<attribute><TAB>value=<value>
Use value=absent for findings the text explicitly negates. Do not invent facts.
DOCUMENT:
{doc}
END DOCUMENT""",

    "generate_relations": """TASK: generate_relations
VARIANT: {variant}
{variant_instruction}
List typed relations between the entities and attributes of the narrative.
Write one relation per line as: head | predicate | tail
Use a short verb phrase as predicate (confirms, visualizes, determines, treats, indicates).
KNOWN ENTITIES: {entities}
KNOWN ATTRIBUTES: {attributes}
DOCUMENT:
{doc}
END DOCUMENT""",

    "refine_relations": """TASK: refine_relations
You are a refinement agent. Correct the predicate names of the candidate
relations using the narrative as context, drop relations the text does not
support, and return the final list, one per line as: head | predicate | tail
CANDIDATES:
{candidates}
END CANDIDATES
DOCUMENT:
{doc}
END DOCUMENT""",

    "validate_relations": """TASK: validate_relations
You are a conservative validation agent. Return only the candidate relations
that are directly consistent with the narrative, one per line as:
head | predicate | tail
CANDIDATES:
{candidates}
END CANDIDATES
DOCUMENT:
{doc}
END DOCUMENT""",

    "judge": """TASK: judge
Rate how plausible the relation is given the source excerpt.
RELATION: {triple}
CONTEXT:
{context}
END CONTEXT
Answer with a single number between 0 and 1 and nothing else.""",

    "perturb": """TASK: perturb
Produce {k} adversarial perturbations of the relation (negate, swap, or
substitute a term). For each perturbation decide whether the source excerpt
contradicts the ORIGINAL relation once the perturbation is considered.
Write one line per perturbation: head | predicate | tail<TAB>VERDICT
VERDICT is one of CONSISTENT, CONTRADICTORY, UNCLEAR.
RELATION: {triple}
CONTEXT:
{context}
END CONTEXT""",
}

# Phrasings used for the n self-consistency prompt variants.
VARIANT_INSTRUCTIONS = (
    "Focus on diagnostic findings and the tests that establish them.",
    "Focus on treatments, eligibility and therapeutic decisions.",
    "Read the narrative sentence by sentence and report every explicit link.",
    "Report relations a clinician would chart in a problem list.",
    "Report relations between biomarkers, imaging and procedures.",
    "Report only relations you are confident the text states.",
    "List causal and evidential links between findings.",
)


def placeholders(template: str) -> list[str]:
    return [name for _, name, _, _ in string.Formatter().parse(template) if name]


def render_prompt(template_id: str, context: Mapping[str, object],
                  templates: Optional[Mapping[str, str]] = None) -> str:
    table = TEMPLATES if templates is None else templates
    try:
        template = table[template_id]
    except KeyError:
        raise PromptError(f"unknown template {template_id!r}") from None
    for name in placeholders(template):
        if name not in context:
            raise PromptError(f"missing placeholder {name}")
    return template.format_map({k: str(v) for k, v in context.items()})
