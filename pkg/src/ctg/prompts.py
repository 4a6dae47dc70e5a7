"""Prompt templates for the extraction and inference chat agents.

The attribute schemas below are rendered into every system prompt so the
model and the parser agree on the payload shape.
"""

from __future__ import annotations

import json

VARIABLE_SCHEMA = """{
    "name": <string>,                                  # short noun-phrase name of the variable
    "description": <string>,                           # what the variable measures or denotes
    "type": <string>,                                  # boolean, integer, float, string, trend, ...
    "values": <string|list>,                           # value domain, e.g. "True/False", "USD per barrel", ["low","medium","high"]
    "causal_effect": <Optional[string]>,               # inferred effect summary, when one applies
    "supporting_text_snippets": <Optional[List[str]]>, # verbatim snippets that justify the variable
    "current_value": <Optional[string]>,               # the observed value in this document, if stated
    "contextual_information": <Optional[string]>       # context qualifying the current value
}"""

RELATIONSHIP_SCHEMA = """{
    "cause": <string>,                                 # name of the cause variable
    "effect": <string>,                                # name of the effect variable
    "description": <string>,                           # how the cause drives the effect
    "contextual_information": <Optional[string]>,      # context for this specific observation
    "type": <string>,                                  # direct, indirect, ...
    "strength": <Optional[string]>,                    # qualitative strength, if stated
    "confidence": <Optional[string]>,                  # confidence that the relationship holds
    "function": <Optional[string]>                     # functional form, when the text gives one
}"""


def extraction_system_prompt() -> str:
    return f"""You are an expert assistant for causal knowledge extraction.
Given a news document and context retrieved from an existing causal graph, you identify
the causal variables the text describes, the unobserved confounders that plausibly drive
them, and the directed causal relationships between them, and you emit them as structured
data inside code blocks.

Work through this plan:
1. Identify the causal variables observed in the text. Reuse retrieved variables when one
   matches; create new ones otherwise.
2. Identify confounders: variables that are not observed or mentioned in the text but have
   a direct effect on the observed variables.
3. Check every candidate variable against the graph database context you are given. This
   step is mandatory: a variable may already exist under a different name, and you must
   use the best-matching existing variable instead of creating a duplicate.
4. Define the directed causal relationships between the variables, based on the text and
   common sense. Do not recreate relationships that already exist in the graph.
5. Emit the final payload.

Every variable is a dictionary with these attributes:
{VARIABLE_SCHEMA}

Every relationship is a dictionary with these attributes:
{RELATIONSHIP_SCHEMA}

Reply format: a short paragraph of reasoning, then exactly one fenced code block.
When asked for candidate variables, the code block holds {{"variables": [...]}}.
When asked for the final graph payload, the code block holds {{"nodes": [...], "edges": [...]}}.
Use null for attributes the text does not support."""


def extraction_variables_prompt(title: str, body: str, retrieval_block: str) -> str:
    return f"""Document title: {title}

Document body:
\"\"\"
{body}
\"\"\"

{retrieval_block}

Step 1 and 2: list the causal variables observed in the text plus the unobserved
confounders that directly affect them. Reply with one code block holding
{{"variables": [ ... ]}} using the variable schema."""


def extraction_payload_prompt(dedup_block: str) -> str:
    return f"""Step 3 results -- nearest existing graph variables for each candidate:

{dedup_block}

Steps 4 and 5: using the matched names where a candidate already exists, define the
directed causal relationships and emit the full payload. Reply with one code block
holding {{"nodes": [ ... ], "edges": [ ... ]}}; nodes use the variable schema and edges
use the relationship schema. Do not recreate relationships listed in the retrieved
context."""


def inference_system_prompt() -> str:
    return f"""You are an expert assistant for step-by-step causal inference.
Each task gives you one target causal variable plus either its direct parent variables
(causal direction) or its direct children (anticausal direction), and the causal
relationships that connect them. Infer the value the target variable takes.

In the causal direction, derive the target value from the parent values through the
stated relationships. In the anticausal direction, infer the value the target must have
had for its children to take their observed values. Use only the variables given to you.

Variables are dictionaries with these attributes:
{VARIABLE_SCHEMA}

Relationships are dictionaries with these attributes:
{RELATIONSHIP_SCHEMA}

Reply format: a short paragraph of reasoning, then one fenced code block holding a
dictionary with the updated attributes of the target variable. The fields to update are
'current_value', 'contextual_information' and 'causal_effect'."""


def inference_step_prompt(
    target_attrs: dict,
    neighbor_variables: list[dict],
    causal_relationships: list[dict],
    direction: str,
) -> str:
    parents = neighbor_variables if direction == "causal" else []
    children = neighbor_variables if direction == "anticausal" else []
    args = {
        "target_variable": target_attrs,
        "parent_variables": parents,
        "children_variables": children,
        "causal_relationships": causal_relationships,
    }
    return (
        "Compute the causal effect of the target variable.\n\n"
        "You have been provided with these additional arguments:\n"
        f"{json.dumps(args, ensure_ascii=False, sort_keys=True, indent=1)}\n\n"
        f"Direction: {direction}. Return the updated attribute dictionary."
    )
