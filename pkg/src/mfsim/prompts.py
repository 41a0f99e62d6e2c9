"""Prompt templates: policy generation, mean-field summarization, judge batches.

Templates are the wire format spoken to any text backend; rendering is
deterministic and refuses to emit residual placeholders.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .core import ActionText, AgentState, ContextStrategy, ContextText, MeanFieldState


class RenderError(ValueError):
    """A template placeholder survived substitution."""


class TemplateId(str, Enum):
    policy = "policy"
    mean_field = "mean_field"
    judge = "judge"


@dataclass(frozen=True)
class PromptText:
    text: str
    template_id: TemplateId


_PLACEHOLDER_TOKENS = (
    "{topic}", "{profile_sentence}", "{mean_field}", "{recent_comments}",
    "{popular_comments}", "{previous_mean_field}", "{comments}", "{count}",
)


def _finish(text: str, template_id: TemplateId) -> PromptText:
    for token in _PLACEHOLDER_TOKENS:
        if token in text:
            raise RenderError(f"residual placeholder {token} in {template_id.value} prompt")
    return PromptText(text=text, template_id=template_id)


def render_policy_prompt(state: AgentState, context: ContextText,
                         strategy: ContextStrategy) -> PromptText:
    """Build the action-generation prompt: topic, profile paragraph, and exactly
    the peer context the strategy allows."""
    if context.strategy is not strategy:
        raise ValueError(
            f"context built for {context.strategy.value} but strategy is {strategy.value}"
        )
    lines = [
        "You are tasked with simulating a plausible user action (reposting or "
        "commenting) based on their profile and the current population information.",
        "",
        f"Discussion Topic: {state.topic}",
    ]
    if strategy is ContextStrategy.recent_k:
        lines.append(f"Recent Comments: {context.payload}")
    elif strategy is ContextStrategy.popular_k:
        lines.append(f"Popular Comments: {context.payload}")
    elif strategy is ContextStrategy.mean_field:
        lines.append(f"Current Mean Field: {context.payload}")
    lines += [
        f"User Profile: {state.rendered_state}",
        "",
        "Write the user's next post or comment on the topic. Output only the "
        "simulated text without any intermediate reasoning process.",
    ]
    return _finish("\n".join(lines), TemplateId.policy)


_MEAN_FIELD_ASPECTS = (
    "Stance Distribution: Are users predominantly supportive or oppositional?",
    "Opinion Distribution: What are the major viewpoints expressed?",
    "Emotion Distribution: Are emotions primarily anger, excitement, doubt, or "
    "anxiety? Overall, are sentiments positive, negative, or neutral?",
    "Behavior Distribution: Are users more inclined to repost or to comment?",
    "Perception of Topic Authenticity: To what extent do users believe or doubt "
    "the authenticity of the topic?",
    "Intent of Comments: Are users primarily asking questions, expressing "
    "opinions, or disseminating information?",
)


def render_meanfield_prompt(topic: str, previous_mf: MeanFieldState,
                            actions: list[ActionText]) -> PromptText:
    """Build the summary-update prompt from the previous summary and the latest
    batch of comments."""
    if not actions:
        raise ValueError("mean-field prompt needs at least one action")
    previous = previous_mf.content if isinstance(previous_mf.content, str) else str(previous_mf.content)
    lines = [
        "You are tasked with summarizing the distribution of user comments "
        "regarding a specific discussion topic.",
        "",
        f"Discussion Topic: {topic}",
        f"Previous Mean Field: {previous}",
        "Recent User Comments:",
    ]
    for i, action in enumerate(actions, start=1):
        lines.append(f"Comment {i}: {action.text}")
    lines += [
        "",
        "Based on the provided information, summarize the overall user discussion "
        "by addressing the following six aspects in order of importance:",
    ]
    for i, aspect in enumerate(_MEAN_FIELD_ASPECTS, start=1):
        lines.append(f"{i}. {aspect}")
    lines += [
        "",
        "Provide a concise summary, approximately 200 words in length. Ensure the "
        "response is structured clearly, focuses on key points, and remains easy "
        "to comprehend.",
    ]
    return _finish("\n".join(lines), TemplateId.mean_field)


_JUDGE_INSTRUCTIONS = """\
Role: You are an expert in public opinion content analysis.
Task: Analyze multiple user comments objectively to evaluate the sentiment, \
stance, and opinion orientation regarding the following topic:

Discussion Topic: {topic}

Instructions:
For each comment, perform analysis according to the following nine dimensions \
and strictly return the results in JSON format.
Special Note: The emoji "@_@" typically conveys feelings of "surprise, \
confusion, or being stunned".

1. rumor (Rumor propagation): Select from ["spread", "counter"].
   - "counter": Comments that aim to refute, disbelieve, question the \
authenticity, expect further clarification, or directly point out the falsity \
of the topic.
   - "spread": All other comments, including those expressing belief in the \
topic, reposting content, tagging usernames, repeating topic content, or \
expressing emotional reactions to the topic.
2. sentiment (Emotional state): Capture the user's emotional state conveyed \
through the comment (including punctuation and tone). Choose from ["angry", \
"calm", "happy", "sad", "fear", "surprise"]. Note: Simple reposts are \
categorized as "calm".
3. attitude (Attitude polarity): Determine whether the user's sentiment is \
positive, negative, or neutral. Choose from ["positive", "negative", \
"neutral"]. Note: Pay close attention to any implicit negative sentiment \
(e.g., sarcasm, criticism).
4. behavior (Behavior type): Select from ["comment", "share"].
   - "share": The comment is primarily forwarding or reposting content.
   - "comment": The comment expresses an evaluation, opinion, or reaction.
5. stance (Stance towards the topic): Select from ["support", "oppose", \
"neutral"]. Note: Pay attention to implicit opposition, dissatisfaction, or \
criticism.
6. belief (Belief in the topic): Select from ["believe", "doubt"].
   - "believe": The comment expresses belief in the topic (including reposting).
   - "doubt": The comment questions, refutes, or expresses skepticism towards \
the topic.
7. keywords (Keyword extraction): Extract important keywords from the comment \
and return them as an array (e.g., ["policy", "economy"]). If the comment is \
meaningless, return [""].
8. subjectivity (Subjectivity): Determine whether the comment is based on \
subjective opinions or objective facts. Select from ["subjective", "objective"].
9. intent (Intent classification): Select from ["question", "promotion", \
"opinion"].
   - "question": The comment primarily asks a question.
   - "promotion": The comment primarily disseminates or promotes information.
   - "opinion": The comment primarily expresses an opinion or viewpoint.

Input Format:
The following are {count} user comments:

{comments}

Output Format:
Strictly return a JSON array evaluating the {count} comments.
Do not output anything other than the JSON array.

Example Output:
[
  {{
    "rumor": "spread",
    "sentiment_state": "calm",
    "sentiment_tendency": "neutral",
    "behavior_type": "share",
    "stance": "neutral",
    "belief_degree": "believe",
    "keywords": ["share", "forum"],
    "subjectivity": "objective",
    "intent_classification": "promotion"
  }},
  {{
    "rumor": "counter",
    "sentiment_state": "angry",
    "sentiment_tendency": "negative",
    "behavior_type": "comment",
    "stance": "oppose",
    "belief_degree": "doubt",
    "keywords": ["fake", "impossible"],
    "subjectivity": "subjective",
    "intent_classification": "opinion"
  }}
]"""


def render_judge_prompt(topic: str, texts: list[str]) -> PromptText:
    """Build the batch classification prompt over the eight decision dimensions
    (plus keywords)."""
    if not texts:
        raise ValueError("judge prompt needs at least one comment")
    comments = "\n".join(f'Comment {i}: "{t}"' for i, t in enumerate(texts, start=1))
    text = _JUDGE_INSTRUCTIONS.format(topic=topic, count=len(texts), comments=comments)
    return _finish(text, TemplateId.judge)
