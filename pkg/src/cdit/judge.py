"""Consistency judges.

Two interchangeable judge handles decide whether a retrieved sentence is
semantically consistent with the query:

* :class:`RuleJudge` compares gold grammatical components field-by-field
  against a lexicon and reports which (rule, field) pairs were violated.
* :class:`RemoteJudge` prompts an HTTP text endpoint with a fixed template
  and parses a one-word True/False verdict; it returns no per-field detail.
"""
from __future__ import annotations

import string
import threading
from dataclasses import dataclass

import requests

from .errors import (
    ExtractionUnparseable,
    ExtractionUnsupported,
    JudgeUnavailable,
    JudgeUnparseable,
    UnsupportedRuleSet,
)
from .model import Components, Sentence
from .rules import PHI1, PHI2, CMDRule, Lexicon, compare_components

JUDGE_PROMPT_PHI1 = (
    "You are a cautious language assistant.\n"
    "###[Rules] Here are some language rules:\n"
    "# If the two sentences can be identified as similar, then the subjects, "
    "predicates and objects of the two sentences are similar. Be especially "
    "mindful of predicate phrases that appear similar but actually have "
    "opposite meanings, which make sentences dissimilar.\n"
    "###[Instructions] Are the following statements similar with the question? "
    "Just say True if they are; otherwise just say False. Only output one word."
)

JUDGE_PROMPT_PHI1_PHI2 = (
    "You are a cautious language assistant.\n"
    "###[Rules] Here are some language rules:\n"
    "# If the two sentences can be identified as similar, then the subjects, "
    "verbs and objects of the two sentences are similar. Be especially "
    "mindful of verb phrases that appear similar but actually have opposite "
    "meanings, which make sentences dissimilar.\n"
    "# If the two sentences can be identified as similar, then the adverbials "
    "and attributives of the two sentences are similar.\n"
    "###[Instructions] Are the following statements similar with the question? "
    "Just say True if they are; otherwise, just say False. Only output one word."
)

EXTRACTION_PROMPT_VERSION = 1

EXTRACTION_PROMPT = (
    "You are a careful grammatical analyst.\n"
    "###[Instructions] Extract the grammatical components of the sentence "
    "below. Reply with one \"key: value\" line per component, using the keys "
    "sub, pre, obj, att and adv for the subject, the predicate phrase, the "
    "object, the attributive and the adverbial. Write - for a component the "
    "sentence does not have. Only output those five lines.\n"
    "Sentence:\n"
    "{sentence}"
)


@dataclass(frozen=True)
class Judgement:
    """Verdict for one (query, sentence) pair.

    ``rule_violations`` lists (rule name, component field) pairs; it is only
    populated by the rule judge.
    """

    consistent: bool
    rule_violations: tuple[tuple[str, str], ...] = ()
    raw_reply: str | None = None


def build_judge_prompt(rules: list[CMDRule], q_text: str, s_text: str) -> str:
    """Assemble the consistency prompt for the given rule set.

    Only the two shipped forms exist: [PHI1] and [PHI1, PHI2]. The two
    sentences are appended under "Sentences:" in query-then-context order.
    """
    names = frozenset(rules)
    if names == frozenset({PHI1}):
        header = JUDGE_PROMPT_PHI1
    elif names == frozenset({PHI1, PHI2}):
        header = JUDGE_PROMPT_PHI1_PHI2
    else:
        raise UnsupportedRuleSet(
            f"no prompt form for rule set {sorted(r.name for r in rules)!r}"
        )
    return f"{header}\nSentences:\n{q_text}\n{s_text}"


def parse_judge_reply(reply: str) -> bool:
    """Read the first word of the reply as a True/False verdict."""
    tokens = reply.split()
    if tokens:
        word = tokens[0].strip(string.punctuation).lower()
        if word == "true":
            return True
        if word == "false":
            return False
    raise JudgeUnparseable(f"no true/false verdict in reply {reply!r}")


_EXTRACTION_KEYS = ("sub", "pre", "obj", "att", "adv")
_ABSENT_VALUES = {"", "-", "none", "n/a", "null"}


def build_extraction_prompt(s_text: str) -> str:
    return EXTRACTION_PROMPT.format(sentence=s_text)


def parse_extraction_reply(reply: str) -> Components:
    """Parse "key: value" lines into Components.

    Lines that do not look like a known key are ignored; sub, pre and obj
    must all be present (possibly marked absent with "-").
    """
    found: dict[str, str | None] = {}
    for line in reply.splitlines():
        if ":" not in line:
            continue
        key, _, value = line.partition(":")
        key = key.strip().strip(string.punctuation + " ").lower()
        if key not in _EXTRACTION_KEYS:
            continue
        value = value.strip()
        found[key] = None if value.lower() in _ABSENT_VALUES else value
    missing = [k for k in ("sub", "pre", "obj") if k not in found]
    if missing:
        raise ExtractionUnparseable(
            f"extraction reply lacks {missing} lines: {reply!r}"
        )
    return Components(**found)


class RuleJudge:
    """Offline judge: compares gold components against the lexicon."""

    def __init__(self, lexicon: Lexicon):
        self.lexicon = lexicon
        self.calls = 0

    def extract_components(self, s: Sentence) -> Components:
        if s.components is not None:
            return s.components
        raise ExtractionUnsupported(
            f"sentence {s.id!r} has no gold components and the rule judge cannot extract"
        )

    def judge_consistency(
        self, q: Sentence, s: Sentence, rules: list[CMDRule]
    ) -> Judgement:
        self.calls += 1
        qc = self.extract_components(q)
        sc = self.extract_components(s)
        violations = []
        for rule in rules:
            for fld in rule.requires:
                if not compare_components(qc, sc, fld, self.lexicon):
                    violations.append((rule.name, fld))
        return Judgement(consistent=not violations, rule_violations=tuple(violations))


class RemoteJudge:
    """HTTP judge: POSTs {"prompt": ...} and parses {"text": ...} replies."""

    def __init__(self, endpoint: str, timeout: float = 30.0, parallelism: int = 4):
        self.endpoint = endpoint
        self.timeout = timeout
        self.calls = 0
        self._session = requests.Session()
        self._gate = threading.BoundedSemaphore(max(1, parallelism))

    def _complete(self, prompt: str) -> str:
        with self._gate:
            try:
                resp = self._session.post(
                    self.endpoint, json={"prompt": prompt}, timeout=self.timeout
                )
            except requests.RequestException as e:
                raise JudgeUnavailable(f"judge endpoint failed: {e}") from e
        if not 200 <= resp.status_code < 300:
            raise JudgeUnavailable(f"judge endpoint returned status {resp.status_code}")
        try:
            text = resp.json()["text"]
        except (ValueError, KeyError) as e:
            raise JudgeUnavailable(f"judge reply missing text: {e}") from e
        if not isinstance(text, str):
            raise JudgeUnavailable("judge reply text is not a string")
        return text

    def extract_components(self, s: Sentence) -> Components:
        if s.components is not None:
            return s.components
        reply = self._complete(build_extraction_prompt(s.text))
        return parse_extraction_reply(reply)

    def judge_consistency(
        self, q: Sentence, s: Sentence, rules: list[CMDRule]
    ) -> Judgement:
        self.calls += 1
        prompt = build_judge_prompt(rules, q.text, s.text)
        reply = self._complete(prompt)
        return Judgement(consistent=parse_judge_reply(reply), raw_reply=reply)


def extract_components(s: Sentence, judge) -> Components:
    """Extract (or read gold) components via the given judge handle."""
    return judge.extract_components(s)


def judge_consistency(q: Sentence, s: Sentence, rules: list[CMDRule], judge) -> Judgement:
    """Decide consistency of a retrieved sentence with the query."""
    return judge.judge_consistency(q, s, rules)
