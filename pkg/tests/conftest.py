from __future__ import annotations

from pathlib import Path

import pytest

from kgf.agents.base import AgentResponse
from kgf.corpus import ClinicalReport, Cohort

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
REPO = TESTS.parent
CORPUS = FIXTURES / "corpus"
CONFIG = FIXTURES / "config.yaml"
VOCAB_DIR = REPO / "src" / "kgf" / "data" / "vocab"


class FixedProvider:
    """Returns canned text keyed on a substring of the prompt."""

    def __init__(self, answers, provider_id: str = "fixed", default: str = ""):
        self.answers = list(answers.items()) if isinstance(answers, dict) else list(answers)
        self.provider_id = provider_id
        self.default = default
        self.prompts: list[str] = []

    def complete(self, request):
        self.prompts.append(request.prompt)
        for needle, text in self.answers:
            if needle in request.prompt:
                return AgentResponse(text=text, provider_id=self.provider_id)
        return AgentResponse(text=self.default, provider_id=self.provider_id)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Expose the call-phase report so fixtures can see the outcome at teardown."""
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


@pytest.fixture
def pdac_report() -> ClinicalReport:
    text = (CORPUS / "PDAC" / "PDAC-001.txt").read_text(encoding="utf-8")
    return ClinicalReport.from_text("PDAC-001", text, Cohort.PDAC)
