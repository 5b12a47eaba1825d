import math

import numpy as np
import pytest

from srnmlmc import kernels
from srnmlmc.models import decay_model, gene_model, michaelis_menten_model

EXACT_DECAY_MEAN = 10.0 * math.exp(-1.0)

needs_compiled = pytest.mark.skipif(
    kernels.BACKEND != "compiled",
    reason="statistical test needs the compiled kernels (pure-Python fallback is active)",
)

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def models():
    return {"decay": decay_model(), "gene": gene_model(), "mm": michaelis_menten_model()}


@pytest.fixture
def report():
    """Record one PASS/FAIL line (or INFO when ``ok`` is None) for the terminal summary."""

    def _report(name: str, ok, detail: str):
        tag = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        ACCEPTANCE_LINES.append(f"{tag}  {name}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def sensitive_mask(model):
    from srnmlmc.network import sensitive_set

    mask = np.zeros(model.network.num_reactions, dtype=np.uint8)
    mask[sorted(sensitive_set(model.observable, model.network))] = 1
    return mask
