import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def separated_particles(X, m, rng, gap=1e-3, tries=1000):
    """Draw particles whose projected pairwise differences all exceed ``gap``."""
    diffs = X[:, None, :] - X[None, :, :]
    off = ~np.eye(X.shape[0], dtype=bool)
    for _ in range(tries):
        W = rng.standard_normal((X.shape[1], m))
        proj = np.abs(np.einsum("abd,dm->abm", diffs, W))[off]
        if proj.min() > gap:
            return W
    raise RuntimeError("could not draw kink-free particles")


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
