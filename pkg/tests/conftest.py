import numpy as np
import pytest

from cyclerl import env
from cyclerl.policy import PolicyParams


def golden_params(k_max: int = env.K_MAX) -> PolicyParams:
    """Hand-built weights that consume every digit, answer the sum, then stop."""
    d = env.feature_dim(k_max)
    w = np.zeros((env.VOCAB_SIZE, d))
    rem_off, last_off = 10, 10 + k_max + 1
    w[env.NEXT, rem_off + 1 : rem_off + k_max + 1] = 100.0
    for a in range(10):
        w[env.ans_token(a), a] = 50.0
    for a in range(10):
        w[env.EOS, last_off + env.ans_token(a)] = 200.0
    return PolicyParams(w)


@pytest.fixture
def golden():
    return golden_params()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_params(rng, scale=1.0, k_max=env.K_MAX) -> PolicyParams:
    return PolicyParams(scale * rng.standard_normal((env.VOCAB_SIZE, env.feature_dim(k_max))))


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
