"""Shared fixtures and the acceptance-summary reporter."""

from __future__ import annotations

import numpy as np
import pytest

import mrbee as mb

THETA_UNI = 0.3 / np.sqrt(2.0)

# (criterion label, passed, detail) tuples collected by the acceptance tests
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_criterion(label: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((label, passed, detail))
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance] {label}: {status} ({detail})")
    assert passed, f"{label}: {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status:4s}  {label}: {detail}")


@pytest.fixture(scope="session")
def uni_spec():
    """Univariable population at the standard benchmark settings."""
    return mb.univariable_spec(
        h2_exposure=0.3,
        h2_outcome=0.15,
        rho_uv=0.5,
        theta=THETA_UNI,
        n0=20000,
        n1=20000,
        n01=20000,
        m=1000,
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)


def random_panel(rng, m=40, p=2, standardized=True, seed_ids=0):
    """Small synthetic panel with well-conditioned effects for unit tests."""
    B = rng.standard_normal((m, p))
    theta = rng.standard_normal(p)
    alpha = B @ theta + 0.1 * rng.standard_normal(m)
    ids = np.array([f"rs{seed_ids + j}" for j in range(m)], dtype=object)
    return mb.HarmonizedPanel(
        variant_ids=ids,
        B_hat=B,
        alpha_hat=alpha,
        SE_B=np.ones((m, p)),
        SE_alpha=np.ones(m),
        n=np.full(p + 1, 10000, dtype=np.int64),
        overlap=None,
        pval_B=np.full((m, p), 0.5),
        pval_alpha=np.full(m, 0.5),
        trait_ids=("outcome",) + tuple(f"exp{k}" for k in range(1, p + 1)),
        standardized=standardized,
    )
