import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from selcon import runner

from ._registry import LEMMA1, RESULTS

settings.register_profile("default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# frozen by scripts/oracle_reference.py (10^6 Monte-Carlo draws, seed 0)
TESTING_B_STAR = 1.0
TESTING_Q0_ALPHA_01 = 0.094939
TESTING_ORACLE_POWER = 0.197849


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True, scope="session")
def exact_threshold_range():
    """Check the threshold range exactly on every run made anywhere in the suite."""
    orig = runner.run_wiring

    def checked(wiring, cfg, *args, **kwargs):
        tr = orig(wiring, cfg, *args, **kwargs)
        g1 = cfg.schedule.c
        lo, hi = -cfg.alpha * g1, cfg.B + (1 - cfg.alpha) * g1
        q = np.append(tr.q, tr.meta["final_state_q"])
        LEMMA1["runs"] += 1
        LEMMA1["steps"] += len(tr)
        bad = np.flatnonzero((q < lo) | (q > hi))
        if bad.size:
            LEMMA1["violations"].append((type(wiring).__name__, int(bad[0]) + 1, float(q[bad[0]])))
            raise AssertionError(f"threshold {q[bad[0]]} outside [{lo}, {hi}] at t={bad[0] + 1}")
        return tr

    runner.run_wiring = checked
    yield
    runner.run_wiring = orig


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    n_bad = len(LEMMA1["violations"])
    tr.write_line(
        f"threshold range over the whole suite: {'PASS' if n_bad == 0 else 'FAIL'} - "
        f"{LEMMA1['runs']} runs, {LEMMA1['steps']} steps, {n_bad} violations"
    )
