import pytest

from vodsim.catalog import Video
from vodsim.simcore import RunConfig, Simulation

# filled in by test_acceptance.py, printed after the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def toy_config(**kw):
    """Small quiet topology: no random departures or failures, no warm-up."""
    base = dict(j_lpsgs=2, ps_per_lpsg=2, clients_per_ps=4, warmup=False,
                early_depart_prob=0.0, failure_rate_per_hour=0.0)
    base.update(kw)
    return RunConfig(**base)


def toy_sim(n_videos=4, duration=120.0, **kw):
    cat = [Video(i, duration) for i in range(n_videos)]
    sim = Simulation(toy_config(**kw), catalog=cat, generate=False)
    sim.clear_placement()  # tests place prefixes by hand
    return sim


@pytest.fixture
def make_toy():
    return toy_sim


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")
