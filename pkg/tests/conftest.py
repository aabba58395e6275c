from pathlib import Path

import pytest

import wnetlab as w
from wnetlab import emucore
from wnetlab.linkevents import EventLog
from wnetlab.orchestrator import emulate

FIXTURES = Path(__file__).parent / "fixtures"
CONFIGS = sorted((FIXTURES / "configs").glob("*.yaml"))
EEL_FILES = sorted((FIXTURES / "eel").glob("*.eel"))

_original_run = emucore.Emulator.run


def _checked_run(self):
    """Every emulator run in the suite must satisfy packet conservation."""
    trace = _original_run(self)
    assert trace.conservation_holds(), trace.counters
    return trace


@pytest.fixture(autouse=True, scope="session")
def conservation_guard():
    emucore.Emulator.run = _checked_run
    yield
    emucore.Emulator.run = _original_run


def scenario(text: str, base_dir=None):
    return w.expand(w.parse(text, base_dir=base_dir))


def run_text(text: str, events: EventLog | None = None):
    sc = scenario(text)
    return sc, emulate(sc, events if events is not None else EventLog())


# ------------------------------------------------------- acceptance reporting

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, label): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    number, label = mark.args
    entry = _criteria.setdefault(number, {"label": label, "ok": True, "notes": []})
    if rep.failed:
        entry["ok"] = False
        entry["notes"].append(f"{item.name}: {rep.longreprtext.strip().splitlines()[-1]}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        tr.write_line(f"criterion {number:>2} {e['label']}: {'PASS' if e['ok'] else 'FAIL'}")
        for note in e["notes"]:
            tr.write_line(f"    {note}")
