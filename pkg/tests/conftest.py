import pytest

from cantor_lp.tree import BranchingSequence


@pytest.fixture
def reference_seq():
    """The canonical regression configuration."""
    return BranchingSequence(d=1, p=4.0, p1=6.0, M=(32, 64, 64, 64), K=4)


@pytest.fixture
def small_seq():
    return BranchingSequence(d=1, p=4.0, p1=6.0, M=(3, 4, 4, 4), K=4)


# -- acceptance reporting: one line per criterion ------------------------------------------

ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def _criterion(item):
    name = item.originalname or item.name
    if name.startswith("test_criterion_"):
        return int(name.split("_")[2])
    return None


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    n = _criterion(item)
    if n is None or rep.when != "call" and not rep.failed:
        return
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if rep.passed else "FAIL"
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
    ACCEPTANCE[n] = (status, item.name, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, name, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {name}  {detail}")
