import pytest

_OUTCOMES = {}
_DETAILS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and short title")


@pytest.fixture
def detail(request):
    """Dict a criterion test fills with measured numbers for its summary line."""
    info = {}
    _DETAILS[request.node.nodeid] = info
    return info


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        n, title = marker.args
        _OUTCOMES[n] = (title, rep.passed, item.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        title, passed, nodeid = _OUTCOMES[n]
        info = _DETAILS.get(nodeid, {})
        extra = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in info.items())
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {n:>2}: {title}" + (f" [{extra}]" if extra else ""))
