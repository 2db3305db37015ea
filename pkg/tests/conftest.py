import numpy as np
import pytest
from hypothesis import settings

from optobae.params import fig3_params, fig4_params, preset_config

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def fig3():
    return fig3_params()


@pytest.fixture
def fig4():
    return fig4_params()


@pytest.fixture
def fig3_cfg():
    return preset_config("fig3")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting: one PASS/FAIL line per criterion -----------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    num, title = mark.args
    details = [v for k, v in item.user_properties if k == "detail"]
    _CRITERIA[num] = (title, rep.passed, "; ".join(details))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[num]
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
