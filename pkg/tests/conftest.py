import json

import pytest

from hmm_forecast.market_data import StockBar, SymbolSeries, parse_date

# Five ACI rows, including a literal duplicate of 2008-03-09.
ACI_ROWS = [
    ("2008-03-06", 200.0, 202.0, 194.0, 195.5, 266850, 198.8),
    ("2008-03-09", 199.8, 199.8, 194.0, 195.0, 333600, 195.5),
    ("2008-03-09", 199.8, 199.8, 194.0, 195.0, 333600, 195.5),
    ("2008-03-10", 196.5, 209.5, 195.4, 207.3, 381650, 195.0),
    ("2008-03-11", 209.9, 217.9, 207.0, 215.5, 509550, 207.3),
]
ACI_HEADER = "date,open,high,low,close,volume,prev_close"


def aci_bars():
    return [StockBar(parse_date(d), o, h, l, c, v, p) for d, o, h, l, c, v, p in ACI_ROWS]


@pytest.fixture
def aci_series():
    return SymbolSeries("ACI", aci_bars())


@pytest.fixture
def aci_csv(tmp_path):
    path = tmp_path / "ACI.csv"
    lines = [ACI_HEADER] + [",".join(map(str, r)) for r in ACI_ROWS]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def aci_archive(tmp_path):
    folder = tmp_path / "archive"
    folder.mkdir()
    keys = ACI_HEADER.split(",")
    records = [dict(zip(keys, r), symbol="ACI") for r in ACI_ROWS]
    (folder / "2008.json").write_text(json.dumps(records))
    return folder


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion at the end of the run
# ---------------------------------------------------------------------------

_ACCEPTANCE = {}


_RANK = {"FAIL": 3, "PASS": 2, "SKIP": 1}


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance", None)
    if marker is None:
        return
    if report.failed:
        status = "FAIL"
    elif report.skipped:
        status = "SKIP"
    elif report.when == "call":
        status = "PASS"
    else:
        return
    number, title = marker
    prev = _ACCEPTANCE.get(number, (title, "SKIP"))[1]
    _ACCEPTANCE[number] = (title, max(prev, status, key=_RANK.get))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        report.acceptance = (mark.args[0], mark.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE, key=lambda k: (int(str(k).rstrip("ab")), str(k))):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")
