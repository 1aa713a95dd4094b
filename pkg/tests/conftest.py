import os
from pathlib import Path

import pytest

from abstain_gp.data import convert_uci_wifi

ROOT = Path(__file__).resolve().parent.parent
REPORTED_RULE = "IF [C2 <= -53.0] OR ([C2 <= -52.0] AND [C1 <= -49.0]) THEN 1 ELSE 0\n"

# Where the UCI Wireless Indoor Localization data is looked for, in order.
# Either the raw wifi_localization.txt or a converted CSV (C1..C7,class).
UCI_CANDIDATES = (
    os.environ.get("ABSTAIN_GP_WIFI", ""),
    str(ROOT / "data" / "wifi_localization.csv"),
    str(ROOT / "data" / "wifi_localization.txt"),
)


def find_uci_wifi(tmp_dir):
    """Path to a CSV of the UCI wifi data, or None when it is not present."""
    for cand in UCI_CANDIDATES:
        if cand and Path(cand).is_file():
            if cand.endswith(".txt"):
                out = Path(tmp_dir) / "wifi_localization.csv"
                convert_uci_wifi(cand, out)
                return out
            return Path(cand)
    return None


@pytest.fixture(scope="session")
def uci_csv(tmp_path_factory):
    return find_uci_wifi(tmp_path_factory.mktemp("uci"))


@pytest.fixture
def reported_rule_file(tmp_path):
    p = tmp_path / "reported.rules"
    p.write_text(REPORTED_RULE)
    return p


# --- acceptance summary ----------------------------------------------------

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _acceptance.get(report.nodeid)
        if prev in (None, "PASS"):
            _acceptance[report.nodeid] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, verdict in _acceptance.items():
        terminalreporter.write_line(f"{verdict}  {nodeid.split('::', 1)[1]}")
