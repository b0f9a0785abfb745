import io

import pytest

from phdnet.ingest import HireRecord, InstitutionEntry, InstitutionRegistry

# 10 data rows: row 3 has a non-integer year, row 7 lacks the employer
RECORDS_10 = """person,degree_unit,employer_unit,graduation_year,employment_year
a,Tsinghua,Nankai,2005,2006
b,Peking,Nankai,2003,2004
c,Harvard,Tsinghua,2001,2003
d,Tsinghua,Nankai,2005,abc
e,Nankai,Nankai,2010,2011
f,清华大学,Fudan,2012,2013
g,Fudan,Fudan,2014,2016
h,Peking,,2015,2016
i,Stanford,Peking,2016,2018
j,Fudan,Peking,2017,2017
"""


@pytest.fixture
def records_text():
    return RECORDS_10


@pytest.fixture
def registry():
    return InstitutionRegistry([
        InstitutionEntry("tsinghua_u", "Tsinghua", ("清华大学", "Tsinghua University"),
                         tags=frozenset({"tsinghua"})),
        InstitutionEntry("peking_u", "Peking", ("北京大学",), tags=frozenset({"peking"})),
        InstitutionEntry("nankai_u", "Nankai"),
        InstitutionEntry("fudan_u", "Fudan"),
        InstitutionEntry("harvard", "Harvard", is_overseas=True),
        InstitutionEntry("stanford", "Stanford", is_overseas=True),
    ])


@pytest.fixture
def registry_csv():
    return io.StringIO(
        "canonical_id,display_name,aliases,is_overseas,tags\n"
        "tsinghua_u,Tsinghua,清华大学|Tsinghua University,false,tsinghua\n"
        "peking_u,Peking,北京大学,false,peking\n"
        "nankai_u,Nankai,,false,\n"
        "fudan_u,Fudan,,false,always-include\n"
        "harvard,Harvard,Harvard University,true,\n"
    )


def rec(employer, trainer, emp_year=2010, grad_year=None, person=None):
    grad_year = emp_year - 1 if grad_year is None else grad_year
    return HireRecord(person, trainer, employer, grad_year, emp_year)


# one verdict line per acceptance criterion, printed after the run
_VERDICTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed or (report.when == "setup" and report.skipped)
    if report.when == "call" or failed:
        prev = _VERDICTS.get(number, (title, True))[1]
        _VERDICTS[number] = (title, prev and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        title, ok = _VERDICTS[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}")
