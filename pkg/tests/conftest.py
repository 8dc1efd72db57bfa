import re

_criteria = {}
_notes = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    m = re.search(r"test_acceptance\.py::(test_criterion_\S+)", report.nodeid)
    if m:
        _criteria[m.group(1)] = report.outcome
        if report.user_properties:
            _notes[m.group(1)] = [f"{k} = {v}"
                                  for k, v in report.user_properties]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # one visible pass/fail line per acceptance criterion
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        outcome = _criteria[name]
        tag = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"{tag}: {name}")
        for note in _notes.get(name, ()):
            terminalreporter.write_line(f"        {note}")
