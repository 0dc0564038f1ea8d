import hypothesis

hypothesis.settings.register_profile(
    "ci", derandomize=True, max_examples=60, deadline=None
)
hypothesis.settings.load_profile("ci")

_acceptance_lines: list[str] = []


def record_acceptance(line: str) -> None:
    _acceptance_lines.append(line)


def pytest_runtest_makereport(item, call):
    # One visible pass/fail line per acceptance criterion.
    if call.when != "call" or "test_acceptance" not in str(item.fspath):
        return
    label = item.name.split("[")[0].replace("test_", "", 1).upper()
    status = "PASS" if call.excinfo is None else "FAIL"
    _acceptance_lines.append(f"{label}: {status}")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in _acceptance_lines:
        terminalreporter.write_line(line)
