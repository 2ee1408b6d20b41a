"""Shared pytest hooks: a one-line verdict per acceptance criterion at the end of the run."""


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" not in props or rep.when != "call" and outcome != "error":
                continue
            verdict = "PASS" if outcome == "passed" else "FAIL"
            lines.append((int(props["criterion"]),
                          f"criterion {props['criterion']:>2} {verdict}: {props.get('measured', '')}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines):
            terminalreporter.write_line(text)
