def pytest_runtest_logreport(report):
    # one visible line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\n[acceptance] {name}: {verdict}")
