import pytest

from ozwoz import Experiment, PipelineConfig


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" in nodeid and "::" in nodeid:
                status = "PASS" if outcome == "passed" else "FAIL"
                lines.append((nodeid.split("::")[-1], status))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"ACCEPTANCE {name}: {status}")


@pytest.fixture
def experiment():
    """Small two-stage experiment with a trivially valid text pipeline."""
    exp = Experiment(id="exp-test", name="test")
    exp.add_stage("greeting", stage_id="greeting")
    exp.add_stage("closing", stage_id="closing")
    exp.create_utterance("greeting", "Hello, how can I help?", "en", utterance_id="u-hello")
    exp.create_utterance("greeting", "One moment please.", "en", utterance_id="u-moment")
    exp.create_utterance("closing", "Goodbye!", "en", utterance_id="u-bye")
    exp.pipeline = PipelineConfig.build(
        text_in="BlackBox", dm="Simulating", text_out="BlackBox")
    return exp
