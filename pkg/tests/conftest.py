import pytest

from gatv2tcn import datasynth, pipeline


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    datasynth.generate(datasynth.SynthConfig(), out)
    return out


@pytest.fixture(scope="session")
def synth_dataset(synth_dir):
    return pipeline.ingest_dir(synth_dir)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    def record(number: int, ok: bool | None, detail: str) -> bool | None:
        status = "SKIPPED" if ok is None else "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES[number] = f"criterion {number}: {status} - {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
