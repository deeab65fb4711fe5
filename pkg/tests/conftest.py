import pathlib

import pytest

DEMO_DIR = pathlib.Path(__file__).resolve().parents[1] / "src" / "surfgen" / "demo"


@pytest.fixture(scope="session")
def meeting_text() -> str:
    return (DEMO_DIR / "meeting.gil").read_text(encoding="utf-8")


@pytest.fixture()
def meeting_fs(meeting_text):
    from surfgen.gil import parse_gil

    return parse_gil(meeting_text)


@pytest.fixture(scope="session")
def demo_dir() -> pathlib.Path:
    return DEMO_DIR
