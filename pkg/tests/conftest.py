import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cascadesearch.frames import Video, VideoMeta, generate_synthetic  # noqa: E402
from cascadesearch.oracle import split_train_eval  # noqa: E402

import scenes  # noqa: E402

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN_DIR


@pytest.fixture(scope="session")
def small_clip():
    return generate_synthetic(scenes.SMALL)


@pytest.fixture(scope="session")
def golden_clip():
    return generate_synthetic(scenes.GOLDEN)


@pytest.fixture(scope="session")
def golden_split(golden_clip):
    video, _ = golden_clip
    return split_train_eval(len(video), scenes.SPLIT)


def segment(video: Video, labels, rng: range):
    data = video.data[rng.start:rng.stop]
    m = video.meta
    return Video(VideoMeta(m.width, m.height, m.channels, m.fps, len(data)), data), labels[rng.start:rng.stop]


@pytest.fixture(scope="session")
def golden_search(golden_clip, golden_split):
    from cascadesearch.cbo import search

    video, labels = golden_clip
    return search(video, labels, golden_split, scenes.TARGETS, scenes.TIMING)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
