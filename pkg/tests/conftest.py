import math

import numpy as np
import pytest

from facedeblur import bases as B
from facedeblur import pipeline as P
from facedeblur import synthetic as S
from facedeblur.imagecore import BlurSpec


@pytest.fixture(scope="session")
def train_faces():
    return S.face_corpus(100, seed=0)


@pytest.fixture(scope="session")
def faces(train_faces):
    return B.build_face_bases(train_faces)


@pytest.fixture(scope="session")
def quick_model(faces):
    """Small quality model: enough to separate sharp from blurred faces."""
    specs = (BlurSpec("gaussian", sigma=3.0), BlurSpec("motion", length=15, angle=math.pi / 4))
    return P.train_quality_model(S.face_corpus(3, seed=5), faces, specs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from _instances import ACCEPTANCE_LINES

    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
