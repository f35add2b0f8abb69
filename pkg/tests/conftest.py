from pathlib import Path

import numpy as np
import pytest

from sphinpaint.image import GrayImage, read_pgm

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def camera() -> GrayImage:
    """256x256 natural test image (stand-in where no reference image is bundled)."""
    return read_pgm(DATA / "camera256.pgm")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def smooth_image(w, h, seed=0):
    """Random smooth-ish test image with values in [0, 255]."""
    r = np.random.default_rng(seed)
    y, x = np.mgrid[0:h, 0:w].astype(float)
    f = np.zeros((h, w))
    for _ in range(4):
        kx, ky = r.uniform(-0.4, 0.4, 2)
        f += r.uniform(10, 40) * np.sin(kx * x + ky * y + r.uniform(0, 6.3))
    f += r.normal(0, 5, (h, w))
    return GrayImage(np.clip(f + 128, 0, 255))


# --- acceptance report -----------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record(number: int, passed: bool | None, detail: str) -> None:
    """Log one acceptance line; ``passed=None`` marks a criterion that could not run."""
    status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
    line = f"criterion {number:2d}: {status}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
