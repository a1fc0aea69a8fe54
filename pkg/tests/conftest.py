from __future__ import annotations

import numpy as np
import pytest

from shle.geometry import CameraRig
from shle.synthetic import SceneSpec, generate_scene

FLIP_Y = np.diag([1.0, -1.0, 1.0])

# noisy end-to-end scene shared by pipeline and acceptance tests
NOISY = dict(noise=0.25, spurious_fraction=0.01, decoy_boxes=3, detection_dropout=0.3, seed=7)


@pytest.fixture
def rig() -> CameraRig:
    return CameraRig(
        fx=700.0, fy=700.0, cx=640.0, cy=360.0, width=1280, height=720,
        baseline_m=0.12, mount_height_m=1.45, rotation=FLIP_Y,
    )


@pytest.fixture
def identity_rig() -> CameraRig:
    return CameraRig(
        fx=700.0, fy=700.0, cx=640.0, cy=360.0, width=1280, height=720,
        baseline_m=0.12, mount_height_m=0.0, rotation=np.eye(3),
    )


@pytest.fixture(scope="session")
def clean_scene():
    return generate_scene(SceneSpec())


@pytest.fixture(scope="session")
def noisy_scene():
    return generate_scene(SceneSpec(**NOISY))


def lowest_bar_row_height(spec: SceneSpec, t: int) -> float:
    """Height of the lowest pixel row whose centre ray meets a flat bar face.

    Row ``v`` sees the face when ``v <= v_edge``, with ``v_edge`` the lower edge's
    projection; its height is measured back at the face depth.
    """
    rig = spec.rig
    z = spec.depth_trajectory[t]
    v_edge = rig.cy - rig.fy * (spec.bar_height_m - rig.mount_height_m) / z
    row = np.floor(v_edge)
    return rig.mount_height_m - (row - rig.cy) * z / rig.fy


# --------------------------------------------------------------------------
# one PASS/FAIL line per acceptance criterion, printed after the run
# --------------------------------------------------------------------------

_CRITERIA: dict[int, tuple[str, bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    _CRITERIA[number] = (title, report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}")
