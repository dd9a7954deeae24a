import numpy as np
import pytest

from diffuse_tof.datagen import Workspace, sample_object_pose, sample_rig
from diffuse_tof.geometry import asymmetric_test_mesh
from diffuse_tof.grad import PosedMeshModel, PosedMeshParams
from diffuse_tof.render import SensorSpec


@pytest.fixture(scope="session")
def template():
    return asymmetric_test_mesh()


@pytest.fixture(scope="session")
def workspace():
    return Workspace()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_spec():
    return SensorSpec(grid_h=24, grid_w=24)


@pytest.fixture(scope="session")
def posed_scene(template, workspace, small_spec):
    """A posed mesh on the plane seen by a 4-sensor rig with a coarse ray grid."""
    rng = np.random.default_rng(7)
    pose = sample_object_pose(template, workspace, rng)
    params = PosedMeshParams.from_pose(pose, 0.7, 0.5)
    rig = sample_rig(rng, 4, small_spec)
    return params, PosedMeshModel(template, workspace.plane), rig


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Records one result line per acceptance criterion; the lines are repeated in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, name: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
