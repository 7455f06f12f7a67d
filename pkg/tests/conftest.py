import numpy as np
import pytest

from inspectsim.geometry import box_mesh, cylinder_mesh
from inspectsim.scene import Scene, SceneObject

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def make_scene(objects, bounds_min=(-10, -10, -10), bounds_max=(10, 10, 10)):
    return Scene(objects, bounds_min, bounds_max)


@pytest.fixture
def unit_cube_scene():
    """A unit cube centered 2 m ahead of the origin on the +x axis."""
    cube = SceneObject(box_mesh(1, 1, 1), np.array([2.0, 0.0, 0.0]), IDENTITY_Q, 0, "box")
    return make_scene([cube])


@pytest.fixture
def target_room_scene():
    """Walled room with one labeled cylinder target in the middle."""
    from inspectsim.scene import _wall_objects

    objs = _wall_objects(8.0, 8.0, 4.0)
    objs.append(
        SceneObject(cylinder_mesh(0.35, 0.9), np.array([4.0, 4.0, 2.0]), IDENTITY_Q, 1, "cylinder")
    )
    return Scene(objs, (-0.1, -0.1, -0.1), (8.1, 8.1, 4.1))
