"""ddrlab: numerical laboratory for distance difference representations."""

__version__ = "0.1.0"

from .manifold import (  # noqa: F401
    EuclideanPlane,
    GridManifold,
    HyperbolicPlane,
    Manifold,
    Sphere,
    make_grid_manifold,
    make_model_manifold,
)
