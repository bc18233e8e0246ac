"""rooffit: building model reconstruction from noisy photogrammetric point clouds."""

__version__ = "0.1.0"

from .cloud import Point, PointCloud, ShapeLabel, estimate_normals
from .io import read_point_cloud, write_point_cloud
from .primitives import Cylinder, Plane, Sphere
from .raster import RasterGrid, rasterize_height, read_raster, write_raster

__all__ = [
    "__version__",
    "Point",
    "PointCloud",
    "ShapeLabel",
    "estimate_normals",
    "read_point_cloud",
    "write_point_cloud",
    "Plane",
    "Sphere",
    "Cylinder",
    "RasterGrid",
    "rasterize_height",
    "read_raster",
    "write_raster",
]
