import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_cloud(xyz, rgb=None, **kw):
    """Build a PointCloud with gray color when none given."""
    from rooffit import PointCloud

    xyz = np.asarray(xyz, dtype=float)
    if rgb is None:
        rgb = np.full((len(xyz), 3), 128.0)
    return PointCloud(xyz, rgb, **kw)
