"""Hot-kernel backend selection.

Default is the numba-compiled implementation; set GRAFF_NUMBA=0 to force the
pure-numpy fallback (and see `graff2d bench` for a speed comparison).
"""
import os

from . import numpy_impl

_flag = os.environ.get("GRAFF_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

if _want_numba:
    try:
        from . import numba_impl as _impl
        BACKEND = "numba"
    except ImportError:
        _impl = numpy_impl
        BACKEND = "numpy"
else:
    _impl = numpy_impl
    BACKEND = "numpy"

BIG = numpy_impl.BIG
edt_sqdist = _impl.edt_sqdist
chamfer_dist = _impl.chamfer_dist
pairwise_dist = _impl.pairwise_dist
polygon_sdf = _impl.polygon_sdf
raster_polygon = _impl.raster_polygon
raster_disks = _impl.raster_disks
cone_feasible = _impl.cone_feasible
im2col = _impl.im2col
col2im_add = _impl.col2im_add
