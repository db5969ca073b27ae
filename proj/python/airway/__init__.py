"""Airway tree analysis: synthetic bronchial trees, hard-region segmentation
losses, skeleton graph construction and a point-voxel graph network."""

try:
    from ._airway import *  # noqa: F401,F403  (installed layout)
    from ._airway import __doc__ as _core_doc
except ImportError:  # pragma: no cover - build-tree layout used by ctest
    from _airway import *  # noqa: F401,F403
    from _airway import __doc__ as _core_doc

__version__ = "0.1.0"
