"""Backend selection for the hot loops.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy fallback. Set ``SEXISMKIT_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("SEXISMKIT_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"


def available_backends():
    names = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        names["cython"] = _ckernels
    return names


def mean_cosine(cands, anchors, backend=None):
    """Per-candidate mean of cosine similarities to every anchor row."""
    impl = available_backends()[backend] if backend else _impl
    cands = np.ascontiguousarray(cands, dtype=np.float64)
    anchors = np.ascontiguousarray(anchors, dtype=np.float64)
    return impl.mean_cosine(cands, anchors)


def score_subsets(probs, gold, masks, hard=False, backend=None):
    """Macro-F1 of the soft or hard vote of every member bitmask in ``masks``.

    ``probs`` has shape (members, samples, classes); ``gold`` holds class
    indices.
    """
    impl = available_backends()[backend] if backend else _impl
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    gold = np.ascontiguousarray(gold, dtype=np.int64)
    masks = np.ascontiguousarray(masks, dtype=np.int64)
    return impl.score_subsets(probs, gold, masks, bool(hard))
