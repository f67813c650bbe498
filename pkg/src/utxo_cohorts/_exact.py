"""Exact integer group sums on top of numpy.

``np.bincount`` accumulates in float64, which is exact only while every
partial sum stays below 2**53.  Splitting operands into narrow limbs keeps
each bincount exact; the limbs are recombined as integers.
"""

from __future__ import annotations

from typing import List

import numpy as np

_LIMB = 22  # three limbs cover uint64
_MAX_ITEMS = 1 << 30  # per call, keeps limb sums < 2**52
_INT64_SAFE = 1 << 62


def _as_uint64(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    if values.dtype.kind == "i" and len(values) and values.min() < 0:
        raise OverflowError("negative value")
    return values.astype(np.uint64, copy=False)


def group_sums(groups: np.ndarray, values: np.ndarray, ngroups: int) -> np.ndarray:
    """Exact per-group sums of non-negative integers.

    Returns int64 when no sum can overflow it, else an object array of Python ints.
    """
    if len(groups) == 0:
        return np.zeros(ngroups, dtype=np.int64)
    groups = np.asarray(groups, dtype=np.intp)
    values = _as_uint64(values)
    wide = int(values.max()) * len(values) >= _INT64_SAFE
    out = np.zeros(ngroups, dtype=object if wide else np.int64)
    mask = np.uint64((1 << _LIMB) - 1)
    for start in range(0, len(groups), _MAX_ITEMS):
        g = groups[start:start + _MAX_ITEMS]
        v = values[start:start + _MAX_ITEMS]
        for i in range(3):
            limb = (v >> np.uint64(_LIMB * i)) & mask
            if not limb.any():
                continue
            s = np.rint(np.bincount(g, weights=limb, minlength=ngroups)).astype(np.int64)
            if wide:
                out += s.astype(object) * (1 << (_LIMB * i))
            else:
                out += s << (_LIMB * i)
    return out


def weighted_group_sums(groups: np.ndarray, values: np.ndarray, weights: np.ndarray,
                        ngroups: int) -> List[int]:
    """Exact per-group sums of ``values * weights`` as Python ints.

    values are uint64 and weights < 2**36, both non-negative; products reach
    2**100 so the result cannot live in int64.
    """
    out = [0] * ngroups
    if len(groups) == 0:
        return out
    groups = np.asarray(groups, dtype=np.intp)
    values = _as_uint64(values)
    weights = np.asarray(weights).astype(np.int64, copy=False)
    if weights.min() < 0 or weights.max() >= (1 << 36):
        raise OverflowError("weights outside [0, 2**36)")
    # 13-bit value limbs x 12-bit weight limbs: products < 2**25, so up to 2**28 items stay exact.
    vlimbs = [((values >> np.uint64(s)) & np.uint64(0x1FFF)).astype(np.int64) for s in range(0, 65, 13)]
    wlimbs = [(weights >> s) & 0xFFF for s in (0, 12, 24)]
    step = 1 << 27
    totals = np.zeros(ngroups, dtype=object)
    for i, vl in enumerate(vlimbs):
        if not vl.any():
            continue
        for j, wl in enumerate(wlimbs):
            shift = 13 * i + 12 * j
            for start in range(0, len(groups), step):
                sl = slice(start, start + step)
                s = np.bincount(groups[sl], weights=vl[sl] * wl[sl], minlength=ngroups)
                totals += np.rint(s).astype(np.int64).astype(object) * (1 << shift)
    return [int(t) for t in totals]
