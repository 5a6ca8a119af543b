"""Small hand-built tracks for unit tests."""
from __future__ import annotations

import numpy as np

from handcontact.trackdata import Frame, Track, box_mask


def disk(shape, center, radius):
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]]
    return (xs - center[0]) ** 2 + (ys - center[1]) ** 2 <= radius ** 2


def region_flow(shape, parts, background=(0.0, 0.0)):
    """Flow field equal to ``background`` except on (mask, vector) parts."""
    flow = np.empty(shape + (2,), dtype=np.float32)
    flow[...] = background
    for mask, v in parts:
        flow[mask] = v
    return flow


def static_track(n=3, shape=(30, 40), hand=((10, 15), 4), box=(25, 10, 35, 20), tid="static", flow=None):
    """Hand and box that never move; zero flow unless ``flow`` is given."""
    hm = disk(shape, *hand)
    frames = []
    for t in range(n):
        fwd = np.zeros(shape + (2,), np.float32) if flow is None else flow
        bwd = None if t == 0 else -fwd
        frames.append(Frame(hm, box, fwd, bwd))
    return Track(tid, shape[1], shape[0], 15.0, frames)


def moving_pair_track(n, hand_v, obj_v, shape=(48, 64), hand_c=(20.0, 24.0), radius=5,
                      box=(26.0, 18.0, 38.0, 30.0), tid="pair"):
    """Hand disk and object box translating by constant per-frame vectors (static camera)."""
    hand_v, obj_v = np.asarray(hand_v, float), np.asarray(obj_v, float)
    frames = []
    for t in range(n):
        c = np.asarray(hand_c) + t * hand_v
        b = np.asarray(box) + np.tile(t * obj_v, 2)
        hm = disk(shape, c, radius)
        bm = box_mask(b, shape)
        fwd = region_flow(shape, [(bm, obj_v), (hm, hand_v)])
        bwd = None if t == 0 else region_flow(shape, [(bm, -obj_v), (hm, -hand_v)])
        frames.append(Frame(hm, tuple(b), fwd, bwd))
    return Track(tid, shape[1], shape[0], 15.0, frames)
