"""Independent reference implementations shared by several test modules."""

import numpy as np

from sniffy.geometry import Segment, Vec2


def march(origin, direction, segments, max_range, step=1e-4):
    """Independent oracle: walk the ray in small steps and report the first step that crosses a segment."""
    ts = np.arange(0.0, max_range + step, step)
    px = origin[0] + ts * direction[0]
    py = origin[1] + ts * direction[1]
    best = max_range
    for (ax, ay), (bx, by) in segments:
        ex, ey = bx - ax, by - ay
        side = ex * (py - ay) - ey * (px - ax)
        s = np.sign(side)
        idx = np.nonzero(s[:-1] * s[1:] <= 0)[0]
        for k in idx:
            # where along the segment the crossing happens
            u = ((px[k] - ax) * ex + (py[k] - ay) * ey) / (ex * ex + ey * ey)
            if -1e-3 <= u <= 1 + 1e-3:
                best = min(best, ts[k])
                break
    return best


def random_scene(rng, n=50):
    segs = []
    while len(segs) < n:
        a = rng.uniform(0, 10, 2)
        b = a + rng.uniform(-3, 3, 2)
        if np.hypot(*(b - a)) > 1e-3:
            segs.append(Segment(Vec2(*a), Vec2(*b)))
    return segs
