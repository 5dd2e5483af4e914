"""Random instance generators shared by the tests."""

import numpy as np

from fairpanel import MetricInstance


def euclid(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    return np.triu(D, 1) + np.triu(D, 1).T


def random_instance(rng, n, kind=None, max_weight=1) -> MetricInstance:
    """Small instance with plenty of ties and co-located points.

    ``kind`` is ``grid`` (integer points in the plane), ``line``,
    ``clusters`` (tight groups far apart) or ``uniform`` (continuous plane).
    """
    kind = kind or rng.choice(["grid", "line", "clusters", "uniform"])
    if kind == "grid":
        D = euclid(rng.integers(0, 4, (n, 2)))
    elif kind == "line":
        D = euclid(rng.integers(0, 12, n))
    elif kind == "clusters":
        centers = rng.uniform(0, 100, (int(rng.integers(1, 4)), 2))
        pts = centers[rng.integers(0, len(centers), n)] + rng.integers(0, 2, (n, 2))
        D = euclid(pts)
    else:
        D = euclid(rng.uniform(0, 1, (n, 2)))
    weight = rng.integers(1, max_weight + 1, n) if max_weight > 1 else None
    return MetricInstance(D, weight=weight)


def random_panel(rng, inst, k):
    owners = inst.expand()
    return tuple(sorted(int(owners[v]) for v in rng.choice(inst.N, size=k, replace=False)))
