"""Fractional allocation by greedy ball capture.

Balls grow around every point at the same rate.  Growth is simulated by
events: the candidate radii are the distinct pairwise distances in increasing
order.  At each radius the qualifying centers are opened in ascending id
order, re-checking after every opening because deductions can disqualify
others.  All masses are integers in units of ``1/N``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .metric import MetricInstance


@dataclass(frozen=True)
class Capture:
    """One opened ball: its center, radius, and the mass taken per point."""

    center: int
    radius: float
    taken: tuple[tuple[int, int], ...]  # (point, amount) in capture order


def greedy_capture(
    dist: np.ndarray,
    mass: np.ndarray,
    threshold: int,
    *,
    live_centers_only: bool = False,
    max_balls: int | None = None,
) -> tuple[list[Capture], np.ndarray]:
    """Grow balls until the remaining mass can no longer fill one.

    Parameters
    ----------
    dist : (n, n) distances.
    mass : (n,) nonnegative integer masses (consumed on a copy).
    threshold : mass that opens a ball; exactly this much is deducted,
        closest-to-center first, ties by id.
    live_centers_only : only points with remaining mass may be centers.
    max_balls : stop after this many openings.

    Returns
    -------
    captures, remaining mass
    """
    n = dist.shape[0]
    y = np.array(mass, dtype=np.int64)
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    # edge list sorted by distance; ties processed together
    ci, pj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    flat_d = dist.ravel()
    order = np.argsort(flat_d, kind="stable")
    ed, ec, ep = flat_d[order], ci.ravel()[order], pj.ravel()[order]
    # per-center neighbor order for deductions: (distance, id)
    nbr_order = np.lexsort((np.broadcast_to(np.arange(n), (n, n)), dist), axis=1)

    ball_mass = np.zeros(n, dtype=np.int64)
    captures: list[Capture] = []
    total = int(y.sum())
    pos, m = 0, len(ed)
    while pos < m and total >= threshold:
        if max_balls is not None and len(captures) >= max_balls:
            break
        r = ed[pos]
        end = pos
        while end < m and ed[end] == r:
            end += 1
        np.add.at(ball_mass, ec[pos:end], y[ep[pos:end]])
        pos = end
        while True:
            eligible = ball_mass >= threshold
            if live_centers_only:
                eligible &= y > 0
            if not eligible.any() or (max_balls is not None and len(captures) >= max_balls):
                break
            c = int(np.flatnonzero(eligible)[0])
            need = threshold
            taken = []
            for p in nbr_order[c]:
                if dist[c, p] > r:
                    break
                if y[p] == 0:
                    continue
                a = min(need, int(y[p]))
                y[p] -= a
                need -= a
                taken.append((int(p), a))
                # every center whose ball currently holds p loses a
                ball_mass[dist[:, p] <= r] -= a
                if need == 0:
                    break
            assert need == 0, "qualifying ball could not supply its threshold"
            total -= threshold
            captures.append(Capture(c, float(r), tuple(taken)))
    return captures, y


@dataclass(frozen=True, eq=False)
class FractionalAllocation:
    """k x n allocation stored as integers in units of ``1/N``.

    ``units[j, i] / N`` is the share of point ``i`` assigned to ball ``j``.
    Rows sum to ``N`` units (mass 1), column ``i`` to ``k * weight[i]``.
    """

    units: np.ndarray
    N: int
    centers: tuple[int, ...]
    radii: tuple[float, ...]

    @property
    def k(self) -> int:
        return self.units.shape[0]

    @property
    def n(self) -> int:
        return self.units.shape[1]

    @property
    def X(self) -> list[list[Fraction]]:
        return [[Fraction(int(u), self.N) for u in row] for row in self.units]

    def entry(self, j: int, i: int) -> Fraction:
        return Fraction(int(self.units[j, i]), self.N)

    def support(self, j: int) -> list[int]:
        return np.flatnonzero(self.units[j]).tolist()

    def check(self, inst: MetricInstance | None = None):
        """Assert the allocation invariants exactly."""
        k, N = self.k, self.N
        assert np.all(self.units >= 0)
        assert np.all(self.units.sum(axis=1) == N), "row sums must equal 1"
        if inst is not None:
            assert np.array_equal(self.units.sum(axis=0), k * inst.weight), "column sums must equal k*w/N"
            for j, (c, r) in enumerate(zip(self.centers, self.radii)):
                assert np.all(inst.dist[c, self.units[j] > 0] <= r)
        assert list(self.radii) == sorted(self.radii)
        return True

    def dumps(self) -> str:
        """Text dump: ``ball j center c radius r`` lines then ``row col num/den`` lines."""
        lines = [f"ball {j} center {c} radius {r!r}" for j, (c, r) in enumerate(zip(self.centers, self.radii))]
        for j, i in zip(*np.nonzero(self.units)):
            f = self.entry(int(j), int(i))
            lines.append(f"{j} {i} {f.numerator}/{f.denominator}")
        return "\n".join(lines) + "\n"


def fractional_allocation(inst: MetricInstance, k: int) -> FractionalAllocation:
    """Fair (k/N)-fractional allocation of the population into ``k`` balls."""
    N = inst.N
    if not 1 <= k <= N:
        raise ValueError(f"k must lie in [1, N={N}], got {k}")
    mass = k * inst.weight.astype(np.int64)
    caps, rest = greedy_capture(inst.dist, mass, N)
    assert len(caps) == k and not rest.any(), "allocation did not exhaust the population"
    units = np.zeros((k, inst.n), dtype=np.int64)
    for j, cap in enumerate(caps):
        for p, a in cap.taken:
            units[j, p] += a
    return FractionalAllocation(
        units=units,
        N=N,
        centers=tuple(c.center for c in caps),
        radii=tuple(c.radius for c in caps),
    )


def export_ball_quotas(alloc: FractionalAllocation) -> list[tuple[int, ...]]:
    """For every point, the balls it is (fractionally) assigned to."""
    return [tuple(np.flatnonzero(alloc.units[:, i]).tolist()) for i in range(alloc.n)]


def ball_quotas_csv(alloc: FractionalAllocation, path=None) -> str:
    rows = ["id,balls"]
    rows += [f"{i},{' '.join(map(str, b))}" for i, b in enumerate(export_ball_quotas(alloc))]
    text = "\n".join(rows) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
