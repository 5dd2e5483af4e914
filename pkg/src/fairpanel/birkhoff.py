"""From a fractional allocation to an exact distribution over panels.

Two exact routes are provided:

* ``birkhoff``: complete the allocation to an ``N x N`` bistochastic matrix
  (one column per virtual individual, uniform filler rows) and peel off
  permutation matrices.
* ``compact``: peel row-saturating assignments directly off the ``k x n``
  allocation, respecting each point's seat capacity.  Same guarantees
  (exact marginals, one seat per ball) with far fewer, smaller steps, used
  when ``N`` exceeds the Birkhoff size gate.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .allocation import FractionalAllocation, fractional_allocation
from .matching import DenseMatcher
from .metric import MetricInstance, Panel, make_panel

BIRKHOFF_MAX_N = 2000


@dataclass(frozen=True, eq=False)
class SquareBistochastic:
    """``N x N`` matrix in units of ``1/N``; rows ``< k`` come from the allocation.

    ``owner[c]`` is the point behind virtual column ``c``.
    """

    units: np.ndarray
    k: int
    owner: np.ndarray

    @property
    def N(self) -> int:
        return self.units.shape[0]

    @property
    def Y(self) -> list[list[Fraction]]:
        return [[Fraction(int(u), self.N) for u in row] for row in self.units]

    def check(self):
        u = self.units
        N = self.N
        if u.ndim != 2 or u.shape != (N, N):
            raise ValueError("matrix must be square")
        if np.any(u < 0):
            raise ValueError("entries must be nonnegative")
        if not (np.all(u.sum(axis=0) == N) and np.all(u.sum(axis=1) == N)):
            raise ValueError("matrix is not bistochastic")
        return True


@dataclass(frozen=True, eq=False)
class PanelDistribution:
    """Finite distribution over panels with exact rational probabilities."""

    entries: tuple[tuple[Panel, Fraction], ...]
    n: int
    k: int
    method: str = ""
    permutations: tuple[np.ndarray, ...] | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.entries)

    @property
    def panels(self) -> list[Panel]:
        return [p for p, _ in self.entries]

    @property
    def probabilities(self) -> list[Fraction]:
        return [lam for _, lam in self.entries]

    def expected_seats(self) -> list[Fraction]:
        """Expected number of seats held by each point."""
        out = [Fraction(0)] * self.n
        for panel, lam in self.entries:
            for i in panel:
                out[i] += lam
        return out

    def marginals(self, weight=None) -> list[Fraction]:
        """Inclusion probability of each (virtual) individual."""
        seats = self.expected_seats()
        if weight is None:
            return seats
        return [s / int(w) for s, w in zip(seats, weight)]

    def merged(self) -> "PanelDistribution":
        acc: dict[Panel, Fraction] = defaultdict(Fraction)
        for p, lam in self.entries:
            acc[p] += lam
        return PanelDistribution(tuple(sorted(acc.items())), self.n, self.k, self.method)

    def check(self):
        assert sum(self.probabilities, Fraction(0)) == 1, "probabilities must sum to 1"
        assert all(lam > 0 for lam in self.probabilities)
        assert all(len(p) == self.k for p in self.panels)
        return True

    def dumps(self) -> str:
        lines = [f"lambda {lam.numerator}/{lam.denominator} : {' '.join(map(str, p))}" for p, lam in self.entries]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, n: int | None = None) -> "PanelDistribution":
        entries = []
        for ln in text.splitlines():
            if not ln.strip():
                continue
            head, _, ids = ln.partition(":")
            lam = Fraction(head.split()[1])
            entries.append((make_panel(int(x) for x in ids.split()), lam))
        k = len(entries[0][0])
        if n is None:
            n = max(max(p) for p, _ in entries) + 1
        return cls(tuple(entries), n, k)

    @classmethod
    def point_mass(cls, panel, n: int) -> "PanelDistribution":
        panel = make_panel(panel)
        return cls(((panel, Fraction(1)),), n, len(panel), "point")


# --------------------------------------------------------------------------
# square route
# --------------------------------------------------------------------------


def _weights_from_allocation(alloc: FractionalAllocation) -> np.ndarray:
    colsum = alloc.units.sum(axis=0)
    w, rem = np.divmod(colsum, alloc.k)
    assert not rem.any()
    return w


def complete_bistochastic(alloc: FractionalAllocation) -> SquareBistochastic:
    """Stack the allocation on ``N - k`` uniform rows.

    A point of weight ``w`` becomes ``w`` co-located virtual columns; its
    allocation column is split across them greedily so each receives exactly
    ``k`` units from the top rows.
    """
    k, N = alloc.k, alloc.N
    weight = _weights_from_allocation(alloc)
    owner = np.repeat(np.arange(alloc.n), weight)
    units = np.ones((N, N), dtype=np.int64)
    units[:k] = 0
    col = 0
    for i in range(alloc.n):
        remaining = [int(u) for u in alloc.units[:, i]]
        for v in range(int(weight[i])):
            need = k
            for j in range(k):
                if need == 0:
                    break
                a = min(need, remaining[j])
                units[j, col + v] += a
                remaining[j] -= a
                need -= a
        col += int(weight[i])
    Y = SquareBistochastic(units, k, owner)
    Y.check()
    return Y


def birkhoff_decompose(Y: SquareBistochastic, keep_permutations: bool = False) -> PanelDistribution:
    """Exact Birkhoff decomposition; panels are the owners matched to the top ``k`` rows."""
    Y.check()
    N, k = Y.N, Y.k
    work = Y.units.copy()
    matcher = DenseMatcher(work)
    rows = np.arange(N)
    entries, perms = [], []
    n_points = int(Y.owner.max()) + 1
    remaining = N
    while remaining > 0:
        if not matcher.repair():
            raise RuntimeError("no perfect matching on the support; input not bistochastic")
        cols = matcher.col_of_row
        lam = int(work[rows, cols].min())
        panel = make_panel(Y.owner[cols[:k]])
        entries.append((panel, Fraction(lam, N)))
        if keep_permutations:
            perms.append(cols.copy())
        work[rows, cols] -= lam
        remaining -= lam
    assert not work.any()
    return PanelDistribution(
        tuple(entries), n_points, k, "birkhoff", tuple(perms) if keep_permutations else None
    )


# --------------------------------------------------------------------------
# compact route
# --------------------------------------------------------------------------


def _capacitated_assignment(adj, col_rows, cap, tight, k):
    """Assign each row one adjacent column; loads <= cap, tight columns at cap."""
    assign = [-1] * k
    holders: dict[int, list[int]] = defaultdict(list)

    def move(j, i):
        if assign[j] != -1:
            holders[assign[j]].remove(j)
        assign[j] = i
        holders[i].append(j)

    def fill_column(i, seen):
        # pull one more row into tight column i
        for j in col_rows[i]:
            if assign[j] == i or j in seen:
                continue
            seen.add(j)
            src = assign[j]
            if src == -1 or src not in tight or fill_column(src, seen):
                move(j, i)
                return True
        return False

    for i in sorted(tight):
        while len(holders[i]) < cap[i]:
            if not fill_column(i, set()):
                raise RuntimeError(f"cannot saturate tight column {i}")

    def place_row(j, seen_cols):
        for i in adj[j]:
            if i in seen_cols:
                continue
            seen_cols.add(i)
            if len(holders[i]) < cap[i]:
                move(j, i)
                return True
            for j2 in list(holders[i]):
                if place_row(j2, seen_cols):
                    move(j, i)
                    return True
        return False

    for j in range(k):
        if assign[j] == -1 and not place_row(j, set()):
            raise RuntimeError(f"cannot assign row {j}")
    return assign


def decompose_allocation(alloc: FractionalAllocation) -> PanelDistribution:
    """Exact decomposition of the allocation into row-saturating seat assignments.

    Each term seats one member of every ball, and a point of weight ``w`` at
    most ``w`` times, so every term is realizable by virtual individuals.
    """
    k, N = alloc.k, alloc.N
    weight = [int(w) for w in _weights_from_allocation(alloc)]
    R: dict[tuple[int, int], Fraction] = {
        (int(j), int(i)): Fraction(int(alloc.units[j, i]), N) for j, i in zip(*np.nonzero(alloc.units))
    }
    colsum = [Fraction(int(s), N) for s in alloc.units.sum(axis=0)]
    t = Fraction(1)
    # only points with fewer virtual individuals than balls can bind
    capped = {i for i in range(alloc.n) if weight[i] < k}
    cap = {i: min(weight[i], k) for i in range(alloc.n)}
    entries = []
    while t > 0:
        adj = [[] for _ in range(k)]
        col_rows: dict[int, list[int]] = defaultdict(list)
        for (j, i) in sorted(R):
            adj[j].append(i)
            col_rows[i].append(j)
        tight = {i for i in capped if colsum[i] == weight[i] * t}
        assign = _capacitated_assignment(adj, col_rows, cap, tight, k)
        load = defaultdict(int)
        for i in assign:
            load[i] += 1
        lam = min(R[(j, assign[j])] for j in range(k))
        for i in capped:
            if i not in tight and load[i] < weight[i]:
                lam = min(lam, (weight[i] * t - colsum[i]) / (weight[i] - load[i]))
        assert lam > 0
        entries.append((make_panel(assign), lam))
        for j, i in enumerate(assign):
            R[(j, i)] -= lam
            if R[(j, i)] == 0:
                del R[(j, i)]
            colsum[i] -= lam
        t -= lam
    assert not R
    return PanelDistribution(tuple(entries), alloc.n, k, "compact")


# --------------------------------------------------------------------------
# composition and sampling
# --------------------------------------------------------------------------


def fgc_distribution(
    inst: MetricInstance,
    k: int,
    method: str = "auto",
    max_exact_n: int = BIRKHOFF_MAX_N,
    alloc: FractionalAllocation | None = None,
) -> PanelDistribution:
    """Fair greedy-capture panel distribution.

    ``method`` is ``"birkhoff"``, ``"compact"`` or ``"auto"`` (Birkhoff while
    ``N <= max_exact_n``).
    """
    if alloc is None:
        alloc = fractional_allocation(inst, k)
    if method == "auto":
        method = "birkhoff" if inst.N <= max_exact_n else "compact"
    if method == "birkhoff":
        if inst.N > max_exact_n:
            raise ValueError(f"N={inst.N} exceeds the Birkhoff gate {max_exact_n}; use method='compact'")
        dist = birkhoff_decompose(complete_bistochastic(alloc))
    elif method == "compact":
        dist = decompose_allocation(alloc)
    else:
        raise ValueError(f"unknown method {method!r}")
    # every support panel seats someone assigned to every ball
    for panel, _ in dist.entries:
        members = set(panel)
        for j in range(k):
            assert members & set(alloc.support(j)), f"panel {panel} misses ball {j}"
    return dist


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_panel(dist: PanelDistribution, seed=None) -> Panel:
    """Draw one panel by an exact integer CDF over the probabilities."""
    rng = as_generator(seed)
    denom = math.lcm(*(lam.denominator for lam in dist.probabilities))
    weights = [lam.numerator * (denom // lam.denominator) for lam in dist.probabilities]
    if denom < 2**62:
        u = int(rng.integers(denom))
    else:
        u = random.Random(int(rng.integers(2**62))).randrange(denom)
    acc = 0
    for (panel, _), w in zip(dist.entries, weights):
        acc += w
        if u < acc:
            return panel
    raise AssertionError("probabilities do not sum to 1")


def dump_distribution(dist: PanelDistribution, path) -> None:
    Path(path).write_text(dist.dumps(), encoding="utf-8")
