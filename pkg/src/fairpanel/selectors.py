"""Uniform selection and augmented fair greedy capture (known ``q``)."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce

import numpy as np

from .allocation import Capture, greedy_capture
from .birkhoff import PanelDistribution, as_generator
from .metric import MetricInstance, Panel, entitled_size, make_panel


class InvariantError(RuntimeError):
    """An internal guarantee failed; indicates a bug rather than bad input."""


@dataclass(frozen=True)
class SelectorConfig:
    kind: str  # "uniform" | "fgc" | "afgc"
    k: int
    q: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "fgc", "afgc"):
            raise ValueError(f"unknown selector {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.kind == "afgc" and (self.q is None or not 1 <= self.q <= self.k):
            raise ValueError("afgc requires 1 <= q <= k")


# --------------------------------------------------------------------------
# uniform
# --------------------------------------------------------------------------


def uniform_sample(n: int, k: int, seed=None) -> Panel:
    """Uniformly random ``k``-subset of ``range(n)`` by partial Fisher-Yates."""
    if not 0 <= k <= n:
        raise ValueError(f"k must lie in [0, n={n}], got {k}")
    rng = as_generator(seed)
    idx = list(range(n))
    for a in range(k):
        b = int(rng.integers(a, n))
        idx[a], idx[b] = idx[b], idx[a]
    return make_panel(idx[:k])


def uniform_panel(inst: MetricInstance, k: int, seed=None) -> Panel:
    """Uniform selection over virtual individuals, reported as point ids."""
    owners = inst.expand()
    if inst.N > 10**6:
        picks = as_generator(seed).choice(inst.N, size=k, replace=False)
        return make_panel(owners[picks])
    return make_panel(owners[list(uniform_sample(inst.N, k, seed))])


# --------------------------------------------------------------------------
# augmented fair greedy capture
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AFGCStructure:
    """Deterministic part of augmented greedy capture.

    ``balls`` are the detected balls with the virtual individuals each
    disregards (as ``(point, count)``); ``remaining`` counts the individuals
    never disregarded.
    """

    k: int
    q: int
    N: int
    quota: int
    balls: tuple[Capture, ...]
    remaining: tuple[int, ...]

    @property
    def seats_from_balls(self) -> int:
        return self.q * len(self.balls)

    @property
    def leftover_seats(self) -> int:
        return self.k - self.seats_from_balls

    def leftover_probabilities(self) -> tuple[Fraction, Fraction]:
        """Inclusion probability for remaining and for disregarded-unselected individuals."""
        r = sum(self.remaining)
        p_rem = Fraction(self.k, self.N)
        if self.leftover_seats == 0:
            return p_rem, Fraction(0)
        pool = self.N - self.seats_from_balls - r
        mass = self.leftover_seats - r * p_rem
        if pool == 0:
            if mass != 0:
                raise InvariantError("no disregarded individuals left to absorb leftover mass")
            return p_rem, Fraction(0)
        p_dis = mass / pool
        if not (0 <= p_dis <= 1 and p_rem <= 1):
            raise InvariantError(f"leftover probability out of range: {p_dis}")
        return p_rem, p_dis


def afgc_structure(inst: MetricInstance, k: int, q: int) -> AFGCStructure:
    N = inst.N
    if not 1 <= q <= k <= N:
        raise ValueError(f"need 1 <= q <= k <= N, got q={q}, k={k}, N={N}")
    key = ("afgc", k, q)
    if key not in inst._cache:
        quota = entitled_size(q, N, k)
        caps, rest = greedy_capture(inst.dist, inst.weight, quota, live_centers_only=True)
        if q * len(caps) > k:
            raise InvariantError("detection phase seated more than k")
        inst._cache[key] = AFGCStructure(k, q, N, quota, tuple(caps), tuple(int(x) for x in rest))
    return inst._cache[key]


def _grid(p_rem: Fraction, p_dis: Fraction) -> tuple[int, int, int]:
    """Common denominator ``D`` and the two probabilities as multiples of ``1/D``."""
    D = math.lcm(p_rem.denominator, p_dis.denominator)
    return D, p_rem.numerator * (D // p_rem.denominator), p_dis.numerator * (D // p_dis.denominator)


def _systematic(counts_rem, counts_dis, a: int, b: int, D: int, u: int) -> np.ndarray:
    """Systematic sampling over individuals in point-id order.

    Masses are integers over ``D`` (``a`` per remaining, ``b`` per
    disregarded individual) and ``u`` is the offset in ``[0, D)``.  Returns
    the number of selections per point: each individual is included with
    probability exactly its mass and the sample size is the total mass.
    """
    mass = np.asarray(counts_rem, dtype=np.int64) * a + np.asarray(counts_dis, dtype=np.int64) * b
    hi = np.cumsum(mass)
    lo = hi - mass
    # selections at u, u + D, u + 2D, ... falling in (lo, hi]
    return (hi - u) // D - (lo - u) // D


def afgc_seat_counts(inst: MetricInstance, k: int, q: int, size: int, seed=None) -> np.ndarray:
    """``size`` independent draws as a ``(size, n)`` matrix of seats per point."""
    rng = as_generator(seed)
    st = afgc_structure(inst, k, q)
    seats = np.zeros((size, inst.n), dtype=np.int64)
    rows = np.arange(size)[:, None]
    for cap in st.balls:
        pool = np.repeat([p for p, _ in cap.taken], [a for _, a in cap.taken])
        # q distinct pool members per draw: smallest q of random keys
        keys = rng.random((size, len(pool)))
        chosen = np.argpartition(keys, q - 1, axis=1)[:, :q] if q < len(pool) else np.broadcast_to(np.arange(len(pool)), (size, len(pool)))
        np.add.at(seats, (np.broadcast_to(rows, chosen.shape), pool[chosen]), 1)
    if st.leftover_seats > 0:
        p_rem, p_dis = st.leftover_probabilities()
        D, a, b = _grid(p_rem, p_dis)
        remaining = np.array(st.remaining, dtype=np.int64)
        disregarded = inst.weight[None, :] - remaining[None, :] - seats
        u = rng.integers(D, size=size)[:, None]
        mass = remaining[None, :] * a + disregarded * b
        hi = np.cumsum(mass, axis=1)
        lo = hi - mass
        seats += (hi - u) // D - (lo - u) // D
    bad = seats.sum(axis=1) != k
    if bad.any():
        raise InvariantError(f"augmented capture produced {int(seats[bad][0].sum())} seats, expected {k}")
    if np.any(seats > inst.weight[None, :]):
        raise InvariantError("a point was seated more often than its multiplicity")
    return seats


def afgc_sample(inst: MetricInstance, k: int, q: int, seed=None) -> Panel:
    """One panel from augmented fair greedy capture."""
    counts = afgc_seat_counts(inst, k, q, 1, seed)[0]
    return make_panel(np.repeat(np.arange(inst.n), counts))


def _systematic_outcomes(counts_rem, counts_dis, p_rem, p_dis) -> Counter:
    """All outcomes of systematic sampling with their exact probabilities."""
    D, a, b = _grid(p_rem, p_dis)
    mass = np.asarray(counts_rem, dtype=np.int64) * a + np.asarray(counts_dis, dtype=np.int64) * b
    # floor((c - u) / D) drops as the integer u steps past c mod D
    edges = np.concatenate(([0], np.cumsum(mass)))
    breaks = sorted({0, D, *(int(c) % D + 1 for c in edges)})
    out = Counter()
    for lo, hi in zip(breaks, breaks[1:]):
        if lo < hi <= D:
            sel = _systematic(counts_rem, counts_dis, a, b, D, lo)
            out[tuple(sel.tolist())] += Fraction(hi - lo, D)
    return out


def afgc_distribution(inst: MetricInstance, k: int, q: int, max_support: int = 200_000) -> PanelDistribution:
    """Exact distribution of :func:`afgc_sample` by enumeration (small instances)."""
    st = afgc_structure(inst, k, q)
    per_ball = []
    for cap in st.balls:
        pool = [p for p, a in cap.taken for _ in range(a)]
        combos = Counter(tuple(sorted(pool[x] for x in c)) for c in itertools.combinations(range(len(pool)), q))
        total = math.comb(len(pool), q)
        per_ball.append([(c, Fraction(m, total)) for c, m in combos.items()])
    size = reduce(lambda a, b: a * len(b), per_ball, 1)
    if size > max_support:
        raise ValueError(f"support too large to enumerate ({size} ball outcomes)")
    acc: Counter = Counter()
    remaining = list(st.remaining)
    for combo in itertools.product(*per_ball):
        prob = reduce(lambda a, b: a * b[1], combo, Fraction(1))
        seats = Counter()
        for c, _ in combo:
            seats.update(c)
        if st.leftover_seats > 0:
            p_rem, p_dis = st.leftover_probabilities()
            dis = [int(inst.weight[p]) - remaining[p] - seats[p] for p in range(inst.n)]
            for extra, pr in _systematic_outcomes(remaining, dis, p_rem, p_dis).items():
                s2 = seats.copy()
                for p, c in enumerate(extra):
                    s2[p] += c
                acc[make_panel(s2.elements())] += prob * pr
        else:
            acc[make_panel(seats.elements())] += prob
    return PanelDistribution(tuple(sorted(acc.items())), inst.n, k, "afgc")
