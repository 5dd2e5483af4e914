"""Measuring representation: audits, exact core oracles, ex ante evaluators.

Ratio conventions throughout: ``x / 0 = inf`` for ``x > 0`` and ``0 / 0 = 1``.
A panel's core violation is the smallest ``beta`` for which it lies in the
``beta``-q-core, i.e. the maximum over deviations ``P'`` of the
``ceil(|P'| N / k)``-th largest (weight-expanded) ratio
``c_q(i, P) / c_q(i, P')``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from .birkhoff import PanelDistribution, as_generator, sample_panel
from .metric import (
    MetricInstance,
    Panel,
    check_panel,
    cost_ratio,
    entitled_size,
    make_panel,
    q_costs,
    top_q_seats,
)

EXACT_MAX_N = 14


class InstanceTooLarge(ValueError):
    """Raised when an exhaustive evaluator would enumerate too much."""


def _rowwise_kth_largest(R: np.ndarray, weight: np.ndarray, rank: int) -> np.ndarray:
    """``rank``-th largest weight-expanded value of every row of ``R``."""
    order = np.argsort(-R, axis=1, kind="stable")
    cum = np.cumsum(weight[order], axis=1)
    pos = np.argmax(cum >= rank, axis=1)
    return R[np.arange(R.shape[0]), order[np.arange(R.shape[0]), pos]]


def multisets(weight: Sequence[int], size: int) -> Iterator[Panel]:
    """Panels of ``size`` seats where point ``i`` fills at most ``weight[i]`` seats."""
    n = len(weight)
    if all(int(w) == 1 for w in weight):
        yield from itertools.combinations(range(n), size)
        return
    for combo in itertools.combinations_with_replacement(range(n), size):
        counts: dict[int, int] = {}
        ok = True
        for i in combo:
            counts[i] = counts.get(i, 0) + 1
            if counts[i] > weight[i]:
                ok = False
                break
        if ok:
            yield combo


def multiset_count(panel: Panel, weight) -> int:
    """Number of sets of virtual individuals that realize ``panel``."""
    out = 1
    for i in set(panel):
        out *= math.comb(int(weight[i]), panel.count(i))
    return out


def _guard(inst: MetricInstance, max_n: int | None, what: str):
    if max_n is not None and inst.N > max_n:
        raise InstanceTooLarge(
            f"{what} enumerates panels exhaustively; N={inst.N} exceeds max_n={max_n} "
            f"(pass a larger max_n explicitly if you accept the cost)"
        )


def _costs_for(inst: MetricInstance, panels: Sequence[Panel], q: int) -> np.ndarray:
    """(len(panels), n) matrix of q-costs."""
    if not panels:
        return np.zeros((0, inst.n))
    idx = np.asarray(panels, dtype=np.int64)
    cols = inst.dist[:, idx]  # (n, M, s)
    return np.partition(cols, q - 1, axis=2)[:, :, q - 1].T


# --------------------------------------------------------------------------
# auditing with nearest-neighbor deviations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    """Audit estimate ``alpha_hat`` with per-center values and deviations."""

    alpha_hat: float
    per_center: tuple[tuple[int, Panel, float], ...]
    k: int
    q: int

    @property
    def witness(self) -> tuple[int, Panel, float]:
        return max(self.per_center, key=lambda t: t[2])

    def dumps(self) -> str:
        j, panel, _ = self.witness
        return (
            f"alpha_hat = {_fmt(self.alpha_hat)}\nk = {self.k}\nq = {self.q}\n"
            f"witness_center = {j}\nwitness_panel = {' '.join(map(str, panel))}\n"
        )

    def per_center_csv(self) -> str:
        rows = ["center,panel,alpha"]
        rows += [f"{j},{' '.join(map(str, p))},{_fmt(a)}" for j, p, a in self.per_center]
        return "\n".join(rows) + "\n"


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def nearest_panel(inst: MetricInstance, j: int, q: int) -> Panel:
    """``j`` plus its ``q - 1`` nearest seats; a point fills at most ``weight`` seats.

    Seats are ordered by distance from ``j``, then ``j`` itself first, then id.
    """
    order = sorted(range(inst.n), key=lambda p: (inst.dist[j, p], p != j, p))
    seats: list[int] = []
    for p in order:
        seats.extend([p] * min(int(inst.weight[p]), q - len(seats)))
        if len(seats) == q:
            break
    return make_panel(seats)


def audit_panel(inst: MetricInstance, panel, k: int, q: int) -> AuditReport:
    """Estimate the core violation of ``panel`` from ``n`` nearest-neighbor deviations."""
    panel = check_panel(inst, panel, k)
    if not 1 <= q <= k:
        raise ValueError(f"q must lie in [1, k={k}], got {q}")
    if q > inst.N:
        raise ValueError("q exceeds the population")
    rank = entitled_size(q, inst.N, k)
    if rank > inst.N:
        raise ValueError("entitled coalition exceeds the population")
    c_p = q_costs(inst, panel, q)
    hats = [nearest_panel(inst, j, q) for j in range(inst.n)]
    C = _costs_for(inst, hats, q)
    vals = _rowwise_kth_largest(cost_ratio(c_p[None, :], C), inst.weight, rank)
    per = tuple((j, hats[j], float(vals[j])) for j in range(inst.n))
    return AuditReport(float(vals.max()), per, k, q)


# --------------------------------------------------------------------------
# exact oracle
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoreViolationResult:
    """Minimal ``beta`` with the panel in the ``beta``-q-core, with a witness.

    ``exact`` carries the rational value when it was computed exactly.
    """

    alpha_star: float
    witness_panel: Panel
    witness_set: tuple[int, ...]
    exact: Fraction | None = None

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.alpha_star)


class CoreOracle:
    """Exhaustive core-violation oracle for one instance and ``(k, q)``.

    Deviation costs are computed once and reused for every audited panel.
    Deviations have between ``q`` and ``min(k, max_size)`` seats: smaller
    ones leave the q-cost undefined and larger ones are never entitled.
    """

    def __init__(self, inst: MetricInstance, k: int, q: int, max_size: int | None = None, max_n: int | None = EXACT_MAX_N):
        _guard(inst, max_n, "the exact core oracle")
        if not 1 <= q <= k:
            raise ValueError(f"q must lie in [1, k={k}], got {q}")
        self.inst, self.k, self.q = inst, k, q
        top = k if max_size is None else min(k, max_size)
        w = [int(x) for x in inst.weight]
        self.blocks = []
        for s in range(q, top + 1):
            rank = entitled_size(s, inst.N, k)
            if rank > inst.N:
                continue
            devs = list(multisets(w, s))
            self.blocks.append((rank, devs, _costs_for(inst, devs, q)))

    def violation(self, panel) -> CoreViolationResult:
        inst = self.inst
        panel = check_panel(inst, panel, self.k)
        c_p = q_costs(inst, panel, self.q)
        best, best_dev, best_row = -np.inf, None, None
        for rank, devs, C in self.blocks:
            if not devs:
                continue
            R = cost_ratio(c_p[None, :], C)
            vals = _rowwise_kth_largest(R, inst.weight, rank)
            a = int(np.argmax(vals))
            if vals[a] > best:
                best, best_dev, best_row = float(vals[a]), devs[a], R[a]
        if best_dev is None:
            return CoreViolationResult(0.0, (), ())
        members = tuple(np.flatnonzero(best_row >= best).tolist())
        return CoreViolationResult(best, make_panel(best_dev), members)


def exact_core_violation(
    inst: MetricInstance, panel, k: int, q: int, max_size: int | None = None, max_n: int | None = EXACT_MAX_N
) -> CoreViolationResult:
    """Exact core violation of ``panel`` by enumerating every deviation."""
    return CoreOracle(inst, k, q, max_size, max_n).violation(panel)


# --------------------------------------------------------------------------
# ex ante
# --------------------------------------------------------------------------


class UniformExAnte:
    """Exact expected preference counts under uniform selection.

    Panels of virtual individuals are grouped by the points they seat;
    ``counts[t] / total`` is the probability of the ``t``-th group.
    """

    def __init__(self, inst: MetricInstance, k: int, q: int, max_n: int | None = EXACT_MAX_N):
        _guard(inst, max_n, "the uniform ex ante evaluator")
        if not 1 <= q <= k <= inst.N:
            raise ValueError("need 1 <= q <= k <= N")
        self.inst, self.k, self.q = inst, k, q
        w = [int(x) for x in inst.weight]
        self.panels = list(multisets(w, k))
        self.counts = np.array([multiset_count(p, w) for p in self.panels], dtype=object)
        self.total = math.comb(inst.N, k)
        assert sum(self.counts) == self.total
        self.costs = _costs_for(inst, self.panels, q)

    def expected_counts_scaled(self, deviations: Sequence[Panel], alpha: float) -> list[int]:
        """``total * E[V_q(P, P', alpha)]`` for every deviation, as integers."""
        if alpha < 1:
            raise ValueError("alpha must be >= 1")
        C = _costs_for(self.inst, list(deviations), self.q)
        out = []
        w = self.inst.weight.astype(np.int64)
        for c in C:
            V = (self.costs > alpha * c[None, :]) @ w
            out.append(int(np.dot(V.astype(object), self.counts)))
        return out

    def expected_count(self, deviation, alpha: float) -> Fraction:
        return Fraction(self.expected_counts_scaled([make_panel(deviation)], alpha)[0], self.total)


def exante_exact(
    inst: MetricInstance,
    dist: PanelDistribution | str,
    deviation,
    alpha: float,
    q: int,
    k: int | None = None,
    max_n: int | None = EXACT_MAX_N,
) -> Fraction:
    """Exact ``E[V_q(P, P', alpha)]`` under ``dist`` (a distribution or ``"uniform"``)."""
    deviation = make_panel(deviation)
    if isinstance(dist, str):
        if dist != "uniform":
            raise ValueError(f"unknown distribution {dist!r}")
        if k is None:
            raise ValueError("uniform selection needs k")
        return UniformExAnte(inst, k, q, max_n).expected_count(deviation, alpha)
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    c_d = q_costs(inst, deviation, q)
    total = Fraction(0)
    for panel, lam in dist.entries:
        mask = q_costs(inst, panel, q) > alpha * c_d
        total += lam * int(inst.weight[mask].sum())
    return total


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    trials: int


def _as_sampler(inst: MetricInstance, selector, k: int | None) -> Callable[[np.random.Generator], Panel]:
    if isinstance(selector, PanelDistribution):
        return lambda rng: sample_panel(selector, rng)
    if selector == "uniform":
        from .selectors import uniform_panel

        if k is None:
            raise ValueError("uniform selection needs k")
        return lambda rng: uniform_panel(inst, k, rng)
    if callable(selector):
        return selector
    raise ValueError(f"unsupported selector {selector!r}")


def exante_monte_carlo(
    inst: MetricInstance, selector, deviation, alpha: float, q: int, trials: int, seed=None, k: int | None = None
) -> MonteCarloEstimate:
    """Sample mean of ``V_q`` over sampled panels, with its standard error.

    ``selector`` is a :class:`PanelDistribution`, ``"uniform"`` or a callable
    taking a numpy ``Generator`` and returning a panel.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    rng = as_generator(seed)
    draw = _as_sampler(inst, selector, k)
    c_d = q_costs(inst, make_panel(deviation), q)
    vals = np.empty(trials)
    for t in range(trials):
        mask = q_costs(inst, draw(rng), q) > alpha * c_d
        vals[t] = inst.weight[mask].sum()
    stderr = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MonteCarloEstimate(float(vals.mean()), stderr, trials)


def exante_uniform_bound(n: int, k: int, q: int, j: int) -> Fraction:
    """Probability that a uniform ``k``-subset of ``n`` contains fewer than ``q`` of ``j`` marked items."""
    if not (0 <= j <= n and 1 <= q <= k <= n):
        raise ValueError("need 0 <= j <= n and 1 <= q <= k <= n")
    num = sum(math.comb(j, r) * math.comb(n - j, k - r) for r in range(q))
    return Fraction(num, math.comb(n, k))


def chu_vandermonde_check(n: int, k: int, r: int) -> tuple[int, int]:
    """Both sides of ``sum_j C(j, r) C(n - j, k - r) = C(n + 1, k + 1)``."""
    if not 0 <= r <= k <= n:
        raise ValueError("need 0 <= r <= k <= n")
    lhs = sum(math.comb(j, r) * math.comb(n - j, k - r) for j in range(n + 1))
    return lhs, math.comb(n + 1, k + 1)


# --------------------------------------------------------------------------
# partition by shared representatives
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PartitionResult:
    groups: tuple[tuple[int, ...], ...]
    anchors: tuple[int, ...]
    mode: str

    @property
    def m(self) -> int:
        return len(self.groups)


def partition_by_topq(inst: MetricInstance, S, deviation, q: int, mode: str = "max-anchor") -> PartitionResult:
    """Group ``S`` around anchors whose q closest seats in ``deviation`` are disjoint.

    Each round the anchor is the remaining member with the largest
    (``max-anchor``) or smallest (``min-anchor``) q-cost, ties by id, and its
    group is every remaining member sharing one of the anchor's q closest seats.
    """
    deviation = make_panel(deviation)
    if q > len(deviation) or q < 1:
        raise ValueError(f"q must lie in [1, |P'|={len(deviation)}]")
    if mode not in ("max-anchor", "min-anchor"):
        raise ValueError(f"unknown mode {mode!r}")
    cost = q_costs(inst, deviation, q)
    seats = {i: top_q_seats(inst, i, deviation, q) for i in S}
    rest = sorted(set(S))
    groups, anchors = [], []
    sign = -1 if mode == "max-anchor" else 1
    while rest:
        a = min(rest, key=lambda i: (sign * cost[i], i))
        group = tuple(i for i in rest if seats[i] & seats[a])
        groups.append(group)
        anchors.append(a)
        taken = set(group)
        rest = [i for i in rest if i not in taken]
    return PartitionResult(tuple(groups), tuple(anchors), mode)


# --------------------------------------------------------------------------
# core over expected cost
# --------------------------------------------------------------------------


def expected_costs(inst: MetricInstance, dist: PanelDistribution, q: int) -> list[Fraction]:
    """Exact ``E[c_q(i, P)]`` for every point (distances taken as exact binary fractions)."""
    out = [Fraction(0)] * inst.n
    for panel, lam in dist.entries:
        for i, c in enumerate(q_costs(inst, panel, q)):
            out[i] += lam * Fraction(float(c))
    return out


def _ratio_fraction(a: Fraction, b: Fraction) -> Fraction | float:
    if b == 0:
        return math.inf if a > 0 else Fraction(1)
    return a / b


def expected_cost_core_violation(
    inst: MetricInstance, dist: PanelDistribution, k: int, q: int, max_size: int | None = None, max_n: int | None = EXACT_MAX_N
) -> CoreViolationResult:
    """Smallest ``beta`` such that no entitled coalition improves its expected q-cost by more than ``beta``."""
    _guard(inst, max_n, "the expected-cost oracle")
    ec = expected_costs(inst, dist, q)
    w = [int(x) for x in inst.weight]
    top = k if max_size is None else min(k, max_size)
    best: Fraction | float = -math.inf
    best_dev: Panel = ()
    best_row: list = []
    for s in range(q, top + 1):
        rank = entitled_size(s, inst.N, k)
        if rank > inst.N:
            continue
        for dev in multisets(w, s):
            c_d = q_costs(inst, dev, q)
            row = [_ratio_fraction(ec[i], Fraction(float(c_d[i]))) for i in range(inst.n)]
            order = sorted(range(inst.n), key=lambda i: row[i], reverse=True)
            acc = 0
            for i in order:
                acc += w[i]
                if acc >= rank:
                    val = row[i]
                    break
            if val > best:
                best, best_dev, best_row = val, make_panel(dev), row
    if best_dev == ():
        return CoreViolationResult(0.0, (), ())
    members = tuple(i for i in range(inst.n) if best_row[i] >= best)
    exact = best if isinstance(best, Fraction) else None
    return CoreViolationResult(float(best), best_dev, members, exact)


# --------------------------------------------------------------------------
# social cost
# --------------------------------------------------------------------------


def social_cost(inst: MetricInstance, panel, q: int) -> float:
    """Weighted sum of q-costs."""
    return float(inst.weight @ q_costs(inst, panel, q))


def _entitled_radius(inst: MetricInstance, q: int, k: int) -> np.ndarray:
    """Distance from every point to its ``ceil(qN/k)``-th nearest individual."""
    rank = min(entitled_size(q, inst.N, k), inst.N)
    order = np.argsort(inst.dist, axis=1, kind="stable")
    cum = np.cumsum(inst.weight[order], axis=1)
    pos = np.argmax(cum >= rank, axis=1)
    return inst.dist[np.arange(inst.n), order[np.arange(inst.n), pos]]


def _heuristic_panel(inst: MetricInstance, k: int, q: int) -> list[int]:
    """Seat dense points first: ascending entitled radius, up to ``q`` seats each."""
    rad = _entitled_radius(inst, q, k)
    seats: list[int] = []
    while len(seats) < k:
        for p in np.lexsort((np.arange(inst.n), rad)):
            room = min(int(inst.weight[p]), q) - seats.count(int(p))
            seats.extend([int(p)] * max(0, min(room, k - len(seats))))
            if len(seats) == k:
                break
        q += 1  # every point already holds its share; allow more
    return seats


def _local_search(inst: MetricInstance, seats: list[int], q: int, max_rounds: int) -> tuple[list[int], float]:
    D, w = inst.dist, inst.weight.astype(float)
    n, k = inst.n, len(seats)
    cost = social_cost(inst, seats, q)
    for _ in range(max_rounds):
        best = (cost, None, None)
        counts = np.bincount(seats, minlength=n)
        for s_val in sorted(set(seats)):
            rest = list(seats)
            rest.remove(s_val)
            V = np.sort(D[:, rest], axis=1) if rest else np.zeros((n, 0))
            hi = V[:, q - 1] if q - 1 < k - 1 else np.full(n, np.inf)
            lo = V[:, q - 2] if q >= 2 else np.full(n, -np.inf)
            new = np.where(D >= hi[:, None], hi[:, None], np.maximum(lo[:, None], D))  # (n points, n candidates)
            totals = w @ new
            room = counts - (np.arange(n) == s_val) < inst.weight
            room[s_val] = False
            totals[~room] = np.inf
            a = int(np.argmin(totals))
            if totals[a] < best[0] - 1e-12 * max(1.0, abs(cost)):
                best = (float(totals[a]), s_val, a)
        if best[1] is None:
            break
        seats.remove(best[1])
        seats.append(best[2])
        cost = social_cost(inst, seats, q)
    return sorted(seats), cost


def opt_social_cost(
    inst: MetricInstance,
    k: int,
    q: int,
    method: str = "brute",
    restarts: int = 5,
    seed=0,
    max_n: int | None = EXACT_MAX_N,
    max_rounds: int = 200,
) -> tuple[Panel, float]:
    """Minimum social cost panel: exhaustive (``brute``) or local search (``greedy``).

    The local search starts from a density heuristic and then from random
    panels, applying best single-seat swaps until none improves.
    """
    if not 1 <= q <= k <= inst.N:
        raise ValueError("need 1 <= q <= k <= N")
    if method == "brute":
        _guard(inst, max_n, "brute-force social cost")
        w = [int(x) for x in inst.weight]
        best_p, best_c = None, math.inf
        batch: list[Panel] = []

        def flush():
            nonlocal best_p, best_c
            vals = _costs_for(inst, batch, q) @ inst.weight
            a = int(np.argmin(vals))
            if vals[a] < best_c:
                best_p, best_c = make_panel(batch[a]), float(vals[a])
            batch.clear()

        for p in multisets(w, k):
            batch.append(p)
            if len(batch) == 4096:
                flush()
        if batch:
            flush()
        return best_p, best_c
    if method != "greedy":
        raise ValueError(f"unknown method {method!r}")
    rng = as_generator(seed)
    owners = inst.expand()
    starts = [_heuristic_panel(inst, k, q)]
    for _ in range(max(0, restarts - 1)):
        starts.append([int(owners[v]) for v in rng.choice(inst.N, size=k, replace=False)])
    best_p, best_c = None, math.inf
    for st in starts:
        p, c = _local_search(inst, list(st), q, max_rounds)
        if c < best_c:
            best_p, best_c = make_panel(p), c
    return best_p, best_c
