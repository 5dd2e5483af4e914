"""Small hand-built instances with known core behaviour.

Each fixture is a population split into groups with constant distances
between groups.  "Infinitely far" is encoded as ``D_max = 10**6`` times the
largest finite distance, which keeps the triangle inequality intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .birkhoff import PanelDistribution
from .metric import MetricInstance, Panel, make_panel

INF = math.inf
INF_SCALE = 10**6


@dataclass(frozen=True, eq=False)
class Fixture:
    """An instance with its group layout, designated panels and distributions."""

    name: str
    inst: MetricInstance
    k: int
    q: int
    groups: dict[str, tuple[int, ...]]
    panels: dict[str, Panel] = field(default_factory=dict)
    distributions: dict[str, PanelDistribution] = field(default_factory=dict)
    params: dict = field(default_factory=dict)


def group_instance(sizes: dict[str, int], table: dict[tuple[str, str], float]) -> tuple[MetricInstance, dict[str, tuple[int, ...]]]:
    """Instance where members of groups ``a`` and ``b`` sit ``table[a, b]`` apart.

    Ids are assigned group by group in the order of ``sizes``.  Missing
    pairs default to ``INF``; same-group distance defaults to 0.
    """
    names = list(sizes)
    groups, start = {}, 0
    for g in names:
        groups[g] = tuple(range(start, start + sizes[g]))
        start += sizes[g]

    def d(a, b):
        if (a, b) in table:
            return table[a, b]
        if (b, a) in table:
            return table[b, a]
        return 0.0 if a == b else INF

    finite = [d(a, b) for a in names for b in names if math.isfinite(d(a, b))]
    dmax = INF_SCALE * max(max(finite), 1.0)
    label = [g for g in names for _ in range(sizes[g])]
    dist = np.array([[0.0 if i == j else (lambda v: dmax if math.isinf(v) else v)(d(label[i], label[j]))
                      for j in range(start)] for i in range(start)])
    has_inf = any(math.isinf(d(a, b)) for a in names for b in names)
    inst = MetricInstance(dist, labels=label, inf_distance=dmax if has_inf else None)
    return inst, groups


def _take(groups, name, count) -> list[int]:
    members = groups[name]
    if count > len(members):
        raise ValueError(f"group {name} has {len(members)} members, need {count}")
    return list(members[:count])


def _mixture(n: int, k: int, panels: list[Panel], probs: list[Fraction], label: str) -> PanelDistribution:
    return PanelDistribution(tuple(zip(panels, probs)), n, k, label).merged()


def _thm31(n: int = 12, k: int = 3) -> Fixture:
    a = n // k
    if a < k:
        raise ValueError("needs floor(n/k) >= k")
    inst, g = group_instance({"A": a, "B": n - a}, {("A", "B"): 1.0})
    panels = {"all_A": make_panel(_take(g, "A", k)), "one_B": make_panel(_take(g, "B", 1))}
    return Fixture("thm31", inst, k, 1, g, panels, params={"n": n, "k": k})


def _thm42(k: int = 3, q: int = 1, n: int = 18) -> Fixture:
    if not 1 <= q < k:
        raise ValueError("needs 1 <= q < k")
    if n * (k - q) < 2 * k * k:
        raise ValueError("needs n >= 2k^2/(k-q)")
    leaves = n - q
    dist = np.full((n, n), 2.0)
    dist[:q, :] = 1.0
    dist[:, :q] = 1.0
    dist[:q, :q] = 0.0
    np.fill_diagonal(dist, 0.0)
    inst = MetricInstance(dist, labels=["I"] * q + ["leaf"] * leaves)
    g = {"I": tuple(range(q)), "leaf": tuple(range(q, n))}
    return Fixture("thm42", inst, k, q, g, {"I": make_panel(range(q))}, params={"n": n, "k": k, "q": q})


def _appxA(n: int = 9) -> Fixture:
    if n % 2 == 0 or n < 3:
        raise ValueError("needs odd n >= 3")
    half = (n - 1) // 2
    inst, g = group_instance({"A": 1, "B": 1, "C": half, "D": half}, {("C", "D"): 10.0})
    return Fixture("appxA", inst, 3, 1, g, params={"n": n})


def _appxB_tight(k: int = 3, n: int = 8) -> Fixture:
    if n - k < k:
        raise ValueError("needs n >= 2k")
    sizes = {"A": k // 2, "B": k - k // 2, "C": n - k}
    inst, g = group_instance(sizes, {("A", "B"): 2.0, ("A", "C"): 1.0, ("B", "C"): 1.0})
    panels = {"AB": make_panel(g["A"] + g["B"]), "C": make_panel(_take(g, "C", k))}
    return Fixture("appxB_tight", inst, k, k, g, panels, params={"n": n, "k": k})


def _propE1_a(k: int = 3, q: int = 3, n: int = 12) -> Fixture:
    if n % k or q % 3 or not 1 <= q <= k:
        raise ValueError("needs k | n, 3 | q and q <= k")
    quota = q * n // k
    third = (quota - q) // 3
    sizes = {"A": third, "B": third, "C": third, "D": q, "E": n - quota}
    table = {(x, y): 2.0 for x in "ABC" for y in "ABC" if x != y}
    table.update({(x, "D"): 1.0 for x in "ABC"})
    inst, g = group_instance(sizes, table)
    panels = {x: make_panel(_take(g, x, q) + _take(g, "E", k - q)) for x in "ABC"}
    panels["D"] = make_panel(g["D"])
    mix = _mixture(n, k, [panels[x] for x in "ABC"], [Fraction(1, 3)] * 3, "mixture")
    return Fixture("propE1_a", inst, k, q, g, panels, {"mixture": mix}, {"n": n, "k": k, "q": q})


def _propE1_b(k: int = 4, q: int = 2, n: int = 12) -> Fixture:
    if n % k or not 1 <= q < k:
        raise ValueError("needs k | n and q < k")
    quota = q * n // k
    sizes = {"A": quota - q, "B": q, "C": q, "D": n - quota - q}
    table = {("A", "B"): 1.0, ("A", "C"): 2.0, ("B", "C"): 1.0}
    inst, g = group_instance(sizes, table)
    rest = _take(g, "D", k - q)
    panels = {
        "P1": make_panel(_take(g, "A", q) + rest),
        "P2": make_panel(_take(g, "C", q) + rest),
        "B": make_panel(g["B"]),
    }
    mix = _mixture(n, k, [panels["P1"], panels["P2"]], [Fraction(1, 2)] * 2, "mixture")
    return Fixture("propE1_b", inst, k, q, g, panels, {"mixture": mix}, {"n": n, "k": k, "q": q})


# one 7-point block; ids ordered a5, a6, a1, a2, a3, a4, a7 so that the
# ball around a5 is the first to qualify under the id tie rule
_G_ORDER = ("a5", "a6", "a1", "a2", "a3", "a4", "a7")


def _appxG_block(eps: float) -> dict[tuple[str, str], float]:
    s = math.sqrt(17)
    return {
        ("a1", "a2"): 1.0, ("a1", "a3"): 2.0, ("a1", "a4"): (s - 1) / 2,
        ("a1", "a5"): (s + 1) / 2 - eps, ("a1", "a6"): (s + 1) / 2 - eps, ("a1", "a7"): (s + 3) / 2 - 2 * eps,
        ("a2", "a3"): 1.0, ("a2", "a4"): (s - 3) / 2,
        ("a2", "a5"): (s - 1) / 2 - eps, ("a2", "a6"): (s - 1) / 2 - eps, ("a2", "a7"): (s + 1) / 2 - 2 * eps,
        ("a3", "a4"): (s - 1) / 2,
        ("a3", "a5"): (s + 1) / 2 - eps, ("a3", "a6"): (s + 1) / 2 - eps, ("a3", "a7"): (s + 3) / 2 - 2 * eps,
        ("a4", "a5"): 1 - eps, ("a4", "a6"): 1 - eps, ("a4", "a7"): 2 - 2 * eps,
        ("a5", "a6"): 0.0, ("a5", "a7"): 1 - eps,
        ("a6", "a7"): 1 - eps,
    }


def _appxG(eps: float = 1e-4, blocks: int = 4) -> Fixture:
    if not 0 < eps < 0.05:
        raise ValueError("needs 0 < eps < 0.05")
    block = _appxG_block(eps)
    sizes, table = {}, {}
    for b in range(blocks):
        for name in _G_ORDER:
            sizes[f"{name}_{b}"] = 1
        for (x, y), v in block.items():
            table[f"{x}_{b}", f"{y}_{b}"] = v
    inst, g = group_instance(sizes, table)
    k = 7

    def pt(name, b):
        return g[f"{name}_{b}"][0]

    # block 0 holds a single seat at a7; every other block holds a5 and a2
    tight = [pt("a7", 0)] + [pt(x, b) for b in range(1, blocks) for x in ("a5", "a2")]
    panels = {"tight": make_panel(tight), "deviation": make_panel([pt("a2", 0)])}
    return Fixture("appxG", inst, k, 1, g, panels, params={"eps": eps})


_BUILDERS = {
    "thm31": _thm31,
    "thm42": _thm42,
    "appxA": _appxA,
    "appxB_tight": _appxB_tight,
    "propE1_a": _propE1_a,
    "propE1_b": _propE1_b,
    "appxG": _appxG,
}

FIXTURE_NAMES = tuple(_BUILDERS)


def fixture(name: str, **params) -> Fixture:
    """Build a named fixture; keyword parameters override its defaults."""
    try:
        build = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURE_NAMES)}") from None
    return build(**params)
