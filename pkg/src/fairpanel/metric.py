"""Population model, distance construction and q-cost primitives.

A population is a set of ``n`` data points, each carrying a positive integer
multiplicity (``weight``).  The effective population is ``N = weight.sum()``
virtual individuals; a point of weight ``w`` stands for ``w`` co-located people.
Panels are sorted tuples of point ids.  A point may appear more than once in a
panel when it has weight > 1 (one seat per selected virtual individual).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

Panel = tuple[int, ...]

TRIANGLE_RTOL = 1e-9


class MetricError(ValueError):
    """Raised when a distance matrix or dataset violates the metric contract."""


class DatasetError(ValueError):
    """Raised when a dataset or schema cannot be loaded."""


def make_panel(members: Iterable[int]) -> Panel:
    return tuple(sorted(int(m) for m in members))


# --------------------------------------------------------------------------
# instance
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MetricInstance:
    """Immutable population on a metric.

    Parameters
    ----------
    dist : ndarray of shape (n, n)
        Symmetric nonnegative distances with a zero diagonal.
    weight : ndarray of shape (n,), optional
        Positive integer multiplicities.  Defaults to all ones.
    labels : sequence, optional
        Opaque per-point tags (group names in fixtures, row keys for datasets).
    inf_distance : float, optional
        When the instance encodes "infinitely far" with a large finite value,
        the value used.  Ratios at that scale are reported as unbounded.
    """

    dist: np.ndarray
    weight: np.ndarray = None
    labels: tuple | None = None
    inf_distance: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        dist = np.array(self.dist, dtype=float)
        if self.weight is None:
            weight = np.ones(dist.shape[0], dtype=np.int64)
        else:
            weight = np.asarray(self.weight)
            if weight.dtype.kind == "f":
                if not np.all(np.equal(np.round(weight), weight)):
                    raise MetricError("weights must be integers")
            weight = weight.astype(np.int64)
        check_metric(dist, weight)
        dist.setflags(write=False)
        weight.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "weight", weight)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def N(self) -> int:
        return int(self.weight.sum())

    @property
    def unit_weights(self) -> bool:
        return bool(np.all(self.weight == 1))

    def expand(self) -> np.ndarray:
        """Point id of every virtual individual, in id order."""
        return np.repeat(np.arange(self.n), self.weight)

    def is_unbounded(self, alpha: float) -> bool:
        if math.isinf(alpha):
            return True
        if self.inf_distance is None:
            return False
        finite = self.dist[self.dist < self.inf_distance]
        scale = self.inf_distance / max(finite.max(initial=0.0), np.finfo(float).tiny)
        return alpha >= scale / 10

    @classmethod
    def from_matrix(cls, dist, weight=None, labels=None) -> "MetricInstance":
        return cls(dist=np.asarray(dist, dtype=float), weight=weight, labels=labels)


def check_metric(dist: np.ndarray, weight: np.ndarray | None = None, rtol: float = TRIANGLE_RTOL):
    """Validate a distance matrix (and optional weights); raise :class:`MetricError`."""
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise MetricError(f"distance matrix must be square, got shape {dist.shape}")
    n = dist.shape[0]
    if n == 0:
        raise MetricError("empty population")
    if not np.all(np.isfinite(dist)):
        raise MetricError("distances must be finite (encode infinity as a large value)")
    if np.any(dist < 0):
        raise MetricError("distances must be nonnegative")
    if np.any(np.diag(dist) != 0):
        raise MetricError("self-distances must be zero")
    if not np.array_equal(dist, dist.T):
        raise MetricError("distance matrix must be symmetric")
    scale = max(dist.max(), 1.0)
    # d[i, j] <= d[i, l] + d[l, j], one intermediate l at a time to bound memory
    for l in range(n):
        via = dist[:, l][:, None] + dist[l, :][None, :]
        if np.any(dist > via + rtol * scale):
            i, j = np.argwhere(dist > via + rtol * scale)[0]
            raise MetricError(
                f"triangle inequality fails: d({i},{j})={dist[i, j]} > "
                f"d({i},{l})+d({l},{j})={via[i, j]}"
            )
    if weight is not None:
        if weight.shape != (n,):
            raise MetricError(f"weight must have shape ({n},), got {weight.shape}")
        if np.any(weight < 1):
            raise MetricError("weights must be >= 1")


def check_panel(inst: MetricInstance, panel: Sequence[int], size: int | None = None) -> Panel:
    """Normalize a panel and check ids and multiplicities against the instance."""
    p = make_panel(panel)
    if not p:
        raise ValueError("panel is empty")
    if p[0] < 0 or p[-1] >= inst.n:
        raise ValueError(f"panel ids must lie in [0, {inst.n})")
    counts = np.bincount(np.asarray(p), minlength=inst.n)
    if np.any(counts > inst.weight):
        bad = int(np.flatnonzero(counts > inst.weight)[0])
        raise ValueError(f"point {bad} seated {counts[bad]} times but has weight {inst.weight[bad]}")
    if size is not None and len(p) != size:
        raise ValueError(f"panel must have {size} members, got {len(p)}")
    return p


# --------------------------------------------------------------------------
# cost primitives
# --------------------------------------------------------------------------


def _seat_order(inst: MetricInstance, i: int, panel: Panel) -> list[int]:
    """Seats of ``panel`` sorted by distance from ``i``, ties by id."""
    return sorted(range(len(panel)), key=lambda s: (inst.dist[i, panel[s]], panel[s], s))


def q_cost(inst: MetricInstance, i: int, panel: Sequence[int], q: int) -> float:
    """Distance from ``i`` to its ``q``-th closest panel member."""
    panel = make_panel(panel)
    if not 1 <= q <= len(panel):
        raise ValueError(f"q must lie in [1, {len(panel)}], got {q}")
    d = np.sort(inst.dist[i, list(panel)])
    return float(d[q - 1])


def q_costs(inst: MetricInstance, panel: Sequence[int], q: int) -> np.ndarray:
    """Vector of q-costs of every point for one panel."""
    panel = np.asarray(make_panel(panel))
    if not 1 <= q <= len(panel):
        raise ValueError(f"q must lie in [1, {len(panel)}], got {q}")
    cols = inst.dist[:, panel]
    return np.partition(cols, q - 1, axis=1)[:, q - 1]


def top_q(inst: MetricInstance, i: int, panel: Sequence[int], q: int) -> Panel:
    """The ``q`` closest members of ``panel`` to ``i`` (ties by id)."""
    panel = make_panel(panel)
    if not 1 <= q <= len(panel):
        raise ValueError(f"q must lie in [1, {len(panel)}], got {q}")
    seats = _seat_order(inst, i, panel)[:q]
    return make_panel(panel[s] for s in seats)


def top_q_seats(inst: MetricInstance, i: int, panel: Panel, q: int) -> frozenset[int]:
    """Seat positions (indices into ``panel``) of the q closest members."""
    return frozenset(_seat_order(inst, i, panel)[:q])


def ball(inst: MetricInstance, i: int, r: float) -> frozenset[int]:
    """Closed ball of radius ``r`` around ``i``."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    return frozenset(np.flatnonzero(inst.dist[i] <= r).tolist())


def cost_ratio(c_panel, c_dev):
    """Elementwise improvement ratio with the zero conventions.

    ``x / 0 = inf`` for ``x > 0`` and ``0 / 0 = 1``.
    """
    c_panel = np.asarray(c_panel, dtype=float)
    c_dev = np.asarray(c_dev, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = c_panel / c_dev
    r = np.where(c_dev == 0, np.where(c_panel > 0, np.inf, 1.0), r)
    return r


def preference_count(inst: MetricInstance, panel, deviation, alpha: float, q: int) -> int:
    """Weighted number of individuals whose q-cost under ``panel`` exceeds
    ``alpha`` times their q-cost under ``deviation``."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    c_p = q_costs(inst, panel, q)
    c_d = q_costs(inst, deviation, q)
    mask = c_p > alpha * c_d
    return int(inst.weight[mask].sum())


def kth_largest_weighted(values: np.ndarray, weights: np.ndarray, rank: int) -> float:
    """``rank``-th largest element of the multiset where ``values[i]`` repeats ``weights[i]`` times."""
    order = np.argsort(-values, kind="stable")
    cum = np.cumsum(weights[order])
    pos = int(np.searchsorted(cum, rank))
    return float(values[order[pos]])


def entitled_size(panel_size: int, N: int, k: int) -> int:
    """Smallest coalition size that may claim ``panel_size`` seats: ceil(s * N / k)."""
    return -(-panel_size * N // k)


# --------------------------------------------------------------------------
# datasets and metric construction
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str  # "categorical" | "continuous"
    weight: float | None = None

    def __post_init__(self):
        if self.kind not in ("categorical", "continuous"):
            raise DatasetError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.weight is not None and self.weight < 0:
            raise DatasetError(f"feature {self.name!r}: weight must be nonnegative")


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]
    weight_column: str | None = None

    def __post_init__(self):
        if not self.features:
            raise DatasetError("schema needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DatasetError("duplicate feature names in schema")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def fixed_weights(self) -> bool:
        return all(f.weight is not None for f in self.features)

    @classmethod
    def parse(cls, text: str) -> "FeatureSchema":
        """Parse the key-value schema format::

            weight_column = fnlwgt
            feature = sex, categorical
            feature = education.num, continuous, 0.25
        """
        feats, wcol = [], None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DatasetError(f"schema line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "weight_column":
                wcol = value or None
            elif key == "feature":
                parts = [p.strip() for p in value.split(",")]
                if len(parts) not in (2, 3):
                    raise DatasetError(f"schema line {lineno}: feature = name, kind[, weight]")
                w = float(parts[2]) if len(parts) == 3 else None
                feats.append(Feature(parts[0], parts[1], w))
            else:
                raise DatasetError(f"schema line {lineno}: unknown key {key!r}")
        return cls(tuple(feats), wcol)

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def dumps(self) -> str:
        lines = []
        if self.weight_column:
            lines.append(f"weight_column = {self.weight_column}")
        for f in self.features:
            tail = "" if f.weight is None else f", {f.weight!r}"
            lines.append(f"feature = {f.name}, {f.kind}{tail}")
        return "\n".join(lines) + "\n"


def dedupe_table(df: pd.DataFrame, schema: FeatureSchema) -> pd.DataFrame:
    """Merge identical feature rows, summing their weights into a ``weight`` column."""
    names = schema.names
    if schema.weight_column and schema.weight_column in df.columns:
        w = pd.to_numeric(df[schema.weight_column], errors="coerce")
        if w.isna().any():
            raise DatasetError(f"non-numeric value in weight column {schema.weight_column!r}")
        if (w <= 0).any():
            raise DatasetError("nonpositive weight")
    else:
        w = pd.Series(1, index=df.index)
    tmp = df[names].copy()
    tmp["weight"] = w.to_numpy()
    out = tmp.groupby(names, sort=True, dropna=False, as_index=False)["weight"].sum()
    return out.reset_index(drop=True)


def load_dataset(path, schema: FeatureSchema | str | Path) -> pd.DataFrame:
    """Read a CSV of individuals and deduplicate it by the schema features.

    Returns one row per unique feature combination with the summed weight in
    a ``weight`` column (real valued; see :func:`integer_weights`).
    """
    if not isinstance(schema, FeatureSchema):
        schema = FeatureSchema.load(schema)
    try:
        df = pd.read_csv(path, encoding="utf-8", skipinitialspace=True)
    except (OSError, pd.errors.ParserError) as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    for f in schema.features:
        if f.name not in df.columns:
            raise DatasetError(f"dataset is missing feature column {f.name!r}")
        if f.kind == "continuous":
            col = pd.to_numeric(df[f.name], errors="coerce")
            if col.isna().any():
                raise DatasetError(f"non-numeric value in continuous feature {f.name!r}")
            df[f.name] = col
    return dedupe_table(df, schema)


def integer_weights(raw, resolution: int | None = None) -> np.ndarray:
    """Round real weights to positive integers.

    With ``resolution`` the weights are first rescaled to sum to (about)
    ``resolution``; each result is at least 1.
    """
    raw = np.asarray(raw, dtype=float)
    if np.any(raw <= 0):
        raise DatasetError("nonpositive weight")
    if resolution is not None:
        raw = raw * (resolution / raw.sum())
    return np.maximum(1, np.rint(raw)).astype(np.int64)


def draw_feature_weights(schema: FeatureSchema, seed) -> np.ndarray:
    """Per-feature weights: fixed ones from the schema, otherwise U[0,1] draws
    normalized to sum 1."""
    if schema.fixed_weights:
        return np.array([f.weight for f in schema.features], dtype=float)
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.0, 1.0, size=len(schema.features))
    return w / w.sum()


def build_metric(
    table: pd.DataFrame,
    schema: FeatureSchema,
    seed=None,
    resolution: int | None = None,
    feature_weights=None,
) -> MetricInstance:
    """Weighted sum of per-feature distances over a deduplicated table.

    Categorical features contribute ``1[f(i) != f(j)]``; continuous ones
    ``|f(i) - f(j)|`` divided by the feature's observed range.
    """
    if len(table) == 0:
        raise DatasetError("empty table")
    if feature_weights is None:
        feature_weights = draw_feature_weights(schema, seed)
    feature_weights = np.asarray(feature_weights, dtype=float)
    n = len(table)
    dist = np.zeros((n, n))
    for f, wf in zip(schema.features, feature_weights):
        col = table[f.name].to_numpy()
        if f.kind == "categorical":
            codes = pd.factorize(pd.Series(col).astype(str))[0]
            d = (codes[:, None] != codes[None, :]).astype(float)
        else:
            x = col.astype(float)
            span = x.max() - x.min()
            if span == 0:
                warnings.warn(f"continuous feature {f.name!r} is constant; it contributes 0")
                continue
            d = np.abs(x[:, None] - x[None, :]) / span
        dist += wf * d
    # exact symmetry and zero diagonal despite float summation order
    dist = np.triu(dist, 1)
    dist = dist + dist.T
    raw = table["weight"].to_numpy() if "weight" in table.columns else np.ones(n)
    weight = integer_weights(raw, resolution)
    labels = tuple(table.index.tolist())
    return MetricInstance(dist=dist, weight=weight, labels=labels)


# --------------------------------------------------------------------------
# distance-matrix text format
# --------------------------------------------------------------------------


def dump_distance_matrix(inst_or_dist, path=None) -> str:
    dist = inst_or_dist.dist if isinstance(inst_or_dist, MetricInstance) else np.asarray(inst_or_dist)
    lines = [str(dist.shape[0])]
    lines += [" ".join(repr(float(x)) for x in row) for row in dist]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def parse_distance_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MetricError("empty distance-matrix file")
    try:
        n = int(lines[0])
        rows = [[float(x) for x in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise MetricError(f"malformed distance matrix: {exc}") from exc
    if len(rows) != n or any(len(r) != n for r in rows):
        raise MetricError(f"expected {n} rows of {n} values")
    return np.array(rows, dtype=float)


def load_distance_matrix(path, weight=None) -> MetricInstance:
    return MetricInstance(parse_distance_matrix(Path(path).read_text(encoding="utf-8")), weight=weight)
