"""Experiment runner: random metrics from a dataset, panels, audits, CSV reports.

Column order of ``rows.csv``::

    seed,algorithm,q,k,n,N,violation,unbounded,social_cost,opt_cost,cost_ratio,panel,error

``violation`` is the audit estimate, ``cost_ratio`` is the best known
social cost divided by the panel's (at most 1).  Infinity is written ``inf``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .audit import audit_panel, opt_social_cost, social_cost
from .birkhoff import BIRKHOFF_MAX_N, fgc_distribution, sample_panel
from .metric import FeatureSchema, MetricInstance, build_metric, dedupe_table, load_dataset
from .selectors import afgc_sample, uniform_panel

ROW_COLUMNS = (
    "seed", "algorithm", "q", "k", "n", "N", "violation", "unbounded",
    "social_cost", "opt_cost", "cost_ratio", "panel", "error",
)
AGGREGATE_COLUMNS = (
    "algorithm", "q", "rows", "errors", "mean_violation", "max_violation",
    "fraction_unbounded", "mean_cost_ratio",
)
ALGORITHMS = ("uniform", "fgc", "afgc")
SYNTHETIC = "synthetic:adult"

# RNG stream ids under (master_seed, seed_index)
_STREAM_SUBSAMPLE, _STREAM_METRIC, _STREAM_PANEL, _STREAM_OPT = 0, 1, 2, 3


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment settings; see :func:`parse_config` for the file format."""

    dataset: str = SYNTHETIC
    schema: str | None = None
    seeds: int = 100
    subsample: int = 300
    k: int = 40
    q: tuple[int, ...] = ()
    algorithms: tuple[str, ...] = ("uniform", "fgc")
    master_seed: int = 0
    output: str = "results"
    resolution: int | None = None
    restarts: int = 5
    workers: int = 1
    gate: int = BIRKHOFF_MAX_N

    def __post_init__(self):
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if not 1 <= self.subsample <= self.gate:
            raise ValueError(f"subsample must lie in [1, gate={self.gate}]")
        if self.k < 1:
            raise ValueError("k must be positive")
        if not self.q:
            object.__setattr__(self, "q", tuple(range(1, self.k + 1)))
        if any(not 1 <= q <= self.k for q in self.q):
            raise ValueError("every q must lie in [1, k]")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms: {sorted(bad)}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def target_N(self) -> int:
        return self.resolution if self.resolution is not None else 1000 * self.k


def _int_list(value: str) -> tuple[int, ...]:
    out = []
    for part in value.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` comments).

    Keys: dataset, schema, seeds, subsample, k, q (e.g. ``1-3,5``),
    algorithms (comma separated), master_seed, output, resolution,
    restarts, workers, gate.  Relative paths resolve against ``base_dir``.
    """
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key == "q":
            values[key] = _int_list(value)
        elif key == "algorithms":
            values[key] = tuple(a.strip() for a in value.split(",") if a.strip())
        elif key in ("dataset", "schema", "output"):
            values[key] = value
        else:
            values[key] = int(value)
    if base_dir is not None:
        for key in ("dataset", "schema", "output"):
            v = values.get(key)
            if v and v != SYNTHETIC and not Path(v).is_absolute():
                values[key] = str(Path(base_dir) / v)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path.parent)


# --------------------------------------------------------------------------
# data
# --------------------------------------------------------------------------


ADULT_SCHEMA = """\
weight_column = fnlwgt
feature = sex, categorical
feature = race, categorical
feature = workclass, categorical
feature = marital.status, categorical
feature = education.num, continuous
"""

_LEVELS = {
    "sex": ["Female", "Male"],
    "race": ["White", "Black", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other"],
    "workclass": ["Private", "Self-emp-not-inc", "Self-emp-inc", "Local-gov", "State-gov", "Federal-gov"],
    "marital.status": ["Married-civ-spouse", "Never-married", "Divorced", "Separated", "Widowed"],
}


def synthetic_adult(n_points: int = 300, heavy_share: float = 0.083, seed: int = 0, split_rows: int = 0) -> pd.DataFrame:
    """Adult-style table with ``n_points`` distinct rows, one of which carries
    ``heavy_share`` of the total weight.

    ``split_rows`` duplicates that many rows with their weight split in two,
    so deduplication has something to merge.
    """
    rng = np.random.default_rng(seed)
    seen, rows = set(), []
    # the heavy point is the most common Adult profile
    heavy = ("Male", "White", "Private", "Married-civ-spouse", 9)
    seen.add(heavy)
    rows.append(heavy)
    while len(rows) < n_points:
        r = tuple(rng.choice(v) for v in _LEVELS.values()) + (int(rng.integers(1, 17)),)
        if r not in seen:
            seen.add(r)
            rows.append(r)
    w = rng.lognormal(mean=0.0, sigma=1.0, size=n_points - 1)
    w = w / w.sum() * (1 - heavy_share)
    weights = np.concatenate([[heavy_share], w]) * 3.2e7
    df = pd.DataFrame(rows, columns=list(_LEVELS) + ["education.num"])
    df["fnlwgt"] = np.round(weights, 3)
    if split_rows:
        idx = rng.choice(np.arange(1, n_points), size=split_rows, replace=False)
        extra = df.loc[idx].copy()
        half = np.round(extra["fnlwgt"] / 2, 3)
        df.loc[idx, "fnlwgt"] = df.loc[idx, "fnlwgt"] - half
        extra["fnlwgt"] = half
        df = pd.concat([df, extra]).sample(frac=1.0, random_state=seed).reset_index(drop=True)
    return df


def bundled_sample_path() -> Path:
    return Path(str(resources.files("fairpanel") / "data" / "adult_sample.csv"))


def bundled_schema_path() -> Path:
    return Path(str(resources.files("fairpanel") / "data" / "adult.schema"))


def _load_table(cfg: ExperimentConfig) -> tuple[pd.DataFrame, FeatureSchema]:
    if cfg.dataset == SYNTHETIC:
        schema = FeatureSchema.parse(ADULT_SCHEMA)
        return dedupe_table(synthetic_adult(cfg.subsample), schema), schema
    if cfg.schema is None:
        raise ValueError("a dataset file needs a schema")
    schema = FeatureSchema.load(cfg.schema)
    return load_dataset(cfg.dataset, schema), schema


def _rng(cfg: ExperimentConfig, seed_idx: int, stream: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([cfg.master_seed, seed_idx, stream, *extra])


def subsample_table(table: pd.DataFrame, cap: int, rng: np.random.Generator) -> pd.DataFrame:
    """At most ``cap`` rows, drawn with probability proportional to weight, without replacement."""
    if len(table) <= cap:
        return table.reset_index(drop=True)
    p = table["weight"].to_numpy(dtype=float)
    idx = np.sort(rng.choice(len(table), size=cap, replace=False, p=p / p.sum()))
    return table.iloc[idx].reset_index(drop=True)


def instance_for_seed(cfg: ExperimentConfig, table: pd.DataFrame, schema: FeatureSchema, seed_idx: int) -> MetricInstance:
    sub = subsample_table(table, cfg.subsample, _rng(cfg, 0, _STREAM_SUBSAMPLE))
    return build_metric(sub, schema, seed=_rng(cfg, seed_idx, _STREAM_METRIC), resolution=cfg.target_N)


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def _seed_rows(cfg: ExperimentConfig, seed_idx: int, table: pd.DataFrame, schema: FeatureSchema) -> list[dict]:
    inst = instance_for_seed(cfg, table, schema, seed_idx)
    k = cfg.k
    fgc = None
    rows = []
    for q in cfg.q:
        try:
            _, opt = opt_social_cost(
                inst, k, q, method="greedy", restarts=cfg.restarts, seed=_rng(cfg, seed_idx, _STREAM_OPT, q)
            )
            opt_error = ""
        except Exception as exc:
            opt, opt_error = math.inf, f"opt_social_cost: {type(exc).__name__}: {exc}".replace("\n", " ")
        block = []
        for a_idx, algo in enumerate(cfg.algorithms):
            row = {"seed": seed_idx, "algorithm": algo, "q": q, "k": k, "n": inst.n, "N": inst.N, "error": ""}
            try:
                rng = _rng(cfg, seed_idx, _STREAM_PANEL, a_idx, q)
                if algo == "uniform":
                    panel = uniform_panel(inst, k, rng)
                elif algo == "fgc":
                    if fgc is None:
                        fgc = fgc_distribution(inst, k, max_exact_n=cfg.gate)
                    panel = sample_panel(fgc, rng)
                else:
                    panel = afgc_sample(inst, k, q, rng)
                alpha = audit_panel(inst, panel, k, q).alpha_hat
                cost = social_cost(inst, panel, q)
                row.update(
                    violation=alpha,
                    unbounded=int(inst.is_unbounded(alpha)),
                    social_cost=cost,
                    panel=" ".join(map(str, panel)),
                )
                opt = min(opt, cost)
            except Exception as exc:  # recorded per row; the run continues
                row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
            block.append(row)
        for row in block:
            if opt_error and not row["error"]:
                row["error"] = opt_error
            if not row["error"]:
                row["opt_cost"] = opt
                row["cost_ratio"] = 1.0 if row["social_cost"] == 0 else opt / row["social_cost"]
        rows.extend(block)
    return rows


def _seed_task(args):
    cfg, seed_idx = args
    table, schema = _load_table(cfg)
    return _seed_rows(cfg, seed_idx, table, schema)


def rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in ROW_COLUMNS])
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run every (seed, algorithm, q) cell and write the report files.

    Output is identical for any worker count.
    """
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    table, schema = _load_table(cfg)
    if cfg.workers == 1:
        per_seed = [_seed_rows(cfg, s, table, schema) for s in range(cfg.seeds)]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_seed = list(pool.map(_seed_task, [(cfg, s) for s in range(cfg.seeds)]))
    rows = [r for block in per_seed for r in block]
    (out / "rows.csv").write_text(rows_csv(rows), encoding="utf-8")
    summarize(out)
    return out


def summarize(report_dir) -> dict[str, Path]:
    """Aggregate ``rows.csv`` into ``aggregate.csv`` and the two figure series.

    ``figure_expost.csv`` holds the mean bounded violation per
    ``(algorithm, q)``; ``figure_socialcost.csv`` the mean cost ratio.
    """
    report_dir = Path(report_dir)
    path = report_dir / "rows.csv"
    if not path.exists():
        raise FileNotFoundError(f"no rows.csv in {report_dir}")
    df = pd.read_csv(path, keep_default_na=False, dtype={"error": str, "panel": str})
    if df.empty:
        raise ValueError(f"{path} has no rows")
    agg_rows = []
    for (algo, q), g in df.groupby(["algorithm", "q"], sort=False):
        ok = g[g["error"] == ""]
        viol = pd.to_numeric(ok["violation"], errors="coerce").astype(float)
        unb = ok["unbounded"].astype(int) == 1
        bounded = viol[~unb]
        ratio = pd.to_numeric(ok["cost_ratio"], errors="coerce").astype(float)
        agg_rows.append({
            "algorithm": algo,
            "q": int(q),
            "rows": len(g),
            "errors": int((g["error"] != "").sum()),
            "mean_violation": float(bounded.mean()) if len(bounded) else math.nan,
            "max_violation": float(viol.max()) if len(viol) else math.nan,
            "fraction_unbounded": float(unb.mean()) if len(ok) else math.nan,
            "mean_cost_ratio": float(ratio.mean()) if len(ratio) else math.nan,
        })
    agg_rows.sort(key=lambda r: (r["algorithm"], r["q"]))
    files = {}

    def write(name, header, records):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in records:
            w.writerow([_fmt(x) for x in r])
        files[name] = report_dir / name
        files[name].write_text(buf.getvalue(), encoding="utf-8")

    write("aggregate.csv", AGGREGATE_COLUMNS, [[r[c] for c in AGGREGATE_COLUMNS] for r in agg_rows])
    write("figure_expost.csv", ("algorithm", "q", "value"), [[r["algorithm"], r["q"], r["mean_violation"]] for r in agg_rows])
    write("figure_socialcost.csv", ("algorithm", "q", "value"), [[r["algorithm"], r["q"], r["mean_cost_ratio"]] for r in agg_rows])
    return files


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
