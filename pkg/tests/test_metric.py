import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import euclid, random_instance
from fairpanel import fixture
from fairpanel.metric import (
    DatasetError,
    FeatureSchema,
    MetricError,
    MetricInstance,
    ball,
    build_metric,
    check_panel,
    cost_ratio,
    dedupe_table,
    dump_distance_matrix,
    entitled_size,
    integer_weights,
    kth_largest_weighted,
    load_dataset,
    parse_distance_matrix,
    preference_count,
    q_cost,
    q_costs,
    top_q,
)
from fairpanel.harness import ADULT_SCHEMA, bundled_sample_path, bundled_schema_path


def line_instance():
    return MetricInstance(euclid([0, 1, 10, 11]))


# ---------------------------------------------------------------- instance


def test_rejects_non_metric():
    with pytest.raises(MetricError, match="triangle"):
        MetricInstance(np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0.0]]))
    with pytest.raises(MetricError, match="symmetric"):
        MetricInstance(np.array([[0, 1], [2, 0.0]]))
    with pytest.raises(MetricError, match="self-distances"):
        MetricInstance(np.array([[1, 1], [1, 0.0]]))
    with pytest.raises(MetricError):
        MetricInstance(np.array([[0, -1], [-1, 0.0]]))
    with pytest.raises(MetricError, match="weights"):
        MetricInstance(np.zeros((2, 2)), weight=[1, 0])


def test_instance_is_read_only():
    inst = line_instance()
    with pytest.raises(ValueError):
        inst.dist[0, 1] = 3
    assert inst.N == 4 and inst.unit_weights


def test_expand_and_population():
    inst = MetricInstance(np.zeros((3, 3)), weight=[2, 1, 3])
    assert inst.N == 6
    assert inst.expand().tolist() == [0, 0, 1, 2, 2, 2]


def test_check_panel_multiplicity():
    inst = MetricInstance(np.zeros((2, 2)), weight=[2, 1])
    assert check_panel(inst, [0, 0, 1], 3) == (0, 0, 1)
    with pytest.raises(ValueError):
        check_panel(inst, [1, 1], 2)
    with pytest.raises(ValueError):
        check_panel(inst, [0, 5], 2)


# ---------------------------------------------------------------- costs


def test_q_cost_self_is_zero():
    inst = line_instance()
    assert q_cost(inst, 2, (1, 2, 3), 1) == 0


def test_q_cost_star_leaf():
    fx = fixture("thm42", k=3, q=1, n=18)
    leaf = fx.groups["leaf"][0]
    assert q_cost(fx.inst, leaf, fx.panels["I"], 1) == 1


def test_q_cost_tight_instance():
    fx = fixture("appxB_tight")
    for i in fx.groups["A"]:
        assert q_cost(fx.inst, i, fx.panels["AB"], fx.k) == 2


def test_q_cost_rejects_large_q():
    with pytest.raises(ValueError):
        q_cost(line_instance(), 0, (1, 2), 3)


def test_top_q_full_panel_and_ties():
    inst = MetricInstance(np.zeros((5, 5)))
    assert top_q(inst, 0, (1, 2, 4), 3) == (1, 2, 4)
    assert top_q(inst, 3, (4, 1, 2), 2) == (1, 2)


def test_top_q_matches_full_sort():
    rng = np.random.default_rng(7)
    for _ in range(30):
        inst = random_instance(rng, 8)
        panel = tuple(sorted(rng.choice(8, size=4, replace=False)))
        for i in range(8):
            for q in range(1, 5):
                oracle = sorted(panel, key=lambda p: (inst.dist[i, p], p))[:q]
                assert top_q(inst, i, panel, q) == tuple(sorted(oracle))


def test_ball_examples():
    inst = line_instance()
    assert ball(inst, 0, 1) == {0, 1}
    assert ball(inst, 2, 0) == {2}
    assert ball(inst, 1, 100) == {0, 1, 2, 3}
    with pytest.raises(ValueError):
        ball(inst, 0, -1)


def test_cost_ratio_conventions():
    assert cost_ratio(0.0, 0.0) == 1
    assert cost_ratio(2.0, 0.0) == float("inf")
    assert cost_ratio(0.0, 2.0) == 0
    assert cost_ratio(3.0, 1.5) == 2


def test_preference_count_against_itself_is_zero():
    inst = line_instance()
    assert preference_count(inst, (0, 2), (0, 2), 1.0, 1) == 0


def test_preference_count_group_instance():
    fx = fixture("thm31", n=12, k=3)
    assert preference_count(fx.inst, fx.panels["all_A"], fx.panels["one_B"], 10, 1) == 8


def test_preference_count_matches_loop():
    rng = np.random.default_rng(11)
    for _ in range(30):
        inst = random_instance(rng, 8, max_weight=3)
        P = tuple(sorted(rng.choice(8, size=3, replace=False)))
        Q = tuple(sorted(rng.choice(8, size=2, replace=False)))
        for q in (1, 2):
            expected = sum(
                int(inst.weight[i])
                for i in range(8)
                if q_cost(inst, i, P, q) > 2 * q_cost(inst, i, Q, q)
            )
            assert preference_count(inst, P, Q, 2.0, q) == expected


def test_preference_count_rejects_small_alpha():
    with pytest.raises(ValueError):
        preference_count(line_instance(), (0,), (1,), 0.5, 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(3, 9))
def test_cost_triangle_bound_and_superset_monotonicity(seed, n):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n)
    size = int(rng.integers(1, n))
    P = tuple(sorted(rng.choice(n, size=size, replace=False)))
    extra = tuple(sorted(set(P) | {int(rng.integers(n))}))
    for q in range(1, size + 1):
        c = q_costs(inst, P, q)
        c_sup = q_costs(inst, extra, q)
        assert np.all(c_sup <= c)
        # c_q(i, P) <= d(i, i') + c_q(i', P)
        assert np.all(c[:, None] <= inst.dist + c[None, :] + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_preference_count_monotone_in_alpha(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 7, max_weight=2)
    P = tuple(sorted(rng.choice(7, size=3, replace=False)))
    Q = tuple(sorted(rng.choice(7, size=2, replace=False)))
    counts = [preference_count(inst, P, Q, a, 1) for a in (1, 1.5, 2, 4, 10)]
    assert counts == sorted(counts, reverse=True)


def test_kth_largest_weighted_and_entitlement():
    values = np.array([5.0, 1.0, 3.0])
    weights = np.array([2, 1, 3])
    assert [kth_largest_weighted(values, weights, r) for r in range(1, 7)] == [5, 5, 3, 3, 3, 1]
    assert entitled_size(1, 12, 3) == 4
    assert entitled_size(2, 10, 3) == 7


# ---------------------------------------------------------------- data


def schema():
    return FeatureSchema.parse(ADULT_SCHEMA)


def test_schema_round_trip():
    s = FeatureSchema.parse("weight_column = w\nfeature = a, categorical\nfeature = b, continuous, 0.5  # fixed\n")
    assert s.names == ["a", "b"] and s.weight_column == "w"
    assert FeatureSchema.parse(s.dumps()) == s
    with pytest.raises(DatasetError):
        FeatureSchema.parse("feature = a, ordinal")
    with pytest.raises(DatasetError):
        FeatureSchema.parse("colour = blue")


def test_dedupe_merges_identical_rows():
    df = pd.DataFrame({"a": ["x", "x", "y"], "fnlwgt": [3, 4, 1]})
    s = FeatureSchema.parse("weight_column = fnlwgt\nfeature = a, categorical")
    out = dedupe_table(df, s)
    assert out.set_index("a")["weight"].to_dict() == {"x": 7, "y": 1}


def test_load_bundled_sample_matches_pandas_dedupe():
    table = load_dataset(bundled_sample_path(), bundled_schema_path())
    raw = pd.read_csv(bundled_sample_path())
    names = schema().names
    assert len(table) == len(raw.drop_duplicates(subset=names))
    assert table["weight"].sum() == pytest.approx(raw["fnlwgt"].sum())


def test_load_errors(tmp_path):
    s = schema()
    p = tmp_path / "bad.csv"
    p.write_text("sex,race,workclass,marital.status,fnlwgt\nMale,White,Private,Divorced,1\n")
    with pytest.raises(DatasetError, match="education.num"):
        load_dataset(p, s)
    p.write_text("sex,race,workclass,marital.status,education.num,fnlwgt\nMale,White,Private,Divorced,high,1\n")
    with pytest.raises(DatasetError, match="non-numeric"):
        load_dataset(p, s)
    p.write_text("sex,race,workclass,marital.status,education.num,fnlwgt\nMale,White,Private,Divorced,3,0\n")
    with pytest.raises(DatasetError, match="nonpositive"):
        load_dataset(p, s)


def test_build_metric_examples():
    s = FeatureSchema.parse("feature = c, categorical, 1\n")
    inst = build_metric(pd.DataFrame({"c": ["a", "b"], "weight": [1, 1]}), s)
    assert inst.dist[0, 1] == 1 and inst.dist[0, 0] == 0
    s = FeatureSchema.parse("feature = x, continuous, 1\n")
    inst = build_metric(pd.DataFrame({"x": [0.0, 50.0, 100.0], "weight": [1, 1, 1]}), s)
    assert inst.dist[0, 1] == pytest.approx(0.5)


def test_build_metric_constant_feature_warns():
    s = FeatureSchema.parse("feature = x, continuous, 0.5\nfeature = c, categorical, 0.5\n")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        inst = build_metric(pd.DataFrame({"x": [1.0, 1.0], "c": ["a", "b"], "weight": [1, 1]}), s)
    assert any("constant" in str(w.message) for w in caught)
    assert inst.dist[0, 1] == 0.5


def test_build_metric_is_metric_for_many_seeds():
    table = load_dataset(bundled_sample_path(), bundled_schema_path()).head(80)
    for seed in range(100):
        inst = build_metric(table, schema(), seed=seed)
        assert inst.n == 80  # construction validates the triangle inequality


def test_integer_weights_resolution():
    w = integer_weights([0.2, 0.3, 99.5], resolution=1000)
    assert w.min() >= 1 and abs(w.sum() - 1000) <= 3
    with pytest.raises(DatasetError):
        integer_weights([1.0, 0.0])


def test_distance_matrix_round_trip(tmp_path):
    inst = line_instance()
    text = dump_distance_matrix(inst, tmp_path / "d.txt")
    assert np.array_equal(parse_distance_matrix(text), inst.dist)
    with pytest.raises(MetricError):
        parse_distance_matrix("3\n0 1\n1 0\n")
