"""Acceptance suite: one test per criterion, each printing a pass/fail line."""

import math
import time
from fractions import Fraction

import numpy as np

from _instances import random_instance, random_panel
from conftest import ACCEPTANCE_LINES
from fairpanel import (
    CoreOracle,
    UniformExAnte,
    audit_panel,
    birkhoff_decompose,
    chu_vandermonde_check,
    complete_bistochastic,
    exact_core_violation,
    exante_exact,
    expected_cost_core_violation,
    fgc_distribution,
    fixture,
    fractional_allocation,
    opt_social_cost,
)
from fairpanel.audit import expected_costs, multisets
from fairpanel.harness import ExperimentConfig, run_experiment
from fairpanel.selectors import afgc_distribution, afgc_seat_counts

GOLDEN_Q1 = (3 + math.sqrt(17)) / 2
AFGC_BOUND = (5 + math.sqrt(41)) / 2


def report(number: int, ok: bool, detail: str):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _fifty_instances():
    rng = np.random.default_rng(101)
    out = []
    for _ in range(50):
        n = int(rng.integers(6, 61))
        k = int(rng.integers(2, 7))
        out.append((random_instance(rng, n), k))
    return out


def test_criterion_01_exact_fairness():
    start = time.perf_counter()
    bad = 0
    for inst, k in _fifty_instances():
        dist = fgc_distribution(inst, k, method="birkhoff")
        if dist.marginals() != [Fraction(k, inst.n)] * inst.n:
            bad += 1
    elapsed = time.perf_counter() - start
    report(1, bad == 0 and elapsed < 10, f"{bad} unfair instances of 50, {elapsed:.1f}s")


def test_criterion_02_birkhoff_validity():
    bad = []
    for idx, (inst, k) in enumerate(_fifty_instances()):
        Y = complete_bistochastic(fractional_allocation(inst, k))
        dist = birkhoff_decompose(Y, keep_permutations=True)
        N = Y.N
        recon = np.zeros_like(Y.units)
        for (panel, lam), perm in zip(dist.entries, dist.permutations):
            recon[np.arange(N), perm] += lam.numerator * (N // lam.denominator)
        ok = (
            np.array_equal(recon, Y.units)
            and sum(dist.probabilities) == 1
            and len(dist) <= N * N - N + 2
            and all(lam > 0 for lam in dist.probabilities)
        )
        if not ok:
            bad.append(idx)
    report(2, not bad, f"reconstruction, sum and length checks failed on {len(bad)} of 50")


def test_criterion_03_expost_six_core():
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    worst, worst_q1, checked = 0.0, 0.0, 0
    for _ in range(200):
        n = int(rng.integers(4, 13))
        k = int(rng.integers(1, min(4, n) + 1))
        inst = random_instance(rng, n)
        panels = fgc_distribution(inst, k).merged().panels
        for q in range(1, k + 1):
            oracle = CoreOracle(inst, k, q)
            for p in panels:
                a = oracle.violation(p).alpha_star
                worst = max(worst, a)
                if q == 1:
                    worst_q1 = max(worst_q1, a)
                checked += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 6 and worst_q1 <= GOLDEN_Q1 + 1e-9 and elapsed < 300
    report(3, ok, f"{checked} panels, max {worst:.4f}, max at q=1 {worst_q1:.4f}, {elapsed:.0f}s")


def test_criterion_04_k_core_factor_two():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 13))
        k = int(rng.integers(1, min(5, n) + 1))
        inst = random_instance(rng, n)
        worst = max(worst, exact_core_violation(inst, random_panel(rng, inst, k), k, k).alpha_star)
    fx = fixture("appxB_tight")
    tight = exact_core_violation(fx.inst, fx.panels["AB"], fx.k, fx.k).alpha_star
    ok = worst <= 2 + 1e-9 and abs(tight - 2) <= 1e-9
    report(4, ok, f"max over 500 pairs {worst:.6f}, tight fixture {tight}")


def test_criterion_05_uniform_unbounded_fgc_bounded():
    fx = fixture("thm31", n=12, k=3)
    inst, k = fx.inst, fx.k
    uniform = [exact_core_violation(inst, fx.panels["all_A"], k, q).alpha_star for q in (1, 2)]
    support = fgc_distribution(inst, k).merged().panels
    fgc_worst = max(exact_core_violation(inst, p, k, q).alpha_star for p in support for q in range(1, k + 1))
    ok = all(math.isinf(a) for a in uniform) and math.isfinite(fgc_worst)
    report(5, ok, f"all-A panel {uniform}, worst FGC support panel {fgc_worst}")


def test_criterion_06_exante_four_core():
    start = time.perf_counter()
    rng = np.random.default_rng(606)
    worst, checks = Fraction(0), 0
    for _ in range(50):
        n = int(rng.integers(2, 13))
        k = int(rng.integers(1, min(4, n) + 1))
        inst = random_instance(rng, n)
        for q in range(1, k + 1):
            ev = UniformExAnte(inst, k, q)
            for s in range(q, k + 1):
                devs = list(multisets([1] * n, s))
                for scaled in ev.expected_counts_scaled(devs, 4.0):
                    # E < |P'| n / k, compared exactly
                    worst = max(worst, Fraction(scaled * k, ev.total * s * n))
                    checks += 1
    elapsed = time.perf_counter() - start
    report(6, worst < 1 and elapsed < 600, f"{checks} deviations, max E / (|P'|n/k) = {float(worst):.4f}, {elapsed:.0f}s")


def test_criterion_07_star_lower_bound():
    k, q, n = 3, 1, 18
    fx = fixture("thm42", k=k, q=q, n=n)
    value = exante_exact(fx.inst, "uniform", fx.panels["I"], 1.99, q, k=k, max_n=n)
    inequality = (1 - Fraction(k, n)) * (n - k) >= Fraction(q * n, k)
    ok = value >= Fraction(q * n, k) and inequality
    report(7, ok, f"E[V] = {value} = {float(value):.3f} vs qn/k = {q * n // k}, inequality {inequality}")


def test_criterion_08_audit_sandwich():
    rng = np.random.default_rng(808)
    bad, inf_cases = [], 0
    for idx in range(300):
        n = int(rng.integers(2, 13))
        k = int(rng.integers(1, min(5, n) + 1))
        inst = random_instance(rng, n)
        panel = random_panel(rng, inst, k)
        for q in range(1, k + 1):
            hat = audit_panel(inst, panel, k, q).alpha_hat
            star = exact_core_violation(inst, panel, k, q).alpha_star
            inf_cases += math.isinf(star)
            if math.isinf(hat) and not math.isinf(star):
                bad.append((idx, q))
            elif not (hat <= star <= 3 * hat + 2):
                bad.append((idx, q))
    report(8, not bad, f"{len(bad)} violations, {inf_cases} unbounded cases")


def test_criterion_09_afgc():
    rng = np.random.default_rng(909)
    trials = 10**5
    worst_z, sizes = 0.0, []
    for idx in range(10):
        n = int(rng.integers(8, 31))
        k = int(rng.integers(2, 7))
        q = int(rng.integers(1, k + 1))
        inst = random_instance(rng, n)
        counts = afgc_seat_counts(inst, k, q, trials, seed=idx)
        p = k / n
        sigma = math.sqrt(p * (1 - p) / trials)
        worst_z = max(worst_z, float(np.abs(counts.mean(axis=0) - p).max() / sigma))
        sizes.append(n)
    worst_alpha = 0.0
    for _ in range(40):
        n = int(rng.integers(4, 13))
        k = int(rng.integers(1, min(4, n) + 1))
        q = int(rng.integers(1, k + 1))
        inst = random_instance(rng, n)
        oracle = CoreOracle(inst, k, q)
        for panel in afgc_distribution(inst, k, q).panels:
            worst_alpha = max(worst_alpha, oracle.violation(panel).alpha_star)
    ok = worst_z <= 3 and worst_alpha <= AFGC_BOUND + 1e-9
    report(9, ok, f"max |z| {worst_z:.2f} over {sum(sizes)} marginals, max realized violation {worst_alpha:.4f}")


def test_criterion_10_uniform_k_core_identity_expected_cost():
    rng = np.random.default_rng(1010)
    worst = Fraction(0)
    for _ in range(30):
        n = int(rng.integers(2, 13))
        k = int(rng.integers(1, min(4, n) + 1))
        inst = random_instance(rng, n)
        ev = UniformExAnte(inst, k, k)
        for scaled in ev.expected_counts_scaled(list(multisets([1] * n, k)), 1.0):
            worst = max(worst, Fraction(scaled, ev.total * n))
    vandermonde = all(
        lhs == rhs
        for n in range(31)
        for k in range(n + 1)
        for r in range(k + 1)
        for lhs, rhs in [chu_vandermonde_check(n, k, r)]
    )
    a = fixture("propE1_a")
    mix_a = a.distributions["mixture"]
    costs_a = set(expected_costs(a.inst, mix_a, a.q))
    expost_a = max(exact_core_violation(a.inst, p, a.k, a.q).alpha_star for p in mix_a.panels)
    exp_a = expected_cost_core_violation(a.inst, mix_a, a.k, a.q)
    b = fixture("propE1_b")
    mix_b = b.distributions["mixture"]
    costs_b = expected_costs(b.inst, mix_b, b.q)
    non_d = [c for i, c in enumerate(costs_b) if i not in b.groups["D"]]
    expost_b = max(exact_core_violation(b.inst, p, b.k, b.q).alpha_star for p in mix_b.panels)
    exp_b = expected_cost_core_violation(b.inst, mix_b, b.k, b.q)
    ok = (
        worst < 1
        and vandermonde
        and costs_a == {Fraction(4, 3), Fraction(1)}
        and expost_a <= 1
        and exp_a.exact == Fraction(4, 3)
        and set(non_d) == {Fraction(1)}
        and exp_b.alpha_star <= 1
        and expost_b >= 2
    )
    report(
        10, ok,
        f"max E/n {float(worst):.4f}, identity {vandermonde}, "
        f"first mixture ex post {expost_a} vs expected-cost {exp_a.exact}, "
        f"second mixture expected-cost {exp_b.alpha_star} vs ex post {expost_b}",
    )


def test_criterion_11_adult_like_qualitative(tmp_path):
    start = time.perf_counter()
    cfg = ExperimentConfig(seeds=20, k=40, q=(1, 2, 3), algorithms=("uniform", "fgc"), output=str(tmp_path), workers=4)
    run_experiment(cfg)
    import pandas as pd

    rows = pd.read_csv(tmp_path / "rows.csv", keep_default_na=False)
    errors = int((rows["error"] != "").sum())
    uni = rows[rows["algorithm"] == "uniform"]
    fgc = rows[rows["algorithm"] == "fgc"]
    frac = float(uni["unbounded"].astype(int).mean())
    per_q = uni.groupby("q")["unbounded"].apply(lambda s: s.astype(int).mean()).to_dict()
    fgc_max = float(pd.to_numeric(fgc["violation"]).max())
    elapsed = time.perf_counter() - start
    ok = errors == 0 and 0 < frac < 1 and fgc_max <= 6 and elapsed < 1800
    report(
        11, ok,
        f"uniform unbounded fraction {frac:.2f} (per q {per_q}), FGC max {fgc_max:.3f}, {elapsed:.0f}s",
    )


def test_criterion_12_social_cost_counterexample():
    fx = fixture("appxA", n=9)
    panel, cost = opt_social_cost(fx.inst, fx.k, fx.q, method="brute")
    members = set(panel)
    has_singletons = set(fx.groups["A"]) | set(fx.groups["B"]) <= members
    misses = [g for g in "CD" if not members & set(fx.groups[g])]
    ok = math.isfinite(cost) and cost < fx.inst.inf_distance and has_singletons and len(misses) == 1
    report(12, ok, f"optimal panel {panel}, cost {cost}, unrepresented group {misses}")
