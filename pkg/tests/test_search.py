import itertools
import json

import numpy as np
import pytest

from gwasel.criteria import CriterionConfig, evaluate
from gwasel.errors import BudgetError
from gwasel.mtest import ScanResult, single_marker_scan
from gwasel.regress import ModelSpec, fit
from gwasel.search import (
    SearchConfig,
    backward_elimination,
    multiple_forward_search,
    refine_subsets,
    screen,
    select_model,
    stepwise,
)
from gwasel.simulate import SimulationConfig, simulate_trait, synthetic_dataset

from conftest import dataset_from_values, random_genotypes


def make_config(kind, dataset, **kw):
    crit = CriterionConfig(kind, n=dataset.n_individuals, p_effective=dataset.n_snps)
    return SearchConfig(criterion=crit, **kw)


def scan_of(p_values):
    p = np.asarray(p_values, dtype=np.float64)
    return ScanResult(
        p_values=p,
        f_statistics=np.zeros_like(p),
        order=np.argsort(p, kind="stable").astype(np.int64),
        degenerate=np.zeros(p.shape, dtype=bool),
    )


def exhaustive_minimizer(dataset, crit, p):
    """Direct lstsq enumeration of every SNP subset."""
    X = dataset.float_values
    y = dataset.trait
    n = len(y)
    best = None
    for size in range(p + 1):
        for sub in itertools.combinations(range(p), size):
            D = np.column_stack([np.ones(n)] + [X[:, j] for j in sub])
            beta, _, rank, _ = np.linalg.lstsq(D, y, rcond=None)
            if rank < D.shape[1]:
                continue
            r = y - D @ beta
            rss = float(r @ r)
            if rss <= 0.0:
                continue
            key = (evaluate(crit, rss, size), size, sub)
            if best is None or key < best:
                best = key
    return best


# ---------------------------------------------------------------------------
# screen
# ---------------------------------------------------------------------------


def test_screen_empty_when_all_above():
    assert screen(scan_of([0.5, 0.5, 0.5]), 0.15) == []


def test_screen_strict_boundary_and_order():
    assert screen(scan_of([0.01, 0.14999, 0.15]), 0.15) == [0, 1]


def test_screen_matches_filter_and_sort_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        ps = rng.random(30)
        got = screen(scan_of(ps), 0.35)
        expected = sorted((j for j in range(30) if ps[j] < 0.35), key=lambda j: (ps[j], j))
        assert got == expected


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def test_forward_single_useful_candidate():
    rng = np.random.default_rng(1)
    values = random_genotypes(rng, 60, 4)
    y = 1.5 * values[:, 2] + rng.normal(size=60)
    ds = dataset_from_values(values, trait=y)
    model = multiple_forward_search(ds, [2], make_config("mbic", ds))
    assert model.snp_indices == (2,)


def test_forward_empty_candidates_gives_null_model():
    rng = np.random.default_rng(2)
    ds = dataset_from_values(random_genotypes(rng, 30, 3), trait=rng.normal(size=30))
    model = multiple_forward_search(ds, [], make_config("mbic", ds))
    assert model.snp_indices == ()


def test_forward_stops_at_cap_with_141_strong_effects():
    # n large enough that every strong candidate lowers one-pass BIC
    ds = synthetic_dataset(1500, 141, seed=3)
    effects = np.full(141, 1.2)
    sim = SimulationConfig(tuple(range(141)), tuple(effects), sigma=0.5, seed=4)
    dsy = ds.with_trait(simulate_trait(ds, sim, 0))
    scan = single_marker_scan(dsy)
    candidates = screen(scan, 0.9999)
    assert len(candidates) == 141
    model = multiple_forward_search(dsy, candidates, make_config("mbic", dsy))
    assert model.size == 140


def test_forward_skips_collinear_duplicates():
    rng = np.random.default_rng(5)
    values = random_genotypes(rng, 50, 6)
    values[:, 3] = values[:, 1]
    y = 2.0 * values[:, 1] + rng.normal(size=50)
    ds = dataset_from_values(values, trait=y)
    model = multiple_forward_search(ds, [1, 3], make_config("mbic", ds))
    assert model.snp_indices == (1,)


# ---------------------------------------------------------------------------
# backward / stepwise
# ---------------------------------------------------------------------------


def test_backward_drops_noise_snp_vs_submodel_oracle():
    rng = np.random.default_rng(6)
    ds = synthetic_dataset(500, 2, seed=6)
    sim = SimulationConfig((0,), (1.0,), sigma=1.0, seed=7)
    dsy = ds.with_trait(simulate_trait(ds, sim, 0))
    crit = CriterionConfig("mbic", n=500, p_effective=2)
    cfg = SearchConfig(criterion=crit)
    model = backward_elimination(dsy, ModelSpec((0, 1)), cfg)

    best = exhaustive_minimizer(dsy, crit, 2)
    assert model.snp_indices == best[2] == (0,)


def test_backward_fixed_point():
    rng = np.random.default_rng(8)
    ds = synthetic_dataset(400, 3, seed=8)
    sim = SimulationConfig((0, 1, 2), (1.0, 1.2, 0.9), sigma=1.0, seed=9)
    dsy = ds.with_trait(simulate_trait(ds, sim, 0))
    cfg = make_config("mbic", dsy)
    model = backward_elimination(dsy, ModelSpec((0, 1, 2)), cfg)
    assert model.snp_indices == (0, 1, 2)
    assert stepwise(dsy, model, cfg, candidates=[0, 1, 2]).snp_indices == (0, 1, 2)


def test_stepwise_trace_strictly_decreases():
    ds = synthetic_dataset(150, 40, seed=10)
    sim = SimulationConfig((5, 20), (0.8, 1.0), sigma=1.0, seed=11)
    dsy = ds.with_trait(simulate_trait(ds, sim, 0))
    _, _, trace = select_model(dsy, make_config("mbic2", dsy))
    by_stage: dict[str, list[float]] = {}
    for rec in trace.accepted():
        by_stage.setdefault(rec.stage, []).append(rec.criterion_value)
    assert by_stage  # at least one accepted move somewhere
    for stage, vals in by_stage.items():
        if stage == "forward":
            continue  # the seeding add may sit above later BIC values
        assert all(b < a for a, b in zip(vals, vals[1:])), stage


# ---------------------------------------------------------------------------
# refine
# ---------------------------------------------------------------------------


def test_refine_no_extras_small_incumbent_picks_best_subset():
    rng = np.random.default_rng(12)
    ds = synthetic_dataset(200, 6, seed=12)
    sim = SimulationConfig((1,), (1.5,), sigma=1.0, seed=13)
    dsy = ds.with_trait(simulate_trait(ds, sim, 0))
    crit = CriterionConfig("mbic2", n=200, p_effective=6)
    cfg = SearchConfig(criterion=crit)
    incumbent = ModelSpec((1, 3, 4))
    refined = refine_subsets(dsy, incumbent, (), cfg)
    subsets = [s for s in powerset((1, 3, 4))]
    best = min(
        ((value_of(dsy, crit, s), len(s), s) for s in subsets if value_of(dsy, crit, s) is not None)
    )
    assert refined.snp_indices == best[2]


def powerset(items):
    out = []
    for size in range(len(items) + 1):
        out.extend(itertools.combinations(items, size))
    return out


def value_of(dataset, crit, subset):
    res = fit(dataset, ModelSpec(tuple(subset)))
    if res.rss <= 0.0:
        return None
    return evaluate(crit, res.rss, len(subset))


def test_refine_dominant_snp_exhaustive_oracle():
    rng = np.random.default_rng(14)
    ds = synthetic_dataset(300, 10, seed=14)
    sim = SimulationConfig((4,), (2.0,), sigma=1.0, seed=15)
    dsy = ds.with_trait(simulate_trait(ds, sim, 0))
    crit = CriterionConfig("mbic2", n=300, p_effective=10)
    cfg = SearchConfig(criterion=crit)
    refined = refine_subsets(dsy, ModelSpec((4,)), tuple(j for j in range(10) if j != 4), cfg)
    best = exhaustive_minimizer(dsy, crit, 10)
    assert refined.snp_indices == best[2] == (4,)


def test_refine_large_combined_takes_backward_fallback():
    rng = np.random.default_rng(16)
    ds = synthetic_dataset(150, 30, seed=16)
    sim = SimulationConfig((2, 9), (1.2, 1.0), sigma=1.0, seed=17)
    dsy = ds.with_trait(simulate_trait(ds, sim, 0))
    cfg = make_config("mbic2", dsy)
    from gwasel.search import SearchTrace

    trace = SearchTrace()
    refined = refine_subsets(dsy, ModelSpec((2, 9)), tuple(range(30)), cfg, _trace=trace)
    assert any(r.action == "fallback_backward" for r in trace.records)
    assert set(refined.snp_indices) >= set()  # returns a valid model
    assert {2, 9} <= set(refined.snp_indices)


def test_refine_budget_error():
    rng = np.random.default_rng(18)
    values = random_genotypes(rng, 60, 30)
    y = rng.normal(size=60)
    ds = dataset_from_values(values, trait=y)
    cfg = make_config("mbic2", ds)
    incumbent = ModelSpec(tuple(range(24)))
    with pytest.raises(BudgetError):
        refine_subsets(ds, incumbent, (), cfg)


# ---------------------------------------------------------------------------
# select_model
# ---------------------------------------------------------------------------


def test_select_single_strong_signal():
    ds = synthetic_dataset(300, 50, seed=19)
    sim = SimulationConfig((17,), (2.0,), sigma=1.0, seed=20)
    dsy = ds.with_trait(simulate_trait(ds, sim, 0))
    model, result, trace = select_model(dsy, make_config("mbic", dsy))
    assert model.snp_indices == (17,)
    assert result.p_value < 1e-6


def test_select_null_mostly_empty():
    ds = synthetic_dataset(200, 500, seed=21)
    sim = SimulationConfig((), (), sigma=1.0, n_replicates=50, seed=22)
    cfg = make_config("mbic", ds)
    empties = 0
    for rep in range(50):
        dsy = ds.with_trait(simulate_trait(ds, sim, rep))
        model, _, _ = select_model(dsy, cfg)
        if model.size == 0:
            empties += 1
    assert empties >= 45


def test_select_never_worse_than_null_model():
    rng = np.random.default_rng(23)
    for inst in range(30):
        ds = synthetic_dataset(80, 15, seed=100 + inst)
        k = inst % 3
        causal = tuple(sorted(rng.choice(15, size=k, replace=False).tolist()))
        sim = SimulationConfig(causal, tuple(rng.uniform(0.2, 1.0, size=k)), seed=inst)
        dsy = ds.with_trait(simulate_trait(ds, sim, 0))
        crit = CriterionConfig("mbic2", n=80, p_effective=15)
        model, result, _ = select_model(dsy, SearchConfig(criterion=crit))
        null_rss = value_of(dsy, crit, ())
        if model.size == 0:
            continue
        assert evaluate(crit, result.rss, model.size) <= null_rss + 1e-9


def test_select_deterministic():
    ds = synthetic_dataset(120, 60, seed=24)
    sim = SimulationConfig((3, 40), (0.9, 1.1), sigma=1.0, seed=25)
    dsy = ds.with_trait(simulate_trait(ds, sim, 0))
    cfg = make_config("mbic2", dsy)
    m1, r1, t1 = select_model(dsy, cfg)
    m2, r2, t2 = select_model(dsy, cfg)
    assert m1 == m2
    assert r1.rss == r2.rss
    assert t1.records == t2.records


def test_select_keeps_forced_covariates():
    rng = np.random.default_rng(26)
    values = random_genotypes(rng, 100, 20)
    cov = rng.normal(size=(100, 2))
    y = cov @ np.array([2.0, -1.0]) + 1.0 * values[:, 7] + rng.normal(size=100)
    ds = dataset_from_values(values, trait=y, covariates=cov)
    model, result, _ = select_model(ds, make_config("mbic", ds))
    assert model.forced_indices == (0, 1)
    assert 7 in model.snp_indices
    assert result.forced_coefficients.shape == (2,)


def test_select_matches_exhaustive_on_small_p():
    hits = 0
    rng = np.random.default_rng(27)
    for inst in range(10):
        ds = synthetic_dataset(100, 12, seed=200 + inst)
        k = inst % 4
        causal = tuple(sorted(rng.choice(12, size=k, replace=False).tolist()))
        sim = SimulationConfig(causal, tuple(rng.uniform(0.5, 1.2, size=k)), seed=inst)
        dsy = ds.with_trait(simulate_trait(ds, sim, 0))
        crit = CriterionConfig("mbic2", n=100, p_effective=12)
        model, _, _ = select_model(dsy, SearchConfig(criterion=crit, screen_threshold=1.0))
        best = exhaustive_minimizer(dsy, crit, 12)
        if model.snp_indices == best[2]:
            hits += 1
    assert hits >= 9


def test_trace_jsonl_export():
    ds = synthetic_dataset(150, 10, seed=28)
    sim = SimulationConfig((2,), (1.5,), sigma=1.0, seed=29)
    dsy = ds.with_trait(simulate_trait(ds, sim, 0))
    _, _, trace = select_model(dsy, make_config("mbic", dsy))
    text = trace.to_jsonl([m.snp_id for m in dsy.meta])
    for line in text.strip().splitlines():
        rec = json.loads(line)
        assert set(rec) == {"stage", "action", "snp_id", "criterion_value", "model_size"}
