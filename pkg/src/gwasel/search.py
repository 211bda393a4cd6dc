"""Stagewise model search over screened marker candidates.

The pipeline mirrors a screen-then-refine strategy: a single-marker p-value
screen, a one-pass forward build-up under plain BIC seeded with the best
marker, backward elimination and stepwise refinement under the configured
criterion, and a final subset-enumeration step.  Every accepted move must
strictly lower the criterion, so traces are monotone and termination is
guaranteed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from gwasel import _kernels
from gwasel.criteria import CriterionConfig, penalty
from gwasel.errors import BudgetError, CollinearityError
from gwasel.genotype import Dataset
from gwasel.mtest import ScanResult, single_marker_scan
from gwasel.regress import (
    RANK_TOL,
    FitResult,
    FitWorkspace,
    ModelSpec,
    fit,
    workspace_for,
)

SUBSET_BUDGET = 10**7


@dataclass(frozen=True)
class SearchConfig:
    """Tuning knobs of the staged search."""

    criterion: CriterionConfig
    screen_threshold: float = 0.15
    max_forward_size: int = 140
    refinement_trigger: int = 25
    exhaustive_size_cap: int = 5
    max_stepwise_iterations: int = 1000

    def __post_init__(self):
        if not 0.0 < self.screen_threshold <= 1.0:
            raise ValueError("screen_threshold must lie in (0, 1]")
        if self.max_forward_size < 1:
            raise ValueError("max_forward_size must be >= 1")
        if self.exhaustive_size_cap > self.refinement_trigger:
            raise ValueError("exhaustive_size_cap must not exceed refinement_trigger")
        if self.max_stepwise_iterations < 1:
            raise ValueError("max_stepwise_iterations must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    stage: str
    action: str
    snp: int | None
    criterion_value: float | None
    model_size: int


@dataclass
class SearchTrace:
    """Append-only record of every accepted or notable search event."""

    records: list[TraceRecord] = field(default_factory=list)
    truncated: bool = False

    def append(self, stage: str, action: str, snp: int | None,
               value: float | None, size: int) -> None:
        self.records.append(TraceRecord(stage, action, snp, value, size))

    def accepted(self, stage: str | None = None) -> list[TraceRecord]:
        out = [r for r in self.records if r.action in ("add", "drop")]
        if stage is not None:
            out = [r for r in out if r.stage == stage]
        return out

    def to_jsonl(self, snp_ids: list[str] | None = None) -> str:
        lines = []
        for r in self.records:
            snp_id = None
            if r.snp is not None:
                snp_id = snp_ids[r.snp] if snp_ids is not None else f"snp{r.snp}"
            lines.append(json.dumps({
                "stage": r.stage,
                "action": r.action,
                "snp_id": snp_id,
                "criterion_value": r.criterion_value,
                "model_size": r.model_size,
            }))
        return "\n".join(lines) + ("\n" if lines else "")


class _CriterionEval:
    """Floored criterion evaluation usable on saturated models.

    ``criteria.evaluate`` rejects RSS <= 0; during search a saturated model
    simply gets the floored value so comparisons stay total.
    """

    def __init__(self, config: CriterionConfig, rss_base: float):
        self.config = config
        self.log_mode = config.sigma is None
        self.sigma2 = 1.0 if config.sigma is None else float(config.sigma) ** 2
        self.n = config.n
        self.floor = max(rss_base * 1e-12, 1e-300)
        self._pens: list[float] = []

    def pen(self, q: int) -> float:
        while len(self._pens) <= q:
            self._pens.append(penalty(self.config, len(self._pens)))
        return self._pens[q]

    def pens_array(self, q_max: int) -> np.ndarray:
        return np.asarray([self.pen(q) for q in range(q_max + 1)], dtype=np.float64)

    def value(self, rss: float, q: int) -> float:
        if self.log_mode:
            return self.n * math.log(max(rss, self.floor)) + self.pen(q)
        return rss / self.sigma2 + self.pen(q)

    def value_array(self, rss: np.ndarray, q: int) -> np.ndarray:
        if self.log_mode:
            return self.n * np.log(np.maximum(rss, self.floor)) + self.pen(q)
        return rss / self.sigma2 + self.pen(q)


class _CandidateTracker:
    """Residual projections of candidate columns against the live model.

    For candidate x with residual part z (x minus its projection on the
    model basis): s = ||z||^2 and t = z'r, so adding x changes RSS by
    -t^2/s.  Pushing a new basis vector u with y-load d updates these as
    s -= (u'x)^2 and t -= (u'x) d; drops require a rebuild.
    """

    def __init__(self, dataset: Dataset, candidate_indices, ws: FitWorkspace,
                 tol: float = RANK_TOL):
        self.idx = np.asarray(list(candidate_indices), dtype=np.int64)
        self.cols = dataset.float_values[:, self.idx] if self.idx.size else np.empty((dataset.n_individuals, 0))
        self.orig_norm2 = np.einsum("ij,ij->j", self.cols, self.cols)
        self.tol2 = tol * tol
        self.in_model = np.zeros(self.idx.size, dtype=bool)
        self._pos = {int(j): k for k, j in enumerate(self.idx)}
        self.sync(ws)

    def sync(self, ws: FitWorkspace) -> None:
        Q = ws.basis
        z = self.cols - Q @ (Q.T @ self.cols)
        self.s = np.einsum("ij,ij->j", z, z)
        self.t = self.cols.T @ ws.residual
        member = set(ws.snps)
        for k, j in enumerate(self.idx):
            self.in_model[k] = int(j) in member

    def on_push(self, u: np.ndarray, d: float) -> None:
        c = self.cols.T @ u
        self.s = np.maximum(self.s - c * c, 0.0)
        self.t = self.t - c * d

    def position(self, j: int) -> int | None:
        return self._pos.get(int(j))

    def addable(self) -> np.ndarray:
        return self.s > self.tol2 * np.maximum(self.orig_norm2, 1e-300)


def _forced_of(dataset: Dataset) -> tuple[int, ...]:
    return tuple(range(dataset.n_covariates))


def screen(scan: ScanResult, threshold: float) -> list[int]:
    """Candidate columns with p strictly below threshold, best p first."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    return [int(j) for j in scan.order if scan.p_values[j] < threshold]


def _max_snps(ws: FitWorkspace) -> int:
    return ws.n - len(ws.forced_indices) - 2


def _forward(ws: FitWorkspace, tracker: _CandidateTracker, config: SearchConfig,
             ev: _CriterionEval, trace: SearchTrace) -> None:
    q_cap = min(config.max_forward_size, _max_snps(ws))
    if q_cap < 1:
        return
    cur_rss = ws.rss
    cur_val = None
    for pos in range(tracker.idx.size):
        if len(ws.snps) >= q_cap:
            break
        if tracker.in_model[pos]:
            continue
        j = int(tracker.idx[pos])
        if tracker.s[pos] <= tracker.tol2 * max(tracker.orig_norm2[pos], 1e-300):
            trace.append("forward", "skip_collinear", j, None, len(ws.snps))
            continue
        new_rss = max(cur_rss - tracker.t[pos] ** 2 / tracker.s[pos], 0.0)
        if cur_val is None:
            accept = True  # the stage starts from the best single marker
        else:
            accept = ev.value(new_rss, len(ws.snps) + 1) < cur_val
        if accept:
            try:
                u, d = ws.add_snp(j)
            except CollinearityError:
                trace.append("forward", "skip_collinear", j, None, len(ws.snps))
                continue
            tracker.on_push(u, d)
            tracker.in_model[pos] = True
            cur_rss = new_rss
            cur_val = ev.value(cur_rss, len(ws.snps))
            trace.append("forward", "add", j, cur_val, len(ws.snps))


def _best_drop(ws: FitWorkspace, ev: _CriterionEval) -> tuple[float, int, tuple[int, ...]] | None:
    if not ws.snps:
        return None
    best = None
    for j in ws.snps:
        val = ev.value(ws.rss_if_dropped(j), len(ws.snps) - 1)
        remaining = tuple(sorted(k for k in ws.snps if k != j))
        key = (val, remaining)
        if best is None or key < best[0]:
            best = (key, j)
    (val, remaining), j = best
    return val, j, remaining


def _backward(ws: FitWorkspace, config: SearchConfig, ev: _CriterionEval,
              trace: SearchTrace, stage: str = "backward") -> ModelSpec:
    cur_val = ev.value(ws.rss, len(ws.snps))
    while ws.snps:
        found = _best_drop(ws, ev)
        if found is None:
            break
        val, j, _ = found
        if val >= cur_val:
            break
        ws.drop_snp(j)
        cur_val = val
        trace.append(stage, "drop", j, cur_val, len(ws.snps))
    return ws.model()


def _stepwise(ws: FitWorkspace, tracker: _CandidateTracker, config: SearchConfig,
              ev: _CriterionEval, trace: SearchTrace) -> ModelSpec:
    moves = 0
    cur_rss = ws.rss
    cur_val = ev.value(cur_rss, len(ws.snps))
    q_cap = _max_snps(ws)
    while True:
        made_move = False

        if tracker.idx.size and len(ws.snps) < q_cap:
            open_pos = np.nonzero(~tracker.in_model & tracker.addable())[0]
            if open_pos.size:
                new_rss = np.maximum(
                    cur_rss - tracker.t[open_pos] ** 2 / tracker.s[open_pos], 0.0
                )
                vals = ev.value_array(new_rss, len(ws.snps) + 1)
                pick = np.lexsort((tracker.idx[open_pos], vals))[0]
                if vals[pick] < cur_val:
                    pos = int(open_pos[pick])
                    j = int(tracker.idx[pos])
                    try:
                        u, d = ws.add_snp(j)
                    except CollinearityError:
                        # the tracker's incremental stats drifted; resync and
                        # let the rejected column fail the addable() gate
                        trace.append("stepwise", "skip_collinear", j, None, len(ws.snps))
                        tracker.sync(ws)
                        tracker.s[pos] = 0.0
                        continue
                    tracker.on_push(u, d)
                    tracker.in_model[pos] = True
                    cur_rss = float(new_rss[pick])
                    cur_val = float(vals[pick])
                    trace.append("stepwise", "add", j, cur_val, len(ws.snps))
                    moves += 1
                    made_move = True
                    if moves >= config.max_stepwise_iterations:
                        trace.truncated = True
                        trace.append("stepwise", "truncated", None, cur_val, len(ws.snps))
                        return ws.model()

        found = _best_drop(ws, ev)
        if found is not None and found[0] < cur_val:
            val, j, _ = found
            ws.drop_snp(j)
            tracker.sync(ws)
            cur_rss = ws.rss
            cur_val = val
            trace.append("stepwise", "drop", j, cur_val, len(ws.snps))
            moves += 1
            made_move = True
            if moves >= config.max_stepwise_iterations:
                trace.truncated = True
                trace.append("stepwise", "truncated", None, cur_val, len(ws.snps))
                return ws.model()

        if not made_move:
            break
    return ws.model()


def multiple_forward_search(dataset: Dataset, candidates, config: SearchConfig) -> ModelSpec:
    """One pass over screened candidates under plain BIC (unknown noise).

    Starts from the model holding the single best candidate, then walks the
    remaining candidates in ascending-p order, keeping each one only when it
    lowers BIC; stops at ``max_forward_size``.  Collinear candidates are
    skipped.
    """
    ws = FitWorkspace(dataset, _forced_of(dataset))
    return _forward_standalone(dataset, candidates, config, ws, SearchTrace())


def _forward_standalone(dataset, candidates, config, ws, trace):
    tracker = _CandidateTracker(dataset, candidates, ws)
    bic_cfg = CriterionConfig(
        "bic", n=config.criterion.n, p_effective=max(dataset.n_snps, 1), sigma=None
    )
    _forward(ws, tracker, config, _CriterionEval(bic_cfg, ws.rss_base), trace)
    return ws.model()


def backward_elimination(dataset: Dataset, model: ModelSpec, config: SearchConfig) -> ModelSpec:
    """Drop the best single SNP while doing so lowers the criterion."""
    ws = workspace_for(dataset, model)
    ev = _CriterionEval(config.criterion, ws.rss_base)
    return _backward(ws, config, ev, SearchTrace())


def stepwise(dataset: Dataset, model: ModelSpec, config: SearchConfig,
             candidates=()) -> ModelSpec:
    """Alternate best single add (from candidates) and best single drop."""
    ws = workspace_for(dataset, model)
    tracker = _CandidateTracker(dataset, candidates, ws)
    ev = _CriterionEval(config.criterion, ws.rss_base)
    return _stepwise(ws, tracker, config, ev, SearchTrace())


def _subset_counts(n_cols: int, max_size: int) -> int:
    total = 0
    for q in range(min(max_size, n_cols) + 1):
        total += math.comb(n_cols, q)
    return total


def _enumerate_best(dataset: Dataset, base_ws: FitWorkspace, columns: list[int],
                    max_size: int, ev: _CriterionEval):
    """Best subset of ``columns`` (sizes 0..max_size) behind the forced base."""
    X = dataset.float_values
    cols = np.asarray(columns, dtype=np.int64)
    sub = X[:, cols] if cols.size else np.empty((dataset.n_individuals, 0))
    Q = base_ws.basis
    z = sub - Q @ (Q.T @ sub)
    orig_norm2 = np.einsum("ij,ij->j", sub, sub) if cols.size else np.empty(0)
    max_size = min(max_size, _max_snps(base_ws))
    pens = ev.pens_array(max(max_size, 0))
    val, local_idx, n_eval = _kernels.best_subset(
        z,
        base_ws.residual,
        base_ws.rss,
        orig_norm2,
        pens,
        max_size,
        log_mode=ev.log_mode,
        n_obs=ev.n,
        sigma2=ev.sigma2,
        floor=ev.floor,
        tol=RANK_TOL,
    )
    subset = tuple(int(cols[i]) for i in local_idx)
    return float(val), subset, n_eval


def refine_subsets(dataset: Dataset, model: ModelSpec, extra_candidates,
                   config: SearchConfig, _trace: SearchTrace | None = None) -> ModelSpec:
    """Final enumeration step over the model plus externally suggested SNPs.

    When the combined set is small enough, subsets of it up to
    ``exhaustive_size_cap`` and every subset of the incumbent are scored and
    the minimizer returned, ties going to the incumbent.  Larger combined
    sets fall back to backward elimination followed by enumeration of
    subsets strictly below the cap.  Forced covariates are always retained.
    """
    trace = _trace if _trace is not None else SearchTrace()
    forced = model.forced_indices
    combined = sorted(set(model.snp_indices) | {int(e) for e in extra_candidates})
    base_ws = FitWorkspace(dataset, forced)
    ev = _CriterionEval(config.criterion, base_ws.rss_base)

    inc_ws = workspace_for(dataset, model)
    inc_val = ev.value(inc_ws.rss, model.size)

    cap = config.exhaustive_size_cap
    candidates: list[tuple[float, int, tuple[int, ...]]] = []
    if len(combined) <= config.refinement_trigger:
        predicted = _subset_counts(len(combined), cap) + 2 ** model.size
        if predicted > SUBSET_BUDGET:
            raise BudgetError(
                f"refinement would score ~{predicted} subsets (> {SUBSET_BUDGET}); "
                "lower exhaustive_size_cap or refinement_trigger"
            )
        val, subset, _ = _enumerate_best(dataset, base_ws, combined, cap, ev)
        candidates.append((val, len(subset), subset))
        if model.size:
            val_i, subset_i, _ = _enumerate_best(
                dataset, base_ws, list(model.snp_indices), model.size, ev
            )
            candidates.append((val_i, len(subset_i), subset_i))
    else:
        trace.append("refine", "fallback_backward", None, None, len(combined))
        ws = FitWorkspace(dataset, forced)
        for j in combined:
            try:
                ws.add_snp(j)
            except CollinearityError:
                trace.append("refine", "skip_collinear", j, None, len(ws.snps))
        reduced = _backward(ws, config, ev, trace, stage="refine_backward")
        candidates.append((ev.value(ws.rss, reduced.size), reduced.size, reduced.snp_indices))
        predicted = _subset_counts(reduced.size, cap - 1)
        if predicted > SUBSET_BUDGET:
            raise BudgetError(
                f"refinement would score ~{predicted} subsets (> {SUBSET_BUDGET}); "
                "lower exhaustive_size_cap"
            )
        val, subset, _ = _enumerate_best(
            dataset, base_ws, list(reduced.snp_indices), cap - 1, ev
        )
        candidates.append((val, len(subset), subset))

    best_val, _, best_subset_idx = min(candidates)
    if best_val < inc_val:
        result = ModelSpec(tuple(sorted(best_subset_idx)), forced)
        if set(result.snp_indices) != set(model.snp_indices):
            trace.append("refine", "replace", None, best_val, result.size)
        return result
    return model


def select_model(dataset: Dataset, config: SearchConfig, extra_candidates=(),
                 scan: ScanResult | None = None) -> tuple[ModelSpec, FitResult, SearchTrace]:
    """Full pipeline: scan, screen, forward, backward, stepwise, refine."""
    if dataset.trait is None:
        raise ValueError("dataset has no trait")
    if config.criterion.n != dataset.n_individuals:
        raise ValueError(
            f"criterion config has n={config.criterion.n} but dataset has "
            f"{dataset.n_individuals} individuals"
        )
    trace = SearchTrace()
    if scan is None:
        scan = single_marker_scan(dataset)
    candidates = screen(scan, config.screen_threshold)
    forced = _forced_of(dataset)
    ws = FitWorkspace(dataset, forced)
    tracker = _CandidateTracker(dataset, candidates, ws)
    bic_cfg = CriterionConfig(
        "bic", n=config.criterion.n, p_effective=max(dataset.n_snps, 1), sigma=None
    )
    _forward(ws, tracker, config, _CriterionEval(bic_cfg, ws.rss_base), trace)

    ev = _CriterionEval(config.criterion, ws.rss_base)
    _backward(ws, config, ev, trace)
    tracker.sync(ws)
    _stepwise(ws, tracker, config, ev, trace)

    model = refine_subsets(dataset, ws.model(), extra_candidates, config, _trace=trace)
    return model, fit(dataset, model), trace
