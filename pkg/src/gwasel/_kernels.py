"""Hot numeric kernels, each in a numba build and a pure-numpy fallback.

Three kernels dominate runtime on large panels and ship in both builds:

* ``impute_fill``    -- nearest-predictor genotype imputation
* ``leader_cluster`` -- greedy windowed correlation clustering
* ``best_subset``    -- depth-first exhaustive subset scoring

Dispatch happens per call via :func:`gwasel.backend.numba_enabled`, so the
``GWASEL_BACKEND`` environment variable can flip paths without reimport.
Both builds of a kernel are bit-compatible in their integer outputs and
agree on floats to rounding error; ``tests/test_backend.py`` checks this.
"""

from __future__ import annotations

import numpy as np

from gwasel.backend import njit, numba_enabled

# ---------------------------------------------------------------------------
# imputation
# ---------------------------------------------------------------------------


@njit(cache=True)
def _impute_fill_numba(values, observed, window, n_predictors):
    n, p = values.shape
    out = values.copy()
    for j in range(p):
        n_miss = 0
        n_obs = 0
        col_counts = np.zeros(3, np.int64)
        for i in range(n):
            if observed[i, j]:
                n_obs += 1
                col_counts[values[i, j] + 1] += 1
            else:
                n_miss += 1
        if n_miss == 0:
            continue
        if n_obs == 0:
            return out, j
        majority = -1
        best_count = col_counts[0]
        for code in range(1, 3):
            if col_counts[code] > best_count:
                best_count = col_counts[code]
                majority = code - 1

        lo = max(0, j - window)
        hi = min(p - 1, j + window)
        width = hi - lo + 1
        cors = np.full(width, np.nan, np.float64)
        for col in range(lo, hi + 1):
            if col == j:
                continue
            n_ok = 0
            sx = 0.0
            sy = 0.0
            sxx = 0.0
            syy = 0.0
            sxy = 0.0
            for i in range(n):
                if observed[i, j] and observed[i, col]:
                    x = float(values[i, col])
                    y = float(values[i, j])
                    n_ok += 1
                    sx += x
                    sy += y
                    sxx += x * x
                    syy += y * y
                    sxy += x * y
            if n_ok < 2:
                continue
            vx = sxx - sx * sx / n_ok
            vy = syy - sy * sy / n_ok
            if vx <= 0.0 or vy <= 0.0:
                continue
            cors[col - lo] = (sxy - sx * sy / n_ok) / np.sqrt(vx * vy)

        sel = np.empty(n_predictors, np.int64)
        for i in range(n):
            if observed[i, j]:
                continue
            # top predictors by |corr| desc, then file distance asc, then index
            n_sel = 0
            for col in range(lo, hi + 1):
                if col == j:
                    continue
                c = cors[col - lo]
                if np.isnan(c) or not observed[i, col]:
                    continue
                a = abs(c)
                d = abs(col - j)
                pos = 0
                while pos < n_sel:
                    prev = sel[pos]
                    ap = abs(cors[prev - lo])
                    dp = abs(prev - j)
                    if ap > a or (ap == a and (dp < d or (dp == d and prev < col))):
                        pos += 1
                    else:
                        break
                if pos < n_predictors:
                    end = n_sel if n_sel < n_predictors else n_predictors - 1
                    k = end
                    while k > pos:
                        sel[k] = sel[k - 1]
                        k -= 1
                    sel[pos] = col
                    if n_sel < n_predictors:
                        n_sel += 1
            if n_sel == 0:
                out[i, j] = majority
                continue
            counts = np.zeros(3, np.int64)
            for h in range(n):
                if not observed[h, j]:
                    continue
                match = True
                for t in range(n_sel):
                    col = sel[t]
                    if not observed[h, col] or values[h, col] != values[i, col]:
                        match = False
                        break
                if match:
                    counts[values[h, j] + 1] += 1
            total = counts[0] + counts[1] + counts[2]
            if total == 0:
                out[i, j] = majority
            else:
                code_best = -1
                count_best = counts[0]
                for code in range(1, 3):
                    if counts[code] > count_best:
                        count_best = counts[code]
                        code_best = code - 1
                out[i, j] = code_best
    return out, -1


def _impute_fill_numpy(values, observed, window, n_predictors):
    n, p = values.shape
    out = values.copy()
    vals = values.astype(np.float64)
    for j in range(p):
        obs_j = observed[:, j]
        missing_rows = np.nonzero(~obs_j)[0]
        if missing_rows.size == 0:
            continue
        observed_col = values[obs_j, j]
        if observed_col.size == 0:
            return out, j
        col_counts = np.bincount(observed_col.astype(np.int64) + 1, minlength=3)
        majority = int(np.argmax(col_counts)) - 1  # argmax keeps the smaller code on ties

        lo = max(0, j - window)
        hi = min(p - 1, j + window)
        cols = np.arange(lo, hi + 1)
        cols = cols[cols != j]
        window_obs = observed[:, cols]
        both = obs_j[:, None] & window_obs
        n_ok = both.sum(axis=0)
        xw = np.where(both, vals[:, cols], 0.0)
        yw = np.where(both, vals[:, j][:, None], 0.0)
        sx = xw.sum(axis=0)
        sy = yw.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            vx = (xw * xw).sum(axis=0) - sx * sx / n_ok
            vy = (yw * yw).sum(axis=0) - sy * sy / n_ok
            cors = ((xw * yw).sum(axis=0) - sx * sy / n_ok) / np.sqrt(vx * vy)
        defined = (n_ok >= 2) & (vx > 0.0) & (vy > 0.0) & np.isfinite(cors)
        dist = np.abs(cols - j)

        for i in missing_rows:
            usable = defined & window_obs[i]
            if not usable.any():
                out[i, j] = majority
                continue
            pool = np.nonzero(usable)[0]
            order = np.lexsort((cols[pool], dist[pool], -np.abs(cors[pool])))
            predictors = cols[pool[order[:n_predictors]]]
            match = obs_j & np.all(
                observed[:, predictors] & (values[:, predictors] == values[i, predictors]),
                axis=1,
            )
            if not match.any():
                out[i, j] = majority
            else:
                counts = np.bincount(values[match, j].astype(np.int64) + 1, minlength=3)
                out[i, j] = int(np.argmax(counts)) - 1
    return out, -1


def impute_fill(values, observed, window, n_predictors):
    """Fill missing genotype codes; returns (filled, failed_column or -1).

    All imputed values are computed from the original observed entries, so
    the result does not depend on column visiting order.
    """
    values = np.ascontiguousarray(values, dtype=np.int8)
    observed = np.ascontiguousarray(observed, dtype=np.bool_)
    if numba_enabled():
        return _impute_fill_numba(values, observed, window, n_predictors)
    return _impute_fill_numpy(values, observed, window, n_predictors)


# ---------------------------------------------------------------------------
# greedy leader clustering
# ---------------------------------------------------------------------------


@njit(cache=True)
def _leader_cluster_numba(x, threshold, window):
    n, p = x.shape
    cluster_id = np.empty(p, np.int64)
    reps = np.empty(p, np.int64)
    degenerate = np.zeros(p, np.bool_)
    mean = np.empty(p, np.float64)
    cnorm = np.empty(p, np.float64)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += x[i, j]
        mean[j] = s / n
        ss = 0.0
        for i in range(n):
            d = x[i, j] - mean[j]
            ss += d * d
        cnorm[j] = np.sqrt(ss)

    n_reps = 0
    for j in range(p):
        if cnorm[j] <= 0.0:
            degenerate[j] = True
            reps[n_reps] = j
            cluster_id[j] = n_reps
            n_reps += 1
            continue
        assigned = -1
        for t in range(n_reps):
            r = reps[t]
            if abs(r - j) > window or cnorm[r] <= 0.0:
                continue
            dot = 0.0
            for i in range(n):
                dot += (x[i, j] - mean[j]) * (x[i, r] - mean[r])
            if abs(dot / (cnorm[j] * cnorm[r])) > threshold:
                assigned = t
                break
        if assigned >= 0:
            cluster_id[j] = assigned
        else:
            reps[n_reps] = j
            cluster_id[j] = n_reps
            n_reps += 1
    return cluster_id, reps[:n_reps].copy(), degenerate


def _leader_cluster_numpy(x, threshold, window):
    n, p = x.shape
    mean = x.mean(axis=0)
    centered = x - mean
    cnorm = np.sqrt((centered * centered).sum(axis=0))
    degenerate = cnorm <= 0.0
    normed = np.where(degenerate[None, :], 0.0, centered / np.where(degenerate, 1.0, cnorm)[None, :])

    cluster_id = np.empty(p, np.int64)
    reps: list[int] = []
    for j in range(p):
        if degenerate[j]:
            cluster_id[j] = len(reps)
            reps.append(j)
            continue
        rep_arr = np.asarray(reps, dtype=np.int64)
        in_window = np.nonzero(np.abs(rep_arr - j) <= window)[0] if rep_arr.size else rep_arr
        assigned = -1
        if in_window.size:
            cand = rep_arr[in_window]
            cors = normed[:, cand].T @ normed[:, j]
            hits = np.nonzero(np.abs(cors) > threshold)[0]
            if hits.size:
                assigned = int(in_window[hits[0]])
        if assigned >= 0:
            cluster_id[j] = assigned
        else:
            cluster_id[j] = len(reps)
            reps.append(j)
    return cluster_id, np.asarray(reps, dtype=np.int64), degenerate


def leader_cluster(x, threshold, window):
    """Greedy file-order leader clustering on complete genotype columns.

    A column joins the earliest-founded cluster whose representative lies
    within ``window`` file positions and correlates above ``threshold`` in
    absolute value; otherwise it founds a new cluster.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if numba_enabled():
        return _leader_cluster_numba(x, threshold, window)
    return _leader_cluster_numpy(x, threshold, window)


# ---------------------------------------------------------------------------
# exhaustive subset scoring
# ---------------------------------------------------------------------------

# Kernel-internal criterion: value(S) = base(rss_S) + pen[|S|] where
# base is n*log(max(rss, floor)) in log mode or rss/sigma2 otherwise.
# Best subset is tracked under (value, size, lexicographic indices).


@njit(cache=True)
def _best_subset_numba(z, y_resid, rss0, orig_norm2, pen, max_size,
                       log_mode, n_obs, sigma2, floor, tol2):
    n, s = z.shape
    basis = np.empty((n, max_size), np.float64)
    chosen = np.empty(max_size, np.int64)
    cursor = np.empty(max_size + 1, np.int64)
    rss_stack = np.empty(max_size + 1, np.float64)

    best_len = 0
    best_idx = np.empty(max_size, np.int64)
    if log_mode:
        best_val = n_obs * np.log(max(rss0, floor)) + pen[0]
    else:
        best_val = rss0 / sigma2 + pen[0]

    depth = 0
    cursor[0] = 0
    rss_stack[0] = rss0
    n_eval = 1
    work = np.empty(n, np.float64)
    while depth >= 0:
        t = cursor[depth]
        if t >= s or depth >= max_size:
            depth -= 1
            continue
        cursor[depth] = t + 1
        # two-pass Gram-Schmidt of column t against the current basis
        for i in range(n):
            work[i] = z[i, t]
        for _ in range(2):
            for b in range(depth):
                h = 0.0
                for i in range(n):
                    h += basis[i, b] * work[i]
                for i in range(n):
                    work[i] -= h * basis[i, b]
        nrm2 = 0.0
        for i in range(n):
            nrm2 += work[i] * work[i]
        if nrm2 <= tol2 * orig_norm2[t]:
            continue  # collinear inside this subset; skip the branch
        nrm = np.sqrt(nrm2)
        ty = 0.0
        for i in range(n):
            basis[i, depth] = work[i] / nrm
            ty += basis[i, depth] * y_resid[i]
        rss_new = rss_stack[depth] - ty * ty
        if rss_new < 0.0:
            rss_new = 0.0
        chosen[depth] = t
        rss_stack[depth + 1] = rss_new
        size = depth + 1
        if log_mode:
            val = n_obs * np.log(max(rss_new, floor)) + pen[size]
        else:
            val = rss_new / sigma2 + pen[size]
        n_eval += 1
        better = False
        if val < best_val:
            better = True
        elif val == best_val:
            if size < best_len:
                better = True
            elif size == best_len:
                for k in range(size):
                    if chosen[k] < best_idx[k]:
                        better = True
                        break
                    if chosen[k] > best_idx[k]:
                        break
        if better:
            best_val = val
            best_len = size
            for k in range(size):
                best_idx[k] = chosen[k]
        if size < max_size:
            cursor[depth + 1] = t + 1
            depth += 1
    return best_val, best_idx[:best_len].copy(), n_eval


def _best_subset_numpy(z, y_resid, rss0, orig_norm2, pen, max_size,
                       log_mode, n_obs, sigma2, floor, tol2):
    n, s = z.shape

    def value(rss, size):
        if log_mode:
            return n_obs * np.log(max(rss, floor)) + pen[size]
        return rss / sigma2 + pen[size]

    best = [value(rss0, 0), 0, np.empty(0, np.int64)]
    n_eval = 1
    basis = np.empty((n, max_size))
    chosen = np.empty(max_size, np.int64)

    def consider(val, size):
        nonlocal n_eval
        n_eval += 1
        idx = chosen[:size]
        better = val < best[0] or (
            val == best[0]
            and (size < best[1] or (size == best[1] and list(idx) < list(best[2])))
        )
        if better:
            best[0] = val
            best[1] = size
            best[2] = idx.copy()

    def descend(depth, start, rss):
        for t in range(start, s):
            work = z[:, t].copy()
            for _ in range(2):
                if depth:
                    work -= basis[:, :depth] @ (basis[:, :depth].T @ work)
            nrm2 = float(work @ work)
            if nrm2 <= tol2 * orig_norm2[t]:
                continue
            u = work / np.sqrt(nrm2)
            ty = float(u @ y_resid)
            rss_new = max(rss - ty * ty, 0.0)
            basis[:, depth] = u
            chosen[depth] = t
            consider(value(rss_new, depth + 1), depth + 1)
            if depth + 1 < max_size:
                descend(depth + 1, t + 1, rss_new)

    if max_size > 0 and s > 0:
        descend(0, 0, rss0)
    return best[0], best[2], n_eval


def best_subset(z, y_resid, rss0, orig_norm2, pen, max_size, *,
                log_mode, n_obs, sigma2, floor, tol):
    """Score every subset of the columns of ``z`` up to ``max_size``.

    ``z`` and ``y_resid`` must already be orthogonal to the forced part of
    the design (intercept and covariates), so a subset's RSS is
    ``rss0 - ||proj||^2``.  Returns ``(best_value, best_column_indices,
    n_subsets_evaluated)`` with ties broken toward smaller, then
    lexicographically smaller, subsets.  The empty subset is always scored.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    y_resid = np.ascontiguousarray(y_resid, dtype=np.float64)
    orig_norm2 = np.ascontiguousarray(orig_norm2, dtype=np.float64)
    pen = np.ascontiguousarray(pen, dtype=np.float64)
    max_size = int(min(max_size, z.shape[1]))
    args = (z, y_resid, float(rss0), orig_norm2, pen, max_size,
            bool(log_mode), float(n_obs), float(sigma2), float(floor),
            float(tol) ** 2)
    if numba_enabled():
        return _best_subset_numba(*args)
    return _best_subset_numpy(*args)
