"""
Compiled inner loops: coordinate-descent lasso on a row subset, an exact
path-following lasso for elemental subsets, C-steps and the multi-start
search. All arrays of predictors are expected in Fortran
(column-major) order. Nothing here calls BLAS, so results do not depend on
the number of threads.
"""
import numpy as np
from numba import njit, prange


# Relative slack on the threshold, so that a penalty at the zero point
# annihilates a slope despite rounding in the gradient.
THRESHOLD_SLACK = 1e-11


@njit(cache=True)
def soft_threshold(z, t):
    if abs(z) <= t * (1.0 + THRESHOLD_SLACK):
        return 0.0
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def residuals_all(Xf, y, b0, beta, out):
    n, p = Xf.shape
    for i in range(n):
        out[i] = y[i] - b0
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            for i in range(n):
                out[i] -= Xf[i, j] * bj


@njit(cache=True)
def subset_sd(Xf, w, rows, j):
    """Weighted standard deviation (divisor sum w) of column j over rows."""
    m = rows.shape[0]
    W = 0.0
    s = 0.0
    for k in range(m):
        W += w[rows[k]]
        s += w[rows[k]] * Xf[rows[k], j]
    mu = s / W
    q = 0.0
    for k in range(m):
        d = Xf[rows[k], j] - mu
        q += w[rows[k]] * d * d
    return np.sqrt(q / W)


@njit(cache=True)
def subset_objective(Xf, y, w, rows, b0, beta, lam, std):
    """
    sum_{i in rows} w_i r_i^2 + (sum w_i) * lam * sum_j s_j |beta_j|, with s_j
    the standard deviation of column j over rows when ``std``, else 1.
    """
    m = rows.shape[0]
    p = Xf.shape[1]
    r = np.empty(m)
    W = 0.0
    for k in range(m):
        r[k] = y[rows[k]] - b0
        W += w[rows[k]]
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            for k in range(m):
                r[k] -= Xf[rows[k], j] * bj
    rss = 0.0
    for k in range(m):
        rss += w[rows[k]] * r[k] * r[k]
    l1 = 0.0
    for j in range(p):
        if beta[j] != 0.0:
            l1 += abs(beta[j]) * (subset_sd(Xf, w, rows, j) if std else 1.0)
    return rss + W * lam * l1


@njit(cache=True)
def _sweep(Z, ss, scl, constant, beta, r, t, yscale, active_only):
    p, m = Z.shape
    maxd = 0.0
    for j in range(p):
        if constant[j]:
            continue
        bj = beta[j]
        if active_only and bj == 0.0:
            continue
        g = 0.0
        for k in range(m):
            g += Z[j, k] * r[k]
        g += ss[j] * bj
        new = soft_threshold(g, t) / ss[j]
        d = new - bj
        if d != 0.0:
            for k in range(m):
                r[k] -= d * Z[j, k]
            beta[j] = new
            d = abs(d) * scl[j] / yscale
            if d > maxd:
                maxd = d
    return maxd


POLISH_AFTER = 16


@njit(cache=True)
def _polish(Z, yc, beta, r, t):
    # Active-set refinement: re-solve after every step that had to stop at
    # a sign change, until the signs are reproduced or no progress is made.
    for _ in range(Z.shape[0]):
        status = _polish_step(Z, yc, beta, r, t)
        if status != 0:
            return status > 0
    return False


@njit(cache=True)
def _polish_step(Z, yc, beta, r, t):
    # Solve the optimality equations on the current active set with the
    # current signs. Returns 1 when the signs are reproduced, 0 after a
    # partial step to the first sign change, -1 when nothing was done.
    p, m = Z.shape
    na = 0
    for j in range(p):
        if beta[j] != 0.0:
            na += 1
    if na == 0 or na >= m:
        return -1
    act = np.empty(na, dtype=np.int64)
    k = 0
    for j in range(p):
        if beta[j] != 0.0:
            act[k] = j
            k += 1
    G = np.empty((na, na))
    b = np.empty(na)
    for a1 in range(na):
        j1 = act[a1]
        for a2 in range(a1, na):
            j2 = act[a2]
            g = 0.0
            for i in range(m):
                g += Z[j1, i] * Z[j2, i]
            G[a1, a2] = g
            G[a2, a1] = g
        g = 0.0
        for i in range(m):
            g += Z[j1, i] * yc[i]
        b[a1] = g - (t if beta[j1] > 0 else -t)
    x, ok = _solve_small(G, b)
    if not ok:
        return -1
    for a1 in range(na):
        if not np.isfinite(x[a1]):
            return -1
    # Within the sign orthant the objective is a convex quadratic minimized
    # at x, so moving towards x until the first sign change still descends.
    step = 1.0
    hit = -1
    if t > 0.0:
        for a1 in range(na):
            bj = beta[act[a1]]
            if x[a1] == 0.0 or (x[a1] > 0) != (bj > 0):
                g = bj / (bj - x[a1])
                if g < step:
                    step = g
                    hit = a1
    if hit >= 0:
        for a1 in range(na):
            x[a1] = beta[act[a1]] + step * (x[a1] - beta[act[a1]])
        x[hit] = 0.0
    for i in range(m):
        r[i] = yc[i]
    for a1 in range(na):
        j1 = act[a1]
        beta[j1] = x[a1]
        for i in range(m):
            r[i] -= x[a1] * Z[j1, i]
    return 1 if hit < 0 else 0


HOMOTOPY_AFTER = 500


@njit(cache=True)
def lasso_cd(Xf, y, w, rows, lam, beta_init, tol, max_iter, std):
    """
    Weighted lasso on the observations in ``rows`` (see ``_lasso_cd``).

    Unit-weight fits that coordinate descent has not settled within
    ``HOMOTOPY_AFTER`` sweeps (typically ill-conditioned subsets at small
    penalties) are solved exactly by path following instead; coordinate
    descent resumes only if that fails.

    Returns (b0, beta, n_sweeps, converged).
    """
    m = rows.shape[0]
    unit = True
    for k in range(m):
        if w[rows[k]] != 1.0:
            unit = False
            break
    if not unit or max_iter <= HOMOTOPY_AFTER:
        return _lasso_cd(Xf, y, w, rows, lam, beta_init, tol, max_iter, std)
    b0, beta, it, conv = _lasso_cd(Xf, y, w, rows, lam, beta_init, tol, HOMOTOPY_AFTER, std)
    if conv:
        return b0, beta, it, conv
    hb0, hbeta, _, ok = lasso_homotopy(Xf, y, rows, lam, std)
    if ok:
        return hb0, hbeta, it, True
    b0, beta, more, conv = _lasso_cd(Xf, y, w, rows, lam, beta, tol, max_iter - it, std)
    return b0, beta, it + more, conv


@njit(cache=True)
def _lasso_cd(Xf, y, w, rows, lam, beta_init, tol, max_iter, std):
    """
    Weighted lasso on the observations in ``rows``.

    Minimizes sum w_i (y_i - b0 - x_i'b)^2 + W * lam * sum_j s_j |b_j| with
    W = sum of the weights over rows and s_j the weighted standard deviation
    of predictor j over rows (``std``) or 1. Predictors are centered with the
    weighted means and the convergence test is on the coefficient change
    measured in standard-deviation units of predictor and response.

    Returns (b0, beta, n_sweeps, converged).
    """
    m = rows.shape[0]
    p = Xf.shape[1]
    W = 0.0
    for k in range(m):
        W += w[rows[k]]
    sw = np.empty(m)
    for k in range(m):
        sw[k] = np.sqrt(w[rows[k]])

    xbar = np.empty(p)
    Z = np.empty((p, m))
    ss = np.empty(p)
    scl = np.empty(p)
    constant = np.zeros(p, dtype=np.bool_)
    for j in range(p):
        s = 0.0
        mag = 0.0
        for k in range(m):
            v = Xf[rows[k], j]
            s += w[rows[k]] * v
            if abs(v) > mag:
                mag = abs(v)
        mu = s / W
        xbar[j] = mu
        q = 0.0
        for k in range(m):
            z = sw[k] * (Xf[rows[k], j] - mu)
            Z[j, k] = z
            q += z * z
        ss[j] = q
        if q <= m * (1e-12 * mag) ** 2:
            constant[j] = True
            scl[j] = 0.0
        else:
            scl[j] = np.sqrt(q / W)
    # With std the solver works on standardized columns, where the penalty
    # is the same for every coordinate; unit holds the coefficient scale.
    unit = scl.copy()
    if std:
        for j in range(p):
            if not constant[j]:
                for k in range(m):
                    Z[j, k] /= scl[j]
                ss[j] = ss[j] / (scl[j] * scl[j])
                unit[j] = 1.0

    s = 0.0
    for k in range(m):
        s += w[rows[k]] * y[rows[k]]
    ybar = s / W
    r = np.empty(m)
    q = 0.0
    for k in range(m):
        r[k] = sw[k] * (y[rows[k]] - ybar)
        q += r[k] * r[k]
    yc = r.copy()
    yscale = np.sqrt(q / W)
    if yscale <= 0.0:
        yscale = 1.0

    beta = np.zeros(p)
    for j in range(p):
        if not constant[j] and beta_init[j] != 0.0:
            bj = beta_init[j] * (scl[j] if std else 1.0)
            beta[j] = bj
            for k in range(m):
                r[k] -= bj * Z[j, k]

    t = 0.5 * W * lam
    it = 0
    converged = False
    finished = False
    while it < max_iter:
        maxd = _sweep(Z, ss, unit, constant, beta, r, t, yscale, False)
        it += 1
        if maxd < tol:
            # Replace the tolerance-level iterate by the exact solution on its
            # active set, then confirm it with one more full sweep.
            if not finished and _polish(Z, yc, beta, r, t):
                finished = True
                continue
            converged = True
            break
        inner = 0
        next_polish = POLISH_AFTER
        while it < max_iter:
            maxd = _sweep(Z, ss, unit, constant, beta, r, t, yscale, True)
            it += 1
            inner += 1
            if maxd < tol:
                break
            if inner == next_polish:
                next_polish *= 4
                if _polish(Z, yc, beta, r, t):
                    break

    if std:
        for j in range(p):
            if not constant[j]:
                beta[j] /= scl[j]
    b0 = ybar
    for j in range(p):
        b0 -= xbar[j] * beta[j]
    return b0, beta, it, converged


@njit(cache=True)
def h_smallest(values, h):
    order = np.argsort(values, kind="mergesort")
    return np.sort(order[:h])


@njit(cache=True)
def _same(a, b):
    for k in range(a.shape[0]):
        if a[k] != b[k]:
            return False
    return True


@njit(cache=True)
def elemental_chain(Xf, y, ones, triple, h, lam, tol, max_iter, n_csteps, std):
    """
    Elemental start followed by ``n_csteps`` C-steps.

    Returns (subset, b0, beta, objective, n_unconverged_fits).
    """
    n, p = Xf.shape
    bad = 0
    rows3 = np.sort(triple)
    b0, beta, _, ok = lasso_homotopy(Xf, y, rows3, lam, std)
    if not ok:
        bad += 1
    r = np.empty(n)
    residuals_all(Xf, y, b0, beta, r)
    H = h_smallest(r * r, h)
    b0, beta, _, conv = lasso_cd(Xf, y, ones, H, lam, beta, tol, max_iter, std)
    if not conv:
        bad += 1
    obj = subset_objective(Xf, y, ones, H, b0, beta, lam, std)
    for _ in range(n_csteps):
        H, b0, beta, obj, changed, conv = c_step(Xf, y, ones, H, b0, beta, obj, h, lam, tol, max_iter, std)
        if not conv:
            bad += 1
        if not changed:
            break
    return H, b0, beta, obj, bad


@njit(cache=True)
def c_step(Xf, y, ones, H, b0, beta, obj, h, lam, tol, max_iter, std):
    """
    One concentration step. Returns (H, b0, beta, obj, changed, converged).
    When the new subset equals the old one, or (possible only with ``std``,
    where the penalty depends on the subset) the refit does not lower the
    objective, the input fit is returned as is.
    """
    n = Xf.shape[0]
    r = np.empty(n)
    residuals_all(Xf, y, b0, beta, r)
    Hn = h_smallest(r * r, h)
    if _same(Hn, H):
        return H, b0, beta, obj, False, True
    nb0, nbeta, _, conv = lasso_cd(Xf, y, ones, Hn, lam, beta, tol, max_iter, std)
    nobj = subset_objective(Xf, y, ones, Hn, nb0, nbeta, lam, std)
    if std and nobj > obj:
        return H, b0, beta, obj, False, conv
    return Hn, nb0, nbeta, nobj, True, conv


@njit(cache=True, parallel=True)
def multistart(Xf, y, triples, h, lam, tol, max_iter, n_csteps, n_keep, max_csteps, std):
    """
    Run all elemental starts with ``n_csteps`` C-steps, keep the ``n_keep``
    best and iterate those to a fixed point (at most ``max_csteps`` steps).

    Returns per-kept-chain arrays ordered by start index:
    (start_ids, subsets, b0s, betas, objectives, steps, capped, n_bad, init_objectives)
    """
    n, p = Xf.shape
    s = triples.shape[0]
    ones = np.ones(n)
    subsets = np.empty((s, h), dtype=np.int64)
    b0s = np.empty(s)
    betas = np.empty((s, p))
    objs = np.empty(s)
    bad = np.zeros(s, dtype=np.int64)
    for k in prange(s):
        H, b0, beta, obj, nb = elemental_chain(Xf, y, ones, triples[k], h, lam, tol, max_iter, n_csteps, std)
        subsets[k] = H
        b0s[k] = b0
        betas[k] = beta
        objs[k] = obj
        bad[k] = nb

    keep = np.sort(np.argsort(objs, kind="mergesort")[:n_keep])
    kk = keep.shape[0]
    out_sub = np.empty((kk, h), dtype=np.int64)
    out_b0 = np.empty(kk)
    out_beta = np.empty((kk, p))
    out_obj = np.empty(kk)
    steps = np.zeros(kk, dtype=np.int64)
    capped = np.zeros(kk, dtype=np.bool_)
    bad2 = np.zeros(kk, dtype=np.int64)
    for c in prange(kk):
        k = keep[c]
        H = subsets[k].copy()
        b0 = b0s[k]
        beta = betas[k].copy()
        obj = objs[k]
        done = False
        st = 0
        while st < max_csteps:
            H, b0, beta, obj, changed, conv = c_step(Xf, y, ones, H, b0, beta, obj, h, lam, tol, max_iter, std)
            if not conv:
                bad2[c] += 1
            if not changed:
                done = True
                break
            st += 1
        steps[c] = st
        capped[c] = not done
        out_sub[c] = H
        out_b0[c] = b0
        out_beta[c] = beta
        out_obj[c] = obj
    return keep, out_sub, out_b0, out_beta, out_obj, steps, capped, bad.sum() + bad2.sum(), objs


@njit(cache=True)
def _solve_small(G, b):
    # Gaussian elimination with partial pivoting; returns (x, ok)
    k = b.shape[0]
    A = G.copy()
    x = b.copy()
    scale = 0.0
    for i in range(k):
        if abs(A[i, i]) > scale:
            scale = abs(A[i, i])
    for c in range(k):
        piv = c
        for i in range(c + 1, k):
            if abs(A[i, c]) > abs(A[piv, c]):
                piv = i
        if abs(A[piv, c]) <= 1e-10 * scale:
            return x, False
        if piv != c:
            for jj in range(k):
                tmp = A[c, jj]
                A[c, jj] = A[piv, jj]
                A[piv, jj] = tmp
            tmp = x[c]
            x[c] = x[piv]
            x[piv] = tmp
        for i in range(c + 1, k):
            f = A[i, c] / A[c, c]
            for jj in range(c, k):
                A[i, jj] -= f * A[c, jj]
            x[i] -= f * x[c]
    for c in range(k - 1, -1, -1):
        s = x[c]
        for jj in range(c + 1, k):
            s -= A[c, jj] * x[jj]
        x[c] = s / A[c, c]
    return x, True


@njit(cache=True)
def lasso_homotopy(Xf, y, rows, lam, std):
    """
    Exact lasso on a small row subset by following the piecewise-linear
    solution path from the all-zero solution down to ``lam``.

    Same objective as ``lasso_cd`` with unit weights. Meant for subsets far
    smaller than p, where coordinate descent converges slowly.
    Returns (b0, beta, n_steps, ok).
    """
    m = rows.shape[0]
    p = Xf.shape[1]
    xbar = np.empty(p)
    Z = np.empty((p, m))
    usable = np.ones(p, dtype=np.bool_)
    sd = np.ones(p)
    for j in range(p):
        s = 0.0
        mag = 0.0
        for k in range(m):
            v = Xf[rows[k], j]
            s += v
            if abs(v) > mag:
                mag = abs(v)
        mu = s / m
        xbar[j] = mu
        q = 0.0
        for k in range(m):
            z = Xf[rows[k], j] - mu
            Z[j, k] = z
            q += z * z
        if q <= m * (1e-12 * mag) ** 2:
            usable[j] = False
        elif std:
            sd[j] = np.sqrt(q / m)
            for k in range(m):
                Z[j, k] /= sd[j]
    s = 0.0
    for k in range(m):
        s += y[rows[k]]
    ybar = s / m
    yc = np.empty(m)
    for k in range(m):
        yc[k] = y[rows[k]] - ybar

    c = np.empty(p)
    for j in range(p):
        g = 0.0
        for k in range(m):
            g += Z[j, k] * yc[k]
        c[j] = g
    beta = np.zeros(p)
    target = 0.5 * m * lam

    active = np.empty(m, dtype=np.int64)
    signs = np.empty(m)
    na = 0
    in_active = np.zeros(p, dtype=np.bool_)
    t = 0.0
    jstar = -1
    for j in range(p):
        if usable[j] and abs(c[j]) > t:
            t = abs(c[j])
            jstar = j
    ok = True
    steps = 0
    if jstar < 0 or t <= target:
        return ybar, beta, steps, ok
    active[0] = jstar
    signs[0] = 1.0 if c[jstar] > 0 else -1.0
    in_active[jstar] = True
    na = 1
    max_rank = m - 1
    u = np.empty(m)
    a = np.empty(p)
    while steps < 50 * m + 50:
        steps += 1
        G = np.empty((na, na))
        for i1 in range(na):
            for i2 in range(na):
                g = 0.0
                for k in range(m):
                    g += Z[active[i1], k] * Z[active[i2], k]
                G[i1, i2] = g
        d, solved = _solve_small(G, signs[:na].copy())
        if not solved:
            # newest column is collinear with the others on this subset
            na -= 1
            in_active[active[na]] = False
            usable[active[na]] = False
            continue
        for k in range(m):
            v = 0.0
            for i1 in range(na):
                v += Z[active[i1], k] * d[i1]
            u[k] = v
        gamma = t - target
        event = 0
        who = -1
        if na < max_rank:
            for j in range(p):
                if not usable[j] or in_active[j]:
                    continue
                g = 0.0
                for k in range(m):
                    g += Z[j, k] * u[k]
                a[j] = g
                if 1.0 - g > 1e-12:
                    cand = (t - c[j]) / (1.0 - g)
                    if 0.0 < cand < gamma:
                        gamma = cand
                        event = 1
                        who = j
                if 1.0 + g > 1e-12:
                    cand = (t + c[j]) / (1.0 + g)
                    if 0.0 < cand < gamma:
                        gamma = cand
                        event = 1
                        who = j
        for i1 in range(na):
            bj = beta[active[i1]]
            if bj != 0.0 and d[i1] != 0.0:
                cand = -bj / d[i1]
                if 0.0 < cand < gamma:
                    gamma = cand
                    event = 2
                    who = i1
        for i1 in range(na):
            beta[active[i1]] += gamma * d[i1]
        for j in range(p):
            if usable[j] and not in_active[j]:
                g = 0.0
                for k in range(m):
                    g += Z[j, k] * u[k]
                c[j] -= gamma * g
        t -= gamma
        if event == 0:
            break
        if event == 1:
            active[na] = who
            signs[na] = 1.0 if c[who] > 0 else -1.0
            in_active[who] = True
            na += 1
        else:
            drop = active[who]
            beta[drop] = 0.0
            in_active[drop] = False
            g = 0.0
            for k in range(m):
                g += Z[drop, k] * yc[k]
            for i1 in range(na):
                jj = active[i1]
                if jj != drop:
                    for k in range(m):
                        g -= Z[drop, k] * Z[jj, k] * beta[jj]
            c[drop] = g
            for i1 in range(who, na - 1):
                active[i1] = active[i1 + 1]
                signs[i1] = signs[i1 + 1]
            na -= 1
    else:
        ok = False
    for j in range(p):
        beta[j] /= sd[j]
    b0 = ybar
    for j in range(p):
        b0 -= xbar[j] * beta[j]
    return b0, beta, steps, ok
