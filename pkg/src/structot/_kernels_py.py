"""Pure-Python/NumPy kernels for concave-of-sum set functions.

These mirror ``_core.pyx`` function for function and are used when the
compiled extension is unavailable (or forced via ``STRUCTOT_PURE_PYTHON``).

Groups are packed as concatenated index arrays: group ``q`` owns positions
``ptr[q]:ptr[q+1]`` of ``idx`` (flat edge indices, ascending within a
group) and ``wts`` (nonnegative edge weights). All groups in a pack share
one concave function, given as ``(kind, param)`` with kinds
0=identity, 1=sqrt, 2=threshold_sqrt(alpha), 3=power(p).

threshold_sqrt is evaluated as ``min{x, alpha + sqrt([x - alpha]_+)}``. The
sum form ``min{x, alpha} + sqrt([x - alpha]_+)`` has slope 1 below alpha and
unbounded slope just above it, so it is not concave and the induced set
function can fail submodularity; the two agree outside ``(alpha, alpha + 1)``.
"""
import numpy as np

# relative threshold below which a parametric split is treated as no split
SPLIT_RTOL = 1e-13


def g_eval(kind, param, x):
    x = np.asarray(x, dtype=float)
    if kind == 0:
        return x
    if kind == 1:
        return np.sqrt(x)
    if kind == 2:
        return np.minimum(x, param + np.sqrt(np.maximum(x - param, 0.0)))
    if kind == 3:
        return np.power(x, param)
    raise ValueError(f"unknown concave kind {kind}")


def group_greedy(w, idx, ptr, wts, kind, param, out):
    """Accumulate each group's greedy base vertex for direction ``w`` into ``out``."""
    for q in range(len(ptr) - 1):
        lo, hi = ptr[q], ptr[q + 1]
        e = idx[lo:hi]
        order = np.argsort(-w[e], kind="stable")
        s = np.cumsum(wts[lo:hi][order])
        gv = g_eval(kind, param, s)
        inc = np.diff(gv, prepend=g_eval(kind, param, 0.0))
        np.add.at(out, e[order], inc)


def group_eval(mask, idx, ptr, wts, kind, param):
    """Sum over groups of ``g(sum of weights of selected edges)``."""
    if len(idx) == 0:
        return 0.0
    sel = np.where(mask[idx], wts, 0.0)
    sums = np.add.reduceat(sel, ptr[:-1]) if len(ptr) > 1 else np.empty(0)
    return float(np.sum(g_eval(kind, param, sums)) - (len(ptr) - 1) * g_eval(kind, param, 0.0))


def sfm_prefix(c, m, lam, offset, kind, param):
    """Minimize ``g(offset + c(T)) - g(offset) + sum_T (m_i - lam)``.

    Candidates are the prefixes of the elements sorted by decreasing
    ``(lam - m_i) / c_i``, plus the empty set. Returns ``(order, k, value)``:
    the minimizer is ``order[:k]``.
    """
    c = np.asarray(c, dtype=float)
    m = np.asarray(m, dtype=float)
    if c.size == 0:
        return np.empty(0, dtype=np.int64), 0, 0.0
    r = (lam - m) / c
    order = np.argsort(-r, kind="stable")
    base = g_eval(kind, param, offset)
    vals = g_eval(kind, param, offset + np.cumsum(c[order])) - base + np.cumsum(m[order] - lam)
    k = int(np.argmin(vals))
    if vals[k] < 0.0:
        return order, k + 1, float(vals[k])
    return order, 0, 0.0


def project_one(c, z, kind, param):
    """Euclidean projection of ``z`` onto the base polytope of ``g(c(.))``.

    Decomposition algorithm: pivot at the mean value ``lam = G(A)/|A|`` of
    the shifted function ``G = F - z``, split ``A`` at a minimizer of
    ``G - lam |.|`` (restriction / contraction), recurse. Elements with zero
    weight are loops and get zero.
    """
    c = np.asarray(c, dtype=float)
    z = np.asarray(z, dtype=float)
    kappa = np.zeros(c.size)
    live = np.flatnonzero(c > 0)
    if live.size == 0:
        return kappa
    stack = [(live, 0.0)]
    while stack:
        a, c0 = stack.pop()
        ca = c[a]
        za = z[a]
        base = float(g_eval(kind, param, c0))
        total = float(g_eval(kind, param, c0 + ca.sum())) - base
        lam = (total - za.sum()) / a.size
        if a.size > 1:
            r = (lam + za) / ca
            order = np.argsort(-r, kind="stable")
            cs = np.cumsum(ca[order])
            h = g_eval(kind, param, c0 + cs[:-1]) - base - np.cumsum(za[order][:-1] + lam)
            k = int(np.argmin(h))
            scale = abs(total) + np.abs(za).sum() + abs(lam) * a.size
            if h[k] < -SPLIT_RTOL * max(scale, 1e-300):
                stack.append((a[order[:k + 1]], c0))
                stack.append((a[order[k + 1:]], c0 + cs[k]))
                continue
        kappa[a] = lam + za
    return kappa


def group_project(z, idx, ptr, wts, kind, param, out):
    """Project ``z`` restricted to each group; write into ``out[idx]``."""
    for q in range(len(ptr) - 1):
        lo, hi = ptr[q], ptr[q + 1]
        e = idx[lo:hi]
        out[e] = project_one(wts[lo:hi], z[e], kind, param)


def group_bcd(w, idx, ptr, wts, kinds, params, mult, fixed, blocks, outer_tol, max_sweeps):
    """Cyclic block-coordinate projection of ``w`` onto a sum of base polytopes.

    Block ``q`` lives in ``mult[q] * B_{G_q}`` where ``G_q`` is the concave-of-sum
    function of group ``q`` with its own ``(kinds[q], params[q])``; ``fixed``
    is a constant offset (modular parts). ``blocks`` is packed like ``idx`` and
    updated in place. Each sweep recomputes the running total, then replaces
    every block by its projection given the others. Stops once a sweep moves
    no entry by more than ``outer_tol``; returns ``(sweeps, change, converged)``.
    """
    sweeps, change = 0, np.inf
    for sweeps in range(1, max_sweeps + 1):
        total = np.array(fixed, dtype=float)
        np.add.at(total, idx, blocks)
        change = 0.0
        for q in range(len(ptr) - 1):
            lo, hi = ptr[q], ptr[q + 1]
            if hi == lo:
                continue
            e = idx[lo:hi]
            old = blocks[lo:hi].copy()
            target = (w[e] - total[e] + old) / mult[q]
            new = mult[q] * project_one(wts[lo:hi], target, int(kinds[q]), float(params[q]))
            d = new - old
            change = max(change, float(np.abs(d).max()))
            total[e] += d
            blocks[lo:hi] = new
        if change <= outer_tol:
            break
    return sweeps, change, change <= outer_tol


def sinkhorn_scale(K, a, b, tol, max_it, absorb_at):
    """Plain Sinkhorn scalings ``(u, v)`` of a positive kernel ``K``, from ones.

    Stops when the row residual ``max |u * (K v) - a|`` is at most ``tol``,
    after ``max_it`` updates, or early (``absorbed`` true) once a scaling
    leaves ``[exp(-absorb_at), exp(absorb_at)]`` or a product underflows to
    zero, so the caller can fold the scalings into log-potentials. Returns
    ``(u, v, err, iterations, absorbed)``.
    """
    u = np.ones(K.shape[0])
    v = np.ones(K.shape[1])
    it = 0
    while True:
        Kv = K @ v
        err = float(np.abs(u * Kv - a).max())
        if err <= tol or it >= max_it:
            return u, v, err, it, False
        if np.any(Kv <= 0):
            return u, v, err, it, True
        u = a / Kv
        KTu = K.T @ u
        if np.any(KTu <= 0):
            return u, v, err, it, True
        v = b / KTu
        it += 1
        if max(np.abs(np.log(u)).max(), np.abs(np.log(v)).max()) > absorb_at:
            return u, v, err, it, True
