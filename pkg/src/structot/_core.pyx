# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for concave-of-sum set functions.

Same contracts as ``_kernels_py``; see that module for the packed group layout.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, fabs, log, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double SPLIT_RTOL = 1e-13


cdef inline double _g(int kind, double param, double x) nogil:
    if kind == 0:
        return x
    if kind == 1:
        return sqrt(x)
    if kind == 2:
        # min{x, alpha + sqrt(x - alpha)}: linear up to alpha + 1, then sqrt
        if x <= param + 1.0:
            return x
        return param + sqrt(x - param)
    return pow(x, param)


cdef void _argsort_desc(const double* key, Py_ssize_t* perm, Py_ssize_t* tmp,
                        Py_ssize_t n) noexcept nogil:
    # stable bottom-up merge sort of perm by key[perm[.]] descending
    cdef Py_ssize_t width = 1, lo, mid, hi, i, j, k
    cdef Py_ssize_t* src = perm
    cdef Py_ssize_t* dst = tmp
    cdef Py_ssize_t* swap
    while width < n:
        lo = 0
        while lo < n:
            mid = lo + width
            if mid > n:
                mid = n
            hi = lo + 2 * width
            if hi > n:
                hi = n
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if key[src[j]] > key[src[i]]:
                    dst[k] = src[j]
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            while i < mid:
                dst[k] = src[i]
                i += 1
                k += 1
            while j < hi:
                dst[k] = src[j]
                j += 1
                k += 1
            lo = hi
        swap = src
        src = dst
        dst = swap
        width *= 2
    if src != perm:
        for i in range(n):
            perm[i] = src[i]


def g_eval(int kind, double param, x):
    if kind not in (0, 1, 2, 3):
        raise ValueError(f"unknown concave kind {kind}")
    a = np.asarray(x, dtype=np.float64)
    flat = np.ascontiguousarray(a).ravel()
    out = np.empty_like(flat)
    cdef const double[::1] fv = flat
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(fv.shape[0]):
        ov[i] = _g(kind, param, fv[i])
    return out.reshape(a.shape) if a.ndim else out[0]


def group_greedy(const double[::1] w, const cnp.int64_t[::1] idx,
                 const cnp.int64_t[::1] ptr, const double[::1] wts,
                 int kind, double param, double[::1] out):
    cdef Py_ssize_t ng = ptr.shape[0] - 1
    cdef Py_ssize_t q, lo, hi, k, t, p, maxk = 0
    cdef double s, prev, cur
    for q in range(ng):
        if ptr[q + 1] - ptr[q] > maxk:
            maxk = ptr[q + 1] - ptr[q]
    if maxk == 0:
        return
    cdef double* key = <double*> malloc(maxk * sizeof(double))
    cdef Py_ssize_t* perm = <Py_ssize_t*> malloc(maxk * sizeof(Py_ssize_t))
    cdef Py_ssize_t* tmp = <Py_ssize_t*> malloc(maxk * sizeof(Py_ssize_t))
    try:
        with nogil:
            for q in range(ng):
                lo = ptr[q]
                hi = ptr[q + 1]
                k = hi - lo
                for t in range(k):
                    key[t] = w[idx[lo + t]]
                    perm[t] = t
                _argsort_desc(key, perm, tmp, k)
                s = 0.0
                prev = _g(kind, param, 0.0)
                for t in range(k):
                    p = lo + perm[t]
                    s += wts[p]
                    cur = _g(kind, param, s)
                    out[idx[p]] += cur - prev
                    prev = cur
    finally:
        free(key)
        free(perm)
        free(tmp)


def group_eval(mask, idx, ptr, wts, int kind, double param):
    cdef const cnp.uint8_t[::1] mv = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef const cnp.int64_t[::1] iv = idx
    cdef const cnp.int64_t[::1] pv = ptr
    cdef const double[::1] wv = wts
    cdef Py_ssize_t q, p
    cdef double total = 0.0, s
    for q in range(pv.shape[0] - 1):
        s = 0.0
        for p in range(pv[q], pv[q + 1]):
            if mv[iv[p]]:
                s += wv[p]
        total += _g(kind, param, s)
    return total


def sfm_prefix(c, m, double lam, double offset, int kind, double param):
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[::1] mv = np.ascontiguousarray(m, dtype=np.float64)
    cdef Py_ssize_t n = cv.shape[0], t, best = 0
    order = np.empty(n, dtype=np.int64)
    if n == 0:
        return order, 0, 0.0
    cdef cnp.int64_t[::1] ov = order
    cdef double* key = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t* perm = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef Py_ssize_t* tmp = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef double base, s = 0.0, lin = 0.0, val, bestval = 0.0
    try:
        for t in range(n):
            key[t] = (lam - mv[t]) / cv[t]
            perm[t] = t
        _argsort_desc(key, perm, tmp, n)
        base = _g(kind, param, offset)
        for t in range(n):
            ov[t] = perm[t]
            s += cv[perm[t]]
            lin += mv[perm[t]] - lam
            val = _g(kind, param, offset + s) - base + lin
            if val < bestval:
                bestval = val
                best = t + 1
    finally:
        free(key)
        free(perm)
        free(tmp)
    return order, best, bestval


cdef void _project_range(const double* c, const double* z, double* kappa,
                         Py_ssize_t* items, Py_ssize_t nitems,
                         Py_ssize_t* stack_lo, Py_ssize_t* stack_hi, double* stack_c0,
                         double* key, Py_ssize_t* perm, Py_ssize_t* tmp, Py_ssize_t* buf,
                         int kind, double param) noexcept nogil:
    # items[lo:hi] is the working set of one task; tasks are split in place
    cdef Py_ssize_t top = 0, lo, hi, n, t, k, best
    cdef double c0, base, total, zsum, lam, cs, lin, h, hbest, scale, csbest
    stack_lo[0] = 0
    stack_hi[0] = nitems
    stack_c0[0] = 0.0
    top = 1
    while top > 0:
        top -= 1
        lo = stack_lo[top]
        hi = stack_hi[top]
        c0 = stack_c0[top]
        n = hi - lo
        base = _g(kind, param, c0)
        cs = 0.0
        zsum = 0.0
        scale = 0.0
        for t in range(lo, hi):
            cs += c[items[t]]
            zsum += z[items[t]]
            scale += fabs(z[items[t]])
        total = _g(kind, param, c0 + cs) - base
        lam = (total - zsum) / n
        if n > 1:
            for t in range(n):
                key[t] = (lam + z[items[lo + t]]) / c[items[lo + t]]
                perm[t] = t
            _argsort_desc(key, perm, tmp, n)
            for t in range(n):
                buf[t] = items[lo + perm[t]]
            for t in range(n):
                items[lo + t] = buf[t]
            cs = 0.0
            lin = 0.0
            hbest = 0.0
            best = -1
            csbest = 0.0
            for t in range(n - 1):
                cs += c[items[lo + t]]
                lin += z[items[lo + t]] + lam
                h = _g(kind, param, c0 + cs) - base - lin
                if best < 0 or h < hbest:
                    hbest = h
                    best = t
                    csbest = cs
            scale += fabs(total) + fabs(lam) * n
            if scale < 1e-300:
                scale = 1e-300
            if hbest < -SPLIT_RTOL * scale:
                k = best + 1
                stack_lo[top] = lo
                stack_hi[top] = lo + k
                stack_c0[top] = c0
                top += 1
                stack_lo[top] = lo + k
                stack_hi[top] = hi
                stack_c0[top] = c0 + csbest
                top += 1
                continue
        for t in range(lo, hi):
            kappa[items[t]] = lam + z[items[t]]


cdef void _project_block(const double* c, const double* z, double* kappa,
                         Py_ssize_t k, Py_ssize_t* items, Py_ssize_t* stack_lo,
                         Py_ssize_t* stack_hi, double* stack_c0, double* key,
                         Py_ssize_t* perm, Py_ssize_t* tmp, Py_ssize_t* buf,
                         int kind, double param) noexcept nogil:
    cdef Py_ssize_t t, nl = 0
    for t in range(k):
        kappa[t] = 0.0
        if c[t] > 0.0:
            items[nl] = t
            nl += 1
    if nl > 0:
        _project_range(c, z, kappa, items, nl, stack_lo, stack_hi, stack_c0,
                       key, perm, tmp, buf, kind, param)


def project_one(c, z, int kind, double param):
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t k = cv.shape[0]
    kappa = np.zeros(k)
    if k == 0:
        return kappa
    cdef double[::1] kv = kappa
    ws = _Workspace(k)
    _project_block(&cv[0], &zv[0], &kv[0], k, ws.items, ws.stack_lo, ws.stack_hi,
                   ws.stack_c0, ws.key, ws.perm, ws.tmp, ws.buf, kind, param)
    return kappa


cdef class _Workspace:
    cdef Py_ssize_t* items
    cdef Py_ssize_t* stack_lo
    cdef Py_ssize_t* stack_hi
    cdef double* stack_c0
    cdef double* key
    cdef Py_ssize_t* perm
    cdef Py_ssize_t* tmp
    cdef Py_ssize_t* buf
    cdef double* cbuf
    cdef double* zbuf
    cdef double* kbuf

    def __cinit__(self, Py_ssize_t k):
        if k < 1:
            k = 1
        self.items = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
        # each split adds at most one net task, so depth is bounded by k
        self.stack_lo = <Py_ssize_t*> malloc((k + 1) * sizeof(Py_ssize_t))
        self.stack_hi = <Py_ssize_t*> malloc((k + 1) * sizeof(Py_ssize_t))
        self.stack_c0 = <double*> malloc((k + 1) * sizeof(double))
        self.key = <double*> malloc(k * sizeof(double))
        self.perm = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
        self.tmp = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
        self.buf = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
        self.cbuf = <double*> malloc(k * sizeof(double))
        self.zbuf = <double*> malloc(k * sizeof(double))
        self.kbuf = <double*> malloc(k * sizeof(double))
        if (not self.items or not self.stack_lo or not self.stack_hi or not self.stack_c0
                or not self.key or not self.perm or not self.tmp or not self.buf
                or not self.cbuf or not self.zbuf or not self.kbuf):
            raise MemoryError()

    def __dealloc__(self):
        free(self.items)
        free(self.stack_lo)
        free(self.stack_hi)
        free(self.stack_c0)
        free(self.key)
        free(self.perm)
        free(self.tmp)
        free(self.buf)
        free(self.cbuf)
        free(self.zbuf)
        free(self.kbuf)


def group_project(const double[::1] z, const cnp.int64_t[::1] idx,
                  const cnp.int64_t[::1] ptr, const double[::1] wts,
                  int kind, double param, double[::1] out):
    cdef Py_ssize_t ng = ptr.shape[0] - 1
    cdef Py_ssize_t q, lo, k, t, maxk = 0
    for q in range(ng):
        if ptr[q + 1] - ptr[q] > maxk:
            maxk = ptr[q + 1] - ptr[q]
    if maxk == 0:
        return
    cdef _Workspace ws = _Workspace(maxk)
    with nogil:
        for q in range(ng):
            lo = ptr[q]
            k = ptr[q + 1] - lo
            for t in range(k):
                ws.cbuf[t] = wts[lo + t]
                ws.zbuf[t] = z[idx[lo + t]]
            _project_block(ws.cbuf, ws.zbuf, ws.kbuf, k, ws.items, ws.stack_lo,
                           ws.stack_hi, ws.stack_c0, ws.key, ws.perm, ws.tmp, ws.buf,
                           kind, param)
            for t in range(k):
                out[idx[lo + t]] = ws.kbuf[t]


def group_bcd(const double[::1] w, const cnp.int64_t[::1] idx, const cnp.int64_t[::1] ptr,
              const double[::1] wts, const cnp.int64_t[::1] kinds, const double[::1] params,
              const double[::1] mult, const double[::1] fixed, double[::1] blocks,
              double outer_tol, Py_ssize_t max_sweeps):
    cdef Py_ssize_t n = w.shape[0], ng = ptr.shape[0] - 1, nnz = idx.shape[0]
    cdef Py_ssize_t q, lo, k, t, e, sweeps = 0, maxk = 0
    cdef double change = INFINITY, d, mq
    for q in range(ng):
        if ptr[q + 1] - ptr[q] > maxk:
            maxk = ptr[q + 1] - ptr[q]
    total = np.empty(n)
    cdef double[::1] tv = total
    cdef _Workspace ws = _Workspace(maxk)
    with nogil:
        while sweeps < max_sweeps:
            sweeps += 1
            for e in range(n):
                tv[e] = fixed[e]
            for t in range(nnz):
                tv[idx[t]] += blocks[t]
            change = 0.0
            for q in range(ng):
                lo = ptr[q]
                k = ptr[q + 1] - lo
                if k == 0:
                    continue
                mq = mult[q]
                for t in range(k):
                    e = idx[lo + t]
                    ws.cbuf[t] = wts[lo + t]
                    ws.zbuf[t] = (w[e] - tv[e] + blocks[lo + t]) / mq
                _project_block(ws.cbuf, ws.zbuf, ws.kbuf, k, ws.items, ws.stack_lo,
                               ws.stack_hi, ws.stack_c0, ws.key, ws.perm, ws.tmp, ws.buf,
                               <int> kinds[q], params[q])
                for t in range(k):
                    d = mq * ws.kbuf[t] - blocks[lo + t]
                    if fabs(d) > change:
                        change = fabs(d)
                    tv[idx[lo + t]] += d
                    blocks[lo + t] = mq * ws.kbuf[t]
            if change <= outer_tol:
                break
    return sweeps, change, change <= outer_tol


def sinkhorn_scale(K, a, b, double tol, Py_ssize_t max_it, double absorb_at):
    cdef const double[:, ::1] kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = kv.shape[0], m = kv.shape[1], i, j, it = 0
    u = np.ones(n)
    v = np.ones(m)
    Kv = np.empty(n)
    KTu = np.empty(m)
    cdef double[::1] uv = u, vv = v, kvv = Kv, ktv = KTu
    cdef double err = INFINITY, s, big
    cdef bint absorbed = False
    with nogil:
        while True:
            err = 0.0
            for i in range(n):
                s = 0.0
                for j in range(m):
                    s = s + kv[i, j] * vv[j]
                kvv[i] = s
                s = fabs(uv[i] * s - av[i])
                if s > err:
                    err = s
            if err <= tol or it >= max_it:
                break
            big = 0.0
            for i in range(n):
                if kvv[i] <= 0.0:
                    absorbed = True
                    break
            if absorbed:
                break
            for i in range(n):
                uv[i] = av[i] / kvv[i]
            for j in range(m):
                ktv[j] = 0.0
            for i in range(n):
                for j in range(m):
                    ktv[j] = ktv[j] + kv[i, j] * uv[i]
            for j in range(m):
                if ktv[j] <= 0.0:
                    absorbed = True
                    break
            if absorbed:
                break
            for j in range(m):
                vv[j] = bv[j] / ktv[j]
            it += 1
            for i in range(n):
                s = fabs(log(uv[i]))
                if s > big:
                    big = s
            for j in range(m):
                s = fabs(log(vv[j]))
                if s > big:
                    big = s
            if big > absorb_at:
                absorbed = True
                break
    return u, v, err, it, bool(absorbed)
