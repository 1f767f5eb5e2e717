"""Hot numeric kernels: within-group demeaning and group-sum scatter.

Two implementations of each kernel live here. The numba path compiles
explicit loops; the numpy path uses flattened ``np.bincount``. The backend is
picked at import from ``PANELFX_NUMBA`` (``0``/``false``/``off`` forces
numpy) and can be switched at runtime with :func:`set_backend`.
"""

import os

import numpy as np

try:
    import numba as nb

    # the bundled TBB is too old for numba's tbb layer; workqueue is always present
    if os.environ.get("NUMBA_THREADING_LAYER") is None:
        nb.config.THREADING_LAYER = "workqueue"
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    nb = None
    HAVE_NUMBA = False


def _env_wants_numba():
    flag = os.environ.get("PANELFX_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


BACKEND = "numba" if (HAVE_NUMBA and _env_wants_numba()) else "numpy"


def set_backend(name):
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    BACKEND = name


def get_backend():
    return BACKEND


def set_threads(n):
    """Cap numba worker threads (no-op on the numpy backend)."""
    if HAVE_NUMBA and n:
        nb.set_num_threads(max(1, min(int(n), nb.config.NUMBA_NUM_THREADS)))


# --------------------------------------------------------------------------
# numpy reference path
# --------------------------------------------------------------------------

def _group_sums_numpy(codes, X, n_groups):
    n, k = X.shape
    if k == 0:
        return np.zeros((n_groups, 0))
    idx = (codes[:, None] * k + np.arange(k)).ravel()
    out = np.bincount(idx, weights=np.ascontiguousarray(X).ravel(), minlength=n_groups * k)
    return out.reshape(n_groups, k)


def _demean_numpy(X, codes, counts, tol, max_iter):
    X = np.array(X, dtype=np.float64, order="C", copy=True)
    n, k = X.shape
    D = len(codes)
    if k == 0 or n == 0:
        return X, 0, 0.0
    flat_idx = [(c[:, None] * k + np.arange(k)).ravel() for c in codes]
    inv_counts = [1.0 / np.maximum(cnt, 1)[:, None] for cnt in counts]

    def means(d):
        s = np.bincount(flat_idx[d], weights=X.ravel(), minlength=len(counts[d]) * k)
        return s.reshape(len(counts[d]), k) * inv_counts[d]

    sweeps = 0
    achieved = np.inf
    pending = None
    while True:
        if sweeps > 0:
            # the last dim is exact after a sweep; check the rest on the same state
            pending = means(0) if D > 1 else None
            achieved = 0.0
            if D > 1:
                achieved = np.abs(pending).max()
                for d in range(1, D - 1):
                    achieved = max(achieved, np.abs(means(d)).max())
            if achieved <= tol:
                return X, sweeps, achieved
            if sweeps >= max_iter:
                return X, sweeps, achieved
        for d in range(D):
            m = pending if (d == 0 and pending is not None) else means(d)
            X -= m[codes[d]]
        pending = None
        sweeps += 1


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @nb.njit(cache=True)
    def _dim_means(x, codes_d, inv_cnt, off, size, buf):
        for g in range(size):
            buf[off + g] = 0.0
        for i in range(x.shape[0]):
            buf[off + codes_d[i]] += x[i]
        worst = 0.0
        for g in range(size):
            m = buf[off + g] * inv_cnt[off + g]
            buf[off + g] = m
            a = abs(m)
            if a > worst:
                worst = a
        return worst

    @nb.njit(cache=True)
    def _subtract(x, codes_d, off, buf):
        for i in range(x.shape[0]):
            x[i] -= buf[off + codes_d[i]]

    @nb.njit(cache=True)
    def _demean_one(x, codes, inv_cnt, offsets, tol, max_iter, buf):
        D = codes.shape[0]
        sweeps = 0
        achieved = np.inf
        while True:
            have0 = False
            if sweeps > 0:
                achieved = 0.0
                if D > 1:
                    achieved = _dim_means(x, codes[0], inv_cnt, offsets[0], offsets[1] - offsets[0], buf)
                    have0 = True
                    for d in range(1, D - 1):
                        w = _dim_means(x, codes[d], inv_cnt, offsets[d], offsets[d + 1] - offsets[d], buf)
                        if w > achieved:
                            achieved = w
                if achieved <= tol or sweeps >= max_iter:
                    return sweeps, achieved
            for d in range(D):
                if not (d == 0 and have0):
                    _dim_means(x, codes[d], inv_cnt, offsets[d], offsets[d + 1] - offsets[d], buf)
                _subtract(x, codes[d], offsets[d], buf)
            sweeps += 1

    @nb.njit(cache=True)
    def _extra_sweeps(x, codes, inv_cnt, offsets, n_sweeps, buf):
        D = codes.shape[0]
        for _ in range(n_sweeps):
            for d in range(D):
                _dim_means(x, codes[d], inv_cnt, offsets[d], offsets[d + 1] - offsets[d], buf)
                _subtract(x, codes[d], offsets[d], buf)

    @nb.njit(parallel=True, cache=True)
    def _demean_numba_core(X, codes, inv_cnt, offsets, tol, max_iter, sweeps_out, achieved_out):
        k = X.shape[1]
        total = inv_cnt.shape[0]
        for j in nb.prange(k):
            buf = np.empty(total)
            col = X[:, j].copy()
            s, a = _demean_one(col, codes, inv_cnt, offsets, tol, max_iter, buf)
            X[:, j] = col
            sweeps_out[j] = s
            achieved_out[j] = a
        # give every column the same number of sweeps so the transform is one
        # linear map (exact collinearities survive demeaning)
        target = sweeps_out.max()
        for j in nb.prange(k):
            if sweeps_out[j] < target:
                buf = np.empty(total)
                col = X[:, j].copy()
                _extra_sweeps(col, codes, inv_cnt, offsets, target - sweeps_out[j], buf)
                X[:, j] = col

    @nb.njit(cache=True)
    def _group_sums_numba(codes, X, n_groups):
        n, k = X.shape
        out = np.zeros((n_groups, k))
        for i in range(n):
            g = codes[i]
            for j in range(k):
                out[g, j] += X[i, j]
        return out


def _demean_numba(X, codes, counts, tol, max_iter):
    X = np.array(X, dtype=np.float64, order="F", copy=True)
    n, k = X.shape
    if k == 0 or n == 0:
        return X, 0, 0.0
    codes_arr = np.ascontiguousarray(np.vstack(codes), dtype=np.int64)
    sizes = np.array([len(c) for c in counts], dtype=np.int64)
    offsets = np.zeros(len(counts) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(sizes)
    inv_cnt = 1.0 / np.maximum(np.concatenate(counts).astype(np.float64), 1.0)
    sweeps = np.zeros(k, dtype=np.int64)
    achieved = np.zeros(k)
    _demean_numba_core(X, codes_arr, inv_cnt, offsets, float(tol), int(max_iter), sweeps, achieved)
    return np.ascontiguousarray(X), int(sweeps.max()), float(achieved.max())


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def demean(X, codes, counts, tol, max_iter, backend=None):
    """Alternating within-group demeaning of every column of ``X``.

    Parameters
    ----------
    X : (n, k) array
    codes : sequence of (n,) int64 arrays, dense group codes per dimension
    counts : sequence of per-dimension group sizes
    tol : float
        Stop once every within-group mean is at most ``tol`` in absolute value.
    max_iter : int
        Sweep cap.

    Returns
    -------
    demeaned : (n, k) array
    sweeps : int
        Number of full sweeps over the dimensions (maximum over columns).
    achieved : float
        Largest absolute within-group mean at termination.
    """
    backend = backend or BACKEND
    codes = [np.asarray(c, dtype=np.int64) for c in codes]
    counts = [np.asarray(c, dtype=np.int64) for c in counts]
    if backend == "numba":
        return _demean_numba(X, codes, counts, tol, max_iter)
    return _demean_numpy(X, codes, counts, tol, max_iter)


def group_sums(codes, X, n_groups, backend=None):
    """Sum the rows of ``X`` (n, k) into ``n_groups`` groups given by ``codes``."""
    backend = backend or BACKEND
    codes = np.asarray(codes, dtype=np.int64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        return group_sums(codes, X[:, None], n_groups, backend)[:, 0]
    if backend == "numba":
        return _group_sums_numba(codes, np.ascontiguousarray(X), int(n_groups))
    return _group_sums_numpy(codes, X, int(n_groups))
