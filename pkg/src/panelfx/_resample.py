"""Pairs cluster bootstrap as integer cluster weights.

Drawing G clusters with replacement and giving each copy its own fixed-effect
levels is the same weighted least-squares problem as keeping every cluster
once with weight w_c = number of times it was drawn. When one FE dimension is
nested in the clusters (city-month inside city) its within transformation
does not depend on w, so it is done once; a single crossing dimension (day)
is then handled through its normal equations:

    [A_bb  A_bg] [b]   [r_b]
    [A_gb  A_gg] [g] = [r_g]

with A_gg block-diagonal over the connected components of the crossing
levels. Every block is inverted by a Hermitian pseudo-inverse and ``b``
follows from the Schur complement S = A_bb - A_bg A_gg^+ A_gb.

All per-cluster ingredients are precomputed, so a replicate costs a few
small matrix products instead of a full refit.
"""

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import NoConvergence

PINV_RCOND = 1e-10
MIN_EIG = 1e-10
LOST_RTOL = 1e-9


def draw_counts(seed, r, G):
    """Cluster multiplicities for replicate ``r`` (seeded by ``(seed, r)``)."""
    rng = np.random.default_rng([int(seed), int(r)])
    return np.bincount(rng.integers(0, G, G), minlength=G)


def nested_in(codes, cluster, n_levels):
    """True when every level of ``codes`` lies inside a single cluster."""
    first = np.full(n_levels, -1, dtype=np.int64)
    first[codes] = cluster
    return bool((first[codes] == cluster).all())


def fe_layout(frame, fe_dims, cluster_dim):
    """Split ``fe_dims`` into (nested, crossing) relative to ``cluster_dim``.

    Returns None when the weighted solver cannot handle the structure
    (more than one crossing dim, or a crossing dim together with more than
    one nested dim).
    """
    cl = frame.codes[cluster_dim]
    nested, crossing = [], []
    for d in fe_dims:
        (nested if nested_in(frame.codes[d], cl, frame.n_levels(d)) else crossing).append(d)
    if len(crossing) > 1 or (crossing and len(nested) > 1):
        return None
    return nested, crossing


class WeightedSolver:
    """Precomputed per-cluster normal-equation pieces for one model.

    Parameters
    ----------
    y : (n,) outcome
    X : (n, k) design (columns the full-sample fit retained)
    cluster : (n,) dense cluster codes
    nested : list of (codes, counts) for FE dims nested in the clusters
    crossing : (codes, n_levels) or None
    """

    def __init__(self, y, X, cluster, nested, crossing=None, tol=1e-8, max_iter=10_000):
        n, k = X.shape
        self.k = k
        self.G = G = int(cluster.max()) + 1
        Z = np.column_stack([y, X])
        if nested:
            Z, _, achieved = _kernels.demean(Z, [c for c, _ in nested], [m for _, m in nested], tol, max_iter)
            if achieved > tol:
                raise NoConvergence(max_iter, achieved)
        yt, Xt = Z[:, 0], Z[:, 1:]

        # A_bb and r_b per cluster
        order = np.argsort(cluster, kind="stable")
        cuts = np.searchsorted(cluster[order], np.arange(G + 1))
        Xs = Xt[order]
        self.Gc = np.stack([Xs[a:b].T @ Xs[a:b] for a, b in zip(cuts[:-1], cuts[1:])]).reshape(G, k * k)
        self.hc = _kernels.group_sums(cluster, Xt * yt[:, None], G)

        self.crossing = crossing is not None
        if not self.crossing:
            return
        tcodes, T = crossing
        self.T = T
        ct = cluster * T + tcodes
        # Q_c: day sums of the demeaned design, q_c: of the demeaned outcome
        self.Q = _kernels.group_sums(ct, Xt, G * T).reshape(G, T, k).transpose(0, 2, 1).reshape(G, k * T)
        self.q = np.bincount(ct, weights=yt, minlength=G * T).reshape(G, T)
        self.N = np.bincount(ct, minlength=G * T).reshape(G, T).astype(np.float64)
        self._blocks(tcodes, T, nested, cluster)

    def _blocks(self, tcodes, T, nested, cluster):
        if nested:
            gcodes, gcounts = nested[0]
            ng = len(gcounts)
            E = coo_matrix((np.ones(len(tcodes)), (gcodes, tcodes)), shape=(ng, T)).tocsr()
            E.sum_duplicates()
            g_city = np.zeros(ng, dtype=np.int64)
            g_city[gcodes] = cluster
            inv_n = 1.0 / np.maximum(np.asarray(gcounts, dtype=np.float64), 1.0)
            adj = (E.T @ E).tocsr()
        else:
            E, ng = None, 0
            adj = coo_matrix((np.ones(T), (np.arange(T), np.arange(T))), shape=(T, T)).tocsr()
        ncomp, comp = connected_components(adj, directed=False)
        self.classes = []  # one entry per block size: stacked day indices and low-rank terms
        sizes = np.bincount(comp, minlength=ncomp)
        order = np.argsort(comp, kind="stable")
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        blocks = [order[bounds[b]:bounds[b + 1]] for b in range(ncomp)]
        by_size = {}
        for b, days in enumerate(blocks):
            by_size.setdefault(len(days), []).append(b)
        if E is not None:
            g_comp = comp[np.asarray(E.argmax(axis=1)).ravel()]
        for s, bl in sorted(by_size.items()):
            days = np.stack([blocks[b] for b in bl])  # (nb, s)
            entry = {"days": days}
            if E is not None:
                members = [np.flatnonzero(g_comp == b) for b in bl]
                gmax = max(len(m) for m in members)
                M = np.zeros((len(bl), gmax, s))
                gc = np.full((len(bl), gmax), self.G, dtype=np.int64)  # pad -> zero-weight cluster
                gi = np.zeros((len(bl), gmax))
                for i, m in enumerate(members):
                    if len(m):
                        M[i, :len(m)] = E[m][:, days[i]].toarray()
                        gc[i, :len(m)] = g_city[m]
                        gi[i, :len(m)] = inv_n[m]
                entry.update(M=M, Mt=np.ascontiguousarray(M.transpose(0, 2, 1)), gc=gc, gi=gi)
            self.classes.append(entry)

    def solve(self, W):
        """Coefficients for each row of cluster weights ``W`` (R, G).

        Returns
        -------
        coef : (R, k)
        S_diag : (R, k) diagonal of the Schur complement (support check)
        ok : (R,) bool, False where the weighted design is singular
        """
        W = np.asarray(W, dtype=np.float64)
        R, k = W.shape[0], self.k
        S = (W @ self.Gc).reshape(R, k, k)
        r = W @ self.hc
        if self.crossing:
            T = self.T
            Abg = (W @ self.Q).reshape(R, k, T)
            rg = W @ self.q
            diag = W @ self.N
            Wp = np.concatenate([W, np.zeros((R, 1))], axis=1)
            for c in self.classes:
                days = c["days"]
                nb, s = days.shape
                A = np.zeros((R, nb, s, s))
                idx = np.arange(s)
                A[:, :, idx, idx] = diag[:, days]
                if "M" in c:
                    wg = Wp[:, c["gc"]] * c["gi"]  # (R, nb, gmax)
                    A -= (c["Mt"][None] * wg[:, :, None, :]) @ c["M"][None]
                lam, U = np.linalg.eigh(A)
                cut = PINV_RCOND * np.maximum(lam.max(axis=-1, keepdims=True), 1e-300)
                root = np.where(lam > cut, 1.0 / np.sqrt(np.where(lam > cut, lam, 1.0)), 0.0)
                U = U * root[:, :, None, :]  # A^+ = U U'
                P = np.ascontiguousarray(Abg[:, :, days].transpose(0, 2, 1, 3)) @ U  # (R, nb, k, s)
                py = (rg[:, days][:, :, None, :] @ U)[:, :, 0, :]  # (R, nb, s)
                P = P.transpose(0, 2, 1, 3).reshape(R, k, nb * s)
                S -= P @ P.transpose(0, 2, 1)
                r -= (P @ py.reshape(R, nb * s, 1))[:, :, 0]
        S = 0.5 * (S + S.transpose(0, 2, 1))
        d = np.diagonal(S, axis1=1, axis2=2).copy()
        ok = (d > 0).all(axis=1)
        coef = np.full((R, k), np.nan)
        for i in np.flatnonzero(ok):
            sc = 1.0 / np.sqrt(d[i])
            Sn = S[i] * sc[:, None] * sc[None, :]
            if np.linalg.eigvalsh(Sn)[0] < MIN_EIG:
                ok[i] = False
                continue
            coef[i] = sc * np.linalg.solve(Sn, sc * r[i])
        return coef, d, ok
