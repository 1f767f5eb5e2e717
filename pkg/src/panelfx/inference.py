"""Cluster-robust variance estimation and percentage-effect tables.

Multiway clustering combines one-way sandwiches over every intersection of
the cluster dimensions by inclusion-exclusion. Each one-way piece carries the
small-sample factor G/(G-1) for its own cluster count; no (n-1)/(n-k)
factor is applied. p-values use the normal reference distribution.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import pandas as pd
from scipy import stats

from . import _kernels
from .errors import DimensionMismatch, SingleCluster

PSD_RTOL = 1e-12

METADATA = {
    "small_sample": "G/(G-1) per inclusion-exclusion component; no (n-1)/(n-k)",
    "reference_distribution": "normal",
    "psd_repair": "eigenvalue truncation at zero",
}


@dataclass(eq=False)
class ClusterVcv:
    vcv: np.ndarray
    names: list
    cluster_counts: dict
    psd_adjusted: bool = False
    metadata: dict = field(default_factory=lambda: dict(METADATA))

    def se(self):
        return np.sqrt(np.clip(np.diag(self.vcv), 0.0, None))


def intersect_codes(code_list):
    """Dense codes of the intersection clustering of several dimensions."""
    if len(code_list) == 1:
        c = np.asarray(code_list[0], dtype=np.int64)
        return np.unique(c, return_inverse=True)[1].astype(np.int64)
    stacked = np.column_stack([np.asarray(c, dtype=np.int64) for c in code_list])
    _, inv = np.unique(stacked, axis=0, return_inverse=True)
    return inv.ravel().astype(np.int64)


def bread(X):
    return np.linalg.inv(X.T @ X)


def _clustered_meat(scores, codes):
    G = int(codes.max()) + 1
    sums = _kernels.group_sums(codes, scores, G)
    return sums.T @ sums, G


def cluster_vcv(fit, X=None, clusters=None):
    """Multiway cluster-robust VCV of a fitted model.

    Parameters
    ----------
    fit : FitResult
    X : (n, k) array, the retained demeaned design (defaults to ``fit.Xd``)
    clusters : mapping of dimension name to (n,) codes

    Returns
    -------
    ClusterVcv
    """
    X = fit.Xd if X is None else np.asarray(X, dtype=np.float64)
    if X.shape[1] != len(fit.names):
        raise DimensionMismatch(f"design has {X.shape[1]} columns, fit has {len(fit.names)} terms")
    names = list(clusters)
    if not names:
        raise SingleCluster("(none)")
    counts = {}
    for d in names:
        G = len(np.unique(clusters[d]))
        if G < 2:
            raise SingleCluster(d)
        counts[d] = G
    B = bread(X)
    scores = X * fit.residuals[:, None]
    k = X.shape[1]
    meat = np.zeros((k, k))
    for r in range(1, len(names) + 1):
        sign = 1.0 if r % 2 == 1 else -1.0
        for S in combinations(names, r):
            codes = intersect_codes([clusters[d] for d in S])
            M, G = _clustered_meat(scores, codes)
            meat += sign * (G / (G - 1.0)) * M
    V = B @ meat @ B
    V = 0.5 * (V + V.T)
    V, adjusted = psd_repair(V)
    return ClusterVcv(V, list(fit.names), counts, adjusted)


def psd_repair(V):
    w, U = np.linalg.eigh(V)
    scale = max(np.abs(w).max(), 1e-300)
    if w.min() >= -PSD_RTOL * scale:
        return V, False
    w = np.clip(w, 0.0, None)
    V = (U * w) @ U.T
    return 0.5 * (V + V.T), True


def hc_vcv(fit, X=None):
    """Heteroskedasticity-robust sandwich with the n/(n-1) factor."""
    X = fit.Xd if X is None else X
    n = X.shape[0]
    return cluster_vcv(fit, X, {"row": np.arange(n)})


def iid_vcv(fit, X=None, dof=None):
    """Classical homoskedastic VCV, sigma^2 (X'X)^-1.

    ``dof`` defaults to n - k - absorbed FE levels.
    """
    X = fit.Xd if X is None else X
    n, k = X.shape
    dof = n - k - fit.dof_absorbed if dof is None else dof
    s2 = float(fit.residuals @ fit.residuals) / max(dof, 1)
    V = s2 * bread(X)
    return ClusterVcv(0.5 * (V + V.T), list(fit.names), {}, False,
                      {"small_sample": f"sigma^2 on {dof} residual dof", "reference_distribution": "normal"})


def pct_effect(b):
    """Percentage change implied by a log-point coefficient: 100 (exp(b) - 1)."""
    return 100.0 * np.expm1(b)


@dataclass(eq=False)
class EffectTable:
    frame: pd.DataFrame
    metadata: dict = field(default_factory=dict)

    def row(self, term):
        return self.frame.loc[self.frame["term"] == term].iloc[0]

    def __getitem__(self, term):
        return self.row(term)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            self.frame.to_csv(fh, index=False, float_format="%.10g", lineterminator="\n")

    def metadata_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.metadata.items())


def _rows(terms, est, se, level, transform):
    est = np.asarray(est, dtype=np.float64)
    se = np.asarray(se, dtype=np.float64)
    zcrit = stats.norm.ppf(0.5 + level / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, est / np.where(se > 0, se, 1.0), np.where(est == 0, 0.0, np.inf))
    p = 2.0 * stats.norm.sf(np.abs(z))
    lo, hi = est - zcrit * se, est + zcrit * se
    if transform == "log":
        f = pct_effect
    else:
        def f(x):
            return 100.0 * np.asarray(x)
    return pd.DataFrame({
        "term": list(terms),
        "estimate": est,
        "se": se,
        "p": p,
        "pct_effect": f(est),
        "pct_lo": f(lo),
        "pct_hi": f(hi),
    })


def effect_table(fit, vcv, level=0.95, transform="log"):
    """Per-term estimate, SE, normal p-value and CI, with percentage columns.

    ``transform="log"`` maps log points to percent via ``pct_effect``;
    ``transform="level"`` reports 100 x estimate (percentage points, for
    share outcomes).
    """
    if list(vcv.names) != list(fit.names):
        raise DimensionMismatch("vcv terms do not match fit terms")
    df = _rows(fit.names, fit.vector(), vcv.se(), level, transform)
    meta = dict(vcv.metadata)
    meta.update({"ci_level": level, "outcome_transform": transform,
                 "pct_definition": "100*(exp(b)-1)" if transform == "log" else "100*b (percentage points)"})
    meta.update({f"clusters.{k}": v for k, v in vcv.cluster_counts.items()})
    if vcv.psd_adjusted:
        meta["psd_adjusted"] = True
    return EffectTable(df, meta)


def linear_combination(fit, vcv, weights):
    """Estimate and SE of sum_j w_j b_j for ``weights`` {term: w}."""
    idx = [fit.names.index(t) for t in weights]
    w = np.array(list(weights.values()), dtype=np.float64)
    b = fit.vector()[idx]
    V = vcv.vcv[np.ix_(idx, idx)]
    return float(w @ b), float(np.sqrt(max(w @ V @ w, 0.0)))


def combination_table(labels, combos, fit, vcv, level=0.95, transform="log"):
    """Effect-table rows for named linear combinations of coefficients."""
    est, se = zip(*(linear_combination(fit, vcv, c) if c else (0.0, 0.0) for c in combos))
    return _rows(labels, est, se, level, transform)
