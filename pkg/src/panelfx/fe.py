"""High-dimensional fixed-effect absorption and least squares.

Fixed effects are swept out by alternating within-group demeaning
(method of alternating projections); slopes then come from pivoted-QR least
squares on the demeaned system, which equals the full dummy-variable
regression by Frisch-Waugh-Lovell.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg

from . import _kernels
from .binning import BinnedDesign, combine, from_columns
from .errors import EmptyDesign, InvalidConfig, NoConvergence, ZeroRows

PIVOT_RTOL = 1e-10
# a demeaned column this small relative to its raw norm lies in the FE span
ABSORBED_RTOL = 1e-6


@dataclass
class ModelSpec:
    design: BinnedDesign
    fe_dims: tuple
    cluster_dims: tuple = ()
    outcome: str = "outcome"
    tol: float = 1e-8
    max_iter: int = 10_000
    extra: tuple = ()

    def __post_init__(self):
        self.fe_dims = tuple(self.fe_dims)
        self.cluster_dims = tuple(self.cluster_dims)
        if not self.fe_dims:
            raise InvalidConfig("at least one fixed-effect dimension is required")
        if not self.tol > 0:
            raise InvalidConfig("tol must be positive")

    def full_design(self):
        if not self.extra:
            return self.design
        names = [n for n, _ in self.extra]
        return combine(self.design, from_columns(names, [c for _, c in self.extra]))


@dataclass(eq=False)
class FitResult:
    names: list
    coef: dict
    residuals: np.ndarray
    demeaned_design_cols_dropped: list
    iters: int
    dof_model: int
    dof_absorbed: int
    n: int
    Xd: np.ndarray = field(repr=False, default=None)
    yd: np.ndarray = field(repr=False, default=None)
    fe_dims: tuple = ()
    achieved: float = 0.0
    labels: dict = field(default_factory=dict)

    def vector(self, names=None):
        names = self.names if names is None else names
        return np.array([self.coef[n] for n in names])

    def table(self):
        return pd.DataFrame({"term": self.names, "estimate": self.vector()})

    def to_csv(self, path):
        self.table().to_csv(path, index=False, float_format="%.10g", lineterminator="\n")

    def run_log(self):
        lines = [
            f"n = {self.n}",
            f"fe_dims = {', '.join(self.fe_dims)}",
            f"sweeps = {self.iters}",
            f"max_group_mean = {self.achieved:.3e}",
            f"dof_model = {self.dof_model}",
            f"dof_absorbed = {self.dof_absorbed}",
            f"dropped = {', '.join(self.demeaned_design_cols_dropped) or '(none)'}",
        ]
        return "\n".join(lines) + "\n"


def absorb(columns, codes, tol=1e-8, max_iter=10_000, counts=None):
    """Demean ``columns`` within every level of every FE dimension.

    Parameters
    ----------
    columns : (n,) or (n, k) array
    codes : sequence of (n,) dense integer arrays, one per FE dimension
    tol : float
        Convergence threshold on the largest absolute within-group mean.

    Returns
    -------
    demeaned : array shaped like ``columns``
    sweeps : int
    """
    X = np.asarray(columns, dtype=np.float64)
    vec = X.ndim == 1
    if vec:
        X = X[:, None]
    codes = [np.asarray(c, dtype=np.int64) for c in codes]
    if counts is None:
        counts = [np.bincount(c) for c in codes]
    out, sweeps, achieved = _kernels.demean(X, codes, counts, tol, max_iter)
    if achieved > tol:
        raise NoConvergence(max_iter, achieved)
    return (out[:, 0] if vec else out), sweeps


@dataclass(eq=False)
class OLSResult:
    coef: np.ndarray
    retained: np.ndarray
    dropped: np.ndarray
    residuals: np.ndarray


def ols(y, X, rtol=PIVOT_RTOL):
    """Least squares with column-pivoted QR rank detection.

    Columns whose pivot falls below ``rtol`` times the leading pivot are
    dropped. ``coef`` and ``retained`` are in original column order.
    """
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if n == 0:
        raise ZeroRows("no observations")
    if k == 0:
        raise EmptyDesign("design has no columns")
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0:
        raise EmptyDesign("design has no non-zero columns")
    rank = int((d > rtol * d[0]).sum())
    b_piv = linalg.solve_triangular(R[:rank, :rank], Q[:, :rank].T @ y)
    order = np.argsort(piv[:rank])
    retained = piv[:rank][order]
    coef = b_piv[order]
    dropped = np.sort(piv[rank:])
    resid = y - X[:, retained] @ coef
    return OLSResult(coef, retained, dropped, resid)


def _dof_absorbed(frame, dims):
    return int(sum(frame.n_levels(d) for d in dims) - (len(dims) - 1))


def fit_model(frame, spec):
    """Absorb ``spec.fe_dims`` from outcome and design, then OLS."""
    design = spec.full_design()
    y = frame.column(spec.outcome).astype(np.float64)
    if len(y) == 0:
        raise ZeroRows("no observations")
    if design.n_cols == 0:
        raise EmptyDesign("design has no columns")
    codes = frame.dim_codes(spec.fe_dims)
    counts = frame.dim_counts(spec.fe_dims)
    Z = np.column_stack([y, design.columns])
    Zd, sweeps, achieved = _kernels.demean(Z, codes, counts, spec.tol, spec.max_iter)
    if achieved > spec.tol:
        raise NoConvergence(spec.max_iter, achieved)
    yd, Xd = Zd[:, 0], Zd[:, 1:]

    raw_norm = np.sqrt((design.columns ** 2).sum(axis=0))
    dm_norm = np.sqrt((Xd ** 2).sum(axis=0))
    live = np.flatnonzero(dm_norm > ABSORBED_RTOL * np.maximum(raw_norm, 1e-300))
    if live.size == 0:
        raise EmptyDesign("every design column is absorbed by the fixed effects")
    res = ols(yd, Xd[:, live])
    keep = live[res.retained]
    dropped = sorted(set(range(design.n_cols)) - set(keep.tolist()))
    names = [design.names[j] for j in keep]
    return FitResult(
        names=names,
        coef=dict(zip(names, res.coef.tolist())),
        residuals=res.residuals,
        demeaned_design_cols_dropped=[design.names[j] for j in dropped],
        iters=sweeps,
        dof_model=len(names),
        dof_absorbed=_dof_absorbed(frame, spec.fe_dims),
        n=len(y),
        Xd=np.ascontiguousarray(Xd[:, keep]),
        yd=yd,
        fe_dims=spec.fe_dims,
        achieved=achieved,
        labels={design.names[j]: design.labels[j] for j in keep},
    )
