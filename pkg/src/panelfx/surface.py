"""Temperature x precipitation surface: simple effects, cluster bootstrap, stars.

The surface model saturates the coarse temperature and precipitation bins,
so each cell's effect relative to the (15-20°C, 0cm) reference is the sum of
its marginal temperature term, marginal precipitation term and interaction
term. Uncertainty comes from a pairs bootstrap over cities; a cell is
starred when its 0.5-99.5 percentile interval excludes zero.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ._resample import LOST_RTOL, WeightedSolver, draw_counts, fe_layout, nested_in
from .binning import from_columns, surface_specs
from .errors import (EstimationError, InsufficientReplicates, InvalidConfig, MissingTerm,
                     TooFewClusters)
from .fe import ModelSpec, fit_model
from .inference import pct_effect
from .panel import PanelFrame

QUANTILE_METHOD = "linear"
CHUNK = 25


def cell_terms(tspec=None, pspec=None):
    """Design terms whose coefficients sum to each cell's simple effect."""
    if tspec is None:
        tspec, pspec = surface_specs()
    tn, pn = tspec.column_names(), pspec.column_names()
    out = {}
    for t in range(tspec.n_bins):
        for p in range(pspec.n_bins):
            terms = []
            if t != tspec.reference_bin:
                terms.append(tn[t])
            if p != pspec.reference_bin:
                terms.append(pn[p])
            if t != tspec.reference_bin and p != pspec.reference_bin:
                terms.append(f"{tn[t]}*{pn[p]}")
            out[(t, p)] = terms
    return out


def simple_effects(fit, tspec=None, pspec=None):
    """Log-point effect of every surface cell relative to the reference cell.

    Terms the fit dropped (no support, or absorbed) count as zero. A
    marginal term that is neither estimated nor dropped raises MissingTerm.
    """
    dropped = set(fit.demeaned_design_cols_dropped)
    out = {}
    for cell, terms in cell_terms(tspec, pspec).items():
        v = 0.0
        for term in terms:
            if term in fit.coef:
                v += fit.coef[term]
            elif term in dropped:
                continue
            elif "*" in term:
                # interaction columns for empty cells are never built
                continue
            else:
                raise MissingTerm(term)
        out[cell] = v
    return out


@dataclass(eq=False)
class BootstrapRun:
    B: int
    seed: int
    cells: list
    cell_draws: dict
    failures: int
    point: dict
    support: dict = field(default_factory=dict)
    method: str = "weighted"

    @property
    def successes(self):
        return self.B - self.failures

    def draws_matrix(self):
        return np.column_stack([self.cell_draws[c] for c in self.cells])

    def to_csv(self, path):
        """Per-replicate draws, one column per cell (log points)."""
        tspec, pspec = surface_specs()
        tn, pn = tspec.column_names(), pspec.column_names()
        cols = {f"{tn[t]}|{pn[p]}": self.cell_draws[(t, p)] for t, p in self.cells}
        pd.DataFrame(cols).to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


def _mapping(names):
    """Cell -> indices into ``names`` (the retained design columns)."""
    pos = {n: i for i, n in enumerate(names)}
    return {cell: [pos[t] for t in terms if t in pos] for cell, terms in cell_terms().items()}


def _counts_for(r, seed, G, resamples):
    if resamples is not None:
        return np.bincount(np.asarray(resamples[r], dtype=np.int64), minlength=G)
    return draw_counts(seed, r, G)


def _refit_one(frame, spec, fit, cl, counts):
    rows, copy = [], []
    order = np.argsort(cl, kind="stable")
    cuts = np.searchsorted(cl[order], np.arange(len(counts) + 1))
    for c in np.flatnonzero(counts):
        r = order[cuts[c]:cuts[c + 1]]
        for j in range(counts[c]):
            rows.append(r)
            copy.append(np.full(len(r), j))
    rows = np.concatenate(rows)
    copy = np.concatenate(copy)
    nested = {d for d in spec.fe_dims if nested_in(frame.codes[d], cl, frame.n_levels(d))}
    data = {spec.outcome: frame.column(spec.outcome)[rows]}
    for d in spec.fe_dims:
        codes = frame.codes[d][rows]
        # a city drawn twice becomes two entities: nested FE levels get a copy index
        data[d] = codes * (counts.max() + 1) + copy if d in nested else codes
    sub = PanelFrame.from_dataframe(pd.DataFrame(data), fe_dims=spec.fe_dims)
    design = spec.full_design()
    keep = [design.names.index(n) for n in fit.names]
    d2 = from_columns(fit.names, [design.columns[rows, j] for j in keep])
    f2 = fit_model(sub, ModelSpec(d2, spec.fe_dims, (), spec.outcome, spec.tol, spec.max_iter))
    if set(f2.names) != set(fit.names):
        return None
    return f2.vector(fit.names)


def cluster_bootstrap(frame, spec, B=1000, seed=0, cluster=None, method="auto", threads=None,
                      resamples=None, chunk=CHUNK):
    """Pairs cluster bootstrap of every surface cell's simple effect.

    Parameters
    ----------
    frame : PanelFrame (validated)
    spec : ModelSpec of the surface model
    B : int
        Replicates.
    seed : int
        Replicate ``r`` draws clusters from ``default_rng([seed, r])``.
    cluster : str
        Resampling dimension, default the frame's city column.
    method : {"auto", "weighted", "refit"}
        ``weighted`` solves each replicate as cluster-weighted least squares
        from precomputed per-cluster pieces; ``refit`` builds the resampled
        panel and refits it. Both give the same estimates; ``auto`` picks
        ``weighted`` whenever the FE structure allows it.
    resamples : sequence of index arrays, optional
        Explicit cluster draws per replicate (overrides ``seed``).

    Returns
    -------
    BootstrapRun
    """
    cluster = cluster or frame.city_col
    if cluster is None or cluster not in frame.codes:
        raise InvalidConfig("cluster bootstrap needs a city cluster column")
    cl = frame.codes[cluster]
    G = frame.n_levels(cluster)
    if G < 2:
        raise TooFewClusters(f"{G} cluster(s) in {cluster!r}")
    if method not in ("auto", "weighted", "refit"):
        raise InvalidConfig(f"unknown bootstrap method {method!r}")
    if resamples is not None:
        B = len(resamples)
    fit = fit_model(frame, spec)
    point = simple_effects(fit)
    cells = list(point)
    mapping = _mapping(fit.names)
    layout = fe_layout(frame, spec.fe_dims, cluster)
    if method == "weighted" and layout is None:
        raise InvalidConfig("fixed-effect structure not supported by the weighted bootstrap")
    use_weighted = method != "refit" and layout is not None

    coefs = np.full((B, len(fit.names)), np.nan)
    if use_weighted:
        design = spec.full_design()
        keep = [design.names.index(n) for n in fit.names]
        nested, crossing = layout
        solver = WeightedSolver(
            frame.column(spec.outcome), design.columns[:, keep], cl,
            [(frame.codes[d], frame.dim_counts([d])[0]) for d in nested],
            (frame.codes[crossing[0]], frame.n_levels(crossing[0])) if crossing else None,
            spec.tol, spec.max_iter,
        )
        _, d_full, _ = solver.solve(np.ones((1, G)))
        starts = list(range(0, B, chunk))

        def run(a):
            W = np.stack([_counts_for(r, seed, G, resamples) for r in range(a, min(a + chunk, B))])
            c, dg, ok = solver.solve(W)
            ok &= (dg >= LOST_RTOL * d_full).all(axis=1)
            c[~ok] = np.nan
            return a, c

        workers = max(1, int(threads or 1))
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                results = list(ex.map(run, starts))
        else:
            results = [run(a) for a in starts]
        for a, c in results:
            coefs[a:a + len(c)] = c
    else:
        for r in range(B):
            try:
                v = _refit_one(frame, spec, fit, cl, _counts_for(r, seed, G, resamples))
            except EstimationError:
                v = None
            if v is not None:
                coefs[r] = v

    good = np.isfinite(coefs).all(axis=1)
    coefs = coefs[good]
    draws = {c: coefs[:, idx].sum(axis=1) if idx else np.zeros(len(coefs)) for c, idx in mapping.items()}
    design = spec.design
    support = dict(design.cell_support) if design.cell_support else {}
    return BootstrapRun(B, seed, cells, draws, int((~good).sum()), point, support,
                        "weighted" if use_weighted else "refit")


# --------------------------------------------------------------------------
# star grid
# --------------------------------------------------------------------------

@dataclass(eq=False)
class SurfaceGrid:
    frame: pd.DataFrame
    reference: tuple
    metadata: dict = field(default_factory=dict)

    def cell(self, t, p):
        f = self.frame
        return f.loc[(f["t_bin"] == t) & (f["p_bin"] == p)].iloc[0]

    @property
    def cells(self):
        return {(int(r.t_bin), int(r.p_bin)): r for r in self.frame.itertuples(index=False)}

    def to_csv(self, path):
        self.frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")

    def render(self):
        """Text grid: temperature rows (hot on top), precipitation columns,
        median percent effect with * where the interval excludes zero."""
        tspec, pspec = surface_specs()
        tl, pl = tspec.labels(), pspec.labels()
        w = max(len(s) for s in pl) + 1
        head = " " * 10 + "".join(s.rjust(w) for s in pl)
        lines = [head]
        for t in reversed(range(tspec.n_bins)):
            row = tl[t].rjust(10)
            for p in range(pspec.n_bins):
                r = self.cell(t, p)
                txt = "ref" if (t, p) == self.reference else f"{r['median_pct']:.2f}{'*' if r['starred'] else ' '}"
                row += txt.rjust(w)
            lines.append(row)
        lines.append("")
        lines.append("* 0.5-99.5 percentile bootstrap interval excludes 0")
        return "\n".join(lines) + "\n"


def star_grid(run, level=0.99, min_replicates=100):
    """Median and percentile interval per cell from bootstrap draws.

    Quantiles use linear interpolation between order statistics
    (``numpy.quantile(method="linear")``). A cell is starred when
    [lo, hi] excludes zero; the reference cell is fixed at 0 and never
    starred.
    """
    if run.successes < min_replicates:
        raise InsufficientReplicates(f"{run.successes} successful replicates (< {min_replicates})")
    tspec, pspec = surface_specs()
    ref = (tspec.reference_bin, pspec.reference_bin)
    a = (1.0 - level) / 2.0
    tl, pl = tspec.labels(), pspec.labels()
    rows = []
    for (t, p) in sorted(run.cells):
        d = run.cell_draws[(t, p)]
        if (t, p) == ref:
            med = lo = hi = 0.0
            star = False
        else:
            lo, med, hi = np.quantile(d, [a, 0.5, 1.0 - a], method=QUANTILE_METHOD)
            star = bool(lo > 0 or hi < 0)
        rows.append((t, p, float(pct_effect(med)), float(pct_effect(lo)), float(pct_effect(hi)), star,
                     int(run.support.get((t, p), 0)), tl[t], pl[p]))
    df = pd.DataFrame(rows, columns=["t_bin", "p_bin", "median_pct", "lo_pct", "hi_pct", "starred", "support",
                                     "t_label", "p_label"])
    meta = {"replicates": run.B, "failures": run.failures, "seed": run.seed, "interval": f"{a:g}-{1 - a:g}",
            "quantile_method": QUANTILE_METHOD, "bootstrap": f"pairs over cities ({run.method})"}
    return SurfaceGrid(df, ref, meta)
