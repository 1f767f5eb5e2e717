"""Indicator-bin designs for continuous weather covariates.

A :class:`BinSpec` partitions the real line into bins; :func:`expand_design`
turns a frame column into one 0/1 column per non-reference bin, and
:func:`interact` builds the saturated temperature x precipitation surface.
"""

from dataclasses import dataclass, field

import numpy as np

from .config import split_list, to_bool
from .errors import InsufficientSupport, InvalidConfig, NonFinite, UnknownVariable, ValidationError

MINUS = "−"
DEFAULT_MIN_SUPPORT = 50


def _num(x):
    s = f"{x:g}"
    return s.replace("-", MINUS)


def _anum(x):
    return f"{x:g}"


@dataclass(frozen=True)
class BinSpec:
    """Bin layout for one covariate.

    Bins, in index order: the exact-zero bin (if ``zero_bin``), the open low
    bin (if ``open_low``), the intervals between consecutive ``edges``, and
    the open high bin (if ``open_high``). Intervals are ``[a, b)`` when
    ``closed == "left"`` and ``(a, b]`` when ``closed == "right"``. Without an
    open end, values beyond the outermost edge fall into the outermost
    interval, so assignment is total.
    """

    variable: str
    edges: tuple
    open_low: bool = True
    open_high: bool = True
    reference_bin: int = 0
    zero_bin: bool = False
    closed: str = "left"
    unit: str = ""

    def __post_init__(self):
        e = tuple(float(x) for x in self.edges)
        object.__setattr__(self, "edges", e)
        if len(e) < 1 or (len(e) < 2 and not (self.open_low or self.open_high)):
            raise InvalidConfig(f"{self.variable}: need more edges")
        if any(b <= a for a, b in zip(e, e[1:])):
            raise InvalidConfig(f"{self.variable}: edges must be strictly increasing")
        if self.zero_bin and e[0] <= 0:
            raise InvalidConfig(f"{self.variable}: with a zero bin, edges must begin above 0")
        if self.closed not in ("left", "right"):
            raise InvalidConfig(f"{self.variable}: closed must be 'left' or 'right'")
        if not 0 <= self.reference_bin < self.n_bins:
            raise InvalidConfig(f"{self.variable}: reference bin {self.reference_bin} out of range")

    @property
    def n_bins(self):
        return int(self.zero_bin) + int(self.open_low) + len(self.edges) - 1 + int(self.open_high)

    def _layout(self):
        """List of (kind, lo, hi) for each bin."""
        e = self.edges
        out = []
        if self.zero_bin:
            out.append(("zero", 0.0, 0.0))
        if self.open_low:
            out.append(("low", 0.0 if self.zero_bin else -np.inf, e[0]))
        out += [("mid", a, b) for a, b in zip(e, e[1:])]
        if self.open_high:
            out.append(("high", e[-1], np.inf))
        return out

    def labels(self):
        u = self.unit
        right = self.closed == "right"
        out = []
        for kind, a, b in self._layout():
            if kind == "zero":
                out.append(f"0{u}")
            elif kind == "low" and not self.zero_bin:
                out.append(f"< {_num(b)}{u}" if not right else f"≤ {_num(b)}{u}")
            elif kind == "high":
                out.append(f"≥ {_num(a)}{u}" if not right else f"> {_num(a)} {u}".rstrip())
            elif right:
                out.append(f"({_num(a)},{_num(b)}] {u}".rstrip())
            else:
                out.append(f"{_num(a)}–{_num(b)}{u}")
        return out

    def column_names(self):
        v = self.variable
        right = self.closed == "right"
        out = []
        for kind, a, b in self._layout():
            if kind == "zero":
                out.append(f"{v}=0")
            elif kind == "low" and not self.zero_bin:
                out.append(f"{v}<{_anum(b)}" if not right else f"{v}<={_anum(b)}")
            elif kind == "high":
                out.append(f"{v}>={_anum(a)}" if not right else f"{v}>{_anum(a)}")
            elif right:
                out.append(f"{v}({_anum(a)},{_anum(b)}]")
            elif kind == "low":
                out.append(f"{v}(0,{_anum(b)})")
            else:
                out.append(f"{v}[{_anum(a)},{_anum(b)})")
        return out

    @property
    def reference_label(self):
        return self.labels()[self.reference_bin]

    def assign(self, values):
        """Vectorized bin index for an array of values."""
        v = np.asarray(values, dtype=np.float64)
        if not np.isfinite(v).all():
            bad = v[~np.isfinite(v)].ravel()[0]
            raise NonFinite(float(bad))
        if self.zero_bin and (v < 0).any():
            raise ValidationError(f"{self.variable}: negative value {v[v < 0].ravel()[0]!r}")
        e = np.asarray(self.edges)
        m = len(e)
        side = "left" if self.closed == "right" else "right"
        pos = np.searchsorted(e, v, side=side)
        base = int(self.zero_bin)
        first_mid = base + int(self.open_low)
        idx = first_mid + pos - 1
        low = pos == 0
        high = pos == m
        if self.open_low:
            idx = np.where(low, base, idx)
        else:
            idx = np.where(low, first_mid, idx)
        if self.open_high:
            idx = np.where(high, first_mid + m - 1, idx)
        else:
            idx = np.where(high, first_mid + m - 2, idx)
        if self.zero_bin:
            idx = np.where(v == 0, 0, idx)
        return idx.astype(np.int64)


def assign_bin(value, spec):
    return int(spec.assign(np.array([value]))[0])


def _tmax(edges, ref_lo):
    e = tuple(edges)
    spec = BinSpec("tmax", e, True, True, 0, False, "left", "°C")
    return BinSpec("tmax", e, True, True, spec.labels().index(f"{_num(ref_lo)}–{_num(ref_lo + 5)}°C"),
                   False, "left", "°C")


def default_paper_specs():
    """Marginal-model bins: 5 degree temperature bins, 1 cm precipitation bins,
    20 point cloud/humidity bins, with the published reference categories."""
    specs = {
        "tmax": _tmax(range(0, 45, 5), 15),
        "trange": BinSpec("trange", (0, 5, 10, 15, 20), False, True, 0, False, "left", "°C"),
        "precip": BinSpec("precip", (1, 2, 3, 4, 5), True, True, 0, True, "left", "cm"),
        "cloud": BinSpec("cloud", (0, 20, 40, 60, 80, 100), False, False, 0, False, "left", "%"),
        "humidity": BinSpec("humidity", (0, 20, 40, 60, 80, 100), False, False, 2, False, "left", "%"),
    }
    return specs


def surface_specs():
    """Coarse bins for the interaction surface: temperature below -5 through
    35 and above in 5 degree steps; precipitation zero, half-centimetre
    steps to 2 cm, and above."""
    t = _tmax(range(-5, 40, 5), 15)
    p = BinSpec("precip", (0.5, 1.0, 1.5, 2.0), True, True, 0, True, "right", "cm")
    return t, p


def control_specs():
    s = default_paper_specs()
    return {k: s[k] for k in ("trange", "cloud", "humidity")}


# --------------------------------------------------------------------------
# designs
# --------------------------------------------------------------------------

@dataclass(eq=False)
class BinnedDesign:
    columns: np.ndarray
    names: list
    labels: list
    support: np.ndarray
    specs: dict = field(default_factory=dict)
    bins: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)
    cells: dict = field(default_factory=dict)
    cell_support: dict = field(default_factory=dict)
    flagged: list = field(default_factory=list)

    @property
    def n_rows(self):
        return self.columns.shape[0]

    @property
    def n_cols(self):
        return self.columns.shape[1]

    def col(self, name):
        return self.columns[:, self.names.index(name)]

    def take(self, rows):
        rows = np.asarray(rows)
        return BinnedDesign(
            self.columns[rows], list(self.names), list(self.labels),
            self.columns[rows].sum(axis=0).astype(np.int64), dict(self.specs),
            {k: v[rows] for k, v in self.bins.items()}, dict(self.groups), dict(self.cells),
            dict(self.cell_support), list(self.flagged),
        )

    def to_csv(self, path):
        import pandas as pd

        pd.DataFrame(self.columns.astype(np.int8), columns=self.names).to_csv(
            path, index=False, lineterminator="\n")


def from_columns(names, columns, labels=None):
    """Wrap arbitrary extra regressors (e.g. event indicators) as a design."""
    X = np.column_stack([np.asarray(c, dtype=np.float64) for c in columns]) if columns else np.zeros((0, 0))
    return BinnedDesign(X, list(names), list(labels or names), np.count_nonzero(X, axis=0).astype(np.int64),
                        groups={"extra": list(range(len(names)))})


def expand_design(frame, specs):
    """One indicator column per non-reference bin of every spec variable."""
    cols, names, labels, groups, bins = [], [], [], {}, {}
    for var, spec in specs.items():
        if not frame.has(spec.variable):
            raise UnknownVariable(spec.variable)
        idx = spec.assign(frame.column(spec.variable))
        bins[var] = idx
        cn, lb = spec.column_names(), spec.labels()
        groups[var] = []
        for b in range(spec.n_bins):
            if b == spec.reference_bin:
                continue
            groups[var].append(len(names))
            cols.append(idx == b)
            names.append(cn[b])
            labels.append(lb[b])
    n = frame.n
    X = np.column_stack(cols).astype(np.float64) if cols else np.zeros((n, 0))
    return BinnedDesign(X, names, labels, X.sum(axis=0).astype(np.int64), dict(specs), bins, groups)


def interact(tmax_design, precip_design, min_support=DEFAULT_MIN_SUPPORT, strict=False):
    """Saturated temperature x precipitation design.

    Both inputs must be single-spec designs built on the coarse surface bins.
    The result holds the two sets of marginal columns followed by one product
    column for every pair of non-reference bins. ``cells`` maps every
    ``(t_bin, p_bin)`` to the column indices whose coefficients sum to that
    cell's simple effect. Cells with fewer than ``min_support`` rows are
    listed in ``flagged`` (or raise when ``strict``).
    """
    (tv, ts), = tmax_design.specs.items()
    (pv, ps), = precip_design.specs.items()
    tb, pb = tmax_design.bins[tv], precip_design.bins[pv]
    tnames, tlabels = ts.column_names(), ts.labels()
    pnames, plabels = ps.column_names(), ps.labels()

    cols = [tmax_design.columns, precip_design.columns]
    names = list(tmax_design.names) + list(precip_design.names)
    labels = list(tmax_design.labels) + list(precip_design.labels)
    groups = {tv: list(range(tmax_design.n_cols)),
              pv: list(range(tmax_design.n_cols, tmax_design.n_cols + precip_design.n_cols))}
    tcol = {b: i for i, b in enumerate(x for x in range(ts.n_bins) if x != ts.reference_bin)}
    pcol = {b: tmax_design.n_cols + i for i, b in enumerate(x for x in range(ps.n_bins) if x != ps.reference_bin)}

    inter, groups["interaction"] = [], []
    cells, cell_support = {}, {}
    flat = tb * ps.n_bins + pb
    occ = np.bincount(flat, minlength=ts.n_bins * ps.n_bins).reshape(ts.n_bins, ps.n_bins)
    for t in range(ts.n_bins):
        for p in range(ps.n_bins):
            members = []
            if t != ts.reference_bin:
                members.append(tcol[t])
            if p != ps.reference_bin:
                members.append(pcol[p])
            if t != ts.reference_bin and p != ps.reference_bin:
                j = len(names)
                inter.append(flat == t * ps.n_bins + p)
                names.append(f"{tnames[t]}*{pnames[p]}")
                labels.append(f"{tlabels[t]} × {plabels[p]}")
                groups["interaction"].append(j)
                members.append(j)
            cells[(t, p)] = members
            cell_support[(t, p)] = int(occ[t, p])
    n = tmax_design.n_rows
    if inter:
        cols.append(np.column_stack(inter).astype(np.float64))
    X = np.hstack(cols) if cols else np.zeros((n, 0))
    flagged = [c for c, s in cell_support.items() if s < min_support and c != (ts.reference_bin, ps.reference_bin)]
    if strict and flagged:
        c = flagged[0]
        raise InsufficientSupport(cell_label(ts, ps, c), cell_support[c], min_support)
    return BinnedDesign(X, names, labels, X.sum(axis=0).astype(np.int64), {tv: ts, pv: ps},
                        {tv: tb, pv: pb}, groups, cells, cell_support, flagged)


def cell_label(tspec, pspec, cell):
    t, p = cell
    return f"{tspec.labels()[t]} × {pspec.labels()[p]}"


def combine(*designs):
    """Column-concatenate designs; later designs' groups are offset."""
    designs = [d for d in designs if d is not None]
    X = np.hstack([d.columns for d in designs])
    names, labels, groups, specs, bins = [], [], {}, {}, {}
    cells, cell_support, flagged = {}, {}, []
    off = 0
    for d in designs:
        names += d.names
        labels += d.labels
        for g, idx in d.groups.items():
            groups.setdefault(g, []).extend(i + off for i in idx)
        for c, idx in d.cells.items():
            cells[c] = [i + off for i in idx]
        cell_support.update(d.cell_support)
        flagged += d.flagged
        specs.update(d.specs)
        bins.update(d.bins)
        off += d.n_cols
    if len(set(names)) != len(names):
        raise InvalidConfig("duplicate design column names")
    return BinnedDesign(X, names, labels, X.sum(axis=0).astype(np.int64), specs, bins, groups,
                        cells, cell_support, flagged)


def marginal_design(frame, specs=None):
    """Additive design over every default covariate: temperature, precipitation, controls."""
    return expand_design(frame, specs or default_paper_specs())


def surface_design(frame, min_support=DEFAULT_MIN_SUPPORT, controls=True, strict=False):
    """Saturated coarse surface plus main-effect controls."""
    ts, ps = surface_specs()
    surf = interact(expand_design(frame, {"tmax": ts}), expand_design(frame, {"precip": ps}),
                    min_support=min_support, strict=strict)
    if not controls:
        return surf
    return combine(surf, expand_design(frame, control_specs()))


# --------------------------------------------------------------------------
# key-value serialization
# --------------------------------------------------------------------------

def spec_to_kv(spec):
    return {
        "variable": spec.variable,
        "edges": ", ".join(_anum(e) for e in spec.edges),
        "open_low": str(spec.open_low).lower(),
        "open_high": str(spec.open_high).lower(),
        "reference_bin": str(spec.reference_bin),
        "zero_bin": str(spec.zero_bin).lower(),
        "closed": spec.closed,
        "unit": spec.unit,
    }


def spec_from_kv(body):
    try:
        return BinSpec(
            body["variable"],
            tuple(float(x) for x in split_list(body["edges"])),
            to_bool(body.get("open_low", "true")),
            to_bool(body.get("open_high", "true")),
            int(body.get("reference_bin", 0)),
            to_bool(body.get("zero_bin", "false")),
            body.get("closed", "left"),
            body.get("unit", ""),
        )
    except KeyError as exc:
        raise InvalidConfig(f"bin spec missing key {exc}") from exc


def specs_to_sections(specs, prefix="bins"):
    return {f"{prefix}.{name}": spec_to_kv(s) for name, s in specs.items()}


def specs_from_sections(sections, prefix="bins"):
    out = {}
    for name, body in sections.items():
        if name.startswith(prefix + "."):
            out[name[len(prefix) + 1:]] = spec_from_kv(body)
    return out
