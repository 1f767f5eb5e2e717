"""Columnar panel frame, CSV ingestion and validation."""

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .config import MAIN, read_kv, split_list
from .errors import AllRowsDropped, EmptyFile, InvalidConfig, MissingColumn, ParseError, ValidationError

NUMERIC_ROLES = ("outcome_raw", "outcome", "tmax", "precip", "trange", "cloud", "humidity", "weight")
LABEL_ROLES = ("city", "date", "user", "platform", "fe", "cluster")
COVARIATES = ("tmax", "precip", "trange", "cloud", "humidity")


def _factorize(values):
    codes, uniques = pd.factorize(pd.Series(values, copy=False), sort=False, use_na_sentinel=True)
    return codes.astype(np.int64), np.asarray(uniques, dtype=object)


@dataclass(frozen=True, eq=False)
class PanelFrame:
    """Entity-time table with dense integer codes for every categorical column.

    ``data`` holds the numeric role columns under their canonical names
    (``outcome_raw``, ``tmax``, ...) and the categorical columns under their
    original names. ``codes[name]`` maps each categorical column to 0..K-1
    (missing labels are coded -1 until :func:`validate` removes them).
    """

    data: pd.DataFrame
    fe_dims: tuple = ()
    cluster_dims: tuple = ()
    city_col: str = None
    date_col: str = None
    user_col: str = None
    platform_col: str = None
    transform: str = None
    codes: dict = field(default_factory=dict)
    levels: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_dataframe(cls, df, fe_dims=(), cluster_dims=(), city=None, date=None, user=None,
                       platform=None, transform=None, meta=None):
        df = df.reset_index(drop=True)
        label_cols = [c for c in dict.fromkeys([*fe_dims, *cluster_dims, city, date, user, platform]) if c]
        for c in label_cols:
            if c not in df.columns:
                raise MissingColumn(c)
        codes, levels = {}, {}
        for c in label_cols:
            codes[c], levels[c] = _factorize(df[c].to_numpy())
        return cls(df, tuple(fe_dims), tuple(cluster_dims), city, date, user, platform, transform,
                   codes, levels, dict(meta or {}))

    @property
    def n(self):
        return len(self.data)

    def __len__(self):
        return len(self.data)

    def has(self, name):
        return name in self.data.columns

    def column(self, name):
        if name not in self.data.columns:
            raise MissingColumn(name)
        return self.data[name].to_numpy()

    def n_levels(self, dim):
        return len(self.levels[dim])

    def dim_codes(self, dims):
        return [self.codes[d] for d in dims]

    def dim_counts(self, dims):
        return [np.bincount(self.codes[d], minlength=self.n_levels(d)) for d in dims]

    def take(self, rows):
        """Row subset with every categorical column re-coded densely."""
        rows = np.asarray(rows)
        sub = self.data.iloc[rows].reset_index(drop=True)
        return PanelFrame.from_dataframe(
            sub, self.fe_dims, self.cluster_dims, self.city_col, self.date_col, self.user_col,
            self.platform_col, self.transform, self.meta,
        )

    def with_columns(self, **cols):
        df = self.data.copy()
        for k, v in cols.items():
            df[k] = v
        return replace(self, data=df)

    def with_dims(self, fe_dims=None, cluster_dims=None):
        return PanelFrame.from_dataframe(
            self.data,
            self.fe_dims if fe_dims is None else fe_dims,
            self.cluster_dims if cluster_dims is None else cluster_dims,
            self.city_col, self.date_col, self.user_col, self.platform_col, self.transform, self.meta,
        )


@dataclass
class ValidationReport:
    n_input: int
    n_kept: int
    dropped_zero_outcome: int = 0
    dropped_missing: int = 0
    fe_level_counts: dict = field(default_factory=dict)
    singleton_fe_levels: dict = field(default_factory=dict)
    transform: str = "log"

    def lines(self):
        out = [
            f"rows_in = {self.n_input}",
            f"rows_kept = {self.n_kept}",
            f"dropped_zero_outcome = {self.dropped_zero_outcome}",
            f"dropped_missing = {self.dropped_missing}",
            f"outcome_transform = {self.transform}",
        ]
        for d, k in self.fe_level_counts.items():
            out.append(f"fe_levels.{d} = {k}")
        for d, k in self.singleton_fe_levels.items():
            out.append(f"fe_singletons.{d} = {k}")
        return out


# --------------------------------------------------------------------------
# schema + CSV
# --------------------------------------------------------------------------

def parse_schema(schema):
    """Normalize a schema to ``{column: [roles]}``.

    Accepts a mapping or a path to a key-value file (a ``[schema]`` section,
    or headerless ``column = role`` lines).
    """
    if isinstance(schema, (str, Path)):
        sections = read_kv(schema)
        schema = sections.get("schema", sections.get(MAIN, {}))
    out = {}
    for col, roles in schema.items():
        roles = split_list(roles) if isinstance(roles, str) else list(roles)
        for r in roles:
            if r not in NUMERIC_ROLES and r not in LABEL_ROLES:
                raise InvalidConfig(f"unknown role {r!r} for column {col!r}")
        out[col] = roles
    if not any(r in ("outcome_raw", "outcome") for rs in out.values() for r in rs):
        raise MissingColumn("outcome_raw")
    return out


def load_panel(path, schema):
    """Read a UTF-8 CSV panel according to ``schema`` (column -> role(s))."""
    schema = parse_schema(schema)
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise EmptyFile(f"{path} is empty")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    if len(raw) == 0:
        raise EmptyFile(f"{path} has a header but no rows")
    for col in schema:
        if col not in raw.columns:
            raise MissingColumn(col)

    data = {}
    fe, cl = [], []
    single = {}
    for col, roles in schema.items():
        for role in roles:
            if role in NUMERIC_ROLES:
                s = raw[col].str.strip()
                blank = s == ""
                try:
                    # python float parsing: exact round trip of %.17g output
                    vals = s.where(~blank, "nan").astype(np.float64).to_numpy()
                except ValueError:
                    coerced = pd.to_numeric(s.where(~blank, None), errors="coerce")
                    bad = coerced.isna().to_numpy() & ~blank.to_numpy()
                    i = int(np.flatnonzero(bad)[0])
                    raise ParseError(i + 1, col, raw[col].iloc[i]) from None
                data[role] = vals
            else:
                s = raw[col].where(raw[col].str.strip() != "", None)
                data[col] = s.to_numpy(dtype=object)
                if role == "fe":
                    fe.append(col)
                elif role == "cluster":
                    cl.append(col)
                else:
                    single[role] = col
    df = pd.DataFrame(data)
    return PanelFrame.from_dataframe(
        df, fe, cl, city=single.get("city"), date=single.get("date"), user=single.get("user"),
        platform=single.get("platform"), meta={"source": str(path)},
    )


def write_panel_csv(frame, path, columns=None):
    df = frame.data if columns is None else frame.data[list(columns)]
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

def validate(frame, transform="log", required=None):
    """Drop unusable rows and populate the model outcome.

    Rows with a missing value in any role column (or in ``required``) are
    dropped first; of the remainder, rows whose raw count is zero are dropped
    under the log transform. ``transform="level"`` keeps zeros and models the
    raw value directly.

    Returns
    -------
    (ValidationReport, PanelFrame)
    """
    if transform not in ("log", "level"):
        raise ValidationError(f"unknown outcome transform {transform!r}")
    df = frame.data
    n0 = len(df)
    src = "outcome_raw" if "outcome_raw" in df.columns else "outcome"
    if src not in df.columns:
        raise MissingColumn("outcome_raw")
    numeric = [c for c in NUMERIC_ROLES if c in df.columns and (c != "outcome" or c == src)]
    if required:
        for c in required:
            if c not in df.columns:
                raise MissingColumn(c)
        numeric += [c for c in required if c not in numeric and c not in frame.codes]
    ok = np.ones(n0, dtype=bool)
    for c in numeric:
        ok &= np.isfinite(df[c].to_numpy(dtype=np.float64))
    for c, codes in frame.codes.items():
        ok &= codes >= 0
    n_missing = int((~ok).sum())

    y = df[src].to_numpy(dtype=np.float64)
    if transform == "log" and src == "outcome_raw":
        neg = ok & (y < 0)
        if neg.any():
            i = int(np.flatnonzero(neg)[0])
            raise ValidationError(f"negative outcome_raw at data row {i + 1}")
        zero = ok & (y == 0)
    else:
        zero = np.zeros(n0, dtype=bool)
    keep = ok & ~zero
    if not keep.any():
        raise AllRowsDropped(f"no rows survive validation (of {n0})")

    rows = np.flatnonzero(keep)
    clean = frame if keep.all() else frame.take(rows)
    yk = clean.data[src].to_numpy(dtype=np.float64)
    if transform == "log" and src == "outcome_raw":
        out = np.log(yk)
    else:
        out = yk.copy()
    clean = clean.with_columns(outcome=out)
    clean = replace(clean, transform=transform)

    report = ValidationReport(n0, len(rows), int(zero.sum()), n_missing, transform=transform)
    for d in clean.fe_dims:
        cnt = np.bincount(clean.codes[d], minlength=clean.n_levels(d))
        report.fe_level_counts[d] = int(len(cnt))
        report.singleton_fe_levels[d] = int((cnt == 1).sum())
    return report, clean
