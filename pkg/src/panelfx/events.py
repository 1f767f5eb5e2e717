"""Fixed-effect residualization, standard-deviation comparisons and event effects.

``residualize`` strips the day and city-month fixed effects from the log
outcome and measures what variation is left. Named events (a festival in one
city on listed dates) enter the weather model as indicator columns so their
percent effects can be set beside the weather effects.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import CollinearEvent, EventOutOfRange, InvalidConfig, MissingColumn, ZeroSd
from .fe import ModelSpec, absorb, fit_model
from .inference import cluster_vcv, effect_table, iid_vcv, linear_combination, pct_effect
from .panel import PanelFrame

RESID_TOL = 1e-11


@dataclass(frozen=True)
class EventSpec:
    name: str
    city: str
    dates: tuple

    def check(self, frame):
        if frame.city_col is None or frame.date_col is None:
            raise MissingColumn("city/date")
        cities = set(map(str, frame.levels[frame.city_col]))
        if str(self.city) not in cities:
            raise EventOutOfRange(f"event {self.name!r}: city {self.city!r} not in panel")
        days = frame.data[frame.date_col].astype(str)
        lo, hi = days.min(), days.max()
        for d in self.dates:
            if not lo <= str(d) <= hi:
                raise EventOutOfRange(f"event {self.name!r}: date {d} outside panel span {lo}..{hi}")

    def indicator(self, frame):
        city = frame.data[frame.city_col].astype(str).to_numpy()
        day = frame.data[frame.date_col].astype(str).to_numpy()
        return ((city == str(self.city)) & np.isin(day, [str(d) for d in self.dates])).astype(np.float64)


@dataclass(eq=False)
class ResidualSeries:
    values: np.ndarray
    sd: float
    fe_dims: tuple = ()
    sweeps: int = 0

    @property
    def sd_pct(self):
        # log points ~ percent at these magnitudes; reported as 100 x sd
        return 100.0 * self.sd


def residualize(frame, fe_dims=None, outcome="outcome", tol=RESID_TOL, max_iter=10_000):
    """Residuals of the outcome on fixed effects alone (no covariates).

    The standard deviation is taken over all rows with ``ddof=0``.
    """
    fe_dims = tuple(fe_dims or frame.fe_dims)
    y = frame.column(outcome).astype(np.float64)
    e, sweeps = absorb(y, frame.dim_codes(fe_dims), tol, max_iter, frame.dim_counts(fe_dims))
    return ResidualSeries(e, float(np.std(e)), fe_dims, sweeps)


def sd_multiple(effect_pct, residual_sd_pct):
    """How many residual standard deviations an effect amounts to."""
    if not residual_sd_pct > 0:
        raise ZeroSd(f"residual sd must be positive, got {residual_sd_pct!r}")
    return effect_pct / residual_sd_pct


def describe_sd_multiple(m):
    """Text such as ``≈ 4.9 (≈ 5 standard deviations)``."""
    whole = int(np.floor(abs(m) + 0.5)) * (1 if m >= 0 else -1)
    unit = "standard deviation" if abs(whole) == 1 else "standard deviations"
    return f"≈ {m:.1f} (≈ {whole} {unit})"


# --------------------------------------------------------------------------
# events
# --------------------------------------------------------------------------

def event_columns(frame, events):
    out = []
    for ev in events:
        ev.check(frame)
        out.append((ev.name, ev.indicator(frame)))
    return out


@dataclass(eq=False)
class EventFit:
    fit: object
    vcv: object
    table: object
    events: list
    event_rows: dict = field(default_factory=dict)

    def comparison(self, level=0.99, extra=None):
        """Comparison rows (label, pct_effect, lo, hi) for the events and any
        ``extra`` {label: {term: weight}} weather combinations."""
        from scipy import stats

        z = stats.norm.ppf(0.5 + level / 2.0)
        rows = []
        combos = [(ev.name, {ev.name: 1.0}) for ev in self.events] + list((extra or {}).items())
        for label, w in combos:
            est, se = linear_combination(self.fit, self.vcv, w)
            rows.append((label, float(pct_effect(est)), float(pct_effect(est - z * se)),
                         float(pct_effect(est + z * se))))
        return pd.DataFrame(rows, columns=["label", "pct_effect", "lo", "hi"])


def fit_with_events(frame, spec, events, vcv="iid", level=0.95):
    """Weather model with one indicator per event, estimated jointly.

    Parameters
    ----------
    vcv : {"iid", "cluster"}
        ``iid`` uses sigma^2 (X'X)^-1. ``cluster`` uses the multiway
        city x day sandwich, which is degenerate for an indicator confined
        to one city (its city-cluster score sums to ~0).
    """
    if vcv not in ("iid", "cluster"):
        raise InvalidConfig(f"unknown event vcv {vcv!r}")
    cols = event_columns(frame, events)
    rows = {}
    for name, x in cols:
        rows[name] = int(x.sum())
        if rows[name] == 0:
            raise CollinearEvent(name)
    full = ModelSpec(spec.design, spec.fe_dims, spec.cluster_dims, spec.outcome, spec.tol, spec.max_iter,
                     tuple(spec.extra) + tuple(cols))
    fit = fit_model(frame, full)
    for name, _ in cols:
        if name not in fit.coef:
            raise CollinearEvent(name)
    if vcv == "iid":
        V = iid_vcv(fit)
    else:
        clusters = {d: frame.codes[d] for d in (spec.cluster_dims or frame.cluster_dims)}
        V = cluster_vcv(fit, clusters=clusters)
    table = effect_table(fit, V, level=level, transform=frame.transform or "log")
    table.metadata["event_vcv"] = vcv
    return EventFit(fit, V, table, list(events), rows)


def pool_platforms(frames, nested=("city_month_id",)):
    """Stack per-platform panels into one frame.

    Nested FE labels (``nested``) are prefixed with the platform so the
    city-month effects become city-platform-month effects; day labels stay
    shared. A ``platform`` column is added.
    """
    parts = []
    first = None
    for platform, fr in frames.items():
        first = first or fr
        df = fr.data.copy()
        for d in nested:
            if d in df.columns:
                df[d] = platform + ":" + df[d].astype(str)
        df["platform"] = platform
        parts.append(df)
    df = pd.concat(parts, ignore_index=True)
    return PanelFrame.from_dataframe(df, first.fe_dims, first.cluster_dims, first.city_col, first.date_col,
                                     first.user_col, "platform", first.transform, {"pooled": list(frames)})


def read_events(path):
    """Events from a CSV with columns name, city_id, date (one row per date)."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    for c in ("name", "city_id", "date"):
        if c not in df.columns:
            raise MissingColumn(c)
    out = []
    for name, g in df.groupby("name", sort=False):
        cities = g["city_id"].unique()
        if len(cities) != 1:
            raise InvalidConfig(f"event {name!r} spans several cities")
        out.append(EventSpec(name, cities[0], tuple(g["date"])))
    return out


def write_events(path, events):
    rows = [(e.name, e.city, d) for e in events for d in e.dates]
    pd.DataFrame(rows, columns=["name", "city_id", "date"]).to_csv(Path(path), index=False, lineterminator="\n")
