"""Synthetic panels with planted fixed-effect structure and weather effects.

Log activity is generated additively::

    ln Y = base + city-month effect + day effect
           + marginal bin effects + surface cell effect + event effects + noise

and counts are ``round(exp(ln Y))`` unless ``count_mode`` says otherwise.
Every planted quantity is also returned by :func:`truth` so estimates can
be compared against the values that generated them.
"""

from dataclasses import asdict, dataclass, field, replace
from datetime import date, timedelta

import numpy as np
import pandas as pd

from .binning import default_paper_specs, surface_specs
from .config import MAIN, read_kv, split_list
from .errors import InvalidConfig
from .inference import pct_effect
from .panel import PanelFrame, validate

NAMED_CITIES = ("new_york", "new_orleans", "boston")

SCHEMA = {
    "posts": "outcome_raw",
    "tmax": "tmax",
    "precip": "precip",
    "trange": "trange",
    "cloud": "cloud",
    "humidity": "humidity",
    "city_id": "city, cluster",
    "date": "date",
    "day_id": "fe, cluster",
    "city_month_id": "fe",
}


@dataclass
class WeatherProcess:
    """Per-city climate: seasonal mean + AR(1) anomaly for temperature,
    Bernoulli occurrence x exponential intensity for precipitation."""

    tmax_mean_low: float = 0.0
    tmax_mean_high: float = 32.0
    amplitude_low: float = 8.0
    amplitude_high: float = 16.0
    anomaly_rho: float = 0.4
    anomaly_sd: float = 6.5
    wet_prob_low: float = 0.30
    wet_prob_high: float = 0.50
    intensity_low: float = 1.3
    intensity_high: float = 2.0


@dataclass
class EventPlant:
    name: str
    city: str
    dates: tuple
    effect: float


@dataclass
class SynthConfig:
    n_cities: int = 100
    n_days: int = 1000
    seed: int = 0
    start_date: str = "2009-01-01"
    platform: str = ""
    base_log_mean: float = float(np.log(2000.0))
    base_log_sd: float = 0.6
    fe_sd_city_month: float = 0.05
    fe_sd_day: float = 0.05
    noise_sd: float = 0.07
    noise_rho: float = 0.0
    count_mode: str = "round"
    zero_day_rate: float = 0.0
    missing_rate: float = 0.0
    planted_marginals: dict = field(default_factory=dict)
    planted_surface: dict = field(default_factory=dict)
    planted_events: list = field(default_factory=list)
    weather: WeatherProcess = field(default_factory=WeatherProcess)
    weather_text_rate: float = 0.04
    n_users: int = 0
    user_activity: float = 0.3
    user_base_log_mean: float = float(np.log(200.0))
    user_base_log_sd: float = 0.4

    def validate(self):
        if self.n_cities < 1 or self.n_days < 1:
            raise InvalidConfig("n_cities and n_days must be positive")
        for k in ("base_log_sd", "fe_sd_city_month", "fe_sd_day", "noise_sd", "user_base_log_sd"):
            if getattr(self, k) < 0:
                raise InvalidConfig(f"{k} must be non-negative")
        if not -1 < self.noise_rho < 1:
            raise InvalidConfig("noise_rho must lie in (-1, 1)")
        if self.count_mode not in ("round", "continuous", "poisson"):
            raise InvalidConfig(f"unknown count_mode {self.count_mode!r}")
        for k in ("zero_day_rate", "missing_rate", "weather_text_rate", "user_activity"):
            if not 0 <= getattr(self, k) <= 1:
                raise InvalidConfig(f"{k} must lie in [0, 1]")
        specs = default_paper_specs()
        valid_cols = {c for s in specs.values() for c in s.column_names()}
        refs = {s.column_names()[s.reference_bin] for s in specs.values()}
        for name, v in self.planted_marginals.items():
            if name not in valid_cols:
                raise InvalidConfig(f"unknown marginal bin {name!r}")
            if name in refs and v != 0:
                raise InvalidConfig(f"reference bin {name!r} must have zero effect")
        ts, ps = surface_specs()
        tn, pn = ts.column_names(), ps.column_names()
        for (t, p), v in self.planted_surface.items():
            if t not in tn or p not in pn:
                raise InvalidConfig(f"unknown surface cell {(t, p)!r}")
            if t == tn[ts.reference_bin] and p == pn[ps.reference_bin] and v != 0:
                raise InvalidConfig("the reference surface cell must have zero effect")
        return self


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------

def city_names(n):
    return [NAMED_CITIES[i] if i < len(NAMED_CITIES) else f"city_{i:03d}" for i in range(n)]


def _dates(start, n):
    d0 = date.fromisoformat(start)
    return [d0 + timedelta(days=i) for i in range(n)]


def _weather(cfg, rng_city, doy):
    w = cfg.weather
    T = len(doy)
    mu = rng_city.uniform(w.tmax_mean_low, w.tmax_mean_high)
    amp = rng_city.uniform(w.amplitude_low, w.amplitude_high)
    pwet = rng_city.uniform(w.wet_prob_low, w.wet_prob_high)
    inten = rng_city.uniform(w.intensity_low, w.intensity_high)
    shocks = rng_city.normal(0.0, w.anomaly_sd, T)
    anom = np.empty(T)
    anom[0] = shocks[0]
    s = np.sqrt(1.0 - w.anomaly_rho ** 2)
    for t in range(1, T):
        anom[t] = w.anomaly_rho * anom[t - 1] + s * shocks[t]
    tmax = mu + amp * np.cos(2 * np.pi * (doy - 200) / 365.25) + anom
    wet = rng_city.random(T) < pwet
    precip = np.where(wet, rng_city.exponential(inten, T), 0.0)
    trange = np.clip(rng_city.normal(12.0 - 3.0 * wet, 3.0), 0.0, None)
    cloud = np.clip(rng_city.normal(35.0 + 35.0 * wet, 18.0), 0.0, 100.0)
    humidity = np.clip(rng_city.normal(55.0 + 15.0 * wet, 15.0), 0.0, 100.0)
    return {"tmax": tmax, "precip": precip, "trange": trange, "cloud": cloud, "humidity": humidity}


def _planted_effect(cfg, cols):
    """Planted log-point effect per row from marginal bins and surface cells."""
    n = len(cols["tmax"])
    eff = np.zeros(n)
    if cfg.planted_marginals:
        for var, spec in default_paper_specs().items():
            names = spec.column_names()
            table = np.array([cfg.planted_marginals.get(c, 0.0) for c in names])
            if table.any():
                eff += table[spec.assign(cols[var])]
    if cfg.planted_surface:
        ts, ps = surface_specs()
        tn, pn = ts.column_names(), ps.column_names()
        grid = np.zeros((ts.n_bins, ps.n_bins))
        for (t, p), v in cfg.planted_surface.items():
            grid[tn.index(t), pn.index(p)] = v
        eff += grid[ts.assign(cols["tmax"]), ps.assign(cols["precip"])]
    return eff


def _ar1(rng, n, sd, rho):
    e = rng.normal(0.0, sd, n)
    if rho == 0 or n == 0:
        return e
    out = np.empty(n)
    out[0] = e[0]
    s = np.sqrt(1.0 - rho ** 2)
    for t in range(1, n):
        out[t] = rho * out[t - 1] + s * e[t]
    return out


def _counts(cfg, rng, log_y):
    if cfg.count_mode == "continuous":
        return np.exp(log_y)
    if cfg.count_mode == "poisson":
        return rng.poisson(np.exp(log_y)).astype(np.float64)
    return np.round(np.exp(log_y))


def _simulate(cfg):
    cfg.validate()
    root = np.random.SeedSequence(cfg.seed)
    fe_seq, noise_seq, city_seq, misc_seq = root.spawn(4)
    cities = city_names(cfg.n_cities)
    days = _dates(cfg.start_date, cfg.n_days)
    day_str = np.array([d.isoformat() for d in days], dtype=object)
    month_str = np.array([d.strftime("%Y-%m") for d in days], dtype=object)
    doy = np.array([d.timetuple().tm_yday for d in days], dtype=np.float64)
    months = list(dict.fromkeys(month_str))
    month_idx = np.array([months.index(m) for m in month_str])
    city_seqs = city_seq.spawn(cfg.n_cities)
    noise_seqs = noise_seq.spawn(cfg.n_cities)

    fe_rng = np.random.default_rng(fe_seq)
    base = fe_rng.normal(cfg.base_log_mean, cfg.base_log_sd, cfg.n_cities)
    cm = fe_rng.normal(0.0, cfg.fe_sd_city_month, (cfg.n_cities, len(months)))
    day_fe = fe_rng.normal(0.0, cfg.fe_sd_day, cfg.n_days) + 0.1 * np.sin(2 * np.pi * np.arange(cfg.n_days) / 7)

    T = cfg.n_days
    C = cfg.n_cities
    weather = [_weather(cfg, np.random.default_rng(s), doy) for s in city_seqs]
    cols = {k: np.concatenate([w[k] for w in weather]) for k in weather[0]}
    city_of_row = np.repeat(np.arange(C), T)
    day_of_row = np.tile(np.arange(T), C)
    prefix = f"{cfg.platform}:" if cfg.platform else ""

    effect = _planted_effect(cfg, cols)
    event_rows = {}
    event_eff = np.zeros(C * T)
    date_lookup = {d: i for i, d in enumerate(day_str)}
    for ev in cfg.planted_events:
        if ev.city not in cities:
            raise InvalidConfig(f"event {ev.name!r}: unknown city {ev.city!r}")
        ci = cities.index(ev.city)
        idx = [ci * T + date_lookup[d] for d in ev.dates if d in date_lookup]
        event_rows[ev.name] = len(idx)
        event_eff[idx] += ev.effect

    if cfg.n_users > 0:
        return _simulate_users(cfg, cities, day_str, month_str, month_idx, base, cm, day_fe, cols,
                               effect + event_eff, event_rows, misc_seq, noise_seq, prefix)

    noise = np.concatenate([
        _ar1(np.random.default_rng(s), T, cfg.noise_sd, cfg.noise_rho) for s in noise_seqs
    ])
    log_y = base[city_of_row] + cm[city_of_row, month_idx[day_of_row]] + day_fe[day_of_row] + effect + event_eff + noise
    misc = np.random.default_rng(misc_seq)
    y = _counts(cfg, misc, log_y)

    city_lab = np.array(cities, dtype=object)[city_of_row]
    df = pd.DataFrame({
        "city_id": city_lab,
        "date": day_str[day_of_row],
        "day_id": day_str[day_of_row],
        "city_month_id": prefix + city_lab + ":" + month_str[day_of_row],
        "posts": y,
        **cols,
    })
    if cfg.platform:
        df.insert(0, "platform", cfg.platform)
    zero_mask, missing_mask = _corrupt(cfg, misc, df)
    meta = {
        "planted_zero_days": int(zero_mask.sum()),
        "planted_missing_rows": int(missing_mask.sum()),
        "event_rows": event_rows,
        "planted_log_effect": effect + event_eff,
        "log_y": log_y,
    }
    return df, meta


def _simulate_users(cfg, cities, day_str, month_str, month_idx, base, cm, day_fe, cols, effect,
                    event_rows, misc_seq, noise_seq, prefix):
    C, T = cfg.n_cities, cfg.n_days
    rng = np.random.default_rng(misc_seq)
    user_city = rng.integers(0, C, cfg.n_users)
    eta = rng.normal(cfg.user_base_log_mean, cfg.user_base_log_sd, cfg.n_users)
    active = rng.random((cfg.n_users, T)) < cfg.user_activity
    u_idx, d_idx = np.nonzero(active)
    c_idx = user_city[u_idx]
    cd = c_idx * T + d_idx
    nrng = np.random.default_rng(noise_seq)
    noise = nrng.normal(0.0, cfg.noise_sd, len(u_idx))
    log_y = eta[u_idx] + cm[c_idx, month_idx[d_idx]] + day_fe[d_idx] + effect[cd] + noise
    y = _counts(cfg, rng, log_y)
    city_lab = np.array(cities, dtype=object)[c_idx]
    df = pd.DataFrame({
        "user_id": np.char.add("u", np.char.zfill(u_idx.astype(str), 5)).astype(object),
        "city_id": city_lab,
        "date": day_str[d_idx],
        "day_id": day_str[d_idx],
        "city_month_id": prefix + city_lab + ":" + month_str[d_idx],
        "posts": y,
        **{k: v[cd] for k, v in cols.items()},
    })
    zero_mask, missing_mask = _corrupt(cfg, rng, df)
    meta = {
        "planted_zero_days": int(zero_mask.sum()),
        "planted_missing_rows": int(missing_mask.sum()),
        "event_rows": event_rows,
        "planted_log_effect": effect[cd],
        "log_y": log_y,
    }
    return df, meta


def _corrupt(cfg, rng, df):
    n = len(df)
    zero = rng.random(n) < cfg.zero_day_rate if cfg.zero_day_rate > 0 else np.zeros(n, dtype=bool)
    df.loc[zero, "posts"] = 0.0
    zero |= df["posts"].to_numpy() == 0
    missing = np.zeros(n, dtype=bool)
    if cfg.missing_rate > 0:
        missing = (rng.random(n) < cfg.missing_rate) & ~zero
        df.loc[missing, "cloud"] = np.nan
    return zero, missing


def _to_frame(df, cfg, meta):
    fe = ["city_month_id", "day_id"] + (["user_id"] if "user_id" in df.columns else [])
    data = df.rename(columns={"posts": "outcome_raw"})
    m = {k: v for k, v in meta.items() if k not in ("planted_log_effect", "log_y")}
    m["seed"] = cfg.seed
    return PanelFrame.from_dataframe(
        data, fe_dims=fe, cluster_dims=["city_id", "day_id"], city="city_id", date="date",
        user="user_id" if "user_id" in df.columns else None,
        platform="platform" if "platform" in df.columns else None, meta=m,
    )


def simulate(config, validated=False):
    """Generate a panel and its truth record in one pass.

    With ``validated=True`` the frame is passed through
    :func:`panelfx.panel.validate` (log outcome) before returning.

    Returns
    -------
    (PanelFrame, Truth)
    """
    if isinstance(config, PooledConfig):
        frame, tr = _simulate_pooled(config)
    else:
        df, meta = _simulate(config)
        frame = _to_frame(df, config, meta)
        tr = _truth_from(config, frame, meta)
    if validated:
        frame = validate(frame)[1]
    return frame, tr


def generate(config):
    """Synthetic panel (``PanelFrame``) for ``config``; deterministic by seed."""
    return simulate(config)[0]


def generate_dataframe(config):
    """Raw simulated table with CSV column names (``posts`` etc.)."""
    if isinstance(config, PooledConfig):
        frame, _ = _simulate_pooled(config)
        return frame.data.rename(columns={"outcome_raw": "posts"})
    return _simulate(config)[0]


# --------------------------------------------------------------------------
# truth
# --------------------------------------------------------------------------

@dataclass(eq=False)
class Truth:
    marginals: pd.DataFrame
    surface: pd.DataFrame
    events: pd.DataFrame
    occupancy: pd.DataFrame
    cell_occupancy: pd.DataFrame
    planted_zero_days: int = 0
    planted_missing_rows: int = 0

    def marginal(self, term):
        r = self.marginals.loc[self.marginals["term"] == term]
        return float(r["log_effect"].iloc[0]) if len(r) else 0.0

    def cell(self, t_name, p_name):
        s = self.surface
        r = s.loc[(s["t_name"] == t_name) & (s["p_name"] == p_name)]
        return float(r["log_effect"].iloc[0])

    def write(self, out_dir, prefix="truth"):
        for name in ("marginals", "surface", "events", "occupancy", "cell_occupancy"):
            getattr(self, name).to_csv(f"{out_dir}/{prefix}_{name}.csv", index=False,
                                       float_format="%.10g", lineterminator="\n")


def _truth_from(cfg, frame, meta):
    specs = default_paper_specs()
    rows = []
    for var, spec in specs.items():
        for b, (name, label) in enumerate(zip(spec.column_names(), spec.labels())):
            if b == spec.reference_bin:
                continue
            v = cfg.planted_marginals.get(name, 0.0)
            rows.append((var, name, label, v, float(pct_effect(v))))
    marg = pd.DataFrame(rows, columns=["variable", "term", "label", "log_effect", "pct_effect"])

    ts, ps = surface_specs()
    grid = []
    for t, (tname, tlab) in enumerate(zip(ts.column_names(), ts.labels())):
        for p, (pname, plab) in enumerate(zip(ps.column_names(), ps.labels())):
            v = cfg.planted_surface.get((tname, pname), 0.0)
            grid.append((t, p, tname, pname, tlab, plab, v, float(pct_effect(v))))
    surf = pd.DataFrame(grid, columns=["t_bin", "p_bin", "t_name", "p_name", "t_label", "p_label",
                                       "log_effect", "pct_effect"])

    ev = pd.DataFrame(
        [(e.name, e.city, meta["event_rows"].get(e.name, 0), e.effect, float(pct_effect(e.effect)))
         for e in cfg.planted_events],
        columns=["name", "city_id", "n_rows", "log_effect", "pct_effect"],
    )
    occ, cells = _occupancy(frame)
    return Truth(marg, surf, ev, occ, cells, meta["planted_zero_days"], meta["planted_missing_rows"])


def _occupancy(frame):
    rows = []
    for var, spec in default_paper_specs().items():
        vals = frame.column(var)
        ok = np.isfinite(vals)
        cnt = np.bincount(spec.assign(vals[ok]), minlength=spec.n_bins)
        for b, (name, label) in enumerate(zip(spec.column_names(), spec.labels())):
            rows.append((var, b, name, label, int(cnt[b])))
    occ = pd.DataFrame(rows, columns=["variable", "bin", "name", "label", "count"])
    ts, ps = surface_specs()
    tb, pb = ts.assign(frame.column("tmax")), ps.assign(frame.column("precip"))
    cnt = np.bincount(tb * ps.n_bins + pb, minlength=ts.n_bins * ps.n_bins).reshape(ts.n_bins, ps.n_bins)
    cells = pd.DataFrame(
        [(t, p, int(cnt[t, p])) for t in range(ts.n_bins) for p in range(ps.n_bins)],
        columns=["t_bin", "p_bin", "count"],
    )
    return occ, cells


def truth(config):
    """Planted effects (log points and percent) and bin occupancy for ``config``."""
    return simulate(config)[1]


# --------------------------------------------------------------------------
# pooled platforms
# --------------------------------------------------------------------------

@dataclass
class PooledConfig:
    """Several platform panels over the same cities, stacked into one frame."""

    platforms: list
    seed: int = 0


def _simulate_pooled(pcfg):
    parts, metas = [], []
    for cfg in pcfg.platforms:
        df, meta = _simulate(cfg)
        parts.append(df)
        metas.append(meta)
    df = pd.concat(parts, ignore_index=True)
    meta = {
        "planted_zero_days": sum(m["planted_zero_days"] for m in metas),
        "planted_missing_rows": sum(m["planted_missing_rows"] for m in metas),
        "event_rows": {},
    }
    for m in metas:
        for k, v in m["event_rows"].items():
            meta["event_rows"][k] = meta["event_rows"].get(k, 0) + v
    frame = _to_frame(df, pcfg.platforms[0], meta)
    merged = replace(pcfg.platforms[0], planted_events=merged_events(pcfg.platforms))
    return frame, _truth_from(merged, frame, meta)


def merged_events(platforms):
    out = {}
    for cfg in platforms:
        for e in cfg.planted_events:
            if e.name in out:
                prev = out[e.name]
                out[e.name] = EventPlant(e.name, e.city, tuple(prev.dates) + tuple(e.dates), e.effect)
            else:
                out[e.name] = e
    return list(out.values())


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

def _ln(pct):
    return float(np.log1p(pct / 100.0))


def _surface(cold, cold2, hot):
    """Planted surface: the two coldest rows and the hottest row carry effects
    (percent, one value per precipitation bin); every other cell is zero."""
    ts, ps = surface_specs()
    tn, pn = ts.column_names(), ps.column_names()
    out = {}
    for row, vals in ((tn[0], cold), (tn[1], cold2), (tn[-1], hot)):
        for p, v in zip(pn, vals):
            out[(row, p)] = _ln(v)
    return out


FB_SURFACE = _surface(
    cold=(5.0, 10.0, 17.0, 25.0, 34.22, 30.0),
    cold2=(3.0, 6.0, 10.0, 14.0, 18.0, 16.0),
    hot=(3.0, 3.5, 4.0, 4.37, 4.0, 3.5),
)
TW_SURFACE = _surface(
    cold=(5.5, 11.0, 18.0, 26.0, 35.47, 31.0),
    cold2=(3.5, 6.5, 11.0, 15.0, 19.0, 17.0),
    hot=(3.5, 4.0, 4.5, 5.18, 4.5, 4.0),
)
POOLED_SURFACE = _surface(
    cold=(5.25, 10.5, 17.5, 25.5, 34.0, 30.5),
    cold2=(3.25, 6.25, 10.5, 14.5, 18.5, 16.5),
    hot=(3.25, 3.75, 4.25, 4.75, 4.25, 3.75),
)


def _marginals(freezing, hot40, p34):
    """Marginal-bin plants; the three published bins take the given percents,
    the rest follow a mild U shape in temperature and a rising precipitation
    response."""
    t = {"tmax<0": freezing, "tmax[0,5)": 2.5, "tmax[5,10)": 1.0, "tmax[10,15)": 0.3,
         "tmax[20,25)": 0.2, "tmax[25,30)": 0.6, "tmax[30,35)": 1.2, "tmax[35,40)": 2.0, "tmax>=40": hot40}
    p = {"precip(0,1)": 0.5, "precip[1,2)": 1.2, "precip[2,3)": 2.0, "precip[3,4)": p34,
         "precip[4,5)": p34 + 0.5, "precip>=5": p34 + 1.0}
    return {k: _ln(v) for k, v in {**t, **p}.items()}


FB_MARGINALS = _marginals(4.46, 3.34, 2.93)
TW_MARGINALS = _marginals(5.84, 3.58, 4.44)
USER_MARGINALS = _marginals(3.19, 3.67, 2.41)

NYE = ("2009-12-31", "2010-12-31", "2011-12-31", "2013-12-31", "2014-12-31", "2015-12-31")
MARDI_GRAS = ("2009-02-24", "2010-02-16", "2011-03-08", "2012-02-21", "2014-03-04", "2015-02-17", "2016-02-09")
BOSTON_MARATHON = ("2009-04-20", "2010-04-19", "2011-04-18", "2014-04-21", "2015-04-20", "2016-04-18")

FIG4C_EVENTS = [
    EventPlant("new_years_eve", "new_york", NYE, _ln(12.0)),
    EventPlant("mardi_gras", "new_orleans", MARDI_GRAS, _ln(18.0)),
    EventPlant("boston_marathon", "boston", BOSTON_MARATHON, _ln(5.0)),
]

FB_START, FB_DAYS = "2009-01-01", 1176
TW_START, TW_DAYS = "2013-11-30", 938


def _fig4c(seed):
    fb = SynthConfig(n_cities=40, n_days=FB_DAYS, start_date=FB_START, platform="facebook",
                     planted_surface=POOLED_SURFACE, planted_events=FIG4C_EVENTS, seed=seed * 1000)
    tw = SynthConfig(n_cities=40, n_days=TW_DAYS, start_date=TW_START, platform="twitter",
                     planted_surface=POOLED_SURFACE, planted_events=FIG4C_EVENTS, seed=seed * 1000 + 1)
    return PooledConfig([fb, tw], seed)


PRESETS = {
    "paper-fig2-facebook": lambda seed: SynthConfig(seed=seed, start_date=FB_START, planted_surface=FB_SURFACE),
    "paper-fig2-twitter": lambda seed: SynthConfig(seed=seed, start_date=TW_START, planted_surface=TW_SURFACE),
    "paper-fig2-facebook-marginals": lambda seed: SynthConfig(seed=seed, start_date=FB_START,
                                                              planted_marginals=FB_MARGINALS),
    "paper-fig2-twitter-marginals": lambda seed: SynthConfig(seed=seed, start_date=TW_START,
                                                             planted_marginals=TW_MARGINALS),
    "paper-fig4c": _fig4c,
    "paper-fig4-users": lambda seed: SynthConfig(
        n_cities=40, n_days=300, seed=seed, start_date="2014-01-01", n_users=10_000, user_activity=0.3,
        planted_marginals=USER_MARGINALS),
}
ALIASES = {"paper-fig2": "paper-fig2-facebook"}


def preset(name, seed=0):
    name = ALIASES.get(name, name)
    if name not in PRESETS:
        raise InvalidConfig(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](seed)


# --------------------------------------------------------------------------
# key-value (de)serialization
# --------------------------------------------------------------------------

_SCALARS = {f.name: f.type for f in SynthConfig.__dataclass_fields__.values()
            if f.name not in ("planted_marginals", "planted_surface", "planted_events", "weather")}


def config_from_sections(sections, base=None):
    """Build a SynthConfig from key-value sections.

    ``[synth]`` (or headerless) keys set scalars, ``preset = name`` starts from
    a preset; ``[marginals]`` maps bin column names to log effects;
    ``[surface]`` keys are ``tmax_bin | precip_bin``; ``[event.NAME]`` sections
    carry ``city``, ``dates`` and ``effect``; ``[weather]`` overrides the
    weather process.
    """
    main = dict(sections.get(MAIN, {}))
    main.update(sections.get("synth", {}))
    cfg = base
    if "preset" in main:
        cfg = preset(main.pop("preset"), int(main.get("seed", 0)))
    cfg = cfg or SynthConfig()
    if isinstance(cfg, PooledConfig):
        raise InvalidConfig("pooled presets cannot be overridden from a config file")
    kw = {}
    for k, v in main.items():
        if k not in _SCALARS:
            raise InvalidConfig(f"unknown synth key {k!r}")
        typ = _SCALARS[k]
        kw[k] = v if typ is str else (int(float(v)) if typ is int else float(v))
    cfg = replace(cfg, **kw)
    if "marginals" in sections:
        cfg = replace(cfg, planted_marginals={k: float(v) for k, v in sections["marginals"].items()})
    if "surface" in sections:
        surf = {}
        for k, v in sections["surface"].items():
            t, p = (x.strip() for x in k.split("|"))
            surf[(t, p)] = float(v)
        cfg = replace(cfg, planted_surface=surf)
    events = []
    for name, body in sections.items():
        if name.startswith("event."):
            events.append(EventPlant(name[6:], body["city"], tuple(split_list(body["dates"])),
                                     float(body["effect"])))
    if events:
        cfg = replace(cfg, planted_events=events)
    if "weather" in sections:
        cfg = replace(cfg, weather=replace(cfg.weather, **{k: float(v) for k, v in sections["weather"].items()}))
    return cfg.validate()


def read_config(path):
    return config_from_sections(read_kv(path))


def config_to_sections(cfg):
    d = asdict(cfg)
    main = {k: repr(v) if isinstance(v, float) else str(v) for k, v in d.items() if k in _SCALARS}
    out = {"synth": main}
    if cfg.planted_marginals:
        out["marginals"] = {k: repr(v) for k, v in cfg.planted_marginals.items()}
    if cfg.planted_surface:
        out["surface"] = {f"{t} | {p}": repr(v) for (t, p), v in cfg.planted_surface.items()}
    for e in cfg.planted_events:
        out[f"event.{e.name}"] = {"city": e.city, "dates": ", ".join(e.dates), "effect": repr(e.effect)}
    out["weather"] = {k: repr(v) for k, v in asdict(cfg.weather).items()}
    return out


# --------------------------------------------------------------------------
# synthetic post corpus
# --------------------------------------------------------------------------

FILLER = (
    "meeting lunch coffee traffic game music movie friends family work school dinner tonight "
    "happy birthday weekend party love new phone photo video city park street train bus office "
    "morning night today tomorrow great awesome tired bored excited shopping pizza tacos drinks "
    "concert show episode season finale team score win lose monday friday brunch gym run walk"
).split()


def generate_posts(frame, rate=0.04, posts_per_day=20, max_city_days=500, seed=0, dictionary=None):
    """Synthetic post corpus over (up to ``max_city_days``) city-days of ``frame``.

    Each post is weather-related with probability ``rate`` and then contains
    one dictionary term; other posts draw only from a filler vocabulary that
    shares no token with the dictionary.

    Returns
    -------
    pandas.DataFrame with columns text, city_id, date, is_weather_truth
    """
    from .textfilter import WeatherDictionary

    d = dictionary or WeatherDictionary.default()
    filler = [w for w in FILLER if w not in d.terms]
    terms = sorted(d.terms)
    rng = np.random.default_rng(seed)
    cd = frame.data[[frame.city_col, frame.date_col]].drop_duplicates()
    if len(cd) > max_city_days:
        cd = cd.iloc[np.sort(rng.choice(len(cd), max_city_days, replace=False))]
    texts, cities, dates, labels = [], [], [], []
    for city, day in cd.itertuples(index=False):
        wet = rng.random(posts_per_day) < rate
        for w in wet:
            words = list(rng.choice(filler, rng.integers(3, 9)))
            if w:
                words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(terms)))
            texts.append(" ".join(words))
            cities.append(city)
            dates.append(day)
            labels.append(bool(w))
    return pd.DataFrame({"text": texts, "city_id": cities, "date": dates, "is_weather_truth": labels})
