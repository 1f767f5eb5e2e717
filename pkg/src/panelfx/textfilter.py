"""Dictionary-based weather-post classification and city-day outcomes.

A post is weather-related when any of its tokens, after dropping a trailing
possessive ('s or '), is a dictionary term. Tokens are maximal runs of
letters with internal apostrophes, lower-cased; digits and punctuation
separate tokens. No stemming: the dictionary lists inflections itself.
"""

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InvalidConfig, MissingColumn, ParseError

TOKEN_RE = re.compile(r"[^\W\d_]+(?:'[^\W\d_]+)*")
APOSTROPHES = str.maketrans({"’": "'", "‘": "'", "ʼ": "'"})
MODES = ("share", "nonweather-count", "all-count")

RULES = {
    "tokenizer": "letter runs with internal apostrophes, lower-cased",
    "possessive": "trailing 's or ' stripped before lookup",
    "stemming": "none",
}


def tokenize(text):
    return TOKEN_RE.findall(text.translate(APOSTROPHES).lower())


def strip_possessive(token):
    if token.endswith("'s"):
        return token[:-2]
    if token.endswith("'"):
        return token[:-1]
    return token


@dataclass(frozen=True)
class WeatherDictionary:
    terms: frozenset

    def __post_init__(self):
        if not self.terms:
            raise InvalidConfig("weather dictionary is empty")
        bad = [t for t in self.terms if t != t.lower()]
        if bad:
            raise InvalidConfig(f"dictionary terms must be lowercase: {bad[:3]}")

    @classmethod
    def from_lines(cls, lines):
        terms = []
        for raw in lines:
            t = raw.split("#", 1)[0].strip()
            if t:
                terms.append(t.translate(APOSTROPHES).lower())
        return cls(frozenset(terms))

    @classmethod
    def load(cls, path):
        return cls.from_lines(Path(path).read_text(encoding="utf-8").splitlines())

    @classmethod
    def default(cls):
        text = resources.files("panelfx").joinpath("data/weather_terms.txt").read_text(encoding="utf-8")
        return cls.from_lines(text.splitlines())

    def __contains__(self, token):
        return token in self.terms

    def __len__(self):
        return len(self.terms)


def is_weather(text, dictionary=None):
    d = dictionary or WeatherDictionary.default()
    terms = d.terms
    for tok in tokenize(text):
        if tok in terms or strip_possessive(tok) in terms:
            return True
    return False


def classify(texts, dictionary=None):
    d = dictionary or WeatherDictionary.default()
    return np.fromiter((is_weather(t, d) for t in texts), dtype=bool, count=len(texts))


def read_posts(path, text_col="text", city_col="city_id", date_col="date"):
    """Posts CSV (RFC-style quoting). Optional ``is_retweet`` and ``user_id`` columns."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    for c in (text_col, city_col, date_col):
        if c not in df.columns:
            raise MissingColumn(c)
    empty = df[text_col].str.strip() == ""
    if empty.any():
        i = int(np.flatnonzero(empty.to_numpy())[0])
        raise ParseError(i + 1, text_col, df[text_col].iloc[i])
    return df


def _retweet_mask(posts):
    if "is_retweet" not in posts.columns:
        return np.zeros(len(posts), dtype=bool)
    v = posts["is_retweet"].astype(str).str.strip().str.lower()
    return v.isin(["1", "true", "yes"]).to_numpy()


def build_outcomes(posts, mode="share", dictionary=None, city_col="city_id", date_col="date",
                   text_col="text"):
    """Aggregate posts to city-day counts and the requested outcome.

    Retweets (``is_retweet`` true) are excluded before counting.

    Returns
    -------
    pandas.DataFrame
        city, date, total_count, weather_count, nonweather_count,
        weather_share and ``outcome_raw``: the share (``share``, modelled in
        levels), the non-weather count (``nonweather-count``) or the total
        count (``all-count``), the latter two modelled in logs.
    """
    if mode not in MODES:
        raise InvalidConfig(f"unknown outcome mode {mode!r}; choose from {MODES}")
    keep = ~_retweet_mask(posts)
    p = posts.loc[keep]
    w = classify(p[text_col].tolist(), dictionary)
    g = pd.DataFrame({city_col: p[city_col].to_numpy(), date_col: p[date_col].to_numpy(),
                      "w": w.astype(np.int64)})
    agg = g.groupby([city_col, date_col], sort=True)["w"].agg(["size", "sum"]).reset_index()
    agg = agg.rename(columns={"size": "total_count", "sum": "weather_count"})
    agg["nonweather_count"] = agg["total_count"] - agg["weather_count"]
    agg["weather_share"] = agg["weather_count"] / agg["total_count"]
    agg["outcome_raw"] = {
        "share": agg["weather_share"],
        "nonweather-count": agg["nonweather_count"].astype(np.float64),
        "all-count": agg["total_count"].astype(np.float64),
    }[mode]
    return agg


def outcome_transform(mode):
    """Outcome transform matching a build mode: shares in levels, counts in logs."""
    return "level" if mode == "share" else "log"


def attach_outcomes(frame, outcomes, city_col="city_id", date_col="date"):
    """Replace a panel's raw outcome by post-derived city-day outcomes.

    City-days without any post are dropped.
    """
    from .panel import PanelFrame

    key = outcomes.set_index([city_col, date_col])["outcome_raw"]
    df = frame.data.drop(columns=[c for c in ("outcome_raw", "outcome") if c in frame.data.columns])
    idx = pd.MultiIndex.from_arrays([df[frame.city_col].astype(str), df[frame.date_col].astype(str)])
    key.index = pd.MultiIndex.from_arrays([key.index.get_level_values(0).astype(str),
                                           key.index.get_level_values(1).astype(str)])
    vals = key.reindex(idx).to_numpy()
    df = df.assign(outcome_raw=vals)[~np.isnan(vals)]
    return PanelFrame.from_dataframe(df, frame.fe_dims, frame.cluster_dims, frame.city_col, frame.date_col,
                                     frame.user_col, frame.platform_col, None, frame.meta)
