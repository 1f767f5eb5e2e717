"""Command-line driver: ``panelfx <command> [flags]``.

Exit codes: 0 success, 2 invalid input or configuration, 3 estimation
failure. Every run writes ``manifest.json`` next to its outputs listing the
command, configuration, input hashes, seed, version, timings and the
artifacts produced.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, _kernels, synth
from .binning import default_paper_specs, marginal_design, specs_from_sections, surface_design
from .config import MAIN, read_kv, write_kv
from .errors import EstimationError, InvalidConfig, PanelFXError, ValidationError
from .events import EventSpec, describe_sd_multiple, fit_with_events, read_events, residualize, sd_multiple
from .fe import ModelSpec, fit_model
from .inference import cluster_vcv, effect_table, hc_vcv, pct_effect
from .panel import load_panel, validate
from .surface import cell_terms, cluster_bootstrap, star_grid
from .textfilter import RULES, WeatherDictionary, build_outcomes, read_posts

COMMANDS = ("validate", "fit", "surface", "residualize", "events", "classify", "synth", "reproduce")
FLOAT = "%.10g"


# --------------------------------------------------------------------------
# run context
# --------------------------------------------------------------------------

def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Output directory, settings and manifest bookkeeping for one command."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.sections = read_kv(args.config) if args.config else {}
        run = dict(self.sections.get(MAIN, {}))
        run.update(self.sections.get("run", {}))
        self.settings = run
        self.inputs = {}
        self.artifacts = []
        self.t0 = time.time()
        self.timings = {}

    def get(self, name, default=None, cast=str):
        flag = getattr(self.args, name, None)
        if flag is not None:
            return cast(flag)
        if name in self.settings:
            return cast(self.settings[name])
        return default

    @property
    def seed(self):
        # a [synth] seed counts when neither the flag nor [run] sets one
        return self.get("seed", int(self.sections.get("synth", {}).get("seed", 0)), int)

    def input(self, path):
        self.inputs[str(path)] = sha256(path)
        return path

    def path(self, name):
        p = self.out / name
        self.artifacts.append(name)
        return p

    def write_text(self, name, text):
        self.path(name).write_text(text, encoding="utf-8")

    def write_csv(self, name, df):
        df.to_csv(self.path(name), index=False, float_format=FLOAT, lineterminator="\n")

    def lap(self, label):
        self.timings[label] = round(time.time() - self.t0, 3)

    def manifest(self, status, error=None):
        m = {
            "command": self.args.command,
            "argv": self.argv,
            "config": {"path": self.args.config, "sha256": sha256(self.args.config)} if self.args.config else None,
            "inputs": self.inputs,
            "seed": self.seed,
            "version": __version__,
            "backend": _kernels.get_backend(),
            "status": status,
            "error": error,
            "timings": {**self.timings, "total": round(time.time() - self.t0, 3)},
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(self.t0)),
            "artifacts": [{"path": a, "sha256": sha256(self.out / a)} for a in self.artifacts
                          if (self.out / a).exists()],
        }
        (self.out / "manifest.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def schema(self):
        if getattr(self.args, "schema", None):
            return self.input(self.args.schema)
        return self.sections.get("schema", synth.SCHEMA)

    def bin_specs(self):
        specs = default_paper_specs()
        specs.update(specs_from_sections(self.sections))
        return specs

    def threads(self):
        t = self.args.threads if self.args.threads is not None else os.environ.get("PANELFX_THREADS")
        return int(t) if t else (os.cpu_count() or 1)


def _load(run, transform=None, required=None):
    if not run.args.input:
        raise InvalidConfig("--input is required")
    frame = load_panel(run.input(run.args.input), run.schema())
    report, frame = validate(frame, transform or run.get("transform", "log"), required)
    run.write_text("validation.txt", "\n".join(report.lines()) + "\n")
    run.lap("load")
    return frame


def _frame_or_preset(run):
    if run.args.input:
        return _load(run), None
    name = run.get("preset")
    if not name:
        raise InvalidConfig("give --input or --preset")
    frame, truth = synth.simulate(synth.preset(name, run.seed), validated=True)
    run.lap("synth")
    return frame, truth


def _vcv(fit, frame):
    dims = [d for d in frame.cluster_dims if d in frame.codes]
    if dims:
        return cluster_vcv(fit, clusters={d: frame.codes[d] for d in dims})
    return hc_vcv(fit)


def _model(run, frame, design):
    return ModelSpec(design, frame.fe_dims, frame.cluster_dims, tol=run.get("tol", 1e-8, float),
                     max_iter=run.get("max_iter", 10_000, int))


def _write_meta(run, name, meta):
    run.write_text(name, "".join(f"{k} = {v}\n" for k, v in meta.items()))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_validate(run):
    _load(run)


def _fit_marginals(run, frame):
    design = marginal_design(frame, run.bin_specs())
    fit = fit_model(frame, _model(run, frame, design))
    run.lap("fit")
    vcv = _vcv(fit, frame)
    table = effect_table(fit, vcv, level=run.get("level", 0.95, float), transform=frame.transform)
    run.lap("vcv")
    return fit, table


def cmd_fit(run):
    frame = _load(run)
    fit, table = _fit_marginals(run, frame)
    run.write_csv("coefficients.csv", table.frame)
    _write_meta(run, "coefficients_meta.txt", table.metadata)
    run.write_text("fit_log.txt", fit.run_log())


def _surface(run, frame):
    design = surface_design(frame, min_support=run.get("min_support", 50, int))
    spec = _model(run, frame, design)
    boot = cluster_bootstrap(frame, spec, B=run.get("B", 1000, int), seed=run.seed, threads=run.threads(),
                             method=run.get("method", "auto"))
    run.lap("bootstrap")
    grid = star_grid(boot)
    grid.metadata["flagged_cells"] = "; ".join(f"{t},{p}" for t, p in design.flagged) or "(none)"
    return boot, grid


def cmd_surface(run):
    frame, _ = _frame_or_preset(run)
    boot, grid = _surface(run, frame)
    run.write_csv("surface_grid.csv", grid.frame)
    run.write_text("surface_grid.txt", grid.render())
    _write_meta(run, "surface_meta.txt", grid.metadata)
    pt = pd.DataFrame([(t, p, v, float(pct_effect(v))) for (t, p), v in sorted(boot.point.items())],
                      columns=["t_bin", "p_bin", "log_effect", "pct_effect"])
    run.write_csv("surface_point.csv", pt)


def cmd_residualize(run):
    frame, _ = _frame_or_preset(run)
    res = residualize(frame)
    run.lap("residualize")
    lines = [f"n = {len(res.values)}", f"fe_dims = {', '.join(res.fe_dims)}", f"residual_sd = {res.sd:.10g}",
             f"residual_sd_pct = {res.sd_pct:.10g}"]
    effect = run.get("effect_pct", None, float)
    if effect is not None:
        m = sd_multiple(effect, res.sd_pct)
        lines += [f"effect_pct = {effect:.10g}", f"sd_multiple = {m:.10g}", f"reading = {describe_sd_multiple(m)}"]
    run.write_text("residualize.txt", "\n".join(lines) + "\n")


def cmd_events(run):
    cold_wet = {t: 1.0 for t in cell_terms()[(0, 4)]}
    if run.args.input:
        frame = _load(run)
        if not run.args.events:
            raise InvalidConfig("--events is required with --input")
        events = read_events(run.input(run.args.events))
    else:
        frame, _ = _frame_or_preset(run)
        events = preset_events(synth.preset(run.get("preset"), run.seed))
    design = surface_design(frame, min_support=run.get("min_support", 50, int))
    ef = fit_with_events(frame, _model(run, frame, design), events, vcv=run.get("event_vcv", "iid"),
                         level=run.get("level", 0.99, float))
    run.lap("fit")
    run.write_csv("events_table.csv", ef.table.frame)
    _write_meta(run, "events_meta.txt", ef.table.metadata)
    cmp = ef.comparison(level=run.get("level", 0.99, float), extra={"cold_wet_cell": cold_wet})
    run.write_csv("events_comparison.csv", cmp)


def preset_events(cfg):
    plants = synth.merged_events(cfg.platforms) if isinstance(cfg, synth.PooledConfig) else cfg.planted_events
    return [EventSpec(e.name, e.city, tuple(e.dates)) for e in plants]


def cmd_classify(run):
    if not run.args.posts:
        raise InvalidConfig("--posts is required")
    posts = read_posts(run.input(run.args.posts))
    d = WeatherDictionary.load(run.input(run.args.dictionary)) if run.args.dictionary else WeatherDictionary.default()
    mode = run.get("mode", "share")
    out = build_outcomes(posts, mode=mode, dictionary=d)
    run.lap("classify")
    run.write_csv("outcomes.csv", out)
    _write_meta(run, "classify_meta.txt", {**RULES, "mode": mode, "dictionary_terms": len(d),
                                           "posts": len(posts), "city_days": len(out)})


def _synth_config(run):
    if run.args.config and any(s in run.sections for s in ("synth", "marginals", "surface", "weather")) \
            or any(s.startswith("event.") for s in run.sections):
        cfg = synth.config_from_sections(run.sections)
        return replace(cfg, seed=run.seed) if run.args.seed is not None else cfg
    return synth.preset(run.get("preset", "paper-fig2"), run.seed)


def cmd_synth(run):
    cfg = _synth_config(run)
    df = synth.generate_dataframe(cfg)
    frame, truth = synth.simulate(cfg)
    run.lap("synth")
    df.to_csv(run.path("panel.csv"), index=False, float_format="%.17g", lineterminator="\n")
    schema = dict(synth.SCHEMA)
    if "user_id" in df.columns:
        schema["user_id"] = "fe, user"
    if "platform" in df.columns:
        schema["platform"] = "platform"
    write_kv(run.path("schema.txt"), {"schema": schema})
    for name in ("marginals", "surface", "events", "occupancy", "cell_occupancy"):
        run.write_csv(f"truth_{name}.csv", getattr(truth, name))
    if not isinstance(cfg, synth.PooledConfig):
        write_kv(run.path("synth_config.txt"), synth.config_to_sections(cfg))
    rate = run.get("posts_rate", None, float)
    if rate is not None:
        posts = synth.generate_posts(frame, rate=rate, seed=run.seed)
        run.write_csv("posts.csv", posts)


def cmd_reproduce(run):
    name = run.get("preset", "paper-fig2")
    cfg = synth.preset(name, run.seed)
    frame, truth = synth.simulate(cfg, validated=True)
    run.lap("synth")
    lines = [f"preset = {synth.ALIASES.get(name, name)}", f"seed = {run.seed}", f"rows = {frame.n}"]
    if isinstance(cfg, synth.PooledConfig):
        events = preset_events(cfg)
        design = surface_design(frame)
        ef = fit_with_events(frame, _model(run, frame, design), events, level=0.99)
        cmp = ef.comparison(level=0.99)
        planted = truth.events.set_index("name")["pct_effect"]
        cmp["planted_pct"] = cmp["label"].map(planted)
        cmp["covered"] = (cmp["lo"] <= cmp["planted_pct"]) & (cmp["planted_pct"] <= cmp["hi"])
        report = cmp
    elif cfg.planted_surface:
        _, grid = _surface(run, frame)
        g = grid.frame.copy()
        tr = truth.surface.set_index(["t_bin", "p_bin"])
        g["planted_pct"] = [float(tr.loc[(t, p), "pct_effect"]) for t, p in zip(g["t_bin"], g["p_bin"])]
        g["planted_nonzero"] = g["planted_pct"] != 0
        g["sign_match"] = ~g["starred"] | (np.sign(g["median_pct"]) == np.sign(g["planted_pct"]))
        report = g
        run.write_text("surface_grid.txt", grid.render())
        lines += [f"starred_cells = {int(g['starred'].sum())}",
                  f"planted_nonzero_starred = {int((g['starred'] & g['planted_nonzero']).sum())}"
                  f" of {int(g['planted_nonzero'].sum())}",
                  f"planted_zero_starred = {int((g['starred'] & ~g['planted_nonzero']).sum())}",
                  f"starred_sign_matches_truth = {bool(g['sign_match'].all())}"]
    else:
        _, table = _fit_marginals(run, frame)
        t = table.frame.copy()
        t = t.loc[t["term"].isin(truth.marginals["term"])]
        planted = truth.marginals.set_index("term")["pct_effect"]
        t["planted_pct"] = t["term"].map(planted)
        t["error_pp"] = t["pct_effect"] - t["planted_pct"]
        report = t
        lines.append(f"max_abs_error_pp = {float(t['error_pp'].abs().max()):.4f}")
    run.write_csv("reproduce_report.csv", report)
    run.write_text("reproduce_report.txt", "\n".join(lines) + "\n")


HANDLERS = {c: globals()[f"cmd_{c}"] for c in COMMANDS}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value config file ([run], [schema], [bins.*], synth sections)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--B", dest="B", type=int, help="bootstrap replicates (default 1000)")
    common.add_argument("--tol", type=float, help="demeaning tolerance (default 1e-8)")
    common.add_argument("--max-iter", dest="max_iter", type=int, help="demeaning sweep cap (default 10000)")
    common.add_argument("--threads", type=int, help="worker cap (fallback: PANELFX_THREADS, then all cores)")
    common.add_argument("--out-dir", dest="out_dir", default=".", help="output directory")
    common.add_argument("--preset", help=f"synthetic preset: {', '.join(sorted(synth.PRESETS))}")

    p = argparse.ArgumentParser(prog="panelfx", description="Fixed-effects weather-response panel toolkit.")
    p.add_argument("--version", action="version", version=f"panelfx {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text)

    def data_args(sp):
        sp.add_argument("--input", help="panel CSV")
        sp.add_argument("--schema", help="schema file (column = role[, role])")
        sp.add_argument("--transform", choices=("log", "level"), help="outcome transform (default log)")

    sp = add("validate", "load a panel CSV, drop unusable rows and report")
    data_args(sp)
    sp = add("fit", "additive binned weather model with fixed effects")
    data_args(sp)
    sp.add_argument("--level", type=float, help="confidence level (default 0.95)")
    sp = add("surface", "temperature x precipitation surface with cluster bootstrap stars")
    data_args(sp)
    sp.add_argument("--min-support", dest="min_support", type=int, help="flag cells below this many rows")
    sp.add_argument("--method", choices=("auto", "weighted", "refit"), help="bootstrap solver")
    sp = add("residualize", "fixed-effect-only residuals and their standard deviation")
    data_args(sp)
    sp.add_argument("--effect-pct", dest="effect_pct", type=float, help="express this effect in residual sds")
    sp = add("events", "event indicators estimated alongside the surface model")
    data_args(sp)
    sp.add_argument("--events", help="events CSV (name, city_id, date)")
    sp.add_argument("--level", type=float, help="confidence level (default 0.99)")
    sp.add_argument("--event-vcv", dest="event_vcv", choices=("iid", "cluster"), help="event standard errors")
    sp = add("classify", "dictionary classification of posts into city-day outcomes")
    sp.add_argument("--posts", help="posts CSV (text, city_id, date[, is_retweet])")
    sp.add_argument("--dictionary", help="dictionary file (default: bundled list)")
    sp.add_argument("--mode", choices=("share", "nonweather-count", "all-count"), help="outcome (default share)")
    sp = add("synth", "generate a synthetic panel with its truth tables")
    sp.add_argument("--posts-rate", dest="posts_rate", type=float, help="also emit a post corpus at this rate")
    sp = add("reproduce", "synthesize, estimate and compare against the planted truth")
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        run = Run(args, argv)
    except PanelFXError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    t = run.threads()
    _kernels.set_threads(t)
    try:
        HANDLERS[args.command](run)
    except ValidationError as exc:
        run.manifest("validation_error", f"{type(exc).__name__}: {exc}")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        run.manifest("estimation_error", f"{type(exc).__name__}: {exc}")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    run.manifest("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
