"""Command-line runner: generate, fit, evaluate, diagnose, compare.

Every command accepts ``--config FILE`` (flat ``key = value`` lines) and any
number of ``key=value`` overrides. The fully materialised config is written
to the output directory, and a run can be repeated from that file alone.
"""
import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from .baselines.irm import IrmOptions, run_irm_chain
from .baselines.lfrm import run_lfrm_chain
from .checkpoint import load_trace, save_checkpoint, save_trace
from .errors import InvalidArgument, ParseError, UndefinedMetric
from .evaluate import (evaluator_for, metric_auc, metric_test_loglik, metric_zero_one,
                       summarize)
from .geweke import geweke_check
from .graph import (PlantedSpec, default_planted_spec,
                    generate_from_ila, generate_planted, holdout_split, load_edge_list,
                    load_mask, save_edge_list, save_mask)
from .mcmc import RngStream
from .model import IlaHyperParams, sample_prior
from .sampler import SamplerOptions, progress_line, run_chain

log = logging.getLogger("ilanet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIAGNOSTIC = 0, 1, 2, 3
MODELS = ("ila", "ila-fixed-m", "irm", "lfrm")
AVERAGE_LAST = 300

# key -> (type, default). None defaults are resolved from the model when materialised.
CONFIG_KEYS = {
    "model": (str, "ila"),
    "data": (str, "planted"),          # planted | prior | edges
    "edges": (str, ""),
    "labels": (str, ""),
    "n_nodes": (int, 0),               # 0: taken from the edge list, or 30 for prior data
    "mode": (str, "undirected"),
    "planted_weight": (float, 6.0),
    "planted_bias": (float, 0.0),
    "split": (float, 0.2),
    "repeats": (int, 10),
    "n_iters": (int, None),
    "burn_in": (int, None),
    "thin": (int, 1),
    "fixed_m": (int, 6),
    "n_aux": (int, 3),
    "seq_init_iters": (int, 3),
    "resample_c": (bool, False),
    "width_w": (float, 1.0),
    "width_s": (float, 1.0),
    "width_alpha": (float, 1.0),
    "width_gamma": (float, 1.0),
    "max_stepout": (int, 32),
    "max_new_features": (int, 4),
    "n_restricted": (int, 5),
    "n_split_merge": (int, 1),
    "sigma_w": (float, 1.0),
    "beta": (float, 1.0),
    "mu_s": (float, -1.0),
    "sigma_s": (float, 4.0),
    "seed": (int, 0),
    "out": (str, "run"),
    "loss_threshold": (float, 0.5),
    "geweke_nodes": (int, 5),
    "geweke_samples": (int, 20000),
    "geweke_threshold": (float, 5.0),
    "compare_models": (str, "irm,lfrm,ila"),
}


class UsageError(Exception):
    pass


def _convert(key, raw):
    typ = CONFIG_KEYS[key][0]
    if typ is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw.strip())
    except ValueError:
        raise UsageError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config_text(text, source="<config>"):
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source} line {lineno}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UsageError(f"{source} line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def materialize(cfg):
    """Fill every key; iteration budgets follow the model when unset."""
    full = {k: d for k, (_, d) in CONFIG_KEYS.items()}
    full.update(cfg)
    if full["model"] not in MODELS:
        raise UsageError(f"model must be one of {', '.join(MODELS)}")
    if full["n_iters"] is None:
        full["n_iters"] = 500 if full["model"].startswith("ila") else 1000
    if full["burn_in"] is None:
        full["burn_in"] = max(0, full["n_iters"] - AVERAGE_LAST)
    if not full["n_iters"] > full["burn_in"] >= 0 or full["thin"] < 1:
        raise UsageError("need n_iters > burn_in >= 0 and thin >= 1")
    if full["repeats"] < 1:
        raise UsageError("repeats must be >= 1")
    return full


def format_config(cfg):
    lines = []
    for k in CONFIG_KEYS:
        v = cfg[k]
        lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def write_config(cfg, directory):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "config.txt"), "w") as f:
        f.write(format_config(cfg))


def derive_seed(master, purpose, r=0):
    digest = hashlib.sha256(f"{master}:{purpose}:{r}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def hyperparams(cfg, model=None):
    model = cfg["model"] if model is None else model
    return IlaHyperParams(sigma_w=cfg["sigma_w"], mu_s=cfg["mu_s"], sigma_s=cfg["sigma_s"],
                          fixed_m=cfg["fixed_m"] if model == "ila-fixed-m" else None)


def sampler_options(cfg):
    names = {f.name for f in fields(SamplerOptions)}
    return SamplerOptions(**{k: cfg[k] for k in CONFIG_KEYS if k in names})


def irm_options(cfg):
    return IrmOptions(n_restricted=cfg["n_restricted"], n_split_merge=cfg["n_split_merge"],
                      width_gamma=cfg["width_gamma"])


# ---------------------------------------------------------------- data

def make_data(cfg):
    """Return ``(network, truth)``; truth is an IlaState or None for edge-list data."""
    src = cfg["data"]
    rng = RngStream(derive_seed(cfg["seed"], "data"))
    if src == "planted":
        spec = default_planted_spec(cfg["planted_weight"], cfg["planted_bias"])
        if cfg["mode"] != spec.mode:
            spec = PlantedSpec(spec.n_nodes, spec.features, spec.bias, cfg["mode"])
        return generate_planted(spec, rng)
    if src == "prior":
        n = cfg["n_nodes"] or 30
        truth = sample_prior(n, hyperparams(cfg, "ila"), rng)
        return generate_from_ila(truth, n, cfg["mode"], rng), truth
    if src == "edges":
        if not cfg["edges"]:
            raise UsageError("data = edges needs an edges path")
        net = load_edge_list(cfg["edges"], cfg["n_nodes"] or None, cfg["mode"],
                             cfg["labels"] or None)
        return net, None
    raise UsageError("data must be planted, prior or edges")


# ------------------------------------------------------------- commands

def cmd_generate(cfg):
    out = cfg["out"]
    if cfg["data"] == "edges":
        raise UsageError("generate needs data = planted or prior")
    net, truth = make_data(cfg)
    os.makedirs(out, exist_ok=True)
    save_edge_list(net, os.path.join(out, "edges.txt"))
    save_checkpoint(os.path.join(out, "truth.json"), truth, "ila")
    write_config(cfg, out)
    print(f"wrote {net.n_nodes}-node network with {len(net.edges())} links to {out}")
    return EXIT_OK


def _progress_writer(fh, model):
    def write(t, state, lj):
        if model.startswith("ila"):
            fh.write(progress_line(t, state, lj) + "\n")
        elif model == "irm":
            fh.write(f"iter={t}\tK={state.K}\tlog_joint={lj:.17g}\n")
        else:
            fh.write(f"iter={t}\tM={state.M}\tlog_joint={lj:.17g}\n")
    return write


def fit_repeat(cfg, net, r, directory):
    model = cfg["model"]
    split_rng = RngStream(derive_seed(cfg["seed"], "split", r))
    train, test = holdout_split(net, cfg["split"], split_rng)
    os.makedirs(directory, exist_ok=True)
    save_mask(train, os.path.join(directory, "train_mask.txt"))
    save_mask(test, os.path.join(directory, "test_mask.txt"))
    rng = RngStream(derive_seed(cfg["seed"], "chain", r))
    args = (cfg["n_iters"], cfg["burn_in"], cfg["thin"], rng)
    with open(os.path.join(directory, "progress.log"), "w") as fh:
        progress = _progress_writer(fh, model)
        if model == "irm":
            trace = run_irm_chain(net, train, *args, opts=irm_options(cfg), beta=cfg["beta"],
                                  progress=progress)
        elif model == "lfrm":
            trace = run_lfrm_chain(net, train, hyperparams(cfg), sampler_options(cfg), *args,
                                   progress=progress)
        else:
            trace = run_chain(net, train, hyperparams(cfg), sampler_options(cfg), *args,
                              progress=progress)
    trace.model_tag = model if model != "ila-fixed-m" else "ila"
    save_trace(trace, directory)
    return trace


def _repeat_dir(out, r):
    return os.path.join(out, f"repeat_{r:02d}")


def cmd_fit(cfg):
    net, _ = make_data(cfg)
    out = cfg["out"]
    write_config(cfg, out)
    save_edge_list(net, os.path.join(out, "edges.txt"))
    for r in range(cfg["repeats"]):
        log.info("fitting %s, repeat %d", cfg["model"], r)
        try:
            fit_repeat(cfg, net, r, _repeat_dir(out, r))
        except (InvalidArgument, ParseError) as e:
            raise type(e)(f"repeat {r}: {e}") from e
    print(f"fitted {cfg['repeats']} repeat(s) of {cfg['model']} into {out}")
    return EXIT_OK


METRIC_COLUMNS = ("model_tag", "split_seed", "train_err", "test_err", "test_loglik", "auc")


def evaluate_run(out):
    """Compute the metrics rows for a fitted run directory."""
    cfg_path = os.path.join(out, "config.txt")
    if not os.path.exists(cfg_path):
        raise FileNotFoundError(f"{cfg_path}: run directory has no config")
    with open(cfg_path) as f:
        cfg = materialize(parse_config_text(f.read(), cfg_path))
    net = load_edge_list(os.path.join(out, "edges.txt"), mode=cfg["mode"])
    missing = [r for r in range(cfg["repeats"])
               if not os.path.exists(os.path.join(_repeat_dir(out, r), "trace.tsv"))]
    if missing:
        raise InvalidArgument(f"incomplete run: missing repeats {missing}")
    rows = []
    for r in range(cfg["repeats"]):
        d = _repeat_dir(out, r)
        trace = load_trace(os.path.join(d, "trace.tsv"))
        train = load_mask(os.path.join(d, "train_mask.txt"), net.n_nodes, net.mode)
        test = load_mask(os.path.join(d, "test_mask.txt"), net.n_nodes, net.mode)
        ev = evaluator_for(cfg["model"], net, train)
        tr_sum = summarize(trace, net, train, ev)
        te_sum = summarize(trace, net, test, ev)
        try:
            auc = metric_auc(te_sum)
        except UndefinedMetric:
            auc = float("nan")
        rows.append((cfg["model"], derive_seed(cfg["seed"], "split", r),
                     metric_zero_one(tr_sum, cfg["loss_threshold"]),
                     metric_zero_one(te_sum, cfg["loss_threshold"]),
                     metric_test_loglik(te_sum), auc))
    return cfg, rows


def format_metrics(rows):
    lines = ["\t".join(METRIC_COLUMNS)]
    for row in rows:
        lines.append("\t".join([row[0], str(row[1])] + [f"{v:.6g}" for v in row[2:]]))
    vals = np.array([row[2:] for row in rows], dtype=float)
    mean, std = vals.mean(axis=0), vals.std(axis=0)
    lines.append("\t".join([rows[0][0], "mean±std"]
                           + [f"{m:.4f}±{s:.4f}" for m, s in zip(mean, std)]))
    return "\n".join(lines) + "\n"


def cmd_evaluate(cfg):
    out = cfg["out"]
    _, rows = evaluate_run(out)
    text = format_metrics(rows)
    with open(os.path.join(out, "metrics.tsv"), "w") as f:
        f.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_diagnose(cfg):
    model = cfg["model"]
    geweke_model = "ila" if model.startswith("ila") else model
    hp = hyperparams(cfg)
    report = geweke_check(cfg["geweke_nodes"], hp, sampler_options(cfg), cfg["geweke_samples"],
                          cfg["geweke_samples"], RngStream(derive_seed(cfg["seed"], "geweke")),
                          model=geweke_model, mode=cfg["mode"], irm_opts=irm_options(cfg))
    lines = ["statistic\tforward_mean\tchain_mean\tz"]
    lines += [f"{k}\t{f:.6g}\t{c:.6g}\t{z:.3f}" for k, f, c, z in report.rows()]
    text = "\n".join(lines) + "\n"
    os.makedirs(cfg["out"], exist_ok=True)
    with open(os.path.join(cfg["out"], f"geweke_{model}.tsv"), "w") as f:
        f.write(text)
    sys.stdout.write(text)
    ok = report.max_abs_z() < cfg["geweke_threshold"]
    print(f"max |z| = {report.max_abs_z():.3f} ({'pass' if ok else 'FAIL'} at "
          f"threshold {cfg['geweke_threshold']})")
    return EXIT_OK if ok else EXIT_DIAGNOSTIC


def cmd_compare(cfg, raw=None):
    """Fit and evaluate each model of ``compare_models``; budgets not set explicitly in
    ``raw`` follow each model's default."""
    raw = {} if raw is None else raw
    out = cfg["out"]
    models = [m.strip() for m in cfg["compare_models"].split(",") if m.strip()]
    bad = [m for m in models if m not in MODELS]
    if bad:
        raise UsageError(f"unknown models in compare_models: {bad}")
    write_config(cfg, out)
    table = ["model\ttrain_err\ttest_err\ttest_loglik\tauc"]
    for m in models:
        sub = dict(cfg, model=m, out=os.path.join(out, m))
        sub["n_iters"] = raw.get("n_iters")
        sub["burn_in"] = raw.get("burn_in")
        sub = materialize(sub)
        cmd_fit(sub)
        _, rows = evaluate_run(sub["out"])
        with open(os.path.join(sub["out"], "metrics.tsv"), "w") as f:
            f.write(format_metrics(rows))
        vals = np.array([row[2:] for row in rows], dtype=float)
        table.append("\t".join([m] + [f"{a:.4f}±{b:.4f}"
                                      for a, b in zip(vals.mean(axis=0), vals.std(axis=0))]))
    text = "\n".join(table) + "\n"
    with open(os.path.join(out, "comparison.tsv"), "w") as f:
        f.write(text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "evaluate": cmd_evaluate,
            "diagnose": cmd_diagnose, "compare": cmd_compare}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="ilanet", description="Infinite latent attribute network models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat key = value config file")
        s.add_argument("--seed", type=int, help="master seed (same as seed=N)")
        s.add_argument("--out", help="output directory (same as out=DIR)")
        s.add_argument("overrides", nargs="*", metavar="key=value")
    return p


def resolve_config(args):
    """Return ``(raw, materialised)`` configs; raw holds only what the user set."""
    cfg = {}
    if args.config:
        with open(args.config) as f:
            cfg.update(parse_config_text(f.read(), args.config))
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        if k not in CONFIG_KEYS:
            raise UsageError(f"unknown key {k!r}")
        cfg[k] = _convert(k, v)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    return cfg, materialize(cfg)


def main(argv=None):
    try:
        parser = build_parser()
        args, extra = parser.parse_known_args(argv)
        # key=value overrides may follow options such as --seed
        bad = [x for x in extra if x.startswith("-") or "=" not in x]
        if bad:
            parser.error(f"unrecognized arguments: {' '.join(bad)}")
        args.overrides = list(args.overrides) + extra
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        raw, cfg = resolve_config(args)
        if args.command == "compare":
            return cmd_compare(cfg, raw)
        return COMMANDS[args.command](cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, InvalidArgument, UndefinedMetric, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
