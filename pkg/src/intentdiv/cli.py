"""Command-line entry point.

Subcommands: ``diversify``, ``simulate``, ``sweep-gamma``, ``train-intent`` and
``analyze``. Settings come from built-in defaults, then an optional flat JSON
config file (``--config``), then command-line flags. Every run writes the
resolved settings to ``resolved_config.json`` in its output directory.

Exit codes: 0 success, 1 usage or config error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from .core import DiversifierConfig, PosteriorMode, diversify
from .intent_model import (FEATURE_NAMES, IntentModelParams, TrainConfig,
                           dataset_records, evaluate, feature_correlations,
                           predict_proba, read_dataset, train)
from .io import DataError, load_problem, write_jsonl, write_slate
from .metrics import (SERIES, aggregate, compare_arms, slice_by_predicted_intent,
                      slice_trend_test)
from .simulator import ConfigError, SimConfig, run_experiment

DEFAULT_GAMMAS = (0.005, 0.01, 0.02, 0.04)
RESOLVED_CONFIG = "resolved_config.json"

# sweep CSV column -> experiment metric
SWEEP_COLUMNS = {
    "diversity": "unique_clusters_per_user",
    "novelty": "novel_impressions",
    "relevance": "mean_relevance",
    "dau": "active_users",
}

LOG_COLUMNS = ("day", "session", "user", "hour", "true_intent", "p_true", "pred",
               "novel_impressions", "page_clusters", "relevance", "consumed_item",
               "consumed_novel", "consumed_creator", "consumed_cluster", "scanned_depth",
               "satisfaction") + FEATURE_NAMES

_SIM_KEYS = tuple(k for k in SimConfig().to_dict() if k != "policy")

DEFAULTS = {
    "diversify": {"seed": 0, "out": None, "gamma": 1.0, "posterior_mode": "paper-literal",
                  "tie_break": "lowest-item-id", "epsilon": 1e-12, "k": None},
    "simulate": {**{k: v for k, v in SimConfig().to_dict().items() if k != "policy"},
                 "out": None, "arm": "both", "n_boot": 1000, "n_buckets": 10},
    "sweep-gamma": {**{k: v for k, v in SimConfig().to_dict().items()
                       if k not in ("policy", "gamma")},
                    "out": None, "gammas": list(DEFAULT_GAMMAS), "workers": 1},
    "train-intent": {"seed": 0, "out": None, "learning_rate": 0.5, "epochs": 20,
                     "batch_size": 256, "l2": 0.0, "test_fraction": 0.2, "n_bins": 10,
                     "target_intent": None},
    "analyze": {"seed": 0, "out": None, "n_boot": 1000, "n_buckets": 10},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ helpers

def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _gamma_list(text):
    try:
        return [float(g) for g in text.split(",") if g.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid gamma list {text!r}") from None


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for key, value in doc.items():
        if isinstance(value, dict):
            raise ConfigError(f"config must be flat; key {key!r} holds an object")
    return doc


def _resolve(command, args, overrides):
    """Defaults, then the config file, then command-line flags."""
    settings = dict(DEFAULTS[command])
    file_cfg = _load_config(args.config)
    unknown = sorted(set(file_cfg) - set(settings))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    settings.update(file_cfg)
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if settings["out"] is None:
        raise UsageError(f"{command}: an output directory is required (--out or 'out' in config)")
    return settings


def _outdir(settings):
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return v


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _read_csv(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            return header, list(reader)
    except FileNotFoundError:
        raise DataError(f"missing file {path}") from None
    except StopIteration:
        raise DataError(f"{path} is empty") from None


def _sim_config(settings, **kw):
    d = {k: settings[k] for k in _SIM_KEYS if k in settings}
    d.update(kw)
    return SimConfig.from_dict(d)


# ---------------------------------------------------------------- diversify

def cmd_diversify(args):
    settings = _resolve("diversify", args, {"seed": args.seed, "out": args.out,
                                            "gamma": args.gamma, "posterior_mode": args.mode,
                                            "k": args.k})
    cfg = DiversifierConfig(gamma=float(settings["gamma"]),
                            posterior_mode=settings["posterior_mode"],
                            tie_break=settings["tie_break"],
                            epsilon=float(settings["epsilon"]))
    prior, candidates = load_problem(args.input)
    slate = diversify(prior, candidates, cfg, settings["k"])
    out = _outdir(settings)
    _write_json(out / RESOLVED_CONFIG, {**settings, "input": str(args.input)})
    write_slate(out / "slate.jsonl", prior, candidates, slate)
    print(" ".join(str(j) for j in slate.order))


# ----------------------------------------------------------------- simulate

def _arm_data(report):
    """Everything the comparison and slicing steps need from one arm."""
    pages = report.pages
    if pages is None:
        features = np.zeros((0, len(FEATURE_NAMES)))
        user = novel_imp = novel_cons = np.zeros(0)
    else:
        features, user = pages.features, pages.user
        novel_imp = pages.novel_mask.sum(axis=1).astype(float)
        novel_cons = pages.consumed_novel.astype(float)
    return SimpleNamespace(user_totals=report.user_totals, aggregates=report.aggregates,
                           user=np.asarray(user, dtype=np.int64), features=features,
                           novel_impressions=novel_imp, novel_consumptions=novel_cons,
                           params=report.params)


def _log_rows(pages):
    if pages is None:
        return []
    novel_imp = pages.novel_mask.sum(axis=1)
    cols = [pages.day, pages.session, pages.user, pages.hour, pages.true_intent, pages.p_true,
            pages.pred, novel_imp, pages.page_clusters, pages.relevance, pages.consumed_item,
            pages.consumed_novel.astype(int), pages.consumed_creator, pages.consumed_cluster,
            pages.scanned_depth, pages.satisfaction]
    cols = [np.asarray(c).tolist() for c in cols] + [c.tolist() for c in pages.features.T]
    return zip(*cols)


def _dataset_rows(pages):
    """Labelled examples, one per page with a consumption."""
    from .intent_model import Dataset
    from .simulator import INTENTS

    if pages is None:
        return []
    got = pages.consumed_item >= 0
    y = np.column_stack([pages.consumed_novel[got], ~pages.consumed_novel[got]]).astype(float)
    if not got.any():
        return []
    return dataset_records(Dataset(pages.features[got], y, FEATURE_NAMES, INTENTS))


def _write_arm(out, cfg, report):
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / RESOLVED_CONFIG, cfg.to_dict())
    D = report.n_days
    _write_csv(out / "series.csv", ("arm", "day", "metric", "value"),
               ((report.arm, d, name, report.series[name][d]) for d in range(D) for name in SERIES))
    _write_csv(out / "aggregates.csv", ("metric", "value"), sorted(report.aggregates.items()))
    keys = sorted(report.user_totals)
    n = len(report.user_totals["users"])
    _write_csv(out / "user_totals.csv", ("user",) + tuple(keys),
               ([u] + [report.user_totals[k][u] for k in keys] for u in range(n)))
    _write_csv(out / "logs.csv", LOG_COLUMNS, _log_rows(report.pages))
    write_jsonl(out / "dataset.jsonl", _dataset_rows(report.pages))
    if report.params is not None:
        (out / "intent_params.json").write_text(report.params.to_json() + "\n", encoding="utf-8")


def _analyze_arms(out, t, c, n_boot, n_buckets, seed):
    """compare.csv always; slicing outputs when the treatment carries a model."""
    from .plotting import plot_slices

    rows = compare_arms(t, c, n_boot=n_boot, seed=seed)
    cols = ("metric", "control", "treatment", "delta", "ci_low", "ci_high")
    _write_csv(out / "compare.csv", cols, ([r[k] for k in cols] for r in rows))
    if t.params is None or len(t.user) == 0 or len(c.user) == 0:
        print("no trained intent model in the treatment arm; skipping slicing", file=sys.stderr)
        return
    arms = []
    for arm in (t, c):
        arms.append({"user": arm.user, "prediction": predict_proba(t.params, arm.features)[:, 0],
                     "novel_impressions": arm.novel_impressions,
                     "novel_consumptions": arm.novel_consumptions})
    slices = slice_by_predicted_intent(arms[0], arms[1], n_buckets)
    cols = ("bucket", "pages_treatment", "pages_control", "novel_impressions",
            "novel_consumptions", "novel_ctr")
    _write_csv(out / "slices.csv", cols, ([r[k] for k in cols] for r in slices))
    trend = slice_trend_test(arms[0], arms[1], n_buckets, n_boot=n_boot, seed=seed)
    _write_csv(out / "slice_trend.csv", ("metric", "spearman_rho", "p_one_sided"),
               ((name, rho, p) for name, (rho, p) in trend.items()))
    plot_slices(slices, out / "slices.png")


def cmd_simulate(args):
    settings = _resolve("simulate", args, {"seed": args.seed, "out": args.out,
                                           "gamma": args.gamma, "posterior_mode": args.mode,
                                           "arm": args.arm, "train_epochs": args.epochs})
    if settings["arm"] not in ("control", "treatment", "both"):
        raise ConfigError("arm must be control, treatment or both")
    arms = ("control", "treatment") if settings["arm"] == "both" else (settings["arm"],)
    cfgs = {arm: _sim_config(settings, policy=arm) for arm in arms}
    out = _outdir(settings)
    _write_json(out / RESOLVED_CONFIG, settings)
    data = {}
    for arm in arms:
        report = run_experiment(cfgs[arm])
        _write_arm(out / arm, cfgs[arm], report)
        data[arm] = _arm_data(report)
        print(f"{arm}: " + ", ".join(f"{k}={report.aggregates[k]:.6g}"
                                     for k in SWEEP_COLUMNS.values()))
    if len(arms) == 2:
        _analyze_arms(out, data["treatment"], data["control"], settings["n_boot"],
                      settings["n_buckets"], settings["seed"])


# ------------------------------------------------------------------ analyze

def _load_arm(path):
    path = Path(path)
    header, rows = _read_csv(path / "user_totals.csv")
    try:
        table = np.array(rows, dtype=float).reshape(len(rows), len(header))
    except ValueError:
        raise DataError(f"{path / 'user_totals.csv'} has non-numeric cells") from None
    # contiguous columns so that dot products sum in the same order as in memory
    user_totals = {k: np.ascontiguousarray(table[:, i]) for i, k in enumerate(header)
                   if k != "user"}
    header, rows = _read_csv(path / "logs.csv")
    if tuple(header) != LOG_COLUMNS:
        raise DataError(f"{path / 'logs.csv'} does not have the expected columns")
    idx = {k: i for i, k in enumerate(header)}
    try:
        table = np.array([[float(v) if v else math.nan for v in r] for r in rows],
                         dtype=float).reshape(len(rows), len(header))
    except ValueError:
        raise DataError(f"{path / 'logs.csv'} has non-numeric cells") from None
    params = None
    pfile = path / "intent_params.json"
    if pfile.exists():
        try:
            params = IntentModelParams.from_json(pfile.read_text(encoding="utf-8"))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{pfile}: {exc}") from None
    return SimpleNamespace(
        user_totals=user_totals, aggregates=aggregate(user_totals),
        user=table[:, idx["user"]].astype(np.int64),
        features=table[:, [idx[f] for f in FEATURE_NAMES]],
        novel_impressions=table[:, idx["novel_impressions"]],
        novel_consumptions=table[:, idx["consumed_novel"]], params=params)


def cmd_analyze(args):
    settings = _resolve("analyze", args, {"seed": args.seed, "out": args.out})
    t, c = _load_arm(args.treatment), _load_arm(args.control)
    if t.params is None:
        raise DataError(f"{args.treatment} has no intent_params.json (not a treatment arm?)")
    out = _outdir(settings)
    _write_json(out / RESOLVED_CONFIG, {**settings, "treatment": str(args.treatment),
                                        "control": str(args.control)})
    _analyze_arms(out, t, c, settings["n_boot"], settings["n_buckets"], settings["seed"])


# -------------------------------------------------------------- sweep-gamma

def _sweep_point(cfg_dict):
    report = run_experiment(SimConfig.from_dict(cfg_dict))
    return report.aggregates


def cmd_sweep_gamma(args):
    settings = _resolve("sweep-gamma", args, {"seed": args.seed, "out": args.out,
                                              "gammas": args.gamma, "posterior_mode": args.mode,
                                              "train_epochs": args.epochs,
                                              "workers": args.workers})
    gammas = settings["gammas"]
    if not isinstance(gammas, list) or not gammas:
        raise ConfigError("gammas must be a non-empty list")
    try:
        gammas = sorted(float(g) for g in gammas)
    except (TypeError, ValueError):
        raise ConfigError("gammas must be numbers") from None
    if not all(g > 0 and math.isfinite(g) for g in gammas):
        raise ConfigError("every gamma must be positive and finite")
    if len(set(gammas)) != len(gammas):
        raise ConfigError("gammas must be distinct")
    if not isinstance(settings["workers"], int) or settings["workers"] < 1:
        raise ConfigError("workers must be a positive integer")
    settings["gammas"] = gammas
    points = [("control", _sim_config(settings, policy="control"))]
    points += [(f"gamma_{g:g}", _sim_config(settings, policy="treatment", gamma=g)) for g in gammas]
    out = _outdir(settings)
    _write_json(out / RESOLVED_CONFIG, settings)
    dicts = [cfg.to_dict() for _, cfg in points]
    if settings["workers"] > 1:
        with ProcessPoolExecutor(max_workers=settings["workers"]) as pool:
            results = list(pool.map(_sweep_point, dicts))
    else:
        results = [_sweep_point(d) for d in dicts]
    for (name, cfg), agg in zip(points, results):
        (out / name).mkdir(exist_ok=True)
        _write_json(out / name / RESOLVED_CONFIG, cfg.to_dict())
        _write_csv(out / name / "aggregates.csv", ("metric", "value"), sorted(agg.items()))
    control = results[0]
    rows = []
    for g, agg in zip(gammas, results[1:]):
        row = {"gamma": g}
        for col, metric in SWEEP_COLUMNS.items():
            row[col] = agg[metric]
            base = control[metric]
            row[f"{col}_delta"] = (agg[metric] / base - 1.0) if base and agg[metric] is not None else None
        rows.append(row)
    cols = ("gamma",) + tuple(SWEEP_COLUMNS) + tuple(f"{c}_delta" for c in SWEEP_COLUMNS)
    _write_csv(out / "sweep.csv", cols, ([r[k] for k in cols] for r in rows))
    from .plotting import plot_sweep
    plot_sweep(rows, out / "sweep.png")
    for r in rows:
        print(f"gamma={r['gamma']:g}: " + ", ".join(
            f"{c}={r[c + '_delta']:+.4%}" if r[c + "_delta"] is not None else f"{c}=n/a"
            for c in SWEEP_COLUMNS))


# ------------------------------------------------------------- train-intent

def cmd_train_intent(args):
    settings = _resolve("train-intent", args, {"seed": args.seed, "out": args.out,
                                               "epochs": args.epochs})
    tf = settings["test_fraction"]
    if not 0.0 <= tf < 1.0:
        raise ConfigError("test_fraction must lie in [0, 1)")
    train_cfg = TrainConfig(float(settings["learning_rate"]), int(settings["epochs"]),
                            int(settings["batch_size"]), float(settings["l2"]),
                            int(settings["seed"]))
    data = read_dataset(args.dataset)
    target = settings["target_intent"] or data.intents[0]
    if target not in data.intents:
        raise ConfigError(f"target_intent {target!r} is not one of {list(data.intents)}")
    perm = np.random.default_rng(settings["seed"]).permutation(len(data))
    n_test = int(math.ceil(tf * len(data)))
    if n_test >= len(data):
        raise DataError("dataset too small for the requested test_fraction")
    test = data.subset(np.sort(perm[:n_test])) if n_test else data
    train_set = data.subset(np.sort(perm[n_test:]))
    params = train(train_set, train_cfg)
    ev = evaluate(params, test, int(settings["n_bins"]))
    out = _outdir(settings)
    _write_json(out / RESOLVED_CONFIG, {**settings, "dataset": str(args.dataset),
                                        "target_intent": target})
    (out / "intent_params.json").write_text(params.to_json() + "\n", encoding="utf-8")
    _write_csv(out / "evaluation.csv",
               ("intent", "auc", "calibration_ratio", "log_loss", "n_train", "n_test"),
               ((v, ev["auc_per_intent"][v], ev["calibration_ratio_per_intent"][v],
                 ev["log_loss"], len(train_set), len(test)) for v in data.intents))
    _write_csv(out / "reliability.csv",
               ("intent", "bin", "lo", "hi", "count", "mean_prediction", "label_rate"),
               ((v, b, *row) for v in data.intents for b, row in enumerate(ev["reliability"][v])))
    k = data.intents.index(target)
    corr = feature_correlations(test.X, predict_proba(params, test.X)[:, k], data.feature_names)
    _write_csv(out / "correlations.csv", ("feature", "r"), corr)
    from .plotting import plot_reliability
    plot_reliability(ev["reliability"], out / "reliability.png")
    for v in data.intents:
        auc_v, cal_v = ev["auc_per_intent"][v], ev["calibration_ratio_per_intent"][v]
        print(f"{v}: auc={'n/a' if auc_v is None else f'{auc_v:.4f}'} "
              f"calibration={'n/a' if cal_v is None else f'{cal_v:.4f}'}")


# ------------------------------------------------------------------- parser

def build_parser():
    p = _Parser(prog="intentdiv", description="Intent-aware slate diversification toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="flat JSON settings file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")

    modes = [m.value for m in PosteriorMode]

    sp = sub.add_parser("diversify", help="rank one candidate file")
    common(sp)
    sp.add_argument("input", help="JSONL with a prior record and candidate records")
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--mode", choices=modes)
    sp.add_argument("--k", type=_positive_int, help="stop after k positions")
    sp.set_defaults(func=cmd_diversify)

    sp = sub.add_parser("simulate", help="run the A/B simulation")
    common(sp)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--mode", choices=modes)
    sp.add_argument("--arm", choices=("control", "treatment", "both"))
    sp.add_argument("--epochs", type=_positive_int, help="intent-model epochs per retrain")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep-gamma", help="paired runs over a grid of gamma values")
    common(sp)
    sp.add_argument("--gamma", type=_gamma_list, help="comma-separated gamma grid")
    sp.add_argument("--mode", choices=modes)
    sp.add_argument("--epochs", type=_positive_int, help="intent-model epochs per retrain")
    sp.add_argument("--workers", type=_positive_int, help="parallel sweep points")
    sp.set_defaults(func=cmd_sweep_gamma)

    sp = sub.add_parser("train-intent", help="train and evaluate the intent model")
    common(sp)
    sp.add_argument("dataset", help="JSONL of {'x': {...}, 'y': {...}} examples")
    sp.add_argument("--epochs", type=_positive_int)
    sp.set_defaults(func=cmd_train_intent)

    sp = sub.add_parser("analyze", help="compare two simulated arms and slice by intent")
    common(sp)
    sp.add_argument("--treatment", required=True, help="treatment arm directory")
    sp.add_argument("--control", required=True, help="control arm directory")
    sp.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"data error: {exc.filename}: no such file", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
