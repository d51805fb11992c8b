"""Command-line interface: simulate, fit, predict, cv and evaluate.

Every subcommand writes its artifacts deterministically; errors are reported
as one JSON line on stderr with a nonzero exit status.
"""
import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import model as mdl
from . import simdata
from .data import MultiviewDataset
from .errors import (
    GroupMismatch,
    IncompleteGroups,
    InvalidSpec,
    OverlappingGroups,
    ParseError,
    RKMVError,
    RowCountMismatch,
)
from .optimizer import FitConfig
from .outcome import CATEGORICAL, CONTINUOUS, KINDS
from .prox import GROUP, SIMPLEX, GroupStructure, PenaltySpec

logger = logging.getLogger(__name__)

# flag name -> default; the config file uses the same names with underscores
DEFAULTS = {
    "view": [],
    "outcome": None,
    "outcome_kind": None,
    "groups": [],
    "M": None,
    "r": "3",
    "lambda": 1.0,
    "rho": [],
    "rho_relative": False,
    "eta": 0.5,
    "penalty": SIMPLEX,
    "folds": 3,
    "search": "grid",
    "seed": 0,
    "model": None,
    "out": None,
    "no_standardize": False,
    "max_outer_iter": 200,
    "outer_tol": 1e-5,
    "fista_max_iter": 100,
    "truth": None,
    "report_time": False,
    "scenario": simdata.BINARY,
    "n1": 500,
    "n2": 200,
    "n": 500,
    "p": 50,
}


# ---------------------------------------------------------------------------
# ingestion


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ParseError(f"{path}: empty file", row=1, col=None)
    return rows[0], rows[1:]


def read_matrix(path):
    """Numeric CSV with a header row; returns (names, matrix)."""
    header, rows = _read_rows(path)
    data = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {i + 2} has {len(row)} cells, header has {len(header)}", row=i + 2)
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {i + 2} column {j + 1}: cannot parse {cell!r}", row=i + 2, col=j + 1) from None
    return [h.strip() for h in header], data


def _label_key(label):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def read_outcome(path, kind):
    """Outcome CSV; categorical labels are mapped to 1..K in sorted order."""
    if kind != CATEGORICAL:
        _, y = read_matrix(path)
        return (y[:, 0] if kind == CONTINUOUS else y), None
    header, rows = _read_rows(path)
    labels = []
    for i, row in enumerate(rows):
        if len(row) != 1:
            raise ParseError(f"{path}: row {i + 2} should hold one label", row=i + 2)
        labels.append(row[0].strip())
    names = sorted(set(labels), key=_label_key)
    code = {name: k + 1 for k, name in enumerate(names)}
    return np.array([code[label] for label in labels], dtype=np.int64), names


def read_groups(path, variable_names):
    """Group file (variable_name, group_id) covering every variable exactly once."""
    _, rows = _read_rows(path)
    index = {name: j for j, name in enumerate(variable_names)}
    group_of = {}
    for i, row in enumerate(rows):
        if len(row) != 2:
            raise ParseError(f"{path}: row {i + 2} should be variable_name,group_id", row=i + 2)
        name, group = row[0].strip(), row[1].strip()
        if name not in index:
            raise GroupMismatch(f"{path}: unknown variable {name!r}")
        if name in group_of:
            raise OverlappingGroups(f"{path}: variable {name!r} is assigned twice")
        group_of[name] = group
    missing = [name for name in variable_names if name not in group_of]
    if missing:
        raise IncompleteGroups(f"{path}: {len(missing)} variables have no group, e.g. {missing[0]!r}")
    labels = sorted(set(group_of.values()), key=_label_key)
    ids = {g: k for k, g in enumerate(labels)}
    return np.array([ids[group_of[name]] for name in variable_names])


def parse_group_args(values, D):
    groups = [None] * D
    for value in values:
        head, sep, path = value.partition(":")
        if not sep or not head.isdigit() or not 1 <= int(head) <= D:
            raise InvalidSpec(f"--groups expects <view_index>:<path> with index in 1..{D}, got {value!r}")
        groups[int(head) - 1] = path
    return groups


def ingest(view_paths, outcome_path=None, kind=None, group_paths=None):
    """Read views, an optional outcome and optional group files into a dataset."""
    if len(view_paths) < 2:
        raise InvalidSpec("at least two --view files are required")
    if len(set(map(os.path.abspath, view_paths))) != len(view_paths):
        raise InvalidSpec("view paths must be distinct")
    names, views = [], []
    for path in view_paths:
        header, X = read_matrix(path)
        names.append(header)
        views.append(X)
    for path, X in zip(view_paths[1:], views[1:]):
        if X.shape[0] != views[0].shape[0]:
            raise RowCountMismatch(
                f"{path} has {X.shape[0]} rows but {view_paths[0]} has {views[0].shape[0]}"
            )
    label_names = None
    if outcome_path is None:
        y, kind = np.zeros(views[0].shape[0]), CONTINUOUS
    else:
        y, label_names = read_outcome(outcome_path, kind)
        if y.shape[0] != views[0].shape[0]:
            raise RowCountMismatch(
                f"{outcome_path} has {y.shape[0]} rows but {view_paths[0]} has {views[0].shape[0]}"
            )
    groups = [
        None if path is None else read_groups(path, header)
        for path, header in zip(group_paths or [None] * len(views), names)
    ]
    return MultiviewDataset(
        views=views,
        y=y,
        kind=kind,
        groups=groups,
        view_names=list(view_paths),
        variable_names=names,
        label_names=label_names,
    )


# ---------------------------------------------------------------------------
# configuration


def parse_search(value):
    if value == "grid":
        return mdl.GRID
    kind, sep, k = value.partition(":")
    if kind != "random" or not sep or not k.isdigit():
        raise InvalidSpec(f"--search expects grid or random:<k>, got {value!r}")
    return (mdl.RANDOM, int(k))


def rho_values(options, D):
    """Per-view rho lists from repeated --rho values (one shared list if given once)."""
    raw = options["rho"]
    if isinstance(raw, (int, float)):
        raw = [raw]
    grids = [[float(v) for v in str(item).split(",") if v.strip()] for item in raw]
    if not grids:
        return None
    if len(grids) == 1:
        grids = grids * D
    if len(grids) != D:
        raise InvalidSpec(f"--rho given {len(grids)} times for {D} views")
    return grids


def build_config(options, data):
    D = data.D
    M = options["M"]
    M = mdl.choose_M(data.n) if M is None else int(M)
    r = str(options["r"])
    views = data.views
    if r == "auto":
        if not options["no_standardize"]:
            centers, scales = mdl.standardization(views)
            views = [(X - c) / s for X, c, s in zip(views, centers, scales)]
        r = mdl.select_components(views, seed=options["seed"])
    else:
        r = int(r)
    config = FitConfig(
        M=M,
        r=r,
        lam=float(options["lambda"]),
        max_outer_iter=int(options["max_outer_iter"]),
        outer_tol=float(options["outer_tol"]),
        fista_max_iter=int(options["fista_max_iter"]),
        seed=int(options["seed"]),
    )
    mode = options["penalty"]
    if mode not in (SIMPLEX, GROUP):
        raise InvalidSpec(f"--penalty must be simplex or group, got {mode!r}")
    if mode == SIMPLEX:
        return replace(config, penalty=PenaltySpec(SIMPLEX))
    grids = rho_values(options, D) or [[0.0]] * D
    if options["rho_relative"]:
        grids = mdl.relative_rho_grid(data, config, [1.0], standardize=not options["no_standardize"])
        fractions = rho_values(options, D) or [[0.0]] * D
        grids = [[f * g[0] for f in fr] for fr, g in zip(fractions, grids)]
    if any(len(g) != 1 for g in grids):
        raise InvalidSpec("fit takes a single rho per view")
    return replace(config, penalty=mdl.penalties_for([g[0] for g in grids], data, float(options["eta"])))


def cv_plan(options, data, config):
    grids = rho_values(options, data.D)
    if grids is None:
        raise InvalidSpec("cv needs --rho candidates")
    if options["rho_relative"]:
        tops = mdl.relative_rho_grid(data, config, [1.0], standardize=not options["no_standardize"])
        grids = [[f * top[0] for f in fr] for fr, top in zip(grids, tops)]
    return mdl.CvPlan(
        rho_grid=grids,
        eta=float(options["eta"]),
        folds=int(options["folds"]),
        search=parse_search(options["search"]),
        seed=int(options["seed"]),
    )


def merge_options(args):
    """Defaults, then the JSON config file, then explicit flags."""
    options = dict(DEFAULTS)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            from_file = json.load(fh)
        unknown = set(from_file) - set(DEFAULTS)
        if unknown:
            raise InvalidSpec(f"unknown config keys: {sorted(unknown)}")
        options.update(from_file)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None and value != [] and value is not False:
            options[key] = value
    return options


def _require(options, *keys):
    for key in keys:
        if not options[key]:
            raise InvalidSpec(f"--{key.replace('_', '-')} is required")


def _dataset(options, with_outcome=True):
    _require(options, "view")
    kind = options["outcome_kind"]
    if with_outcome:
        _require(options, "outcome", "outcome_kind")
        if kind not in KINDS:
            raise InvalidSpec(f"--outcome-kind must be one of {KINDS}")
    groups = parse_group_args(options["groups"], len(options["view"]))
    return ingest(options["view"], options["outcome"] if with_outcome else None, kind, groups)


# ---------------------------------------------------------------------------
# output helpers


def _fmt(value):
    return repr(float(value))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_json(path, document):
    text = json.dumps(document, sort_keys=True, indent=1) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# subcommands


def run_simulate(options):
    _require(options, "out")
    scenario = options["scenario"]
    spec = simdata.SimSpec(
        scenario=scenario, n1=int(options["n1"]), n2=int(options["n2"]), n=int(options["n"]),
        p=int(options["p"]), seed=int(options["seed"]),
    )
    data = simdata.gen_binary(spec) if scenario == simdata.BINARY else simdata.gen_continuous(spec)
    out = options["out"]
    os.makedirs(out, exist_ok=True)
    for d, X in enumerate(data.views, start=1):
        names = [f"v{d}_x{j + 1}" for j in range(X.shape[1])]
        write_csv(os.path.join(out, f"view{d}.csv"), names, [[_fmt(v) for v in row] for row in X])
        write_csv(
            os.path.join(out, f"groups{d}.csv"),
            ["variable_name", "group_id"],
            [[name, "signal" if g == 0 else "noise"] for name, g in zip(names, data.groups[d - 1])],
        )
    if data.is_categorical:
        rows = [[str(int(v))] for v in data.y]
    else:
        rows = [[_fmt(v)] for v in data.y]
    write_csv(os.path.join(out, "outcome.csv"), ["y"], rows)
    truth = {"scenario": scenario, "spec": data.meta["spec"], "signal": [data.meta["signal"]] * data.D}
    if not data.is_categorical:
        truth["theta"] = [float(v) for v in data.meta["theta"]]
    write_json(os.path.join(out, "truth.json"), truth)
    return 0


def run_fit(options):
    _require(options, "model")
    data = _dataset(options)
    config = build_config(options, data)
    fitted = mdl.fit_model(data, config, standardize=not options["no_standardize"])
    mdl.save_model(fitted, options["model"])
    return 0


def _prediction_rows(fitted, pred):
    if fitted.kind == CATEGORICAL:
        names = fitted.label_names
        return ["y"], [[names[k - 1] if names else str(int(k))] for k in pred]
    pred = np.atleast_2d(pred.T).T
    header = ["y"] if pred.shape[1] == 1 else [f"y{j + 1}" for j in range(pred.shape[1])]
    return header, [[_fmt(v) for v in row] for row in pred]


def run_predict(options):
    _require(options, "model", "out", "view")
    fitted = mdl.load_model(options["model"])
    data = _dataset(options, with_outcome=False)
    pred = mdl.predict(data.views, fitted)
    header, rows = _prediction_rows(fitted, pred)
    write_csv(options["out"], header, rows)
    return 0


def run_cv(options):
    _require(options, "out")
    data = _dataset(options)
    options = dict(options, penalty=GROUP)
    config = build_config(dict(options, rho=[0.0], rho_relative=False), data)
    plan = cv_plan(options, data, config)
    best, table = mdl.cross_validate(data, plan, config, standardize=not options["no_standardize"])
    header = [f"rho_view{d + 1}" for d in range(data.D)]
    header += [f"fold{k + 1}" for k in range(plan.folds)] + ["mean", "status", "message"]
    rows = []
    for row in table:
        scores = [_fmt(s) for s in row.fold_scores] + [""] * (plan.folds - len(row.fold_scores))
        mean = "" if row.failed else _fmt(row.mean)
        status = "failed" if row.failed else ("best" if row.rho == best else "ok")
        rows.append([_fmt(r) for r in row.rho] + scores + [mean, status, row.message])
    write_csv(options["out"], header, rows)
    return 0


def run_evaluate(options):
    _require(options, "model")
    fitted = mdl.load_model(options["model"])
    start = time.perf_counter()
    data = _dataset(dict(options, outcome_kind=fitted.kind))
    if fitted.kind == CATEGORICAL and fitted.label_names:
        # re-code test labels with the training label order
        names = data.label_names
        code = {name: k + 1 for k, name in enumerate(fitted.label_names)}
        unseen = set(names) - set(code)
        if unseen:
            raise InvalidSpec(f"labels {sorted(unseen)} were not seen in training")
        y = np.array([code[names[k - 1]] for k in data.y])
    else:
        y = data.y
    pred = mdl.predict(data.views, fitted)
    error = mdl.prediction_error(fitted, pred, y)
    report = {
        "kind": fitted.kind,
        "n_test": int(data.n),
        "objective_trace": fitted.objective_trace,
        "selected_counts": [],
        "selection": None,
    }
    report["classification_error" if fitted.kind == CATEGORICAL else "mse"] = error
    rules = fitted.selection_rules
    for gamma, rule in zip(fitted.gammas, rules):
        chosen, _ = simdata.selected_variables(gamma, rule)
        report["selected_counts"].append(int(chosen.size))
    if options["truth"]:
        with open(options["truth"], encoding="utf-8") as fh:
            truth = json.load(fh)
        report["selection"] = []
        for gamma, rule, signal in zip(fitted.gammas, rules, truth["signal"]):
            sel = simdata.selection_metrics(gamma, signal, rule)
            report["selection"].append(
                {"tpr": sel.tpr, "fpr": sel.fpr, "selected": sel.selected, "threshold": sel.threshold, "rule": rule}
            )
    if options["report_time"]:
        report["wall_time_seconds"] = time.perf_counter() - start
    write_json(options["out"], report)
    return 0


COMMANDS = {
    "simulate": run_simulate,
    "fit": run_fit,
    "predict": run_predict,
    "cv": run_cv,
    "evaluate": run_evaluate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="rkmv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with option defaults")
        p.add_argument("--view", action="append", default=[], help="view CSV (repeat, in order)")
        p.add_argument("--outcome")
        p.add_argument("--outcome-kind", choices=KINDS)
        p.add_argument("--groups", action="append", default=[], metavar="INDEX:PATH")
        p.add_argument("--M", type=int)
        p.add_argument("--r", help="latent dimension or 'auto'")
        p.add_argument("--lambda", type=float)
        p.add_argument("--rho", action="append", default=[], help="rho per view (comma list of candidates for cv)")
        p.add_argument("--rho-relative", action="store_true", help="read --rho as fractions of each view's rho_max")
        p.add_argument("--eta", type=float)
        p.add_argument("--penalty", choices=(SIMPLEX, GROUP))
        p.add_argument("--folds", type=int)
        p.add_argument("--search", help="grid or random:<k>")
        p.add_argument("--seed", type=int)
        p.add_argument("--model")
        p.add_argument("--out")
        p.add_argument("--no-standardize", action="store_true")
        p.add_argument("--max-outer-iter", type=int)
        p.add_argument("--outer-tol", type=float)
        p.add_argument("--fista-max-iter", type=int)
        p.add_argument("--truth", help="simulation truth JSON for selection metrics")
        p.add_argument("--report-time", action="store_true", help="add wall time to the evaluate report")
        p.add_argument("--scenario", choices=(simdata.BINARY, simdata.CONTINUOUS))
        p.add_argument("--n1", type=int)
        p.add_argument("--n2", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--p", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        options = merge_options(args)
        return COMMANDS[args.command](options)
    except (RKMVError, OSError, json.JSONDecodeError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ParseError):
            record.update(row=exc.row, col=exc.col)
        sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
