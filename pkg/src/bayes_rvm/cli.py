"""Command-line interface: ``simulate``, ``train``, ``evaluate`` and ``experiment``.

Every command writes a JSON manifest holding its full configuration. Feeding
that manifest back through ``--config`` repeats the run and reproduces the
outputs byte for byte. Plain ``key=value`` files are accepted too; flags on
the command line override values from either kind of file.
"""
import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .algorithms import (ALGORITHMS, GENERIC, HIERARCHICAL, TrainConfig, evaluate_fit,
                         train)
from .data import Dataset, SimSpec, imbalance_index, load_csv, simulate_gaussian
from .errors import ConfigurationError, InputError, ParseError, RVMError
from .evaluation import (GLOBAL, POSITIVE, Scenario, compute_metrics, run_repeats,
                         summarize_table)
from .kernel import FIXED, MEDIAN_HEURISTIC, KernelConfig, build_test_design, build_train_design
from .model import GenericHyper, HierHyper, predict
from .samplers import RngStream

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MODEL_MAGIC = "# bayes-rvm model"
# settings that locate files rather than define the run
_NOT_RECORDED = {"command", "config", "out_dir", "verbose"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _fmt(x):
    return repr(float(x))


def _csv_text(rows, header=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def dataset_csv(d: Dataset):
    return _csv_text([[_fmt(v) for v in x] + [int(label)] for x, label in zip(d.X, d.y)])


class _Outputs:
    """Collects output files, then writes them atomically and records hashes."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.files = {}

    def add(self, name, text):
        self.files[name] = text

    def commit(self, manifest_name, manifest):
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {self.out_dir}: {exc}") from exc
        manifest["outputs"] = {k: _sha256(v) for k, v in sorted(self.files.items())}
        self.files[manifest_name] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        for name, text in self.files.items():
            write_atomic(os.path.join(self.out_dir, name), text)
        return [os.path.join(self.out_dir, n) for n in self.files]


def _manifest(args, **results):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_RECORDED}
    return {"format_version": FORMAT_VERSION, "package_version": __version__,
            "command": args.command, "config": cfg, "results": results}


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------


def read_config(path):
    """Key/value pairs from a JSON manifest or a flat ``key=value`` file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        return data.get("config", data), data.get("command")
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key=value", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values, None


def _config_argv(values, sub):
    """Translate config values into flags understood by subparser ``sub``."""
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    argv = []
    for key, value in values.items():
        if key in _NOT_RECORDED:
            continue
        action = actions.get(key)
        if action is None:
            raise ConfigurationError(f"unknown configuration key {key!r}")
        flag = action.option_strings[0]
        if isinstance(action, argparse.BooleanOptionalAction):
            on = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
            argv.append(flag if on else "--no-" + flag[2:])
        elif value is None:
            continue
        else:
            argv += [flag, str(value)]
    return argv


# ---------------------------------------------------------------------------
# arguments
# ---------------------------------------------------------------------------


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.add_argument("--config", help="key=value file or a manifest from an earlier run")
    p.add_argument("-v", "--verbose", action="store_true")


def _data_flags(p):
    p.add_argument("--label-column", type=int, default=-1,
                   help="0-based label column; negative counts from the end")
    p.add_argument("--positive-label", default="1")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--header", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=False)


def _train_flags(p, multi=False):
    if multi:
        p.add_argument("--algorithms", default=f"{GENERIC},{HIERARCHICAL}",
                       help="comma-separated list from " + ", ".join(ALGORITHMS))
    else:
        p.add_argument("--algorithm", choices=ALGORITHMS, default=GENERIC)
    p.add_argument("--iterations", type=int, default=5000)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0 / 999.0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--d", type=float, default=1.0 / 999.0)
    p.add_argument("--gamma", type=float, default=None,
                   help="fixed RBF bandwidth; omit for the median heuristic")
    p.add_argument("--gamma-mode", choices=("median", FIXED), default=None)


def build_parser():
    parser = _Parser(prog="bayes-rvm", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = subs.add_parser("simulate", help="draw training and test sets from two Gaussians")
    _common(p)
    p.add_argument("--n-pos", type=int, default=3)
    p.add_argument("--n-neg", type=int, default=30)
    p.add_argument("--test-n-pos", type=int, default=None, help="default: --n-pos")
    p.add_argument("--test-n-neg", type=int, default=None, help="default: --n-neg")

    p = subs.add_parser("train", help="fit a model to a CSV data set")
    _common(p)
    p.add_argument("--data", required=False, help="training CSV")
    _data_flags(p)
    _train_flags(p)

    p = subs.add_parser("evaluate", help="predict a CSV data set with a fitted model")
    _common(p)
    p.add_argument("--model", required=False, help="model file written by train")
    p.add_argument("--data", required=False, help="test CSV")
    _data_flags(p)

    p = subs.add_parser("experiment", help="repeated simulation study")
    _common(p)
    p.add_argument("--b-values", default="1,10",
                   help="comma-separated imbalance indexes")
    p.add_argument("--n-neg", type=int, default=30, help="negatives in each training set")
    p.add_argument("--repeats", type=int, default=20)
    _train_flags(p, multi=True)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values, command = read_config(args.config)
        if command is not None and command != args.command:
            raise ConfigurationError(
                f"manifest is for {command!r}, not {args.command!r}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        # file values first so that explicit flags win
        args = parser.parse_args([args.command] + _config_argv(values, sub) + argv[1:])
    return args


def _kernel_config(args):
    mode = args.gamma_mode or (FIXED if args.gamma is not None else "median")
    if mode == FIXED:
        if args.gamma is None:
            raise ConfigurationError("--gamma-mode fixed needs --gamma")
        return KernelConfig(args.gamma, FIXED)
    return KernelConfig(bandwidth_mode=MEDIAN_HEURISTIC)


def _train_config(args, stream):
    return TrainConfig(iterations=args.iterations, burn_in=args.burn_in, thin=args.thin,
                       generic=GenericHyper(args.a, args.b),
                       hier=HierHyper(c=args.c, d=args.d), rng=stream)


def _load(args, path):
    if not path:
        raise ConfigurationError("--data is required")
    return load_csv(path, args.label_column, args.positive_label, args.delimiter,
                    args.header, args.standardize)


# ---------------------------------------------------------------------------
# model file
# ---------------------------------------------------------------------------


def model_text(fit, kcfg: KernelConfig, X_train, standardize):
    header = [MODEL_MAGIC, f"format_version={FORMAT_VERSION}",
              f"algorithm={fit.algorithm_id}", f"gamma={_fmt(kcfg.gamma)}",
              f"n_train={X_train.shape[0]}", f"n_features={X_train.shape[1]}",
              f"standardized={str(bool(standardize)).lower()}"]
    parts = ["\n".join(header) + "\n", "[w_hat]\n",
             _csv_text([[_fmt(v)] for v in fit.w_hat]),
             "[train_features]\n", _csv_text([[_fmt(v) for v in x] for x in X_train])]
    return "".join(parts)


def read_model(path):
    """Returns ``(meta, w_hat, X_train)`` from a model file."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise ParseError("not a model file", 1)
    meta, blocks, current = {}, {}, None
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            blocks[current] = []
        elif current is None:
            if "=" not in line:
                raise ParseError("expected key=value in model header", lineno)
            key, value = line.split("=", 1)
            meta[key] = value
        elif line:
            try:
                blocks[current].append([float(v) for v in line.split(",")])
            except ValueError:
                raise ParseError("non-numeric value in model block", lineno) from None
    if int(meta.get("format_version", -1)) != FORMAT_VERSION:
        raise ParseError(f"unsupported model format {meta.get('format_version')!r}", 2)
    try:
        w_hat = np.array(blocks["w_hat"], dtype=float).ravel()
        X = np.array(blocks["train_features"], dtype=float)
    except KeyError as exc:
        raise ParseError(f"model file lacks block {exc}", len(lines)) from None
    if X.shape != (int(meta["n_train"]), int(meta["n_features"])) or \
            w_hat.shape != (X.shape[0] + 1,):
        raise ParseError("model blocks do not match the header sizes", len(lines))
    return meta, w_hat, X


def trace_csv(trace):
    m = trace.w_history.shape[1]
    header = [f"w{i}" for i in range(m)] + [f"eta{i}" for i in range(m)]
    cols = [trace.w_history, trace.eta_history]
    if trace.hyper_history is not None:
        header += ["rho", "mu", "tau2"]
        cols.append(trace.hyper_history)
    data = np.hstack(cols)
    return _csv_text([[_fmt(v) for v in row] for row in data], header)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    root = RngStream(args.seed)
    spec = SimSpec(n_pos=args.n_pos, n_neg=args.n_neg)
    test_spec = spec.with_counts(
        args.n_pos if args.test_n_pos is None else args.test_n_pos,
        args.n_neg if args.test_n_neg is None else args.test_n_neg)
    train_set = simulate_gaussian(spec, root.child(0), "train")
    test_set = simulate_gaussian(test_spec, root.child(1), "test")
    out = _Outputs(args.out_dir)
    out.add("train.csv", dataset_csv(train_set))
    out.add("test.csv", dataset_csv(test_set))
    b = imbalance_index(train_set) if train_set.n_pos else None
    return out.commit("simulate.json", _manifest(
        args, b=b, n_train=len(train_set), n_test=len(test_set),
        degenerate=train_set.degenerate))


def cmd_train(args):
    d = _load(args, args.data)
    kcfg = _kernel_config(args).resolve(d.X) if len(d) > 1 else KernelConfig(1.0, FIXED)
    phi = build_train_design(d.X, kcfg)
    fit = train(args.algorithm, phi, d.y, _train_config(args, RngStream(args.seed)))
    labels, _ = evaluate_fit(fit, phi, d.y)
    results = {"gamma": kcfg.gamma, "n_train": len(d),
               "r_g_train": compute_metrics(d.y, labels, GLOBAL),
               "r_p_train": compute_metrics(d.y, labels, POSITIVE) if d.n_pos else None,
               "clamp_count": fit.trace.clamp_count, "ridge_count": fit.trace.ridge_count}
    if fit.trace.converged is not None:
        results["converged"] = fit.trace.converged
        results["stationarity"] = fit.trace.stationarity
    out = _Outputs(args.out_dir)
    out.add("model.txt", model_text(fit, kcfg, d.X, args.standardize))
    out.add("trace.csv", trace_csv(fit.trace))
    log.info("training accuracy %.4f", results["r_g_train"])
    return out.commit("train.json", _manifest(args, **results))


def cmd_evaluate(args):
    if not args.model:
        raise ConfigurationError("--model is required")
    meta, w_hat, X_train = read_model(args.model)
    d = _load(args, args.data)
    if d.X.shape[1] != X_train.shape[1]:
        raise InputError(f"test data has {d.X.shape[1]} features, model expects "
                         f"{X_train.shape[1]}")
    kcfg = KernelConfig(float(meta["gamma"]), FIXED)
    labels, prob = predict(w_hat, build_test_design(d.X, X_train, kcfg))
    r_g = compute_metrics(d.y, labels, GLOBAL)
    r_p = compute_metrics(d.y, labels, POSITIVE) if d.n_pos else None
    out = _Outputs(args.out_dir)
    out.add("predictions.csv", _csv_text(
        [[i, int(t), int(p), _fmt(q)] for i, (t, p, q) in enumerate(zip(d.y, labels, prob))],
        ["index", "label", "predicted", "probability"]))
    out.add("metrics.csv", _csv_text(
        [["r_g", "" if r_g is None else _fmt(r_g), len(d), d.n_pos],
         ["r_p", "" if r_p is None else _fmt(r_p), len(d), d.n_pos]],
        ["metric", "value", "n", "n_p"]))
    return out.commit("evaluate.json", _manifest(args, r_g=r_g, r_p=r_p, n=len(d),
                                                 n_p=d.n_pos))


def _parse_list(text, cast, what):
    try:
        items = [cast(s.strip()) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise ConfigurationError(f"could not parse {what} list {text!r}") from None
    if not items:
        raise ConfigurationError(f"empty {what} list")
    return items


def cmd_experiment(args):
    if args.repeats < 1:
        raise ConfigurationError("--repeats must be at least 1")
    algorithms = _parse_list(args.algorithms, str, "algorithm")
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {a!r}")
    b_values = _parse_list(args.b_values, float, "b")
    root = RngStream(args.seed)
    kcfg = _kernel_config(args)
    cfg = _train_config(args, root)
    rows = []
    for i, b in enumerate(b_values):
        if not b > 0:
            raise ConfigurationError("imbalance indexes must be positive")
        n_pos = max(1, int(round(args.n_neg / b)))
        scenario = Scenario.from_train(n_pos, args.n_neg, name=f"b={b:g}")
        for j, alg in enumerate(algorithms):
            log.info("scenario %s, %s, %d repeats", scenario.name, alg, args.repeats)
            # every (scenario, algorithm) pair draws from its own stream
            rows.append(run_repeats(scenario, alg, cfg, args.repeats,
                                    root.child(i).child(j), kcfg))
    table = summarize_table(rows)
    out = _Outputs(args.out_dir)
    out.add("summary.csv", table.csv)
    out.add("summary.txt", table.text)
    sys.stdout.write(table.text)
    return out.commit("experiment.json", _manifest(
        args, scenarios=[r.scenario for r in rows[::len(algorithms)]]))


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate,
            "experiment": cmd_experiment}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        for path in COMMANDS[args.command](args):
            log.info("wrote %s", path)
    except RVMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    return 0
