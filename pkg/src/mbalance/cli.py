"""Command-line front end.

Subcommands::

    mbalance weights   per-subject balancing weights + JSON report
    mbalance ate       ATE/ATC point estimate, optional bootstrap SE
    mbalance tune      threshold-selection trace (and hdMB trace)
    mbalance simulate  Monte Carlo run of a simulation scenario

Data come from ``--input file.csv`` or from a scenario draw (``--scenario``).
JSON goes to ``--output`` or standard output. Every float in JSON and CSV
output is written with 17 significant digits; non-finite values become
``null`` (JSON) or an empty cell (CSV). Nothing is written unless the whole
command succeeds.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, balancer, simlab, tuning
from .dataset import format_csv, load_csv
from .errors import MBalanceError, NumericalError, ValidationError
from .estimator import PipelineConfig, ate, bootstrap_se, fit
from .diagnostics import report
from .features import FeatureSpec

SCHEMA_VERSION = 1
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

_FEATURE_KINDS = {"identity": "identity", "interactions": "interactions", "moments2": "moments2",
                  "kernel": "kernel_gaussian", "kernel_gaussian": "kernel_gaussian"}
_GROUP_NAMES = {1: "treated", 0: "control"}


# --- serialization -------------------------------------------------------------

def format_float(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        return ""
    return format(x, ".17g")


def _scalar(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v) or "null"
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with insertion-ordered keys and 17-digit floats."""
    def enc(o, level):
        pad, inner = " " * (indent * level), " " * (indent * (level + 1))
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{inner}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(o, np.ndarray):
            o = o.tolist()
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in o):
                return "[" + ", ".join(_scalar(v) for v in o) + "]"
            return "[\n" + ",\n".join(inner + enc(v, level + 1) for v in o) + "\n" + pad + "]"
        return _scalar(o)
    return enc(obj, 0) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else
                    ("" if v is None else str(v)) for v in r])
    return buf.getvalue()


def _commit(outputs) -> None:
    """Write ``{path: text}`` atomically: all files or none."""
    staged = []
    try:
        for path, text in outputs.items():
            path = Path(path)
            tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
            tmp.write_text(text, encoding="utf-8")
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if tmp.exists():
                tmp.unlink()


# --- argument parsing ----------------------------------------------------------

def _add_data_args(p):
    g = p.add_argument_group("data")
    g.add_argument("--input", help="CSV file with a header row")
    g.add_argument("--scenario", help="generate a draw from scenario A-F, M1 or M2 instead")
    g.add_argument("--treatment-col", default="T")
    g.add_argument("--outcome-col", default=None)
    g.add_argument("--id-col", default=None)
    g.add_argument("--covariates", default=None, help="comma-separated covariate columns (default: all numeric)")
    g.add_argument("--replicate", type=int, default=0, help="replicate index of the scenario draw")
    g.add_argument("--save-sample", default=None, help="also write the scenario draw as CSV")


def _add_scenario_args(p):
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--design", default="published", choices=simlab.DESIGNS)


def _add_method_args(p):
    g = p.add_argument_group("method")
    g.add_argument("--features", default=None, choices=sorted(_FEATURE_KINDS))
    g.add_argument("--bandwidth", type=float, default=None, help="Gaussian kernel bandwidth (default: median heuristic)")
    g.add_argument("--metric", default="w1", choices=("w1", "w2"))
    g.add_argument("--delta", default="grid", help="'grid', 'fixed:<value>' or a number")
    g.add_argument("--grid", default=None, help="comma-separated decreasing threshold grid")
    g.add_argument("--estimand", default="ate", choices=("ate", "atc"))
    g.add_argument("--variant", default=balancer.STANDARD, choices=(balancer.STANDARD, balancer.NORMALIZED))
    g.add_argument("--uniform", action="store_true", help="uniform weights (unadjusted comparison)")
    g.add_argument("--hdmb", action="store_true", help="high-dimensional covariate truncation")
    g.add_argument("--kappa", type=float, default=tuning.KINK_RATIO, help="kink ratio for --hdmb")


def _add_common(p):
    p.add_argument("--config", default=None, help="JSON file whose keys override flag defaults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("-o", "--output", default=None, help="JSON output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbalance", description="Mahalanobis balancing weights.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    w = sub.add_parser("weights", help="estimate balancing weights")
    _add_data_args(w)
    _add_scenario_args(w)
    _add_method_args(w)
    _add_common(w)
    w.add_argument("--csv", default=None, help="per-subject weight CSV (id, treatment, weight)")

    a = sub.add_parser("ate", help="weighted effect estimate")
    _add_data_args(a)
    _add_scenario_args(a)
    _add_method_args(a)
    _add_common(a)
    a.add_argument("--bootstrap", type=int, nargs="?", const=500, default=0,
                   help="bootstrap replicates (500 when given without a number)")
    a.add_argument("--freeze-delta", action="store_true", help="reuse the original thresholds in bootstrap replicates")

    t = sub.add_parser("tune", help="threshold-selection trace")
    _add_data_args(t)
    _add_scenario_args(t)
    _add_method_args(t)
    _add_common(t)
    t.add_argument("--csv", default=None, help="plot-ready trace CSV")

    s = sub.add_parser("simulate", help="Monte Carlo run of a scenario")
    s.add_argument("--scenario", required=False)
    _add_scenario_args(s)
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--method", default=None, choices=simlab.METHOD_LABELS)
    s.add_argument("--uniform", action="store_true", help="same as --method Unad")
    s.add_argument("--hdmb", action="store_true", help="same as --method hdMB")
    s.add_argument("--metric", default="w1", choices=("w1", "w2"), help="w2 selects MB2")
    s.add_argument("--features", default=None, choices=("kernel",), help="kernel selects kernelMB")
    s.add_argument("--delta", default="grid")
    s.add_argument("--grid", default=None)
    s.add_argument("--kappa", type=float, default=tuning.KINK_RATIO)
    _add_common(s)
    s.add_argument("--csv", default=None, help="per-replicate CSV")
    return parser


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            overrides = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(overrides, dict):
        raise ValidationError("config file must hold a JSON object")
    sub = next(a for a in parser._subparsers._group_actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub.choices[args.command]
    known = {a.dest for a in subparser._actions}
    norm = {}
    for k, v in overrides.items():
        dest = k.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise ValidationError(f"unknown config key {k!r}")
        norm[dest] = v
    subparser.set_defaults(**norm)
    return parser.parse_args(argv)


# --- helpers -------------------------------------------------------------------

def _parse_delta(text):
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip()
    if s == "grid":
        return "grid"
    if s.startswith("fixed:"):
        s = s[len("fixed:"):]
    try:
        return float(s)
    except ValueError:
        raise ValidationError(f"delta must be 'grid', 'fixed:<value>' or a number, got {text!r}") from None


def _parse_grid(text):
    if text is None:
        return tuning.DeltaGrid()
    if isinstance(text, (list, tuple)):
        return tuning.DeltaGrid(tuple(text))
    try:
        return tuning.DeltaGrid(tuple(float(v) for v in str(text).split(",") if v.strip()))
    except ValueError:
        raise ValidationError(f"cannot parse grid {text!r}") from None


def _threads(args):
    t = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if t < 1:
        raise ValidationError("--threads must be positive")
    return t


def _load_sample(args, need_outcome=False):
    if bool(args.input) == bool(args.scenario):
        raise ValidationError("give exactly one of --input or --scenario")
    if args.scenario:
        spec = simlab.scenario(args.scenario, args.n, args.p, args.design)
        sample = simlab.generate(spec, args.seed, args.replicate)
        source = {"scenario": spec.id, "n": spec.n, "p": spec.p, "design": spec.design,
                  "seed": args.seed, "replicate": args.replicate}
        return sample, source, spec
    cols = [c.strip() for c in args.covariates.split(",")] if args.covariates else None
    if need_outcome and not args.outcome_col:
        raise ValidationError("--outcome-col is required for this command")
    sample = load_csv(args.input, args.treatment_col, args.outcome_col, cols, args.id_col)
    return sample, {"input": str(args.input)}, None


def _pipeline(args, spec=None) -> PipelineConfig:
    if args.uniform and args.hdmb:
        raise ValidationError("--uniform and --hdmb are mutually exclusive")
    kind = _FEATURE_KINDS[args.features] if args.features else (spec.features.kind if spec else "identity")
    method = "uniform" if args.uniform else ("hdmb" if args.hdmb else "mb")
    return PipelineConfig(
        features=FeatureSpec(kind, args.bandwidth),
        metric=args.metric.upper(),
        delta=_parse_delta(args.delta),
        grid=_parse_grid(args.grid),
        estimand=args.estimand.upper(),
        method=method,
        variant=args.variant,
        kappa=args.kappa,
    )


def _config_block(cfg: PipelineConfig, seed):
    return {
        "features": cfg.features.kind,
        "bandwidth": cfg.features.bandwidth,
        "metric": cfg.metric,
        "delta": cfg.delta,
        "grid": list(cfg.grid.values),
        "estimand": cfg.estimand,
        "method": cfg.method,
        "variant": cfg.variant,
        "kappa": cfg.kappa,
        "seed": seed,
    }


def _sample_block(sample, source):
    out = dict(source)
    out.update({"n": sample.n, "p": sample.p, "n_treated": sample.group_size(1),
                "n_control": sample.group_size(0)})
    return out


def _ids(sample):
    return sample.ids if sample.ids is not None else tuple(str(i + 1) for i in range(sample.n))


def _save_sample_output(args, sample, outputs):
    if args.save_sample:
        if not args.scenario:
            raise ValidationError("--save-sample needs --scenario")
        outputs[Path(args.save_sample)] = format_csv(sample)


def _fit_block(f):
    groups = {}
    for t in (1, 0):
        sol = f.solutions[t]
        groups[_GROUP_NAMES[t]] = {
            "delta": sol.delta,
            "at_origin": bool(sol.at_origin),
            "solver_status": sol.solver_status,
            "iterations": int(sol.iterations),
            "theta": [float(v) for v in sol.theta],
        }
    out = {"delta_treated": f.solutions[1].delta, "delta_control": f.solutions[0].delta, "groups": groups}
    if f.hdmb is not None:
        out["hdmb"] = _hdmb_block(f.hdmb, f.sample)
    return out


def _names(sample):
    return sample.covariate_names or tuple(f"X{j + 1}" for j in range(sample.p))


def _hdmb_block(tr, sample):
    names = _names(sample)
    return {
        "k0": tr.k0,
        "kink_found": tr.kink_found,
        "kink_step": tr.kink_step,
        "selected": [names[i] for i in tr.selected],
        "order": [names[i] for i in tr.order],
    }


def _diagnostics_block(f):
    return report(f.features, f.sample, f.weights, target=f.target).as_dict()


def _emit_json(args, doc, outputs):
    text = dumps(doc)
    if args.output:
        outputs[Path(args.output)] = text
        return None
    return text


# --- commands ------------------------------------------------------------------

def cmd_weights(args) -> int:
    sample, source, spec = _load_sample(args)
    cfg = _pipeline(args, spec)
    f = fit(sample, cfg)
    doc = {"schema_version": SCHEMA_VERSION, "command": "weights",
           "sample": _sample_block(sample, source), "config": _config_block(cfg, args.seed)}
    doc.update(_fit_block(f))
    doc["diagnostics"] = _diagnostics_block(f)
    outputs = {}
    w = f.weights
    if args.csv:
        rows = [(i, int(t), float(x)) for i, t, x in zip(_ids(sample), sample.treatment, w)]
        outputs[Path(args.csv)] = _csv_text(("id", "treatment", "weight"), rows)
    _save_sample_output(args, sample, outputs)
    return _finish(args, doc, outputs)


def cmd_ate(args) -> int:
    sample, source, spec = _load_sample(args, need_outcome=True)
    cfg = _pipeline(args, spec)
    if args.bootstrap < 0 or args.bootstrap == 1:
        raise ValidationError("--bootstrap needs B >= 2")
    f = fit(sample, cfg)
    point = ate(sample, f.solutions)
    doc = {"schema_version": SCHEMA_VERSION, "command": "ate",
           "sample": _sample_block(sample, source), "config": _config_block(cfg, args.seed),
           "estimand": cfg.estimand, "point": point}
    if args.bootstrap:
        _, se = bootstrap_se(sample, cfg, args.bootstrap, args.seed, retune=not args.freeze_delta,
                             threads=_threads(args), _fit=f)
        doc["se"] = se
        doc["retune"] = not args.freeze_delta
    doc["B"] = args.bootstrap
    doc["deltas"] = {"treated": f.solutions[1].delta, "control": f.solutions[0].delta}
    doc["diagnostics"] = _diagnostics_block(f)
    outputs = {}
    _save_sample_output(args, sample, outputs)
    return _finish(args, doc, outputs)


def _trace_block(tr):
    return {
        "chosen_delta": tr.chosen_delta,
        "chosen_gmim": tr.chosen_gmim,
        "records": [
            {"delta": r.delta, "gmim": r.gmim, "solver_status": r.solver_status,
             "at_origin": r.at_origin, "failed": r.failed, "error": r.error}
            for r in tr.records
        ],
    }


def cmd_tune(args) -> int:
    sample, source, spec = _load_sample(args)
    cfg = _pipeline(args, spec)
    if cfg.method == "uniform":
        raise ValidationError("tune does not apply to uniform weights")
    if cfg.delta != "grid":
        cfg = replace(cfg, grid=tuning.DeltaGrid((cfg.delta,)), delta="grid")
    f = fit(sample, cfg)
    doc = {"schema_version": SCHEMA_VERSION, "command": "tune",
           "sample": _sample_block(sample, source), "config": _config_block(cfg, args.seed),
           "treated": _trace_block(f.traces[1]), "control": _trace_block(f.traces[0])}
    outputs = {}
    if f.hdmb is not None:
        tr, names = f.hdmb, _names(sample)
        block = _hdmb_block(tr, sample)
        block["steps"] = [{"j": s.j, "covariate": names[tr.order[s.j - 1]], "gmim1": s.gmim1,
                           "gmim1_adjusted": s.gmim1_adjusted, "chosen_delta": s.chosen_delta}
                          for s in tr.steps]
        doc["hdmb"] = block
        header = ("j", "covariate", "gmim1", "gmim1_adjusted", "chosen_delta", "kink")
        rows = [(s.j, names[tr.order[s.j - 1]], s.gmim1, s.gmim1_adjusted, s.chosen_delta,
                 int(tr.kink_step == s.j)) for s in tr.steps]
    else:
        header = ("group", "delta", "gmim", "solver_status", "at_origin", "failed", "chosen")
        rows = [(_GROUP_NAMES[t], r.delta, r.gmim, r.solver_status, int(r.at_origin), int(r.failed),
                 int(r.delta == f.traces[t].chosen_delta))
                for t in (1, 0) for r in f.traces[t].records]
    if args.csv:
        outputs[Path(args.csv)] = _csv_text(header, rows)
    _save_sample_output(args, sample, outputs)
    return _finish(args, doc, outputs)


def _simulate_method(args):
    flags = [m for m, on in (("Unad", args.uniform), ("hdMB", args.hdmb), ("MB2", args.metric == "w2"),
                             ("kernelMB", args.features == "kernel")) if on]
    if args.method and flags and flags != [args.method]:
        raise ValidationError(f"--method {args.method} conflicts with {flags}")
    if len(flags) > 1:
        raise ValidationError(f"conflicting method flags: {flags}")
    return args.method or (flags[0] if flags else "MB")


def cmd_simulate(args) -> int:
    if not args.scenario:
        raise ValidationError("--scenario is required")
    spec = simlab.scenario(args.scenario, args.n, args.p, args.design)
    label = _simulate_method(args)
    cfg = simlab.method_config(label, spec, _parse_delta(args.delta), _parse_grid(args.grid), args.kappa)
    summary, records = simlab.run_monte_carlo(spec, cfg, args.reps, args.seed, threads=_threads(args),
                                              method=label, return_records=True)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "scenario": spec.id,
        "n": spec.n,
        "p": spec.p,
        "design": spec.design,
        "method": label,
        "config": _config_block(cfg, args.seed),
        "true_ate": summary.true_ate,
        "reps": summary.reps,
        "seed": summary.seed,
        "bias": summary.bias,
        "sd": summary.sd,
        "rmse": summary.rmse,
        "mean_weighted_asmd": summary.mean_weighted_asmd,
        "gmim_total": summary.gmim_total,
        "failures": summary.failures,
        "partial": summary.partial,
    }
    outputs = {}
    if args.csv:
        header = ("replicate", "estimate", "mean_weighted_asmd", "gmim_total", "delta_treated",
                  "delta_control", "k0", "failed", "error")
        rows = [(r.replicate, r.estimate, r.mean_weighted_asmd, r.gmim_total, r.delta_treated,
                 r.delta_control, r.k0, int(r.failed), r.error) for r in records]
        outputs[Path(args.csv)] = _csv_text(header, rows)
    text = _emit_json(args, doc, outputs)
    _commit(outputs)
    row_stream = sys.stdout if text is None else sys.stderr
    if text is not None:
        sys.stdout.write(text)
    print(summary.row(), file=row_stream)
    return EXIT_OK


def _finish(args, doc, outputs) -> int:
    text = _emit_json(args, doc, outputs)
    _commit(outputs)
    if text is not None:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"weights": cmd_weights, "ate": cmd_ate, "tune": cmd_tune, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MBalanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
