"""Command-line front end.

Each subcommand reads one YAML (or JSON) config; global flags override the
matching top-level keys and ``--set a.b=value`` overrides nested ones.
Input paths are resolved against the config file's directory, output paths
against ``--out``.

Exit codes: 0 success, 1 inconclusive audit, 2 usage/config/parse error,
3 training or sampling failure.
"""

import argparse
import csv
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import audit as A
from . import data as D
from . import model as M
from .errors import ConfigError, ForgetAuditError, InputError

_ALLOWED_KEYS = {
    "train": {"preset", "seed", "out", "jobs", "data", "model", "train", "domain", "output"},
    "eval": {"preset", "seed", "out", "jobs", "model", "data", "domain", "output"},
    "audit": {
        "preset", "seed", "out", "jobs", "target", "query", "domain", "model", "train",
        "calibration_size", "calibration_floor", "report", "ecdf",
    },
    "grid": {
        "preset", "seed", "out", "jobs", "domain", "model", "train", "cells", "query_size",
        "calibration_size", "query_offset", "query_provider_seed", "repeats", "output",
        "summary",
    },
}


# -- config plumbing ---------------------------------------------------------


def _parse_text(text, where):
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: top level must be a mapping")
    return doc


def load_preset(name):
    res = resources.files("forgetaudit").joinpath("presets", f"{name}.yaml")
    if not res.is_file():
        available = sorted(
            p.name[:-5] for p in resources.files("forgetaudit").joinpath("presets").iterdir()
            if p.name.endswith(".yaml")
        )
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(available)}")
    return _parse_text(res.read_text(encoding="utf-8"), f"preset {name}")


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _apply_set(cfg, assignment):
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    value = yaml.safe_load(raw) if raw else ""
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        child = node.get(p)
        if child is None:
            child = node[p] = {}
        elif not isinstance(child, dict):
            raise ConfigError(f"--set {key}: {p!r} is not a mapping")
        node = child
    node[parts[-1]] = value


def build_config(args):
    """Merge preset, config file and flag overrides; returns (cfg, base_dir)."""
    base_dir = Path.cwd()
    cfg = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise InputError(f"config file not found: {path}")
        cfg = _parse_text(path.read_text(encoding="utf-8"), str(path))
        base_dir = path.resolve().parent
    preset = args.preset or cfg.get("preset")
    if preset:
        cfg = _merge(load_preset(preset), cfg)
    for assignment in args.set or []:
        _apply_set(cfg, assignment)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.jobs is not None:
        cfg["jobs"] = args.jobs
    unknown = set(cfg) - _ALLOWED_KEYS[args.command]
    if unknown:
        raise ConfigError(f"unknown config keys for {args.command}: {', '.join(sorted(unknown))}")
    return cfg, base_dir


def _section(cfg, key, required=True):
    value = cfg.get(key)
    if value is None:
        if required:
            raise ConfigError(f"config needs a {key!r} section")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{key!r} must be a mapping")
    return value


def _int(cfg, key, default=None):
    value = cfg.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key!r} must be an integer, got {value!r}")
    return value


def _seed(cfg):
    seed = _int(cfg, "seed", 0)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return seed


def _input_path(raw, base_dir):
    if not isinstance(raw, str) or not raw:
        raise ConfigError(f"expected a file path, got {raw!r}")
    path = Path(raw)
    if not path.is_absolute():
        path = base_dir / path
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    return path


def _output_path(raw, out_dir):
    path = Path(raw)
    if not path.is_absolute():
        path = out_dir / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _domain(cfg, required=True):
    d = cfg.get("domain")
    if d is None:
        if required:
            raise ConfigError("config needs a 'domain' section")
        return None
    if not isinstance(d, dict):
        raise ConfigError("'domain' must be a mapping")
    return D.DomainSpec.from_dict(d)


def _train_config(cfg):
    try:
        return M.TrainConfig(**_section(cfg, "train", required=False))
    except TypeError as exc:
        raise ConfigError(f"bad 'train' section: {exc}") from None


def _design(cfg, input_dim, num_classes, seed=0):
    m = dict(_section(cfg, "model", required=False))
    hidden = m.pop("hidden_dim", 0)
    if m:
        raise ConfigError(f"unknown 'model' keys: {', '.join(sorted(m))}")
    return M.ClassifierConfig(input_dim, num_classes, hidden, seed)


def load_dataset(src, base_dir, domain=None):
    """Dataset from a source mapping: ``synthetic``, ``csv`` or ``idx``."""
    if not isinstance(src, dict):
        raise ConfigError("a dataset source must be a mapping")
    src = dict(src)
    kind = src.pop("source", None)
    num_classes = src.pop("num_classes", None)
    if kind == "synthetic":
        dom = D.DomainSpec.from_dict(src.pop("domain")) if "domain" in src else domain
        if dom is None:
            raise ConfigError("synthetic dataset needs a domain")
        size = _int(src, "size")
        if size is None:
            raise ConfigError("synthetic dataset needs a 'size'")
        offset = float(src.get("offset", 0.0))
        dom = dom.provider(offset, seed=_int(src, "provider_seed", 0))
        ds = D.sample_domain(dom, size, _int(src, "seed", 0))
        extra = set(src) - {"size", "seed", "offset", "provider_seed"}
    elif kind == "csv":
        header = src.get("header")
        ds = D.load_csv(_input_path(src.get("path"), base_dir), header, num_classes)
        extra = set(src) - {"path", "header"}
    elif kind == "idx":
        ds = D.load_idx(
            _input_path(src.get("images"), base_dir),
            _input_path(src.get("labels"), base_dir),
            num_classes,
        )
        extra = set(src) - {"images", "labels"}
    else:
        raise ConfigError(f"dataset source must be synthetic, csv or idx, got {kind!r}")
    if extra:
        raise ConfigError(f"unknown keys in {kind} dataset source: {', '.join(sorted(extra))}")
    return ds


def load_matrix(path):
    """Confidence-matrix CSV (probability columns then label)."""
    ds = D.load_csv(path)
    return M.ConfidenceMatrix(ds.features, ds.labels, {"matrix": f"csv:{Path(path).name}"})


# -- writers -------------------------------------------------------------------


def _num(x):
    return format(float(x), ".17g")


def write_matrix(cm, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"p{k}" for k in range(cm.num_classes)] + ["label"])
        for row, label in zip(cm.t, cm.y):
            w.writerow([_num(v) for v in row] + [int(label)])


def _json_ready(obj, floats):
    # Floats are swapped for placeholders so they can be printed at 17
    # significant digits instead of json's shortest round-trip form.
    if isinstance(obj, dict):
        return {str(k): _json_ready(v, floats) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v, floats) for v in obj]
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        floats.append(float(obj))
        return f"\x00{len(floats) - 1}\x00"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj):
    floats = []
    text = json.dumps(_json_ready(obj, floats), indent=2, sort_keys=True)
    for i, x in enumerate(floats):
        s = _num(x)
        if s.lstrip("-").isdigit():
            s += ".0"
        text = text.replace(f'"\\u0000{i}\\u0000"', s, 1)
    return text + "\n"


def write_ecdf_dump(outcome, path):
    curves = (
        ("query", outcome.shadows.query_ecdf),
        ("target", outcome.target_ecdf),
        ("calibration", outcome.shadows.calibration_ecdf),
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["curve", "point", "cdf"])
        for name, e in curves:
            for p, h in zip(e.points, e.heights):
                w.writerow([name, _num(p), _num(h)])


_GRID_FIELDS = (
    "cell", "repeat", "seed", "n_target", "ks_target", "ks_calibration", "rho",
    "decision", "near_threshold", "error",
)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return _num(v)
    return v


def write_grid_csv(result, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_GRID_FIELDS)
        for r in result.rows:
            w.writerow([_cell(getattr(r, f)) for f in _GRID_FIELDS])


def write_summary_csv(summary, path):
    fields = ("cell", "runs", "failures", "mean_rho", "median_rho", "mean_ks_target", "forgotten")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for s in summary:
            w.writerow([_cell(getattr(s, f)) for f in fields])


def format_summary(summary):
    """Plain-text table with one column per cell."""
    def show(x, fmt="{:.3f}"):
        return "-" if x is None else fmt.format(x)

    header = ["", *(s.cell for s in summary)]
    lines = [
        ["mean KS", *(show(s.mean_ks_target) for s in summary)],
        ["mean rho", *(show(s.mean_rho) for s in summary)],
        ["median rho", *(show(s.median_rho) for s in summary)],
        ["Forgotten", *(f"{s.forgotten}/{s.runs - s.failures}" for s in summary)],
        ["failures", *(str(s.failures) for s in summary)],
    ]
    table = [header, *lines]
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    return "\n".join(
        "  ".join(cell.rjust(widths[i]) if i else cell.ljust(widths[i]) for i, cell in enumerate(row))
        for row in table
    )


# -- subcommands ---------------------------------------------------------------


def cmd_train(cfg, base_dir, out_dir):
    domain = _domain(cfg, required=False)
    ds = load_dataset(_section(cfg, "data"), base_dir, domain)
    design = _design(cfg, ds.feature_dim, ds.num_classes, _seed(cfg))
    model = M.train(design, ds, _train_config(cfg))
    path = _output_path(cfg.get("output", "model.fgtm"), out_dir)
    M.save(model, path)
    print(f"wrote {path}")
    print(f"train accuracy {model.train_accuracy:.4f}")
    return 0


def cmd_eval(cfg, base_dir, out_dir):
    model = M.load(_input_path(cfg.get("model"), base_dir))
    ds = load_dataset(_section(cfg, "data"), base_dir, _domain(cfg, required=False))
    cm = M.evaluate(model, ds)
    path = _output_path(cfg.get("output", "confidences.csv"), out_dir)
    write_matrix(cm, path)
    print(f"wrote {path} ({len(cm)} rows, {cm.num_classes} classes)")
    return 0


def cmd_audit(cfg, base_dir, out_dir):
    domain = _domain(cfg)
    query = load_dataset(_section(cfg, "query"), base_dir, domain)
    target_src = _section(cfg, "target")
    if set(target_src) == {"model"}:
        target = M.load(_input_path(target_src["model"], base_dir))
        design = target.config if cfg.get("model") is None else _design(
            cfg, query.feature_dim, domain.num_classes
        )
    elif set(target_src) == {"matrix"}:
        target = load_matrix(_input_path(target_src["matrix"], base_dir))
        design = _design(cfg, query.feature_dim, domain.num_classes)
    else:
        raise ConfigError("'target' needs exactly one of 'model' or 'matrix'")
    inp = A.AuditInput(
        target=target,
        query_data=query,
        domain=domain,
        classifier_config=design,
        train_config=_train_config(cfg),
        calibration_size=_int(cfg, "calibration_size"),
        calibration_floor=_int(cfg, "calibration_floor", A.DEFAULT_CALIBRATION_FLOOR),
        seed=_seed(cfg),
    )
    outcome = A.execute_audit(inp)
    rep = outcome.report
    report_path = _output_path(cfg.get("report", "report.json"), out_dir)
    report_path.write_text(dumps_json(rep.to_dict()), encoding="utf-8")
    ecdf_path = _output_path(cfg.get("ecdf", "ecdf.csv"), out_dir)
    write_ecdf_dump(outcome, ecdf_path)
    print(f"KS(query, target)      = {rep.ks_target:.6f}")
    print(f"KS(query, calibration) = {rep.ks_calibration:.6f}")
    note = "  (near threshold)" if rep.near_threshold else ""
    print(f"rho = {rep.rho:.6f}  decision: {rep.decision}{note}")
    return 0


def grid_config(cfg):
    domain = _domain(cfg)
    cells = cfg.get("cells")
    if not isinstance(cells, list) or not cells:
        raise ConfigError("grid config needs a non-empty 'cells' list")
    for c in cells:
        if not isinstance(c, dict):
            raise ConfigError(f"grid cell must be a mapping, got {c!r}")
    defaults = A.GridConfig.__dataclass_fields__
    return A.GridConfig(
        domain=domain,
        cells=[A.TargetSpec.from_dict(c) for c in cells],
        design=_design(cfg, domain.feature_dim, domain.num_classes),
        train_config=_train_config(cfg),
        query_size=_int(cfg, "query_size", defaults["query_size"].default),
        calibration_size=_int(cfg, "calibration_size", defaults["calibration_size"].default),
        query_offset=float(cfg.get("query_offset", 0.0)),
        query_provider_seed=_int(cfg, "query_provider_seed", 0),
        base_seed=_seed(cfg),
        repeats=_int(cfg, "repeats", 1),
    )


def cmd_grid(cfg, base_dir, out_dir):
    gcfg = grid_config(cfg)
    jobs = _int(cfg, "jobs", 1)
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    result = A.run_grid(gcfg, jobs=jobs)
    path = _output_path(cfg.get("output", "grid.csv"), out_dir)
    write_grid_csv(result, path)
    summary = result.summary()
    write_summary_csv(summary, _output_path(cfg.get("summary", "grid_summary.csv"), out_dir))
    print(format_summary(summary))
    print(f"wrote {path}")
    return 0


_HANDLERS = {"train": cmd_train, "eval": cmd_eval, "audit": cmd_audit, "grid": cmd_grid}


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--preset", help="bundled config to start from")
    common.add_argument("--seed", type=_u64, help="override the config's seed")
    common.add_argument("--jobs", type=int, help="worker processes (grid only)")
    common.add_argument("--out", help="directory for outputs (default: .)")
    common.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override a config key (dotted path, YAML value); repeatable",
    )
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="forgetaudit",
        description="Check whether a classifier has forgotten a query dataset.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train a classifier")
    sub.add_parser("eval", parents=[common], help="write a model's confidence matrix")
    sub.add_parser("audit", parents=[common], help="audit a target model or matrix")
    sub.add_parser("grid", parents=[common], help="run a target-composition grid")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg, base_dir = build_config(args)
        out_dir = Path(args.out or cfg.pop("out", None) or ".")
        cfg.pop("out", None)
        return _HANDLERS[args.command](cfg, base_dir, out_dir)
    except ForgetAuditError as exc:
        print(f"forgetaudit {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"forgetaudit {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
