"""Command line interface: gen, noise, train, fuse, clean, sweep, report.

Exit codes: 0 success, 1 validation/usage error, 2 runtime error. All output
files are written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .annotators import staple
from .data import load_csv, save_csv
from .harness import (ConfigError, PipelineError, atomic_write_text,
                      run_experiment, report_json, strip_wall_time, sweep,
                      sweep_summary_csv, write_report, _make_dataset,
                      _apply_noise)


def _kv_params(pairs):
    out = {}
    for p in pairs:
        if "=" not in p:
            raise ConfigError(f"expected key=value, got '{p}'")
        k, v = p.split("=", 1)
        try:
            out[k] = int(v)
        except ValueError:
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out


def _load_config(args):
    with open(args.config, encoding="utf-8") as f:
        cfg = json.load(f)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def cmd_gen(args):
    params = _kv_params(args.params)
    if args.blobs:
        spec = {"kind": "blobs", "k": int(params.get("k", 2)),
                "n_per_class": int(params.get("n", 100)),
                "d": int(params.get("d", 2)),
                "separation": float(params.get("sep", 8.0))}
    else:
        spec = {"kind": "rings", "k": int(params.get("k", 2)),
                "n_per_class": int(params.get("n", 100)),
                "noise_std": float(params.get("noise_std", 0.1))}
    ds = _make_dataset(spec, int(params.get("seed", args.seed or 0)))
    save_csv(ds, args.out)
    return 0


def cmd_noise(args):
    ds = load_csv(args.infile)
    params = _kv_params(args.params)
    kind = args.kind
    if kind == "symmetric":
        spec = {"kind": "symmetric", "rho": float(params["rho"])}
    elif kind == "feature":
        spec = {"kind": "feature", "rho_max": float(params["rho_max"]),
                "beta": float(params.get("beta", 1.0))}
    elif kind == "annotators":
        spec = {"kind": "annotators",
                "rhos": [float(r) for r in str(params["rhos"]).split(":")]}
    else:
        raise ConfigError(f"unknown noise kind: {kind}")
    noisy = _apply_noise(ds, spec, int(params.get("seed", args.seed or 0)))
    save_csv(noisy, args.out)
    return 0


def cmd_train(args):
    cfg = _load_config(args)
    report = run_experiment(cfg)
    out = cfg.get("output", args.out or "report.json")
    write_report(report, out)
    print(f"wrote {out}: accuracy "
          f"{report['final_metrics']['accuracy']:.4f}")
    return 0


def cmd_fuse(args):
    ds = load_csv(args.infile)
    if ds.annotator_labels is None:
        raise ConfigError("fuse: input CSV has no annotator columns")
    if args.method == "staple":
        _, model, fused, _ = staple(ds.annotator_labels, ds.num_classes)
        atomic_write_text(args.out,
                          json.dumps(model.to_json(), indent=2) + "\n")
    elif args.method == "majority":
        from .annotators import majority_vote
        fused = np.array([majority_vote(row) for row in ds.annotator_labels])
        atomic_write_text(args.out, json.dumps(
            {"method": "majority"}, indent=2) + "\n")
    else:
        raise ConfigError(f"unknown fuse method: {args.method}")
    fused_ds = replace(ds, labels=np.asarray(fused, dtype=np.int64))
    labels_path = args.labels_out or (args.out.rsplit(".", 1)[0]
                                      + "_fused.csv")
    save_csv(fused_ds, labels_path)
    return 0


def cmd_clean(args):
    cfg = _load_config(args)
    cfg.setdefault("method", {"procedure": {"name": "iterative_clean"}})
    report = run_experiment(cfg)
    out = cfg.get("output", args.out or "clean_report.json")
    write_report(report, out)
    diag = report["noise_diagnostics"]
    print(f"wrote {out}: flag precision {diag.get('flag_precision', 0):.3f} "
          f"recall {diag.get('flag_recall', 0):.3f}")
    return 0


def cmd_sweep(args):
    cfg = _load_config(args)
    rhos = cfg.pop("rhos", [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    methods = cfg.pop("methods", None)
    reports, summary, r2 = sweep(cfg, rhos, methods)
    out = args.out or "sweep_summary.csv"
    atomic_write_text(out, sweep_summary_csv(summary))
    print(f"wrote {out}; quadratic fit R^2 = "
          f"{'n/a' if r2 is None else format(r2, '.4f')}")
    return 0


def cmd_report(args):
    with open(args.infile, encoding="utf-8") as f:
        report = json.load(f)
    fm = report["final_metrics"]
    print(f"schema v{report['schema_version']} | noisylab "
          f"{report['version']}")
    print(f"accuracy: {fm['accuracy']:.4f}  macro_f1: {fm['macro_f1']:.4f}"
          + (f"  ece: {fm['ece']:.4f}" if "ece" in fm else ""))
    for key, val in sorted(report.get("noise_diagnostics", {}).items()):
        if isinstance(val, float):
            print(f"{key}: {val:.4f}")
    if args.strip_wall_time:
        print(report_json(strip_wall_time(report)))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="noisylab",
                                description="label-noise experiment lab")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    kind = g.add_mutually_exclusive_group(required=True)
    kind.add_argument("--blobs", action="store_true")
    kind.add_argument("--rings", action="store_true")
    g.add_argument("params", nargs="*", help="k=2 n=100 d=2 sep=8 seed=1")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    n = sub.add_parser("noise", help="corrupt labels of a dataset CSV")
    n.add_argument("--in", dest="infile", required=True)
    n.add_argument("--kind", required=True,
                   choices=["symmetric", "feature", "annotators"])
    n.add_argument("params", nargs="*", help="rho=0.3 seed=1")
    n.add_argument("--out", required=True)
    n.set_defaults(func=cmd_noise)

    t = sub.add_parser("train", help="run a training experiment")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_train)

    f = sub.add_parser("fuse", help="fuse multi-annotator labels")
    f.add_argument("--in", dest="infile", required=True)
    f.add_argument("--method", default="staple",
                   choices=["staple", "majority"])
    f.add_argument("--out", required=True)
    f.add_argument("--labels-out", default=None)
    f.set_defaults(func=cmd_fuse)

    c = sub.add_parser("clean", help="iterative label cleaning experiment")
    c.add_argument("--config", required=True)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_clean)

    s = sub.add_parser("sweep", help="noise-rate sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="print a report summary")
    r.add_argument("--in", dest="infile", required=True)
    r.add_argument("--strip-wall-time", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (PipelineError, Exception) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
