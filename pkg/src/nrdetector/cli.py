"""Command-line entry point.

Subcommands: ``run``, ``ablate``, ``eval``, ``synth``, ``select`` and
``estimate-rate``. The default output directory comes from
``NRDETECTOR_OUT_DIR`` and falls back to ``./nrdetector-out``. Errors are
reported on stderr with the failing stage and exit code 2.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PROFILES, build_config
from .dataset import load_csv, save_csv
from .exceptions import NRDetectorError
from .pipeline import (
    ABLATION_TOGGLES,
    Pipeline,
    ablation_text,
    eval_only,
    load_series,
    read_binary_column,
    report_json,
    report_text,
    run_ablation,
)
from .pointdet import estimate_clean_rate

OUT_DIR_ENV = "NRDETECTOR_OUT_DIR"
EXIT_ERROR = 2


def default_out_dir():
    return os.environ.get(OUT_DIR_ENV) or "nrdetector-out"


def _config_args(p):
    p.add_argument("--config", help="flat 'section.key = value' file")
    p.add_argument("--profile", choices=sorted(PROFILES), help="hyperparameter profile")
    p.add_argument("--seed", type=int)
    p.add_argument("--e1", type=float, help="label noise rate for positives")
    p.add_argument("--score-source", choices=("classifier", "encoder"), help="point scores used for ranking")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, e.g. --set train.epochs=20")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./nrdetector-out)")


def _overrides(args):
    out = {}
    for item in args.set:
        if "=" not in item:
            raise NRDetectorError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    if args.seed is not None:
        out["run.seed"] = args.seed
    if args.e1 is not None:
        out["noise.e1"] = args.e1
    if args.score_source is not None:
        out["pointdet.score_source"] = args.score_source
    return out


def _config(args):
    return build_config(args.config, args.profile, _overrides(args))


def _out_dir(args):
    path = Path(args.out_dir or default_out_dir())
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_run(args):
    cfg = _config(args)
    out = _out_dir(args)
    rep = Pipeline(cfg, out, resume=not args.fresh).run()
    sys.stdout.write(report_text(rep))
    print(f"artifacts written to {out}")
    return 0


def cmd_ablate(args):
    cfg = _config(args)
    toggles = [t.strip() for t in args.toggles.split(",") if t.strip()] if args.toggles else []
    rows = run_ablation(cfg, toggles)
    out = _out_dir(args)
    text = ablation_text(rows)
    (out / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    (out / "ablation.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_eval(args):
    rep = eval_only(args.predictions, args.truth)
    if args.json:
        sys.stdout.write(rep.to_json() + "\n")
    else:
        sys.stdout.write(rep.to_text())
    return 0


def cmd_synth(args):
    cfg = _config(args).with_overrides({"data.source": "synth"})
    ds = load_series(cfg)
    path = Path(args.output) if args.output else _out_dir(args) / f"synth-seed{cfg.seed}.csv"
    save_csv(ds, path)
    print(f"wrote {ds.T_total} x {ds.D} series ({int(ds.point_labels.sum())} anomalous points) to {path}")
    return 0


def cmd_select(args):
    cfg = _config(args)
    out = _out_dir(args)
    pipe = Pipeline(cfg, out, resume=not args.fresh, stop_after="select")
    pipe.run()
    sel = pipe.last_result_
    print(
        f"labeled={sel.labeled.size} reliable negatives={sel.reliable_negatives.size}"
        f" propagated negatives={sel.propagated_negatives.size} excluded={sel.excluded.size}"
    )
    print(f"selection written to {out / 'selection.json'}")
    return 0


def cmd_estimate_rate(args):
    if args.labels:
        features = load_csv(args.features, has_labels=False, normalize=False).values
        labels = read_binary_column(args.labels)
    else:
        ds = load_csv(args.features, has_labels=True, normalize=False)
        features, labels = ds.values, ds.point_labels
    if len(features) != len(labels):
        raise NRDetectorError(f"features have {len(features)} rows but labels have {len(labels)}")
    est = estimate_clean_rate(features, labels, args.n_neighbors)
    print(json.dumps({"p_hat": est.p_hat, "e0_hat": est.e0_hat, "e1_hat": est.e1_hat,
                      "residual": None if np.isnan(est.residual) else est.residual}, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="nrdetector", description="Two-stage time-series anomaly detection from noisy segment labels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline")
    _config_args(p)
    p.add_argument("--fresh", action="store_true", help="ignore artifacts of earlier runs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="compare pipeline variants on the same data")
    _config_args(p)
    p.add_argument("--toggles", default=",".join(ABLATION_TOGGLES),
                   help=f"comma-separated subset of {', '.join(ABLATION_TOGGLES)}; empty for one baseline row")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="score a prediction column against a truth column")
    p.add_argument("predictions")
    p.add_argument("truth")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic labeled series as CSV")
    _config_args(p)
    p.add_argument("-o", "--output", help="CSV path (default <out-dir>/synth-seed<seed>.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("select", help="run the sample selector only")
    _config_args(p)
    p.add_argument("--fresh", action="store_true")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("estimate-rate", help="estimate the clean positive rate of noisy point labels")
    p.add_argument("features", help="CSV of feature rows; last column holds labels unless --labels is given")
    p.add_argument("--labels", help="CSV whose last column holds the 0/1 labels")
    p.add_argument("--n-neighbors", type=int, default=16)
    p.set_defaults(func=cmd_estimate_rate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NRDetectorError, OSError, ValueError) as exc:
        print(f"nrdetector: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
