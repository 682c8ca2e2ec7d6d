"""Command line entry point: ``metricdae {synth,train,eval,embed,gradcheck,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import data as dio
from .harness import (ExperimentConfig, ExperimentError, load_config, run_classification,
                      run_experiment, train_fold, prepare, resolve_datasets, train_full,
                      load_fold_models)
from .report import load_report, render_tables, write_report

log = logging.getLogger("metricdae")


def _config(args) -> ExperimentConfig:
    if args.config is None:
        raise ExperimentError("--config is required")
    return load_config(args.config, seed=args.seed)


def cmd_synth(args) -> int:
    cfg = dio.SyntheticConfig(
        n_features=args.n_features,
        latent_shift=tuple(args.shift),
        nuisance_scale=args.nuisance_scale,
        map_seed=args.map_seed,
        include_activation=not args.no_activation,
        include_valence=not args.no_valence,
    )
    ds = dio.generate_synthetic(args.n, seed=args.seed, config=cfg, name=Path(args.out).stem)
    dio.write_csv(ds, args.out)
    print(f"wrote {ds.n} samples to {args.out}")
    return 0


def _out_dir(args) -> Path:
    return Path(args.out or "runs")


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    report = run_experiment(cfg, checkpoint_dir=out / "checkpoints")
    paths = write_report(report, out)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n",
                                     encoding="utf-8")
    print(render_tables([report]), end="")
    print(f"report written to {paths[0]}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    if args.source == "raw":
        report = run_classification(cfg, "raw")
        stem = "raw_svc_report"
    else:
        report = run_experiment(cfg, checkpoint_dir=out / "checkpoints", from_checkpoints=True)
        stem = "report"
    paths = write_report(report, out, stem)
    print(render_tables([report]), end="")
    print(f"report written to {paths[0]}")
    return 0


def cmd_embed(args) -> int:
    cfg = _config(args)
    out = _out_dir(args) / "embeddings"
    out.mkdir(parents=True, exist_ok=True)
    if args.full:
        est, scaler, prepared = train_full(cfg)
        exports = {prepared.train.name: (scaler.transform(prepared.train.features), prepared.train)}
        tag = "full"
    else:
        datasets, seed, n_folds = resolve_datasets(cfg)
        if not 0 <= args.fold < n_folds:
            raise ExperimentError(f"--fold must lie in [0, {n_folds - 1}]")
        prepared = prepare(datasets, cfg, seed, n_folds)
        ckpt = _out_dir(args) / "checkpoints"
        if (ckpt / f"fold{args.fold}.json").exists():
            fm = load_fold_models(ckpt, args.fold, cfg, prepared)[0]
        else:
            fm = train_fold(prepared, cfg, args.fold)[0]
        est, scaler = fm.estimator, fm.scaler
        val = prepared.train.subset(prepared.folds[args.fold][1])
        exports = {prepared.train.name: (scaler.transform(val.features), val)}
        tag = f"fold{args.fold}"
    for t in prepared.transfers:
        exports[t.dataset.name] = (t.dataset.features, t.dataset)
    for name, (x, ds) in exports.items():
        path = out / f"{cfg.method}-{tag}-{name}.csv"
        dio.export_embeddings(est.transform(x), ds, path)
        print(f"wrote {path}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    worst = run_suite(args.seeds, (args.min_batch, args.max_batch), args.n_features)
    failed = False
    for name, err in worst.items():
        ok = err < args.tol
        failed |= not ok
        print(f"{name:<15} max relative error {err:.3e}  {'ok' if ok else 'FAIL'}")
    return 1 if failed else 0


def cmd_report(args) -> int:
    reports = [load_report(p) for p in args.reports]
    text = render_tables(reports)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metricdae", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="experiment TOML file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    p = sub.add_parser("synth", help="generate a synthetic feature CSV")
    common(p, config=False)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--n-features", type=int, default=dio.N_FEATURES)
    p.add_argument("--shift", type=float, nargs=2, default=(0.0, 0.0), metavar=("ACT", "VAL"),
                   help="shift of the generating latent (transfer-style corpora)")
    p.add_argument("--nuisance-scale", type=float, default=dio.SyntheticConfig.nuisance_scale)
    p.add_argument("--map-seed", type=int, default=0)
    p.add_argument("--no-activation", action="store_true")
    p.add_argument("--no-valence", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="cross-validated training + evaluation")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="re-evaluate saved checkpoints or run the raw SVC reference")
    common(p)
    p.add_argument("--source", choices=("embedding", "raw"), default="embedding")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="export latent embeddings as CSV")
    common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--fold", type=int)
    g.add_argument("--full", action="store_true")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--min-batch", type=int, default=2)
    p.add_argument("--max-batch", type=int, default=64)
    p.add_argument("--n-features", type=int, default=dio.N_FEATURES)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="render tables from report JSON files")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ExperimentError, ValueError, FileNotFoundError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
