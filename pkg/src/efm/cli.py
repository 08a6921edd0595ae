"""Command line interface.

Exit codes: 0 success, 1 other failure, 2 data error, 3 divergence,
4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .abgd import train
from .errors import ConfigError, DataError, EFMError
from .lps import SyntheticConfig, sweep_sigma, write_sweep_csv
from .metrics import evaluate, format_distribution, response_distribution, verify_theorem1
from .model import FeatureConfig, load_model, predict, save_model
from .pipeline import PipelineConfig, load_dataset, read_forecasts, run_pipeline, write_forecasts
from .schema import TEST, TRAINING, SchemaSpec, build_dataset, load_csv
from .selection import gfsfs

log = logging.getLogger("efm")


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig.from_dict({})
    if getattr(args, "loss", None):
        raw = json.loads(Path(args.config).read_text()) if args.config else {}
        raw["loss"] = args.loss
        cfg = PipelineConfig.from_dict(raw, Path(args.config).parent if args.config else None)
    return cfg


def _parse_sigmas(text: str) -> list[float]:
    """``"1:200"`` (inclusive integer range), ``"1:200:5"`` or ``"1,10,200"``."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1.0
            return list(np.arange(lo, hi + step / 2, step))
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse sigma list {text!r}") from None


# -- subcommands ------------------------------------------------------------------


def cmd_ingest(args) -> int:
    spec = SchemaSpec.load(args.schema)
    data = load_csv(args.csv, spec, TRAINING)
    data.save_json(args.out)
    print(f"{len(data)} rows, {len(data.schema)} attributes -> {args.out}")
    if args.test_csv:
        if not args.test_out:
            raise ConfigError("--test-csv needs --test-out")
        test = load_csv(args.test_csv, spec, TEST, data.schema, args.remap_unseen)
        test.save_json(args.test_out)
        print(f"{len(test)} test rows -> {args.test_out}")
    return 0


def cmd_select(args) -> int:
    cfg = _config(args)
    data = load_dataset(args.data, args.schema)
    result = gfsfs(data, cfg.kind, cfg.selection)
    result.save_json(args.out, data.schema)
    print(result.features.describe(data.schema))
    print("cv errors:", " ".join(f"{e:.6g}" for e in result.cv.errors))
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    data = load_dataset(args.data, args.schema)
    if args.features:
        features = FeatureConfig.from_dict(json.loads(Path(args.features).read_text()).get("features", {}),
                                           data.schema)
    else:
        features = FeatureConfig()
    report = train(data, features, cfg.kind, cfg.train)
    save_model(args.out, report.final_params, features, data.schema, loss=cfg.kind.value, mode="EFM")
    if args.trace:
        report.write_csv(args.trace)
    te = report.training_errors
    print(f"final training error {te[-1]:.6g} after {len(te)} iterations ({report.halvings} halvings)")
    return 0


def cmd_predict(args) -> int:
    params, features, schema, _ = load_model(args.model)
    data = load_dataset(args.data, args.schema, TEST, schema, args.remap_unseen)
    fc = predict(params, features, data)
    write_forecasts([(k[0], k[1], a, f) for k, a, f in zip(data.keys, data.responses, fc)], args.out)
    print(f"{len(fc)} forecasts -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    fc, act = read_forecasts(args.forecasts)
    try:
        report = evaluate(fc, act)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    if args.mode:
        cfg = replace(cfg, mode=args.mode)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    if not cfg.output_dir:
        raise ConfigError("no output directory (config pipeline.output_dir or --output-dir)")
    result = run_pipeline(cfg)
    print(result.features.describe(result.schema))
    if result.evaluation:
        print(result.evaluation.to_json())
    return 0


def cmd_lps_sweep(args) -> int:
    rows = sweep_sigma(_parse_sigmas(args.sigmas), SyntheticConfig(n=args.n, seed=args.seed))
    if args.out:
        write_sweep_csv(rows, args.out)
        print(f"{len(rows)} rows -> {args.out}")
    else:
        write_sweep_csv(rows, sys.stdout)
    return 0


def cmd_theorem_check(args) -> int:
    if args.data:
        data = load_dataset(args.data, args.schema)
        names = args.attributes.split(",") if args.attributes else []
        features = FeatureConfig(tuple(data.schema.index_of(n) for n in names))
        reports = [verify_theorem1(data, features)]
    else:
        reports = []
        for s in range(args.instances):
            rng = np.random.default_rng(args.seed + s)
            n = int(rng.integers(2, 8))
            d = np.exp(rng.normal(1.0, 1.0, n))
            data = build_dataset({"a": [str(v) for v in rng.integers(0, 2, n)]}, d)
            features = FeatureConfig((0,)) if s % 2 else FeatureConfig()
            reports.append(verify_theorem1(data, features))
    bad = [r for r in reports if not r.holds]
    for i, r in enumerate(reports):
        status = "ok" if r.holds else "VIOLATED " + "; ".join(r.violations)
        print(f"{i:3d} ratio={r.ratio_indicator:10.4g} es_ratio={r.es_ratio:8.4g} pes_ratio={r.pes_ratio:8.4g} {status}")
    print(f"{len(reports) - len(bad)}/{len(reports)} instances satisfy the bounds")
    return 0 if not bad else 1


def cmd_distribution(args) -> int:
    values = []
    for path in args.data:
        values.append(load_dataset(path, args.schema).responses)
    fr = response_distribution(np.concatenate(values), args.bins)
    print(format_distribution(fr))
    return 0


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="efm", description="Exponential factorization machine toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="encode CSV data into dataset JSON")
    s.add_argument("--schema", required=True, help="schema spec JSON")
    s.add_argument("--csv", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--test-csv")
    s.add_argument("--test-out")
    s.add_argument("--remap-unseen", action="store_true")
    s.set_defaults(func=cmd_ingest)

    def common(sp, data=True):
        sp.add_argument("--config", help="pipeline config JSON")
        sp.add_argument("--loss", choices=["ES", "PES"])
        if data:
            sp.add_argument("--data", required=True, help="dataset JSON or CSV")
            sp.add_argument("--schema", help="schema spec JSON for CSV input")

    s = sub.add_parser("select", help="run greedy feature selection")
    common(s)
    s.add_argument("--out", required=True, help="selection JSON")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("train", help="fit a model for a fixed feature set")
    common(s)
    s.add_argument("--features", help="selection JSON (default: intercept only)")
    s.add_argument("--out", required=True, help="model JSON")
    s.add_argument("--trace", help="write the per-iteration trace CSV")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="forecast with a saved model")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--schema")
    s.add_argument("--remap-unseen", action="store_true")
    s.add_argument("--out", required=True, help="forecasts CSV")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="store and chain metrics of a forecasts CSV")
    s.add_argument("--forecasts", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("pipeline", help="selection, refit and test forecasts")
    common(s, data=False)
    s.add_argument("--mode", choices=["EFM", "logFM"])
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("lps-sweep", help="compare LS and LPS line fits over noise levels")
    s.add_argument("--sigmas", default="1:200")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_lps_sweep)

    s = sub.add_parser("theorem-check", help="check the ES/PES minimizer loss bounds")
    s.add_argument("--data")
    s.add_argument("--schema")
    s.add_argument("--attributes", help="comma-separated main effects to include")
    s.add_argument("--instances", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_theorem_check)

    s = sub.add_parser("distribution", help="response distribution over quarters of the maximum")
    s.add_argument("--data", nargs="+", required=True)
    s.add_argument("--schema")
    s.add_argument("--bins", type=int, default=4)
    s.set_defaults(func=cmd_distribution)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except EFMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
