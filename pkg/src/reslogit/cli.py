"""Command-line entry point.

    reslogit train|evaluate|elasticity|demo-redbus --config PATH [--seed N] [--out DIR]

On failure the process exits non-zero and the last stderr line is a JSON
object ``{"error": <type>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import dataio, redbus
from .config import RunConfig, parse_config
from .core import Dataset, UtilitySpec, build_design
from .model import log_likelihood, predict_log_proba
from .stats import SingularInformationWarning, accuracy, elasticity_report, sensitivity_ratios
from .train import train

log = logging.getLogger("reslogit")


def _resolve_reference(reference: str, alt_names) -> int:
    if reference in alt_names:
        return alt_names.index(reference)
    if reference.isdigit() and int(reference) < len(alt_names):
        return int(reference)
    raise ValueError(f"reference alternative {reference!r} is neither a label nor an index of {list(alt_names)}")


def _load(cfg: RunConfig, path: str | None = None) -> Dataset:
    return dataio.load_csv(path or cfg.dataset, cfg.choice, cfg.variables, cfg.categorical, cfg.alternatives)


def _fitted(cfg: RunConfig, params_path: str | None):
    path = Path(params_path) if params_path else Path(cfg.output_dir) / "params.json"
    if not path.exists():
        raise FileNotFoundError(f"no fitted parameters at {path}; run 'reslogit train' first or pass --params")
    return dataio.load_params(path)


def _model_dataset(cfg: RunConfig, data_path: str | None, alt_names, attribute_names) -> Dataset:
    cfg_alts = cfg.alternatives or tuple(alt_names)
    ds = dataio.load_csv(data_path, cfg.choice, cfg.variables, cfg.categorical, cfg_alts)
    if ds.alt_names != tuple(alt_names):
        raise ValueError(f"data alternatives {list(ds.alt_names)} differ from the model's {list(alt_names)}")
    return dataio.align_attributes(ds, attribute_names, cfg.categorical)


def cmd_train(cfg: RunConfig) -> int:
    dataset = _load(cfg)
    spec = UtilitySpec(dataset.attribute_names, _resolve_reference(cfg.reference, dataset.alt_names), cfg.asc)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SingularInformationWarning)
        fit, curve = train(dataset, spec, cfg.model, cfg.train)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(cfg.output_dir)
    echo = cfg.echo()
    dataio.atomic_write(out / "curve.csv", dataio.curve_csv(curve))
    dataio.atomic_write(out / "coefficients.csv", dataio.coefficients_csv(fit))
    dataio.atomic_write(out / "report.txt", dataio.report_text(fit, echo, dataset.n_obs))
    dataio.atomic_write(out / "effective.cfg", cfg.to_text())
    dataio.atomic_write(
        out / "params.json",
        dataio.params_to_json(fit, cfg.model, spec, dataset.alt_names, dataset.attribute_names),
    )
    if fit.params.thetas:
        dataio.atomic_write(out / "thetas.csv", dataio.thetas_csv(fit))
    if cfg.sensitivity_variable and cfg.sensitivity_dummies:
        table = sensitivity_ratios(fit.params, dataset, fit.design, cfg.sensitivity_variable, cfg.sensitivity_dummies)
        dataio.atomic_write(out / "sensitivity.csv", dataio.sensitivity_csv(table))
    print(f"{fit.kind.label}: log-likelihood {fit.final_ll:.3f}, AIC {fit.aic:.1f}, "
          f"validation accuracy {fit.validation_accuracy:.4f} -> {out}")
    return 0


def cmd_evaluate(cfg: RunConfig, data: str | None, params_path: str | None) -> int:
    params, kind, spec, alt_names, attribute_names = _fitted(cfg, params_path)
    path = data or cfg.evaluate_data
    if not path:
        raise ValueError("no held-out data: set evaluate_data in the config or pass --data")
    ds = _model_dataset(cfg, path, alt_names, attribute_names)
    design = build_design(ds, spec)
    ll = log_likelihood(params, ds, design, kind)
    acc = accuracy(params, ds, design, kind)
    logp = predict_log_proba(params, ds, design, kind)
    out = Path(cfg.output_dir)
    lines = [("model", kind.tag.value), ("label", kind.label), ("data", str(Path(path).resolve())),
             ("n_observations", str(ds.n_obs)), ("log_likelihood", repr(ll)),
             ("accuracy", repr(acc)), ("error", repr(1.0 - acc))]
    dataio.atomic_write(out / "evaluation.txt", "".join(f"{k}: {v}\n" for k, v in lines))
    rows = ["row,chosen,predicted," + ",".join(f"p_{a}" for a in alt_names)]
    pred = np.argmax(logp, axis=1)
    for n in range(ds.n_obs):
        probs = ",".join(repr(float(p)) for p in np.exp(logp[n]))
        rows.append(f"{n},{alt_names[ds.choices[n]]},{alt_names[pred[n]]},{probs}")
    dataio.atomic_write(out / "predictions.csv", "\n".join(rows) + "\n")
    print(f"{kind.label}: log-likelihood {ll:.3f}, accuracy {acc:.4f} on {ds.n_obs} observations")
    return 0


def cmd_elasticity(cfg: RunConfig, data: str | None, params_path: str | None, variable: str | None) -> int:
    params, kind, spec, alt_names, attribute_names = _fitted(cfg, params_path)
    variable = variable or cfg.elasticity_variable
    if not variable:
        raise ValueError("no variable: set elasticity_variable in the config or pass --variable")
    ds = _model_dataset(cfg, data or cfg.dataset, alt_names, attribute_names)
    design = build_design(ds, spec)
    rep = elasticity_report(params, ds, design, kind, variable, cfg.elasticity_grid)
    out = Path(cfg.output_dir)
    dataio.atomic_write(out / "elasticity_point.csv", dataio.elasticity_point_csv(rep))
    dataio.atomic_write(out / "elasticity_arc.csv", dataio.elasticity_arc_csv(rep))
    for a, e in zip(rep.alt_names, rep.point):
        print(f"{a}: {e:.4f}")
    return 0


def cmd_demo_redbus() -> int:
    results = redbus.run_all()
    print(redbus.format_table(results))
    bad = [m for r in results for m in r.mismatches]
    if bad:
        raise AssertionError("red/blue bus table mismatch: " + "; ".join(bad))
    print("all values match the reference table")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reslogit", description="Residual logit choice-model estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="key = value run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("train", help="estimate a model and write curve, coefficients and report"))
    p = sub.add_parser("evaluate", help="score a held-out CSV with fitted parameters")
    common(p)
    p.add_argument("--data", help="held-out CSV (defaults to evaluate_data)")
    p.add_argument("--params", help="params.json (defaults to <out>/params.json)")
    p = sub.add_parser("elasticity", help="point and arc elasticities for one variable")
    common(p)
    p.add_argument("--data", help="CSV to average over (defaults to dataset)")
    p.add_argument("--params", help="params.json (defaults to <out>/params.json)")
    p.add_argument("--variable", help="variable name (defaults to elasticity_variable)")
    common(sub.add_parser("demo-redbus", help="print the red/blue bus illustration and self-check it"),
           config_required=False)
    return parser


def _run(args) -> int:
    if args.command == "demo-redbus":
        return cmd_demo_redbus()
    cfg = parse_config(args.config).with_overrides(seed=args.seed, output_dir=args.out)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "evaluate":
        return cmd_evaluate(cfg, args.data, args.params)
    return cmd_elasticity(cfg, args.data, args.params, args.variable)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    threads = os.environ.get("RESLOGIT_THREADS")
    try:
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=int(threads)):
                return _run(args)
        return _run(args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to the error line
        log.debug("failure", exc_info=True)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
