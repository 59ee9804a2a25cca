"""Command-line front end: ``fit``, ``generate``, ``evaluate``, ``attack`` and ``demo``.

Domain errors go to stderr as one JSON line with a stable ``code`` and exit
status 1; bad flags exit with status 2.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import CONTINUOUS, NOMINAL, ORDINAL, Schema, decode, encode, load_csv, split, toy_dataset
from .errors import CvxsynthError
from .neighborhood import EXTERNAL_FILE, EmbeddingSource, build_index
from .privacy import PRIVACY_METRICS, aia, mia, privacy_report
from .synthesizer import SynthesizerBundle, generate, load, match_target_cardinality, save
from .trainer import TrainConfig, _stream, train_state
from .utility import UTILITY_METRICS, utility_report

log = logging.getLogger("cvxsynth")

_GENERATE, _MATCH = 3, 4
ALL_METRICS = UTILITY_METRICS + PRIVACY_METRICS


class UsageError(Exception):
    pass


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(**paths) -> dict:
    return {k: {"file": Path(p).name, "sha256": _sha256(p)} for k, p in paths.items() if p is not None}


def _threads() -> int:
    raw = os.environ.get("CVXS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"CVXS_THREADS must be an integer, got {raw!r}") from None


# --- fit -------------------------------------------------------------------


def _train_config(args) -> TrainConfig:
    try:
        return TrainConfig(k=args.k, gen=args.gen, disc_train_count=args.disc_steps, neb_epochs=args.epochs,
                           alpha_clip=args.alpha_clip, optimizer=args.optimizer, lr=args.lr, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def fit_bundle(table, cfg: TrainConfig, source: EmbeddingSource | None = None) -> SynthesizerBundle:
    data = encode(table)
    index = build_index(data, cfg.k, source)
    state = train_state(data, index, cfg)
    return SynthesizerBundle.from_state(data, index, cfg, state)


def cmd_fit(args) -> int:
    schema = Schema.load(args.schema)
    table = load_csv(args.data, schema)
    cfg = _train_config(args)
    weights = {CONTINUOUS: args.weight_continuous, ORDINAL: args.weight_ordinal, NOMINAL: args.weight_nominal}
    try:
        if args.embedding:
            source = EmbeddingSource(EXTERNAL_FILE, weights, args.embedding)
        else:
            source = EmbeddingSource(weights=weights)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    log.info("fitting on %d rows, %d features", table.n_rows, len(schema))
    bundle = fit_bundle(table, cfg, source)
    save(bundle, args.out)
    report_path = args.report or f"{args.out}.report.json"
    _write_json(report_path, {"config": cfg.to_dict(), "train": bundle.report.to_dict(include_timing=True)})
    log.info("wrote %s and %s", args.out, report_path)
    return 0


# --- generate --------------------------------------------------------------


def generate_table(bundle: SynthesizerBundle, multiplier: float, match: bool, seed: int | None):
    if seed is not None:
        bundle.rng = _stream(seed, _GENERATE)
    synth = generate(bundle, multiplier).table
    if match:
        real = decode(bundle.data)
        synth = match_target_cardinality(synth, real, _stream(bundle.config.seed if seed is None else seed, _MATCH))
    return synth


def cmd_generate(args) -> int:
    if not args.multiplier > 0:
        raise UsageError("--multiplier must be positive")
    bundle = load(args.model)
    synth = generate_table(bundle, args.multiplier, args.match_target_cardinality, args.seed)
    synth.with_schema(bundle.schema.without_ranges()).to_csv(args.out)
    log.info("wrote %d synthetic rows to %s", synth.n_rows, args.out)
    return 0


# --- evaluate / attack -----------------------------------------------------


def _parse_metrics(raw: str | None) -> list[str]:
    if raw is None:
        return list(ALL_METRICS)
    chosen = [m.strip() for m in raw.split(",") if m.strip()]
    unknown = sorted(set(chosen) - set(ALL_METRICS))
    if unknown:
        raise UsageError(f"unknown metrics {unknown}; choose from {list(ALL_METRICS)}")
    return chosen


def evaluate_tables(real, synth, holdout, metrics, seed: int, threads: int = 1) -> dict:
    """Run each selected metric as an independent task and merge the results in a fixed order."""

    def run(name):
        if name in UTILITY_METRICS:
            return "utility", utility_report(real, synth, holdout, [name], seed).to_dict()
        return "privacy", privacy_report(real, synth, holdout, [name], seed).to_dict()

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(run, metrics))
    out = {"utility": {}, "privacy": {}}
    for group, frag in parts:
        per = frag.pop("per_feature", None)
        out[group].update(frag)
        if per:
            out[group].setdefault("per_feature", {}).update(per)
    return out


def cmd_evaluate(args) -> int:
    metrics = _parse_metrics(args.metrics)
    threads = _threads()
    schema = Schema.load(args.schema)
    real = load_csv(args.real, schema)
    synth = load_csv(args.synthetic, schema)
    holdout = load_csv(args.holdout, schema) if args.holdout else None
    skipped = [m for m in ("holdout", "crossclass", "mia") if m in metrics and holdout is None]
    if skipped:
        log.warning("no --holdout given; skipping %s", ", ".join(skipped))
    report = evaluate_tables(real, synth, holdout, metrics, args.seed, threads)
    report["inputs"] = _provenance(real=args.real, synthetic=args.synthetic, holdout=args.holdout, schema=args.schema)
    report["seed"] = args.seed
    mia_doc = report["privacy"].get("mia")
    if mia_doc is not None and args.mia_csv:
        _mia_csv(mia_doc, args.mia_csv)
    _write_json(args.report, report)
    log.info("wrote %s", args.report)
    return 0


def _mia_csv(doc: dict, path) -> None:
    from .privacy import MiaResult

    MiaResult(tuple(doc["thresholds"]), tuple(doc["access_fractions"]), doc["precision"], doc["flagged"]).write_csv(path)


def cmd_attack(args) -> int:
    schema = Schema.load(args.schema)
    real = load_csv(args.real, schema)
    holdout = load_csv(args.holdout, schema)
    synth = load_csv(args.synthetic, schema)
    pool = real.concat(holdout)
    flags = np.r_[np.ones(real.n_rows, dtype=bool), np.zeros(holdout.n_rows, dtype=bool)]
    result = mia(synth, pool, flags, seed=args.seed, cont_tol=args.cont_tol)
    doc = {"mia": result.to_dict(), "seed": args.seed, "cont_tol": args.cont_tol,
           "inputs": _provenance(real=args.real, holdout=args.holdout, synthetic=args.synthetic, schema=args.schema)}
    if schema.quasi_identifiers:
        doc["aia"] = aia(synth, real, seed=args.seed)
    else:
        log.warning("schema declares no quasi-identifiers; skipping attribute inference")
    _write_json(args.report, doc)
    if args.mia_csv:
        result.write_csv(args.mia_csv)
    log.info("wrote %s", args.report)
    return 0


# --- demo ------------------------------------------------------------------


SUMMARY_KEYS = ("ttest_mean_p", "kl_mean", "propensity", "log_cluster", "cv_abs_diff", "holdout_f1_abs_diff",
                "crossclass_abs_diff", "ks2d_stat", "ks2d_p", "euclid_mean", "hausdorff", "cosine_mean",
                "exact_match_pct")


def cmd_demo(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    table = toy_dataset(args.n, args.seed)
    train, test = split(table, 0.7, args.seed)
    schema = table.schema
    schema.save(out / "schema.json")
    table.to_csv(out / "data.csv")
    train.to_csv(out / "train.csv")
    test.to_csv(out / "test.csv")

    cfg = TrainConfig(neb_epochs=args.epochs, seed=args.seed)
    log.info("demo: training on %d rows for %d epochs", train.n_rows, cfg.neb_epochs)
    bundle = fit_bundle(train, cfg)
    save(bundle, out / "model.cvxs")
    _write_json(out / "train_report.json", {"config": cfg.to_dict(), "train": bundle.report.to_dict(include_timing=False)})

    synth = generate_table(bundle, 5.0, True, args.seed).with_schema(schema)
    synth.to_csv(out / "synthetic.csv")
    log.info("demo: evaluating %d synthetic rows", synth.n_rows)
    report = evaluate_tables(train, synth, test, list(ALL_METRICS), args.seed, _threads())
    report["inputs"] = _provenance(real=out / "train.csv", synthetic=out / "synthetic.csv",
                                   holdout=out / "test.csv", schema=out / "schema.json")
    report["seed"] = args.seed
    _write_json(out / "report.json", report)
    _mia_csv(report["privacy"]["mia"], out / "mia.csv")

    flat = {**report["utility"], **report["privacy"]}
    summary = {k: flat[k] for k in SUMMARY_KEYS if k in flat}
    _write_json(out / "summary.json", summary)
    width = max(map(len, summary))
    lines = [f"{k:<{width}}  {v:.6f}" for k, v in summary.items()]
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    log.info("demo finished in %.1f s; outputs in %s", time.perf_counter() - started, out)
    return 0


# --- parser ----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"code": "UsageError", "message": message}) + "\n")
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cvxsynth", description="Convex-space synthetic tabular data: fit, generate, evaluate.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="train a model and write a bundle")
    f.add_argument("--data", required=True)
    f.add_argument("--schema", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--report", help="training report JSON (default: <out>.report.json)")
    f.add_argument("--k", type=int, default=5)
    f.add_argument("--gen", type=int, default=None, help="samples per neighborhood (default: k)")
    f.add_argument("--alpha-clip", type=float, default=0.351)
    f.add_argument("--epochs", type=int, default=10)
    f.add_argument("--disc-steps", type=int, default=5)
    f.add_argument("--lr", type=float, default=1e-3)
    f.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    f.add_argument("--seed", type=int, default=42)
    f.add_argument("--embedding", help="headerless CSV with one embedding row per data row")
    f.add_argument("--weight-continuous", type=float, default=1.0)
    f.add_argument("--weight-ordinal", type=float, default=1.0)
    f.add_argument("--weight-nominal", type=float, default=1.0)
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("generate", help="sample synthetic rows from a bundle")
    g.add_argument("--model", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--multiplier", type=float, default=5.0)
    g.add_argument("--match-target-cardinality", action="store_true")
    g.add_argument("--seed", type=int, default=None, help="override the bundle's generation stream")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="utility and privacy report")
    e.add_argument("--real", required=True)
    e.add_argument("--synthetic", required=True)
    e.add_argument("--schema", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--holdout")
    e.add_argument("--metrics", help=f"comma-separated subset of {','.join(ALL_METRICS)}")
    e.add_argument("--mia-csv")
    e.add_argument("--seed", type=int, default=42)
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("attack", help="membership and attribute inference attacks")
    a.add_argument("--real", required=True, help="rows used for training (members)")
    a.add_argument("--holdout", required=True, help="rows not used for training")
    a.add_argument("--synthetic", required=True)
    a.add_argument("--schema", required=True)
    a.add_argument("--report", required=True)
    a.add_argument("--mia-csv")
    a.add_argument("--cont-tol", type=float, default=0.05)
    a.add_argument("--seed", type=int, default=42)
    a.set_defaults(func=cmd_attack)

    d = sub.add_parser("demo", help="end-to-end run on the toy dataset")
    d.add_argument("--out", required=True)
    d.add_argument("--seed", type=int, default=42)
    d.add_argument("--n", type=int, default=500)
    d.add_argument("--epochs", type=int, default=10)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(json.dumps({"code": "UsageError", "message": str(exc)}) + "\n")
        return 2
    except CvxsynthError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), default=str) + "\n")
        return 1
    except OSError as exc:
        sys.stderr.write(json.dumps({"code": "IOError", "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
