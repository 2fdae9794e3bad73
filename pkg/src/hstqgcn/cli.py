"""Command-line entry point: ``hstqgcn <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric or tolerance failure.
Set ``HSTQGCN_LOG`` (DEBUG, INFO, WARNING, ...) for log verbosity; logs go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import shutil
import sys
import tempfile

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, CheckpointVersionError
from .config import ModelConfig
from .geospatial import ConfigurationError, OutOfBoundsError, read_pois, write_pois
from .pipeline.data import DataError, DatasetBundle, ingest_trips_report, prepare_dataset, split_by_taxi, write_trips
from .pipeline.synthetic import generate_synthetic_city
from .pipeline.training import DivergenceError, ablate, evaluate, predictions, train, write_ablation_csv
from .prediction import score_dump, write_prediction_dump

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("hstqgcn")


class UsageError(Exception):
    pass


class ToleranceFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# output helpers ---------------------------------------------------------------


def _dump_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _render(rows: list, fmt: str, columns=None) -> str:
    """Rows of dicts as JSON or CSV text."""
    if fmt == "json":
        return json.dumps(rows, indent=1, sort_keys=True)
    columns = columns or list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue().rstrip("\n")


def _load_config(args) -> ModelConfig:
    cfg = ModelConfig.load(args.config) if getattr(args, "config", None) else ModelConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        changes["epochs"] = args.epochs
    cfg = cfg.replace(**changes) if changes else cfg
    cfg.validate()
    return cfg


def _config_for_data(args, data_dir) -> ModelConfig:
    """--config wins; otherwise the config.json stored next to the data."""
    if not getattr(args, "config", None):
        stored = os.path.join(data_dir, "config.json")
        if os.path.exists(stored):
            args.config = stored
    return _load_config(args)


def _staged(out_dir):
    """Temporary sibling directory; moved into place only when a command succeeds."""
    parent = os.path.dirname(os.path.abspath(out_dir))
    os.makedirs(parent, exist_ok=True)
    return tempfile.mkdtemp(prefix=".staging-", dir=parent)


def _commit(stage, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name in sorted(os.listdir(stage)):
        os.replace(os.path.join(stage, name), os.path.join(out_dir, name))
    shutil.rmtree(stage, ignore_errors=True)


def _summary_line(bundle: DatasetBundle) -> str:
    s = bundle.summary()
    return f"sequences={s['sequences']}, grids={s['grids']}, pois={s['pois']}"


# subcommands ----------------------------------------------------------------------


def cmd_synth(args):
    cfg = _load_config(args)
    seed = cfg.seed
    grid, pois, trips = generate_synthetic_city(seed, args.rows, args.cols, args.taxis, args.trips, cfg.k_poi,
                                                args.cell_size)
    cfg = cfg.replace(bbox=[float(v) for v in grid.bbox], cell_size_m=float(args.cell_size))
    bundle = prepare_dataset(trips, pois, cfg, grid)
    stage = _staged(args.out)
    try:
        write_trips(os.path.join(stage, "trips.csv"), trips)
        write_pois(os.path.join(stage, "pois.csv"), pois)
        cfg.save(os.path.join(stage, "config.json"))
        bundle.save(stage)
        _commit(stage, args.out)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    print(f"trips={len(trips)}, " + _summary_line(bundle))


def cmd_preprocess(args):
    for p in (args.trips, args.pois):
        if not os.path.isfile(p):
            raise DataError(f"input file not found: {p}")
    cfg = _load_config(args)
    trips, report = ingest_trips_report(args.trips)
    try:
        pois = read_pois(args.pois)
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad POI file {args.pois}: {exc}") from exc
    bundle = prepare_dataset(trips, pois, cfg)
    stage = _staged(args.out)
    try:
        bundle.save(stage)
        cfg.save(os.path.join(stage, "config.json"))
        _commit(stage, args.out)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    if report.skipped:
        print(f"skipped={report.skipped} of rows={report.rows}", file=sys.stderr)
    print(_summary_line(bundle))


def _split(cfg, bundle):
    return split_by_taxi(bundle.sequences, cfg.split_fractions, cfg.seed)


def cmd_train(args):
    bundle = DatasetBundle.load(args.data)
    cfg = _config_for_data(args, args.data)
    split = _split(cfg, bundle)
    ckpt, report = train(cfg, split, bundle)
    stage = _staged(args.out)
    try:
        ckpt.save(os.path.join(stage, "checkpoint.json"))
        _dump_json(os.path.join(stage, "report.json"), report.to_json())
        report.write_curves(os.path.join(stage, "curves.csv"))
        _dump_json(os.path.join(stage, "split.json"), {k: [int(t) for t in v] for k, v in split.taxis.items()})
        _commit(stage, args.out)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    best = report.best_epoch
    eds = report.val_eds[best] if best >= 0 else report.initial["val_eds"]
    print(f"epochs={len(report.train_loss)}, best_epoch={best + 1}, val_eds_km={eds:.4f}")
    log.info("training wall clock %.1f s", report.wall_clock_s)


def _pick(split, bundle, which):
    if which == "all":
        return bundle.sequences
    return getattr(split, which)


def cmd_evaluate(args):
    if args.predictions:
        if not os.path.isfile(args.predictions):
            raise DataError(f"prediction dump not found: {args.predictions}")
        try:
            metrics = score_dump(args.predictions)
        except (KeyError, ValueError) as exc:
            raise DataError(f"bad prediction dump: {exc}") from exc
        if metrics["n"] == 0:
            raise DataError("prediction dump is empty")
    else:
        if not args.checkpoint or not args.data:
            raise UsageError("evaluate needs --checkpoint and --data, or --predictions")
        ckpt = Checkpoint.load(args.checkpoint)
        bundle = DatasetBundle.load(args.data)
        seqs = _pick(_split(ckpt.config, bundle), bundle, args.split)
        metrics = evaluate(ckpt, bundle, seqs)
        if args.out:
            stage = _staged(args.out)
            try:
                argmax, pred, truth = predictions(ckpt, bundle, seqs)
                write_prediction_dump(os.path.join(stage, "predictions.csv"), range(len(seqs)), argmax, pred, truth)
                _dump_json(os.path.join(stage, "metrics.json"), metrics)
                _commit(stage, args.out)
            finally:
                shutil.rmtree(stage, ignore_errors=True)
    print(_render([metrics], args.format))


def cmd_ablate(args):
    bundle = DatasetBundle.load(args.data)
    cfg = _config_for_data(args, args.data)
    rows = ablate(cfg, _split(cfg, bundle), bundle)
    stage = _staged(args.out)
    try:
        write_ablation_csv(os.path.join(stage, "ablation.csv"), rows)
        _dump_json(os.path.join(stage, "ablation.json"), rows)
        _commit(stage, args.out)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    print(_render(rows, args.format, ["config", "label", "eds_km", "rmse_km"]))


def cmd_gradcheck(args):
    from .gradcheck import run_suite

    sizes = tuple(int(s) for s in args.sizes.split(","))
    if any(s < 1 for s in sizes):
        raise UsageError("--sizes must list positive qubit counts")
    results = run_suite(args.seed if args.seed is not None else 0, sizes, args.draws, args.inject_fault)
    rows = [{"component": k, "max_error": v["error"], "tol": v["tol"], "status": "ok" if v["ok"] else "FAIL"}
            for k, v in results.items()]
    text = _render(rows, args.format, ["component", "max_error", "tol", "status"])
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"gradcheck.{args.format}"), "w") as fh:
            fh.write(text + "\n")
    bad = [r["component"] for r in rows if r["status"] != "ok"]
    if bad:
        raise ToleranceFailure(f"gradient check failed for {', '.join(bad)}")


def cmd_circuit_dump(args):
    from .gradcheck import random_qgcn_angles, random_qpool_angles
    from .quantum import qgcn_circuit, qpool_circuit

    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    if args.which == "qgcn":
        circ = qgcn_circuit(args.qubits, args.layers)
        angles = random_qgcn_angles(rng, args.qubits, args.layers)
    else:
        circ = qpool_circuit(args.qubits, args.layers)
        angles = random_qpool_angles(rng, circ)
    if args.zero_angles:
        angles = np.zeros(len(circ))
    z = circ.expvals(angles)
    if args.format == "json":
        doc = {"n_qubits": circ.n_qubits, "gates": circ.dump(angles), "expval_z": [float(v) for v in z]}
        text = json.dumps(doc, indent=1, sort_keys=True)
    else:
        rows = [{"index": g["index"], "gate": g["gate"], "wires": " ".join(map(str, g["wires"])),
                 "angle": g.get("angle", ""), "param": g.get("param", "")} for g in circ.dump(angles)]
        text = _render(rows, "csv", ["index", "gate", "wires", "angle", "param"])
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"circuit_{args.which}.{args.format}"), "w") as fh:
            fh.write(text + "\n")


# parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="ModelConfig JSON")
    common.add_argument("--seed", type=int, help="overrides config.seed")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="stdout format")

    p = _Parser(prog="hstqgcn", description="Hybrid quantum graph / temporal model for taxi destinations.")
    p.add_argument("--version", action="version", version=f"hstqgcn {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic city and its dataset artifacts")
    s.add_argument("--out", required=True)
    s.add_argument("--rows", type=int, default=8)
    s.add_argument("--cols", type=int, default=8)
    s.add_argument("--taxis", type=int, default=20)
    s.add_argument("--trips", type=int, default=100, help="trips per taxi")
    s.add_argument("--cell-size", type=float, default=500.0, help="cell edge in meters")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", parents=[common], help="grid, adjacency and sequences from raw files")
    s.add_argument("--trips", required=True)
    s.add_argument("--pois", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", parents=[common], help="train and keep the best validation checkpoint")
    s.add_argument("--data", required=True, help="directory from preprocess or synth")
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="EDS / RMSE of a checkpoint or a prediction dump")
    s.add_argument("--checkpoint")
    s.add_argument("--data")
    s.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    s.add_argument("--predictions", help="score an existing prediction CSV instead")
    s.add_argument("--out", help="write metrics.json and predictions.csv here")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ablate", parents=[common], help="train and test the four ablation configurations")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference and parameter-shift checks")
    s.add_argument("--sizes", default="2,3,4", help="comma-separated qubit counts")
    s.add_argument("--draws", type=int, default=5, help="random angle draws per circuit")
    s.add_argument("--inject-fault", action="store_true", help="scale analytic gradients by 1.01 (negative control)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("circuit-dump", parents=[common], help="print a circuit's gate list")
    s.add_argument("--which", choices=("qgcn", "qpool"), default="qgcn")
    s.add_argument("--qubits", type=int, default=8)
    s.add_argument("--layers", type=int, default=2)
    s.add_argument("--zero-angles", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_circuit_dump)
    return p


def _setup_logging():
    level = os.environ.get("HSTQGCN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, ToleranceFailure, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ConfigurationError, OutOfBoundsError, CheckpointVersionError, OSError, KeyError,
            ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
