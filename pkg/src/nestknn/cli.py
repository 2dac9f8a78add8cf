"""Command-line pipeline: synth, build-db, calibrate, retrieve, evaluate, grid.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
invariant violation. Every written file is logged with its BLAKE2b-64
checksum.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import calibration, config, database, evaluation, formats, grid, synthetic
from .detector import Detector
from .errors import ConfigError, DataError, InvariantError, NestedKnnError, ValidationError

log = logging.getLogger("nestknn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4


def _written(path) -> None:
    digest = formats.checksum64(Path(path).read_bytes())
    log.info("wrote %s (blake2b-64 %016x)", path, digest)


def _load_cfg(args) -> config.RunConfig:
    return config.load_config(args.config) if args.config else config.RunConfig()


def _labelled(samples, threshold):
    out = []
    for s in samples:
        s = database.label_ref_phase(s, threshold)
        if s is not None:
            out.append(s)
    return out


def _read_all(paths):
    samples, order = [], None
    for p in paths:
        part, o = formats.read_samples(p)
        if order is not None and list(o) != list(order):
            raise DataError(f"{p}: channel order differs from {paths[0]}")
        order = o
        samples.extend(part)
    return samples, order


def _check_order(order, cfg, path):
    if order and tuple(order) != tuple(cfg.channel_order):
        raise ConfigError(f"{path}: channel order {list(order)} does not match the configuration")


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    sc = synthetic.scenario_separable(
        cfg.scenario_separation_sigma, cfg.scenario_n_per_class, cfg.seed,
        channel_count=cfg.channel_count, sigma=cfg.scenario_sigma_k,
        n_holdout=cfg.scenario_n_holdout,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write = formats.write_samples_binary if args.binary else formats.write_samples_text
    ext = "apdb" if args.binary else "csv"
    for name, rows in (("build", sc.build), ("holdout", sc.holdout)):
        path = out / f"{name}.{ext}"
        write(path, rows, cfg.channel_order)
        _written(path)
    print(f"build {len(sc.build)} samples, holdout {len(sc.holdout)} samples")
    return EXIT_OK


def cmd_build_db(args) -> int:
    cfg = _load_cfg(args)
    samples, order = _read_all(args.inputs)
    _check_order(order, cfg, args.inputs[0])
    db = database.build_balanced_database(samples, cfg.database_size, cfg.seed,
                                          cfg.channel_order, cfg.ref_threshold)
    database.persist_database(db, args.out)
    _written(args.out)
    for (land, atm), n in sorted(db.stratum_counts().items()):
        print(f"{land.name}\t{atm.name}\t{n}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load_cfg(args)
    db = database.load_database(args.db)
    _check_order(db.channel_order, cfg, args.db)
    samples, order = formats.read_samples(args.calibration)
    _check_order(order, cfg, args.calibration)
    cal = calibration.subsample_calibration(_labelled(samples, cfg.ref_threshold), db,
                                            cfg.calibration_max_per_class)
    res = calibration.calibrate_all(cal, db, cfg.candidate_k, tuple(sorted(db.strata)),
                                    cfg.weights)
    Path(args.params).write_text(config.format_params(res.params))
    _written(args.params)
    out = Path(args.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ("stage", "land", "k", "threshold", "p_false", "p_hit")
    with open(out / "roc_report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("stage", "land", "k", "auc"))
        for (land, stage, k), a in sorted(res.auc.items()):
            w.writerow((stage, land.name, k, repr(a)))
    _written(out / "roc_report.csv")
    for curve in res.curves:
        path = out / f"roc_stage{curve.stage}_{config.LAND_NAMES[curve.land]}_k{curve.k}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in curve.rows():
                w.writerow((*row[:3], *(repr(float(v)) for v in row[3:])))
        _written(path)
    for land, lp in sorted(res.params.items()):
        print(land.name, " ".join(f"k{i}={s.k} p{i}={s.p:.4f}" for i, s in enumerate(lp, 1)))
    return EXIT_OK


def cmd_retrieve(args) -> int:
    cfg = _load_cfg(args)
    try:
        db = database.load_database(args.db)
    except OSError as exc:
        raise DataError(f"cannot read database {args.db}: {exc}") from exc
    _check_order(db.channel_order, cfg, args.db)
    params = config.load_params(args.params, db.channel_count)
    queries, order = formats.read_queries(args.queries)
    _check_order(order, cfg, args.queries)
    detections = Detector(db, params).retrieve_batch(queries, cfg.workers) if queries else []
    evaluation.write_detections(args.out, detections, queries)
    _written(args.out)
    print(f"{len(detections)} detections, {sum(d.precipitating for d in detections)} precipitating")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    rows = evaluation.read_detections(args.detections)
    truth, _ = formats.read_samples(args.truth)
    truth = _labelled(truth, cfg.ref_threshold)
    report = evaluation.evaluate([r.detection for r in rows], truth)
    evaluation.write_report(args.out, report)
    _written(args.out)
    for r in report:
        if r.surface == "all":
            cells = ("undefined" if v is None else f"{v:.3f}" for v in (r.pod, r.pofa, r.hss))
            print(r.detection_class, *cells, sep="\t")
    return EXIT_OK


def cmd_grid(args) -> int:
    cfg = _load_cfg(args)
    rows = evaluation.read_detections(args.detections)
    geo = [r.geo() for r in rows]
    for d in geo:
        grid.season_of(d.timestamp, cfg.season_window, cfg.season_strict)
    season = None if args.season == "all" else grid.Season(args.season)
    g = grid.grid_accumulate_sharded(geo, cfg.grid_cell_deg, season, args.quantity, cfg.workers)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = (Path(f"{prefix}.grid.csv"), Path(f"{prefix}.zonal.csv"), Path(f"{prefix}.grid.apdb"))
    grid.write_grid_text(paths[0], g)
    grid.write_zonal_text(paths[1], grid.zonal_mean(g, cfg.zonal_band_deg))
    grid.write_grid_binary(paths[2], g)
    for p in paths:
        _written(p)
    print(f"{len(g.cells)} cells")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nestknn", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log written files")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="flat key = value configuration file")
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "write a separable synthetic scenario")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--binary", action="store_true", help="write binary sample files")

    p = add("build-db", cmd_build_db, "build the balanced a-priori database")
    p.add_argument("--out", required=True)
    p.add_argument("inputs", nargs="+", help="sample files (text or binary)")

    p = add("calibrate", cmd_calibrate, "select k and p for every stage and land class")
    p.add_argument("--db", required=True)
    p.add_argument("--calibration", required=True, help="labelled sample file")
    p.add_argument("--params", required=True, help="output parameter file")
    p.add_argument("--report-dir", required=True, help="directory for ROC files")

    p = add("retrieve", cmd_retrieve, "detect occurrence and phase for a query file")
    p.add_argument("--db", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "score detections against truth")
    p.add_argument("--detections", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)

    p = add("grid", cmd_grid, "grid detections and write zonal means")
    p.add_argument("--detections", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--season", choices=("all", "winter", "summer"), default="all")
    p.add_argument("--quantity", choices=("phase", "occurrence"), default="phase")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ValidationError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except NestedKnnError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
