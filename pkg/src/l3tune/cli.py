"""Command-line driver for the install-time and runtime workflows.

Exit codes: 0 success, 2 usage, 3 backend, 4 data.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import platform
import sys
from pathlib import Path

from . import harness, selection, training
from .backend import ArchitectureProfile, BackendError, CBLASBackend, SyntheticBackend
from .core import DEFAULT_CAP_BYTES, MIB, Precision, ProblemShape, Routine, ShapeError, parse_routine_name, routine_name
from .harness import CollectionPlan, DatasetFormatError, IncompleteDatasetError
from .models import DEFAULT_GRIDS, FAMILIES, QUICK_GRIDS, canonical_family
from .runtime import MODEL_SUFFIX, ModelArtifact, ModelFormatError, RuntimeConfig, UnknownRoutineError, load
from .sampling import SamplerConfig, sample_shapes

log = logging.getLogger("l3tune")

EXIT_OK, EXIT_USAGE, EXIT_BACKEND, EXIT_DATA = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _parse_routine(text, precision=None):
    text = text.strip().lower()
    try:
        return parse_routine_name(text)
    except ValueError:
        pass
    try:
        routine = Routine(text)
    except ValueError:
        raise UsageError(f"unknown routine {text!r}") from None
    prec = Precision.DOUBLE if precision in (None, "double", "d") else Precision.SINGLE
    return routine, prec


def _parse_nt(text, max_nt):
    if text == "all":
        return list(range(1, max_nt + 1))
    out = set()
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            rng, _, step = part.partition(":")
            lo, hi = (int(v) for v in rng.split("-"))
            out.update(range(lo, hi + 1, int(step or 1)))
        elif part:
            out.add(int(part))
    nts = sorted(out)
    if not nts or nts[0] < 1 or nts[-1] > max_nt:
        raise UsageError(f"thread counts must lie in [1, {max_nt}]")
    return nts


def _parse_dims(text):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad --dims {text!r}") from None


def cmd_collect(args) -> int:
    if args.precision and args.precision not in ("single", "double", "s", "d"):
        raise UsageError("--precision must be single or double")
    routine, precision = _parse_routine(args.routine, args.precision)
    if args.backend == "synthetic":
        if not args.profile:
            raise UsageError("--profile is required with --backend synthetic")
        backend = SyntheticBackend(ArchitectureProfile.load(args.profile))
    else:
        backend = CBLASBackend(args.blas_lib, seed=args.seed)
    cap = int(args.cap_mb * MIB) if args.cap_mb else DEFAULT_CAP_BYTES
    cfg = SamplerConfig.default(routine, precision, seed=args.seed, cap_bytes=cap)
    shapes = sample_shapes(routine, precision, args.n, cfg)
    plan = CollectionPlan(routine, precision, shapes, _parse_nt(args.nt, backend.max_nt), backend, args.reps)
    ds = harness.collect(plan, args.out, resume=args.resume)
    print(f"wrote {len(ds)} samples to {args.out}")
    return EXIT_OK


def _write_tuning_log(path, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write("params,cv_rmse\n")
        for params, score in rows:
            fh.write(f"\"{json.dumps(params, sort_keys=True).replace(chr(34), chr(39))}\",{score:.9g}\n")


def cmd_train(args) -> int:
    ds = harness.read_csv(args.data)
    ds.sweep_table()  # complete sweeps required
    fams = list(FAMILIES) if args.families == "all" else [canonical_family(f) for f in args.families.split(",")]
    grids = QUICK_GRIDS if args.grid == "quick" else DEFAULT_GRIDS
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prep, results = training.train(ds, fams, seed=args.seed, folds=args.folds, grids=grids,
                                   test_fraction=args.test_fraction)
    lines = ["family,routine,test_rmse,t_eval_seconds,n_train_rows,n_test_rows,n_outliers"]
    for fam, tf in results.items():
        art = tf.artifact
        art.save(out / f"{art.name}_{fam}{MODEL_SUFFIX}")
        _write_tuning_log(out / f"tuning_{art.name}_{fam}.csv", tf.cv_log)
        t_eval = args.t_eval if args.t_eval is not None else training.eval_time(tf)
        lines.append(f"{fam},{art.name},{tf.test_rmse:.9g},{t_eval:.6g},{art.metadata['n_train_rows']},"
                     f"{art.metadata['n_test_rows']},{art.metadata['n_outliers']}")
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")
    print(f"trained {len(results)} model(s) into {out}")
    return EXIT_OK


def _test_split(art: ModelArtifact, ds):
    _, test = harness.split(ds, art.metadata.get("test_fraction", training.TEST_FRACTION),
                            art.metadata.get("seed", 0))
    return test


def cmd_select(args) -> int:
    ds = harness.read_csv(args.data)
    files = sorted(Path(args.models).glob("*" + MODEL_SUFFIX))
    if not files:
        raise UsageError(f"no *{MODEL_SUFFIX} files in {args.models}")
    reports, t_evals, model_files, seeds = {}, {}, {}, {}
    digest = ds.digest()
    for f in files:
        art = ModelArtifact.load(f, expected_digest=digest)
        if (art.routine, art.precision) != (ds.routine, ds.precision):
            continue
        test = _test_split(art, ds)
        fam = art.regressor.family
        t_eval = args.t_eval if args.t_eval is not None else selection.measure_eval_time(
            art.regressor, art.transformer, art.routine, art.nt_candidates)
        rep = selection.estimated_speedup(art.regressor, art.transformer, test, t_eval, art.nt_candidates)
        reports.setdefault(fam, []).append(rep)
        t_evals.setdefault(fam, {})[art.name] = t_eval
        model_files.setdefault(fam, {})[art.name] = f.name
        seeds[fam] = art.metadata.get("seed", 0)
    if not reports:
        raise DatasetFormatError(f"no model in {args.models} matches {routine_name(ds.routine, ds.precision)}")
    winner = selection.select_family(reports)
    cfg_path = Path(args.out)
    cfg_path.parent.mkdir(parents=True, exist_ok=True)
    for fam, reps in reports.items():
        (cfg_path.parent / f"speedup_{fam}.csv").write_text(selection.table_csv(reps))
    routines = sorted(model_files[winner])
    config = RuntimeConfig(
        machine_id=args.machine_id or platform.node() or "unknown",
        selected_family=winner,
        routines=routines,
        models=model_files[winner],
        profile_path=args.profile,
        blas_lib=args.blas_lib,
        seed=int(seeds[winner]),
        t_eval_seconds=t_evals[winner],
    )
    config.save(cfg_path)
    print(f"selected {winner}")
    return EXIT_OK


def cmd_predict(args) -> int:
    predictor = load(args.model, args.config)
    if args.routine:
        key = _parse_routine(args.routine)
    elif len(predictor.artifacts) == 1:
        key = next(iter(predictor.artifacts))
    else:
        raise UsageError("several routines loaded; pass --routine")
    routine, precision = key
    dims = _parse_dims(args.dims)
    if len(dims) != routine.arity:
        raise UsageError(f"{routine.name} takes {routine.arity} dimensions, got {len(dims)}")
    try:
        shape = ProblemShape.of(*dims)
    except ShapeError as exc:
        raise UsageError(str(exc)) from None
    if not args.execute:
        print(predictor.choose_threads(routine, precision, shape))
        return EXIT_OK
    if predictor.config is None:
        raise UsageError("--execute needs --config naming a backend")
    backend = predictor.config.backend(base_dir=Path(args.config).parent)
    nt, seconds = predictor.dispatch(backend, routine, precision, shape)
    print(nt)
    print(f"{seconds:.9g}")
    return EXIT_OK


def cmd_report(args) -> int:
    ds = harness.read_csv(args.data)
    arity = ds.routine.arity
    header = ["dim1", "dim2", "dim3"][:arity] + ["value"]
    rows = []
    if args.kind == "optimal-nt":
        for shape, nt in harness.optimal_nt_labels(ds).items():
            rows.append(list(shape.dims) + [str(nt)])
    else:
        if not args.model:
            raise UsageError("--kind speedup needs --model")
        art = ModelArtifact.load(args.model)
        test = _test_split(art, ds)
        t_eval = args.t_eval if args.t_eval is not None else selection.measure_eval_time(
            art.regressor, art.transformer, art.routine, art.nt_candidates)
        rep = selection.estimated_speedup(art.regressor, art.transformer, test, t_eval, art.nt_candidates)
        for shape, s in zip(rep.shapes, rep.s):
            rows.append(list(shape.dims) + [f"{s:.6f}"])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(args.out).write_text(buf.getvalue())
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="l3tune", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("collect", help="time sampled shapes at every thread count")
    c.add_argument("--routine", required=True, help="e.g. dgemm, or gemm with --precision")
    c.add_argument("--precision", choices=["single", "double", "s", "d"])
    c.add_argument("--n", type=int, required=True, help="number of shapes")
    c.add_argument("--backend", choices=["synthetic", "cblas"], default="synthetic")
    c.add_argument("--profile", help="architecture profile JSON (synthetic backend)")
    c.add_argument("--blas-lib", help="CBLAS shared library (cblas backend)")
    c.add_argument("--nt", default="all", help="'all' or a list such as 1,2,4 or 1-32:2")
    c.add_argument("--reps", type=int, default=3)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--cap-mb", type=float, help="memory cap in MiB (default 500)")
    c.add_argument("--out", required=True)
    c.add_argument("--resume", action="store_true", help="continue a partial --out file")
    c.set_defaults(func=cmd_collect)

    t = sub.add_parser("train", help="fit one model artifact per family")
    t.add_argument("--data", required=True)
    t.add_argument("--families", default="all", help=f"comma list of {','.join(FAMILIES)} or 'all'")
    t.add_argument("--folds", type=int, default=5)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--grid", choices=["default", "quick"], default="default")
    t.add_argument("--test-fraction", type=float, default=training.TEST_FRACTION)
    t.add_argument("--t-eval", type=float, help="record this evaluation time instead of measuring")
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("select", help="pick the family with the best estimated speedup")
    s.add_argument("--models", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True, help="config file to write")
    s.add_argument("--profile", help="profile path recorded in the config")
    s.add_argument("--blas-lib", help="BLAS library recorded in the config")
    s.add_argument("--machine-id")
    s.add_argument("--t-eval", type=float, help="use this evaluation time instead of measuring")
    s.set_defaults(func=cmd_select)

    r = sub.add_parser("predict", help="choose the thread count for one call")
    r.add_argument("--model", help="model file or directory (default: $ADSALA_MODEL_DIR)")
    r.add_argument("--config")
    r.add_argument("--routine")
    r.add_argument("--dims", required=True, help="m,k,n or p,q")
    r.add_argument("--execute", action="store_true", help="also run the kernel on the config backend")
    r.set_defaults(func=cmd_predict)

    h = sub.add_parser("report", help="heatmap-ready CSV of optimal nt or per-shape speedup")
    h.add_argument("--data", required=True)
    h.add_argument("--out", required=True)
    h.add_argument("--kind", choices=["optimal-nt", "speedup"], default="optimal-nt")
    h.add_argument("--model", help="model artifact (speedup)")
    h.add_argument("--t-eval", type=float)
    h.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"l3tune: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"l3tune: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"l3tune: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (IncompleteDatasetError, DatasetFormatError, ModelFormatError, UnknownRoutineError,
            FileNotFoundError) as exc:
        print(f"l3tune: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
