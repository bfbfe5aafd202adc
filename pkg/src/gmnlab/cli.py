"""Command line interface: ``gmnlab {generate,train,eval,check,sweep}``.

stdout carries JSON (or CSV for ``sweep``); progress and errors go to stderr.
Exit codes: 0 ok, 1 I/O, 2 usage, 3 simulator, 4 divergence, 5 property failure.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import checks
from . import geom3
from . import model as gm
from . import nbody_sim as sim
from . import train as tr

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_SIM, EXIT_DIVERGED, EXIT_PROPERTY = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


def thread_cap(requested=None):
    """Worker count: ``requested`` (default 1) capped by ``GMNLAB_THREADS`` if set."""
    jobs = 1 if requested is None else requested
    env = os.environ.get("GMNLAB_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise UsageError("GMNLAB_THREADS must be an integer, got %r" % env) from None
        if cap >= 1:
            jobs = min(jobs, cap)
    return max(1, jobs)


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers, got %r" % text) from None


def _str_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _resolve_split(path, preferred):
    """A dataset directory, or a split root holding ``train``/``val``/``test`` subdirectories."""
    if os.path.exists(os.path.join(path, "meta.json")):
        return path
    sub = os.path.join(path, preferred)
    if os.path.exists(os.path.join(sub, "meta.json")):
        return sub
    raise FileNotFoundError("no dataset at %s (expected meta.json or a %s/ subdirectory)" % (path, preferred))


def arm_drift_summary(dataset):
    if len(dataset) == 0 or dataset.layout.n_arms == 0:
        return 0.0
    rest = dataset.rest_lengths()
    final = tr.arm_lengths(dataset.final, dataset.layout)
    return float(np.max(np.abs(final - rest) / rest))


# -- commands ---------------------------------------------------------------------


def cmd_generate(args):
    try:
        spec = sim.SystemSpec(args.p, args.s, args.hinges)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.num < 0:
        raise UsageError("--num must be >= 0")
    if spec.n_particles == 0:
        raise UsageError("the system has no particles")
    if args.split:
        sizes = args.split
        if len(sizes) != 3:
            raise UsageError("--split takes TRAIN,VAL,TEST")
        splits = sim.generate_splits(spec, sizes, args.steps, args.dt, args.seed, args.softening)
        report = {}
        for name, ds in splits.items():
            sim.write_dataset(ds, os.path.join(args.out, name))
            report[name] = {"samples": len(ds), "max_relative_arm_drift": arm_drift_summary(ds)}
        _emit({"n_particles": spec.n_particles, "splits": report})
        return EXIT_OK
    ds = sim.generate_dataset(spec, args.num, args.steps, args.dt, args.seed, args.softening)
    sim.write_dataset(ds, args.out)
    _emit({"samples": len(ds), "n_particles": spec.n_particles, "max_relative_arm_drift": arm_drift_summary(ds)})
    return EXIT_OK


def cmd_train(args):
    train_dir = _resolve_split(args.data, "train")
    if args.val:
        val_dir = _resolve_split(args.val, "val")
    elif train_dir != args.data and os.path.exists(os.path.join(args.data, "val", "meta.json")):
        val_dir = os.path.join(args.data, "val")
    else:
        val_dir = None
        _progress("no validation set found; selecting the checkpoint on the training set")
    train_set = sim.read_dataset(train_dir)
    val_set = sim.read_dataset(val_dir) if val_dir else train_set
    if args.epochs < 0:
        raise UsageError("--epochs must be >= 0")
    mcfg = gm.ModelConfig(kind=args.model, layers=args.layers, hidden=args.hidden,
                          stick_phi2=args.stick_phi2, normalize=not args.no_normalize)
    tcfg = tr.TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr, weight_decay=args.wd,
                          seed=args.seed, reg_lambda=args.reg_lambda, train_path=train_dir, val_path=val_dir)
    if tcfg.batch_size > len(train_set) and len(train_set):
        _progress("batch size %d exceeds the %d training samples; using %d"
                  % (tcfg.batch_size, len(train_set), len(train_set)))
    t0 = time.perf_counter()
    ckpt, history = tr.train(mcfg, tcfg, train_set, val_set, log=sys.stderr if args.verbose else None)
    wall = time.perf_counter() - t0
    ckpt.save(args.out)
    with open(tr.sidecar_path(args.out, "history"), "w", encoding="utf-8") as fh:
        json.dump(history, fh, indent=1)
    best = ckpt.best_val_mse
    _emit({
        "model": mcfg.kind,
        "epochs": len(history),
        "best_epoch": ckpt.best_epoch,
        "val_mse_x1e2": None if best != best else 100.0 * best,
        "wall_seconds": wall,
    })
    return EXIT_OK


def cmd_eval(args):
    ckpt = tr.Checkpoint.load(args.params)
    if args.model and gm.canonical_kind(args.model) != ckpt.config.kind:
        raise UsageError("--model %s does not match the checkpoint (%s)" % (args.model, ckpt.config.kind))
    dataset = sim.read_dataset(_resolve_split(args.data, "test"))
    metrics = tr.evaluate(ckpt, dataset, jobs=thread_cap(args.jobs))
    _emit(metrics.to_json())
    return EXIT_OK


def cmd_check(args):
    names = checks.SUITES if args.suite == "all" else (args.suite,)
    failed = []
    for name in names:
        t0 = time.perf_counter()
        results = checks.run_suite(name, seed=args.seed)
        _progress("suite %s: %.1f s" % (name, time.perf_counter() - t0))
        for r in results:
            _emit(r.to_json())
            if not r.passed:
                failed.append(r)
    for r in failed:
        _progress("FAILED [%s] %s: value %.3g vs threshold %.3g (seed %d) %s"
                  % (r.suite, r.invariant, r.value, r.threshold, r.seed, r.detail))
    return EXIT_PROPERTY if failed else EXIT_OK


def cmd_sweep(args):
    try:
        systems = [tr.parse_system(s) for s in args.systems]
        models = [gm.canonical_kind(m) for m in args.models]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = tr.SweepConfig(
        train_sizes=args.train_sizes, systems=systems, models=models, seeds=args.seeds,
        epochs=args.epochs, val_size=args.val_size, test_size=args.test_size,
        data_seed=args.data_seed, steps=args.steps, dt=args.dt,
    )
    rows = tr.sweep(cfg, jobs=thread_cap(args.jobs), log=sys.stderr)
    if args.out == "-":
        tr.write_csv(rows, sys.stdout)
    else:
        tr.write_csv(rows, args.out)
        _emit({"rows": len(rows), "ok": sum(r["status"] == "ok" for r in rows), "out": args.out})
    return EXIT_OK if any(r["status"] == "ok" for r in rows) else EXIT_DIVERGED


# -- parser -------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="gmnlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a dataset")
    g.add_argument("--p", type=int, default=0, help="isolated particles")
    g.add_argument("--s", type=int, default=0, help="sticks")
    g.add_argument("--hinges", type=int, default=0, help="hinges")
    g.add_argument("--num", type=int, default=500)
    g.add_argument("--steps", type=_positive_int, default=sim.DEFAULT_STEPS)
    g.add_argument("--dt", type=float, default=sim.DEFAULT_DT)
    g.add_argument("--softening", type=float, default=sim.DEFAULT_SOFTENING)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--split", type=_int_list, default=None, metavar="TRAIN,VAL,TEST",
                   help="write train/val/test subdirectories from independent streams (ignores --num)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--model", required=True, choices=gm.KINDS + tuple(gm.KIND_ALIASES))
    t.add_argument("--data", required=True, help="dataset directory or split root")
    t.add_argument("--val", default=None, help="validation dataset (default: DATA/val if present)")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch", type=_positive_int, default=200)
    t.add_argument("--lr", type=float, default=5e-4)
    t.add_argument("--hidden", type=_positive_int, default=64)
    t.add_argument("--layers", type=_positive_int, default=4)
    t.add_argument("--wd", type=float, default=1e-10)
    t.add_argument("--lambda", dest="reg_lambda", type=float, default=0.1, help="arm-length penalty (egnn-reg)")
    t.add_argument("--stick-phi2", choices=("force", "full"), default="force")
    t.add_argument("--no-normalize", action="store_true", help="disable Gram normalisation (ablation)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="parameter file; sidecars <stem>.config.json, <stem>.history.json")
    t.add_argument("--verbose", action="store_true", help="per-epoch progress on stderr")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--model", default=None, choices=gm.KINDS + tuple(gm.KIND_ALIASES))
    e.add_argument("--params", required=True)
    e.add_argument("--data", required=True, help="dataset directory or split root (uses test/)")
    e.add_argument("--jobs", type=_positive_int, default=1)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("check", help="run a property suite")
    c.add_argument("--suite", required=True, choices=checks.SUITES + ("all",))
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check)

    w = sub.add_parser("sweep", help="train/evaluate grid, CSV output")
    w.add_argument("--train-sizes", type=_int_list, required=True)
    w.add_argument("--systems", type=_str_list, required=True, help="e.g. 1-2-0,3-2-1; training uses the first")
    w.add_argument("--models", type=_str_list, required=True)
    w.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    w.add_argument("--epochs", type=int, default=200)
    w.add_argument("--val-size", type=int, default=200)
    w.add_argument("--test-size", type=int, default=200)
    w.add_argument("--data-seed", type=int, default=0)
    w.add_argument("--steps", type=_positive_int, default=sim.DEFAULT_STEPS)
    w.add_argument("--dt", type=float, default=sim.DEFAULT_DT)
    w.add_argument("--jobs", type=_positive_int, default=1)
    w.add_argument("--out", required=True, help="CSV path, or - for stdout")
    w.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _progress("error: %s" % exc)
        return EXIT_USAGE
    except (sim.DegenerateArmError, geom3.SingularMatrixError) as exc:
        _progress("simulator error: %s" % exc)
        return EXIT_SIM
    except tr.DivergenceError as exc:
        _progress("diverged: %s" % exc)
        return EXIT_DIVERGED
    except sim.MalformedDatasetError as exc:
        _progress("malformed dataset: %s" % exc)
        return EXIT_IO
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        _progress("I/O error: %s" % exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
