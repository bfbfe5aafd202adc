"""Training loop, loss and metrics, and the sweep protocol.

MSE is the mean of squared position errors over samples, particles and the
three coordinates; CSV output reports it multiplied by 100 (``mse_x1e2``).
The constraint error of one trajectory is the sum over all constrained arms
(both arms of a hinge) of ``| |arm|_pred - |arm|_input |``, averaged over
trajectories.
"""

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as gm
from .nbody_sim import SystemSpec, generate_splits, read_dataset

CSV_COLUMNS = (
    "model", "system", "train_size", "seed", "mse_x1e2", "constraint_error",
    "epochs", "wall_seconds", "status", "train_system",
)
EVAL_CHUNK = 100


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 200
    lr: float = 5e-4
    weight_decay: float = 1e-10
    seed: int = 0
    reg_lambda: float = 0.1
    train_path: str = None
    val_path: str = None
    test_path: str = None


@dataclass
class Metrics:
    mse: float
    constraint_error: float
    n: int
    history: list = field(default_factory=list)

    @property
    def mse_x1e2(self):
        return 100.0 * self.mse

    def to_json(self):
        return {"mse_x1e2": self.mse_x1e2, "constraint_error": self.constraint_error}


def sidecar_path(params_path, suffix):
    """``run.json`` -> ``run.config.json`` (or ``run.history.json``)."""
    stem = params_path[:-5] if params_path.endswith(".json") else params_path
    return "%s.%s.json" % (stem, suffix)


@dataclass
class Checkpoint:
    """Model configuration plus parameters.

    On disk: the parameter file in ParamStore JSON format and a
    ``<stem>.config.json`` sidecar with the model configuration and the
    training metadata.
    """

    config: gm.ModelConfig
    params: ad.ParamStore
    best_epoch: int = 0
    best_val_mse: float = float("nan")
    train_config: dict = None

    def save(self, path):
        self.params.save(path)
        meta = {
            "model": self.config.to_json(),
            "train": self.train_config,
            "best_epoch": self.best_epoch,
            "best_val_mse": None if math.isnan(self.best_val_mse) else self.best_val_mse,
        }
        with open(sidecar_path(path, "config"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(sidecar_path(path, "config"), encoding="utf-8") as fh:
            meta = json.load(fh)
        best = meta.get("best_val_mse")
        return cls(
            gm.ModelConfig.from_json(meta["model"]),
            ad.ParamStore.load(path),
            meta.get("best_epoch", 0),
            float("nan") if best is None else float(best),
            meta.get("train"),
        )


# -- losses and metrics ---------------------------------------------------------


def mse_loss(pred, target):
    """Mean of squared differences over every sample, particle and coordinate."""
    pred = ad.as_tensor(pred)
    if pred.shape != np.shape(target):
        raise ad.ShapeError("mse_loss: %s vs %s" % (pred.shape, np.shape(target)))
    return ad.mean_all(ad.mul(pred - target, pred - target))


def arm_lengths(x, layout):
    pairs = layout.arm_pairs()
    d = x[:, pairs[:, 0]] - x[:, pairs[:, 1]]
    return np.sqrt(np.sum(d * d, axis=-1))


def constraint_errors(x_in, pred, layout):
    """Per-trajectory sum of absolute arm-length changes."""
    if layout.n_arms == 0:
        return np.zeros(len(pred))
    return np.sum(np.abs(arm_lengths(pred, layout) - arm_lengths(x_in, layout)), axis=-1)


def constraint_error(x_in, pred, layout):
    errs = constraint_errors(x_in, pred, layout)
    return float(np.mean(errs)) if len(errs) else 0.0


def arm_penalty(pred, batch):
    """Mean over the batch of ``sum_arms (|arm|_pred - |arm|_input)^2``."""
    pairs = batch.layout.arm_pairs()
    if len(pairs) == 0:
        return ad.Tensor(np.zeros(()))
    d = ad.take(pred, pairs[:, 0], 1) - ad.take(pred, pairs[:, 1], 1)
    length = ad.sqrt(ad.norm2(d))
    rest = arm_lengths(batch.x, batch.layout)[..., None]
    gap = length - rest
    return ad.scale(ad.mean_all(ad.mul(gap, gap)), float(len(pairs)))


def fit_linear(dataset):
    """Closed-form ``alpha`` minimising ``|x0 + alpha v0 - xT|^2`` over the dataset."""
    x0, v0 = dataset.initial[..., :3], dataset.initial[..., 3:]
    den = float(np.sum(v0 * v0))
    if den == 0.0:
        return 1.0
    return float(np.sum((dataset.final - x0) * v0) / den)


# -- prediction and evaluation --------------------------------------------------


def predict(config, params, dataset, chunk=EVAL_CHUNK, jobs=1):
    """Predicted final positions for every sample, in fixed-size chunks.

    Chunk boundaries do not depend on ``jobs``, so results are identical for
    any number of worker threads.
    """
    n = len(dataset)
    if n == 0:
        return np.zeros((0, dataset.n_particles, 3))
    starts = list(range(0, n, chunk))

    def run(start):
        batch = gm.batch_from_dataset(dataset, slice(start, min(start + chunk, n)))
        return gm.forward(batch, config, params).data

    if jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate(parts, axis=0)


def evaluate(checkpoint, dataset, chunk=EVAL_CHUNK, jobs=1):
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint(*checkpoint)
    pred = predict(checkpoint.config, checkpoint.params, dataset, chunk, jobs)
    if len(dataset) == 0:
        return Metrics(0.0, 0.0, 0)
    mse = float(np.mean((pred - dataset.final) ** 2))
    cerr = constraint_error(dataset.initial[..., :3], pred, dataset.layout)
    return Metrics(mse, cerr, len(dataset))


# -- training ---------------------------------------------------------------------


def _shuffle(seed, epoch, n):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(epoch)])).permutation(n)


def _log(msg, stream):
    if stream is not None:
        print(msg, file=stream, flush=True)


def train(model_config, train_config, train_set=None, val_set=None, log=None):
    """Minibatch Adam with best-validation checkpoint selection.

    Returns ``(checkpoint, history)``; ``history`` has one entry per epoch with
    the mean training loss and the validation MSE.

    Raises:
        DivergenceError: if the training loss becomes non-finite.
    """
    if train_set is None:
        train_set = read_dataset(train_config.train_path)
    if val_set is None:
        val_set = read_dataset(train_config.val_path) if train_config.val_path else train_set
    params = gm.init_params(model_config, train_config.seed)
    ckpt = Checkpoint(model_config, params, 0, float("nan"), asdict(train_config))
    history = []
    if model_config.kind == "linear":
        params["alpha"].data[...] = fit_linear(train_set)
        ckpt.best_val_mse = evaluate(ckpt, val_set).mse
        return ckpt, history
    n = len(train_set)
    if n == 0:
        raise ValueError("training set is empty")
    batch = min(train_config.batch_size, n)
    best = ckpt.params.copy()
    best_val = float("inf")
    best_epoch = 0
    regularize = model_config.kind == "egnn-reg"
    for epoch in range(1, train_config.epochs + 1):
        order = _shuffle(train_config.seed, epoch, n)
        total, count = 0.0, 0
        for start in range(0, n, batch):
            idx = np.sort(order[start : start + batch])
            gb = gm.batch_from_dataset(train_set, idx)
            with ad.Tape() as tape:
                pred = gm.forward(gb, model_config, params)
                loss = mse_loss(pred, train_set.final[idx])
                if regularize:
                    loss = loss + ad.scale(arm_penalty(pred, gb), train_config.reg_lambda)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise DivergenceError("non-finite training loss at epoch %d" % epoch)
                tape.backward(loss)
            ad.adam_step(params, train_config.lr, weight_decay=train_config.weight_decay)
            total += value * len(idx)
            count += len(idx)
        val = evaluate(Checkpoint(model_config, params), val_set).mse
        if not math.isfinite(val):
            raise DivergenceError("non-finite validation MSE at epoch %d" % epoch)
        history.append({"epoch": epoch, "train_loss": total / count, "val_mse": val})
        if val < best_val:
            best_val, best_epoch, best = val, epoch, params.copy()
        _log("epoch %d train %.6g val %.6g" % (epoch, total / count, val), log)
    if train_config.epochs > 0:
        ckpt.params, ckpt.best_val_mse, ckpt.best_epoch = best, best_val, best_epoch
    return ckpt, history


# -- sweep ------------------------------------------------------------------------


def parse_system(text):
    """``"3,2,1"`` or ``"3-2-1"`` -> :class:`SystemSpec` (particles, sticks, hinges)."""
    parts = text.replace("-", ",").replace(":", ",").split(",")
    if len(parts) != 3:
        raise ValueError("system must be 'p,s,h', got %r" % text)
    p, s, h = (int(x) for x in parts)
    return SystemSpec(p, s, h)


def system_label(spec):
    return spec.label()


@dataclass
class SweepConfig:
    train_sizes: list
    systems: list
    models: list
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    epochs: int = 200
    val_size: int = 200
    test_size: int = 200
    data_seed: int = 0
    steps: int = 1000
    dt: float = 1e-3
    train_overrides: dict = field(default_factory=dict)
    model_overrides: dict = field(default_factory=dict)


def _sweep_cell(args):
    kind, size, seed, sweep_cfg, datasets = args
    train_spec = sweep_cfg.systems[0]
    splits = datasets[system_label(train_spec)]
    rows = []
    t0 = time.perf_counter()
    tcfg = TrainConfig(epochs=sweep_cfg.epochs, seed=seed, **sweep_cfg.train_overrides)
    mcfg = gm.ModelConfig(kind=kind, **sweep_cfg.model_overrides)
    try:
        ckpt, history = train(mcfg, tcfg, splits["train"].subset(size), splits["val"])
        status = "ok"
    except (DivergenceError, ValueError, ArithmeticError) as exc:
        ckpt, history, status = None, [], "error: %s" % exc
    wall = time.perf_counter() - t0
    for spec in sweep_cfg.systems:
        label = system_label(spec)
        row = {
            "model": kind, "system": label, "train_size": size, "seed": seed,
            "mse_x1e2": "", "constraint_error": "", "epochs": len(history),
            "wall_seconds": "%.3f" % wall, "status": status, "train_system": system_label(train_spec),
        }
        if ckpt is not None:
            m = evaluate(ckpt, datasets[label]["test"])
            row["mse_x1e2"] = repr(m.mse_x1e2)
            row["constraint_error"] = repr(m.constraint_error)
        rows.append(row)
    return rows


def sweep(sweep_cfg, jobs=1, log=None):
    """Train one model per (model, size, seed) on the first system and test it on every system.

    Returns CSV rows (dicts keyed by :data:`CSV_COLUMNS`), one per
    (size, system, model, seed). A failed cell is reported through its
    ``status`` column and the sweep continues.
    """
    systems = [parse_system(s) if isinstance(s, str) else s for s in sweep_cfg.systems]
    sweep_cfg.systems = systems
    sizes = [int(s) for s in sweep_cfg.train_sizes]
    datasets = {}
    for k, spec in enumerate(systems):
        train_n = max(sizes) if k == 0 else 0
        counts = (train_n, sweep_cfg.val_size if k == 0 else 0, sweep_cfg.test_size)
        _log("generating %s %s" % (system_label(spec), counts), log)
        datasets[system_label(spec)] = generate_splits(spec, counts, sweep_cfg.steps, sweep_cfg.dt,
                                                       sweep_cfg.data_seed)
    cells = [(kind, size, seed, sweep_cfg, datasets)
             for size in sizes for kind in sweep_cfg.models for seed in sweep_cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = []
        for cell in cells:
            _log("cell model=%s size=%d seed=%d" % (cell[0], cell[1], cell[2]), log)
            results.append(_sweep_cell(cell))
    return [row for rows in results for row in rows]


def write_csv(rows, out):
    close = False
    if isinstance(out, (str, os.PathLike)):
        out, close = open(out, "w", newline="", encoding="utf-8"), True
    try:
        writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    finally:
        if close:
            out.close()


def median_by(rows, key_fields, value="mse_x1e2"):
    groups = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        groups.setdefault(tuple(row[k] for k in key_fields), []).append(float(row[value]))
    return {k: float(np.median(v)) for k, v in groups.items()}


__all__ = [
    "Checkpoint", "DivergenceError", "Metrics", "SweepConfig", "TrainConfig", "arm_penalty",
    "constraint_error", "constraint_errors", "evaluate", "fit_linear", "mse_loss", "parse_system",
    "predict", "sweep", "train", "write_csv",
]
