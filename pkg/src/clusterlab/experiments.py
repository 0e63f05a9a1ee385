"""Experiment recipes, benchmarking, and report emission.

A recipe id (1-9) expands to an ExperimentConfig: stimulus specs, split
sizes, model/train configs, and baseline parameter grids. run_experiment
executes it end to end (datasets to disk, training, best-of-grid
benchmarking) and writes a Report whose CSVs are byte-identical across
reruns with the same config and master seed in deterministic mode.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .baselines import (
    AffinityParams,
    CfsfdpParams,
    cfsfdp,
    fuzzy_cmeans,
    kmeans,
    mean_shift,
    normalized_cut,
    spectral_njw,
)
from .evaluation import aggregate, evaluate_stimulus, records_to_csv, summary_to_csv
from .stimuli import (
    ALL_SHAPES,
    GaussianSceneSpec,
    ShapeKind,
    ShapeSceneSpec,
    generate_dataset,
    inject_noise,
    load_dataset,
    spec_to_dict,
)
from .unet import TrainConfig, UNetConfig, build_unet, load_checkpoint, predict_labels, save_checkpoint, train

METHOD_ORDER = ("CNN", "kM", "FCM", "NJW", "SC", "MS", "CFSFDP")

EXP3_SHAPES = (ShapeKind.RING, ShapeKind.SQUARE_RING, ShapeKind.BAR)


class ExperimentError(RuntimeError):
    """A recipe cannot run: bad id, missing prerequisite checkpoint."""


@dataclass(frozen=True)
class Profile:
    """One scale tier. The desk tier shrinks images, network depth, and
    split sizes so an Exp-1 analog finishes on a laptop CPU; stimulus
    geometry shrinks with the canvas to keep the same fill character."""

    name: str
    image_size: int
    depth: int
    base_filters: int
    size_divisor: int
    shape_scale: tuple
    shape_density: tuple
    gauss_mean: tuple
    gauss_cov_scale: float
    gauss_points_sparse: tuple
    gauss_points_dense: tuple

    def scaled(self, n: int) -> int:
        return max(1, n // self.size_divisor)

    def model_config(self, output_channels: int = 3) -> UNetConfig:
        return UNetConfig(
            depth=self.depth,
            base_filters=self.base_filters,
            output_channels=output_channels,
            image_size=self.image_size,
        )

    def shape_spec(self, objects, shapes=ALL_SHAPES, same_shape=False,
                   label_order="topdown", seed=0) -> ShapeSceneSpec:
        return ShapeSceneSpec(
            shapes=tuple(shapes),
            object_count_range=(objects[0], objects[1]),
            density_range=self.shape_density,
            scale_range=self.shape_scale,
            image_size=self.image_size,
            seed=seed,
            same_shape=same_shape,
            label_order=label_order,
        )

    def gaussian_spec(self, dense=False, label_order="topdown", seed=0) -> GaussianSceneSpec:
        return GaussianSceneSpec(
            cluster_count_set=(2, 3),
            mean_range=self.gauss_mean,
            points_range=self.gauss_points_dense if dense else self.gauss_points_sparse,
            covariance_scale=self.gauss_cov_scale,
            image_size=self.image_size,
            seed=seed,
            label_order=label_order,
        )


PROFILES = {
    "paper": Profile(
        name="paper",
        image_size=128,
        depth=5,
        base_filters=16,
        size_divisor=1,
        shape_scale=(10.0, 30.0),
        shape_density=(200, 300),
        gauss_mean=(20.0, 100.0),
        gauss_cov_scale=25.0,
        gauss_points_sparse=(100, 400),
        gauss_points_dense=(400, 700),
    ),
    "desk": Profile(
        name="desk",
        image_size=64,
        depth=4,
        base_filters=16,
        size_divisor=5,
        shape_scale=(5.0, 15.0),
        shape_density=(100, 150),
        gauss_mean=(10.0, 50.0),
        gauss_cov_scale=6.25,
        gauss_points_sparse=(50, 200),
        gauss_points_dense=(200, 350),
    ),
}


def default_grids(image_size: int) -> dict:
    """Per-method parameter grids; each method keeps its best mean."""
    return {
        "CNN": [{}],
        "kM": [{"restarts": 10}],
        "FCM": [{"m": 1.5}, {"m": 2.0}, {"m": 3.0}],
        "NJW": [{"median_factor": f} for f in (0.05, 0.1, 0.15, 0.25, 0.4)],
        "SC": [{"median_factor": f} for f in (0.05, 0.1, 0.15, 0.25, 0.4)],
        "MS": [{"bandwidth": round(f * image_size, 6)} for f in (0.1, 0.15, 0.22, 0.3)],
        "CFSFDP": [{"neighbor_fraction": f} for f in (0.01, 0.02, 0.05)],
    }


@dataclass
class ExperimentConfig:
    experiment: int
    profile: str = "desk"
    seed: int = 0
    out_dir: str = "out"
    label_order: str = "topdown"
    train_size: int = 0
    test_size: int = 0
    train_spec: object = None
    test_spec: object = None
    model: UNetConfig = None
    train_cfg: TrainConfig = None
    methods: tuple = METHOD_ORDER
    grids: dict = None
    noise_levels: tuple = ()
    sweep_sizes: tuple = ()
    checkpoint: str = ""
    checkpoint_alt: str = ""

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "profile": self.profile,
            "seed": self.seed,
            "out_dir": str(self.out_dir),
            "label_order": self.label_order,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "train_spec": spec_to_dict(self.train_spec) if self.train_spec else None,
            "test_spec": spec_to_dict(self.test_spec) if self.test_spec else None,
            "model": self.model.to_dict() if self.model else None,
            "train_cfg": {
                "batch_size": self.train_cfg.batch_size,
                "learning_rate": self.train_cfg.learning_rate,
                "epochs": self.train_cfg.epochs,
                "seed": self.train_cfg.seed,
            } if self.train_cfg else None,
            "methods": list(self.methods),
            "grids": self.grids,
            "noise_levels": list(self.noise_levels),
            "sweep_sizes": list(self.sweep_sizes),
            "checkpoint": str(self.checkpoint),
            "checkpoint_alt": str(self.checkpoint_alt),
        }


PAPER_SWEEP = (1, 10, 100, 1000, 3000, 7000)
NOISE_LEVELS = (0, 250, 500, 1000)


def make_experiment_config(experiment: int, profile: str = "desk", seed: int = 0,
                           out_dir: str = "out", train_size=None, test_size=None,
                           epochs=None, label_order: str = "topdown",
                           checkpoint: str = "", checkpoint_alt: str = "",
                           methods=None) -> ExperimentConfig:
    """Expand a recipe id into a full config; keyword arguments override
    the recipe defaults."""
    if experiment not in range(1, 10):
        raise ExperimentError(f"unknown experiment id {experiment}")
    if profile not in PROFILES:
        raise ExperimentError(f"unknown profile {profile!r}")
    p = PROFILES[profile]

    two = (2, 2)
    three = (3, 3)
    train_spec = None
    test_spec = None
    default_train = 0
    default_test = p.scaled(200)
    sweep = ()
    noise = ()
    if experiment == 1:
        train_spec = p.shape_spec(two, label_order=label_order)
        test_spec = p.shape_spec(two)
        default_train = p.scaled(1800)
    elif experiment == 2:
        test_spec = p.shape_spec(two, same_shape=True)
    elif experiment == 3:
        train_spec = p.shape_spec(three, shapes=EXP3_SHAPES, label_order=label_order)
        test_spec = p.shape_spec(three, shapes=EXP3_SHAPES)
        default_train = p.scaled(2700)
    elif experiment == 4:
        train_spec = p.shape_spec(three, label_order=label_order)
        test_spec = p.shape_spec(three)
        default_train = p.scaled(7000)
    elif experiment == 5:
        train_spec = p.gaussian_spec(label_order=label_order)
        test_spec = p.gaussian_spec()
        default_train = p.scaled(1800)
    elif experiment == 6:
        train_spec = p.gaussian_spec(dense=True, label_order=label_order)
        test_spec = p.gaussian_spec(dense=True)
        default_train = p.scaled(1800)
    elif experiment == 7:
        test_spec = p.shape_spec(two, shapes=EXP3_SHAPES)
    elif experiment == 8:
        train_spec = p.shape_spec(two, label_order=label_order)
        test_spec = p.shape_spec(two)
        sweep = tuple(p.scaled(n) for n in PAPER_SWEEP)
    elif experiment == 9:
        test_spec = p.shape_spec(two)
        noise = NOISE_LEVELS

    cfg = ExperimentConfig(
        experiment=experiment,
        profile=profile,
        seed=seed,
        out_dir=out_dir,
        label_order=label_order,
        train_size=default_train if train_size is None else int(train_size),
        test_size=default_test if test_size is None else int(test_size),
        train_spec=train_spec,
        test_spec=test_spec,
        model=p.model_config(),
        train_cfg=TrainConfig(
            epochs=30 if epochs is None else int(epochs),
            seed=rngmod.child_seed(seed, "train"),
        ),
        methods=tuple(methods) if methods is not None else METHOD_ORDER,
        grids=default_grids(p.image_size),
        noise_levels=noise,
        sweep_sizes=sweep,
        checkpoint=checkpoint,
        checkpoint_alt=checkpoint_alt,
    )
    return cfg


# ---------------------------------------------------------------------------
# Benchmarking


def run_method(name: str, stimulus, params: dict, k: int, rng):
    """Run one method on one stimulus. CNN and MS never see k; the others
    receive the ground-truth cluster count."""
    pts = stimulus.point_set.points
    if name == "kM":
        return kmeans(pts, k, restarts=params.get("restarts", 10), rng=rng)
    if name == "FCM":
        return fuzzy_cmeans(pts, k, m=params.get("m", 2.0), rng=rng)
    if name == "NJW":
        aff = AffinityParams(median_factor=params.get("median_factor", 0.15))
        return spectral_njw(pts, k, aff, rng=rng)
    if name == "SC":
        aff = AffinityParams(median_factor=params.get("median_factor", 0.15))
        return normalized_cut(pts, k, aff, rng=rng)
    if name == "MS":
        return mean_shift(pts, bandwidth=params["bandwidth"])
    if name == "CFSFDP":
        result, _ = cfsfdp(pts, CfsfdpParams(
            q=k, neighbor_fraction=params.get("neighbor_fraction", 0.02)))
        return result
    raise ExperimentError(f"unknown method {name!r}")


@dataclass
class MethodBench:
    method: str
    params: dict
    records: list
    mean: float
    std: float
    grid: list = field(default_factory=list)


def _evaluate_model(model, stimuli, deterministic: bool) -> list:
    records = []
    for sid, stim in enumerate(stimuli):
        rec = evaluate_stimulus(stim, predict_labels(model, stim), stimulus_id=sid)
        if deterministic:
            rec.runtime = 0.0
        records.append(rec)
    return records


def bench(stimuli, methods, grids: dict, model=None, seed: int = 0,
          deterministic: bool = True, progress=None) -> dict:
    """Grid-sweep each method over the test stimuli; keep the best mean.

    Returns {method: MethodBench}. Child seeds depend only on
    (method, grid index, stimulus index), so a single-method bench
    reproduces exactly the rows that method gets in a full bench.
    """
    methods = tuple(methods)
    if not methods:
        raise ExperimentError("empty method list")
    unknown = [m for m in methods if m not in METHOD_ORDER]
    if unknown:
        raise ExperimentError(f"unknown methods {unknown}")
    if "CNN" in methods and model is None:
        raise ExperimentError("CNN requires a checkpoint")

    out = {}
    for name in methods:
        if name == "CNN":
            records = _evaluate_model(model, stimuli, deterministic)
            mean, std = aggregate(records)["CNN"]
            out[name] = MethodBench("CNN", {}, records, mean, std,
                                    grid=[{"params": {}, "mean": mean, "std": std}])
            if progress is not None:
                progress(name, {}, mean)
            continue
        best = None
        grid_rows = []
        for gi, params in enumerate(grids.get(name, [{}])):
            records = []
            for sid, stim in enumerate(stimuli):
                rng = rngmod.stream(seed, "bench", name, gi, sid)
                result = run_method(name, stim, params, stim.point_set.k, rng)
                rec = evaluate_stimulus(stim, result, stimulus_id=sid)
                if deterministic:
                    rec.runtime = 0.0
                records.append(rec)
            mean, std = aggregate(records)[name]
            grid_rows.append({"params": dict(params), "mean": mean, "std": std})
            if best is None or mean > best.mean:
                best = MethodBench(name, dict(params), records, mean, std)
            if progress is not None:
                progress(name, params, mean)
        best.grid = grid_rows
        out[name] = best
    return out


# ---------------------------------------------------------------------------
# Reports


@dataclass
class Report:
    experiment: int
    profile: str
    config: dict
    summary: dict
    method_order: tuple
    records: list
    best_params: dict = field(default_factory=dict)
    grid_summary: dict = field(default_factory=dict)
    loss_history: list = None
    learning_curve: list = None  # rows (n, mean, std)
    noise_sweep: list = None  # rows (family, level, mean, std)
    noise_records: list = None  # rows (family, level, EvalRecord)
    timings: dict = field(default_factory=dict)


def loss_to_csv(history) -> str:
    lines = ["epoch,loss"]
    for epoch, value in enumerate(history):
        lines.append("%d,%.17g" % (epoch, value))
    return "\n".join(lines) + "\n"


def curve_to_csv(rows) -> str:
    lines = ["n,mean,std"]
    for n, mean, std in rows:
        lines.append("%d,%.17g,%.17g" % (n, mean, std))
    return "\n".join(lines) + "\n"


def noise_sweep_to_csv(rows) -> str:
    lines = ["family,noise,mean,std"]
    for family, level, mean, std in rows:
        lines.append("%s,%d,%.17g,%.17g" % (family, level, mean, std))
    return "\n".join(lines) + "\n"


def noise_records_to_csv(rows) -> str:
    lines = ["family,noise,stimulus_id,n,accuracy"]
    for family, level, rec in rows:
        lines.append("%s,%d,%d,%d,%.17g" % (family, level, rec.stimulus_id, rec.n, rec.accuracy))
    return "\n".join(lines) + "\n"


def write_report(report: Report, out_dir) -> list:
    """Write the report files; returns the paths written. Everything except
    timings.txt is byte-identical across deterministic reruns."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    def emit(name, text):
        path = os.path.join(out_dir, name)
        with open(path, "w") as f:
            f.write(text)
        paths.append(path)

    emit("config.json", json.dumps(report.config, indent=2, sort_keys=True) + "\n")
    emit("summary.csv", summary_to_csv(report.summary, method_order=report.method_order))
    emit("records.csv", records_to_csv(report.records))
    if report.best_params:
        emit("grid.json", json.dumps(
            {"best_params": report.best_params, "grid": report.grid_summary},
            indent=2, sort_keys=True) + "\n")
    if report.loss_history is not None:
        emit("loss.csv", loss_to_csv(report.loss_history))
    if report.learning_curve is not None:
        emit("learning_curve.csv", curve_to_csv(report.learning_curve))
    if report.noise_sweep is not None:
        emit("noise_sweep.csv", noise_sweep_to_csv(report.noise_sweep))
        emit("noise_records.csv", noise_records_to_csv(report.noise_records))
    if report.timings:
        emit("timings.txt", "".join(
            "%s %.3f\n" % (k, v) for k, v in sorted(report.timings.items())))
    return paths


# ---------------------------------------------------------------------------
# Experiment execution


def _generate_split(cfg: ExperimentConfig, which: str, spec, count: int):
    out = os.path.join(cfg.out_dir, which)
    generate_dataset(spec, count, out, seed=rngmod.child_seed(cfg.seed, "dataset", which))
    _, stimuli = load_dataset(out)
    return stimuli


def _train_model(cfg: ExperimentConfig, stimuli, init_tag, progress=None):
    model = build_unet(cfg.model, seed=rngmod.child_seed(cfg.seed, *init_tag))
    cb = None
    if progress is not None:
        cb = lambda epoch, loss: progress(f"epoch {epoch}: loss {loss:.5f}")
    _, history = train(model, stimuli, cfg.train_cfg, progress=cb)
    return model, history


def _load_required(path: str, what: str):
    if not path:
        raise ExperimentError(f"missing prerequisite checkpoint ({what})")
    if not os.path.exists(path):
        raise ExperimentError(f"checkpoint {path} not found ({what})")
    return load_checkpoint(path)


def run_experiment(cfg: ExperimentConfig, deterministic: bool = True,
                   progress=None) -> Report:
    """Execute a recipe end to end and write its report under cfg.out_dir."""
    note = progress if progress is not None else (lambda msg: None)
    os.makedirs(cfg.out_dir, exist_ok=True)
    timings = {}
    t_start = time.perf_counter()

    t0 = time.perf_counter()
    note(f"generating {cfg.test_size} test stimuli")
    test_stimuli = _generate_split(cfg, "test", cfg.test_spec, cfg.test_size)
    train_stimuli = []
    if cfg.train_size and cfg.experiment != 8:
        note(f"generating {cfg.train_size} training stimuli")
        train_stimuli = _generate_split(cfg, "train", cfg.train_spec, cfg.train_size)
    timings["datasets"] = time.perf_counter() - t0

    report = Report(
        experiment=cfg.experiment,
        profile=cfg.profile,
        config=cfg.to_dict(),
        summary={},
        method_order=METHOD_ORDER,
        records=[],
    )

    if cfg.experiment == 8:
        _run_sweep(cfg, test_stimuli, report, deterministic, note, timings)
    elif cfg.experiment == 9:
        _run_noise(cfg, test_stimuli, report, deterministic, note, timings)
    else:
        model = None
        if cfg.experiment in (2, 7):
            model = _load_required(cfg.checkpoint, "trained CNN")
        elif train_stimuli:
            t0 = time.perf_counter()
            note(f"training on {len(train_stimuli)} stimuli")
            model, history = _train_model(cfg, train_stimuli, ("init",), progress)
            timings["train"] = time.perf_counter() - t0
            report.loss_history = history
            save_checkpoint(model, os.path.join(cfg.out_dir, "checkpoint.bin"))

        t0 = time.perf_counter()
        benches = bench(
            test_stimuli, cfg.methods, cfg.grids, model=model, seed=cfg.seed,
            deterministic=deterministic,
            progress=lambda m, p, acc: note(f"{m} {p}: mean {acc:.4f}"),
        )
        timings["bench"] = time.perf_counter() - t0
        order = [m for m in METHOD_ORDER if m in benches]
        for name in order:
            b = benches[name]
            report.summary[name] = (b.mean, b.std)
            report.records.extend(b.records)
            report.best_params[name] = b.params
            report.grid_summary[name] = b.grid

        if cfg.experiment == 7:
            model2 = _load_required(cfg.checkpoint_alt, "2-object-trained CNN")
            records2 = _evaluate_model(model2, test_stimuli, deterministic)
            for rec in records2:
                rec.method = "CNN-2obj"
            mean = float(np.mean([r.accuracy for r in records2]))
            std = float(np.std([r.accuracy for r in records2]))
            report.summary["CNN-2obj"] = (mean, std)
            report.records.extend(records2)
            order.append("CNN-2obj")
        report.method_order = tuple(order)

    timings["total"] = time.perf_counter() - t_start
    report.timings = timings
    write_report(report, cfg.out_dir)
    return report


def _run_sweep(cfg, test_stimuli, report, deterministic, note, timings):
    """Exp 8: train fresh models on growing prefixes of one stimulus pool,
    plus the untrained lower bound (n = 0)."""
    sizes = tuple(cfg.sweep_sizes)
    pool_size = max(sizes)
    t0 = time.perf_counter()
    note(f"generating {pool_size}-stimulus training pool")
    pool = _generate_split(cfg, "train_pool", cfg.train_spec, pool_size)
    timings["datasets"] += time.perf_counter() - t0

    curve = []
    untrained = build_unet(cfg.model, seed=rngmod.child_seed(cfg.seed, "init", 0))
    records = _evaluate_model(untrained, test_stimuli, deterministic)
    mean = float(np.mean([r.accuracy for r in records]))
    std = float(np.std([r.accuracy for r in records]))
    note(f"untrained: mean {mean:.4f}")
    curve.append((0, mean, std))

    t0 = time.perf_counter()
    last_records = records
    for n in sizes:
        model = build_unet(cfg.model, seed=rngmod.child_seed(cfg.seed, "init", n))
        tc = TrainConfig(
            batch_size=cfg.train_cfg.batch_size,
            learning_rate=cfg.train_cfg.learning_rate,
            epochs=cfg.train_cfg.epochs,
            seed=rngmod.child_seed(cfg.seed, "train", n),
        )
        _, history = train(model, pool[:n], tc)
        last_records = _evaluate_model(model, test_stimuli, deterministic)
        mean = float(np.mean([r.accuracy for r in last_records]))
        std = float(np.std([r.accuracy for r in last_records]))
        note(f"n={n}: mean {mean:.4f} (final loss {history[-1]:.5f})")
        curve.append((n, mean, std))
    timings["train"] = time.perf_counter() - t0

    report.learning_curve = curve
    report.records = last_records
    report.summary = {"CNN": (curve[-1][1], curve[-1][2])}
    report.method_order = ("CNN",)


def _run_noise(cfg, test_stimuli, report, deterministic, note, timings):
    """Exp 9: evaluate noiseless-trained checkpoints on noise-corrupted
    test sets. Shapes always run; the Gaussian family runs when a second
    checkpoint is supplied."""
    families = [("shape", test_stimuli, _load_required(cfg.checkpoint, "shape-trained CNN"))]
    if cfg.checkpoint_alt:
        p = PROFILES[cfg.profile]
        gauss_spec = p.gaussian_spec()
        gauss_stimuli = _generate_split(cfg, "test_gauss", gauss_spec, cfg.test_size)
        families.append(
            ("gaussian", gauss_stimuli, _load_required(cfg.checkpoint_alt, "gaussian-trained CNN")))

    t0 = time.perf_counter()
    sweep = []
    detail = []
    base_records = None
    for family, stimuli, model in families:
        for level in cfg.noise_levels:
            records = []
            for sid, stim in enumerate(stimuli):
                noisy = stim
                if level:
                    noise_rng = rngmod.stream(cfg.seed, "noise", family, level, sid)
                    noisy = inject_noise(stim, level, noise_rng)
                rec = evaluate_stimulus(noisy, predict_labels(model, noisy), stimulus_id=sid)
                if deterministic:
                    rec.runtime = 0.0
                records.append(rec)
                detail.append((family, level, rec))
            mean = float(np.mean([r.accuracy for r in records]))
            std = float(np.std([r.accuracy for r in records]))
            note(f"{family} noise {level}: mean {mean:.4f}")
            sweep.append((family, level, mean, std))
            if base_records is None:
                base_records = records
    timings["bench"] = time.perf_counter() - t0

    report.noise_sweep = sweep
    report.noise_records = detail
    report.records = base_records
    report.summary = {"CNN": (sweep[0][2], sweep[0][3])}
    report.method_order = ("CNN",)


def run_bench_dir(dataset_dir, methods, out_dir, checkpoint: str = "",
                  seed: int = 0, deterministic: bool = True, progress=None) -> Report:
    """Benchmark methods over a dataset directory and write a Report."""
    manifest, stimuli = load_dataset(dataset_dir)
    model = None
    if "CNN" in methods:
        model = _load_required(checkpoint, "trained CNN")
    image_size = manifest["spec"]["image_size"]
    grids = default_grids(image_size)
    t0 = time.perf_counter()
    benches = bench(stimuli, methods, grids, model=model, seed=seed,
                    deterministic=deterministic, progress=progress)
    order = [m for m in METHOD_ORDER if m in benches]
    report = Report(
        experiment=0,
        profile="",
        config={
            "dataset": str(dataset_dir),
            "dataset_seed": manifest["seed"],
            "spec": manifest["spec"],
            "methods": list(methods),
            "grids": grids,
            "checkpoint": str(checkpoint),
            "seed": seed,
        },
        summary={m: (benches[m].mean, benches[m].std) for m in order},
        method_order=tuple(order),
        records=[rec for m in order for rec in benches[m].records],
        best_params={m: benches[m].params for m in order},
        grid_summary={m: benches[m].grid for m in order},
        timings={"bench": time.perf_counter() - t0},
    )
    write_report(report, out_dir)
    return report
