"""Experiment definitions behind ``depth-ntk run``.

A spec is one JSON object::

    {"experiment": "sine", "seed": 0, "trials": 10, "output_dir": "runs/sine",
     "network": {...}, "wide_network": {...}, "train": {...}, "data": {...}}

Every section is optional; missing keys take the per-experiment defaults in
``DEFAULTS``. Unknown keys are rejected. Gaussian initializations written
N(0, s) in the experiment descriptions are read as standard deviation s.
"""
from __future__ import annotations

import copy
import json
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from . import data as data_mod
from .errors import DegenerateKernelError, ValidationError
from .kernels import angle_stats, cross_gram, gram, gram_from_trace
from .netarch import ActivationSpec, Network, NetworkConfig, forward, forward_batch, init_network, stable_pertinent_network
from .parallel import pmap
from .regression import classify, gp_regress, rmse
from .spectrum import lambda_min_scaling_experiment, linear_fit, sigma_max_trial, theorem3_bound
from .training import TrainConfig, track_invariance, train

DATA_ROOT_ENV = "DEPTH_NTK_DATA"

NETWORK_KEYS = {
    "width", "widths", "K", "hbar", "activation", "alpha", "apply_layer_scaling",
    "weight_std", "bias_std", "use_bias", "width_divisor", "stable_pertinent_epsilon",
}
TRAIN_KEYS = {"learning_rate", "epochs", "batch_size"}
TOP_KEYS = {"experiment", "seed", "trials", "output_dir", "network", "wide_network", "train", "data"}

_RELU_DEEP = {"width": 20, "K": 25, "hbar": 2, "activation": "relu", "use_bias": True, "apply_layer_scaling": False}
_IMAGE_INIT = {"weight_std": 0.4, "bias_std": 0.2, "width_divisor": "linear"}
_TRAIN = {"learning_rate": 0.001, "epochs": 5, "batch_size": 64}

DEFAULTS = {
    "sine": {
        "trials": 10,
        "network": {**_RELU_DEEP, "weight_std": 0.2, "bias_std": 0.1},
        "wide_network": {"width": 500, "K": 1, "hbar": 1, "activation": "relu", "use_bias": True,
                         "apply_layer_scaling": False, "weight_std": 0.02, "bias_std": 0.01},
        "train": {**_TRAIN, "epochs": 5},
        "data": {"n_total": 500, "n_train": 300},
    },
    "image_regression": {
        "trials": 10,
        "network": {**_RELU_DEEP, **_IMAGE_INIT},
        "wide_network": {"width": 200, "K": 1, "hbar": 1, "activation": "relu", "use_bias": True,
                         "apply_layer_scaling": False, **_IMAGE_INIT},
        "train": {**_TRAIN, "epochs": 60},
        "data": {"dataset": "mnist", "images": None, "labels": None, "batches": None,
                 "n_samples": [500, 1000, 1500], "checkpoints": [0, 20, 40, 60], "bins": 18},
    },
    "hbar_k_sweep": {
        "trials": 10,
        "network": {**_RELU_DEEP, **_IMAGE_INIT},
        "train": {**_TRAIN, "epochs": 60},
        "data": {"dataset": "mnist", "images": None, "labels": None, "batches": None,
                 "n_train": 500, "n_test": 500, "K_values": [10, 30, 50], "hbar_values": [1, 2, 3],
                 "checkpoints": [0, 20, 40, 60], "bins": 18},
    },
    "lambda_min_scaling": {
        "trials": 10,
        "network": {**_RELU_DEEP, "weight_std": 0.01, "bias_std": 0.01},
        "train": {**_TRAIN, "epochs": 10},
        "data": {"N": 100, "d_values": [50, 100, 150, 200, 250, 300], "variant": "gaussian"},
    },
    "sigma_max_scaling": {
        "trials": 10,
        "network": {**_RELU_DEEP, "weight_std": 0.01, "bias_std": 0.01},
        "train": {**_TRAIN, "epochs": 10},
        "data": {"N": 250, "K_values": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
                 "probe_a": [0.0, 1.0], "probe_b": [1.0, 0.0]},
    },
    "invariance": {
        "trials": 10,
        "network": {"width": "K_squared", "K": 5, "hbar": 3, "activation": "tanh", "use_bias": True,
                    "apply_layer_scaling": True, "weight_std": 1.0, "bias_std": 1.0},
        "train": {**_TRAIN, "epochs": 20},
        "data": {"K_values": [5, 10, 15], "n_train": 256, "gamma_points": 65, "checkpoints": [0, 20]},
    },
    "gaussianity": {
        "trials": 500,
        "network": {"width": 8, "K": 4, "hbar": 2, "activation": "tanh", "use_bias": True,
                    "apply_layer_scaling": True, "weight_std": 1.0, "bias_std": 1.0,
                    "stable_pertinent_epsilon": 0.9},
        "train": {**_TRAIN, "epochs": 0},
        "data": {"K_values": [4, 32], "repetitions": 5, "probe_a": [1.0, 0.0], "probe_b": [0.6, 0.8]},
    },
}
EXPERIMENTS = tuple(DEFAULTS)

DATA_KEYS = {name: set(d["data"]) for name, d in DEFAULTS.items()}


@dataclass
class ExperimentSpec:
    experiment: str
    seed: int
    trials: int
    output_dir: str
    network: dict
    wide_network: dict | None
    train: dict
    data: dict

    def echo(self) -> dict:
        return {
            "experiment": self.experiment, "seed": self.seed, "trials": self.trials,
            "output_dir": self.output_dir, "network": self.network, "wide_network": self.wide_network,
            "train": self.train, "data": self.data,
        }

    def train_config(self, seed: int, epochs: int | None = None) -> TrainConfig:
        t = self.train
        return TrainConfig(t["learning_rate"], t["epochs"] if epochs is None else epochs, t["batch_size"], seed)


def _merge_section(name: str, given, default: dict | None, allowed: set) -> dict | None:
    if default is None:
        if given is not None:
            raise ValidationError(f"section {name!r} is not used by this experiment")
        return None
    given = {} if given is None else given
    if not isinstance(given, dict):
        raise ValidationError(f"section {name!r} must be an object")
    unknown = set(given) - allowed
    if unknown:
        raise ValidationError(f"unknown key(s) in {name!r}: {sorted(unknown)}")
    return {**copy.deepcopy(default), **given}


def parse_spec(doc: dict, seed_override: int | None = None) -> ExperimentSpec:
    if not isinstance(doc, dict):
        raise ValidationError("spec must be a JSON object")
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise ValidationError(f"unknown top-level key(s): {sorted(unknown)}")
    name = doc.get("experiment")
    if name not in DEFAULTS:
        raise ValidationError(f"unknown experiment {name!r}; valid names: {', '.join(EXPERIMENTS)}")
    d = DEFAULTS[name]
    spec = ExperimentSpec(
        experiment=name,
        seed=int(seed_override if seed_override is not None else doc.get("seed", 0)),
        trials=int(doc.get("trials", d["trials"])),
        output_dir=str(doc.get("output_dir", f"runs/{name}")),
        network=_merge_section("network", doc.get("network"), d["network"], NETWORK_KEYS),
        wide_network=_merge_section("wide_network", doc.get("wide_network"), d.get("wide_network"), NETWORK_KEYS),
        train=_merge_section("train", doc.get("train"), d["train"], TRAIN_KEYS),
        data=_merge_section("data", doc.get("data"), d["data"], DATA_KEYS[name]),
    )
    _validate(spec)
    return spec


def _validate(spec: ExperimentSpec) -> None:
    if spec.trials < 1:
        raise ValidationError("trials must be >= 1")
    data = spec.data
    if spec.experiment in ("image_regression", "hbar_k_sweep"):
        if data["dataset"] in ("mnist", "fashion_mnist"):
            for key in ("images", "labels"):
                if not data.get(key):
                    raise ValidationError(f"data.{key} is required for dataset {data['dataset']!r}")
        elif data["dataset"] == "cifar10":
            if not data.get("batches"):
                raise ValidationError("data.batches is required for dataset 'cifar10'")
        else:
            raise ValidationError(f"data.dataset must be mnist, fashion_mnist or cifar10, got {data['dataset']!r}")
    for key in ("d_values", "K_values", "hbar_values", "n_samples", "checkpoints"):
        if key in data and (not isinstance(data[key], list) or not data[key]):
            raise ValidationError(f"data.{key} must be a non-empty list")
    try:
        # building one config surfaces bad network settings before any work starts
        build_config(spec.network, input_dim=2, output_dim=1)
        if spec.wide_network is not None:
            build_config(spec.wide_network, input_dim=2, output_dim=1)
        spec.train_config(spec.seed)
    except ValidationError:
        raise
    except (ValueError, TypeError) as exc:
        raise ValidationError(str(exc)) from exc


def build_config(section: dict, input_dim: int, output_dim: int, K: int | None = None, hbar: int | None = None) -> NetworkConfig:
    K = int(section["K"] if K is None else K)
    hbar = int(section["hbar"] if hbar is None else hbar)
    if "widths" in section and section["widths"] is not None:
        widths = tuple(section["widths"])
    else:
        width = section["width"]
        width = K * K if width == "K_squared" else int(width)
        widths = (width,) * (K * hbar)
    return NetworkConfig(
        input_dim=input_dim,
        output_dim=output_dim,
        hbar=hbar,
        K=K,
        widths=widths,
        activation=ActivationSpec(section.get("activation", "relu"), float(section.get("alpha", 0.0))),
        apply_layer_scaling=bool(section.get("apply_layer_scaling", False)),
        weight_std=float(section.get("weight_std", 1.0)),
        bias_std=float(section.get("bias_std", 0.0)),
        use_bias=bool(section.get("use_bias", False)),
        width_divisor=section.get("width_divisor", "none"),
    )


def build_network(section: dict, config: NetworkConfig, seed: int) -> Network:
    eps = section.get("stable_pertinent_epsilon")
    if eps is not None:
        return stable_pertinent_network(config, seed, float(eps))
    return init_network(config, seed)


def _data_path(p) -> Path:
    path = Path(p)
    root = os.environ.get(DATA_ROOT_ENV)
    if not path.is_absolute() and root:
        path = Path(root) / path
    return path


def load_image_dataset(data: dict) -> data_mod.Dataset:
    if data["dataset"] == "cifar10":
        paths = [_data_path(p) for p in data["batches"]]
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise ValidationError(f"data.batches: missing file(s) {missing}")
        return data_mod.load_cifar10(paths)
    images, labels = _data_path(data["images"]), _data_path(data["labels"])
    for key, p in (("images", images), ("labels", labels)):
        if not p.exists():
            raise ValidationError(f"data.{key}: file {p} does not exist")
    return data_mod.load_idx(images, labels)


# ---------------------------------------------------------------- sine

def _sine_trial(args):
    spec, trial = args
    seed = spec.seed + trial
    ds = data_mod.gen_sine(spec.data["n_total"], seed)
    tr, te = data_mod.split(ds, spec.data["n_train"], seed)
    rows = []
    for label, section, kernel in (("ntk_w", spec.wide_network, "ntk_w"), ("ntk_d", spec.network, "ntk_d")):
        net = build_network(section, build_config(section, 1, 1), seed)
        result = train(net, tr.X, tr.Y, spec.train_config(seed))
        net = result.network
        out = gp_regress(
            gram(net, kernel, tr.X).entries,
            cross_gram(net, kernel, te.X, tr.X),
            gram(net, kernel, te.X).entries,
            tr.Y,
        )
        rows.append((trial, label, rmse(out.mean, te.Y), result.losses[0], result.losses[-1], out.jitter_used))
    return rows


def run_sine(spec: ExperimentSpec, jobs: int):
    per_trial = pmap(_sine_trial, [(spec, t) for t in range(spec.trials)], jobs)
    rows = [r for trial_rows in per_trial for r in trial_rows]
    summary = {}
    for kernel in ("ntk_w", "ntk_d"):
        vals = np.array([r[2] for r in rows if r[1] == kernel])
        summary[kernel] = {"mean_rmse": float(vals.mean()), "std_rmse": float(vals.std())}
    header = ("trial", "kernel", "rmse", "loss_initial", "loss_final", "jitter_used")
    return header, rows, summary, {}


# ---------------------------------------------------------------- image regression

def _train_with_checkpoints(net, X, Y, cfg, checkpoints, fn):
    """Train for max(checkpoints) epochs calling fn(epoch, net) at each checkpoint."""
    records = []

    def hook(epoch, current):
        if epoch in checkpoints:
            records.append(fn(epoch, current))

    train(net, X, Y, TrainConfig(cfg.learning_rate, max(checkpoints), cfg.batch_size, cfg.seed), on_epoch=hook)
    return records


def _kernel_eval(net, kernel, tr, te, bins):
    bt_tr = forward_batch(net, tr.X)
    g_tr = gram_from_trace(net, kernel, bt_tr)
    out = gp_regress(g_tr.entries, cross_gram(net, kernel, te.X, tr.X), gram(net, kernel, te.X).entries, tr.Y)
    acc = classify(out, te.Y).accuracy
    try:
        ang = angle_stats(g_tr, bins)
    except DegenerateKernelError:
        # a dead ReLU net has zero self-kernels; angles are undefined there
        ang = None
    return acc, ang


def _angle_columns(ang):
    if ang is None:
        return None, None
    return float(np.mean(ang.angles)), ang.fraction_above_quarter_pi


def _angle_bins(ang):
    if ang is None:
        return []
    return list(zip(ang.edges[:-1], ang.edges[1:], ang.counts))


def _mean_defined(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _image_trial(args):
    spec, trial, ds = args
    seed = spec.seed + trial
    data = spec.data
    rows, angle_rows = [], []
    d, n_o = ds.X.shape[1], ds.Y.shape[1]
    for n in data["n_samples"]:
        n_avail = min(n, len(ds))
        tr, te = data_mod.split(ds, n_avail // 2, seed, n_test=n_avail - n_avail // 2)
        for kernel, section in (("ntk_w", spec.wide_network), ("ntk_d", spec.network)):
            net = build_network(section, build_config(section, d, n_o), seed)

            def evaluate(epoch, current):
                acc, ang = _kernel_eval(current, kernel, tr, te, data["bins"])
                return epoch, acc, ang

            for epoch, acc, ang in _train_with_checkpoints(net, tr.X, tr.Y, spec.train_config(seed), data["checkpoints"], evaluate):
                rows.append((trial, n, kernel, epoch, acc, *_angle_columns(ang)))
                for lo, hi, c in _angle_bins(ang):
                    angle_rows.append((trial, n, kernel, epoch, lo, hi, int(c)))
    return rows, angle_rows


def run_image_regression(spec: ExperimentSpec, jobs: int):
    ds = load_image_dataset(spec.data)
    needed = max(spec.data["n_samples"])
    if needed > len(ds):
        warnings.warn(f"requested {needed} samples but only {len(ds)} are available")
    per_trial = pmap(_image_trial, [(spec, t, ds) for t in range(spec.trials)], jobs)
    rows = [r for rs, _ in per_trial for r in rs]
    angle_rows = [r for _, ars in per_trial for r in ars]
    summary = {}
    for n in spec.data["n_samples"]:
        for kernel in ("ntk_w", "ntk_d"):
            for epoch in spec.data["checkpoints"]:
                acc = [r[4] for r in rows if r[1] == n and r[2] == kernel and r[3] == epoch]
                sel = [r for r in rows if r[1] == n and r[2] == kernel and r[3] == epoch]
                summary[f"n{n}/{kernel}/epoch{epoch}"] = {
                    "mean_accuracy": float(np.mean(acc)),
                    "std_accuracy": float(np.std(acc)),
                    "degenerate_kernels": sum(r[5] is None for r in sel),
                }
    header = ("trial", "n_samples", "kernel", "epoch", "accuracy", "mean_angle", "frac_angle_above_quarter_pi")
    extra = {"angles.csv": (("trial", "n_samples", "kernel", "epoch", "bin_lo", "bin_hi", "count"), angle_rows)}
    return header, rows, summary, extra


# ---------------------------------------------------------------- hbar / K sweep

def _sweep_trial(args):
    spec, trial, ds = args
    seed = spec.seed + trial
    data = spec.data
    tr, te = data_mod.split(ds, min(data["n_train"], len(ds) - 1), seed, n_test=min(data["n_test"], len(ds) - data["n_train"]))
    rows, angle_rows = [], []
    d, n_o = ds.X.shape[1], ds.Y.shape[1]
    for K in data["K_values"]:
        for hbar in data["hbar_values"]:
            net = build_network(spec.network, build_config(spec.network, d, n_o, K=K, hbar=hbar), seed)

            def evaluate(epoch, current):
                acc, ang = _kernel_eval(current, "ntk_d", tr, te, data["bins"])
                return epoch, acc, ang

            for epoch, acc, ang in _train_with_checkpoints(net, tr.X, tr.Y, spec.train_config(seed), data["checkpoints"], evaluate):
                rows.append((trial, K, hbar, epoch, acc, *_angle_columns(ang)))
                for lo, hi, c in _angle_bins(ang):
                    angle_rows.append((trial, K, hbar, epoch, lo, hi, int(c)))
    return rows, angle_rows


def run_hbar_k_sweep(spec: ExperimentSpec, jobs: int):
    ds = load_image_dataset(spec.data)
    if spec.data["n_train"] + spec.data["n_test"] > len(ds):
        warnings.warn(f"requested {spec.data['n_train'] + spec.data['n_test']} samples but only {len(ds)} are available")
    per_trial = pmap(_sweep_trial, [(spec, t, ds) for t in range(spec.trials)], jobs)
    rows = [r for rs, _ in per_trial for r in rs]
    angle_rows = [r for _, ars in per_trial for r in ars]
    summary = {}
    for K in spec.data["K_values"]:
        for hbar in spec.data["hbar_values"]:
            for epoch in spec.data["checkpoints"]:
                sel = [r for r in rows if r[1] == K and r[2] == hbar and r[3] == epoch]
                summary[f"K{K}/hbar{hbar}/epoch{epoch}"] = {
                    "mean_accuracy": float(np.mean([r[4] for r in sel])),
                    "mean_angle": _mean_defined([r[5] for r in sel]),
                    "degenerate_kernels": sum(r[5] is None for r in sel),
                }
    header = ("trial", "K", "hbar", "epoch", "accuracy", "mean_angle", "frac_angle_above_quarter_pi")
    extra = {"angles.csv": (("trial", "K", "hbar", "epoch", "bin_lo", "bin_hi", "count"), angle_rows)}
    return header, rows, summary, extra


# ---------------------------------------------------------------- spectrum

def run_lambda_min_scaling(spec: ExperimentSpec, jobs: int):
    data = spec.data
    template = build_config(spec.network, input_dim=data["d_values"][0], output_dim=1)
    table = lambda_min_scaling_experiment(
        data["d_values"], data["N"], spec.trials, template, spec.seed,
        train_cfg=spec.train_config(spec.seed), variant=data["variant"], jobs=jobs,
    )
    rows = [(d, m, s) for d, m, s in table.rows()]
    summary = {
        "slope": table.fit.slope,
        "intercept": table.fit.intercept,
        "pearson_r": table.fit.pearson_r,
        "fit_defined": table.fit.defined,
        "psd_ok": table.psd_ok,
        "psd_violations": int(np.sum(table.lambdas < -1e-8 * table.max_diagonals)),
    }
    return ("d", "mean_lambda_min", "std_lambda_min"), rows, summary, {}


def _sigma_task(args):
    spec, K, trial = args
    cfg = build_config(spec.network, input_dim=2, output_dim=1, K=K)
    return sigma_max_trial(cfg, spec.seed + trial, spec.data["probe_a"], spec.data["probe_b"],
                           spec.train_config(spec.seed + trial), spec.data["N"])


def run_sigma_max_scaling(spec: ExperimentSpec, jobs: int):
    Ks = spec.data["K_values"]
    vals = pmap(_sigma_task, [(spec, K, t) for K in Ks for t in range(spec.trials)], jobs)
    vals = np.array(vals).reshape(len(Ks), spec.trials)
    rows = []
    violations = 0
    for K, v in zip(Ks, vals):
        n_max = build_config(spec.network, 2, 1, K=K).n_max
        bound = theorem3_bound(K, n_max)
        violations += int(np.sum(v > bound))
        rows.append((K, float(v.mean()), float(v.std()), bound))
    fit = linear_fit(Ks, vals.mean(axis=1))
    summary = {"slope": fit.slope, "pearson_r": fit.pearson_r, "bound_violations": violations}
    return ("K", "mean_sigma_max", "std_sigma_max", "theorem3_bound"), rows, summary, {}


# ---------------------------------------------------------------- invariance

def circle_probes(n_gamma: int):
    gamma = np.linspace(-np.pi, np.pi, n_gamma)
    fixed = np.array([1.0, 0.0])
    return gamma, [(fixed, np.array([np.cos(g), np.sin(g)])) for g in gamma]


def _invariance_task(args):
    spec, K, trial = args
    seed = spec.seed + trial
    data = spec.data
    net = build_network(spec.network, build_config(spec.network, 2, 1, K=K), seed)
    ds = data_mod.gen_circle(data["n_train"], seed)
    _, probes = circle_probes(data["gamma_points"])
    records = track_invariance(net, spec.train_config(seed), ds.X, ds.Y, probes, data["checkpoints"])
    return {r.epoch: r.drift for r in records}


def run_invariance(spec: ExperimentSpec, jobs: int):
    data = spec.data
    gamma, _ = circle_probes(data["gamma_points"])
    Ks = data["K_values"]
    last = max(data["checkpoints"])
    out = pmap(_invariance_task, [(spec, K, t) for K in Ks for t in range(spec.trials)], jobs)
    rows, summary = [], {}
    for i, K in enumerate(Ks):
        drifts = np.array([out[i * spec.trials + t][last] for t in range(spec.trials)])  # (trials, n_gamma)
        for g, col in zip(gamma, drifts.T):
            rows.append((K, float(g), float(col.mean()), float(col.std())))
        per_trial = drifts.mean(axis=1)
        summary[f"K{K}"] = {"mean_drift": float(per_trial.mean()), "std_drift": float(per_trial.std()),
                            "epoch": last}
    means = [summary[f"K{K}"]["mean_drift"] for K in Ks]
    summary["strictly_decreasing_in_K"] = bool(all(a > b for a, b in zip(means, means[1:])))
    return ("K", "gamma", "mean_drift", "std_drift"), rows, summary, {}


# ---------------------------------------------------------------- gaussianity

def normality_stats(sample) -> dict:
    """Skewness, excess kurtosis and KS distance to a fitted normal; None when the sample is constant."""
    x = np.asarray(sample, dtype=np.float64)
    if x.size < 3 or np.ptp(x) <= 1e-12 * max(np.abs(x).max(), 1e-300):
        return {"skewness": None, "excess_kurtosis": None, "ks_statistic": None, "defined": False}
    z = (x - x.mean()) / x.std()
    return {
        "skewness": float(stats.skew(x)),
        "excess_kurtosis": float(stats.kurtosis(x, fisher=True)),
        "ks_statistic": float(stats.kstest(z, "norm").statistic),
        "defined": True,
    }


def _gauss_task(args):
    spec, K, rep = args
    data = spec.data
    cfg = build_config(spec.network, input_dim=len(data["probe_a"]), output_dim=1, K=K)
    x, xp = np.asarray(data["probe_a"], float), np.asarray(data["probe_b"], float)
    from .kernels import ntk_d_expanded

    vals = []
    for t in range(spec.trials):
        net = build_network(spec.network, cfg, spec.seed + 1_000_003 * rep + t)
        vals.append(ntk_d_expanded(net, forward(net, x), forward(net, xp)).trace)
    return vals


def gaussianity_probe(spec: ExperimentSpec, jobs: int = 1):
    """Per K: NTK_(d) traces over independent initializations and their normality statistics."""
    data = spec.data
    if not data["K_values"]:
        raise ValidationError("data.K_values must be non-empty")
    tasks = [(spec, K, rep) for K in data["K_values"] for rep in range(data["repetitions"])]
    samples = pmap(_gauss_task, tasks, jobs)
    rows, summary = [], {"warnings": []}
    if spec.trials < 30:
        summary["warnings"].append(f"only {spec.trials} initializations per repetition; statistics unreliable")
    for i, K in enumerate(data["K_values"]):
        per_rep = []
        for rep in range(data["repetitions"]):
            st = normality_stats(samples[i * data["repetitions"] + rep])
            per_rep.append(st)
            rows.append((K, rep, st["skewness"], st["excess_kurtosis"], st["ks_statistic"]))
        defined = [s for s in per_rep if s["defined"]]
        summary[f"K{K}"] = {
            "median_abs_skewness": float(np.median([abs(s["skewness"]) for s in defined])) if defined else None,
            "median_abs_excess_kurtosis": float(np.median([abs(s["excess_kurtosis"]) for s in defined])) if defined else None,
            "median_ks": float(np.median([s["ks_statistic"] for s in defined])) if defined else None,
            "undefined_repetitions": len(per_rep) - len(defined),
        }
    return ("K", "repetition", "skewness", "excess_kurtosis", "ks_statistic"), rows, summary, {}


RUNNERS = {
    "sine": run_sine,
    "image_regression": run_image_regression,
    "hbar_k_sweep": run_hbar_k_sweep,
    "lambda_min_scaling": run_lambda_min_scaling,
    "sigma_max_scaling": run_sigma_max_scaling,
    "invariance": run_invariance,
    "gaussianity": gaussianity_probe,
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def execute(spec: ExperimentSpec, jobs: int = 1) -> dict:
    """Run the experiment and write results.csv, summary.json and spec_echo.json."""
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header, rows, summary, extra = RUNNERS[spec.experiment](spec, jobs)
    write_csv(out / "results.csv", header, rows)
    for name, (h, r) in extra.items():
        write_csv(out / name, h, r)
    summary = {"experiment": spec.experiment, "trials": spec.trials, "seed": spec.seed, **summary}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "spec_echo.json").write_text(json.dumps(spec.echo(), indent=2, sort_keys=True) + "\n")
    return summary
