"""Config-driven sweeps over (scheme, SNR, bandwidth, seed) and curve export.

Trained models and finished cells are cached under a content-addressed
directory (``$AIRLINK_CACHE_DIR`` or ``<out dir>/.airlink-cache``), keyed by
the SHA-256 of the relevant config subtree plus the package version, so a
rerun of a finished sweep recomputes nothing.
"""

from concurrent.futures import ProcessPoolExecutor
import copy
import csv
from dataclasses import dataclass, field
import hashlib
import json
import logging
import math
import os
import time

from filelock import FileLock
import numpy as np
import yaml

from . import __version__
from .channel import ChannelSpec
from .codec import SpiralParams
from .data import load_csv, make_blobs
from .digital import DigitalConfig, evaluate_separation, prune_grid
from .formats import dump_model, parse_model
from .nn import init_network
from .pipeline import (
    InterpolationPair,
    PruneSchedule,
    TrainConfig,
    evaluate_over_channel,
    interpolate,
    prune_finetune,
    train_interpolation,
    train_noise_injection,
    train_plain,
)
from .sensitivity import allocate_expansion, layer_sensitivities

log = logging.getLogger(__name__)

__all__ = [
    "CONFIG_VERSION",
    "RESULT_COLUMNS",
    "SCHEMES",
    "ConfigError",
    "SchemaError",
    "ExperimentConfig",
    "SweepResult",
    "load_config",
    "config_from_dict",
    "cache_dir_for",
    "run_sweep",
    "read_results",
    "emit_plot_data",
]

CONFIG_VERSION = 1
RESULT_COLUMNS = (
    "scheme",
    "snr_db",
    "bandwidth_real_dims",
    "seed",
    "trial_count",
    "mean_accuracy",
    "std_accuracy",
    "wall_ms",
)
SCHEMES = ("airnet", "airnet+sk+uep", "airnet+interp", "digital", "digital_csit")

DEFAULTS = {
    "config_version": CONFIG_VERSION,
    "task": {
        "dataset": "blobs",
        "n_samples": 600,
        "spread": 1.0,
        "test_fraction": 0.5,
        "arch": [2, 32, 32, 3],
        "teacher_arch": None,
    },
    "training": {
        "epochs": 600,
        "finetune_epochs": 60,
        "prune_fraction": 0.1,
        "batch_size": 32,
        "momentum": 0.9,
        "lr": [0.01, 0.001],
        "temperature": 2.0,
    },
    "channel": {"kind": "awgn", "sigma_h": 1.0, "block_len": 0},
    "spiral": {"delta": 1.0, "gamma": 2 * math.pi},
    "sensitivity": {"metric": "hessian"},
    "interp_range": None,
    "digital": {"rate": None, "fades": 2000},
    "schemes": ["airnet"],
    "snr_db": [5.0],
    "bandwidth": [1251],
    "seeds": [0],
    "trials": 20,
    "workers": 1,
}


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    pass


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and value is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"{path + key!r} must be a mapping")
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    source_dir: str = "."

    @property
    def schemes(self):
        return list(self.raw["schemes"])

    @property
    def snrs(self):
        return [float(s) for s in self.raw["snr_db"]]

    @property
    def bandwidths(self):
        return [int(b) for b in self.raw["bandwidth"]]

    @property
    def seeds(self):
        return [int(s) for s in self.raw["seeds"]]

    @property
    def trials(self):
        return int(self.raw["trials"])

    @property
    def interp_range(self):
        r = self.raw["interp_range"]
        return (min(self.snrs), max(self.snrs)) if r is None else (float(r[0]), float(r[1]))

    def dataset_path(self):
        ds = self.raw["task"]["dataset"]
        return None if ds == "blobs" else os.path.join(self.source_dir, ds)


def config_from_dict(raw, source_dir="."):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if raw.get("config_version") != CONFIG_VERSION:
        raise ConfigError(f"config_version must be {CONFIG_VERSION}")
    merged = _merge(DEFAULTS, raw)
    cfg = ExperimentConfig(merged, source_dir)
    for key in ("schemes", "snr_db", "bandwidth", "seeds"):
        if not isinstance(merged[key], list) or not merged[key]:
            raise ConfigError(f"{key!r} must be a non-empty list")
    bad = [s for s in merged["schemes"] if s not in SCHEMES]
    if bad:
        raise ConfigError(f"unknown scheme(s) {bad}; choose from {list(SCHEMES)}")
    if merged["channel"]["kind"] not in ("awgn", "rayleigh_block"):
        raise ConfigError(f"unknown channel kind {merged['channel']['kind']!r}")
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    arch = merged["task"]["arch"]
    if len(arch) < 2 or any(int(a) <= 0 for a in arch):
        raise ConfigError("task.arch must list at least two positive sizes")
    if any(b <= 0 for b in cfg.bandwidths):
        raise ConfigError("bandwidths must be positive")
    lo, hi = cfg.interp_range
    if "airnet+interp" in cfg.schemes and not lo < hi:
        raise ConfigError("airnet+interp needs an SNR range with min < max")
    path = cfg.dataset_path()
    if path is not None and not os.path.exists(path):
        raise ConfigError(f"dataset file {path!r} does not exist")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return config_from_dict(raw, os.path.dirname(os.path.abspath(path)))


def cache_dir_for(out_path):
    env = os.environ.get("AIRLINK_CACHE_DIR")
    if env:
        return env
    return os.path.join(os.path.dirname(os.path.abspath(out_path)), ".airlink-cache")


def _digest(obj):
    blob = json.dumps({"v": __version__, "obj": obj}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


class _Cache:
    def __init__(self, root):
        self.root = root
        os.makedirs(os.path.join(root, "models"), exist_ok=True)
        os.makedirs(os.path.join(root, "cells"), exist_ok=True)

    def _lock(self, key):
        return FileLock(os.path.join(self.root, f".{key}.lock"))

    def model(self, key_obj, build):
        """Load a cached model or ``build()`` it; always returns the stored f32 copy."""
        key = _digest(key_obj)
        path = os.path.join(self.root, "models", key + ".airn")
        with self._lock(key):
            if not os.path.exists(path):
                tmp = path + ".part"
                with open(tmp, "wb") as fh:
                    fh.write(dump_model(build()))
                os.replace(tmp, path)
            with open(path, "rb") as fh:
                return parse_model(fh.read())

    def cell_path(self, key_obj):
        return os.path.join(self.root, "cells", _digest(key_obj) + ".json")

    def get_cell(self, key_obj):
        path = self.cell_path(key_obj)
        if os.path.exists(path):
            with open(path) as fh:
                return json.load(fh)
        return None

    def put_cell(self, key_obj, row):
        path = self.cell_path(key_obj)
        tmp = path + ".part"
        with open(tmp, "w") as fh:
            json.dump(row, fh)
        os.replace(tmp, path)


class _Models:
    """Builds (or fetches) every model a cell needs."""

    def __init__(self, cfg, cache):
        self.cfg = cfg
        self.cache = cache
        self.task = cfg.raw["task"]
        self.tr = cfg.raw["training"]

    def data(self, seed):
        path = self.cfg.dataset_path()
        if path is None:
            full = make_blobs(self.task["n_samples"], self.task["arch"][-1], self.task["arch"][0],
                              self.task["spread"], seed=seed)
        else:
            full = load_csv(path, self.task["arch"][-1])
        return full.split(1.0 - self.task["test_fraction"], seed)

    def _train_cfg(self, seed, epochs, snr, teacher=None):
        lr = self.tr["lr"]
        schedule = ((0, lr[0]),) + (((epochs // 2, lr[1]),) if len(lr) > 1 else ())
        return TrainConfig(epochs=epochs, lr_schedule=schedule, momentum=self.tr["momentum"],
                           batch_size=self.tr["batch_size"],
                           snr_train_db=snr if snr is not None else 0.0,
                           noise_injection=snr is not None, teacher=teacher,
                           temperature=self.tr["temperature"], seed=seed)

    def _key(self, kind, seed, **extra):
        return {"kind": kind, "seed": seed, "task": self.task, "training": self.tr, **extra}

    def teacher(self, seed):
        arch = self.task["teacher_arch"]
        if not arch:
            return None
        train, _ = self.data(seed)
        return self.cache.model(
            self._key("teacher", seed, arch=arch),
            lambda: train_plain(init_network(arch, seed + 1), train,
                                self._train_cfg(seed, self.tr["epochs"], None)),
        )

    def base(self, seed, snr):
        """Full-size network trained with (snr) or without (None) noise injection."""
        train, _ = self.data(seed)
        return self.cache.model(
            self._key("base", seed, snr=snr),
            lambda: train_noise_injection(init_network(self.task["arch"], seed), train,
                                          self._train_cfg(seed, self.tr["epochs"], snr)),
        )

    def pruned(self, seed, snr, target):
        train, _ = self.data(seed)

        def build():
            cfg = self._train_cfg(seed, self.tr["finetune_epochs"], snr, self.teacher(seed))
            sched = PruneSchedule(target, self.tr["prune_fraction"], "joint")
            return prune_finetune(self.base(seed, snr), train, cfg, sched)

        return self.cache.model(self._key("pruned", seed, snr=snr, target=target), build)

    def interp_pair(self, seed, target):
        lo, hi = self.cfg.interp_range
        train, _ = self.data(seed)
        mid = 0.5 * (lo + hi)
        init = self.pruned(seed, mid, target)
        cfg = self._train_cfg(seed, self.tr["finetune_epochs"], mid, self.teacher(seed))
        built = {}

        def pair():
            if "pair" not in built:
                built["pair"] = train_interpolation(init, train, lo, hi, cfg)
            return built["pair"]

        key = self._key("interp", seed, target=target, range=[lo, hi])
        w_min = self.cache.model({**key, "end": "min"}, lambda: pair().w_min)
        w_max = self.cache.model({**key, "end": "max"}, lambda: pair().w_max)
        return InterpolationPair(w_min, w_max, lo, hi)


def _channel(cfg, snr, seed):
    ch = cfg.raw["channel"]
    return ChannelSpec(ch["kind"], snr, ch["sigma_h"], seed, ch["block_len"])


def _evaluate_cell(cfg, cache, scheme, snr, bandwidth, seed):
    models = _Models(cfg, cache)
    train, test = models.data(seed)
    spiral = SpiralParams(**cfg.raw["spiral"])
    spec = _channel(cfg, snr, seed)
    trials = cfg.trials
    if scheme == "airnet":
        net = models.pruned(seed, snr, bandwidth)
        return (*evaluate_over_channel(net, test, spec, None, spiral, trials, seed), trials)
    if scheme == "airnet+sk+uep":
        net = models.pruned(seed, snr, bandwidth // 2)
        sens = layer_sensitivities(net, train, cfg.raw["sensitivity"]["metric"], snr_db=snr,
                                   seed=seed)
        energies = [layer.energy() for layer in net.layers]
        plan = allocate_expansion(net.layer_sizes, sens.values, energies, bandwidth, "sk")
        return (*evaluate_over_channel(net, test, spec, plan, spiral, trials, seed), trials)
    if scheme == "airnet+interp":
        pair = models.interp_pair(seed, bandwidth)
        net = interpolate(pair, min(max(snr, pair.snr_min_db), pair.snr_max_db))
        return (*evaluate_over_channel(net, test, spec, None, spiral, trials, seed), trials)
    # separation baselines use the noise-free base model
    net = models.base(seed, None)
    if cfg.raw["channel"]["kind"] == "awgn":
        scenario = "awgn"
    else:
        scenario = "fading_csit" if scheme == "digital_csit" else "fading_outage"
    dcfg = DigitalConfig(rate=cfg.raw["digital"]["rate"], scenario=scenario,
                         fades=cfg.raw["digital"]["fades"], sigma_h=cfg.raw["channel"]["sigma_h"])
    acc = evaluate_separation(net, test, bandwidth, snr, dcfg, prune_grid(net), seed=seed,
                              validation=train)
    return acc, 0.0, 1


def _cell_key(cfg, scheme, snr, bandwidth, seed):
    sub = {k: cfg.raw[k] for k in ("task", "training", "channel", "spiral", "sensitivity",
                                   "interp_range", "digital", "trials")}
    return {"cell": [scheme, snr, bandwidth, seed], "cfg": sub}


def _run_cell(args):
    cfg, root, scheme, snr, bandwidth, seed = args
    cache = _Cache(root)
    key = _cell_key(cfg, scheme, snr, bandwidth, seed)
    row = cache.get_cell(key)
    if row is not None:
        return row, False, None
    start = time.perf_counter()
    try:
        mean, std, trials = _evaluate_cell(cfg, cache, scheme, snr, bandwidth, seed)
    except Exception as exc:  # cell failures are reported, not fatal
        log.exception("cell %s failed", (scheme, snr, bandwidth, seed))
        return None, True, f"{type(exc).__name__}: {exc}"
    row = {
        "scheme": scheme,
        "snr_db": _fmt(snr),
        "bandwidth_real_dims": str(bandwidth),
        "seed": str(seed),
        "trial_count": str(trials),
        "mean_accuracy": _fmt(mean),
        "std_accuracy": _fmt(std),
        "wall_ms": str(int(round(1000 * (time.perf_counter() - start)))),
    }
    cache.put_cell(key, row)
    return row, True, None


def _fmt(x):
    return repr(float(x))


@dataclass
class SweepResult:
    path: str
    rows: list = field(default_factory=list)
    computed: int = 0
    cached: int = 0
    failed: list = field(default_factory=list)


def run_sweep(cfg, out_path, cache_dir=None, workers=None):
    """Evaluate every (scheme, bandwidth, SNR, seed) cell and write the CSV."""
    root = cache_dir or cache_dir_for(out_path)
    _Cache(root)
    cells = [
        (cfg, root, scheme, snr, b, seed)
        for scheme in cfg.schemes
        for b in cfg.bandwidths
        for snr in cfg.snrs
        for seed in cfg.seeds
    ]
    workers = workers or int(cfg.raw["workers"])
    result = SweepResult(out_path)
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    tmp = out_path + ".part"
    with open(tmp, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                outcomes = list(pool.map(_run_cell, cells))
        else:
            outcomes = map(_run_cell, cells)
        for cell, (row, computed, error) in zip(cells, outcomes):
            if error is not None:
                result.failed.append((cell[2:], error))
                continue
            writer.writerow(row)
            fh.flush()
            result.rows.append(row)
            if computed:
                result.computed += 1
            else:
                result.cached += 1
    os.replace(tmp, out_path)
    return result


def read_results(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        missing = [c for c in RESULT_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"missing column {missing[0]!r}")
        extra = [c for c in header if c not in RESULT_COLUMNS]
        if extra:
            raise SchemaError(f"unexpected column {extra[0]!r}")
        rows = []
        for i, rec in enumerate(reader, start=2):
            row = {}
            for col, conv in (("scheme", str), ("snr_db", float), ("bandwidth_real_dims", int),
                              ("seed", int), ("trial_count", int), ("mean_accuracy", float),
                              ("std_accuracy", float), ("wall_ms", float)):
                try:
                    row[col] = conv(rec[col])
                except (TypeError, ValueError):
                    raise SchemaError(
                        f"line {i}: bad value {rec[col]!r} in column {col!r}"
                    ) from None
            if not 0.0 <= row["mean_accuracy"] <= 1.0:
                raise SchemaError(f"line {i}: column 'mean_accuracy' outside [0, 1]")
            rows.append(row)
    return rows


def emit_plot_data(csv_path, group_by, out_dir):
    """Write one ``x,mean,std`` file per (scheme, fixed-axis value).

    ``group_by`` names the varying axis (``snr`` or ``bandwidth``); seeds are
    aggregated by mean and population std of their mean accuracies.
    """
    axes = {"snr": ("snr_db", "bandwidth_real_dims", "b"),
            "bandwidth": ("bandwidth_real_dims", "snr_db", "snr")}
    if group_by not in axes:
        raise ValueError(f"group_by must be one of {sorted(axes)}")
    x_col, fixed_col, tag = axes[group_by]
    rows = read_results(csv_path)
    curves = {}
    for row in rows:
        curves.setdefault((row["scheme"], row[fixed_col]), {}).setdefault(row[x_col], []).append(
            row["mean_accuracy"])
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for (scheme, fixed), points in sorted(curves.items()):
        name = f"{scheme}__{tag}={fixed:g}.csv"
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write("x,mean,std\n")
            for x in sorted(points):
                vals = np.asarray(points[x])
                fh.write(f"{x!r},{float(vals.mean())!r},{float(vals.std())!r}\n")
        written.append(path)
    return written
