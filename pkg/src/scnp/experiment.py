"""Experiment configuration, artifact cache and sweep execution.

Config files are ``key = value`` lines (``#`` comments allowed).  Lists are
comma separated.  Recognized keys::

    dataset_dir, models, epsilons, epochs, runs, seed, alpha, k,
    per_class_train, val_size, hidden, lr, l2, dropout,
    literal_algorithm1, adjacency_dropout, lcc, row_normalize, workers, out

``model`` and ``epsilon`` are accepted as aliases of the list keys.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .datasets import extract_lcc, load_dataset_dir, make_split, save_node_map
from .errors import ConfigError, IoError
from .evaluation import accuracy, aggregate, macro_f1
from .graph import normalized_adjacency
from .nn import TrainConfig
from .pipelines import Model, ModelKind, predict, train, write_history
from .propagation import build_sigma, ppr_direct
from .storage import fnv1a64, load_ppr, load_sigma, save_matrix

log = logging.getLogger("scnp")

RESULT_COLUMNS = [
    "dataset", "model", "epsilon", "alpha", "epochs", "seed",
    "train_acc", "val_acc", "test_acc", "macro_f1", "wall_time", "error", "config_hash",
]
METRICS = ("train_acc", "val_acc", "test_acc", "macro_f1")
AGGREGATE_COLUMNS = (
    ["dataset", "model", "epsilon", "alpha", "epochs", "runs"]
    + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")]
    + ["config_hash"]
)

# settings that change what a single cell computes; the grid itself
# (models, epsilons, epochs, runs, seed) is deliberately left out so that a
# sweep can be extended and resumed under the same hash
_HASHED = (
    "alpha", "k", "per_class_train", "val_size", "hidden", "lr", "l2", "dropout",
    "literal_algorithm1", "adjacency_dropout", "lcc", "row_normalize",
)
_ALIASES = {"model": "models", "epsilon": "epsilons"}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_dir: str | None = None
    models: tuple = ("ppnp", "scnp")
    epsilons: tuple = (1e-4,)
    epochs: tuple = (80,)
    runs: int = 10
    seed: int = 0
    alpha: float = 0.1
    k: int = 10
    per_class_train: int = 20
    val_size: int = 500
    hidden: int = 64
    lr: float = 0.01
    l2: float = 0.005
    dropout: float = 0.5
    literal_algorithm1: bool = False
    adjacency_dropout: bool = True
    lcc: bool = True
    row_normalize: bool = False
    workers: int = 1
    out: str = "scnp-out"

    def validate(self):
        if not self.models:
            raise ConfigError("model list is empty")
        for m in self.models:
            try:
                ModelKind.parse(m)
            except ValueError as e:
                raise ConfigError(str(e)) from None
        if not self.epsilons:
            raise ConfigError("epsilon grid is empty")
        if any(not (e >= 0 and math.isfinite(e)) for e in self.epsilons):
            raise ConfigError("epsilons must be finite and >= 0")
        if not self.epochs or min(self.epochs) < 1:
            raise ConfigError("epoch budgets must be nonempty and >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must be in (0, 1]")
        if self.k < 1 or self.workers < 1:
            raise ConfigError("k and workers must be >= 1")
        try:
            self.train_config(0, 1)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        return self

    @property
    def kinds(self):
        # canonical order, duplicates removed
        wanted = {ModelKind.parse(m) for m in self.models}
        return [k for k in ModelKind if k in wanted]

    @property
    def epsilon_grid(self):
        return sorted(set(float(e) for e in self.epsilons))

    @property
    def budgets(self):
        return sorted(set(int(e) for e in self.epochs))

    def train_config(self, seed, max_epochs):
        return TrainConfig(
            lambda_l2=self.l2, dropout_rate=self.dropout, learning_rate=self.lr,
            max_epochs=max_epochs, seed=seed, adjacency_dropout=self.adjacency_dropout,
            hidden_size=self.hidden,
        )

    def config_hash(self, inputs: str) -> str:
        payload = {k: getattr(self, k) for k in _HASHED}
        payload["inputs"] = inputs
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_text(self, extra=None) -> str:
        lines = [f"# {k} = {v}" for k, v in (extra or {}).items()]
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{f.name} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "tuple":
            items = [s for s in raw.replace(",", " ").split() if s]
            conv = {"epsilons": float, "epochs": int}.get(key, str)
            return tuple(conv(s) for s in items)
        if kind == "bool":
            truth = configparser.ConfigParser.BOOLEAN_STATES.get(raw.strip().lower())
            if truth is None:
                raise ValueError(f"not a boolean: {raw!r}")
            return truth
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw.strip() or None
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from None


def parse_config_text(text: str, source="<config>") -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string("[scnp]\n" + text, source=str(source))
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    out = {}
    for key, raw in cp["scnp"].items():
        key = _ALIASES.get(key, key)
        if key not in _TYPES:
            raise ConfigError(f"{source}: unknown key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def read_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read config {path}: {e.strerror}") from e
    return parse_config_text(text, path)


def preset_names():
    return sorted(p.name[:-4] for p in resources.files("scnp.presets").iterdir() if p.name.endswith(".cfg"))


def read_preset(name) -> dict:
    res = resources.files("scnp.presets") / f"{name}.cfg"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_config_text(res.read_text(encoding="utf-8"), f"preset {name}")


def resolve_config(preset=None, config_file=None, overrides=None) -> ExperimentConfig:
    """Defaults, then preset, then config file, then flag overrides."""
    merged = {}
    if preset:
        merged.update(read_preset(preset))
    if config_file:
        merged.update(read_config_file(config_file))
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in ("models", "epsilons", "epochs"):
        if key in merged:
            merged[key] = tuple(merged[key])
    return ExperimentConfig(**merged).validate()


# ---- dataset and artifacts ----

DATASET_FILES = ("edges.tsv", "features.tsv", "labels.tsv")


def dataset_checksum(directory) -> str:
    if directory is None:
        raise ConfigError("no dataset directory given (--dataset-dir)")
    parts = []
    for name in DATASET_FILES:
        path = Path(directory) / name
        try:
            parts.append(f"{name}:{fnv1a64(path.read_bytes()):016x}")
        except OSError as e:
            raise IoError(f"cannot read {path}: {e.strerror}") from e
    return ";".join(parts)


def load_experiment_dataset(cfg: ExperimentConfig):
    if cfg.dataset_dir is None:
        raise ConfigError("no dataset directory given (--dataset-dir)")
    d = load_dataset_dir(cfg.dataset_dir, row_normalize=cfg.row_normalize)
    return extract_lcc(d) if cfg.lcc else d


def _eps_tag(eps):
    return repr(float(eps))


def ppr_name(cfg):
    return f"ppr_alpha{cfg.alpha!r}.scnpmat"


def sigma_name(cfg, eps):
    lit = "_literal" if cfg.literal_algorithm1 else ""
    return f"sigma_alpha{cfg.alpha!r}_eps{_eps_tag(eps)}{lit}.scnpmat"


def _file_checksum(path):
    return f"{fnv1a64(Path(path).read_bytes()):016x}"


def _atomic_text(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8", newline="")
        os.replace(tmp, path)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e.strerror}") from e


class ArtifactCache:
    """Π and Σ files keyed by the checksum of the dataset and their settings."""

    def __init__(self, directory, inputs: str, lcc: bool):
        self.dir = Path(directory)
        self.inputs = inputs
        self.lcc = lcc
        self.manifest_path = self.dir / "manifest.json"
        try:
            self.manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            self.manifest = {}
        except (OSError, ValueError) as e:
            log.warning("ignoring unreadable manifest %s: %s", self.manifest_path, e)
            self.manifest = {}

    def _meta(self, **kw):
        return dict(kw, inputs=self.inputs, lcc=self.lcc)

    def fresh(self, name, meta) -> bool:
        entry = self.manifest.get(name)
        path = self.dir / name
        if entry is None or not path.is_file():
            return False
        if {k: entry.get(k) for k in meta} != meta:
            return False
        return entry.get("checksum") == _file_checksum(path)

    def record(self, name, meta):
        self.manifest[name] = dict(meta, checksum=_file_checksum(self.dir / name))
        _atomic_text(self.manifest_path, json.dumps(self.manifest, indent=1, sort_keys=True) + "\n")

    def ensure(self, cfg: ExperimentConfig, d, epsilons):
        """Make sure Π and the requested Σ files exist; returns their paths."""
        self.dir.mkdir(parents=True, exist_ok=True)
        ppr_file = ppr_name(cfg)
        ppr_meta = self._meta(kind="ppr", alpha=cfg.alpha)
        pi = None
        if self.fresh(ppr_file, ppr_meta):
            log.info("cache hit: %s", self.dir / ppr_file)
        else:
            log.info("computing %s", ppr_file)
            pi = ppr_direct(normalized_adjacency(d.graph), cfg.alpha)
            save_matrix(pi, self.dir / ppr_file)
            self.record(ppr_file, ppr_meta)
        paths = {"ppr": self.dir / ppr_file, "sigma": {}}
        for eps in epsilons:
            name = sigma_name(cfg, eps)
            meta = self._meta(kind="sigma", alpha=cfg.alpha, epsilon=float(eps), literal=cfg.literal_algorithm1)
            if self.fresh(name, meta):
                log.info("cache hit: %s", self.dir / name)
            else:
                if pi is None:
                    pi = load_ppr(self.dir / ppr_file)
                t0 = time.perf_counter()
                sigma = build_sigma(pi, eps, literal=cfg.literal_algorithm1, workers=cfg.workers)
                log.info("computing %s (%.1fs)", name, time.perf_counter() - t0)
                save_matrix(sigma, self.dir / name)
                self.record(name, meta)
            paths["sigma"][float(eps)] = self.dir / name
        save_node_map(d, self.dir / "node_map.tsv")
        return paths


def precompute(cfg: ExperimentConfig, d=None, inputs=None, epsilons=None):
    inputs = inputs or dataset_checksum(cfg.dataset_dir)
    d = d if d is not None else load_experiment_dataset(cfg)
    cache = ArtifactCache(Path(cfg.out) / "artifacts", inputs, cfg.lcc)
    return cache.ensure(cfg, d, cfg.epsilon_grid if epsilons is None else epsilons)


def build_models(cfg: ExperimentConfig, d, paths):
    """``{(kind, epsilon or None): Model}`` for every cell family in the grid."""
    a_hat = normalized_adjacency(d.graph)
    out = {}
    pi = None
    for kind in cfg.kinds:
        if kind is ModelKind.GCN:
            out[(kind, None)] = Model(kind, a_hat=a_hat)
        elif kind is ModelKind.APPNP:
            out[(kind, None)] = Model(kind, a_hat=a_hat, alpha=cfg.alpha, k=cfg.k)
        elif kind is ModelKind.PPNP:
            if pi is None:
                pi = load_ppr(paths["ppr"])
            out[(kind, None)] = Model(kind, ppr=pi, alpha=cfg.alpha)
        else:
            for eps in cfg.epsilon_grid:
                out[(kind, eps)] = Model(kind, sigma=load_sigma(paths["sigma"][eps]), alpha=cfg.alpha)
    return out


# ---- sweep ----


@dataclass
class SweepContext:
    cfg: ExperimentConfig
    dataset: object
    models: dict
    config_hash: str
    out: Path
    name: str = ""
    rows: dict = field(default_factory=dict)


def _fmt(x):
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def row_key(row):
    return (row["model"], row["epsilon"], str(row["epochs"]), str(row["seed"]))


def _sort_key(row):
    order = {k.value: i for i, k in enumerate(ModelKind)}
    eps = float(row["epsilon"]) if row["epsilon"] else -1.0
    return (row["dataset"], order.get(row["model"], 99), eps, int(row["epochs"]), int(row["seed"]))


def history_name(kind, eps, seed):
    tag = f"_eps{_eps_tag(eps)}" if eps is not None else ""
    return f"{kind.value}{tag}_seed{seed}.jsonl"


def run_cell(ctx: SweepContext, kind, eps, seed):
    """Train one (model, epsilon, seed) cell to the largest budget.

    Every smaller budget is read off a parameter snapshot, which equals an
    independent run stopped at that epoch."""
    cfg, d = ctx.cfg, ctx.dataset
    budgets = cfg.budgets
    base = {"dataset": ctx.name, "model": kind.value, "epsilon": _fmt(eps), "alpha": _fmt(cfg.alpha),
            "seed": str(seed), "config_hash": ctx.config_hash}
    try:
        split = make_split(d, cfg.per_class_train, cfg.val_size, seed)
        result = train(ctx.models[(kind, eps)], d, split, cfg.train_config(seed, max(budgets)), budgets)
        write_history(
            ctx.out / "histories" / history_name(kind, eps, seed), result,
            {"config_hash": ctx.config_hash, "dataset": ctx.name, "model": kind.value,
             "epsilon": eps, "alpha": cfg.alpha},
        )
        rows = []
        for b in budgets:
            probs = predict(ctx.models[(kind, eps)], d.features, result.snapshots[b])
            test = split.test_idx
            rows.append(dict(
                base, epochs=str(b),
                train_acc=_fmt(accuracy(probs, d.labels, split.train_idx)),
                val_acc=_fmt(accuracy(probs, d.labels, split.val_idx)) if len(split.val_idx) else "",
                test_acc=_fmt(accuracy(probs, d.labels, test)) if len(test) else "",
                macro_f1=_fmt(macro_f1(probs, d.labels, test)) if len(test) else "",
                wall_time=f"{result.snapshot_times[b]:.4f}", error="",
            ))
        return rows
    except Exception as e:  # noqa: BLE001 - partial-failure policy
        msg = f"{type(e).__name__}: {e}"
        log.error("cell %s eps=%s seed=%s failed: %s", kind.value, eps, seed, msg)
        return [dict(base, epochs=str(b), train_acc="", val_acc="", test_acc="", macro_f1="",
                     wall_time="", error=msg) for b in budgets]


def write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\r\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: r.get(c, "") for c in columns})
    _atomic_text(path, buf.getvalue())


def read_csv(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except FileNotFoundError:
        return []
    except OSError as e:
        raise IoError(f"cannot read {path}: {e.strerror}") from e


def aggregate_rows(rows):
    groups = {}
    for r in rows:
        if r.get("error"):
            continue
        key = (r["dataset"], r["model"], r["epsilon"], r["alpha"], r["epochs"], r["config_hash"])
        groups.setdefault(key, []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: _sort_key(dict(dataset=k[0], model=k[1], epsilon=k[2], epochs=k[4], seed=0))):
        members = groups[key]
        rec = dict(zip(("dataset", "model", "epsilon", "alpha", "epochs", "config_hash"), key), runs=str(len(members)))
        for m in METRICS:
            vals = [float(r[m]) for r in members if r[m] != ""]
            if vals:
                s = aggregate(vals, m)
                rec[f"{m}_mean"], rec[f"{m}_std"] = _fmt(s.mean), _fmt(s.std)
        out.append(rec)
    return out


def sweep(cfg: ExperimentConfig, force=False):
    """Run every missing cell of the grid; returns the sorted result rows."""
    out = Path(cfg.out)
    (out / "histories").mkdir(parents=True, exist_ok=True)
    inputs = dataset_checksum(cfg.dataset_dir)
    config_hash = cfg.config_hash(inputs)
    results_path = out / "results.csv"

    previous = read_csv(results_path)
    stale = {r["config_hash"] for r in previous} - {config_hash}
    if stale and not force:
        raise ConfigError(f"{results_path} holds results for config hash {sorted(stale)}, "
                          f"current is {config_hash}; use --force to discard them")
    kept = {row_key(r): r for r in previous if r["config_hash"] == config_hash and not r["error"]}

    d = load_experiment_dataset(cfg)
    name = Path(cfg.dataset_dir).name
    used = cfg.epsilon_grid if ModelKind.SCNP in cfg.kinds else []
    needs_files = bool(used) or ModelKind.PPNP in cfg.kinds
    paths = precompute(cfg, d, inputs, used) if needs_files else {}
    ctx = SweepContext(cfg, d, build_models(cfg, d, paths), config_hash, out, name)
    _atomic_text(out / "config.cfg", cfg.to_text({"config_hash": config_hash, "inputs": inputs}))

    cells, rows = [], dict(kept)
    for kind, eps in ctx.models:
        for seed in range(cfg.seed, cfg.seed + cfg.runs):
            keys = [(kind.value, _fmt(eps), str(b), str(seed)) for b in cfg.budgets]
            if all(k in kept for k in keys):
                continue
            cells.append((kind, eps, seed))
    log.info("%d cells to run, %d rows reused", len(cells), len(kept))

    def flush():
        ordered = sorted(rows.values(), key=_sort_key)
        write_csv(results_path, RESULT_COLUMNS, ordered)
        write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, aggregate_rows(ordered))
        return ordered

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(run_cell, ctx, *c) for c in cells]
        for fut in as_completed(futures):
            for r in fut.result():
                rows[row_key(r)] = r
            flush()
    return flush()
