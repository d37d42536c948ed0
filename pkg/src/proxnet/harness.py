"""Experiment orchestration: config files, presets, traces, aggregation.

A run grid is (algorithms x seeds) over one shared problem and topology. Each
run writes one CSV trace; the per-algorithm mean across seeds lands in a
``*_mean.csv`` next to them. Everything except the wall-time column is
byte-reproducible for a fixed config and seed.

Config files are flat INI text (sections [run], [topology], [problem],
[regularizer], [dataset]); the shipped presets under ``presets/`` encode the
figure-caption parameter sets. Dataset files are never downloaded: MNIST
paths resolve against the PROXNET_DATA_DIR environment variable.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import (
    ALGORITHMS,
    FrameworkMatrices,
    RunConfig,
    RunRecord,
    StepsizeSchedule,
    run,
)
from .core import CompositeProblem
from .data import filter_binary, load_mnist, partition_heterogeneous, synthetic_binary
from .errors import AggregationError, ConfigError, DataError
from .mixing import build_from_edge_file, build_topology, build_weights
from .oracle import MlpArch, MlpObjective, QuadraticObjective, TanhObjective
from .prox import make_prox

DATA_DIR_ENV = "PROXNET_DATA_DIR"

_SCHEMA = {
    "run": {
        "algorithm", "k", "seed", "seeds", "eval_every", "gamma",
        "stepsizes", "stage_lengths", "batch_size", "out",
    },
    "topology": {"kind", "n", "weights", "edge_file"},
    "problem": {"loss", "hidden", "classes", "quad_file"},
    "regularizer": {"kind", "nu", "nu1", "nu2", "lo", "hi"},
    "dataset": {"kind", "digits", "images", "labels", "n_samples", "dim", "margin", "data_seed"},
}

_DEFAULTS = {
    "run": {
        "algorithm": "norm-ed",
        "k": "3000",
        "seed": "1",
        "seeds": "1",
        "eval_every": "10",
        "gamma": "0.1",
        "stepsizes": "1/40, 1/200, 1/1000",
        "batch_size": "16",
        "out": "out",
    },
    "topology": {"kind": "ring", "n": "30", "weights": "lazy-uniform"},
    "problem": {"loss": "tanh", "hidden": "32", "classes": "10"},
    "regularizer": {"kind": "l1", "nu": "0.01"},
    "dataset": {
        "kind": "synthetic",
        "digits": "2, 6",
        "images": "train-images-idx3-ubyte",
        "labels": "train-labels-idx1-ubyte",
        "n_samples": "2000",
        "dim": "50",
        "margin": "1.0",
        "data_seed": "0",
    },
}


def _parse_number(text: str) -> float:
    """Accept plain floats and caption-style fractions like 1/40."""
    text = text.strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def _parse_list(text: str):
    return [part.strip() for part in text.split(",") if part.strip()]


class Config:
    """Validated flat config: dict of section -> key -> string."""

    def __init__(self, sections: dict[str, dict[str, str]]):
        self.sections = {}
        for name, defaults in _DEFAULTS.items():
            merged = dict(defaults)
            merged.update(sections.get(name, {}))
            self.sections[name] = merged
        for name, keys in sections.items():
            if name not in _SCHEMA:
                raise ConfigError(f"unknown config section [{name}]; expected one of {sorted(_SCHEMA)}")
            for key in keys:
                if key not in _SCHEMA[name]:
                    raise ConfigError(
                        f"unknown key {key!r} in section [{name}]; "
                        f"valid keys: {sorted(_SCHEMA[name])}"
                    )

    def get(self, section: str, key: str, default=None) -> str | None:
        return self.sections.get(section, {}).get(key, default)

    def canonical(self) -> str:
        """Canonical text of the experiment definition; the output directory
        does not affect results and is excluded."""
        lines = []
        for name in sorted(self.sections):
            lines.append(f"[{name}]")
            for key in sorted(self.sections[name]):
                if (name, key) == ("run", "out"):
                    continue
                lines.append(f"{key} = {self.sections[name][key]}")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def parse_config_text(text: str) -> Config:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config does not parse: {exc}") from exc
    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    return Config(sections)


def load_config(path) -> Config:
    return parse_config_text(Path(path).read_text())


def list_presets() -> list[str]:
    files = resources.files("proxnet").joinpath("presets")
    return sorted(p.name[: -len(".cfg")] for p in files.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> Config:
    ref = resources.files("proxnet").joinpath("presets", f"{name}.cfg")
    if not ref.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {list_presets()}")
    return parse_config_text(ref.read_text())


def _build_dataset(cfg: Config):
    kind = cfg.get("dataset", "kind")
    if kind == "synthetic":
        return synthetic_binary(
            n_samples=int(cfg.get("dataset", "n_samples")),
            dim=int(cfg.get("dataset", "dim")),
            seed=int(cfg.get("dataset", "data_seed")),
            margin=_parse_number(cfg.get("dataset", "margin")),
        )
    if kind == "mnist":
        root = Path(os.environ.get(DATA_DIR_ENV, "."))
        images = root / cfg.get("dataset", "images")
        labels = root / cfg.get("dataset", "labels")
        missing = [str(p) for p in (images, labels) if not p.is_file()]
        if missing:
            raise DataError(
                "missing MNIST files: " + ", ".join(missing)
                + f" (set {DATA_DIR_ENV} to the directory holding the IDX files)"
            )
        return load_mnist(images, labels)
    raise ConfigError(f"unknown dataset kind {kind!r}; expected synthetic|mnist")


def _build_prox(cfg: Config):
    kind = cfg.get("regularizer", "kind")
    if kind == "none":
        return make_prox("none")
    if kind == "l1":
        return make_prox("l1", nu=_parse_number(cfg.get("regularizer", "nu")))
    if kind == "elastic_net":
        return make_prox(
            "elastic_net",
            nu1=_parse_number(cfg.get("regularizer", "nu1")),
            nu2=_parse_number(cfg.get("regularizer", "nu2")),
        )
    if kind == "box":
        lo = [_parse_number(v) for v in _parse_list(cfg.get("regularizer", "lo"))]
        hi = [_parse_number(v) for v in _parse_list(cfg.get("regularizer", "hi"))]
        return make_prox("box", lo=np.array(lo), hi=np.array(hi))
    raise ConfigError(f"unknown regularizer kind {kind!r}")


def build_problem(cfg: Config) -> CompositeProblem:
    n = int(cfg.get("topology", "n"))
    loss = cfg.get("problem", "loss")
    prox_op = _build_prox(cfg)
    gamma = _parse_number(cfg.get("run", "gamma"))

    if loss == "quadratic":
        quad_file = cfg.get("problem", "quad_file")
        if not quad_file:
            raise ConfigError("loss = quadratic needs a quad_file (npz with q, c per agent)")
        blob = np.load(quad_file)
        qs, cs = blob["q"], blob["c"]
        if qs.ndim == 2:
            qs = np.tile(qs[None], (n, 1, 1))
            cs = np.tile(cs[None], (n, 1))
        agents = [QuadraticObjective(qs[i], cs[i]) for i in range(n)]
        return CompositeProblem(agents, prox_op, gamma)

    ds = _build_dataset(cfg)
    if loss == "tanh":
        if cfg.get("dataset", "kind") == "mnist":
            pos, neg = (int(v) for v in _parse_list(cfg.get("dataset", "digits")))
            ds = filter_binary(ds, pos, neg)
        part = partition_heterogeneous(ds, n)
        agents = [TanhObjective(ds.features[idx], ds.labels[idx]) for idx in part.per_agent]
    elif loss == "mlp":
        part = partition_heterogeneous(ds, n)
        arch = MlpArch(
            d_in=ds.features.shape[1],
            d_hidden=int(cfg.get("problem", "hidden")),
            d_out=int(cfg.get("problem", "classes")),
        )
        labels = ds.labels
        if labels.min() < 0:  # binary +-1 labels map to classes {0, 1}
            labels = (labels > 0).astype(np.int64)
        agents = [MlpObjective(ds.features[idx], labels[idx], arch) for idx in part.per_agent]
    else:
        raise ConfigError(f"unknown loss {loss!r}; expected tanh|mlp|quadratic")
    return CompositeProblem(agents, prox_op, gamma)


def _build_mixing(cfg: Config):
    kind = cfg.get("topology", "kind")
    n = int(cfg.get("topology", "n"))
    if kind == "file":
        topo = build_from_edge_file(cfg.get("topology", "edge_file"), n=n)
    else:
        topo = build_topology(kind, n)
    return build_weights(topo, cfg.get("topology", "weights"))


def _parse_algorithm(name: str):
    """Return (run-config algorithm id, FrameworkMatrices factory or None)."""
    name = name.strip()
    if name in ALGORITHMS:
        return name, None
    if name.startswith("unified:"):
        variant = name.split(":", 1)[1]
        if variant == "gt":
            return "unified", FrameworkMatrices.gradient_tracking
        if variant == "ed":
            return "unified", FrameworkMatrices.exact_diffusion
        raise ConfigError(f"unknown unified variant {variant!r}; expected gt|ed")
    raise ConfigError(
        f"unknown algorithm {name!r}; valid names: {', '.join(ALGORITHMS)}, unified:gt, unified:ed"
    )


@dataclass(frozen=True)
class ExperimentSpec:
    """One grid of runs sharing a problem and topology."""

    config: Config
    algorithms: tuple[str, ...]
    seeds: tuple[int, ...]
    out_dir: Path

    @property
    def n_runs(self) -> int:
        return len(self.algorithms) * len(self.seeds)


def build_experiment(cfg: Config, out_override=None) -> ExperimentSpec:
    algorithms = tuple(_parse_list(cfg.get("run", "algorithm")))
    for name in algorithms:
        _parse_algorithm(name)
    if not algorithms:
        raise ConfigError("no algorithms requested")
    first = int(cfg.get("run", "seed"))
    count = int(cfg.get("run", "seeds"))
    if count < 1:
        raise ConfigError(f"seeds count must be >= 1, got {count}")
    out = Path(out_override) if out_override is not None else Path(cfg.get("run", "out"))
    return ExperimentSpec(config=cfg, algorithms=algorithms,
                          seeds=tuple(range(first, first + count)), out_dir=out)


def _schedule_from(cfg: Config, total: int) -> StepsizeSchedule:
    alphas = [_parse_number(v) for v in _parse_list(cfg.get("run", "stepsizes"))]
    lengths_text = cfg.get("run", "stage_lengths")
    lengths = [int(v) for v in _parse_list(lengths_text)] if lengths_text else None
    if len(alphas) == 1 and lengths is None:
        return StepsizeSchedule.constant(alphas[0], total)
    return StepsizeSchedule.staged(alphas, total, lengths)


def make_run_config(cfg: Config, algorithm: str, seed: int,
                    problem: CompositeProblem | None = None) -> RunConfig:
    algo_id, matrices_factory = _parse_algorithm(algorithm)
    problem = problem if problem is not None else build_problem(cfg)
    total = int(cfg.get("run", "k"))
    w = None
    matrices = None
    if algo_id not in ("norm-csgd", "prox-csgd"):
        w = _build_mixing(cfg)
    if matrices_factory is not None:
        matrices = matrices_factory(w)
    batch_text = cfg.get("run", "batch_size").strip().lower()
    batch = None if batch_text in ("full", "none") else int(batch_text)
    return RunConfig(
        algorithm=algo_id,
        problem=problem,
        schedule=_schedule_from(cfg, total),
        K=total,
        master_seed=seed,
        w=w,
        batch_size=batch,
        eval_every=int(cfg.get("run", "eval_every")),
        matrices=matrices,
    )


def aggregate(records: list[RunRecord]) -> RunRecord:
    """Per-iteration arithmetic mean of every metric across records."""
    if not records:
        raise AggregationError("nothing to aggregate")
    grid = records[0].iterations
    for rec in records[1:]:
        if rec.iterations != grid:
            raise AggregationError(
                f"iteration grids differ: {grid[:3]}.. vs {rec.iterations[:3]}.."
            )
    out = RunRecord(metadata=dict(records[0].metadata))
    out.metadata["seed"] = "mean"
    out.metadata["aggregated_over"] = len(records)
    for idx, k in enumerate(grid):
        out.append(
            k,
            float(np.mean([r.stationarity[idx] for r in records])),
            float(np.mean([r.consensus[idx] for r in records])),
            float(np.mean([r.objective[idx] for r in records])),
            float(np.mean([r.seconds[idx] for r in records])),
        )
    return out


CSV_HEADER = "iteration,stationarity,consensus,objective,seconds"


def emit_csv(record: RunRecord, path) -> None:
    """Write one trace: ``#`` metadata comments, header, >= 12 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {key} = {record.metadata[key]}" for key in sorted(record.metadata)]
    if record.abort_reason:
        lines.append(f"# abort = {record.abort_reason}")
    lines.append(CSV_HEADER)
    for k, stat, cons, obj, secs in record.rows():
        lines.append(f"{k},{stat:.17g},{cons:.17g},{obj:.17g},{secs:.6f}")
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write trace to {path}: {exc}") from exc


def read_csv(path) -> RunRecord:
    record = RunRecord()
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "=" in line:
                key, value = line[1:].split("=", 1)
                record.metadata[key.strip()] = value.strip()
            continue
        if line == CSV_HEADER:
            continue
        k, stat, cons, obj, secs = line.split(",")
        record.append(int(k), float(stat), float(cons), float(obj), float(secs))
    return record


def metric_bytes(path) -> bytes:
    """CSV content with the wall-time column dropped, for determinism checks."""
    kept = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or line == CSV_HEADER or not line.strip():
            kept.append(line)
        else:
            kept.append(line.rsplit(",", 1)[0])
    return "\n".join(kept).encode()


def run_experiment(spec: ExperimentSpec, progress=None) -> dict[str, Path]:
    """Execute the grid, write per-run CSVs plus per-algorithm ``*_mean.csv``.

    Returns a map of algorithm name to its aggregate CSV path.
    """
    cfg = spec.config
    problem = build_problem(cfg)
    digest = cfg.digest()
    aggregates: dict[str, Path] = {}
    for algo in spec.algorithms:
        records = []
        base = make_run_config(cfg, algo, spec.seeds[0], problem=problem)
        for seed in spec.seeds:
            rc = replace(base, master_seed=seed)
            record = run(rc)
            record.metadata["config_hash"] = digest
            record.metadata["version"] = __version__
            stem = algo.replace(":", "-")
            out = spec.out_dir / f"{stem}_seed{seed}.csv"
            emit_csv(record, out)
            records.append(record)
            if progress is not None:
                progress(algo, seed, record)
        mean = aggregate(records)
        mean.metadata["config_hash"] = digest
        mean.metadata["version"] = __version__
        mean_path = spec.out_dir / f"{algo.replace(':', '-')}_mean.csv"
        emit_csv(mean, mean_path)
        aggregates[algo] = mean_path
    return aggregates
