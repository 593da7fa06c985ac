"""Config-driven experiment runner: cells, budgets, persistence, resumption.

A cell is one optimisation run, addressed by (algorithm, function, combo,
dimension, repetition).  Cell seeds are a stable hash of that address plus
the master seed, so any cell can be reproduced in isolation; transformation
instances are fixed per (function, combo, dimension) and only the optimizer
seed varies across repetitions.  Completed cells are skipped on re-runs
unless forced.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .benchmark import (
    COMBOS,
    ConfigurationError,
    ObjectiveFunction,
    apply_transformation,
    make_suite,
    make_transformation,
    suite_manifest,
)
from .de_core import ControlParams, LshadeEngine
from .metrics import (
    DiagnosticTrace,
    RunRecord,
    Scoreboard,
    checkpoint_nfe,
    score_pipeline,
)
from .prescreen import PslshadeEngine

__all__ = [
    "EvaluationError",
    "EvaluationBudget",
    "AlgorithmSpec",
    "parse_algorithm",
    "ExperimentConfig",
    "load_config",
    "dump_config",
    "cell_seed",
    "suite_seed",
    "transform_seed",
    "build_objective",
    "run_cell",
    "run_experiment",
    "ResultStore",
]

RECORD_SCHEMA = "# pslshade record v1"
TRACE_SCHEMA = "# pslshade diagnostics v1"
MANIFEST_SCHEMA = "# pslshade manifest v1"
SCOREBOARD_SCHEMA = "# pslshade scoreboard v1"

RECORD_COLUMNS = "algorithm,function,combo,dim,rep,checkpoint_k,nfe,error"
TRACE_COLUMNS = "generation,nfe,accuracy,r2,tau,hypervolume,archive_size"

BUDGET_MULTIPLIERS = (100, 1000, 10000)


class EvaluationError(RuntimeError):
    """The objective returned a non-finite value; the run is aborted."""


class EvaluationBudget:
    """Counts true evaluations, tracks the best value, records checkpoints.

    ``evaluate`` is the budgeted channel; ``probe`` evaluates without
    touching the budget, the best-so-far state, or the checkpoint log (used
    for screening diagnostics only).  Checkpoint errors are captured at the
    exact evaluation index where each threshold is crossed.
    """

    def __init__(self, function: ObjectiveFunction, max_nfe: int,
                 record_full: bool = False):
        self.function = function
        self.max_nfe = int(max_nfe)
        self.optimum = function.optimum_value
        self.thresholds = checkpoint_nfe(self.max_nfe, function.dimension)
        self.checkpoint_errors = [math.nan] * len(self.thresholds)
        self._next_cp = 0
        self.nfe = 0
        self.probe_count = 0
        self.best_value = math.inf
        self.record_full = record_full
        self.full_history: list[float] = []

    def remaining(self) -> int:
        return self.max_nfe - self.nfe

    def evaluate(self, rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        m = len(rows)
        if m > self.remaining():
            raise ValueError("evaluation batch exceeds the remaining budget")
        values = np.atleast_1d(np.asarray(self.function.evaluate(rows), dtype=float))
        if not np.all(np.isfinite(values)):
            raise EvaluationError(
                f"{self.function.id} returned a non-finite value at nfe={self.nfe}")
        running = np.minimum(np.minimum.accumulate(values), self.best_value)
        while (self._next_cp < len(self.thresholds)
               and self.thresholds[self._next_cp] <= self.nfe + m):
            offset = self.thresholds[self._next_cp] - self.nfe - 1
            self.checkpoint_errors[self._next_cp] = float(running[offset]) - self.optimum
            self._next_cp += 1
        self.nfe += m
        self.best_value = float(running[-1])
        if self.record_full:
            self.full_history.extend(running.tolist())
        return values

    def probe(self, rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        values = np.atleast_1d(np.asarray(self.function.evaluate(rows), dtype=float))
        if not np.all(np.isfinite(values)):
            raise EvaluationError(
                f"{self.function.id} returned a non-finite value in a probe")
        self.probe_count += len(rows)
        return values

    @property
    def best_error(self) -> float:
        return self.best_value - self.optimum


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class AlgorithmSpec:
    """One algorithm entry of an experiment, e.g. ``pslshade:ns=2``."""

    label: str
    kind: str
    n_s: Optional[int] = None
    init: Optional[str] = None
    screener: str = "surrogate"


def parse_algorithm(text: str) -> AlgorithmSpec:
    text = text.strip()
    name, _, opt_text = text.partition(":")
    name = name.strip()
    if name not in ("lshade", "pslshade"):
        raise ConfigurationError(f"unknown algorithm {name!r}")
    opts = {}
    if opt_text:
        for item in opt_text.split(","):
            key, _, value = item.partition("=")
            key = key.strip()
            value = value.strip()
            if key == "ns":
                opts["n_s"] = int(value)
            elif key == "init":
                if value not in ("lhs", "uniform"):
                    raise ConfigurationError(f"unknown init scheme {value!r}")
                opts["init"] = value
            elif key == "screener":
                if value not in ("surrogate", "random"):
                    raise ConfigurationError(f"unknown screener {value!r}")
                opts["screener"] = value
            else:
                raise ConfigurationError(f"unknown algorithm option {key!r}")
    if name == "lshade" and opts:
        raise ConfigurationError("lshade takes no options")
    label = name
    if "n_s" in opts:
        label += f"_ns{opts['n_s']}"
    if "init" in opts:
        label += f"_init{opts['init']}"
    if opts.get("screener", "surrogate") != "surrogate":
        label += f"_{opts['screener']}"
    return AlgorithmSpec(label=label, kind=name, **opts)


@dataclass
class ExperimentConfig:
    algorithms: list[AlgorithmSpec]
    dimensions: tuple[int, ...] = (10, 20)
    budget_multiplier: int = 1000
    repetitions: int = 30
    combos: tuple[str, ...] = COMBOS
    master_seed: int = 1
    n_s: int = 5
    diagnostics: bool = False
    functions: tuple[str, ...] = tuple(f"F{i}" for i in range(1, 11))

    def validate(self) -> None:
        if not self.algorithms:
            raise ConfigurationError("at least one algorithm is required")
        labels = [a.label for a in self.algorithms]
        if len(set(labels)) != len(labels):
            raise ConfigurationError("algorithm labels must be unique")
        if self.budget_multiplier not in BUDGET_MULTIPLIERS:
            raise ConfigurationError(
                f"budget multiplier must be one of {BUDGET_MULTIPLIERS}")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        for dim in self.dimensions:
            if not 2 <= dim <= 100:
                raise ConfigurationError("dimensions must lie in 2..100")
            if self.budget_multiplier * dim < 18 * dim:
                raise ConfigurationError("budget is smaller than the initial population")
        for combo in self.combos:
            if combo not in COMBOS:
                raise ConfigurationError(f"unknown transformation combo {combo!r}")
        if self.n_s < 1:
            raise ConfigurationError("n_s must be >= 1")

    def budget(self, dimension: int) -> int:
        return self.budget_multiplier * dimension


def load_config(path) -> ExperimentConfig:
    """Read a key = value config file (single [experiment] section)."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"cannot read config file {path}")
    if "experiment" not in parser:
        raise ConfigurationError("config file needs an [experiment] section")
    section = parser["experiment"]
    known = {"algorithms", "dimensions", "budget_multiplier", "repetitions",
             "combos", "master_seed", "n_s", "diagnostics", "functions"}
    unknown = set(section) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")

    def split(value):
        return [v.strip() for v in value.split(",") if v.strip()]

    kwargs = {}
    if "algorithms" not in section:
        raise ConfigurationError("config must list algorithms")
    kwargs["algorithms"] = [parse_algorithm(a) for a in split(section["algorithms"])]
    if "dimensions" in section:
        kwargs["dimensions"] = tuple(int(v) for v in split(section["dimensions"]))
    if "budget_multiplier" in section:
        kwargs["budget_multiplier"] = section.getint("budget_multiplier")
    if "repetitions" in section:
        kwargs["repetitions"] = section.getint("repetitions")
    if "combos" in section:
        kwargs["combos"] = tuple(split(section["combos"]))
    if "master_seed" in section:
        kwargs["master_seed"] = section.getint("master_seed")
    if "n_s" in section:
        kwargs["n_s"] = section.getint("n_s")
    if "diagnostics" in section:
        kwargs["diagnostics"] = section.getboolean("diagnostics")
    if "functions" in section:
        kwargs["functions"] = tuple(split(section["functions"]))
    config = ExperimentConfig(**kwargs)
    config.validate()
    return config


def dump_config(config: ExperimentConfig) -> str:
    """Canonical text form of a config, used for store compatibility checks."""
    parser = configparser.ConfigParser()
    parser["experiment"] = {
        "algorithms": ", ".join(_algorithm_text(a) for a in config.algorithms),
        "dimensions": ", ".join(str(d) for d in config.dimensions),
        "budget_multiplier": str(config.budget_multiplier),
        "repetitions": str(config.repetitions),
        "combos": ", ".join(config.combos),
        "master_seed": str(config.master_seed),
        "n_s": str(config.n_s),
        "diagnostics": str(config.diagnostics).lower(),
        "functions": ", ".join(config.functions),
    }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _algorithm_text(spec: AlgorithmSpec) -> str:
    opts = []
    if spec.n_s is not None:
        opts.append(f"ns={spec.n_s}")
    if spec.init is not None:
        opts.append(f"init={spec.init}")
    if spec.screener != "surrogate":
        opts.append(f"screener={spec.screener}")
    return spec.kind + (":" + ",".join(opts) if opts else "")


# ---------------------------------------------------------------------------
# seeds and objective construction

def _mix(*parts) -> int:
    digest = hashlib.blake2b("|".join(str(p) for p in parts).encode(),
                             digest_size=8).digest()
    return int.from_bytes(digest, "big")


def cell_seed(master_seed: int, algorithm: str, function_id: str, combo: str,
              repetition: int) -> int:
    return _mix("cell", master_seed, algorithm, function_id, combo, repetition)


def suite_seed(master_seed: int, dimension: int) -> int:
    return _mix("suite", master_seed, dimension)


def transform_seed(master_seed: int, function_id: str, combo: str,
                   dimension: int) -> int:
    return _mix("transform", master_seed, function_id, combo, dimension)


@lru_cache(maxsize=32)
def _cached_suite(dimension: int, seed: int):
    return {f.id: f for f in make_suite(dimension, seed)}


def build_objective(master_seed: int, function_id: str, combo: str,
                    dimension: int) -> ObjectiveFunction:
    """Transformed suite member for one cell; fixed per (function, combo, dim)."""
    suite = _cached_suite(dimension, suite_seed(master_seed, dimension))
    if function_id not in suite:
        raise ConfigurationError(f"unknown function id {function_id!r}")
    base = suite[function_id]
    if combo == "none":
        return base
    spec = make_transformation(combo, dimension,
                               transform_seed(master_seed, function_id, combo, dimension))
    return apply_transformation(base, spec)


def _make_engine(spec: AlgorithmSpec, config: ExperimentConfig, budget,
                 bounds, params, seed):
    if spec.kind == "lshade":
        return LshadeEngine(budget, bounds, params, seed,
                            diagnostics=config.diagnostics)
    return PslshadeEngine(
        budget, bounds, params, seed,
        n_s=spec.n_s if spec.n_s is not None else config.n_s,
        init=spec.init if spec.init is not None else "lhs",
        screener=spec.screener,
        diagnostics=config.diagnostics,
    )


def run_cell(config: ExperimentConfig, algorithm: AlgorithmSpec, function_id: str,
             combo: str, dimension: int, repetition: int, seed: Optional[int] = None,
             record_full: bool = False):
    """Execute one cell; returns (RunRecord, DiagnosticTrace or None, budget)."""
    max_nfe = config.budget(dimension)
    params = ControlParams.for_dimension(dimension, max_nfe)
    if max_nfe < params.n_init:
        raise ConfigurationError("budget is smaller than the initial population")
    function = build_objective(config.master_seed, function_id, combo, dimension)
    if seed is None:
        seed = cell_seed(config.master_seed, algorithm.label, function_id, combo,
                         repetition)
    budget = EvaluationBudget(function, max_nfe, record_full=record_full)
    engine = _make_engine(algorithm, config, budget, function.bounds, params, seed)
    engine.run()
    record = RunRecord(
        algorithm=algorithm.label,
        function_id=function_id,
        combo=combo,
        dimension=dimension,
        repetition=repetition,
        checkpoints=list(zip(budget.thresholds, budget.checkpoint_errors)),
        final_error=budget.checkpoint_errors[-1],
    )
    trace = None
    if config.diagnostics:
        rows = [
            (s.generation, s.nfe,
             _nan_if_none(s.screening_accuracy), _nan_if_none(s.surrogate_r2),
             _nan_if_none(s.rank_correlation), s.hypervolume,
             _nan_if_none(s.sample_archive_size))
            for s in engine.trace
        ]
        trace = DiagnosticTrace(algorithm.label, function_id, combo, dimension,
                                repetition, rows)
    return record, trace, budget


def _nan_if_none(value):
    return math.nan if value is None else value


# ---------------------------------------------------------------------------
# result store

class ResultStore:
    """On-disk layout of one experiment: records, diagnostics, manifest."""

    def __init__(self, root):
        self.root = Path(root)

    # paths ----------------------------------------------------------------

    def record_path(self, algorithm, function_id, combo, dim, rep) -> Path:
        return (self.root / "records" / algorithm
                / f"{function_id}_{combo}_{dim}D_r{rep}.csv")

    def trace_path(self, algorithm, function_id, combo, dim, rep) -> Path:
        return (self.root / "diagnostics" / algorithm
                / f"{function_id}_{combo}_{dim}D_r{rep}.csv")

    def failed_path(self, algorithm, function_id, combo, dim, rep) -> Path:
        return self.record_path(algorithm, function_id, combo, dim, rep).with_suffix(".failed")

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.csv"

    @property
    def config_path(self) -> Path:
        return self.root / "config.ini"

    # config snapshot --------------------------------------------------------

    def check_config(self, config: ExperimentConfig, force: bool) -> None:
        text = dump_config(config)
        if self.config_path.exists():
            if self.config_path.read_text() != text and not force:
                raise ConfigurationError(
                    f"store {self.root} was created with a different config "
                    "(use force to overwrite)")
        self.root.mkdir(parents=True, exist_ok=True)
        self.config_path.write_text(text)

    # records ----------------------------------------------------------------

    def write_record(self, record: RunRecord) -> Path:
        path = self.record_path(record.algorithm, record.function_id, record.combo,
                                record.dimension, record.repetition)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [RECORD_SCHEMA, RECORD_COLUMNS]
        for k, (nfe, error) in enumerate(record.checkpoints):
            lines.append(",".join([
                record.algorithm, record.function_id, record.combo,
                str(record.dimension), str(record.repetition),
                str(k), str(nfe), repr(float(error)),
            ]))
        path.write_text("\n".join(lines) + "\n")
        return path

    def read_record(self, path) -> RunRecord:
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != RECORD_SCHEMA:
            raise ConfigurationError(f"{path} is not a record file")
        checkpoints = []
        meta = None
        for line in lines[2:]:
            alg, fid, combo, dim, rep, _k, nfe, error = line.split(",")
            meta = (alg, fid, combo, int(dim), int(rep))
            checkpoints.append((int(nfe), float(error)))
        if meta is None:
            raise ConfigurationError(f"{path} contains no checkpoints")
        return RunRecord(*meta, checkpoints=checkpoints,
                         final_error=checkpoints[-1][1])

    def write_trace(self, trace: DiagnosticTrace) -> Path:
        path = self.trace_path(trace.algorithm, trace.function_id, trace.combo,
                               trace.dimension, trace.repetition)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [TRACE_SCHEMA, TRACE_COLUMNS]
        for gen, nfe, acc, r2, tau, hv, arch in trace.rows:
            lines.append(",".join([
                str(gen), str(nfe), repr(float(acc)), repr(float(r2)),
                repr(float(tau)), repr(float(hv)), repr(float(arch)),
            ]))
        path.write_text("\n".join(lines) + "\n")
        return path

    def iter_record_paths(self):
        yield from sorted((self.root / "records").glob("*/*.csv"))

    def iter_trace_paths(self):
        yield from sorted((self.root / "diagnostics").glob("*/*.csv"))

    def read_all_records(self) -> list[RunRecord]:
        return [self.read_record(p) for p in self.iter_record_paths()]

    def mark_failed(self, algorithm, function_id, combo, dim, rep, message) -> None:
        path = self.failed_path(algorithm, function_id, combo, dim, rep)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(message + "\n")

    def write_manifest(self, entries) -> None:
        lines = [MANIFEST_SCHEMA,
                 "algorithm,function,combo,dim,rep,status,final_error,file"]
        for entry in sorted(entries):
            lines.append(",".join(str(v) for v in entry))
        self.manifest_path.write_text("\n".join(lines) + "\n")

    def write_suite_manifests(self, config: ExperimentConfig) -> None:
        for dim in config.dimensions:
            suite = make_suite(dim, suite_seed(config.master_seed, dim))
            path = self.root / f"suite_{dim}D.csv"
            path.write_text("# pslshade suite v1\n"
                            "function,category,seed,combo,optimum\n"
                            + suite_manifest(suite) + "\n")

    def scoreboard(self, algorithms=None) -> Scoreboard:
        return score_pipeline(self.read_all_records(), algorithms=algorithms)


# ---------------------------------------------------------------------------
# experiment driver

def _limit_blas_threads():
    # cells are the unit of parallelism; nested BLAS threading only thrashes
    threadpool_limits(limits=1)


def _cell_job(args):
    config, spec, fid, combo, dim, rep, root = args
    store = ResultStore(root)
    try:
        record, trace, _ = run_cell(config, spec, fid, combo, dim, rep)
    except EvaluationError as exc:
        store.mark_failed(spec.label, fid, combo, dim, rep, str(exc))
        return (spec.label, fid, combo, dim, rep, "failed", math.nan, "")
    path = store.write_record(record)
    if trace is not None:
        store.write_trace(trace)
    return (spec.label, fid, combo, dim, rep, "ok", record.final_error,
            str(path.relative_to(store.root)))


def run_experiment(config: ExperimentConfig, out_dir, workers: Optional[int] = None,
                   force: bool = False, progress=None) -> ResultStore:
    """Run every missing cell of the experiment, then refresh the manifest.

    Cells are independent and run across worker processes; a completed
    cell (its record file exists) is skipped unless ``force`` is set.
    """
    config.validate()
    store = ResultStore(out_dir)
    store.check_config(config, force)
    store.write_suite_manifests(config)

    jobs = []
    entries = []
    for spec in config.algorithms:
        for fid in config.functions:
            for combo in config.combos:
                for dim in config.dimensions:
                    for rep in range(config.repetitions):
                        path = store.record_path(spec.label, fid, combo, dim, rep)
                        if path.exists() and not force:
                            record = store.read_record(path)
                            entries.append((spec.label, fid, combo, dim, rep, "ok",
                                            record.final_error,
                                            str(path.relative_to(store.root))))
                            continue
                        jobs.append((config, spec, fid, combo, dim, rep, store.root))

    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(jobs) <= 1:
        _limit_blas_threads()
        for i, entry in enumerate(map(_cell_job, jobs)):
            entries.append(entry)
            if progress:
                progress(i + 1, len(jobs), entry)
    else:
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_limit_blas_threads) as pool:
            for i, entry in enumerate(pool.map(_cell_job, jobs, chunksize=4)):
                entries.append(entry)
                if progress:
                    progress(i + 1, len(jobs), entry)

    store.write_manifest(entries)
    return store


def aggregate_diagnostics(store: ResultStore):
    """Mean per-generation diagnostics per (algorithm, function, dim).

    Returns rows (algorithm, function, dim, generation, mean nfe, mean
    accuracy, mean r2, mean tau, mean hypervolume, runs) where means ignore
    missing values.
    """
    groups: dict[tuple, dict[int, list]] = {}
    for path in store.iter_trace_paths():
        algorithm = path.parent.name
        fid, combo, dim_part, _rep = path.stem.split("_")
        dim = int(dim_part.rstrip("D"))
        lines = path.read_text().splitlines()
        if not lines or lines[0] != TRACE_SCHEMA:
            raise ConfigurationError(f"{path} is not a diagnostics file")
        for line in lines[2:]:
            gen, nfe, acc, r2, tau, hv, arch = line.split(",")
            key = (algorithm, fid, dim)
            groups.setdefault(key, {}).setdefault(int(gen), []).append(
                (float(nfe), float(acc), float(r2), float(tau), float(hv)))
    rows = []
    for (algorithm, fid, dim) in sorted(groups):
        for gen in sorted(groups[(algorithm, fid, dim)]):
            samples = np.array(groups[(algorithm, fid, dim)][gen])
            means = [
                float(np.mean(col[~np.isnan(col)])) if (~np.isnan(col)).any()
                else math.nan
                for col in samples.T
            ]
            rows.append((algorithm, fid, dim, gen, means[0], means[1], means[2],
                         means[3], means[4], len(samples)))
    return rows
