"""Experiment front-end: config files, single runs, sweeps, ablations, synthetic data."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from fedgraphrec.data import (
    FileFormat,
    Tier,
    assign_privacy,
    leave_one_out_split,
    load_interactions,
    sample_eval_negatives,
)
from fedgraphrec.evaluation import evaluate_round
from fedgraphrec.federation import FederationConfig, run_federation
from fedgraphrec.graph import build_user_graph, dump_triplets, normalize
from fedgraphrec.model import MLP_INIT_CHOICES, ModelConfig, TrainingError
from fedgraphrec.seeding import EVAL_NEG_SALT, SYNTH_SALT, derive_rng

log = logging.getLogger(__name__)

ROUNDS_CSV_HEADER = (
    "round,loss,hr,ndcg,hr_public,ndcg_public,hr_private,ndcg_private,wall_time"
)
GRID_LEARNING_RATES = (0.0001, 0.001, 0.01, 0.1)
# Probability mass a synthetic user puts on their own cluster's item pool.
CLUSTER_BIAS = 0.8

SWEEP_AXES = ("alpha", "public_ratio", "delta", "layers", "embed_dim", "learning_rate")
# axis name -> (config field, value parser)
_AXIS_FIELDS = {
    "alpha": ("alpha", float),
    "public_ratio": ("public_ratio", float),
    "delta": ("ldp_delta", float),
    "layers": ("layers", int),
    "embed_dim": ("embed_dim", int),
    "learning_rate": ("lr", float),
}

ABLATION_VARIANTS = (
    ("full", {}),
    ("w/o IEI", {"ablate_iei": True}),
    ("w/o UGC", {"ablate_ugc": True}),
    ("w/o U-PIE", {"ablate_upie": True}),
)


class ConfigError(ValueError):
    """Invalid configuration: bad value, unknown key, missing input."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_hidden(text: str) -> tuple[int, ...]:
    try:
        widths = tuple(int(part) for part in str(text).split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated widths, got {text!r}") from None
    if not widths:
        raise ConfigError("mlp_hidden needs at least one width")
    return widths


def parse_learning_rate(text) -> "float | str":
    """A positive float, or the literal 'grid' for validation-based selection."""
    if isinstance(text, (int, float)):
        value = float(text)
    else:
        if str(text).strip().lower() == "grid":
            return "grid"
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"lr must be a positive number or 'grid', got {text!r}") from None
    if value <= 0:
        raise ConfigError(f"lr must be positive, got {value}")
    return value


@dataclass
class ExperimentConfig:
    """Everything one experiment needs; every field has a working default.

    `lr` is either a float or the string "grid", which selects the best rate
    from GRID_LEARNING_RATES by validation HR before the real repetitions.
    """

    dataset: str | None = None
    format: str = "tsv"
    public_ratio: float = 1.0
    alpha: float = 0.3
    ldp_delta: float = 0.0
    layers: int = 1
    embed_dim: int = 32
    mlp_hidden: tuple[int, ...] = (32, 16)
    lr: object = "grid"
    rounds: int = 100
    local_epochs: int = 1
    neg_ratio: int = 4
    batch_size: int = 256
    init_scale: float = 0.01
    mlp_init: str = "he"
    clip_norm: float = 0.0
    ablate_iei: bool = False
    ablate_ugc: bool = False
    ablate_upie: bool = False
    global_from_public_only: bool = False
    k: int = 10
    eval_negatives: int = 99
    eval_every: int = 1
    seed: int = 0
    reps: int = 5
    out: str = "runs"
    label: str = "experiment"
    workers: int = 1
    checkpoint_every: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.public_ratio <= 1.0:
            raise ConfigError(f"public_ratio must be in [0, 1], got {self.public_ratio}")
        try:
            FileFormat.from_string(self.format)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.lr = parse_learning_rate(self.lr)
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.eval_negatives < self.k - 1:
            raise ConfigError(
                f"eval_negatives ({self.eval_negatives}) must be >= k - 1 ({self.k - 1})"
            )
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.mlp_init not in MLP_INIT_CHOICES:
            raise ConfigError(f"mlp_init must be one of {MLP_INIT_CHOICES}, got {self.mlp_init!r}")
        try:
            self.to_federation_config(self.seed, lr=0.01).validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def to_federation_config(self, rep_seed: int, lr: float) -> FederationConfig:
        model = ModelConfig(
            embed_dim=self.embed_dim,
            mlp_hidden=tuple(self.mlp_hidden),
            learning_rate=lr,
            local_epochs=self.local_epochs,
            neg_ratio=self.neg_ratio,
            batch_size=self.batch_size,
            init_scale=self.init_scale,
            mlp_init=self.mlp_init,
            clip_norm=self.clip_norm if self.clip_norm > 0 else None,
        )
        return FederationConfig(
            rounds=self.rounds,
            alpha=self.alpha,
            gcn_layers=self.layers,
            ldp_scale=self.ldp_delta,
            disable_iei=self.ablate_iei,
            disable_ugc=self.ablate_ugc,
            disable_upie=self.ablate_upie,
            global_from_public_only=self.global_from_public_only,
            model=model,
            seed=rep_seed,
        )

    def to_text(self) -> str:
        """Flat `key = value` provenance form; parses back via from_file."""
        lines = ["# resolved experiment configuration"]
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                value = ""
            elif isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_FIELD_PARSERS = {
    "dataset": str,
    "format": str,
    "public_ratio": float,
    "alpha": float,
    "ldp_delta": float,
    "layers": int,
    "embed_dim": int,
    "mlp_hidden": _parse_hidden,
    "lr": parse_learning_rate,
    "rounds": int,
    "local_epochs": int,
    "neg_ratio": int,
    "batch_size": int,
    "init_scale": float,
    "mlp_init": str,
    "clip_norm": float,
    "ablate_iei": _parse_bool,
    "ablate_ugc": _parse_bool,
    "ablate_upie": _parse_bool,
    "global_from_public_only": _parse_bool,
    "k": int,
    "eval_negatives": int,
    "eval_every": int,
    "seed": int,
    "reps": int,
    "out": str,
    "label": str,
    "workers": int,
    "checkpoint_every": int,
}


def load_config_file(path) -> dict:
    """Parse a flat `key = value` file into typed overrides.

    Unknown keys are a hard error; blank lines and `#` comments are ignored.
    """
    overrides = {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_PARSERS:
            raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
        if key == "dataset" and raw == "":
            overrides[key] = None
            continue
        try:
            overrides[key] = _FIELD_PARSERS[key](raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}:{line_no}: bad value for {key}: {exc}") from None
    return overrides


def build_config(file_path=None, overrides=None, env=None) -> ExperimentConfig:
    """Defaults <- config file <- explicit overrides; FEDREC_SEED fills in a
    seed when neither file nor overrides set one."""
    env = os.environ if env is None else env
    config = ExperimentConfig()
    seed_set = False
    if file_path is not None:
        file_values = load_config_file(file_path)
        seed_set = "seed" in file_values
        for key, value in file_values.items():
            setattr(config, key, value)
    if overrides:
        for key, value in overrides.items():
            if key not in _FIELD_PARSERS:
                raise ConfigError(f"unknown config key {key!r}")
            if value is None:
                continue
            setattr(config, key, value)
            if key == "seed":
                seed_set = True
    if not seed_set and env.get("FEDREC_SEED"):
        try:
            config.seed = int(env["FEDREC_SEED"])
        except ValueError:
            raise ConfigError(f"FEDREC_SEED must be an integer, got {env['FEDREC_SEED']!r}") from None
    config.validate()
    return config


@dataclass
class RepetitionResult:
    """Per-round rows plus the two headline test-metric snapshots."""

    rep: int
    seed: int
    learning_rate: float
    rounds: list
    best_round: int
    best_val_hr: float
    best_val_ndcg: float
    best_hr: float
    best_ndcg: float
    final_hr: float
    final_ndcg: float


def run_repetition(
    config: ExperimentConfig, lr: float, rep: int, checkpoint_path: str | None = None
) -> RepetitionResult:
    """One full federated run with seed base + rep."""
    if config.dataset is None:
        raise ConfigError("no dataset configured (--dataset or config file)")
    rep_seed = config.seed + rep
    fmt = FileFormat.from_string(config.format)
    interactions = load_interactions(config.dataset, fmt)
    dataset = leave_one_out_split(interactions, hold_validation=True)
    tiers = assign_privacy(dataset.num_users, config.public_ratio, rep_seed)
    negatives = [
        sample_eval_negatives(
            dataset, u, config.eval_negatives, derive_rng(rep_seed, u, EVAL_NEG_SALT)
        )
        for u in range(dataset.num_users)
    ]

    fed_config = config.to_federation_config(rep_seed, lr)
    if checkpoint_path is not None and config.checkpoint_every > 0:
        fed_config.checkpoint_every = config.checkpoint_every
        fed_config.checkpoint_path = checkpoint_path

    val_points = []

    def eval_hook(round_index, clients):
        # Stride-skipped rounds stay unevaluated, but the final round always runs.
        if round_index % config.eval_every != 0 and round_index != config.rounds:
            return None
        metrics = evaluate_round(clients, dataset, negatives, tiers, config.k, "test")
        val = evaluate_round(clients, dataset, negatives, tiers, config.k, "validation")
        val_points.append((round_index, val.hr, val.ndcg))
        return metrics

    records = run_federation(dataset, tiers, fed_config, eval_hook)

    rows = []
    for record in records:
        metrics = record.metrics
        pub = metrics.per_tier.get(Tier.PUBLIC) if metrics else None
        priv = metrics.per_tier.get(Tier.PRIVATE) if metrics else None
        rows.append(
            {
                "round": record.round_index,
                "loss": record.mean_train_loss,
                "hr": metrics.hr if metrics else None,
                "ndcg": metrics.ndcg if metrics else None,
                "hr_public": pub.hr if pub else None,
                "ndcg_public": pub.ndcg if pub else None,
                "hr_private": priv.hr if priv else None,
                "ndcg_private": priv.ndcg if priv else None,
                "wall_time": record.wall_time,
            }
        )

    best_round, best_val_hr, best_val_ndcg = max(
        val_points, key=lambda point: (point[1], -point[0])
    )
    by_round = {record.round_index: record.metrics for record in records}
    best_metrics = by_round[best_round]
    final_metrics = records[-1].metrics
    return RepetitionResult(
        rep=rep,
        seed=rep_seed,
        learning_rate=lr,
        rounds=rows,
        best_round=best_round,
        best_val_hr=best_val_hr,
        best_val_ndcg=best_val_ndcg,
        best_hr=best_metrics.hr,
        best_ndcg=best_metrics.ndcg,
        final_hr=final_metrics.hr,
        final_ndcg=final_metrics.ndcg,
    )


def _worker(payload):
    config_values, lr, rep, checkpoint_path = payload
    config = ExperimentConfig(**config_values)
    return run_repetition(config, lr, rep, checkpoint_path)


def _run_repetitions(
    config: ExperimentConfig, lr: float, out_dir: Path | None
) -> list[RepetitionResult]:
    """All repetitions, optionally across a process pool; results in rep order."""
    jobs = []
    for rep in range(config.reps):
        checkpoint_path = None
        if config.checkpoint_every > 0 and out_dir is not None:
            rep_dir = out_dir / f"rep{rep}"
            rep_dir.mkdir(parents=True, exist_ok=True)
            checkpoint_path = str(rep_dir / "checkpoint.bin")
        jobs.append((dataclasses.asdict(config), lr, rep, checkpoint_path))
    if config.workers > 1 and config.reps > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_worker, jobs))
    return [_worker(job) for job in jobs]


def select_learning_rate(config: ExperimentConfig) -> tuple[float, list[tuple[float, float]]]:
    """Grid phase: one repetition per candidate rate, winner by validation HR.

    Returns (chosen rate, [(rate, best validation HR)] in grid order); ties
    go to the earlier grid entry.
    """
    outcomes = []
    for lr in GRID_LEARNING_RATES:
        try:
            result = run_repetition(config, lr, rep=0)
        except TrainingError as exc:
            # A diverging candidate loses the grid; it must not kill the run.
            log.warning("grid: lr=%s diverged (%s)", lr, exc)
            outcomes.append((lr, float("nan")))
            continue
        outcomes.append((lr, result.best_val_hr))
        log.info("grid: lr=%s best validation HR=%.4f", lr, result.best_val_hr)
    finite = [(lr, hr) for lr, hr in outcomes if np.isfinite(hr)]
    if not finite:
        raise TrainingError("every grid learning rate diverged")
    best_lr, _ = max(finite, key=lambda pair: pair[1])
    return best_lr, outcomes


# --- output writers ---------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _full(value) -> str:
    """Full-precision decimal text; round-trips exactly."""
    return repr(float(value))


def _pct(value) -> str:
    """Metric cell: percent at full precision, empty for absent values."""
    return "" if value is None else repr(float(value) * 100.0)


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write_rounds_csv(path: Path, result: RepetitionResult) -> None:
    rows = []
    for row in result.rounds:
        rows.append(
            [
                str(row["round"]),
                _full(row["loss"]),
                _pct(row["hr"]),
                _pct(row["ndcg"]),
                _pct(row["hr_public"]),
                _pct(row["ndcg_public"]),
                _pct(row["hr_private"]),
                _pct(row["ndcg_private"]),
                _full(row["wall_time"]),
            ]
        )
    _atomic_write(path, _csv_text(ROUNDS_CSV_HEADER.split(","), rows))


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


@dataclass(frozen=True)
class RunSummary:
    """Cross-repetition statistics for one configuration (percent units)."""

    reps: int
    learning_rate: float
    best_round_mean: float
    hr_best_mean: float
    hr_best_std: float
    ndcg_best_mean: float
    ndcg_best_std: float
    hr_final_mean: float
    hr_final_std: float
    ndcg_final_mean: float
    ndcg_final_std: float


def summarize(results: list[RepetitionResult], lr: float) -> RunSummary:
    hr_best = _mean_std([r.best_hr * 100 for r in results])
    ndcg_best = _mean_std([r.best_ndcg * 100 for r in results])
    hr_final = _mean_std([r.final_hr * 100 for r in results])
    ndcg_final = _mean_std([r.final_ndcg * 100 for r in results])
    return RunSummary(
        reps=len(results),
        learning_rate=lr,
        best_round_mean=float(np.mean([r.best_round for r in results])),
        hr_best_mean=hr_best[0],
        hr_best_std=hr_best[1],
        ndcg_best_mean=ndcg_best[0],
        ndcg_best_std=ndcg_best[1],
        hr_final_mean=hr_final[0],
        hr_final_std=hr_final[1],
        ndcg_final_mean=ndcg_final[0],
        ndcg_final_std=ndcg_final[1],
    )


SUMMARY_CSV_HEADER = [
    "reps",
    "learning_rate",
    "best_round_mean",
    "hr_best_mean",
    "hr_best_std",
    "ndcg_best_mean",
    "ndcg_best_std",
    "hr_final_mean",
    "hr_final_std",
    "ndcg_final_mean",
    "ndcg_final_std",
]


def _summary_row(summary: RunSummary) -> list[str]:
    return [
        str(summary.reps),
        _full(summary.learning_rate),
        _full(summary.best_round_mean),
        _full(summary.hr_best_mean),
        _full(summary.hr_best_std),
        _full(summary.ndcg_best_mean),
        _full(summary.ndcg_best_std),
        _full(summary.hr_final_mean),
        _full(summary.hr_final_std),
        _full(summary.ndcg_final_mean),
        _full(summary.ndcg_final_std),
    ]


def _summary_text(summary: RunSummary, k: int) -> str:
    return (
        f"repetitions: {summary.reps}\n"
        f"learning rate: {summary.learning_rate:g}\n"
        f"mean best-validation round: {summary.best_round_mean:g}\n"
        f"test at best-validation round: "
        f"HR@{k} = {summary.hr_best_mean:.2f} +/- {summary.hr_best_std:.2f}, "
        f"NDCG@{k} = {summary.ndcg_best_mean:.2f} +/- {summary.ndcg_best_std:.2f}\n"
        f"test at final round:          "
        f"HR@{k} = {summary.hr_final_mean:.2f} +/- {summary.hr_final_std:.2f}, "
        f"NDCG@{k} = {summary.ndcg_final_mean:.2f} +/- {summary.ndcg_final_std:.2f}\n"
    )


def execute_run(config: ExperimentConfig) -> RunSummary:
    """Grid selection (when asked), all repetitions, and every artifact file
    for one configuration. Returns the cross-repetition summary."""
    config.validate()
    out_dir = Path(config.out) / config.label
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / "resolved_config.txt", config.to_text())

    lr = config.lr
    if lr == "grid":
        lr, grid_rows = select_learning_rate(config)
        rows = [
            [_full(rate), _pct(val_hr), "1" if rate == lr else "0"]
            for rate, val_hr in grid_rows
        ]
        _atomic_write(
            out_dir / "grid_search.csv",
            _csv_text(["learning_rate", "validation_hr_best", "selected"], rows),
        )

    results = _run_repetitions(config, lr, out_dir)
    for result in results:
        rep_dir = out_dir / f"rep{result.rep}"
        rep_dir.mkdir(parents=True, exist_ok=True)
        _write_rounds_csv(rep_dir / "rounds.csv", result)

    summary = summarize(results, lr)
    _atomic_write(
        out_dir / "summary.csv",
        _csv_text(SUMMARY_CSV_HEADER, [_summary_row(summary)]),
    )
    _atomic_write(out_dir / "summary.txt", _summary_text(summary, config.k))
    return summary


def run(config: ExperimentConfig) -> int:
    """CLI verb: one configuration end to end."""
    summary = execute_run(config)
    print(f"wrote {Path(config.out) / config.label}")
    print(_summary_text(summary, config.k), end="")
    return 0


def _cell_metric_cells(summary: RunSummary | None) -> list[str]:
    if summary is None:
        return [""] * 9
    return _summary_row(summary)[1:2] + _summary_row(summary)[3:]


def parse_axis_values(axis: str, text: str) -> list:
    if axis not in _AXIS_FIELDS:
        raise ConfigError(f"unknown sweep axis {axis!r} (choices: {', '.join(SWEEP_AXES)})")
    parser = _AXIS_FIELDS[axis][1]
    values = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            values.append(parser(part))
        except ValueError:
            raise ConfigError(f"bad value {part!r} for axis {axis}") from None
    if not values:
        raise ConfigError(f"no values given for axis {axis}")
    return values


def sweep(config: ExperimentConfig, axes: list[tuple[str, list]]) -> int:
    """CLI verb: cross product over one axis (or two for the blend-ratio x
    sharing-ratio grid); per-cell failures are recorded and the sweep
    continues."""
    config.validate()
    if not 1 <= len(axes) <= 2:
        raise ConfigError(f"sweep takes one or two axes, got {len(axes)}")
    for axis, _values in axes:
        if axis not in _AXIS_FIELDS:
            raise ConfigError(f"unknown sweep axis {axis!r} (choices: {', '.join(SWEEP_AXES)})")
    axis_names = [axis for axis, _ in axes]
    if len(set(axis_names)) != len(axis_names):
        raise ConfigError("sweep axes must be distinct")

    base_dir = Path(config.out) / config.label
    base_dir.mkdir(parents=True, exist_ok=True)

    header = axis_names + ["status", "learning_rate"] + SUMMARY_CSV_HEADER[3:]
    rows = []
    for combo in product(*(values for _axis, values in axes)):
        cell_name = ",".join(f"{a}={v:g}" for a, v in zip(axis_names, combo))
        cell_config = replace(config)
        for (axis, _values), value in zip(axes, combo):
            setattr(cell_config, _AXIS_FIELDS[axis][0], value)
        cell_config.label = f"{config.label}/{cell_name}"
        try:
            summary = execute_run(cell_config)
            status = "ok"
        except Exception as exc:  # record and continue with the next cell
            log.warning("sweep cell %s failed: %s", cell_name, exc)
            summary = None
            status = f"failed: {exc}"
        rows.append(
            [f"{v:g}" for v in combo] + [status] + _cell_metric_cells(summary)
        )
    _atomic_write(base_dir / "sweep.csv", _csv_text(header, rows))
    print(f"wrote {base_dir / 'sweep.csv'}")
    return 0


def ablation_suite(config: ExperimentConfig) -> int:
    """CLI verb: full configuration plus each single-mechanism ablation."""
    config.validate()
    base_dir = Path(config.out) / config.label
    base_dir.mkdir(parents=True, exist_ok=True)

    header = ["variant", "status", "learning_rate"] + SUMMARY_CSV_HEADER[3:]
    rows = []
    for variant, flags in ABLATION_VARIANTS:
        cell_config = replace(config, **flags)
        cell_config.label = f"{config.label}/{variant.replace('/', '').replace(' ', '_')}"
        try:
            summary = execute_run(cell_config)
            status = "ok"
        except Exception as exc:
            log.warning("ablation %s failed: %s", variant, exc)
            summary = None
            status = f"failed: {exc}"
        rows.append([variant, status] + _cell_metric_cells(summary))
    _atomic_write(base_dir / "ablation.csv", _csv_text(header, rows))
    print(f"wrote {base_dir / 'ablation.csv'}")
    return 0


def gen_synthetic(
    num_users: int,
    num_items: int,
    interactions_per_user: int,
    clusters: int,
    seed: int,
    path,
) -> Path:
    """Write a deterministic clustered TSV interaction file.

    Users in the same cluster draw CLUSTER_BIAS of their items from a shared
    pool, so sharing users form co-interaction blocks. Timestamps increase
    per user; tokens are 1-based integers.
    """
    if num_users < 1:
        raise ConfigError(f"num_users must be >= 1, got {num_users}")
    if interactions_per_user < 3:
        raise ConfigError(
            f"interactions_per_user must be >= 3 for leave-one-out, got {interactions_per_user}"
        )
    if num_items < interactions_per_user:
        raise ConfigError(
            f"num_items ({num_items}) must be >= interactions_per_user ({interactions_per_user})"
        )
    if not 1 <= clusters <= num_items:
        raise ConfigError(f"clusters must be in [1, num_items], got {clusters}")

    rng = derive_rng(seed, SYNTH_SALT)
    pools = np.array_split(np.arange(num_items), clusters)
    lines = []
    for user in range(num_users):
        pool = pools[user * clusters // num_users]
        if pool.size == num_items:
            probs = np.full(num_items, 1.0 / num_items)
        else:
            probs = np.full(num_items, (1.0 - CLUSTER_BIAS) / (num_items - pool.size))
            probs[pool] = CLUSTER_BIAS / pool.size
        items = rng.choice(num_items, size=interactions_per_user, replace=False, p=probs)
        ratings = rng.integers(1, 6, size=interactions_per_user)
        for stamp, (item, rating) in enumerate(zip(items, ratings), start=1):
            lines.append(f"{user + 1}\t{item + 1}\t{rating}\t{stamp}")
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def inspect_graph(dataset_path, format_name, public_ratio, seed, out) -> int:
    """CLI verb: build the user graph for a dataset and dump sparse triplets."""
    fmt = FileFormat.from_string(format_name)
    interactions = load_interactions(dataset_path, fmt)
    dataset = leave_one_out_split(interactions, hold_validation=True)
    tiers = assign_privacy(dataset.num_users, public_ratio, seed)
    graph = normalize(build_user_graph(dataset, tiers))

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    adjacency_path = out_dir / "graph_adjacency.tsv"
    normalized_path = out_dir / "graph_normalized.tsv"
    tmp = adjacency_path.with_name(adjacency_path.name + ".tmp")
    dump_triplets(graph, tmp, normalized=False)
    os.replace(tmp, adjacency_path)
    tmp = normalized_path.with_name(normalized_path.name + ".tmp")
    dump_triplets(graph, tmp, normalized=True)
    os.replace(tmp, normalized_path)

    adjacency = graph.adjacency
    diagonal = adjacency.diagonal()
    off_diag_nnz = adjacency.nnz - int(np.count_nonzero(diagonal))
    print(f"users: {dataset.num_users} ({tiers.num_public} public, {tiers.num_private} private)")
    print(f"items: {dataset.num_items}")
    print(f"co-interaction edges: {off_diag_nnz // 2}")
    print(f"self-loops: {int(np.count_nonzero(diagonal))}")
    density = adjacency.nnz / max(dataset.num_users**2, 1)
    print(f"adjacency density: {density:.4f}")
    print(f"wrote {adjacency_path} and {normalized_path}")
    return 0
