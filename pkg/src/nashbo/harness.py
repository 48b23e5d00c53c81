"""Experiment orchestration: configs, per-rep seeding, metric rows, CSV
persistence, the player sweep, and the exhaustive-oracle command.

Reproducibility contract: rep r derives every stream (channels, noise,
feature map / policy) from base_seed + r on named substreams, and all
CSV/JSON outputs are byte-identical across re-runs of the same config.
Trajectory rows stream to disk as they are produced.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict
from importlib import resources
from pathlib import Path

import numpy as np

from .acquisition import AcquisitionConfig, StepTrace
from .baselines import BaselineConfig, make_session
from .cellular import NetworkConfig, power_game_oracle
from .errors import ConfigError
from .games import (
    EquilibriumReport,
    GameSpec,
    UtilityOracle,
    epsilon_star,
    guard_grid_size,
    load_normal_form,
    planted_pne_game,
)

TRAJECTORY_COLUMNS = (
    "rep",
    "seed",
    "iter",
    "profile_id",
    # y_1..y_N inserted here
    "sum_se",
    "max_true_regret",
    "regret_gap",
    "interval_flag",
    "policy",
    "ms",
)

AGGREGATE_METRICS = ("sum_se", "max_true_regret", "regret_gap")

POLICY_KINDS = ("ppr_ucb", "pe", "ucb", "random")


@dataclass(frozen=True)
class GridConfig:
    points_per_dim: int = 3
    max_profiles: int = 4096


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "ppr_ucb"
    delta: float = 0.05
    beta: float = 4.0
    mc_samples: int = 64
    eps_relax: float | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"policy kind must be one of {POLICY_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class SurrogateConfig:
    lengthscale: float = 0.85
    noise_var: float = 0.67
    rff_dim: int = 512
    prior_scale: float = 1.0


@dataclass(frozen=True)
class GameConfig:
    kind: str = "power"  # power | normal_form | synthetic
    noise_std: float | None = None  # observation noise; kind-specific default
    network: NetworkConfig = field(default_factory=NetworkConfig)
    document: dict | None = None  # normal_form payoff document
    path: str | None = None  # or a path to one
    num_actions: int = 5  # synthetic
    margin: float = 1.0
    low: float = 0.0
    high: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("power", "normal_form", "synthetic"):
            raise ConfigError(f"unknown game kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    game: GameConfig = field(default_factory=GameConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    iterations: int = 200
    reps: int = 100
    base_seed: int = 0
    out_dir: str = "runs/experiment"
    measure_time: bool = False

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")


def parse_config(doc: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a JSON document."""
    doc = dict(doc)
    game_doc = dict(doc.get("game", {}))
    network_doc = game_doc.pop("network", None)
    network = NetworkConfig.from_json(network_doc) if network_doc else NetworkConfig()
    game = GameConfig(network=network, **game_doc)
    policy = PolicyConfig(**doc.get("policy", {}))
    surrogate = SurrogateConfig(**doc.get("surrogate", {}))
    grid = GridConfig(**doc.get("grid", {}))
    keys = {k: doc[k] for k in ("iterations", "reps", "base_seed", "out_dir", "measure_time") if k in doc}
    return ExperimentConfig(game=game, policy=policy, surrogate=surrogate, grid=grid, **keys)


def config_to_json(cfg: ExperimentConfig) -> dict:
    doc = {
        "game": {k: v for k, v in asdict(cfg.game).items() if k != "network"},
        "policy": asdict(cfg.policy),
        "surrogate": asdict(cfg.surrogate),
        "grid": asdict(cfg.grid),
        "iterations": cfg.iterations,
        "reps": cfg.reps,
        "base_seed": cfg.base_seed,
        "out_dir": cfg.out_dir,
        "measure_time": cfg.measure_time,
    }
    if cfg.game.kind == "power":
        doc["game"]["network"] = cfg.game.network.to_json()
    return doc


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(json.loads(Path(path).read_text()))


def default_power_config() -> dict:
    """The flagship protocol constants as shipped in the package data."""
    with resources.files("nashbo.data").joinpath("default_power.json").open() as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# Per-rep game construction and seeding


def _rep_streams(base_seed: int, rep: int) -> dict[str, np.random.SeedSequence]:
    children = np.random.SeedSequence(base_seed + rep).spawn(4)
    return {"game": children[0], "noise": children[1], "policy": children[2], "spare": children[3]}


def build_game(
    cfg: ExperimentConfig, rep: int
) -> tuple[UtilityOracle, GameSpec, np.random.SeedSequence]:
    """Instantiate the rep's game; channels and synthetic payoffs are
    re-drawn per rep, explicit normal-form tables stay fixed."""
    streams = _rep_streams(cfg.base_seed, rep)
    game_seed = int(streams["game"].generate_state(1, np.uint32)[0])
    noise_rng = np.random.default_rng(streams["noise"])
    g = cfg.game
    if g.kind == "power":
        net = NetworkConfig.from_json(
            {**g.network.to_json(), "topology_seed": game_seed, "channel_seed": game_seed + 1}
        )
        noise_std = g.noise_std if g.noise_std is not None else float(np.sqrt(0.67))
        oracle, spec = power_game_oracle(
            net,
            points_per_dim=cfg.grid.points_per_dim,
            max_profiles=cfg.grid.max_profiles,
            noise_var=noise_std**2,
            noise_rng=noise_rng,
        )
    elif g.kind == "normal_form":
        source = g.document if g.document is not None else g.path
        if source is None:
            raise ConfigError("normal_form game needs a document or a path")
        noise_std = g.noise_std if g.noise_std is not None else 0.0
        oracle, spec = load_normal_form(source, noise_std=noise_std)
        oracle.rng_stream = noise_rng
    else:  # synthetic
        noise_std = g.noise_std if g.noise_std is not None else 0.05
        oracle, spec, _ = planted_pne_game(
            num_actions=g.num_actions,
            seed=game_seed,
            low=g.low,
            high=g.high,
            margin=g.margin,
            noise_std=noise_std,
        )
        oracle.rng_stream = noise_rng
    return oracle, spec, streams["policy"]


# ---------------------------------------------------------------------------
# CSV plumbing


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunRecord:
    """One trajectory row; mirrors the CSV schema."""

    rep: int
    seed: int
    iteration: int
    profile_id: int
    observations: list[float] | None
    sum_se: float
    max_true_regret: float
    regret_gap: float
    interval_flag: str
    policy: str
    ms: int

    def row(self, num_players: int) -> list[str]:
        ys = [""] * num_players if self.observations is None else [repr(float(v)) for v in self.observations]
        return (
            [str(self.rep), str(self.seed), str(self.iteration), str(self.profile_id)]
            + ys
            + [
                repr(float(self.sum_se)),
                repr(float(self.max_true_regret)),
                repr(float(self.regret_gap)),
                self.interval_flag,
                self.policy,
                str(self.ms),
            ]
        )


def trajectory_header(num_players: int) -> list[str]:
    cols = list(TRAJECTORY_COLUMNS)
    y_cols = [f"y_{n + 1}" for n in range(num_players)]
    return cols[:4] + y_cols + cols[4:]


@dataclass
class ExperimentResult:
    out_dir: Path
    trajectory_paths: list[Path]
    aggregate_path: Path
    summary_path: Path
    epsilon_stars: list[float]
    final_means: dict[str, float]


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentResult:
    """Run reps x iterations of the configured policy, streaming one
    trajectory CSV per rep and writing the cross-rep aggregate."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc

    (out / "config.json").write_text(
        json.dumps(config_to_json(cfg), indent=2, sort_keys=True) + "\n"
    )

    trajectory_paths: list[Path] = []
    eps_stars: list[float] = []
    per_rep_metrics: list[dict[str, list[float]]] = []
    num_players = None

    for rep in range(cfg.reps):
        seed = cfg.base_seed + rep
        oracle, spec, policy_stream = build_game(cfg, rep)
        num_players = spec.num_players
        report = epsilon_star(oracle, spec)
        eps_stars.append(report.epsilon_star)
        true_utilities = oracle.evaluate_grid(spec)

        acq = AcquisitionConfig(
            iterations=cfg.iterations,
            delta=cfg.policy.delta,
            lengthscale=cfg.surrogate.lengthscale,
            noise_var=cfg.surrogate.noise_var,
            rff_dim=cfg.surrogate.rff_dim,
            prior_scale=cfg.surrogate.prior_scale,
            seed=seed,
        )
        baseline = BaselineConfig(
            kind=cfg.policy.kind if cfg.policy.kind in ("random", "pe", "ucb") else "random",
            seed=seed,
            mc_samples=cfg.policy.mc_samples,
            beta=cfg.policy.beta,
            eps_relax=cfg.policy.eps_relax,
        )
        session = make_session(
            cfg.policy.kind, oracle, spec, acq,
            baseline=baseline, rng=np.random.default_rng(policy_stream),
        )

        path = out / f"trajectory_rep{rep:03d}.csv"
        trajectory_paths.append(path)
        metrics: dict[str, list[float]] = {m: [] for m in AGGREGATE_METRICS}

        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(trajectory_header(num_players))

            def emit(record: RunRecord):
                writer.writerow(record.row(num_players))
                f.flush()
                metrics["sum_se"].append(record.sum_se)
                metrics["max_true_regret"].append(record.max_true_regret)
                metrics["regret_gap"].append(record.regret_gap)

            init_idx = session.initial_profile_idx
            emit(
                RunRecord(
                    rep=rep,
                    seed=seed,
                    iteration=0,
                    profile_id=init_idx,
                    observations=None,
                    sum_se=float(true_utilities[init_idx].sum()),
                    max_true_regret=float(report.per_profile_max_regret[init_idx]),
                    regret_gap=float(report.per_profile_max_regret[init_idx] - report.epsilon_star),
                    interval_flag="init",
                    policy=cfg.policy.kind,
                    ms=0,
                )
            )
            for _ in range(cfg.iterations):
                started = time.perf_counter()
                trace: StepTrace = session.step()
                elapsed_ms = int(round((time.perf_counter() - started) * 1e3))
                rep_idx = trace.reported_idx
                emit(
                    RunRecord(
                        rep=rep,
                        seed=seed,
                        iteration=trace.iteration + 1,
                        profile_id=trace.chosen_idx,
                        observations=[float(v) for v in trace.observations],
                        sum_se=float(true_utilities[trace.chosen_idx].sum()),
                        max_true_regret=float(report.per_profile_max_regret[rep_idx]),
                        regret_gap=float(
                            report.per_profile_max_regret[rep_idx] - report.epsilon_star
                        ),
                        interval_flag=trace.interval_flag,
                        policy=cfg.policy.kind,
                        ms=elapsed_ms if cfg.measure_time else 0,
                    )
                )
        per_rep_metrics.append(metrics)

    aggregate_path = out / "aggregate.csv"
    agg_rows, final_means = _aggregate_rows(cfg, per_rep_metrics)
    header = ["iter", "policy"]
    for m in AGGREGATE_METRICS:
        header += [f"{m}_mean", f"{m}_p5", f"{m}_p95"]
    _write_csv(aggregate_path, header, agg_rows)

    summary_path = out / "summary.json"
    summary = {
        "policy": cfg.policy.kind,
        "iterations": cfg.iterations,
        "reps": cfg.reps,
        "base_seed": cfg.base_seed,
        "epsilon_star_per_rep": [float(e) for e in eps_stars],
        "final_means": final_means,
    }
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    return ExperimentResult(
        out_dir=out,
        trajectory_paths=trajectory_paths,
        aggregate_path=aggregate_path,
        summary_path=summary_path,
        epsilon_stars=eps_stars,
        final_means=final_means,
    )


def _aggregate_rows(cfg, per_rep_metrics):
    rows = []
    final_means = {}
    for it in range(cfg.iterations + 1):
        row = [str(it), cfg.policy.kind]
        for m in AGGREGATE_METRICS:
            values = np.array([rep[m][it] for rep in per_rep_metrics])
            mean = float(np.mean(values))
            row += [
                repr(mean),
                repr(float(np.percentile(values, 5))),
                repr(float(np.percentile(values, 95))),
            ]
            if it == cfg.iterations:
                final_means[m] = mean
        rows.append(row)
    return rows, final_means


def sweep_players(cfg: ExperimentConfig, values: list[int], out_dir: str | Path | None = None) -> Path:
    """Run the experiment per player count and collect the final-iteration
    aggregate row for each; power games only."""
    if not values:
        raise ValueError("player sweep needs at least one value")
    if cfg.game.kind != "power":
        raise ConfigError("player sweep applies to the power game")
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in values:
        net = NetworkConfig.from_json({**cfg.game.network.to_json(), "num_bs": int(n)})
        sub = ExperimentConfig(
            game=GameConfig(
                kind="power",
                noise_std=cfg.game.noise_std,
                network=net,
            ),
            policy=cfg.policy,
            surrogate=cfg.surrogate,
            grid=cfg.grid,
            iterations=cfg.iterations,
            reps=cfg.reps,
            base_seed=cfg.base_seed,
            out_dir=str(out / f"players_{n}"),
            measure_time=cfg.measure_time,
        )
        result = run_experiment(sub)
        row = [str(int(n)), cfg.policy.kind, str(cfg.iterations)]
        for m in AGGREGATE_METRICS:
            row.append(repr(float(result.final_means[m])))
        rows.append(row)
    header = ["n_players", "policy", "final_iter"] + [f"{m}_mean" for m in AGGREGATE_METRICS]
    path = out / "sweep.csv"
    _write_csv(path, header, rows)
    return path


def oracle_command(cfg: ExperimentConfig) -> dict:
    """Exhaustive equilibrium search on the rep-0 game; refuses oversized
    grids with a size report."""
    oracle, spec, _ = build_game(cfg, rep=0)
    guard_grid_size(spec)
    report: EquilibriumReport = epsilon_star(oracle, spec)
    doc = report.to_dict(spec)
    doc["grid_size"] = spec.grid_size
    doc["num_players"] = spec.num_players
    return doc


def export_plot_data(run_dirs: list[str | Path], out_dir: str | Path) -> dict[str, Path]:
    """Merge run aggregates (and any sweep files) into plot-ready CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    produced: dict[str, Path] = {}
    curve_rows: list[list[str]] = []
    header: list[str] | None = None
    sweep_rows: list[list[str]] = []
    sweep_header: list[str] | None = None
    for run in run_dirs:
        agg = Path(run) / "aggregate.csv"
        if agg.exists():
            with open(agg, newline="", encoding="utf-8") as f:
                reader = csv.reader(f)
                file_header = next(reader)
                if header is None:
                    header = file_header
                elif header != file_header:
                    raise ConfigError(f"aggregate schema mismatch in {agg}")
                curve_rows.extend(reader)
        sw = Path(run) / "sweep.csv"
        if sw.exists():
            with open(sw, newline="", encoding="utf-8") as f:
                reader = csv.reader(f)
                file_header = next(reader)
                if sweep_header is None:
                    sweep_header = file_header
                elif sweep_header != file_header:
                    raise ConfigError(f"sweep schema mismatch in {sw}")
                sweep_rows.extend(reader)
    if header is not None:
        path = out / "curves.csv"
        _write_csv(path, header, curve_rows)
        produced["curves"] = path
    if sweep_header is not None:
        path = out / "sweep.csv"
        _write_csv(path, sweep_header, sweep_rows)
        produced["sweep"] = path
    return produced
