"""Wire schemas for the optimization service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class NetworkModel(BaseModel):
    num_bs: int = 7
    num_ue_per_bs: int = 10
    tx_antennas: int = 16
    rx_antennas: int = 4
    cell_radius_m: float = 200.0
    ue_distance_interval_m: tuple[float, float] = (20.0, 200.0)
    p_max_watt: float = 6.5
    noise_power_dbm: float = -86.46
    discount: float = 0.1
    carrier_ghz: float = 3.5
    topology_seed: int = 0
    channel_seed: int = 0


class GameModel(BaseModel):
    kind: Literal["power", "normal_form", "synthetic"] = "power"
    noise_std: Optional[float] = None
    network: NetworkModel = Field(default_factory=NetworkModel)
    document: Optional[dict] = None
    path: Optional[str] = None
    num_actions: int = 5
    margin: float = 1.0
    low: float = 0.0
    high: float = 3.0
    seed: int = 0


class PolicyModel(BaseModel):
    kind: Literal["ppr_ucb", "pe", "ucb", "random"] = "ppr_ucb"
    delta: float = 0.05
    beta: float = 4.0
    mc_samples: int = 64
    eps_relax: Optional[float] = None


class SurrogateModel(BaseModel):
    lengthscale: float = 0.85
    noise_var: float = 0.67
    rff_dim: int = 512
    prior_scale: float = 1.0


class GridModel(BaseModel):
    points_per_dim: int = 3
    max_profiles: int = 4096


class ExperimentRequest(BaseModel):
    game: GameModel = Field(default_factory=GameModel)
    policy: PolicyModel = Field(default_factory=PolicyModel)
    surrogate: SurrogateModel = Field(default_factory=SurrogateModel)
    grid: GridModel = Field(default_factory=GridModel)
    iterations: int = 200
    reps: int = 100
    base_seed: int = 0
    out_dir: str = "runs/experiment"
    measure_time: bool = False


class ExperimentResponse(BaseModel):
    out_dir: str
    trajectory_files: list[str]
    aggregate_file: str
    summary_file: str
    epsilon_star_per_rep: list[float]
    final_means: dict[str, float]


class SweepRequest(ExperimentRequest):
    players: list[int]


class SweepResponse(BaseModel):
    sweep_file: str


class OracleRequest(ExperimentRequest):
    pass


class MinimizerModel(BaseModel):
    grid_index: int
    profile: list[list[float]]


class OracleResponse(BaseModel):
    epsilon_star: float
    grid_size: int
    num_players: int
    epsilon_pne_profiles: list[MinimizerModel]
    per_profile_max_regret: list[float]


class PathlossRequest(BaseModel):
    distance_m: float
    los: bool = True
    fc_ghz: float = 3.5


class PathlossResponse(BaseModel):
    pathloss_db: float


class UtilitiesRequest(BaseModel):
    network: NetworkModel = Field(default_factory=NetworkModel)
    profile: list[list[float]]


class UtilitiesResponse(BaseModel):
    utilities: list[float]


class HealthResponse(BaseModel):
    status: str
    version: str
