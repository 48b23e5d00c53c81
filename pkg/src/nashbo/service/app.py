"""HTTP front of the optimizer: experiments, sweeps, the equilibrium
oracle, and a couple of unit surfaces (pathloss, utilities).

Experiments run synchronously in the request; outputs land on the
server's filesystem and the response carries the file manifest.  The CLI
uses the same handlers in-process by default.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..cellular import NetworkConfig, generate_topology, pathloss_db, sample_channels, utilities_batch
from ..errors import ConfigError, ConstraintViolationError, GridSizeError
from ..games import ActionProfile
from ..harness import oracle_command, parse_config, run_experiment, sweep_players
from . import schemas


def _experiment_config(req: schemas.ExperimentRequest):
    return parse_config(req.model_dump(exclude={"players"}))


def handle_run(req: schemas.ExperimentRequest) -> schemas.ExperimentResponse:
    cfg = _experiment_config(req)
    result = run_experiment(cfg)
    return schemas.ExperimentResponse(
        out_dir=str(result.out_dir),
        trajectory_files=[str(p) for p in result.trajectory_paths],
        aggregate_file=str(result.aggregate_path),
        summary_file=str(result.summary_path),
        epsilon_star_per_rep=result.epsilon_stars,
        final_means=result.final_means,
    )


def handle_sweep(req: schemas.SweepRequest) -> schemas.SweepResponse:
    cfg = _experiment_config(req)
    path = sweep_players(cfg, req.players)
    return schemas.SweepResponse(sweep_file=str(path))


def handle_oracle(req: schemas.OracleRequest) -> schemas.OracleResponse:
    cfg = _experiment_config(req)
    return schemas.OracleResponse(**oracle_command(cfg))


def handle_pathloss(req: schemas.PathlossRequest) -> schemas.PathlossResponse:
    return schemas.PathlossResponse(
        pathloss_db=pathloss_db(req.distance_m, req.los, req.fc_ghz)
    )


def handle_utilities(req: schemas.UtilitiesRequest) -> schemas.UtilitiesResponse:
    net = NetworkConfig.from_json(req.network.model_dump())
    profile = ActionProfile(np.asarray(req.profile, dtype=float))
    if profile.values.shape != (net.num_bs, net.num_ue_per_bs):
        raise ConstraintViolationError(
            f"profile shape {profile.values.shape} does not match the network"
        )
    if (profile.values < 0).any() or (profile.values.sum(axis=1) > net.p_max_watt + 1e-9).any():
        raise ConstraintViolationError("profile violates the per-station power cap")
    topo = generate_topology(net)
    channels = sample_channels(net, topo)
    values = utilities_batch(profile.values[None], channels, net)[0]
    return schemas.UtilitiesResponse(utilities=[float(v) for v in values])


def create_app() -> FastAPI:
    app = FastAPI(title="nashbo", version=__version__)

    @app.exception_handler(ConfigError)
    async def _config_error(request, exc):
        raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/experiments", response_model=schemas.ExperimentResponse)
    def experiments(req: schemas.ExperimentRequest):
        try:
            return handle_run(req)
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        try:
            return handle_sweep(req)
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/oracle", response_model=schemas.OracleResponse)
    def oracle(req: schemas.OracleRequest):
        try:
            return handle_oracle(req)
        except GridSizeError as exc:
            raise HTTPException(status_code=413, detail=str(exc))
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/pathloss", response_model=schemas.PathlossResponse)
    def pathloss(req: schemas.PathlossRequest):
        try:
            return handle_pathloss(req)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/power/utilities", response_model=schemas.UtilitiesResponse)
    def utilities(req: schemas.UtilitiesRequest):
        try:
            return handle_utilities(req)
        except (ConfigError, ConstraintViolationError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    return app


app = create_app()
