import json

import pytest
from fastapi.testclient import TestClient

from nashbo.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def desk_request(tmp_path, **overrides):
    doc = {
        "game": {
            "kind": "power",
            "noise_std": 1e-3,
            "network": {"num_bs": 3, "num_ue_per_bs": 2, "tx_antennas": 4, "rx_antennas": 2},
        },
        "grid": {"points_per_dim": 3, "max_profiles": 50},
        "policy": {"kind": "ppr_ucb"},
        "surrogate": {"noise_var": 1e-6, "rff_dim": 128},
        "iterations": 2,
        "reps": 1,
        "base_seed": 0,
        "out_dir": str(tmp_path / "svc_run"),
    }
    doc.update(overrides)
    return doc


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_pathloss_endpoint(client):
    r = client.post("/pathloss", json={"distance_m": 1.0, "los": True, "fc_ghz": 1.0})
    assert r.status_code == 200
    assert r.json()["pathloss_db"] == pytest.approx(32.4)


def test_pathloss_rejects_bad_distance(client):
    r = client.post("/pathloss", json={"distance_m": -3.0})
    assert r.status_code == 422


def test_experiment_endpoint_writes_files(client, tmp_path):
    r = client.post("/experiments", json=desk_request(tmp_path))
    assert r.status_code == 200
    body = r.json()
    assert len(body["trajectory_files"]) == 1
    assert body["epsilon_star_per_rep"] == [0.0]
    agg = json.loads(json.dumps(body))["aggregate_file"]
    assert agg.endswith("aggregate.csv")
    with open(body["trajectory_files"][0]) as f:
        assert f.readline().startswith("rep,seed,iter,profile_id,y_1")


def test_oracle_endpoint(client, tmp_path):
    req = desk_request(tmp_path)
    req["game"] = {
        "kind": "normal_form",
        "document": {
            "players": 2,
            "actions_per_player": [2, 2],
            "payoffs": [[[3, 0], [5, 1]], [[3, 5], [0, 1]]],
        },
    }
    r = client.post("/oracle", json=req)
    assert r.status_code == 200
    body = r.json()
    assert body["epsilon_star"] == 0.0
    assert body["grid_size"] == 4
    assert len(body["per_profile_max_regret"]) == 4


def test_oracle_rejects_oversized_grid(client, tmp_path):
    import nashbo.games as games

    original = games.MAX_EXHAUSTIVE_PROFILES
    games.MAX_EXHAUSTIVE_PROFILES = 3
    try:
        r = client.post("/oracle", json=desk_request(tmp_path))
        assert r.status_code == 413
        assert "profiles" in r.json()["detail"]
    finally:
        games.MAX_EXHAUSTIVE_PROFILES = original


def test_utilities_endpoint(client):
    r = client.post(
        "/power/utilities",
        json={
            "network": {"num_bs": 2, "num_ue_per_bs": 2, "tx_antennas": 4, "rx_antennas": 2},
            "profile": [[1.0, 1.0], [1.0, 1.0]],
        },
    )
    assert r.status_code == 200
    assert len(r.json()["utilities"]) == 2


def test_utilities_rejects_bad_profile(client):
    r = client.post(
        "/power/utilities",
        json={
            "network": {"num_bs": 2, "num_ue_per_bs": 2, "tx_antennas": 4, "rx_antennas": 2},
            "profile": [[99.0, 99.0], [1.0, 1.0]],
        },
    )
    assert r.status_code == 422


def test_sweep_endpoint(client, tmp_path):
    req = desk_request(tmp_path, out_dir=str(tmp_path / "svc_sweep"))
    req["players"] = [2]
    r = client.post("/sweep", json=req)
    assert r.status_code == 200
    assert r.json()["sweep_file"].endswith("sweep.csv")
