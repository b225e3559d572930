import sys
import os
os.environ["ENV"] = "test"
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import inspect

from fastapi.testclient import TestClient
from main import app
from routers import experiments, matrices

client = TestClient(app)

CONFIG = {
    "name": "api",
    "scenario": {"K": 1, "sigma_x_sq": 4.0, "support": [2], "change_point": 10},
    "matrix": {"kind": "unitary", "M": 4, "seed": 1},
    "detectors": [{"variant": "aggregate"}],
    "thresholds": [6.0],
    "trials": 20,
    "horizon": 50000,
}


def test_health():
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy"}


def test_build_matrix():
    response = client.post("/matrices/build", json={"kind": "mub", "M": 5, "N": 12})
    assert response.status_code == 200
    body = response.json()
    assert body["success"] is True
    assert body["data"]["M"] == 5
    assert body["data"]["N"] == 12
    assert abs(body["data"]["coherence"] - 5 ** -0.5) < 1e-9


def test_build_matrix_validation():
    response = client.post("/matrices/build", json={"kind": "gaussian"})
    assert response.status_code == 422


def test_build_matrix_unsupported_dimension():
    response = client.post("/matrices/build", json={"kind": "mub", "M": 6})
    assert response.status_code == 409


def test_detect():
    response = client.post("/experiments/detect", json={"config": CONFIG, "record_trace": True})
    assert response.status_code == 200
    report = response.json()["data"]
    assert report["censored"] is False
    assert report["true_support"] == [2]
    assert len(report["trace"]) == report["stopping_time"] + 1


def test_detect_bad_index():
    response = client.post("/experiments/detect", json={"config": CONFIG, "detector_index": 3})
    assert response.status_code == 422


def test_sweep():
    response = client.post("/experiments/sweep", json=CONFIG)
    assert response.status_code == 200
    curves = response.json()["data"]
    assert len(curves) == 1
    assert curves[0]["detector"] == "aggregate"
    assert curves[0]["points"][0]["threshold"] == 6.0


def test_handlers_are_async():
    for handler in (matrices.build_matrix, experiments.run_detection, experiments.run_sweep):
        assert inspect.iscoroutinefunction(handler)
