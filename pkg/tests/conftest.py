import json

import pytest

from skillfeat.cli import main

SMALL_CONFIG = {
    "generator": {"n_demos": 6, "dt": 0.01},
    "suite": {"n_tasks": 3},
    "ssvs": {"burn_in": 20, "samples": 100},
    "pointclouds": {"n_scenes": 1},
}


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """A generated suite, point sets, a meta prior and a model for CLI tests."""
    root = tmp_path_factory.mktemp("ws")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(SMALL_CONFIG))
    assert run_cli("gen", "--config", cfg, "--seed", 1, "--out", root / "data") == 0
    assert run_cli("gen", "--kind", "pointclouds", "--config", cfg, "--seed", 1,
                   "--out", root / "pc") == 0
    data = root / "data"
    assert run_cli("train-meta", "--seed", 3, data / "task1.dataset.json",
                   data / "task2.dataset.json", "--out", root / "mp.json") == 0
    assert run_cli("learn", "--config", cfg, "--seed", 4, data / "task0.dataset.json",
                   "--prior", "meta", "--meta-prior", root / "mp.json",
                   "--out", root / "model.json") == 0
    return root
