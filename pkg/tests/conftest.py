from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from v2vtraj.neural import TrainConfig
from v2vtraj.synthetic import generate_corpus
from v2vtraj.trajectory_data import COLUMNS, EnuTrack, Trajectory, to_rotated_enu


def make_traj(n=30, rate_hz=10.0, scenario_id="s", **overrides):
    """Straight northbound drive at 20 m/s from (42.28, -83.74)."""
    t = np.arange(n) / rate_hz
    cols = {
        "t": t,
        "lat": 42.28 + np.degrees(20.0 * t / 6378137.0),
        "lon": np.full(n, -83.74),
        "elev": np.full(n, 250.0),
        "speed": np.full(n, 20.0),
        "heading": np.zeros(n),
        "steering_angle": np.zeros(n),
        "accel_lon": np.zeros(n),
        "accel_lat": np.zeros(n),
        "accel_vert": np.zeros(n),
        "yaw_rate": np.zeros(n),
        "veh_length": np.full(n, 5.0),
        "veh_width": np.full(n, 1.8),
    }
    for k, v in overrides.items():
        cols[k] = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    return Trajectory.from_array(scenario_id, rate_hz, np.column_stack([cols[c] for c in COLUMNS]))


def straight_track(n=40, v=20.0, scenario_id="straight", rate_hz=10.0):
    """Noiseless constant-velocity ENU track along +x."""
    t = np.arange(n) / rate_hz
    z = np.zeros(n)
    return EnuTrack(scenario_id, rate_hz, t, v * t, z.copy(), np.full(n, v), z.copy(), z.copy(), z.copy(), z.copy())


@pytest.fixture(scope="session")
def small_corpus():
    trajs, _ = generate_corpus(20, 3)
    return [to_rotated_enu(tr) for tr in trajs]


@pytest.fixture(scope="session")
def small_bundle(small_corpus):
    """A briefly trained bundle: good enough to exercise plumbing, not accuracy."""
    from v2vtraj.predictors import train_bundle

    return train_bundle(small_corpus, cfg=TrainConfig(max_epochs=30, seed=1))


@pytest.fixture(scope="session")
def small_test_tracks(small_corpus, small_bundle):
    by_id = {tr.scenario_id: tr for tr in small_corpus}
    return [by_id[i] for i in small_bundle.split["test"]]


FULL_CORPUS_SEED = 7


def run_full_pipeline(root):
    """Generate, train, evaluate and run the robustness study through the CLI.

    Paths are relative to ``root`` so that two runs in different directories
    write identical manifests. Returns wall-clock seconds per command.
    """
    import os
    import time

    from v2vtraj.cli import main

    steps = {
        "generate": ["generate", "--n", "90", "--seed", str(FULL_CORPUS_SEED), "--out", "corpus"],
        "train": ["train", "--data", "corpus", "--seed", "0", "--out", "model"],
        "evaluate": ["evaluate", "--data", "corpus", "--model", "model/model.json", "--out", "eval"],
        "robustness": ["robustness", "--data", "corpus", "--model", "model/model.json", "--drop-rate", "0.4",
                       "--out", "rob"],
    }
    timings = {}
    cwd = os.getcwd()
    os.chdir(root)
    try:
        for name, argv in steps.items():
            start = time.perf_counter()
            code = main(argv)
            timings[name] = time.perf_counter() - start
            if code != 0:
                raise RuntimeError(f"{name} exited with {code}")
    finally:
        os.chdir(cwd)
    return timings


@pytest.fixture(scope="session")
def full_run(tmp_path_factory):
    """The 90-scenario corpus pushed through the whole pipeline once (a few minutes)."""
    from v2vtraj.cli import _load_tracks
    from v2vtraj.predictors import load_bundle

    root = tmp_path_factory.mktemp("full")
    timings = run_full_pipeline(root)
    bundle = load_bundle(root / "model" / "model.json")
    tracks = {t.scenario_id: t for t in _load_tracks(root / "corpus", 10.0)}
    return SimpleNamespace(root=root, timings=timings, bundle=bundle,
                           test_tracks=[tracks[i] for i in bundle.split["test"]])


ACCEPTANCE = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    """Store and print one verdict line for an acceptance criterion."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
