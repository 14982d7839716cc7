"""Per-step error statistics for the neural pipeline against the kinematic baseline.

Every window anchored at sample ``k`` uses samples ``0..k`` as history and
samples ``k+1..k+S`` as truth. Under a lossy channel only anchors whose
packet arrived are scored (a forecast is issued on reception), and the
history before the anchor is zero-order held. Errors are absolute per axis
in the scenario's rotated ENU frame.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelConfig, drop_mask, hold_track
from .errors import EmptyInput, IoFailure, NoValidWindows
from .predictors import (
    PARAM_CHANNELS,
    PredictionHorizon,
    PredictorBundle,
    baseline_state,
    kinematics_predict,
    predict_parameters,
    predict_trajectory,
    smoothed_diffs,
)
from .trajectory_data import EnuTrack

PREDICTORS = ("narx_long", "rnn_lat", "kin_long", "kin_lat")
AXIS = {"narx_long": "long", "rnn_lat": "lat", "kin_long": "long", "kin_lat": "lat"}
SUMMARY_COLUMNS = ("predictor", "axis", "step", "p90", "mean", "n")
ROBUSTNESS_CHANNELS = ("steering_angle", "speed", "heading")


def percentile(samples, q: float = 0.9) -> float:
    """Nearest-rank percentile: the ``ceil(q n)``-th smallest sample."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise EmptyInput("percentile of an empty sample")
    if not 0 < q <= 1:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    rank = max(1, math.ceil(q * x.size - 1e-12))
    return float(x[rank - 1])


@dataclass
class EvalReport:
    steps: int
    errors: dict = field(default_factory=dict)  # predictor -> (n_windows, steps)
    windows: list = field(default_factory=list)  # (scenario_id, anchor)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for p in PREDICTORS:
            self.errors.setdefault(p, np.empty((0, self.steps)))

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    def p90(self, predictor: str) -> np.ndarray:
        e = self.errors[predictor]
        return np.array([percentile(e[:, s], 0.9) for s in range(self.steps)])

    def mean(self, predictor: str) -> np.ndarray:
        return self.errors[predictor].mean(axis=0)

    def summary_rows(self) -> list:
        if not self.n_windows:
            return []
        rows = []
        for p in PREDICTORS:
            p90, mean = self.p90(p), self.mean(p)
            for s in range(self.steps):
                rows.append({"predictor": p, "axis": AXIS[p], "step": s + 1,
                             "p90": float(p90[s]), "mean": float(mean[s]), "n": self.n_windows})
        return rows

    def per_scenario_means(self) -> list:
        ids = np.array([w[0] for w in self.windows])
        rows = []
        for sid in dict.fromkeys(ids.tolist()):
            sel = ids == sid
            for p in PREDICTORS:
                m = self.errors[p][sel].mean(axis=0)
                rows.extend({"scenario_id": sid, "predictor": p, "step": s + 1, "mean": float(m[s])}
                            for s in range(self.steps))
        return rows


def _windows(n: int, n_delays: int, steps: int):
    return range(n_delays, n - steps)


def _truth(track: EnuTrack, k: int, steps: int) -> np.ndarray:
    return np.column_stack([track.x[k + 1:k + 1 + steps], track.y[k + 1:k + 1 + steps]])


def _score(bundle, history: EnuTrack, truth: np.ndarray, horizon: PredictionHorizon, kin_length=None):
    nn = np.abs(predict_trajectory(bundle, history) - truth)
    state = baseline_state(history)
    if kin_length is not None:
        state = type(state)(state.x, state.y, state.theta, state.v, state.phi, kin_length)
    kin = np.abs(kinematics_predict(state, horizon) - truth)
    return {"narx_long": nn[:, 0], "rnn_lat": nn[:, 1], "kin_long": kin[:, 0], "kin_lat": kin[:, 1]}


def scenario_mask(track: EnuTrack, cfg: ChannelConfig, index: int) -> np.ndarray:
    """Drop mask of test scenario ``index``; its stream is derived from ``(seed, index)``."""
    seed = int(np.random.SeedSequence([cfg.seed, index]).generate_state(1)[0])
    return drop_mask(len(track), ChannelConfig(cfg.drop_rate, seed))


def sliding_eval(bundle: PredictorBundle, tracks, horizon: PredictionHorizon | None = None,
                 channel: ChannelConfig | None = None, kin_length: float | None = None,
                 metadata: dict | None = None) -> EvalReport:
    """Score the pipeline and the baseline on every valid window of every track."""
    horizon = horizon or bundle.horizon
    channel = channel or ChannelConfig(0.0, 0)
    d, steps = bundle.n_delays, horizon.steps
    errors = {p: [] for p in PREDICTORS}
    windows = []
    for i, track in enumerate(tracks):
        mask = scenario_mask(track, channel, i)
        observed = hold_track(track, mask) if mask.any() else track
        for k in _windows(len(track), d, steps):
            if mask[k]:
                continue
            scores = _score(bundle, observed.head(k + 1), _truth(track, k, steps), horizon, kin_length)
            for p in PREDICTORS:
                errors[p].append(scores[p])
            windows.append((track.scenario_id, k))
    if not windows:
        raise NoValidWindows(f"no scenario is long enough for {d} history + {steps} future samples")
    meta = {"drop_rate": channel.drop_rate, "channel_seed": channel.seed, "n_scenarios": len(tracks)}
    meta.update(metadata or {})
    return EvalReport(steps, {p: np.array(v) for p, v in errors.items()}, windows, meta)


@dataclass
class RobustnessResult:
    param_rows: list
    p90_rows: list
    example: dict = field(default_factory=dict)

    def ratio(self, drop_rate: float, predictor: str) -> np.ndarray:
        return np.array([r["ratio"] for r in self.p90_rows
                         if r["drop_rate"] == drop_rate and r["predictor"] == predictor])


def robustness_eval(bundle: PredictorBundle, tracks, drop_rates=(0.0, 0.4), seeds=(0,)) -> RobustnessResult:
    """Paired ideal-vs-lossy comparison of parameter forecasts and trajectories.

    For each rate and channel seed, only anchors received on the lossy link
    are used, and the ideal run is scored on exactly those anchors.
    Parameter errors are on predicted differences in channel units.
    """
    for r in drop_rates:
        if not 0 <= r < 1:
            raise ValueError(f"drop rates must lie in [0, 1), got {r}")
    tracks = list(tracks)
    d, steps = bundle.n_delays, bundle.horizon.steps
    cache = {}

    def run(history: EnuTrack):
        fc = predict_parameters(bundle, history)
        traj = predict_trajectory(bundle, history, fc)
        state = baseline_state(history)
        kin = kinematics_predict(state, bundle.horizon)
        return fc, traj, kin

    truth_diffs = [{c: smoothed_diffs(tr, c, bundle.normalizers[c].deadband) for c in PARAM_CHANNELS}
                   for tr in tracks]
    param_rows, p90_rows, example = [], [], {}
    for rate in drop_rates:
        sq_ideal = {c: [] for c in PARAM_CHANNELS}
        sq_truth = {c: [] for c in PARAM_CHANNELS}
        sq_truth_ideal = {c: [] for c in PARAM_CHANNELS}
        err_ideal = {p: [] for p in PREDICTORS}
        err_lossy = {p: [] for p in PREDICTORS}
        for seed in seeds:
            cfg = ChannelConfig(rate, seed)
            for i, track in enumerate(tracks):
                mask = scenario_mask(track, cfg, i)
                lossy = hold_track(track, mask)
                for k in _windows(len(track), d, steps):
                    if mask[k]:
                        continue
                    key = (i, k)
                    if key not in cache:
                        cache[key] = run(track.head(k + 1))
                    ideal = cache[key]
                    degraded = ideal if not mask[: k + 1].any() else run(lossy.head(k + 1))
                    truth = _truth(track, k, steps)
                    future = {c: truth_diffs[i][c][k:k + steps] for c in PARAM_CHANNELS}
                    for c in PARAM_CHANNELS:
                        sq_ideal[c].append((degraded[0].diffs[c] - ideal[0].diffs[c]) ** 2)
                        sq_truth[c].append((degraded[0].diffs[c] - future[c]) ** 2)
                        sq_truth_ideal[c].append((ideal[0].diffs[c] - future[c]) ** 2)
                    for store, res in ((err_ideal, ideal), (err_lossy, degraded)):
                        store["narx_long"].append(np.abs(res[1][:, 0] - truth[:, 0]))
                        store["rnn_lat"].append(np.abs(res[1][:, 1] - truth[:, 1]))
                        store["kin_long"].append(np.abs(res[2][:, 0] - truth[:, 0]))
                        store["kin_lat"].append(np.abs(res[2][:, 1] - truth[:, 1]))
                    if i == 0 and seed == seeds[0]:
                        ex = example.setdefault(rate, {"anchor": [], **{c: {"ideal": [], "lossy": [], "truth": []}
                                                                       for c in ROBUSTNESS_CHANNELS}})
                        ex["anchor"].append(k)
                        for c in ROBUSTNESS_CHANNELS:
                            ex[c]["ideal"].append(float(ideal[0].diffs[c][0]))
                            ex[c]["lossy"].append(float(degraded[0].diffs[c][0]))
                            ex[c]["truth"].append(float(future[c][0]))
        if not err_ideal["narx_long"]:
            raise NoValidWindows(f"no received anchors at drop rate {rate}")
        for c in PARAM_CHANNELS:
            param_rows.append({
                "drop_rate": rate,
                "channel": c,
                "mse_vs_ideal": float(np.mean(sq_ideal[c])),
                "mse_vs_truth": float(np.mean(sq_truth[c])),
                "ideal_mse_vs_truth": float(np.mean(sq_truth_ideal[c])),
            })
        n = len(err_ideal["narx_long"])
        for p in PREDICTORS:
            ei, el = np.array(err_ideal[p]), np.array(err_lossy[p])
            for s in range(steps):
                pi, pl = percentile(ei[:, s]), percentile(el[:, s])
                p90_rows.append({
                    "drop_rate": rate, "predictor": p, "step": s + 1,
                    "ideal_p90": pi, "lossy_p90": pl, "delta": pl - pi,
                    "ratio": pl / pi if pi > 0 else (1.0 if pl == pi else math.inf),
                    "n": n,
                })
    return RobustnessResult(param_rows, p90_rows, example)


# -- report files ---------------------------------------------------------------

def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_csv(path: Path, columns, rows) -> Path:
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in columns])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def emit_report(report: EvalReport, directory, stem: str = "eval") -> dict:
    """Write the summary, plot-ready long-format and per-scenario CSVs."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {directory}: {exc}") from exc
    rows = report.summary_rows()
    label = {"narx_long": "NARX", "rnn_lat": "RNN", "kin_long": "Kinematic", "kin_lat": "Kinematic"}
    long_rows = [
        {"figure": "longitudinal" if r["axis"] == "long" else "lateral", "step": r["step"],
         "model": label[r["predictor"]], "p90_m": r["p90"]}
        for r in rows
    ]
    return {
        "summary": _write_csv(directory / f"{stem}_summary.csv", SUMMARY_COLUMNS, rows),
        "plot": _write_csv(directory / f"{stem}_plot.csv", ("figure", "step", "model", "p90_m"), long_rows),
        "per_scenario": _write_csv(directory / f"{stem}_per_scenario.csv",
                                   ("scenario_id", "predictor", "step", "mean"), report.per_scenario_means()),
    }


def read_report_summary(path) -> list:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SUMMARY_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [{"predictor": r["predictor"], "axis": r["axis"], "step": int(r["step"]),
                 "p90": float(r["p90"]), "mean": float(r["mean"]), "n": int(r["n"])} for r in reader]


def emit_robustness(result: RobustnessResult, directory, stem: str = "robustness") -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return {
        "params": _write_csv(directory / f"{stem}_params.csv",
                             ("drop_rate", "channel", "mse_vs_ideal", "mse_vs_truth", "ideal_mse_vs_truth"),
                             result.param_rows),
        "p90": _write_csv(directory / f"{stem}_p90.csv",
                          ("drop_rate", "predictor", "step", "ideal_p90", "lossy_p90", "delta", "ratio", "n"),
                          result.p90_rows),
    }
