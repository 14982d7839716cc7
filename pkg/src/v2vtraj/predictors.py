"""Two-layer trajectory predictor and the kinematic bicycle baseline.

Layer one forecasts each vehicle parameter with its own NAR net. Layer two
rolls the longitudinal NARX net on the forecast yaw rate, heading, speed and
longitudinal acceleration, and the recurrent lateral net on the forecast
steering angle, yaw rate and heading. Both position nets work on
differenced, normalized positions that are integrated back from the last
observed sample.
"""

from __future__ import annotations

import json
import logging
import math
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import __version__
from .errors import CorpusTooSmall, DegenerateRange, InsufficientHistory, InvalidState
from .neural import (
    Dataset,
    TdlNetwork,
    TrainConfig,
    forward,
    init_network,
    predict_closed_loop,
    run_sequence,
    train_batch,
)
from .preprocess import DEADBANDS, ChannelSpec, deadband_smooth, denormalize, difference, fit_normalizer, normalize, reconstruct
from .channel import hold_track
from .trajectory_data import EnuTrack

log = logging.getLogger(__name__)

PARAM_CHANNELS = ("steering_angle", "yaw_rate", "heading", "speed", "accel_lon")
LONG_EXOGENOUS = ("yaw_rate", "heading", "speed", "accel_lon")
LAT_EXOGENOUS = ("steering_angle", "yaw_rate", "heading")
N_DELAYS = 15
N_HIDDEN = 20
# Settings used by the full corpus pipeline (CLI and acceptance runs).
PIPELINE_TRAIN = TrainConfig(learning_rate=0.1, momentum=0.9, max_epochs=3000, patience=200)


@dataclass(frozen=True)
class PredictionHorizon:
    steps: int = 10
    dt: float = 0.1

    def __post_init__(self):
        if self.steps < 1 or not self.dt > 0:
            raise ValueError(f"invalid horizon {self.steps} steps of {self.dt} s")


@dataclass(frozen=True)
class KinematicsState:
    x: float
    y: float
    theta: float
    v: float
    phi: float
    L: float = 5.0

    def validate(self) -> None:
        values = (self.x, self.y, self.theta, self.v, self.phi, self.L)
        if not all(math.isfinite(v) for v in values):
            raise InvalidState(f"non-finite state {self}")
        if abs(self.phi) >= math.pi / 2:
            raise InvalidState(f"steering angle {self.phi} rad makes tan(phi) unbounded")
        if self.L <= 0:
            raise InvalidState(f"vehicle length {self.L} must be positive")


def kinematics_predict(state: KinematicsState, horizon: PredictionHorizon = PredictionHorizon()) -> np.ndarray:
    """Forward-Euler rollout of the bicycle model with ``v`` and ``phi`` held.

    Derivatives are evaluated at the start of each step. Returns the
    ``(steps, 2)`` array of predicted ``(x, y)``.
    """
    state.validate()
    x, y, theta = state.x, state.y, state.theta
    yaw_rate = state.v / state.L * math.tan(state.phi)
    out = np.empty((horizon.steps, 2))
    for j in range(horizon.steps):
        x, y, theta = (
            x + horizon.dt * state.v * math.cos(theta),
            y + horizon.dt * state.v * math.sin(theta),
            theta + horizon.dt * yaw_rate,
        )
        out[j] = x, y
    return out


def baseline_state(history: EnuTrack) -> KinematicsState:
    """Bicycle state at the last observed sample of ``history``."""
    k = len(history) - 1
    return KinematicsState(
        x=float(history.x[k]),
        y=float(history.y[k]),
        theta=float(history.heading_rad[k]),
        v=float(history.speed[k]),
        phi=float(history.steering_rad[k]),
        L=float(history.veh_length),
    )


def raw_channel(track: EnuTrack, name: str) -> np.ndarray:
    series = track.channel(name)
    return np.unwrap(series) if name == "heading" else series


def smoothed_diffs(track: EnuTrack, name: str, deadband: float | None = None) -> np.ndarray:
    deadband = DEADBANDS[name] if deadband is None else deadband
    return difference(deadband_smooth(raw_channel(track, name), deadband))


@dataclass
class ParameterForecast:
    """Stage-one output: ``conditioned`` holds normalized predicted differences."""

    conditioned: dict
    diffs: dict
    levels: dict


@dataclass
class PredictorBundle:
    nar_nets: dict
    narx_net: TdlNetwork
    rnn_net: TdlNetwork
    normalizers: dict
    horizon: PredictionHorizon = field(default_factory=PredictionHorizon)
    lateral_feedback: bool = True
    train_config: TrainConfig = field(default_factory=TrainConfig)
    split: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict)
    augment_drop_rates: tuple = ()

    @property
    def n_delays(self) -> int:
        return self.narx_net.n_delays

    def conditioned(self, track: EnuTrack) -> dict:
        """Smoothed, differenced, normalized series for every channel."""
        return {
            name: normalize(spec, smoothed_diffs(track, name, spec.deadband))
            for name, spec in self.normalizers.items()
        }


# -- dataset construction ---------------------------------------------------

def _position_windows(cond: dict, target: str, exo: tuple, k: int, d: int, feedback: bool) -> np.ndarray:
    """Inputs for predicting ``cond[target][k]``: own past taps, then exogenous taps up to ``k``."""
    rows = [cond[target][k - d:k]] if feedback else []
    rows += [cond[e][k - d + 1:k + 1] for e in exo]
    return np.array(rows)


class _Sample(NamedTuple):
    """Conditioned inputs, clean conditioned targets and usable anchor flags."""

    inputs: dict
    targets: dict
    anchor_ok: np.ndarray  # per diff index j: the sample j the window ends on arrived


def _nar_data(samples: list, name: str, d: int) -> Dataset:
    X, Y = [], []
    for smp in samples:
        s, t = smp.inputs[name], smp.targets[name]
        for k in range(d, len(s)):
            if smp.anchor_ok[k]:
                X.append(s[k - d:k][None])
                Y.append([t[k]])
    return Dataset.feedforward(np.array(X), np.array(Y))


def _narx_data(samples: list, d: int) -> Dataset:
    X, Y = [], []
    for smp in samples:
        for k in range(d, len(smp.targets["x"])):
            if smp.anchor_ok[k]:
                X.append(_position_windows(smp.inputs, "x", LONG_EXOGENOUS, k, d, True))
                Y.append([smp.targets["x"][k]])
    return Dataset.feedforward(np.array(X), np.array(Y))


def _rnn_data(samples: list, d: int, seq_len: int, feedback: bool, stride: int = 1) -> Dataset:
    X, Y = [], []
    for smp in samples:
        m = len(smp.targets["y"])
        for start in range(d, m - seq_len + 1, stride):
            ks = range(start, start + seq_len)
            X.append([_position_windows(smp.inputs, "y", LAT_EXOGENOUS, k, d, feedback) for k in ks])
            Y.append([[smp.targets["y"][k]] for k in ks])
    n_in = len(LAT_EXOGENOUS) + int(feedback)
    if not X:
        return Dataset(np.empty((0, seq_len, n_in, d)), np.empty((0, seq_len, 1)))
    return Dataset(np.array(X), np.array(Y))


def split_counts(n: int, fractions=(0.70, 0.15, 0.15)) -> tuple:
    """Floor for train and CV, remainder to test."""
    n_train = int(math.floor(fractions[0] * n + 1e-9))
    n_cv = int(math.floor(fractions[1] * n + 1e-9))
    return n_train, n_cv, n - n_train - n_cv


def split_corpus(ids: list, seed: int, fractions=(0.70, 0.15, 0.15)) -> dict:
    n_train, n_cv, _ = split_counts(len(ids), fractions)
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    return {
        "train": shuffled[:n_train],
        "cv": shuffled[n_train:n_train + n_cv],
        "test": shuffled[n_train + n_cv:],
    }


def _fit_channel(name: str, series: np.ndarray) -> ChannelSpec:
    try:
        return fit_normalizer(series, name=name)
    except DegenerateRange:
        # a channel flattened by its deadband carries no information; give it a unit-width range
        centre = float(series[0]) if len(series) else 0.0
        half = max(DEADBANDS.get(name, 0.0), 1e-6)
        log.warning("channel %s is constant in training data; using range +/-%g", name, half)
        return ChannelSpec(name, DEADBANDS.get(name, 0.0), centre - half, centre + half)


def _samples(bundle: "PredictorBundle", tracks: list, rates: tuple, seed: int) -> list:
    out = []
    for i, tr in enumerate(tracks):
        clean = bundle.conditioned(tr)
        out.append(_Sample(clean, clean, np.ones(len(tr), dtype=bool)))
        for c, rate in enumerate(rates):
            mask = np.random.default_rng([seed, 7919, i, c]).random(len(tr)) < rate
            mask[0] = False
            out.append(_Sample(bundle.conditioned(hold_track(tr, mask)), clean, ~mask))
    return out


def train_bundle(corpus, split=(0.70, 0.15, 0.15), cfg: TrainConfig = PIPELINE_TRAIN,
                 horizon: PredictionHorizon | None = None, lateral_feedback: bool = True,
                 augment_drop_rates: tuple = (0.4,), rnn_stride: int = 3, progress=None) -> PredictorBundle:
    """Split the corpus, fit normalizers on the training part and train all nets.

    ``augment_drop_rates`` adds, per rate, one drop-and-hold copy of every
    training and CV scenario as extra input windows with clean targets.
    """
    tracks = list(corpus)
    if len(tracks) < 10:
        raise CorpusTooSmall(f"need at least 10 scenarios, got {len(tracks)}")
    if horizon is None:
        horizon = PredictionHorizon(dt=1.0 / tracks[0].rate_hz)
    by_id = {tr.scenario_id: tr for tr in tracks}
    parts = split_corpus(list(by_id), cfg.seed, split)
    train_tracks = [by_id[i] for i in parts["train"]]
    cv_tracks = [by_id[i] for i in parts["cv"]]

    names = PARAM_CHANNELS + ("x", "y")
    normalizers = {
        name: _fit_channel(name, np.concatenate([smoothed_diffs(tr, name) for tr in train_tracks]))
        for name in names
    }
    rates = tuple(float(r) for r in augment_drop_rates)
    scratch = PredictorBundle({}, None, None, normalizers, horizon, lateral_feedback, cfg, parts)
    train_s = _samples(scratch, train_tracks, rates, cfg.seed)
    cv_s = _samples(scratch, cv_tracks, rates, cfg.seed + 1)
    d = N_DELAYS
    history = {}

    def fit(label, net, tr_data, cv_data):
        if progress:
            progress(f"training {label} on {len(tr_data)} samples")
        res = train_batch(net, tr_data, cv_data, cfg)
        history[label] = {"train_loss": res.train_loss, "cv_loss": res.cv_loss, "best_epoch": res.best_epoch}
        return res.net

    nar_nets = {}
    for i, name in enumerate(PARAM_CHANNELS):
        net = init_network(1, 1, d, N_HIDDEN, n_feedback=1, seed=[cfg.seed, i])
        nar_nets[name] = fit(f"nar_{name}", net, _nar_data(train_s, name, d), _nar_data(cv_s, name, d))

    narx = init_network(1 + len(LONG_EXOGENOUS), 1, d, N_HIDDEN, n_feedback=1, seed=[cfg.seed, 10])
    narx = fit("narx_long", narx, _narx_data(train_s, d), _narx_data(cv_s, d))

    n_lat = len(LAT_EXOGENOUS) + int(lateral_feedback)
    rnn = init_network(n_lat, 1, d, N_HIDDEN, recurrent=True, n_feedback=int(lateral_feedback),
                       seed=[cfg.seed, 20])
    rnn = fit("rnn_lat", rnn,
              _rnn_data(train_s, d, cfg.bptt_window, lateral_feedback, rnn_stride),
              _rnn_data(cv_s, d, cfg.bptt_window, lateral_feedback, rnn_stride))

    return PredictorBundle(nar_nets, narx, rnn, normalizers, horizon, lateral_feedback, cfg, parts,
                           history, rates)


# -- inference ----------------------------------------------------------------

def _check_history(bundle: PredictorBundle, history: EnuTrack) -> None:
    need = bundle.n_delays + 1
    if len(history) < need:
        raise InsufficientHistory(f"history has {len(history)} samples, need at least {need}")


def predict_parameters(bundle: PredictorBundle, history: EnuTrack, cond: dict | None = None) -> ParameterForecast:
    """Stage one: closed-loop NAR forecasts of every parameter channel."""
    _check_history(bundle, history)
    cond = bundle.conditioned(history) if cond is None else cond
    d, steps = bundle.n_delays, bundle.horizon.steps
    conditioned, diffs, levels = {}, {}, {}
    for name in PARAM_CHANNELS:
        spec = bundle.normalizers[name]
        seed = cond[name][-d:][None]
        p = predict_closed_loop(bundle.nar_nets[name], seed, steps=steps)[0]
        conditioned[name] = p
        diffs[name] = denormalize(spec, p)
        last = deadband_smooth(raw_channel(history, name), spec.deadband)[-1]
        levels[name] = reconstruct(last, diffs[name])[1:]
    return ParameterForecast(conditioned, diffs, levels)


def _roll_position(bundle, net, cond, target, exo, forecast, warmup: int = 0):
    d, steps = bundle.n_delays, bundle.horizon.steps
    m = len(cond[target])
    feedback = net.n_feedback > 0
    hidden = None
    if warmup:
        windows = [_position_windows(cond, target, exo, k, d, feedback) for k in range(m - warmup, m)]
        _, hidden = run_sequence(net, windows)
    rows = [cond[target][m - d:m]] if feedback else []
    rows += [cond[e][m - d:m] for e in exo]
    exogenous = np.array([forecast.conditioned[e] for e in exo])
    return predict_closed_loop(net, np.array(rows), exogenous, steps, hidden=hidden)[0]


def rnn_warmup(bundle: PredictorBundle, n_diffs: int) -> int:
    """History windows replayed through the recurrent net before forecasting."""
    spare = bundle.train_config.bptt_window - bundle.horizon.steps
    return max(0, min(spare, n_diffs - bundle.n_delays))


def predict_trajectory(bundle: PredictorBundle, history: EnuTrack,
                       forecast: ParameterForecast | None = None) -> np.ndarray:
    """Full pipeline; returns the ``(steps, 2)`` predicted ``(x, y)`` positions."""
    _check_history(bundle, history)
    cond = bundle.conditioned(history)
    if forecast is None:
        forecast = predict_parameters(bundle, history, cond)
    dx = _roll_position(bundle, bundle.narx_net, cond, "x", LONG_EXOGENOUS, forecast)
    dy = _roll_position(bundle, bundle.rnn_net, cond, "y", LAT_EXOGENOUS, forecast,
                        warmup=rnn_warmup(bundle, len(cond["y"])))
    x = reconstruct(history.x[-1], denormalize(bundle.normalizers["x"], dx))[1:]
    y = reconstruct(history.y[-1], denormalize(bundle.normalizers["y"], dy))[1:]
    return np.column_stack([x, y])


# -- persistence --------------------------------------------------------------

def _probe(net: TdlNetwork) -> dict:
    rng = np.random.default_rng(12345)
    window = rng.uniform(-1, 1, (net.n_inputs, net.n_delays))
    out, _ = forward(net, window)
    return {"window": window.tolist(), "output": out.tolist()}


def bundle_to_dict(bundle: PredictorBundle) -> dict:
    nets = {f"nar_{k}": v for k, v in bundle.nar_nets.items()}
    nets["narx_long"] = bundle.narx_net
    nets["rnn_lat"] = bundle.rnn_net
    return {
        "format": "v2vtraj-bundle/1",
        "package_version": __version__,
        "horizon": asdict(bundle.horizon),
        "lateral_feedback": bundle.lateral_feedback,
        "augment_drop_rates": list(bundle.augment_drop_rates),
        "train_config": asdict(bundle.train_config),
        "split": bundle.split,
        "normalizers": {k: v.to_dict() for k, v in bundle.normalizers.items()},
        "networks": {k: {**v.to_dict(), "probe": _probe(v)} for k, v in nets.items()},
        "history": bundle.history,
    }


def bundle_from_dict(doc: dict, verify: bool = True) -> PredictorBundle:
    nets = {}
    for name, d in doc["networks"].items():
        net = TdlNetwork.from_dict(d)
        if verify and "probe" in d:
            out, _ = forward(net, np.array(d["probe"]["window"]))
            if np.max(np.abs(out - np.array(d["probe"]["output"]))) > 1e-9:
                raise ValueError(f"network {name} does not reproduce its stored probe output")
        nets[name] = net
    return PredictorBundle(
        nar_nets={c: nets[f"nar_{c}"] for c in PARAM_CHANNELS},
        narx_net=nets["narx_long"],
        rnn_net=nets["rnn_lat"],
        normalizers={k: ChannelSpec(**v) for k, v in doc["normalizers"].items()},
        horizon=PredictionHorizon(**doc["horizon"]),
        lateral_feedback=doc["lateral_feedback"],
        train_config=TrainConfig(**doc["train_config"]),
        split=doc["split"],
        history=doc.get("history", {}),
        augment_drop_rates=tuple(doc.get("augment_drop_rates", ())),
    )


def save_bundle(bundle: PredictorBundle, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(bundle_to_dict(bundle), indent=1, sort_keys=True) + "\n")
    return path


def load_bundle(path) -> PredictorBundle:
    return bundle_from_dict(json.loads(Path(path).read_text()))


def runtime_versions() -> dict:
    return {"v2vtraj": __version__, "numpy": np.__version__, "python": platform.python_version()}
