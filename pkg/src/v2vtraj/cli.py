"""Command-line front end: ``v2vtraj <command> [options]``.

Every command writes ``manifest.json`` into its output directory with the
resolved configuration, seeds and library versions. No timestamps or host
details go into outputs, so identical invocations give identical files.

Exit codes: 0 success, 1 data or validation error, 2 usage error,
3 a requested quality gate (``--max-p90``, ``--max-ratio``, ``--tol``) failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plots
from .channel import ChannelConfig, hold_track
from .errors import V2VTrajError
from .evaluation import (
    PREDICTORS,
    emit_report,
    emit_robustness,
    robustness_eval,
    scenario_mask,
    sliding_eval,
)
from .neural import Dataset, TrainConfig, gradient_check, init_network
from .predictors import (
    PIPELINE_TRAIN,
    PredictionHorizon,
    baseline_state,
    kinematics_predict,
    load_bundle,
    predict_trajectory,
    runtime_versions,
    save_bundle,
    train_bundle,
)
from .synthetic import generate_corpus, write_corpus
from .trajectory_data import DEFAULT_RATE_HZ, load_corpus, resample_uniform, to_rotated_enu

log = logging.getLogger("v2vtraj")

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_GATE = 0, 1, 2, 3


def _existing_dir(text: str) -> Path:
    p = Path(text)
    if not p.is_dir():
        raise argparse.ArgumentTypeError(f"directory not found: {text}")
    return p


def _existing_file(text: str) -> Path:
    p = Path(text)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"file not found: {text}")
    return p


def _rate(text: str) -> float:
    v = float(text)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"drop rate must lie in [0, 1), got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v2vtraj", description="Cut-in trajectory prediction from V2V messages.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, data=True, out_default="out"):
        p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
        p.add_argument("--rate-hz", type=float, default=DEFAULT_RATE_HZ, help="sample rate in Hz (default 10)")
        p.add_argument("--out", type=Path, default=Path(out_default), help="output directory")
        if data:
            p.add_argument("--data", type=_existing_dir, required=True, help="directory of trajectory CSVs")

    g = sub.add_parser("generate", help="write a synthetic cut-in corpus")
    common(g, data=False, out_default="corpus")
    g.add_argument("--n", type=_positive_int, default=90, help="number of scenarios (default 90)")

    t = sub.add_parser("train", help="train the predictor bundle")
    common(t, out_default="model")
    t.add_argument("--horizon", type=_positive_int, default=10, help="prediction steps (default 10)")
    t.add_argument("--lr", type=float, default=PIPELINE_TRAIN.learning_rate)
    t.add_argument("--momentum", type=float, default=PIPELINE_TRAIN.momentum)
    t.add_argument("--epochs", type=_positive_int, default=PIPELINE_TRAIN.max_epochs)
    t.add_argument("--patience", type=_positive_int, default=PIPELINE_TRAIN.patience)
    t.add_argument("--augment-drop-rates", type=_rate, nargs="*", default=[0.4],
                   help="drop rates used to add held copies of the training data (default 0.4)")
    t.add_argument("--rnn-stride", type=_positive_int, default=3, help="stride between RNN training sequences")

    for name, helptext in (("predict", "write predicted tracks per scenario"),
                           ("evaluate", "per-step error report against the kinematic baseline")):
        p = sub.add_parser(name, help=helptext)
        common(p, out_default=name)
        p.add_argument("--model", type=_existing_file, required=True, help="bundle JSON written by train")
        p.add_argument("--horizon", type=_positive_int, default=None, help="prediction steps (default: model's)")
        p.add_argument("--drop-rate", type=_rate, default=0.0, help="simulated packet drop rate (default 0)")
        p.add_argument("--channel-seed", type=int, default=None, help="drop seed (default: --seed)")
        p.add_argument("--split", choices=("test", "all"), default="test", help="scenarios to use")
    sub.choices["predict"].add_argument("--anchor-stride", type=_positive_int, default=1)
    sub.choices["evaluate"].add_argument("--kin-length", type=float, default=None,
                                         help="override the baseline's vehicle length")
    sub.choices["evaluate"].add_argument("--max-p90", type=float, default=None,
                                         help="exit 3 if any network p90 exceeds this (m)")

    r = sub.add_parser("robustness", help="ideal vs lossy link comparison")
    common(r, out_default="robustness")
    r.add_argument("--model", type=_existing_file, required=True)
    r.add_argument("--drop-rate", type=_rate, nargs="+", default=[0.4])
    r.add_argument("--channel-seed", type=int, nargs="+", default=None, help="drop seeds (default: --seed)")
    r.add_argument("--split", choices=("test", "all"), default="test")
    r.add_argument("--max-ratio", type=float, default=None,
                   help="exit 3 if a network's lossy/ideal p90 ratio exceeds this at any step")

    c = sub.add_parser("gradcheck", help="finite-difference check of backprop on random nets")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--nets", type=_positive_int, default=10)
    c.add_argument("--epsilon", type=float, default=1e-5)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--out", type=Path, default=None, help="optional directory for the summary")
    return parser


# -- helpers ----------------------------------------------------------------------

def _write_manifest(out: Path, args, extra: dict | None = None) -> Path:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    doc = {"command": args.command, "config": config, "versions": runtime_versions()}
    doc.update(extra or {})
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _load_tracks(data: Path, rate_hz: float) -> list:
    trajs = load_corpus(data)
    if not trajs:
        raise V2VTrajError(f"no trajectory CSVs in {data}")
    out = []
    for tr in trajs:
        if not tr.is_uniform() or abs(tr.rate_hz - rate_hz) > 1e-6:
            tr = resample_uniform(tr, rate_hz)
        out.append(to_rotated_enu(tr))
    return out


def _select(tracks: list, bundle, which: str) -> list:
    if which == "all":
        return tracks
    by_id = {tr.scenario_id: tr for tr in tracks}
    missing = [i for i in bundle.split["test"] if i not in by_id]
    if missing:
        raise V2VTrajError(f"test scenarios missing from data directory: {', '.join(missing[:5])}")
    return [by_id[i] for i in bundle.split["test"]]


def _with_horizon(bundle, steps, rate_hz):
    if steps is None:
        return bundle
    return replace(bundle, horizon=PredictionHorizon(steps, 1.0 / rate_hz))


# -- commands ---------------------------------------------------------------------

def cmd_generate(args) -> int:
    trajs, specs = generate_corpus(args.n, args.seed, rate_hz=args.rate_hz)
    extra = {"command": "generate", "config": {"n": args.n, "seed": args.seed, "rate_hz": args.rate_hz},
             "versions": runtime_versions()}
    write_corpus(args.out, trajs, specs, extra)
    print(f"wrote {len(trajs)} scenarios to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    tracks = _load_tracks(args.data, args.rate_hz)
    cfg = TrainConfig(learning_rate=args.lr, momentum=args.momentum, max_epochs=args.epochs,
                      patience=args.patience, seed=args.seed)
    horizon = PredictionHorizon(args.horizon, 1.0 / args.rate_hz)
    bundle = train_bundle(tracks, cfg=cfg, horizon=horizon, augment_drop_rates=tuple(args.augment_drop_rates),
                          rnn_stride=args.rnn_stride, progress=log.info)
    args.out.mkdir(parents=True, exist_ok=True)
    save_bundle(bundle, args.out / "model.json")
    rows = []
    for label, h in sorted(bundle.history.items()):
        for e, (tl, cl) in enumerate(zip(h["train_loss"], h["cv_loss"])):
            rows.append((label, e, repr(float(tl)), repr(float(cl))))
    with (args.out / "loss_curves.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("net", "epoch", "train_loss", "cv_loss"))
        w.writerows(rows)
    plots.plot_loss_curves(bundle.history, args.out / "loss_curves.png")
    _write_manifest(args.out, args, {"split": bundle.split,
                                     "best_epoch": {k: h["best_epoch"] for k, h in sorted(bundle.history.items())}})
    print(f"model written to {args.out / 'model.json'}")
    return EXIT_OK


def cmd_predict(args) -> int:
    bundle = _with_horizon(load_bundle(args.model), args.horizon, args.rate_hz)
    tracks = _select(_load_tracks(args.data, args.rate_hz), bundle, args.split)
    cfg = ChannelConfig(args.drop_rate, args.seed if args.channel_seed is None else args.channel_seed)
    d, steps = bundle.n_delays, bundle.horizon.steps
    args.out.mkdir(parents=True, exist_ok=True)
    cols = ("anchor", "step", "t", "x_nn", "y_nn", "x_kin", "y_kin", "x_true", "y_true", "anchor_dropped")
    for i, track in enumerate(tracks):
        mask = scenario_mask(track, cfg, i)
        observed = hold_track(track, mask) if mask.any() else track
        dt = bundle.horizon.dt
        with (args.out / f"pred_{track.scenario_id}.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for k in range(d, len(track), args.anchor_stride):
                hist = observed.head(k + 1)
                nn = predict_trajectory(bundle, hist)
                kin = kinematics_predict(baseline_state(hist), bundle.horizon)
                for s in range(steps):
                    j = k + 1 + s
                    truth = (repr(float(track.x[j])), repr(float(track.y[j]))) if j < len(track) else ("", "")
                    w.writerow((k, s + 1, repr(float(track.t[k] + (s + 1) * dt)),
                                repr(float(nn[s, 0])), repr(float(nn[s, 1])),
                                repr(float(kin[s, 0])), repr(float(kin[s, 1])), *truth, int(mask[k])))
    _write_manifest(args.out, args, {"channel_seed": cfg.seed, "scenarios": [t.scenario_id for t in tracks]})
    print(f"predictions for {len(tracks)} scenarios written to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    bundle = _with_horizon(load_bundle(args.model), args.horizon, args.rate_hz)
    tracks = _select(_load_tracks(args.data, args.rate_hz), bundle, args.split)
    cfg = ChannelConfig(args.drop_rate, args.seed if args.channel_seed is None else args.channel_seed)
    report = sliding_eval(bundle, tracks, channel=cfg, kin_length=args.kin_length)
    emit_report(report, args.out)
    plots.plot_p90(report, args.out)
    _write_manifest(args.out, args, {"channel_seed": cfg.seed, "n_windows": report.n_windows})
    for p in PREDICTORS:
        print(f"{p:10s} p90 " + " ".join(f"{v:.3f}" for v in report.p90(p)))
    if args.max_p90 is not None:
        worst = max(float(report.p90(p).max()) for p in ("narx_long", "rnn_lat"))
        if worst > args.max_p90:
            print(f"gate failed: network p90 {worst:.4f} m > {args.max_p90} m", file=sys.stderr)
            return EXIT_GATE
    return EXIT_OK


def cmd_robustness(args) -> int:
    bundle = load_bundle(args.model)
    tracks = _select(_load_tracks(args.data, args.rate_hz), bundle, args.split)
    seeds = tuple(args.channel_seed) if args.channel_seed else (args.seed,)
    rates = tuple(sorted(set([0.0] + list(args.drop_rate))))
    result = robustness_eval(bundle, tracks, drop_rates=rates, seeds=seeds)
    emit_robustness(result, args.out)
    plots.plot_robustness(result, args.out)
    _write_manifest(args.out, args, {"channel_seeds": list(seeds)})
    worst = 0.0
    for rate in rates:
        for p in PREDICTORS:
            r = result.ratio(rate, p)
            print(f"drop {rate:.2f} {p:10s} lossy/ideal " + " ".join(f"{v:.2f}" for v in r))
            if p in ("narx_long", "rnn_lat"):
                worst = max(worst, float(r.max()))
    if args.max_ratio is not None and worst > args.max_ratio:
        print(f"gate failed: lossy/ideal p90 ratio {worst:.3f} > {args.max_ratio}", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def random_gradcheck(n_nets: int, seed: int, epsilon: float = 1e-5) -> list:
    """Gradient-check small random feedforward and recurrent nets; returns one row per net."""
    rows = []
    for i in range(n_nets):
        rng = np.random.default_rng([seed, i])
        recurrent = bool(i % 2)
        n_in, n_out = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        d, h = int(rng.integers(1, 6)), int(rng.integers(2, 7))
        net = init_network(n_in, n_out, n_delays=d, n_hidden=h, recurrent=recurrent, seed=int(rng.integers(2**31)))
        if recurrent:
            net = net.with_params({"W_rec": rng.uniform(-0.5, 0.5, (h, h))})
        seq = 4 if recurrent else 1
        X = rng.uniform(-1, 1, (6, seq, n_in, d))
        Y = rng.uniform(-1, 1, (6, seq, n_out))
        err = gradient_check(net, Dataset(X, Y), epsilon)
        rows.append({"net": i, "recurrent": recurrent, "inputs": n_in, "delays": d, "hidden": h,
                     "outputs": n_out, "max_rel_error": err})
    return rows


def cmd_gradcheck(args) -> int:
    rows = random_gradcheck(args.nets, args.seed, args.epsilon)
    worst = max(r["max_rel_error"] for r in rows)
    for r in rows:
        kind = "recurrent" if r["recurrent"] else "feedforward"
        print(f"net {r['net']:2d} {kind:11s} max relative error {r['max_rel_error']:.3e}")
    print(f"max relative error {worst:.3e} (tol {args.tol:g})")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with (args.out / "gradcheck.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        _write_manifest(args.out, args, {"max_rel_error": worst})
    return EXIT_OK if worst < args.tol else EXIT_GATE


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "robustness": cmd_robustness,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command != "gradcheck":
        print(f"seed: {args.seed}")
    try:
        return COMMANDS[args.command](args)
    except V2VTrajError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
