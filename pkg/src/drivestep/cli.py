"""Scenario-runner command line interface.

Subcommands:
    run      generate one scenario, run the estimator, write CSV + summary
    compare  run two estimator variants on identical sensor data
    sweep    rerun a scenario over a grid of one config parameter

Exit codes: 0 success, 1 embedded check violated, 2 configuration error,
3 runtime estimator failure (non-finite state, singular innovation or an
infeasible commanded motion).
"""

from __future__ import annotations

import argparse
import copy
import csv
import sys
from pathlib import Path

import numpy as np

from .config import CheckEntry, ConfigError, RunSetup, load_config, set_by_path, setup_from_dict
from .estimator import NonFiniteError, SingularInnovationError
from .gait import contact_schedule_batch
from .kinematics import LEG_NAMES, rot_zyx
from .sim import (
    EstimateLog,
    IkFailureError,
    LengthMismatchError,
    SensorStream,
    TruthStream,
    estimator_for_scenario,
    generate,
    metrics,
    run_estimator,
)
from .trust import phase_trust

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3

_AXES = ("x", "y", "z")


def _fmt(v) -> str:
    """Shortest round-trip float formatting for reproducible CSV bytes."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _vec_cols(prefix: str) -> list[str]:
    return [f"{prefix}_{ax}" for ax in _AXES]


def _leg_cols(prefix: str) -> list[str]:
    return [f"{prefix}_{n.lower()}" for n in LEG_NAMES]


def write_truth_csv(path: Path, truth: TruthStream, decimate: int = 1) -> None:
    header = (
        ["t"] + _vec_cols("p") + _vec_cols("pdot")
        + _vec_cols("p_drive") + _vec_cols("pdot_drive") + _leg_cols("contact")
    )
    sl = slice(None, None, decimate)
    data = np.column_stack(
        [truth.t[sl], truth.p[sl], truth.pdot[sl], truth.p_drive[sl],
         truth.pdot_drive[sl], truth.contact[sl]]
    )
    _write_csv(path, header, data)


def write_estimate_csv(
    path: Path, truth: TruthStream, log: EstimateLog, decimate: int = 1
) -> None:
    header = (
        ["t"]
        + _vec_cols("truth_p") + _vec_cols("truth_pdot")
        + _vec_cols("est_p") + _vec_cols("est_pdot")
        + _vec_cols("est_p_drive") + _vec_cols("est_pdot_drive")
        + _vec_cols("v_gait") + _leg_cols("trust") + _leg_cols("s_hat")
    )
    sl = slice(None, None, decimate)
    data = np.column_stack(
        [log.t[sl], truth.p[sl], truth.pdot[sl], log.p[sl], log.pdot[sl],
         log.p_drive[sl], log.pdot_drive[sl], log.v_gait[sl],
         log.trust[sl], log.s_hat[sl]]
    )
    _write_csv(path, header, data)


def write_sensors_csv(path: Path, sensors: SensorStream) -> None:
    header = ["t"] + _vec_cols("accel") + _vec_cols("omega") + ["yaw", "pitch", "roll"]
    for leg in LEG_NAMES:
        header += [f"q_{leg.lower()}_{j}" for j in range(1, 5)]
    for leg in LEG_NAMES:
        header += [f"qdot_{leg.lower()}_{j}" for j in range(1, 5)]
    header += _leg_cols("s_hat")
    yaw = np.arctan2(sensors.R[:, 1, 0], sensors.R[:, 0, 0])
    pitch = np.arctan2(
        -sensors.R[:, 2, 0], np.hypot(sensors.R[:, 2, 1], sensors.R[:, 2, 2])
    )
    roll = np.arctan2(sensors.R[:, 2, 1], sensors.R[:, 2, 2])
    n = len(sensors)
    data = np.column_stack(
        [sensors.t, sensors.accel, sensors.omega, yaw, pitch, roll,
         sensors.q.reshape(n, 16), sensors.qdot.reshape(n, 16), sensors.s_hat]
    )
    _write_csv(path, header, data)


def read_sensors_csv(path: Path) -> SensorStream:
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    n = data.shape[0]

    def cols(prefix_names):
        return np.column_stack([data[c] for c in prefix_names])

    t = np.asarray(data["t"], dtype=float)
    accel = cols([f"accel_{a}" for a in _AXES])
    omega = cols([f"omega_{a}" for a in _AXES])
    R = np.empty((n, 3, 3))
    for k in range(n):
        R[k] = rot_zyx(float(data["yaw"][k]), float(data["pitch"][k]), float(data["roll"][k]))
    legs = [l.lower() for l in LEG_NAMES]
    q = np.stack(
        [cols([f"q_{leg}_{j}" for j in range(1, 5)]) for leg in legs], axis=1
    )
    qdot = np.stack(
        [cols([f"qdot_{leg}_{j}" for j in range(1, 5)]) for leg in legs], axis=1
    )
    s_hat = cols([f"s_hat_{leg}" for leg in legs]).astype(int)
    del names
    return SensorStream(t=t, accel=accel, omega=omega, R=R, q=q, qdot=qdot, s_hat=s_hat)


def write_summary(path: Path, entries: dict[str, float]) -> None:
    with open(path, "w") as fh:
        for key in sorted(entries):
            fh.write(f"{key}={_fmt(entries[key])}\n")


def evaluate_checks(
    checks: list[CheckEntry], values: dict[str, dict[str, float]]
) -> list[str]:
    """Return human-readable violations; empty list means all checks pass."""
    failures = []
    for c in checks:
        table = values.get(c.target)
        if table is None:
            failures.append(f"check target {c.target!r} not available")
            continue
        if c.metric not in table:
            failures.append(f"unknown check metric {c.metric!r}")
            continue
        v = table[c.metric]
        if c.min is not None and v < c.min:
            failures.append(f"{c.target}:{c.metric}={v:.6g} below minimum {c.min:.6g}")
        if c.max is not None and v > c.max:
            failures.append(f"{c.target}:{c.metric}={v:.6g} above maximum {c.max:.6g}")
    return failures


def _run_setup(
    setup: RunSetup,
    sensors_override: SensorStream | None = None,
    wheel_aware: bool | None = None,
    trust_enabled: bool | None = None,
) -> tuple[TruthStream, SensorStream, EstimateLog, dict[str, float]]:
    truth, sensors = generate(setup.scenario, setup.model)
    if sensors_override is not None:
        sensors = sensors_override
    est = estimator_for_scenario(
        setup.scenario,
        truth,
        sensors,
        model=setup.model,
        wheel_aware=setup.wheel_aware if wheel_aware is None else wheel_aware,
        trust_enabled=setup.trust_enabled if trust_enabled is None else trust_enabled,
        trust_params=setup.trust,
        noise_params=setup.filter_noise,
    )
    log = run_estimator(est, sensors)
    m = metrics(truth, log, skip=min(setup.convergence_skip, setup.scenario.duration / 2))
    return truth, sensors, log, m


def _load(args) -> RunSetup:
    setup = load_config(args.config)
    if args.seed is not None:
        raw = copy.deepcopy(setup.raw)
        raw.setdefault("scenario", {})["seed"] = args.seed
        setup = setup_from_dict(raw)
    return setup


def cmd_run(args) -> int:
    setup = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sensors_override = None
    if args.from_sensors:
        sensors_override = read_sensors_csv(Path(args.from_sensors))
    truth, sensors, log, m = _run_setup(setup, sensors_override)
    write_truth_csv(out / "truth.csv", truth, args.decimate)
    write_estimate_csv(out / "estimate.csv", truth, log, args.decimate)
    if args.save_sensors:
        write_sensors_csv(out / "sensors.csv", sensors)
    write_summary(out / "summary.txt", m)
    print(f"wrote {out / 'truth.csv'}, {out / 'estimate.csv'}, {out / 'summary.txt'}")
    for key in ("rmse_pos", "rmse_vel", "rmse_height", "mean_trust"):
        print(f"  {key} = {m[key]:.6g}")
    if args.check:
        failures = evaluate_checks(setup.checks, {"a": m})
        if failures:
            for f in failures:
                print(f"CHECK FAILED: {f}", file=sys.stderr)
            return EXIT_CHECK_FAILED
        print(f"all {len(setup.checks)} checks passed")
    return EXIT_OK


def cmd_compare(args) -> int:
    setup = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth, sensors = generate(setup.scenario, setup.model)

    def run_variant(wheel_aware: bool, trust_enabled: bool) -> tuple[EstimateLog, dict]:
        est = estimator_for_scenario(
            setup.scenario, truth, sensors, model=setup.model,
            wheel_aware=wheel_aware, trust_enabled=trust_enabled,
            trust_params=setup.trust, noise_params=setup.filter_noise,
        )
        log = run_estimator(est, sensors)
        m = metrics(truth, log, skip=min(setup.convergence_skip, setup.scenario.duration / 2))
        return log, m

    log_a, m_a = run_variant(setup.wheel_aware, setup.trust_enabled)
    if setup.compare_variant == "baseline":
        log_b, m_b = run_variant(False, setup.trust_enabled)
    else:  # trust_off
        log_b, m_b = run_variant(setup.wheel_aware, False)

    ratio = {
        k: (m_b[k] / m_a[k] if m_a[k] != 0.0 else float("inf"))
        for k in m_a
        if k.startswith(("rmse_", "max_"))
    }
    write_truth_csv(out / "truth.csv", truth, args.decimate)
    write_estimate_csv(out / "estimate_a.csv", truth, log_a, args.decimate)
    write_estimate_csv(out / "estimate_b.csv", truth, log_b, args.decimate)
    summary = {f"a_{k}": v for k, v in m_a.items()}
    summary.update({f"b_{k}": v for k, v in m_b.items()})
    summary.update({f"ratio_{k}": v for k, v in ratio.items()})
    write_summary(out / "summary.txt", summary)
    print(f"variant a: configured estimator; variant b: {setup.compare_variant}")
    for key in ("rmse_pos", "rmse_vel", "rmse_height"):
        print(f"  {key}: a={m_a[key]:.6g}  b={m_b[key]:.6g}  b/a={ratio[key]:.3g}")
    if args.check:
        failures = evaluate_checks(
            setup.compare_checks, {"a": m_a, "b": m_b, "ratio": ratio}
        )
        if failures:
            for f in failures:
                print(f"CHECK FAILED: {f}", file=sys.stderr)
            return EXIT_CHECK_FAILED
        print(f"all {len(setup.compare_checks)} checks passed")
    return EXIT_OK


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def cmd_sweep(args) -> int:
    setup = _load(args)  # validates the base config up-front
    values = [v for v in (s.strip() for s in args.values.split(",")) if v]
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    metric_keys: list[str] | None = None
    for text in values:
        raw = copy.deepcopy(setup.raw)
        if args.seed is not None:
            raw.setdefault("scenario", {})["seed"] = args.seed
        set_by_path(raw, args.param, _parse_value(text))
        variant = setup_from_dict(raw)
        _, _, _, m = _run_setup(variant)
        m["mid_stance_trust"] = float(phase_trust(0.5, 1.0, variant.trust.W))
        if metric_keys is None:
            metric_keys = sorted(m)
        rows.append([text] + [m[k] for k in metric_keys])

    header = ["value"] + list(metric_keys or [])
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([row[0]] + [_fmt(v) for v in row[1:]])
    print(f"swept {args.param} over {len(values)} values -> {out / 'sweep.csv'}")

    if args.check:
        failures = []
        for text, row in zip(values, rows):
            table = dict(zip(metric_keys, row[1:]))
            failures += [
                f"{args.param}={text}: {f}"
                for f in evaluate_checks(setup.checks, {"a": table})
            ]
        if failures:
            for f in failures:
                print(f"CHECK FAILED: {f}", file=sys.stderr)
            return EXIT_CHECK_FAILED
        print(f"all checks passed for {len(values)} sweep points")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivestep",
        description="Scenario runner for the hybrid driving-stepping state estimator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="scenario config file (TOML)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--check", action="store_true",
                       help="evaluate embedded thresholds; exit 1 on violation")
        p.add_argument("--decimate", type=int, default=1,
                       help="write every Nth sample to the CSV outputs")

    p_run = sub.add_parser("run", help="run one scenario and write outputs")
    common(p_run)
    p_run.add_argument("--save-sensors", action="store_true",
                       help="also persist the sensor stream (sensors.csv)")
    p_run.add_argument("--from-sensors", default=None, metavar="FILE",
                       help="replay a previously saved sensor stream")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run two estimator variants on the same data")
    common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_sw = sub.add_parser("sweep", help="rerun over a grid of one config parameter")
    common(p_sw)
    p_sw.add_argument("--param", required=True, help="dotted config key, e.g. trust.W")
    p_sw.add_argument("--values", required=True, help="comma-separated parameter values")
    p_sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.decimate < 1:
        print("error: --decimate must be >= 1", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    try:
        return args.func(args)
    except (ConfigError, LengthMismatchError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (NonFiniteError, SingularInnovationError, IkFailureError) as exc:
        print(f"estimator failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
