"""Acceptance suite: one test per release criterion.

Each test prints a single PASS/FAIL line naming the criterion, the measured
values and the pinned tolerances.  Run with ``pytest -s`` to see the lines.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from conftest import random_geometry, random_joints

from drivestep.cli import main
from drivestep.config import load_config
from drivestep.kinematics import (
    contact_position,
    contact_position_batch,
    leg_ik_batch,
    leg_jacobian,
)
from drivestep.sim import estimator_for_scenario, generate, metrics, run_estimator
from drivestep.trust import TrustParams, height_trust, phase_trust

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, detail


def test_criterion_1_jacobian_vs_finite_differences():
    rng = np.random.default_rng(100)
    eps = 1e-6
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        geom = random_geometry(rng)
        q = random_joints(rng, 1)[0]
        J = leg_jacobian(geom, q)
        for j in range(4):
            dq = np.zeros(4)
            dq[j] = eps
            fd = (contact_position(geom, q + dq) - contact_position(geom, q - dq)) / (
                2.0 * eps
            )
            worst = max(worst, np.abs(J[:, j] - fd).max())
    elapsed = time.perf_counter() - t0
    report(
        "1 (analytic vs finite-difference Jacobian)",
        worst < 1e-6 and elapsed < 1.0,
        f"max |J - central FD| = {worst:.3e} < 1e-6 over 1000 samples "
        f"in {elapsed:.2f} s (< 1 s)",
    )


def test_criterion_2_fk_ik_round_trip():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    n = 10_000
    for mirror in (1, -1):
        geom = random_geometry(rng)
        geom = type(geom)(**{**geom.__dict__, "mirror": mirror})
        q = np.empty((n // 2, 3))
        q[:, 0] = rng.uniform(-0.5, 0.5, n // 2)
        q[:, 1] = rng.uniform(-0.6, 0.6, n // 2)
        q[:, 2] = rng.uniform(-2.0, -0.6, n // 2)
        targets = contact_position_batch(geom, q)
        back = contact_position_batch(geom, leg_ik_batch(geom, targets))
        worst = max(worst, np.linalg.norm(back - targets, axis=1).max())
    elapsed = time.perf_counter() - t0
    report(
        "2 (FK/IK round trip)",
        worst < 1e-8 and elapsed < 2.0,
        f"max round-trip error = {worst:.3e} m < 1e-8 over {n} targets "
        f"in {elapsed:.2f} s (< 2 s)",
    )


@pytest.mark.parametrize("name", ["stand", "trot", "drive"])
def test_criterion_3_zero_noise_consistency(name):
    setup = load_config(SCENARIOS / f"{name}.toml")
    t0 = time.perf_counter()
    truth, sensors = generate(setup.scenario, setup.model)
    est = estimator_for_scenario(
        setup.scenario, truth, sensors, model=setup.model,
        trust_params=setup.trust, noise_params=setup.filter_noise,
    )
    log = run_estimator(est, sensors)
    m = metrics(truth, log, skip=0.5)
    elapsed = time.perf_counter() - t0
    ok = m["rmse_pos"] < 1e-3 and m["rmse_vel"] < 1e-3 and elapsed < 5.0
    report(
        f"3 (zero-noise 10 s {name} @ 1 kHz)",
        ok,
        f"pos RMSE = {m['rmse_pos']:.3e} m < 1e-3, "
        f"vel RMSE = {m['rmse_vel']:.3e} m/s < 1e-3 "
        f"(0.5 s convergence window) in {elapsed:.2f} s (< 5 s)",
    )


def test_criterion_4_wheel_aware_vs_baseline_velocity():
    setup = load_config(SCENARIOS / "drive_noisy.toml")
    truth, sensors = generate(setup.scenario, setup.model)

    def run(wheel_aware):
        est = estimator_for_scenario(
            setup.scenario, truth, sensors, model=setup.model,
            wheel_aware=wheel_aware,
            trust_params=setup.trust, noise_params=setup.filter_noise,
        )
        return metrics(truth, run_estimator(est, sensors), skip=0.5)

    aware = run(True)["rmse_vel_x"]
    baseline = run(False)["rmse_vel_x"]
    ratio = baseline / aware
    ok = aware < 0.05 and baseline > 0.5 and ratio > 10.0
    report(
        "4 (noisy pure drive: wheel-aware vs point-foot baseline)",
        ok,
        f"velocity-x RMSE: wheel-aware = {aware:.4f} < 0.05, "
        f"baseline = {baseline:.4f} > 0.5, ratio = {ratio:.0f} > 10",
    )


def test_criterion_5_height_invariance_on_plateau(tmp_path):
    out = tmp_path / "obstacle"
    code = main(
        ["compare", str(SCENARIOS / "obstacle.toml"), "--out", str(out), "--check"]
    )
    summary = dict(
        line.split("=", 1) for line in (out / "summary.txt").read_text().splitlines()
    )
    trust_on = float(summary["a_max_height"])
    trust_off = float(summary["b_max_height"])
    ok = code == 0 and trust_on < 0.01 and trust_off > 0.03
    report(
        "5 (0.08 m plateau trot: trust on vs off, via compare --check)",
        ok,
        f"max height error: trust on = {trust_on:.4f} m < 0.01, "
        f"identity gain = {trust_off:.4f} m > 0.03, exit code {code}",
    )


def test_criterion_6_trust_function_properties():
    p = TrustParams()
    t0 = time.perf_counter()
    phi = np.linspace(0.0, 1.0, 101)
    widths = np.linspace(0.02, 1.0, 99)
    ok = bool(phase_trust(phi[None, :], 1.0, 1.0).shape == (1, phi.size))
    for w in widths:
        c = phase_trust(phi, 1.0, w)
        ok &= c.min() >= 0.0 and c.max() <= 1.0
        ok &= np.abs(c - c[::-1]).max() < 1e-12
    n_phase = widths.size * phi.size
    z = np.linspace(0.0, 0.5, 5001)
    cz_pos = height_trust(z, p)
    cz_neg = height_trust(-z, p)
    ok &= bool(np.all(np.diff(cz_pos) < 0.0) and np.all(np.diff(cz_neg) < 0.0))
    ok &= bool(np.all(cz_neg[1:] > cz_pos[1:]))
    ok &= cz_pos.min() > 0.0 and cz_pos.max() <= 1.0
    elapsed = time.perf_counter() - t0
    n = n_phase + 2 * z.size
    report(
        "6 (trust function property grid)",
        ok and elapsed < 1.0 and n >= 10_000,
        f"bounds/symmetry/monotone-decay/asymmetry hold on {n} grid points "
        f"in {elapsed:.2f} s (< 1 s)",
    )


def test_criterion_7_filter_health():
    total = 0
    worst_sym = 0.0
    worst_eig = 0.0
    gait_identity = True
    runs = [
        ("stand", True, True), ("trot", True, True), ("drive", True, True),
        ("drive_noisy", True, True), ("drive_noisy", False, True),
        ("obstacle", True, True), ("obstacle", True, False),
    ]
    for name, wheel_aware, trust_enabled in runs:
        setup = load_config(SCENARIOS / f"{name}.toml")
        truth, sensors = generate(setup.scenario, setup.model)
        est = estimator_for_scenario(
            setup.scenario, truth, sensors, model=setup.model,
            wheel_aware=wheel_aware, trust_enabled=trust_enabled,
            trust_params=setup.trust, noise_params=setup.filter_noise,
            collect_health=True,
        )
        log = run_estimator(est, sensors)
        total += len(est.health)
        worst_sym = max(worst_sym, max(h.sym_err for h in est.health))
        worst_eig = min(worst_eig, min(h.min_eig for h in est.health))
        gait_identity &= bool(
            np.array_equal(log.v_gait, log.pdot - log.pdot_drive)
        )
    ok = total >= 60_000 and worst_sym < 1e-9 and worst_eig >= -1e-9 and gait_identity
    report(
        "7 (filter health across acceptance scenarios)",
        ok,
        f"over {total} steps: max ||P - P'||_inf = {worst_sym:.2e} < 1e-9, "
        f"min eigenvalue = {worst_eig:.2e} >= -1e-9, "
        f"gait velocity identity exact = {gait_identity}",
    )


def test_criterion_8_control_formulas():
    from drivestep.control import (
        DEFAULT_SPEED_LIMIT,
        footstep_target,
        wheel_torque,
        wheel_velocity,
    )

    errs = []
    # torque and velocity substitution / round trip
    errs.append(abs(wheel_torque(0.05, np.eye(3), [10.0, 0.0, 0.0]) - 0.5))
    qdot = wheel_velocity(0.05, np.eye(3), [0.5, 0.0, 0.0])
    errs.append(abs(qdot - 10.0))
    errs.append(abs(qdot * 0.05 - 0.5))  # rolling round trip
    # footstep target substitution
    v = np.array([0.5, 0.0, 0.0])
    target, sym, cent = footstep_target(
        v_gait=v, v_cmd=v, t_stance=0.2, g_v=0.05, pdot=v,
        omega=np.zeros(3), h=0.3,
    )
    errs.append(np.abs(sym - [0.05, 0.0, 0.0]).max())
    errs.append(np.abs(target - (sym + cent)).max())
    worst = max(errs)
    kmh = DEFAULT_SPEED_LIMIT * 0.05 * 3.6  # speed ceiling at r_eff = 0.05 m
    ok = worst < 1e-12 and 39.0 < kmh < 41.0
    report(
        "8 (control formula substitutions)",
        ok,
        f"max substitution error = {worst:.2e} < 1e-12; speed ceiling "
        f"{DEFAULT_SPEED_LIMIT:.0f} rad/s x 0.05 m = {kmh:.1f} km/h (~40 km/h)",
    )


def test_criterion_9_determinism_and_performance(tmp_path):
    # byte-identical CSV outputs for identical seeds
    identical = True
    for d in ("a", "b"):
        code = main(
            ["run", str(SCENARIOS / "drive_noisy.toml"), "--out", str(tmp_path / d)]
        )
        assert code == 0
    for name in ("truth.csv", "estimate.csv", "summary.txt"):
        identical &= (tmp_path / "a" / name).read_bytes() == (
            tmp_path / "b" / name
        ).read_bytes()

    # 60 s @ 1 kHz end-to-end (generation, estimation, metrics)
    setup = load_config(SCENARIOS / "trot.toml")
    scenario = type(setup.scenario)(
        **{**setup.scenario.__dict__, "duration": 60.0}
    )
    t0 = time.perf_counter()
    truth, sensors = generate(scenario, setup.model)
    est = estimator_for_scenario(scenario, truth, sensors, model=setup.model)
    m = metrics(truth, run_estimator(est, sensors), skip=0.5)
    elapsed = time.perf_counter() - t0
    ok = identical and elapsed < 10.0 and len(truth) == 60_000
    report(
        "9 (determinism and throughput)",
        ok,
        f"CSV outputs byte-identical across reruns = {identical}; "
        f"60 s / 60,000-step scenario end-to-end in {elapsed:.2f} s (< 10 s), "
        f"pos RMSE {m['rmse_pos']:.2e}",
    )
