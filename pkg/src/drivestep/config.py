"""Scenario configuration files (TOML) for the scenario-runner CLI.

A config file describes one scenario plus estimator settings and optional
embedded pass/fail thresholds; see the bundled files under ``scenarios/`` and
the README for the full grammar.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .estimator import NoiseParams
from .gait import GaitSchedule
from .kinematics import LegGeometry, RobotModel
from .sim import NoiseSpec, Scenario, SlipEvent, Terrain
from .trust import TrustParams


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


@dataclass
class CheckEntry:
    """One embedded threshold: metric bounded below and/or above."""

    metric: str
    min: float | None = None
    max: float | None = None
    target: str = "a"  # compare checks: "a", "b" or "ratio" (b/a)


@dataclass
class RunSetup:
    """Everything needed to execute a scenario run."""

    scenario: Scenario
    model: RobotModel
    trust: TrustParams
    trust_enabled: bool
    filter_noise: NoiseParams
    wheel_aware: bool
    convergence_skip: float
    checks: list[CheckEntry] = field(default_factory=list)
    compare_variant: str = "baseline"
    compare_checks: list[CheckEntry] = field(default_factory=list)
    raw: dict = field(default_factory=dict)


def _require(table: dict, allowed: set[str], where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {', '.join(sorted(unknown))}")


def _profile(entries, dim: int, where: str):
    try:
        out = []
        for e in entries:
            t0 = float(e[0])
            val = e[1]
            if dim == 1:
                out.append((t0, float(val)))
            else:
                vec = tuple(float(v) for v in val)
                if len(vec) != dim:
                    raise ValueError(f"expected a {dim}-vector, got {len(vec)} values")
                out.append((t0, vec))
        if not out:
            raise ValueError("empty profile")
        return tuple(out)
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"[{where}] bad profile entry: {exc}") from exc


def _checks(entries, where: str) -> list[CheckEntry]:
    out = []
    for e in entries:
        _require(e, {"metric", "min", "max", "target"}, where)
        if "metric" not in e:
            raise ConfigError(f"[{where}] check entry without 'metric'")
        out.append(
            CheckEntry(
                metric=str(e["metric"]),
                min=float(e["min"]) if "min" in e else None,
                max=float(e["max"]) if "max" in e else None,
                target=str(e.get("target", "a")),
            )
        )
    return out


def setup_from_dict(data: dict) -> RunSetup:
    """Build a RunSetup from a parsed config mapping."""
    _require(
        data,
        {"scenario", "gait", "commands", "terrain", "noise", "geometry",
         "trust", "filter_noise", "estimator", "check", "compare"},
        "top level",
    )
    try:
        sc = dict(data.get("scenario", {}))
        _require(sc, {"duration", "dt", "seed", "body_height", "swing_height"}, "scenario")

        g = dict(data.get("gait", {}))
        _require(g, {"name", "period", "duty", "offsets"}, "gait")
        name = g.pop("name", "stand")
        if "offsets" in g:
            g["offsets"] = tuple(float(o) for o in g["offsets"])
        gait = GaitSchedule.named(name, **g)

        cmds = dict(data.get("commands", {}))
        _require(cmds, {"v_drive", "v_step", "yaw_rate"}, "commands")
        v_drive = _profile(cmds.get("v_drive", [[0.0, [0.0, 0.0, 0.0]]]), 3, "commands.v_drive")
        v_step = _profile(cmds.get("v_step", [[0.0, [0.0, 0.0, 0.0]]]), 3, "commands.v_step")
        yaw_rate = _profile(cmds.get("yaw_rate", [[0.0, 0.0]]), 1, "commands.yaw_rate")

        terr = dict(data.get("terrain", {}))
        _require(terr, {"steps"}, "terrain")
        terrain = Terrain(steps=tuple(tuple(float(v) for v in s) for s in terr.get("steps", [])))

        nz = dict(data.get("noise", {}))
        _require(
            nz,
            {"sigma_accel", "sigma_gyro", "sigma_joint_pos", "sigma_joint_vel",
             "wheel_encoder_ppr", "slip_events"},
            "noise",
        )
        slip = tuple(
            SlipEvent(
                t_start=float(e[0]), t_end=float(e[1]), leg=int(e[2]),
                velocity=tuple(float(v) for v in e[3]),
            )
            for e in nz.pop("slip_events", [])
        )
        ppr = nz.pop("wheel_encoder_ppr", None)
        noise = NoiseSpec(
            **{k: float(v) for k, v in nz.items()},
            wheel_encoder_ppr=float(ppr) if ppr is not None else None,
            slip_events=slip,
        )

        geo = dict(data.get("geometry", {}))
        _require(
            geo,
            {"L1", "L2", "L3", "a_end", "b_end", "half_length", "half_width"},
            "geometry",
        )
        half_length = float(geo.pop("half_length", 0.19))
        half_width = float(geo.pop("half_width", 0.049))
        geom = LegGeometry(**{k: float(v) for k, v in geo.items()})
        model = RobotModel.default(geometry=geom, half_length=half_length, half_width=half_width)

        tr = dict(data.get("trust", {}))
        _require(tr, {"W", "k_plus", "k_minus", "kappa", "enabled"}, "trust")
        trust_enabled = bool(tr.pop("enabled", True))
        trust = TrustParams(**{k: float(v) for k, v in tr.items()})

        fn = dict(data.get("filter_noise", {}))
        _require(
            fn,
            {"q_p", "q_pdot", "q_dp", "q_dpdot", "q_pcp", "r_pcp", "r_pdotk", "r_pdotw"},
            "filter_noise",
        )
        filter_noise = NoiseParams(**{k: float(v) for k, v in fn.items()})

        es = dict(data.get("estimator", {}))
        _require(es, {"mode", "convergence_skip"}, "estimator")
        mode = str(es.get("mode", "wheel_aware"))
        if mode not in ("wheel_aware", "baseline"):
            raise ConfigError(f"[estimator] unknown mode {mode!r}")
        convergence_skip = float(es.get("convergence_skip", 0.5))

        comp = dict(data.get("compare", {}))
        _require(comp, {"variant", "check"}, "compare")
        variant = str(comp.get("variant", "baseline"))
        if variant not in ("baseline", "trust_off"):
            raise ConfigError(f"[compare] unknown variant {variant!r}")

        scenario = Scenario(
            duration=float(sc.get("duration", 10.0)),
            dt=float(sc.get("dt", 1e-3)),
            gait=gait,
            v_drive=v_drive,
            v_step=v_step,
            yaw_rate=yaw_rate,
            terrain=terrain,
            noise=noise,
            seed=int(sc.get("seed", 0)),
            body_height=float(sc.get("body_height", 0.30)),
            swing_height=float(sc.get("swing_height", 0.05)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    return RunSetup(
        scenario=scenario,
        model=model,
        trust=trust,
        trust_enabled=trust_enabled,
        filter_noise=filter_noise,
        wheel_aware=(mode == "wheel_aware"),
        convergence_skip=convergence_skip,
        checks=_checks(data.get("check", []), "check"),
        compare_variant=variant,
        compare_checks=_checks(comp.get("check", []), "compare.check"),
        raw=data,
    )


def load_config(path: str | Path) -> RunSetup:
    """Parse a scenario config file; raises ConfigError with diagnostics."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return setup_from_dict(data)


def set_by_path(data: dict, path: str, value) -> None:
    """Set a dotted config key (e.g. 'trust.W') in a raw config mapping."""
    parts = path.split(".")
    node = data
    for p in parts[:-1]:
        if p not in node:
            node[p] = {}
        elif not isinstance(node[p], dict):
            raise ConfigError(f"{p!r} in {path!r} is not a config section")
        node = node[p]
    node[parts[-1]] = value
