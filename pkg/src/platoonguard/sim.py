"""Deterministic platoon simulator with insider falsification attacks.

Simulates a string of vehicles on a straight highway under either a
constant-spacing (CVS) or constant-time-headway (CTH) longitudinal
controller.  One platoon member may broadcast falsified kinematics
(position, speed or acceleration; constant offset, gradual ramp, or a
physics-consistent combined alteration).  Every simulation is run twice
from identical initial conditions -- once clean, once attacked -- and the
per-step attack labels are obtained by comparing the two runs.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

FEATURE_NAMES = (
    "distance_m",
    "relative_speed_mps",
    "acceleration_mps2",
    "controller_acceleration_mps2",
    "speed_mps",
    "pos_x_m",
    "pos_y_m",
)
N_FEATURES = len(FEATURE_NAMES)

CONTROLLERS = ("CVS", "CTH")
SCENARIOS = ("steady", "join", "exit")
ATTACK_MODES = ("constant", "gradual", "combined")
ATTACK_FIELDS = ("position", "speed", "acceleration")
ATTACKER_POSITIONS = (0, 2)

U_MIN = -8.0
U_MAX = 3.0
LANE_OFFSET_M = 3.5
LATERAL_BLEND_S = 4.0
# Time the slot behind vehicle 2 is given to open before the joiner merges.
JOIN_OPEN_S = 12.0
EXIT_VEHICLE = 3

# Leader speed jitter: bounded sinusoid with a decaying envelope so benign
# runs are not degenerate constants yet still reach a clean steady state.
JITTER_AMPLITUDE = 0.02
JITTER_DECAY_S = 10.0

DEFAULT_LABEL_DELTA = 1e-3


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Static description of one platoon run."""

    controller: str = "CVS"
    spacing_m: float = 5.0
    headway_s: float = 0.5
    leader_speed_mps: float = 80.0 / 3.6
    scenario: str = "steady"
    n_vehicles: int = 6
    dt_s: float = 0.1
    duration_s: float = 118.9
    vehicle_length_m: float = 4.0
    actuation_lag_s: float = 0.5
    maneuver_time_s: float = 30.0
    seed: int = 0
    k_p: float = 0.5
    k_v: float = 1.0
    k_a: float = 0.8

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.dt_s <= 0:
            raise ValueError("dt_s must be positive")
        if self.spacing_m <= 0 or self.headway_s <= 0:
            raise ValueError("spacing_m and headway_s must be positive")
        if self.n_vehicles not in (6, 7):
            raise ValueError("n_vehicles must be 6 or 7")
        if self.scenario == "join" and self.n_vehicles != 7:
            raise ValueError("join scenario requires n_vehicles = 7")
        if self.scenario != "join" and self.n_vehicles != 6:
            raise ValueError(f"{self.scenario} scenario requires n_vehicles = 6")
        steps = self.duration_s / self.dt_s
        if abs(steps - round(steps)) > 1e-6:
            raise ValueError("duration_s must be an integer multiple of dt_s")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.dt_s))

    def gap_target(self, speed: float) -> float:
        """Desired bumper-to-bumper gap for a follower at the given speed."""
        if self.controller == "CVS":
            return self.spacing_m
        return self.vehicle_length_m + self.headway_s * speed


@dataclass(frozen=True)
class AttackSpec:
    """One falsification attack: mode x kinematic field x magnitude.

    ``magnitude`` is an absolute offset for constant attacks (m, m/s or
    m/s^2) and a per-second ramp rate for gradual and combined attacks.
    For combined attacks the named field carries the ramp and the other
    two kinematic fields receive the analytically consistent offsets.
    """

    mode: str
    field: str
    magnitude: float
    onset_s: float = 30.0
    attacker_index: int = 2

    def __post_init__(self):
        if self.mode not in ATTACK_MODES:
            raise ValueError(f"unknown attack mode {self.mode!r}")
        if self.field not in ATTACK_FIELDS:
            raise ValueError(f"unknown attack field {self.field!r}")
        if self.attacker_index not in ATTACKER_POSITIONS:
            raise ValueError("attacker_index must be 0 or 2")
        if self.onset_s < 0:
            raise ValueError("onset_s must be non-negative")


@dataclass
class VehicleState:
    pos_x: float = 0.0
    pos_y: float = 0.0
    speed: float = 0.0
    accel: float = 0.0
    cmd_accel: float = 0.0
    present: bool = True


@dataclass
class PlatoonRun:
    """Per-vehicle time series of the seven mobility features.

    features has shape [n_vehicles, T, 7] in the order of FEATURE_NAMES;
    mask and labels have shape [n_vehicles, T].
    """

    features: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    config: SimConfig
    attack: AttackSpec | None = None
    run_id: str = ""
    collision: bool = False


def attack_offsets(spec: AttackSpec, t: float) -> tuple[float, float, float]:
    """Broadcast offsets (position, speed, acceleration) at time t."""
    tau = t - spec.onset_s
    if tau < 0:
        return (0.0, 0.0, 0.0)
    m = spec.magnitude
    if spec.mode == "constant":
        off = {"position": 0.0, "speed": 0.0, "acceleration": 0.0}
        off[spec.field] = m
        return (off["position"], off["speed"], off["acceleration"])
    if spec.mode == "gradual":
        off = {"position": 0.0, "speed": 0.0, "acceleration": 0.0}
        off[spec.field] = m * tau
        return (off["position"], off["speed"], off["acceleration"])
    # Combined: the named field ramps at rate m; the other two follow the
    # exact kinematic integrals/derivatives of that ramp.
    if spec.field == "position":
        return (m * tau, m, 0.0)
    if spec.field == "speed":
        return (m * tau * tau / 2.0, m * tau, m)
    # acceleration ramp
    return (m * tau**3 / 6.0, m * tau * tau / 2.0, m * tau)


def falsify(true_value: float, spec: AttackSpec, t: float) -> float:
    """Falsified broadcast value of the attacked field at time t."""
    dp, dv, da = attack_offsets(spec, t)
    return true_value + {"position": dp, "speed": dv, "acceleration": da}[spec.field]


@dataclass(frozen=True)
class Cam:
    """Broadcast kinematic state (one cooperative awareness message)."""

    pos_x: float
    speed: float
    accel: float


def controller_accel(
    controller: str,
    self_state: VehicleState,
    pred_cam: Cam | None,
    leader_cam: Cam | None,
    config: SimConfig,
    target_speed: float | None = None,
    gap_target_override: float | None = None,
) -> float:
    """Commanded acceleration for one vehicle.

    Followers run a linear law on the predecessor broadcast:
        u = k_a * a_pred + k_v * (v_pred - v_self) + k_p * (gap - d_target)
    with d_target = spacing (CVS) or L + h * v_self (CTH).  The platoon
    leader (pred_cam is None) tracks target_speed instead.  The result is
    clamped to [U_MIN, U_MAX].
    """
    if not self_state.present:
        raise SimulationError("controller invoked for an absent vehicle")
    if pred_cam is None:
        v_target = config.leader_speed_mps if target_speed is None else target_speed
        u = config.k_v * (v_target - self_state.speed)
    else:
        gap = pred_cam.pos_x - self_state.pos_x - config.vehicle_length_m
        if controller == "CVS":
            d_target = config.spacing_m
        elif controller == "CTH":
            d_target = config.vehicle_length_m + config.headway_s * self_state.speed
        else:
            raise ValueError(f"unknown controller {controller!r}")
        if gap_target_override is not None:
            d_target = gap_target_override
        u = (
            config.k_a * pred_cam.accel
            + config.k_v * (pred_cam.speed - self_state.speed)
            + config.k_p * (gap - d_target)
        )
    return min(U_MAX, max(U_MIN, u))


def step_dynamics(state: VehicleState, u: float, dt: float, tau: float) -> VehicleState:
    """First-order actuation lag followed by Euler integration."""
    accel = state.accel + (dt / tau) * (u - state.accel)
    speed = max(0.0, state.speed + dt * accel)
    pos_x = state.pos_x + dt * speed
    return VehicleState(
        pos_x=pos_x,
        pos_y=state.pos_y,
        speed=speed,
        accel=accel,
        cmd_accel=u,
        present=state.present,
    )


def leader_speed_profile(config: SimConfig) -> tuple[float, float]:
    """Seed-derived (period, phase) of the leader's bounded speed jitter."""
    rng = np.random.default_rng(config.seed)
    period = float(rng.uniform(20.0, 40.0))
    phase = float(rng.uniform(0.0, 2.0 * math.pi))
    return period, phase


def leader_target_speed(config: SimConfig, period: float, phase: float, t: float) -> float:
    v0 = config.leader_speed_mps
    envelope = math.exp(-t / JITTER_DECAY_S)
    return v0 * (1.0 + JITTER_AMPLITUDE * math.sin(2.0 * math.pi * t / period + phase) * envelope)


def simulate(config: SimConfig, attack: AttackSpec | None = None, run_id: str = "") -> PlatoonRun:
    """Run one platoon simulation and record the feature/mask arrays.

    When an attack is given, the attacker's broadcasts are falsified from
    the onset and every consumer of those broadcasts reacts to the false
    values; the attacker itself keeps driving on its true state.  Labels
    are left all-zero here -- label_run fills them from a truth/attacked
    pair.
    """
    n = config.n_vehicles
    T = config.n_steps
    dt = config.dt_s
    L = config.vehicle_length_m
    period, phase = leader_speed_profile(config)
    if attack is not None and attack.onset_s >= config.duration_s:
        raise ValueError("attack onset_s must fall inside the run duration")

    v0 = config.leader_speed_mps
    d0 = config.gap_target(v0)

    states: list[VehicleState] = []
    pos = 0.0
    for i in range(6):
        states.append(VehicleState(pos_x=pos, speed=v0, present=True))
        pos -= L + d0
    if n == 7:
        states.append(VehicleState(pos_x=0.0, pos_y=LANE_OFFSET_M, speed=0.0, present=False))

    features = np.zeros((n, T, N_FEATURES), dtype=np.float64)
    mask = np.zeros((n, T), dtype=np.uint8)
    labels = np.zeros((n, T), dtype=np.uint8)
    collision = False

    tm = config.maneuver_time_s
    join_merge_t = tm + JOIN_OPEN_S + LATERAL_BLEND_S

    exit_hold_speed = None

    for step in range(T):
        t = step * dt

        # Scenario bookkeeping: platoon ordering, joiner spawn, exits.
        if config.scenario == "join":
            if not states[6].present and t >= tm:
                slot = states[2].pos_x - L - config.gap_target(states[2].speed)
                states[6] = VehicleState(
                    pos_x=slot,
                    pos_y=LANE_OFFSET_M,
                    speed=states[2].speed,
                    present=True,
                )
            if t >= join_merge_t:
                chain = [0, 1, 2, 6, 3, 4, 5]
            else:
                chain = [0, 1, 2, 3, 4, 5]
            free = []
        elif config.scenario == "exit" and t >= tm:
            chain = [0, 1, 2, 4, 5]
            free = [EXIT_VEHICLE]
            if exit_hold_speed is None:
                exit_hold_speed = states[EXIT_VEHICLE].speed
        else:
            chain = list(range(6))
            free = []

        pred_of: dict[int, int | None] = {}
        for idx, vid in enumerate(chain):
            pred_of[vid] = chain[idx - 1] if idx > 0 else None
        for vid in free:
            pred_of[vid] = None
        if config.scenario == "join" and states[6].present and 6 not in pred_of:
            pred_of[6] = 2  # approaching in the adjacent lane, tracking its slot

        # Broadcasts for this step (the attacker falsifies its own).
        cams: dict[int, Cam] = {}
        for vid in pred_of:
            st = states[vid]
            cam = Cam(st.pos_x, st.speed, st.accel)
            if attack is not None and vid == attack.attacker_index:
                dp, dv, da = attack_offsets(attack, t)
                cam = Cam(cam.pos_x + dp, cam.speed + dv, cam.accel + da)
            cams[vid] = cam

        # Controls.
        controls: dict[int, float] = {}
        for vid in pred_of:
            st = states[vid]
            pred = pred_of[vid]
            pred_cam = cams[pred] if pred is not None else None
            target_speed = None
            gap_override = None
            if pred is None:
                if vid in free:
                    target_speed = exit_hold_speed
                else:
                    target_speed = leader_target_speed(config, period, phase, t)
            if (
                config.scenario == "join"
                and vid == 3
                and tm <= t < join_merge_t
            ):
                # Open the slot for the joiner: fall back to double spacing.
                gap_override = 2.0 * config.gap_target(st.speed) + L
            leader_cam = cams[chain[0]] if chain else None
            controls[vid] = controller_accel(
                config.controller, st, pred_cam, leader_cam, config,
                target_speed=target_speed, gap_target_override=gap_override,
            )

        # Record features (state at time t, controller output of this step).
        for vid in pred_of:
            st = states[vid]
            pred = pred_of[vid]
            if pred is not None:
                pcam = cams[pred]
                dist = pcam.pos_x - st.pos_x - L
                rel_speed = pcam.speed - st.speed
            else:
                dist = 0.0
                rel_speed = 0.0
            own = cams[vid]  # the attacker's own trace records its broadcast
            features[vid, step, 0] = dist
            features[vid, step, 1] = rel_speed
            features[vid, step, 2] = own.accel
            features[vid, step, 3] = controls[vid]
            features[vid, step, 4] = own.speed
            features[vid, step, 5] = own.pos_x
            features[vid, step, 6] = st.pos_y
            mask[vid, step] = 1

        # Integrate.
        new_states = list(states)
        for vid in pred_of:
            new_states[vid] = step_dynamics(states[vid], controls[vid], dt, config.actuation_lag_s)
        # Lateral maneuvers (kinematic blend, not controller-driven).
        if config.scenario == "join" and states[6].present:
            blend_start = tm + JOIN_OPEN_S
            if t < blend_start:
                y = LANE_OFFSET_M
            elif t < blend_start + LATERAL_BLEND_S:
                y = LANE_OFFSET_M * (1.0 - (t + dt - blend_start) / LATERAL_BLEND_S)
                y = max(0.0, y)
            else:
                y = 0.0
            new_states[6] = replace(new_states[6], pos_y=y)
        if config.scenario == "exit" and t >= tm:
            frac = min(1.0, (t + dt - tm) / LATERAL_BLEND_S)
            new_states[EXIT_VEHICLE] = replace(new_states[EXIT_VEHICLE], pos_y=LANE_OFFSET_M * frac)

        # Collision clamp along the in-lane chain, front to back.
        for idx in range(1, len(chain)):
            vid = chain[idx]
            pred = chain[idx - 1]
            if abs(new_states[vid].pos_y - new_states[pred].pos_y) > LANE_OFFSET_M / 2.0:
                continue
            gap = new_states[pred].pos_x - new_states[vid].pos_x - L
            if gap <= 0.0:
                collision = True
                new_states[vid] = replace(
                    new_states[vid],
                    pos_x=new_states[pred].pos_x - L,
                    speed=new_states[pred].speed,
                )
        states = new_states

    return PlatoonRun(
        features=features,
        mask=mask,
        labels=labels,
        config=config,
        attack=attack,
        run_id=run_id,
        collision=collision,
    )


def label_run(
    truth: PlatoonRun,
    attacked: PlatoonRun,
    delta: np.ndarray | float = DEFAULT_LABEL_DELTA,
) -> np.ndarray:
    """Per-step labels: 1 where any feature deviates from the truth run."""
    if truth.features.shape != attacked.features.shape:
        raise ValueError(
            f"run shapes differ: {truth.features.shape} vs {attacked.features.shape}"
        )
    if not np.array_equal(truth.mask, attacked.mask):
        raise ValueError("truth and attacked runs have different masks")
    delta = np.broadcast_to(np.asarray(delta, dtype=np.float64), (N_FEATURES,))
    diff = np.abs(attacked.features - truth.features) > delta
    labels = (diff.any(axis=2) & (attacked.mask == 1)).astype(np.uint8)
    return labels


def simulate_pair(
    config: SimConfig, attack: AttackSpec | None, run_id: str = ""
) -> tuple[PlatoonRun, PlatoonRun]:
    """Simulate the same seed with and without the attack, then label."""
    truth = simulate(config, None, run_id=run_id + "-truth" if run_id else "")
    if attack is None:
        attacked = simulate(config, None, run_id=run_id)
    else:
        attacked = simulate(config, attack, run_id=run_id)
    attacked.labels = label_run(truth, attacked)
    return truth, attacked


# ---------------------------------------------------------------------------
# Suite generation
# ---------------------------------------------------------------------------

DEFAULT_MAGNITUDES = {
    ("constant", "position"): 3.0,
    ("constant", "speed"): 2.0,
    ("constant", "acceleration"): 1.0,
    ("gradual", "position"): 0.4,
    ("gradual", "speed"): 0.15,
    ("gradual", "acceleration"): 0.04,
    ("combined", "position"): 0.4,
    ("combined", "speed"): 0.15,
    ("combined", "acceleration"): 0.04,
}


@dataclass(frozen=True)
class SuiteConfig:
    controllers: tuple[str, ...] = ("CVS", "CTH")
    speeds_kmph: tuple[float, ...] = (50.0, 80.0, 100.0, 150.0)
    scenarios: tuple[str, ...] = ("steady", "join", "exit")
    attacker_positions: tuple[int, ...] = (0, 2)
    seeds: tuple[int, ...] = (0,)
    spacing_m: float = 5.0
    headway_s: float = 0.5
    onset_s: float = 30.0
    magnitudes: dict[tuple[str, str], float] = field(default_factory=lambda: dict(DEFAULT_MAGNITUDES))

    def __post_init__(self):
        if not (self.controllers and self.speeds_kmph and self.scenarios
                and self.attacker_positions and self.seeds):
            raise ValueError("suite grid must not have an empty dimension")


def _run_id(config: SimConfig, attack: AttackSpec | None) -> str:
    base = (
        f"{config.controller.lower()}-{config.leader_speed_mps * 3.6:g}kmph-"
        f"{config.scenario}-seed{config.seed}"
    )
    if attack is None:
        return base + "-benign"
    return base + f"-{attack.mode}-{attack.field}-a{attack.attacker_index}"


def generate_suite(suite: SuiteConfig) -> list[tuple[str, SimConfig, AttackSpec | None]]:
    """Full deterministic cross product of the experiment grid.

    One benign entry per (controller, speed, scenario, seed) plus one entry
    per attack mode x field x attacker position.
    """
    entries: list[tuple[str, SimConfig, AttackSpec | None]] = []
    for controller in suite.controllers:
        for speed in suite.speeds_kmph:
            for scenario in suite.scenarios:
                for seed in suite.seeds:
                    cfg = SimConfig(
                        controller=controller,
                        spacing_m=suite.spacing_m,
                        headway_s=suite.headway_s,
                        leader_speed_mps=speed / 3.6,
                        scenario=scenario,
                        n_vehicles=7 if scenario == "join" else 6,
                        seed=seed,
                    )
                    entries.append((_run_id(cfg, None), cfg, None))
                    for mode in ATTACK_MODES:
                        for fld in ATTACK_FIELDS:
                            for pos in suite.attacker_positions:
                                atk = AttackSpec(
                                    mode=mode,
                                    field=fld,
                                    magnitude=suite.magnitudes[(mode, fld)],
                                    onset_s=suite.onset_s,
                                    attacker_index=pos,
                                )
                                entries.append((_run_id(cfg, atk), cfg, atk))
    ids = [e[0] for e in entries]
    if len(set(ids)) != len(ids):
        raise SimulationError("duplicate run_id in suite grid")
    return entries


# ---------------------------------------------------------------------------
# Trace serialization
# ---------------------------------------------------------------------------

TRACE_HEADER = (
    "run_id", "scenario", "controller", "seed",
    "attack_mode", "attack_field", "attacker_index",
    "vehicle_id", "t_index", "time_s",
    "distance_m", "relative_speed_mps", "acceleration_mps2",
    "controller_acceleration_mps2", "speed_mps", "pos_x_m", "pos_y_m",
    "mask", "label", "collision_flag",
)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_trace_csv(run: PlatoonRun, path: str) -> None:
    cfg = run.config
    atk = run.attack
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for v in range(cfg.n_vehicles):
            for t in range(cfg.n_steps):
                row = [
                    run.run_id, cfg.scenario, cfg.controller, cfg.seed,
                    atk.mode if atk else "none",
                    atk.field if atk else "none",
                    atk.attacker_index if atk else -1,
                    v, t, _fmt(t * cfg.dt_s),
                ]
                row.extend(_fmt(x) for x in run.features[v, t])
                row.extend([int(run.mask[v, t]), int(run.labels[v, t]), int(run.collision)])
                w.writerow(row)
    os.replace(tmp, path)


def read_trace_csv(path: str, config: SimConfig, attack: AttackSpec | None = None) -> PlatoonRun:
    """Load a trace written by write_trace_csv.

    The full SimConfig/AttackSpec are not recoverable from the CSV columns
    alone, so they are supplied from the suite manifest.
    """
    rows: list[list[str]] = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != TRACE_HEADER:
            raise ValueError(f"unexpected trace header in {path}")
        rows = list(r)
    n, T = config.n_vehicles, config.n_steps
    if len(rows) != n * T:
        raise ValueError(f"{path}: expected {n * T} rows, found {len(rows)}")
    features = np.zeros((n, T, N_FEATURES), dtype=np.float64)
    mask = np.zeros((n, T), dtype=np.uint8)
    labels = np.zeros((n, T), dtype=np.uint8)
    collision = False
    run_id = rows[0][0]
    for row in rows:
        v = int(row[7])
        t = int(row[8])
        features[v, t] = [float(x) for x in row[10:17]]
        mask[v, t] = int(row[17])
        labels[v, t] = int(row[18])
        collision = collision or row[19] == "1"
    return PlatoonRun(
        features=features, mask=mask, labels=labels,
        config=config, attack=attack, run_id=run_id, collision=collision,
    )


def config_to_dict(cfg: SimConfig) -> dict:
    return {
        "controller": cfg.controller,
        "spacing_m": cfg.spacing_m,
        "headway_s": cfg.headway_s,
        "leader_speed_mps": cfg.leader_speed_mps,
        "scenario": cfg.scenario,
        "n_vehicles": cfg.n_vehicles,
        "dt_s": cfg.dt_s,
        "duration_s": cfg.duration_s,
        "vehicle_length_m": cfg.vehicle_length_m,
        "actuation_lag_s": cfg.actuation_lag_s,
        "maneuver_time_s": cfg.maneuver_time_s,
        "seed": cfg.seed,
        "k_p": cfg.k_p,
        "k_v": cfg.k_v,
        "k_a": cfg.k_a,
    }


def attack_to_dict(atk: AttackSpec | None) -> dict | None:
    if atk is None:
        return None
    return {
        "mode": atk.mode,
        "field": atk.field,
        "magnitude": atk.magnitude,
        "onset_s": atk.onset_s,
        "attacker_index": atk.attacker_index,
    }


def write_manifest(entries, out_dir: str, collisions: dict[str, bool] | None = None) -> str:
    manifest = {
        "format_version": 1,
        "runs": [
            {
                "run_id": rid,
                "file": rid + ".csv",
                "config": config_to_dict(cfg),
                "attack": attack_to_dict(atk),
                "collision": bool(collisions.get(rid, False)) if collisions else False,
            }
            for rid, cfg, atk in entries
        ],
    }
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def load_suite(trace_dir: str) -> list[PlatoonRun]:
    """Load every run listed in a suite manifest."""
    with open(os.path.join(trace_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != 1:
        raise ValueError("unknown manifest format_version")
    runs = []
    for entry in manifest["runs"]:
        cfg = SimConfig(**entry["config"])
        atk = AttackSpec(**entry["attack"]) if entry["attack"] else None
        run = read_trace_csv(os.path.join(trace_dir, entry["file"]), cfg, atk)
        run.collision = entry.get("collision", run.collision)
        runs.append(run)
    return runs
