"""Discrete-time warehouse simulation: workers, robot, battery, obstacles.

Workers follow waypoint routes kinematically (no social forces): each cycles
between sampling a goal from the active slot's occupancy distribution, walking
the shortest waypoint route to it, and dwelling there. The robot follows its
planned waypoint sequence at a commanded speed, stalls when a person is inside
its stall radius, and slows near unexpected obstacles. Battery evolves by the
three-regime drain/charge model; every step emits one time-series log row.

Per-waypoint person counts assign each worker to its nearest waypoint centre,
so counts always partition the worker population.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .world import ScenarioSchedule, TimeSlot, WaypointGraph

PROXEMIC_BANDS = (
    ("intimate", 0.5),
    ("personal", 1.2),
    ("social", 3.6),
    ("public", 7.6),
)


@dataclass(frozen=True)
class BatteryParams:
    """Drain/charge constants. Defaults reproduce a 5 h idle / ~4 h moving life.

    k_s: static drain, %/s; k_d: motion drain, %/m; k_o: obstacle multiplier;
    k_c: charging rate, %/s; dt: simulation step, s.
    """

    k_s: float = 100.0 / (5 * 3600)
    k_d: float = 0.0027
    k_o: float = 3.0
    k_c: float = 100.0 / 3600
    dt: float = 0.1

    def __post_init__(self):
        if min(self.k_s, self.k_d, self.k_c, self.dt) <= 0:
            raise ValueError("k_s, k_d, k_c and dt must all be positive")
        if self.k_o < 1:
            raise ValueError(f"k_o must be >= 1, got {self.k_o}")


@dataclass(frozen=True)
class SimParams:
    battery: BatteryParams = field(default_factory=BatteryParams)
    v_max: float = 0.5  # m/s, solves the 4 h continuous-drive derivation
    worker_speed: float = 1.2
    worker_noise_sigma: float = 0.02  # m per step, clipped at 3 sigma
    stall_radius: float = 0.6
    collision_radius: float = 0.3
    obstacle_probability: float = 0.25
    obstacle_slow_radius: float = 1.5
    obstacle_speed_factor: float = 0.5
    dwell_range_s: tuple[float, float] = (40.0, 120.0)
    deadline_s: float = 45.0
    n_workers: int = 20


def battery_delta(v: float, charging: int, obstacle: int, params: BatteryParams) -> float:
    """Battery change (%) over one step for speed v and context flags."""
    if v < 0:
        raise ValueError(f"speed must be >= 0, got {v}")
    if charging:
        return params.dt * params.k_c
    drain = params.dt * (params.k_s + params.k_d * v)
    return -drain * params.k_o if obstacle else -drain


def apply_battery(b_prev: float, delta: float) -> float:
    """Next battery level, clamped to [0, 100]."""
    if not 0.0 <= b_prev <= 100.0:
        raise ValueError(f"battery out of range: {b_prev}")
    return min(100.0, max(0.0, b_prev + delta))


def waypoint_density(count: int, radius: float) -> float:
    """People per square metre inside a circular waypoint region."""
    if radius <= 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    return count / (math.pi * radius * radius)


def classify_proxemics(distance: float) -> str:
    """Hall zone for a robot-person distance (half-open bands, lower-inclusive)."""
    if distance < 0:
        raise ValueError(f"distance must be >= 0, got {distance}")
    for name, upper in PROXEMIC_BANDS:
        if distance < upper:
            return name
    return "beyond"


def detect_collision(robot_pos, person_pos, circumscribed_radius: float) -> bool:
    """True iff the person is strictly inside the robot's circumscribed circle."""
    if circumscribed_radius <= 0:
        raise ValueError("radius must be > 0")
    dx = robot_pos[0] - person_pos[0]
    dy = robot_pos[1] - person_pos[1]
    return math.hypot(dx, dy) < circumscribed_radius


class CollisionCounter:
    """Counts one event per person per entry into the collision circle."""

    def __init__(self, n_people: int, radius: float):
        self.radius = radius
        self._inside = np.zeros(n_people, dtype=bool)
        self.total = 0

    def update(self, distances: np.ndarray) -> int:
        inside = distances < self.radius
        entries = int(np.count_nonzero(inside & ~self._inside))
        self._inside = inside
        self.total += entries
        return entries


def sample_goal(slot: TimeSlot, rng: np.random.Generator) -> str:
    """Inverse-CDF draw over the slot's occupancy distribution (declared order)."""
    ids = list(slot.occupancy.keys())
    cum = np.cumsum([slot.occupancy[w] for w in ids])
    u = rng.uniform(0.0, 1.0)
    return ids[min(int(np.searchsorted(cum, u, side="left")), len(ids) - 1)]


def rng_for(*key: int) -> np.random.Generator:
    """Deterministic generator keyed by a tuple of integers."""
    return np.random.default_rng(np.random.SeedSequence(list(key)))


class WorkerCrowd:
    """Autonomous worker population for one slot.

    Goal and dwell draws come from one private stream per worker, and motion
    noise from a shared stream consumed in a fixed order, so trajectories
    depend only on (seed key, slot) and never on what the robot does.
    """

    def __init__(self, graph: WaypointGraph, slot: TimeSlot, params: SimParams, seed_key: tuple[int, ...]):
        self.graph = graph
        self.slot = slot
        self.params = params
        self.n = params.n_workers if slot.occupancy else 0
        self._goal_rngs = [rng_for(*seed_key, 101, i) for i in range(self.n)]
        self._noise_rng = rng_for(*seed_key, 202)
        self._route_cache: dict[tuple[str, str], tuple[str, ...]] = {}
        self.positions = np.zeros((self.n, 2))
        self._moving = np.zeros(self.n, dtype=bool)
        self._dwell_left = np.zeros(self.n)
        self._segments: list[list[np.ndarray]] = [[] for _ in range(self.n)]
        self._at_wid: list[str] = []
        self._goal_wid: list[str] = []
        for i in range(self.n):
            rng = self._goal_rngs[i]
            wid = sample_goal(slot, rng)
            wp = graph.waypoints[wid]
            self.positions[i] = np.array(wp.position) + self._dwell_offset(wp.radius, rng)
            self._at_wid.append(wid)
            self._goal_wid.append(wid)
            self._dwell_left[i] = rng.uniform(*params.dwell_range_s)

    @staticmethod
    def _dwell_offset(radius: float, rng: np.random.Generator) -> np.ndarray:
        # uniform over a disk inside the waypoint region, so crowds spread out
        r = 0.8 * radius * math.sqrt(rng.uniform())
        theta = rng.uniform(0.0, 2.0 * math.pi)
        return np.array([r * math.cos(theta), r * math.sin(theta)])

    def _route(self, a: str, b: str) -> tuple[str, ...]:
        key = (a, b)
        if key not in self._route_cache:
            self._route_cache[key] = self.graph.shortest_route(a, b)
        return self._route_cache[key]

    def _start_next_task(self, i: int):
        rng = self._goal_rngs[i]
        goal = sample_goal(self.slot, rng)
        self._goal_wid[i] = goal
        route = self._route(self._at_wid[i], goal)
        g = self.graph.waypoints
        self._segments[i] = [np.array(g[w].position, dtype=float) for w in route[1:]]
        final = np.array(g[goal].position) + self._dwell_offset(g[goal].radius, rng)
        self._segments[i].append(final)
        self._moving[i] = True

    def step(self, dt: float):
        if self.n == 0:
            return
        sigma = self.params.worker_noise_sigma
        noise = np.clip(self._noise_rng.normal(0.0, sigma, (self.n, 2)), -3 * sigma, 3 * sigma)
        step_len = self.params.worker_speed * dt
        for i in range(self.n):
            if not self._moving[i]:
                self._dwell_left[i] -= dt
                if self._dwell_left[i] <= 0:
                    self._start_next_task(i)
                continue
            budget = step_len
            while budget > 0 and self._segments[i]:
                target = self._segments[i][0]
                delta = target - self.positions[i]
                dist = float(np.hypot(delta[0], delta[1]))
                if dist <= budget:
                    self.positions[i] = target
                    budget -= dist
                    self._segments[i].pop(0)
                else:
                    self.positions[i] = self.positions[i] + delta * (budget / dist)
                    budget = 0.0
            if self._segments[i]:
                self.positions[i] = self.positions[i] + noise[i]
            else:
                self._moving[i] = False
                self._at_wid[i] = self._goal_wid[i]
                self._dwell_left[i] = self._goal_rngs[i].uniform(*self.params.dwell_range_s)

    def counts_by_waypoint(self, centres: np.ndarray) -> np.ndarray:
        """Nearest-centre assignment; always sums to the population."""
        counts = np.zeros(len(centres), dtype=int)
        if self.n:
            d2 = ((self.positions[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
            np.add.at(counts, np.argmin(d2, axis=1), 1)
        return counts

    def distances_to(self, point: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0)
        return np.hypot(*(self.positions - point).T)


LOG_FIXED_COLUMNS = ("t", "V", "B", "L", "C", "O", "S", "robot_W")


@dataclass
class TimeSeriesLog:
    """Per-step simulation record; serializes to CSV with 9 significant digits."""

    waypoint_ids: tuple[str, ...]
    sample_period_s: float
    rows: list[tuple] = field(default_factory=list)

    def append(self, t, v, b, l, c, o, s, robot_w, counts, min_person_dist):
        self.rows.append((t, v, b, l, c, o, s, robot_w, tuple(int(x) for x in counts), min_person_dist))

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        idx = LOG_FIXED_COLUMNS.index(name)
        return np.array([r[idx] for r in self.rows])

    def counts_matrix(self) -> np.ndarray:
        return np.array([r[8] for r in self.rows], dtype=int)

    def min_person_dist(self) -> np.ndarray:
        return np.array([r[9] for r in self.rows])

    def validate(self, tol: float = 1e-9):
        """Consistency check; pass a looser tol for logs read back from CSV,
        whose 9-significant-digit cells quantize B near 100 to ~1e-7."""
        t = self.column("t").astype(float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        b = self.column("B").astype(float)
        l = self.column("L").astype(float)
        # away from the clamp boundaries, the logged delta must equal the B difference
        interior = (b[1:] > 1e-9) & (b[1:] < 100.0 - 1e-9)
        if np.any(np.abs((b[1:] - b[:-1]) - l[1:])[interior] > tol):
            raise ValueError("L rows inconsistent with battery differences")

    def to_csv(self) -> str:
        buf = io.StringIO()
        header = list(LOG_FIXED_COLUMNS) + [f"cnt_{w}" for w in self.waypoint_ids] + ["min_person_dist"]
        buf.write(",".join(header) + "\n")
        for t, v, b, l, c, o, s, w, counts, md in self.rows:
            cells = [f"{t:.9g}", f"{v:.9g}", f"{b:.9g}", f"{l:.9g}", str(int(c)), str(int(o)), s, w]
            cells += [str(x) for x in counts]
            cells.append(f"{md:.9g}")
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, sample_period_s: float | None = None) -> "TimeSeriesLog":
        lines = text.strip().splitlines()
        header = lines[0].split(",")
        wids = tuple(h[4:] for h in header if h.startswith("cnt_"))
        ncnt = len(wids)
        rows = []
        for line in lines[1:]:
            cells = line.split(",")
            t, v, b, l = (float(x) for x in cells[:4])
            c, o = int(cells[4]), int(cells[5])
            s, w = cells[6], cells[7]
            counts = tuple(int(x) for x in cells[8 : 8 + ncnt])
            md = float(cells[8 + ncnt])
            rows.append((t, v, b, l, c, o, s, w, counts, md))
        if sample_period_s is None:
            sample_period_s = rows[1][0] - rows[0][0] if len(rows) > 1 else 1.0
        return cls(waypoint_ids=wids, sample_period_s=sample_period_s, rows=rows)


@dataclass
class Obstacle:
    arc_index: int  # segment index within the robot's current plan
    position: np.ndarray  # midpoint of the obstructed arc


class World:
    """One slot's mutable simulation state; single-threaded by design."""

    def __init__(self, graph: WaypointGraph, params: SimParams, crowd: WorkerCrowd,
                 slot: TimeSlot, battery: float = 100.0, start_wid: str | None = None,
                 log: TimeSeriesLog | None = None, t0: float = 0.0):
        self.graph = graph
        self.params = params
        self.crowd = crowd
        self.slot = slot
        self.t = t0
        self.battery = battery
        self.charging = False
        self.log = log
        self.waypoint_ids = tuple(sorted(graph.waypoints))
        self.centres = np.array([graph.waypoints[w].position for w in self.waypoint_ids])
        wid = start_wid or graph.charging_station
        self.robot_wid = wid
        self.robot_pos = np.array(graph.waypoints[wid].position, dtype=float)
        self.segments: list[np.ndarray] = []
        self.plan_route: tuple[str, ...] = (wid,)
        self.seg_idx = 0
        self.obstacle: Obstacle | None = None
        self.collisions = CollisionCounter(crowd.n, params.collision_radius)
        self.last_speed = 0.0

    def set_plan(self, route: tuple[str, ...], obstacle_arc: int | None = None):
        g = self.graph.waypoints
        self.plan_route = route
        self.segments = [np.array(g[w].position, dtype=float) for w in route[1:]]
        self.seg_idx = 0
        if obstacle_arc is not None and len(route) > 1:
            a = np.array(g[route[obstacle_arc]].position)
            b = np.array(g[route[obstacle_arc + 1]].position)
            self.obstacle = Obstacle(arc_index=obstacle_arc, position=(a + b) / 2.0)
        else:
            self.obstacle = None

    @property
    def at_goal(self) -> bool:
        return self.seg_idx >= len(self.segments)

    def _nearest_wid(self, pos: np.ndarray) -> str:
        d2 = ((self.centres - pos) ** 2).sum(axis=1)
        return self.waypoint_ids[int(np.argmin(d2))]

    def on_obstructed_arc(self) -> bool:
        return self.obstacle is not None and self.seg_idx == self.obstacle.arc_index and not self.at_goal

    def step(self, v_cmd: float) -> dict:
        """Advance one dt: workers, robot motion, battery, counters; returns the log row."""
        p = self.params
        dt = p.battery.dt
        self.crowd.step(dt)

        dists = self.crowd.distances_to(self.robot_pos)
        stalled = bool(dists.size) and bool(np.min(dists) < p.stall_radius)
        obstructed = self.on_obstructed_arc()
        speed = 0.0 if self.charging or stalled else v_cmd
        if speed > 0 and obstructed and self.obstacle is not None:
            if float(np.hypot(*(self.robot_pos - self.obstacle.position))) < p.obstacle_slow_radius:
                speed *= p.obstacle_speed_factor

        moved = 0.0
        budget = speed * dt
        while budget > 0 and self.seg_idx < len(self.segments):
            target = self.segments[self.seg_idx]
            delta = target - self.robot_pos
            dist = float(np.hypot(delta[0], delta[1]))
            if dist <= budget:
                self.robot_pos = target.copy()
                moved += dist
                budget -= dist
                if self.obstacle is not None and self.seg_idx == self.obstacle.arc_index:
                    self.obstacle = None  # cleared once the arc is traversed
                self.seg_idx += 1
            else:
                self.robot_pos = self.robot_pos + delta * (budget / dist)
                moved += budget
                budget = 0.0
        v_actual = moved / dt

        o_flag = 1 if (obstructed and not self.charging) else 0
        c_flag = 1 if self.charging else 0
        delta_b = battery_delta(v_actual, c_flag, o_flag, p.battery)
        self.battery = apply_battery(self.battery, delta_b)
        self.t += dt

        dists_after = self.crowd.distances_to(self.robot_pos)
        self.collisions.update(dists_after)
        min_dist = float(np.min(dists_after)) if dists_after.size else math.inf
        counts = self.crowd.counts_by_waypoint(self.centres)
        self.robot_wid = self._nearest_wid(self.robot_pos)
        self.last_speed = v_actual

        row = {
            "t": self.t, "V": v_actual, "B": self.battery, "L": delta_b,
            "C": c_flag, "O": o_flag, "S": self.slot.id, "robot_W": self.robot_wid,
            "counts": counts, "min_person_dist": min_dist,
            "moved": moved, "stalled": stalled,
        }
        if self.log is not None:
            self.log.append(self.t, v_actual, self.battery, delta_b, c_flag, o_flag,
                            self.slot.id, self.robot_wid, counts, min_dist)
        return row


def generate_training_log(graph: WaypointGraph, schedule: ScenarioSchedule, params: SimParams,
                          seed: int, slot_duration_s: float = 600.0,
                          initial_battery: float = 60.0,
                          charge_threshold: float = 20.0) -> TimeSeriesLog:
    """Run a full scheduled day with shortest-path routing and record every step.

    The robot cycles through each slot's task template; when the battery drops
    to `charge_threshold` it finishes nothing fancy, drives to the dock and
    charges to full, producing C=1 rows so charging dynamics are learnable.
    """
    wids = tuple(sorted(graph.waypoints))
    log = TimeSeriesLog(waypoint_ids=wids, sample_period_s=params.battery.dt)
    battery = initial_battery
    current_wid = graph.charging_station
    t0 = 0.0

    from .world import coverage_route  # local import keeps module load light

    for slot_idx, slot in enumerate(schedule.slots):
        crowd = WorkerCrowd(graph, slot, params, seed_key=(seed, slot_idx))
        world = World(graph, params, crowd, slot, battery=battery, start_wid=current_wid, log=log, t0=t0)
        task_rng = rng_for(seed, 303, slot_idx)
        coverage = coverage_route(graph) if slot.template.kind == "coverage" else []
        coverage_i = 0
        need_charge = False
        slot_end = t0 + slot_duration_s

        while world.t < slot_end:
            # pick the next goal
            if need_charge and not world.charging:
                goal = graph.charging_station
            elif slot.template.kind == "coverage":
                goal = coverage[coverage_i % len(coverage)][1] if coverage else world.robot_wid
                coverage_i += 1
            else:
                pool = slot.template.sources if (coverage_i % 2 == 0) else slot.template.targets
                goal = pool[int(task_rng.integers(len(pool)))]
                coverage_i += 1
            route = graph.shortest_route(world.robot_wid, goal)
            obstacle_arc = None
            if len(route) > 1 and task_rng.uniform() < params.obstacle_probability:
                obstacle_arc = int(task_rng.integers(len(route) - 1))
            world.set_plan(route, obstacle_arc)

            while not world.at_goal and world.t < slot_end:
                world.step(params.v_max)
                if world.battery <= charge_threshold:
                    need_charge = True
            if world.t >= slot_end:
                break
            if need_charge and world.robot_wid == graph.charging_station and world.at_goal:
                world.charging = True
                while world.battery < 100.0 and world.t < slot_end:
                    world.step(0.0)
                if world.battery >= 100.0:
                    world.charging = False
                    need_charge = False
        battery = world.battery
        current_wid = world.robot_wid
        t0 = world.t
    return log
