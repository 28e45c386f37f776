"""Quarter-car surrogate of the instrumented test vehicle.

A two-mass model (sprung body, unsprung wheel) with a linear tire spring and a
semi-active damper whose coefficient is set by the valve current. The state
is ``[z_s, v_s, z_u, v_u]`` in metres and m/s, measured from static
equilibrium so gravity drops out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .dataset import SAMPLE_STEP, RawDataset


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlantParams:
    m_s: float = 475.0  # kg, quarter of curb weight less the corner's unsprung share
    m_u: float = 45.0  # kg
    k_s: float = 30_000.0  # N/m
    k_t: float = 250_000.0  # N/m
    k_d_min: float = 800.0  # N s/m
    k_d_max: float = 4_000.0  # N s/m
    I_min: float = 0.0  # A
    I_max: float = 1.6  # A
    dt: float = SAMPLE_STEP  # s
    sensor_noise_sd: float = 0.02  # mm
    # optional piecewise-linear damper characteristic f(v): ((v0, f0), (v1, f1), ...)
    force_map: Optional[tuple] = None

    def __post_init__(self):
        for name in ("m_s", "m_u", "k_s", "k_t"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.k_d_max > self.k_d_min > 0:
            raise ValueError("require k_d_max > k_d_min > 0")
        if not self.I_max > self.I_min:
            raise ValueError("require I_max > I_min")
        if self.sensor_noise_sd < 0:
            raise ValueError("sensor_noise_sd must be non-negative")
        if self.force_map is not None:
            pts = tuple(tuple(map(float, p)) for p in self.force_map)
            if len(pts) < 2 or any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
                raise ValueError("force_map needs >= 2 points with increasing velocity")
            object.__setattr__(self, "force_map", pts)

    def damper_characteristic(self) -> Callable[[float], float]:
        """Return ``f`` mapping relative velocity to the unit damper force."""
        if self.force_map is None:
            return lambda v: v
        vs = [p[0] for p in self.force_map]
        fs = [p[1] for p in self.force_map]
        lo_slope = (fs[1] - fs[0]) / (vs[1] - vs[0])
        hi_slope = (fs[-1] - fs[-2]) / (vs[-1] - vs[-2])

        def f(v):
            if v < vs[0]:
                return fs[0] + lo_slope * (v - vs[0])
            if v > vs[-1]:
                return fs[-1] + hi_slope * (v - vs[-1])
            return float(np.interp(v, vs, fs))

        return f


@dataclass(frozen=True)
class RoadProfile:
    """Excitation of one test run.

    ``cosine-bump``: half-cosine obstacle of ``bump_height`` x ``bump_length``
    (m) reached ``onset`` seconds into the run. ``stationary-force``: vertical
    half-sine force pulse of ``force_amplitude`` N and ``pulse_duration`` s on
    the body. ``flat``: no excitation.
    """

    kind: str = "cosine-bump"
    bump_height: float = 0.05
    bump_length: float = 0.5
    force_amplitude: float = 0.0
    onset: float = 1.0
    pulse_duration: float = 0.3

    def __post_init__(self):
        if self.kind not in ("cosine-bump", "flat", "stationary-force"):
            raise ValueError(f"unknown road profile kind {self.kind!r}")
        if self.bump_height < 0:
            raise ValueError("bump_height must be >= 0")
        if not self.bump_length > 0:
            raise ValueError("bump_length must be > 0")
        if not self.pulse_duration > 0 or self.onset < 0:
            raise ValueError("pulse_duration must be > 0 and onset >= 0")


@dataclass(frozen=True)
class TestRunSpec:
    run_id: int
    I: float  # A
    V: float  # km/h
    duration: float = 12.0  # s
    profile: RoadProfile = field(default_factory=RoadProfile)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.profile.kind == "cosine-bump" and self.V <= 0:
            raise ValueError(f"run {self.run_id}: a bump run needs V > 0")


# (current A, velocity km/h); run ids follow row order
TEST_PROGRAM = (
    (0.4, 10), (1.0, 10), (1.2, 10), (1.5, 10),
    (0.4, 15), (1.0, 15), (1.2, 15), (1.5, 15),
    (0.4, 20), (1.0, 20), (1.2, 20), (1.5, 20),
    (0.4, 0), (1.6, 25),
)
STATIONARY_FORCE = 1000.0  # N


def default_program(duration: float = 12.0) -> list[TestRunSpec]:
    """The 14-run obstacle test program; run 13 is the stationary force test."""
    specs = []
    for run_id, (current, velocity) in enumerate(TEST_PROGRAM, start=1):
        if velocity == 0:
            profile = RoadProfile(kind="stationary-force", force_amplitude=STATIONARY_FORCE)
        else:
            profile = RoadProfile()
        specs.append(TestRunSpec(run_id, current, float(velocity), duration, profile))
    return specs


def damping_coefficient(I: float, params: PlantParams) -> float:
    """Linear current-to-damping map between ``k_d_min`` and ``k_d_max``."""
    if not params.I_min <= I <= params.I_max:
        raise ValueError(f"current {I} A outside [{params.I_min}, {params.I_max}] A")
    frac = (I - params.I_min) / (params.I_max - params.I_min)
    return params.k_d_min + (params.k_d_max - params.k_d_min) * frac


def road_height(profile: RoadProfile, V: float, t):
    """Road elevation under the tire (m) at time(s) ``t`` for speed ``V`` km/h."""
    t = np.asarray(t, dtype=float)
    if profile.kind != "cosine-bump":
        return np.zeros_like(t)
    s = (V / 3.6) * (t - profile.onset)
    inside = (s > 0) & (s < profile.bump_length)
    z = 0.5 * profile.bump_height * (1.0 - np.cos(2.0 * np.pi * s / profile.bump_length))
    return np.where(inside, z, 0.0)


def body_force(profile: RoadProfile, t):
    t = np.asarray(t, dtype=float)
    if profile.kind != "stationary-force":
        return np.zeros_like(t)
    tau = (t - profile.onset) / profile.pulse_duration
    inside = (tau > 0) & (tau < 1)
    return np.where(inside, profile.force_amplitude * np.sin(np.pi * tau), 0.0)


def integrate(
    params: PlantParams,
    k_d: float,
    n_steps: int,
    road: Callable[[float], float] = lambda t: 0.0,
    force: Callable[[float], float] = lambda t: 0.0,
    x0: Sequence[float] = (0.0, 0.0, 0.0, 0.0),
    dt: Optional[float] = None,
) -> np.ndarray:
    """Fixed-step RK4 integration of the quarter-car.

    Returns an ``(n_steps + 1, 4)`` array of states at ``t = k * dt``.
    """
    dt = params.dt if dt is None else dt
    if not dt > 0:
        raise SimulationError("dt must be positive")
    m_s, m_u, k_s, k_t = params.m_s, params.m_u, params.k_s, params.k_t
    f = params.damper_characteristic()

    def rhs(t, zs, vs, zu, vu):
        spring = k_s * (zs - zu)
        damper = k_d * f(vs - vu)
        a_s = (force(t) - spring - damper) / m_s
        a_u = (spring + damper - k_t * (zu - road(t))) / m_u
        return vs, a_s, vu, a_u

    out = np.empty((n_steps + 1, 4))
    zs, vs, zu, vu = map(float, x0)
    out[0] = zs, vs, zu, vu
    h2 = 0.5 * dt
    for k in range(n_steps):
        t = k * dt
        a1, b1, c1, d1 = rhs(t, zs, vs, zu, vu)
        a2, b2, c2, d2 = rhs(t + h2, zs + h2 * a1, vs + h2 * b1, zu + h2 * c1, vu + h2 * d1)
        a3, b3, c3, d3 = rhs(t + h2, zs + h2 * a2, vs + h2 * b2, zu + h2 * c2, vu + h2 * d2)
        a4, b4, c4, d4 = rhs(t + dt, zs + dt * a3, vs + dt * b3, zu + dt * c3, vu + dt * d3)
        zs += dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        vs += dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        zu += dt / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
        vu += dt / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4)
        if not (math.isfinite(zs) and math.isfinite(vs) and math.isfinite(zu) and math.isfinite(vu)):
            raise SimulationError(f"non-finite state at step {k + 1}")
        out[k + 1] = zs, vs, zu, vu
    return out


def mechanical_energy(states: np.ndarray, params: PlantParams, road=0.0) -> np.ndarray:
    """Kinetic plus elastic energy (J) about static equilibrium."""
    zs, vs, zu, vu = states.T
    return 0.5 * (
        params.m_s * vs**2
        + params.m_u * vu**2
        + params.k_s * (zs - zu) ** 2
        + params.k_t * (zu - road) ** 2
    )


def _n_samples(spec: TestRunSpec, params: PlantParams) -> int:
    return int(round(spec.duration / params.dt))


def simulate_trace(spec: TestRunSpec, params: PlantParams, dt: Optional[float] = None) -> np.ndarray:
    """Noise-free rod displacement ``z_s - z_u`` in mm, sampled every ``dt``."""
    dt = params.dt if dt is None else dt
    if not dt > 0:
        raise SimulationError("dt must be positive")
    n = int(round(spec.duration / dt))
    k_d = damping_coefficient(spec.I, params)
    p = spec.profile
    if p.kind == "cosine-bump":
        speed, L, h, onset = spec.V / 3.6, p.bump_length, p.bump_height, p.onset

        def road(t):
            s = speed * (t - onset)
            if 0.0 < s < L:
                return 0.5 * h * (1.0 - math.cos(2.0 * math.pi * s / L))
            return 0.0
    else:
        def road(t):
            return 0.0

    if p.kind == "stationary-force":
        A, T, onset = p.force_amplitude, p.pulse_duration, p.onset

        def force(t):
            tau = (t - onset) / T
            return A * math.sin(math.pi * tau) if 0.0 < tau < 1.0 else 0.0
    else:
        def force(t):
            return 0.0

    states = integrate(params, k_d, n - 1, road, force, dt=dt)
    return (states[:, 0] - states[:, 2]) * 1000.0


def simulate_run(spec: TestRunSpec, params: PlantParams, seed: int) -> RawDataset:
    """Simulate one test run as 1 kHz sensor rows with displacement noise."""
    clean = simulate_trace(spec, params)
    n = len(clean)
    rng = np.random.default_rng(seed)
    disp = clean + rng.normal(0.0, params.sensor_noise_sd, n) if params.sensor_noise_sd else clean
    delta = np.empty(n)
    delta[0] = 0.0
    delta[1:] = np.diff(disp)
    return RawDataset.from_columns(
        t=np.arange(n) * params.dt,
        run_id=np.full(n, spec.run_id),
        V=np.full(n, float(spec.V)),
        I=np.full(n, float(spec.I)),
        displacement=disp,
        delta_displacement=delta,
    )


def run_seed(seed: int, run_id: int) -> int:
    """Per-run seed, independent of program order."""
    return int(np.random.SeedSequence([seed, run_id]).generate_state(1)[0])


def generate_program(specs: Sequence[TestRunSpec], params: PlantParams, seed: int) -> RawDataset:
    if not specs:
        raise ValueError("test program is empty")
    ids = [s.run_id for s in specs]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ValueError(f"duplicate run_id(s): {dupes}")
    ordered = sorted(specs, key=lambda s: s.run_id)
    return RawDataset.concat([simulate_run(s, params, run_seed(seed, s.run_id)) for s in ordered])


# -- JSON config -----------------------------------------------------------

def params_from_dict(doc: Optional[dict]) -> PlantParams:
    doc = dict(doc or {})
    unknown = set(doc) - set(PlantParams.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown plant parameter(s): {sorted(unknown)}")
    if doc.get("force_map") is not None:
        doc["force_map"] = tuple(tuple(p) for p in doc["force_map"])
    return PlantParams(**doc)


def program_from_list(items: Optional[list]) -> list[TestRunSpec]:
    if items is None:
        return default_program()
    specs = []
    for item in items:
        item = dict(item)
        profile = RoadProfile(**item.pop("profile", {}))
        specs.append(TestRunSpec(profile=profile, **item))
    return specs


def load_plant_config(path) -> tuple[PlantParams, list[TestRunSpec]]:
    """Read ``{"plant": {...}, "program": [...]}``; missing keys use defaults."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return params_from_dict(doc.get("plant")), program_from_list(doc.get("program"))
