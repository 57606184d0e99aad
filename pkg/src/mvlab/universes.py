"""Trajectory ensembles transported by the phase flow of the wave.

R^2 is treated as a conserved density of trajectories ("universes") carried
by the velocity v = grad(phi)/m. In one dimension a caustic is exactly a
change of trajectory ordering, so sorting gives an exact crossing detector;
the quantum flow never reorders, the classical converging flow does.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DomainError
from .fields import PhysicalParams, SpatialGrid, _fmt
from .madelung import (
    DEFAULT_NODE_EPSILON,
    MASK_DILATION,
    PolarField,
    decompose,
    dilate_mask,
    phase_gradient,
)

if TYPE_CHECKING:
    from .evolution import EvolutionRecord

KINDS = ("bohmian", "classical")


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    """Positions of M trajectories at T recorded times.

    frozen_at marks trajectories that entered a node neighborhood (quantum
    flow) and escaped_at marks trajectories that left a dirichlet domain
    (classical flow); both hold their last position afterwards, so recorded
    positions stay finite. NaN means the flag never fired.
    """

    times: np.ndarray
    positions: np.ndarray
    kind: str
    frozen_at: np.ndarray | None = None
    escaped_at: np.ndarray | None = None

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        positions = np.array(self.positions, dtype=np.float64)
        if times.ndim != 1 or positions.ndim != 2 or positions.shape[1] != times.size:
            raise DomainError("positions must have shape (n_trajectories, n_times)")
        if np.any(np.diff(times) <= 0.0):
            raise DomainError("times must be strictly increasing")
        if not np.all(np.isfinite(positions)):
            raise DomainError("positions contain NaN or Inf")
        if self.kind not in KINDS:
            raise DomainError(f"kind must be one of {KINDS}, got {self.kind!r}")
        times.flags.writeable = False
        positions.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)
        for name in ("frozen_at", "escaped_at"):
            flags = getattr(self, name)
            flags = np.full(positions.shape[0], np.nan) if flags is None else np.array(
                flags, dtype=np.float64
            )
            if flags.shape != (positions.shape[0],):
                raise DomainError(f"{name} must have one entry per trajectory")
            flags.flags.writeable = False
            object.__setattr__(self, name, flags)

    @property
    def n_trajectories(self) -> int:
        return self.positions.shape[0]


def velocity_field(polar: PolarField, params: PhysicalParams) -> np.ndarray:
    """v_j = (grad phi)_j / m, NaN on node neighborhoods."""
    v = phase_gradient(polar.phi, polar.grid, params.hbar) / params.mass
    bad = dilate_mask(polar.node_mask, 1, polar.grid.boundary == "periodic")
    return np.where(bad, np.nan, v)


def _interp_factory(grid: SpatialGrid, values: np.ndarray):
    x = grid.points
    if grid.boundary == "periodic":
        xs = np.append(x, grid.x_max)
        vs = np.append(values, values[0])

        def interp(pos):
            wrapped = grid.x_min + np.mod(pos - grid.x_min, grid.length)
            return np.interp(wrapped, xs, vs)

        return interp
    return lambda pos: np.interp(pos, x, values)


def _zone_lookup(grid: SpatialGrid, zone: np.ndarray):
    n = grid.n_points

    def in_zone(pos):
        if grid.boundary == "periodic":
            idx = np.floor((np.mod(pos - grid.x_min, grid.length)) / grid.dx).astype(int)
            idx = np.clip(idx, 0, n - 1)
            nxt = (idx + 1) % n
        else:
            idx = np.clip(np.floor((pos - grid.x_min) / grid.dx).astype(int), 0, n - 1)
            nxt = np.clip(idx + 1, 0, n - 1)
        return zone[idx] | zone[nxt]

    return in_zone


def integrate_universes(
    record: "EvolutionRecord",
    initial_positions,
    params: PhysicalParams,
    node_epsilon: float = DEFAULT_NODE_EPSILON,
    substeps: int = 1,
) -> TrajectoryEnsemble:
    """Integrate dx/dt = v(x,t) through the record's snapshots with RK4.

    The velocity is interpolated linearly in space between grid points and
    linearly in time between snapshots, which caps the scheme at second
    order overall; RK4 merely keeps the substep error negligible against
    the interpolation error. Trajectories that enter a node neighborhood
    are frozen in place and flagged, not dropped.
    """
    grid = record.snapshots[0].grid
    x = np.array(initial_positions, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("initial_positions must be a nonempty 1D sequence")
    if np.any(x < grid.x_min) or np.any(x > grid.x_max):
        raise DomainError("initial positions must lie within the grid")

    periodic = grid.boundary == "periodic"
    velocities, zones = [], []
    for wf in record.snapshots:
        polar = decompose(wf, params, node_epsilon)
        zone = dilate_mask(polar.node_mask, MASK_DILATION, periodic)
        v = phase_gradient(polar.phi, grid, params.hbar) / params.mass
        velocities.append(np.where(zone, 0.0, v))
        zones.append(zone)

    start_zone = _zone_lookup(grid, zones[0])
    if np.any(start_zone(x)):
        raise DomainError("initial positions must avoid node neighborhoods of the first snapshot")

    times = record.times
    n_snap = len(times)
    positions = np.empty((x.size, n_snap))
    positions[:, 0] = x
    frozen = np.zeros(x.size, dtype=bool)
    frozen_at = np.full(x.size, np.nan)

    for s in range(n_snap - 1):
        t0, t1 = times[s], times[s + 1]
        interp0 = _interp_factory(grid, velocities[s])
        interp1 = _interp_factory(grid, velocities[s + 1])
        in_zone = _zone_lookup(grid, zones[s] | zones[s + 1])
        h = (t1 - t0) / substeps

        def vel(pos, t):
            w = (t - t0) / (t1 - t0)
            return (1.0 - w) * interp0(pos) + w * interp1(pos)

        for sub in range(substeps):
            t = t0 + sub * h
            k1 = vel(x, t)
            k2 = vel(x + 0.5 * h * k1, t + 0.5 * h)
            k3 = vel(x + 0.5 * h * k2, t + 0.5 * h)
            k4 = vel(x + h * k3, t + h)
            x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            x = np.where(frozen, x, x_new)
            newly = ~frozen & in_zone(x)
            frozen_at[newly] = t + h
            frozen |= newly
        positions[:, s + 1] = x

    return TrajectoryEnsemble(times.copy(), positions, "bohmian", frozen_at=frozen_at)


def crossing_count(ensemble: TrajectoryEnsemble) -> int:
    """Adjacent-pair order inversions summed over recorded time steps.

    In 1D two trajectories cross exactly when their sorted order changes,
    so this is an exact caustic detector: zero for an order-preserving flow.
    Fewer than two trajectories trivially gives zero.
    """
    pos = ensemble.positions
    if pos.shape[0] < 2:
        return 0
    total = 0
    for t in range(pos.shape[1] - 1):
        order = np.argsort(pos[:, t], kind="stable")
        nxt = pos[order, t + 1]
        total += int(np.sum(nxt[1:] < nxt[:-1]))
    return total


def _masked_density(polar: PolarField) -> np.ndarray:
    zone = dilate_mask(polar.node_mask, MASK_DILATION, polar.grid.boundary == "periodic")
    return np.where(zone, 0.0, polar.R**2)


def _density_cdf(polar: PolarField):
    """Piecewise-linear CDF of the node-excluded density over cell edges."""
    grid = polar.grid
    density = _masked_density(polar)
    masses = density * grid.dx
    total = masses.sum()
    if total <= 0.0:
        raise DomainError("density is zero everywhere off nodes")
    edges = grid.x_min + grid.dx * np.arange(grid.n_points + 1)
    cdf = np.concatenate(([0.0], np.cumsum(masses))) / total
    return edges, cdf


def stratified_positions(polar: PolarField, m: int) -> np.ndarray:
    """Deterministic inverse-CDF midpoint sample of m positions from R^2.

    The m equal-probability strata stand in for equally weighted members of
    the continuum ensemble; node neighborhoods carry no samples.
    """
    if m < 1:
        raise DomainError(f"need at least one sample, got {m}")
    edges, cdf = _density_cdf(polar)
    targets = (np.arange(m) + 0.5) / m
    return np.interp(targets, cdf, edges)


@dataclass(frozen=True, eq=False)
class TransportReport:
    """Interval-mass conservation check along the flow.

    fractions holds the share of trajectories inside the transported image
    of (a, b) at each snapshot; expected is the initial density mass of
    (a, b). For an exact flow and infinite ensemble the two agree, so the
    deviations shrink like 1/sqrt(M) stratification granularity.
    """

    times: np.ndarray
    fractions: np.ndarray
    expected: float
    deviations: np.ndarray
    bound: float
    n_trajectories: int

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviations))


def density_transport_check(
    record: "EvolutionRecord",
    ensemble: TrajectoryEnsemble,
    interval,
    params: PhysicalParams,
    node_epsilon: float = DEFAULT_NODE_EPSILON,
) -> TransportReport:
    """Compare trajectory counts in the image of (a, b) with the initial mass."""
    if ensemble.kind != "bohmian":
        raise DomainError("transport check needs a bohmian ensemble")
    times = record.times
    if ensemble.times.size != times.size or not np.allclose(ensemble.times, times):
        raise DomainError("ensemble times do not match the record's snapshot times")
    a, b = float(interval[0]), float(interval[1])
    grid = record.snapshots[0].grid
    if not (grid.x_min <= a < b <= grid.x_max):
        raise DomainError(f"interval ({a}, {b}) must lie inside the grid and satisfy a < b")

    polar0 = decompose(record.snapshots[0], params, node_epsilon)
    edges, cdf = _density_cdf(polar0)
    expected = float(np.interp(b, edges, cdf) - np.interp(a, edges, cdf))

    endpoints = integrate_universes(record, [a, b], params, node_epsilon)
    lo = endpoints.positions[0]
    hi = endpoints.positions[1]
    pos = ensemble.positions
    fractions = np.array(
        [np.mean((pos[:, t] > lo[t]) & (pos[:, t] < hi[t])) for t in range(times.size)]
    )
    deviations = np.abs(fractions - expected)
    m = ensemble.n_trajectories
    return TransportReport(times.copy(), fractions, expected, deviations, 3.0 / np.sqrt(m), m)


def trajectories_to_csv(ensemble: TrajectoryEnsemble, path) -> None:
    """Write columns t,trajectory_id,x,kind,flags with LF line endings."""
    with open(path, "w", newline="\n") as fh:
        fh.write("t,trajectory_id,x,kind,flags\n")
        for t_idx, t in enumerate(ensemble.times):
            for m in range(ensemble.n_trajectories):
                flag = ""
                if np.isfinite(ensemble.frozen_at[m]) and t >= ensemble.frozen_at[m]:
                    flag = "frozen"
                elif np.isfinite(ensemble.escaped_at[m]) and t >= ensemble.escaped_at[m]:
                    flag = "escaped"
                fh.write(f"{_fmt(t)},{m},{_fmt(ensemble.positions[m, t_idx])},{ensemble.kind},{flag}\n")
