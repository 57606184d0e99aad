"""Deterministic time evolution: unitary wave propagation and classical flows.

Two wave integrators, selected by the grid's boundary kind: a second-order
split-step spectral scheme on periodic grids (norm-preserving to rounding)
and Crank-Nicolson with a tridiagonal solve on dirichlet grids. The
classical companion integrates Newtonian characteristics with RK4 so that
trajectory crossings - the caustics the wave equation never develops - can
be produced and timed accurately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainError, StabilityError
from .fields import (
    GridWavefunction,
    PhysicalParams,
    PotentialField,
    SpatialGrid,
    _fmt,
    gradient,
    norm_squared,
)
from .universes import TrajectoryEnsemble

MAX_DEFAULT_SNAPSHOTS = 512
UNITARITY_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class EvolutionRecord:
    """Uniformly spaced snapshots of a single wave evolution.

    Snapshot norms are checked against the first snapshot at construction:
    a drift beyond 1e-8 means the integrator violated unitarity and the
    record is refused.
    """

    params: PhysicalParams
    potential: PotentialField
    dt: float
    snapshot_stride: int
    times: np.ndarray
    snapshots: tuple[GridWavefunction, ...]

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        if times.size != len(self.snapshots) or times.size == 0:
            raise DomainError("times and snapshots must align and be nonempty")
        if times.size > 1:
            spacing = np.diff(times)
            target = self.dt * self.snapshot_stride
            if np.any(spacing <= 0.0) or np.any(np.abs(spacing - target) > 1e-9 * max(target, 1e-300)):
                raise DomainError("snapshot times must increase uniformly by dt*stride")
        n0 = norm_squared(self.snapshots[0])
        for wf in self.snapshots[1:]:
            if abs(norm_squared(wf) - n0) > UNITARITY_TOLERANCE:
                raise DomainError("snapshot norms drift beyond the unitarity tolerance")
        times.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "snapshots", tuple(self.snapshots))

    @property
    def grid(self) -> SpatialGrid:
        return self.snapshots[0].grid


@dataclass(frozen=True, eq=False)
class ClassicalEnsembleRecord:
    """Newtonian characteristics: positions and velocities per particle per time."""

    params: PhysicalParams
    potential: PotentialField
    ensemble: TrajectoryEnsemble
    velocities: np.ndarray

    def __post_init__(self):
        v = np.array(self.velocities, dtype=np.float64)
        if v.shape != self.ensemble.positions.shape:
            raise DomainError("velocities must have the same shape as positions")
        if not np.all(np.isfinite(v)):
            raise DomainError("velocities contain NaN or Inf")
        v.flags.writeable = False
        object.__setattr__(self, "velocities", v)


def _auto_stride(n_steps: int) -> int:
    if n_steps <= MAX_DEFAULT_SNAPSHOTS:
        return 1
    target = -(-n_steps // MAX_DEFAULT_SNAPSHOTS)  # ceil division
    for stride in range(target, n_steps + 1):
        if n_steps % stride == 0:
            return stride
    return n_steps


def evolve_schrodinger(
    wf0: GridWavefunction,
    V: PotentialField,
    params: PhysicalParams,
    dt: float,
    n_steps: int,
    snapshot_stride: int | None = None,
) -> EvolutionRecord:
    """Advance the wave by n_steps of size dt, recording every stride-th state.

    Periodic grids use Strang splitting (half potential kick, exact spectral
    kinetic step, half kick); dirichlet grids use Crank-Nicolson. Guard:
    dt*max|V|/hbar must stay below 0.5 or the potential phase per step is
    unresolved.
    """
    grid = wf0.grid
    if V.grid != grid:
        raise DomainError("wavefunction and potential live on different grids")
    if not (dt > 0.0):
        raise DomainError(f"dt must be positive, got {dt}")
    if n_steps < 0:
        raise DomainError(f"n_steps must be nonnegative, got {n_steps}")
    v_max = float(np.max(np.abs(V.values)))
    if dt * v_max / params.hbar >= 0.5:
        raise StabilityError(
            f"dt*max|V|/hbar = {dt * v_max / params.hbar:.3g} >= 0.5; reduce dt"
        )
    if snapshot_stride is None:
        stride = _auto_stride(n_steps) if n_steps > 0 else 1
    else:
        stride = snapshot_stride
        if stride < 1:
            raise DomainError(f"snapshot_stride must be >= 1, got {stride}")
        if n_steps > 0 and n_steps % stride != 0:
            raise DomainError(
                f"snapshot_stride={stride} must divide n_steps={n_steps} "
                "so snapshot times stay uniform"
            )

    psi = wf0.amplitudes.copy()
    snapshots = [wf0]
    if n_steps > 0:
        step = (
            _split_step_stepper(grid, V, params, dt)
            if grid.boundary == "periodic"
            else _crank_nicolson_stepper(grid, V, params, dt)
        )
        for k in range(1, n_steps + 1):
            psi = step(psi)
            if k % stride == 0:
                snapshots.append(GridWavefunction(grid, psi.copy()))
    times = np.arange(len(snapshots)) * (dt * stride)
    return EvolutionRecord(params, V, dt, stride, times, tuple(snapshots))


def _split_step_stepper(grid, V, params, dt):
    k = 2.0 * np.pi * np.fft.fftfreq(grid.n_points, d=grid.dx)
    kinetic = np.exp(-1j * params.hbar * k**2 * dt / (2.0 * params.mass))
    half_kick = np.exp(-1j * V.values * dt / (2.0 * params.hbar))

    def step(psi):
        psi = half_kick * psi
        psi = np.fft.ifft(kinetic * np.fft.fft(psi))
        return half_kick * psi

    return step


def _crank_nicolson_stepper(grid, V, params, dt):
    # H = -(hbar^2/2m) D2 + V with zero ghosts just outside the stored points
    n = grid.n_points
    c = params.hbar**2 / (2.0 * params.mass * grid.dx**2)
    diag = 2.0 * c + V.values
    r = 1j * dt / (2.0 * params.hbar)
    ab = np.zeros((3, n), dtype=np.complex128)
    ab[0, 1:] = -r * c
    ab[1, :] = 1.0 + r * diag
    ab[2, :-1] = -r * c

    def step(psi):
        h_psi = diag * psi
        h_psi[:-1] -= c * psi[1:]
        h_psi[1:] -= c * psi[:-1]
        rhs = psi - r * h_psi
        return solve_banded((1, 1), ab, rhs)

    return step


def classical_ensemble_evolve(
    initial_positions,
    initial_velocities,
    V: PotentialField,
    params: PhysicalParams,
    dt: float,
    n_steps: int,
) -> ClassicalEnsembleRecord:
    """Integrate x'' = -dV/dx / m for an ensemble with classic RK4.

    The force is the centered finite difference of the sampled potential,
    linearly interpolated between grid points. On dirichlet grids a
    trajectory leaving the domain is flagged with its escape time and held
    at its last position; on periodic grids positions wrap for force
    evaluation but are recorded unwrapped.
    """
    grid = V.grid
    x = np.array(initial_positions, dtype=np.float64)
    v = np.array(initial_velocities, dtype=np.float64)
    if x.ndim != 1 or x.shape != v.shape or x.size == 0:
        raise DomainError("positions and velocities must be matching nonempty 1D sequences")
    if np.any(x < grid.x_min) or np.any(x > grid.x_max):
        raise DomainError("initial positions must lie within the grid")
    if not np.all(np.isfinite(v)):
        raise DomainError("initial velocities must be finite")
    if not (dt > 0.0):
        raise DomainError(f"dt must be positive, got {dt}")
    if n_steps < 0:
        raise DomainError(f"n_steps must be nonnegative, got {n_steps}")

    force = -gradient(V.values, grid)
    xg = grid.points
    periodic = grid.boundary == "periodic"
    if periodic:
        xs = np.append(xg, grid.x_max)
        fs = np.append(force, force[0])

        def accel(pos):
            wrapped = grid.x_min + np.mod(pos - grid.x_min, grid.length)
            return np.interp(wrapped, xs, fs) / params.mass

    else:

        def accel(pos):
            return np.interp(pos, xg, force) / params.mass

    m_traj = x.size
    positions = np.empty((m_traj, n_steps + 1))
    velocities = np.empty((m_traj, n_steps + 1))
    positions[:, 0] = x
    velocities[:, 0] = v
    escaped = np.zeros(m_traj, dtype=bool)
    escaped_at = np.full(m_traj, np.nan)

    for step in range(1, n_steps + 1):
        k1x, k1v = v, accel(x)
        k2x, k2v = v + 0.5 * dt * k1v, accel(x + 0.5 * dt * k1x)
        k3x, k3v = v + 0.5 * dt * k2v, accel(x + 0.5 * dt * k2x)
        k4x, k4v = v + dt * k3v, accel(x + dt * k3x)
        x_new = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v_new = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        x = np.where(escaped, x, x_new)
        v = np.where(escaped, v, v_new)
        if not periodic:
            out = ~escaped & ((x < grid.x_min) | (x > grid.x_max))
            if np.any(out):
                # hold at the boundary it crossed; recorded positions stay finite
                x = np.where(out, np.clip(x, grid.x_min, grid.x_max), x)
                v = np.where(out, 0.0, v)
                escaped_at[out] = step * dt
                escaped |= out
        positions[:, step] = x
        velocities[:, step] = v

    times = np.arange(n_steps + 1) * dt
    ensemble = TrajectoryEnsemble(times, positions, "classical", escaped_at=escaped_at)
    return ClassicalEnsembleRecord(params, V, ensemble, velocities)


def evolution_to_csv(record: EvolutionRecord, path) -> None:
    """Write long-format columns t,x,re,im,R2 with LF line endings."""
    x = record.grid.points
    with open(path, "w", newline="\n") as fh:
        fh.write("t,x,re,im,R2\n")
        for t, wf in zip(record.times, record.snapshots):
            amps = wf.amplitudes
            dens = np.abs(amps) ** 2
            for j in range(record.grid.n_points):
                fh.write(
                    f"{_fmt(t)},{_fmt(x[j])},{_fmt(amps[j].real)},"
                    f"{_fmt(amps[j].imag)},{_fmt(dens[j])}\n"
                )


def classical_to_csv(record: ClassicalEnsembleRecord, path) -> None:
    """Write columns t,particle_id,x,v with LF line endings."""
    ens = record.ensemble
    with open(path, "w", newline="\n") as fh:
        fh.write("t,particle_id,x,v\n")
        for t_idx, t in enumerate(ens.times):
            for m in range(ens.n_trajectories):
                fh.write(
                    f"{_fmt(t)},{m},{_fmt(ens.positions[m, t_idx])},"
                    f"{_fmt(record.velocities[m, t_idx])}\n"
                )
