"""Time stepping on a periodic mass grid.

Nodes sit at ``m_i = i * dm``; cell ``i`` spans nodes ``i`` and ``i + 1``
(mod n).  ``x`` is stored unwrapped: across the seam the next node is
``x_0 + L`` with ``L`` the total volume, so discrete ``x_m`` is smooth
everywhere.

The implicit box scheme evaluates the multi-symplectic system at every
space-time cell centre with

    z   -> four-corner average
    z_t -> space-averaged forward difference in t
    z_m -> time-averaged forward difference in m

The system is block triangular: S_t = 0 involves S alone, the (x, u, p)
rows do not see r, and the r row is linear in r once (p, S) are known.  A
step therefore keeps S, Newton-solves the 3n (x, u, p) equations, then
solves the r row directly.

On an even periodic grid the cell average annihilates the sawtooth mode
(-1)^i, which has two consequences handled here:

* the sawtooth of u does not enter any (x, u, p) row, so the Newton matrix
  has a one-dimensional kernel; it is removed by bordering the matrix with
  that mode, which leaves the sawtooth of u untouched by the step;
* the r row can only absorb forcing without a sawtooth component.  The
  minimum-norm update is used and the left-over (exponentially small for
  resolved data) is reported as ``r_defect``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .msymp_core import IP, IR, IS, IU, IX, NFIELDS, Jet, MsStructure, ms_residual
from .eos_thermo import (EquationOfState, enthalpy_derivative, invert_pressure, specific_volume,
                  temperature)
from .errors import (CFLViolation, GridMismatch, NewtonDivergence, ResonantWavenumber,
                     StateLeftDomain, UnknownPreset)

PRESETS = ("uniform_rest", "acoustic_wave", "entropy_bump", "isentropic_pulse")


@dataclass(frozen=True)
class Grid:
    n_cells: int
    m_length: float = 1.0

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 4:
            raise ValueError(f"n_cells must be an integer >= 4, got {self.n_cells}")
        if not self.m_length > 0.0:
            raise ValueError("m_length must be positive")

    @property
    def dm(self) -> float:
        return self.m_length / self.n_cells

    @property
    def periodic(self) -> bool:
        return True

    @property
    def m(self) -> np.ndarray:
        return np.arange(self.n_cells) * self.dm

    @property
    def m_cells(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dm


@dataclass(frozen=True)
class Field:
    """Nodal state ``values[i] = (x, u, p, S, r)`` at one time level."""

    grid: Grid
    time: float
    values: np.ndarray
    x_period: float

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n_cells, NFIELDS):
            raise ValueError(f"values must have shape ({self.grid.n_cells}, 5), got {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    x = property(lambda self: self.values[:, IX])
    u = property(lambda self: self.values[:, IU])
    p = property(lambda self: self.values[:, IP])
    S = property(lambda self: self.values[:, IS])
    r = property(lambda self: self.values[:, IR])

    def with_values(self, values, time=None) -> "Field":
        return replace(self, values=values, time=self.time if time is None else time)

    def next_node_values(self) -> np.ndarray:
        return shift_next(self.values, self.x_period)

    def x_m_central(self) -> np.ndarray:
        x = self.x
        xp = np.roll(x, -1)
        xp[-1] += self.x_period
        xm = np.roll(x, 1)
        xm[0] -= self.x_period
        return (xp - xm) / (2.0 * self.grid.dm)

    def cell_x_m(self) -> np.ndarray:
        return cell_diff(self.x, self.x_period) / self.grid.dm


@dataclass(frozen=True)
class NewtonParams:
    tol: float = 1e-12
    max_iter: int = 50
    max_backtracks: int = 20


@dataclass(frozen=True)
class StepReport:
    newton_iters: int
    final_newton_residual: float
    dt: float
    backtracks: int = 0
    r_defect: float = 0.0


# ---------------------------------------------------------------- stencils

def shift_next(values, x_period: float) -> np.ndarray:
    """Values at node ``i + 1`` (periodic, x unwrapped across the seam)."""
    nxt = np.roll(values, -1, axis=0)
    if nxt.ndim == 2:
        nxt[-1, IX] += x_period
    else:
        nxt[-1] += x_period
    return nxt


def cell_diff(x, x_period: float = 0.0) -> np.ndarray:
    """``a_{i+1} - a_i`` for a nodal array, with an optional seam offset."""
    d = np.roll(x, -1, axis=0) - x
    d[-1] += x_period
    return d


def cell_mean(a) -> np.ndarray:
    return 0.5 * (a + np.roll(a, -1, axis=0))


def central_dm(a, dm: float) -> np.ndarray:
    """Periodic central difference of a nodal array without seam offset."""
    return (np.roll(a, -1, axis=0) - np.roll(a, 1, axis=0)) / (2.0 * dm)


def _box_jet(z0, z0n, z1, z1n, dt, dm) -> Jet:
    """Box-scheme jet from corner values (n, 5): old/new level, node/next."""
    z = 0.25 * ((z0 + z0n) + (z1 + z1n))
    z_t = ((z1 + z1n) - (z0 + z0n)) / (2.0 * dt)
    z_m = ((z0n - z0) + (z1n - z1)) / (2.0 * dm)
    return Jet(z, z_t, z_m)


def jets_from_field(prev: Field, nxt: Field) -> Jet:
    """Cell-centred jets between two consecutive time levels.

    The stencils are those of the box scheme, so feeding the result to
    :func:`msgas.msymp_core.ms_residual` reproduces the residual the solver drove
    to zero.
    """
    if prev.grid != nxt.grid or prev.x_period != nxt.x_period:
        raise GridMismatch("fields live on different grids")
    if not nxt.time > prev.time:
        raise GridMismatch("the second field must be later in time")
    dt = nxt.time - prev.time
    return _box_jet(prev.values, prev.next_node_values(), nxt.values, nxt.next_node_values(),
                    dt, prev.grid.dm)


# ----------------------------------------------------------------- presets

def _assemble_x(grid: Grid, eos: EquationOfState, p, S):
    """Nodes with ``x_{i+1} - x_i = dm * tau(cell mean p, cell mean S)``."""
    tau_c = specific_volume(eos, cell_mean(p), cell_mean(S))
    steps = grid.dm * tau_c
    x = np.concatenate(([0.0], np.cumsum(steps[:-1])))
    return x, float(np.sum(steps))


def field_from_arrays(grid: Grid, eos: EquationOfState, u, p, S, r=None, time=0.0) -> Field:
    """Build a field whose x satisfies the discrete ``x_m = tau`` constraint."""
    n = grid.n_cells
    u, p, S = (np.broadcast_to(np.asarray(a, float), (n,)) for a in (u, p, S))
    r = np.zeros(n) if r is None else np.broadcast_to(np.asarray(r, float), (n,))
    x, period = _assemble_x(grid, eos, p, S)
    return Field(grid, float(time), np.stack([x, u, p, S, r], axis=1), period)


def default_wavenumber(grid: Grid) -> float:
    return 2.0 * math.pi / grid.m_length


def _check_wavenumber(grid: Grid, k: float):
    modes = k * grid.m_length / (2.0 * math.pi)
    if abs(modes - round(modes)) > 1e-9 * max(1.0, abs(modes)):
        raise ResonantWavenumber(f"k*M/(2*pi) = {modes} is not an integer")


def init_preset(name: str, grid: Grid, eos: EquationOfState, amplitude: float = 0.0,
                wavenumber: float | None = None, width: float | None = None) -> Field:
    """Initial data on ``grid`` at ``t = 0``.

    ``uniform_rest``
        u = 0, p = p0, S = 0.
    ``acoustic_wave``
        right-running linear wave, u = A sin(k m), p = p0 + rho0 a0 u.
    ``entropy_bump``
        pressure equilibrium with S = A exp(-(m - M/2)^2 / width^2).
    ``isentropic_pulse``
        right-running simple wave with u = A exp(-(m - M/2)^2 / width^2),
        p from the Riemann invariant u - 2 a/(gamma - 1).

    In every case r = 0 and x is assembled from the discrete constraint.
    """
    if name not in PRESETS:
        raise UnknownPreset(name)
    m = grid.m
    n = grid.n_cells
    k = default_wavenumber(grid) if wavenumber is None else float(wavenumber)
    sigma = 0.1 * grid.m_length if width is None else float(width)
    bump = np.exp(-((m - 0.5 * grid.m_length) / sigma) ** 2)
    u = np.zeros(n)
    p = np.full(n, eos.p_ref)
    S = np.zeros(n)
    if name == "acoustic_wave":
        _check_wavenumber(grid, k)
        u = amplitude * np.sin(k * m)
        p = eos.p_ref + eos.lagrangian_sound_speed * u
    elif name == "entropy_bump":
        S = amplitude * bump
    elif name == "isentropic_pulse":
        g = eos.gamma
        a0 = math.sqrt(eos.a0_squared)
        u = amplitude * bump
        a = a0 + 0.5 * (g - 1.0) * u
        p = eos.p_ref * (a / a0) ** (2.0 * g / (g - 1.0))
    return field_from_arrays(grid, eos, u, p, S)


def acoustic_exact(grid: Grid, eos: EquationOfState, amplitude: float, wavenumber: float,
                   t: float):
    """Linearised right-running acoustic solution ``(u, p)`` at the nodes."""
    c = eos.lagrangian_sound_speed
    u = amplitude * np.sin(wavenumber * (grid.m - c * t))
    return u, eos.p_ref + c * u


def lagrangian_jacobian(field: Field, initial: Field) -> np.ndarray:
    """``J = dx/dx0`` per cell, the x0 labels being the initial positions."""
    return field.cell_x_m() / initial.cell_x_m()


def max_stable_dt(field: Field, eos: EquationOfState, factor: float = 0.4) -> float:
    """``factor * dm / max(rho a)``; the Lagrangian sound speed is rho*a."""
    rho_a = np.sqrt(eos.gamma * field.p / specific_volume(eos, field.p, field.S))
    return factor * field.grid.dm / float(np.max(rho_a))


# ---------------------------------------------------------------- box step

def _check_domain(x, p, x_period):
    return bool(np.all(p > 0.0) and np.all(cell_diff(x, x_period) > 0.0))


def _r_update(rhs: np.ndarray) -> np.ndarray:
    """Minimum-norm ``d`` with ``(d_i + d_{i+1})/2 = rhs_i`` (periodic)."""
    n = rhs.size
    symbol = 0.5 * (1.0 + np.exp(2j * np.pi * np.arange(n) / n))
    rhs_hat = np.fft.fft(rhs)
    d_hat = np.zeros_like(rhs_hat)
    ok = np.abs(symbol) > 1e-12
    d_hat[ok] = rhs_hat[ok] / symbol[ok]
    return np.real(np.fft.ifft(d_hat))


class _BoxSystem:
    """Residual and Jacobian of the (x, u, p) rows for one box step."""

    def __init__(self, ms: MsStructure, old: Field, dt: float):
        self.ms = ms
        self.old = old
        self.dt = dt
        self.n = old.grid.n_cells
        self.dm = old.grid.dm
        self.L = old.x_period
        self.z0 = np.array(old.values)
        self.z0n = old.next_node_values()
        n = self.n
        i = np.arange(n)
        ip = (i + 1) % n
        self.i, self.ip = i, ip
        # fixed sparsity pattern; unknown ordering [X, U, P], rows [R1, R2, R3]
        rows, cols = [], []
        for r_blk, c_blk, nodes in (
            (0, 1, (i, ip)), (0, 2, (i, ip)),
            (1, 0, (i, ip)), (1, 1, (i, ip)),
            (2, 0, (i, ip)), (2, 2, (i, ip)),
        ):
            for nd in nodes:
                rows.append(r_blk * n + i)
                cols.append(c_blk * n + nd)
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.border = (n % 2 == 0)
        if self.border:
            self.saw = np.where(i % 2 == 0, 1.0, -1.0)

    def new_values(self, y) -> np.ndarray:
        n = self.n
        z1 = np.array(self.z0)
        z1[:, IX] = y[:n]
        z1[:, IU] = y[n:2 * n]
        z1[:, IP] = y[2 * n:]
        return z1

    def jet(self, z1) -> Jet:
        return _box_jet(self.z0, self.z0n, z1, shift_next(z1, self.L), self.dt, self.dm)

    def residual(self, y) -> np.ndarray:
        res = ms_residual(self.ms, self.jet(self.new_values(y)))
        return np.concatenate([res[:, 0], res[:, 1], res[:, 2]])

    def jacobian(self, y):
        n, dt, dm = self.n, self.dt, self.dm
        z = self.jet(self.new_values(y)).z
        tau_p = enthalpy_derivative(self.ms.eos, z[:, IP], z[:, IS], 2, 0)
        ht, hm = 0.5 / dt, 0.5 / dm
        one = np.ones(n)
        vals = np.concatenate([
            -ht * one, -ht * one,          # R1 / U_i, U_ip
            hm * one, -hm * one,           # R1 / P_i, P_ip
            ht * one, ht * one,            # R2 / X_i, X_ip
            -0.25 * one, -0.25 * one,      # R2 / U_i, U_ip
            -hm * one, hm * one,           # R3 / X_i, X_ip
            -0.25 * tau_p, -0.25 * tau_p,  # R3 / P_i, P_ip
        ])
        size = 3 * n
        rows, cols = self.rows, self.cols
        if self.border:
            rows = np.concatenate([rows, n + np.arange(n), np.full(n, size)])
            cols = np.concatenate([cols, np.full(n, size), n + np.arange(n)])
            vals = np.concatenate([vals, self.saw, self.saw])
            size += 1
        return sp.csc_matrix((vals, (rows, cols)), shape=(size, size))

    def solve(self, y, res) -> np.ndarray:
        rhs = -res
        if self.border:
            rhs = np.concatenate([rhs, [0.0]])
        delta = spsolve(self.jacobian(y), rhs)
        return delta[:3 * self.n]


def step_box(ms: MsStructure, field: Field, dt: float,
             solver: NewtonParams = NewtonParams()) -> tuple[Field, StepReport]:
    """Advance one implicit box-scheme step of length ``dt``."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if not _check_domain(field.x, field.p, field.x_period):
        raise StateLeftDomain("input field is not evolvable")
    system = _BoxSystem(ms, field, dt)
    n = system.n
    y = np.concatenate([field.x, field.u, field.p])
    scale = max(1.0, float(np.max(np.abs(field.values))))
    tol = solver.tol * scale
    iters = backtracks = 0
    res = system.residual(y)
    err = float(np.max(np.abs(res)))
    while err > tol:
        if iters >= solver.max_iter:
            raise NewtonDivergence(
                f"box step did not converge: residual {err:.3e} after {iters} iterations")
        delta = system.solve(y, res)
        iters += 1
        lam = 1.0
        for _ in range(solver.max_backtracks + 1):
            trial = y + lam * delta
            if _check_domain(trial[:n], trial[2 * n:], field.x_period):
                break
            lam *= 0.5
            backtracks += 1
        else:
            raise StateLeftDomain("Newton iterate left the domain p > 0, x_m > 0")
        y = trial
        res = system.residual(y)
        err = float(np.max(np.abs(res)))
        if not math.isfinite(err):
            raise NewtonDivergence("non-finite residual in box step")

    z1 = system.new_values(y)
    # r row: mean over the cell of (r_new - r_old) = -dt T(cell centre)
    zc = system.jet(z1).z
    t_cell = temperature(ms.eos, zc[:, IP], zc[:, IS])
    z1[:, IR] = field.r + _r_update(-dt * t_cell)
    new = field.with_values(z1, time=field.time + dt)
    r_row = ms_residual(ms, jets_from_field(field, new))[:, 3]
    report = StepReport(iters, err, dt, backtracks, float(np.max(np.abs(r_row))))
    return new, report


# ------------------------------------------------------------ leapfrog step

def _cell_pressure(eos, x, S, x_period, dm):
    tau_c = cell_diff(x, x_period) / dm
    if np.any(~(tau_c > 0.0)):
        raise StateLeftDomain("cell specific volume became non-positive")
    return invert_pressure(eos, 1.0 / tau_c, cell_mean(S)), tau_c


def step_leapfrog(ms: MsStructure, field: Field, dt: float, safety: float = 1.0) -> Field:
    """Explicit staggered (kick-drift-kick) update of ``x_tt + p_m = 0``.

    Pressure lives on cells and is computed from the cell specific volume;
    the stored nodal p is the mean of the two adjacent cells.  S is frozen
    and r follows ``r_t = -T`` by a forward Euler step.
    """
    eos = ms.eos
    dm = field.grid.dm
    x, u, S = field.x, field.u, field.S
    L = field.x_period
    p_c, tau_c = _cell_pressure(eos, x, S, L, dm)
    c_max = float(np.max(np.sqrt(eos.gamma * p_c / tau_c)))
    if dt > safety * dm / c_max:
        raise CFLViolation(f"dt = {dt:.3e} exceeds {safety * dm / c_max:.3e}")

    def accel(pc):
        return -(pc - np.roll(pc, 1)) / dm

    u_half = u + 0.5 * dt * accel(p_c)
    x_new = x + dt * u_half
    p_c_new, _ = _cell_pressure(eos, x_new, S, L, dm)
    u_new = u_half + 0.5 * dt * accel(p_c_new)
    p_new = 0.5 * (p_c_new + np.roll(p_c_new, 1))
    r_new = field.r - dt * temperature(eos, field.p, S)
    vals = np.stack([x_new, u_new, p_new, np.array(S), r_new], axis=1)
    return field.with_values(vals, time=field.time + dt)


# ------------------------------------------------------------------ driver

@dataclass
class Trajectory:
    fields: list = dc_field(default_factory=list)
    reports: list = dc_field(default_factory=list)


def run_steps(ms: MsStructure, field: Field, dt: float, n_steps: int, scheme: str = "box",
              solver: NewtonParams = NewtonParams(), keep_every: int = 1) -> Trajectory:
    """Advance ``n_steps`` steps, keeping every ``keep_every``-th level."""
    traj = Trajectory([field], [])
    cur = field
    for k in range(1, n_steps + 1):
        if scheme == "box":
            cur, rep = step_box(ms, cur, dt, solver)
            traj.reports.append(rep)
        elif scheme == "leapfrog":
            cur = step_leapfrog(ms, cur, dt)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        if k % keep_every == 0 or k == n_steps:
            traj.fields.append(cur)
    return traj
