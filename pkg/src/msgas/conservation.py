"""Conservation-law diagnostics on simulated trajectories.

A :class:`ConsLaw` holds density and flux samples on a (time, space) lattice
and evaluates its discrete divergence with the box stencil

    R = (mean_m D^{k+1} - mean_m D^k)/dt + (mean_t F_{i+1} - mean_t F_i)/dm.

Laws built from nodal states (energy, m-translation, Noether currents) give
residuals at cell centres; the symplecticity law is built from cell jets
and its residual lands back on the nodes, one level of differencing wider.

Noether currents use the canonical equations x_t = u and S_t = 0 for the
time derivatives and central differences for x_m and S_m.  Nodal specific
volume is the central x_m throughout, see :meth:`History.tau`.  With that choice the
translation generators reproduce the energy and m-translation laws up to
rounding; their overall sign is that of the raw Noether current, i.e. the
negative of the conventional laws for t and m translations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .msymp_core import IP, IR, IS, IU, IX, K0, K1, Jet, MsStructure, hamiltonian
from .eos_thermo import EquationOfState, invert_pressure, temperature
from .errors import GridMismatch, InsufficientHistory, JacobianCollapse
from .integrator import Field, cell_diff, central_dm, jets_from_field


class ResidualNorms(NamedTuple):
    l2: float
    max: float


def _norms(res: np.ndarray, dm: float, dt: float) -> ResidualNorms:
    if res.size == 0:
        return ResidualNorms(0.0, 0.0)
    return ResidualNorms(float(np.sqrt(np.sum(res * res) * dm * dt)), float(np.max(np.abs(res))))


def box_divergence(density: np.ndarray, flux: np.ndarray, dt: float, dm: float) -> np.ndarray:
    """Discrete ``D_t + F_m`` on a periodic (time, space) lattice."""
    d_mean = 0.5 * (density + np.roll(density, -1, axis=1))
    f_mean = 0.5 * (flux[1:] + flux[:-1])
    return (d_mean[1:] - d_mean[:-1]) / dt + (np.roll(f_mean, -1, axis=1) - f_mean) / dm


@dataclass(frozen=True)
class ConsLaw:
    """Density/flux pair sampled on a lattice of spacing (dt, dm).

    ``location`` is ``"node"`` for samples at grid nodes and integer time
    levels, ``"cell"`` for samples at cell centres and half levels.
    """

    name: str
    density: np.ndarray
    flux: np.ndarray
    dt: float
    dm: float
    location: str = "node"

    def residual(self) -> np.ndarray:
        if self.density.shape[0] < 2:
            raise InsufficientHistory(f"{self.name}: need at least two sample levels")
        return box_divergence(self.density, self.flux, self.dt, self.dm)

    def norms(self) -> ResidualNorms:
        return _norms(self.residual(), self.dm, self.dt)

    def global_integral(self) -> np.ndarray:
        """``sum_i D_i dm`` for every sample level."""
        return np.sum(self.density, axis=1) * self.dm

    def __neg__(self) -> "ConsLaw":
        return ConsLaw(self.name, -self.density, -self.flux, self.dt, self.dm, self.location)


class History:
    """Consecutive fields at a uniform time step, plus their box jets."""

    def __init__(self, fields, eos: EquationOfState):
        fields = list(fields)
        if len(fields) < 2:
            raise InsufficientHistory("a history needs at least two time levels")
        first = fields[0]
        for f in fields[1:]:
            if f.grid != first.grid or f.x_period != first.x_period:
                raise GridMismatch("fields live on different grids")
        times = np.array([f.time for f in fields])
        steps = np.diff(times)
        if np.any(steps <= 0.0) or np.ptp(steps) > 1e-9 * np.max(steps):
            raise GridMismatch("history must have uniform, increasing time levels")
        self.fields = fields
        self.eos = eos
        self.ms = MsStructure(eos)
        self.grid = first.grid
        self.dm = first.grid.dm
        self.dt = float(np.mean(steps))
        self.x_period = first.x_period
        self.times = times
        self.z = np.stack([f.values for f in fields])
        self._jets = None

    @property
    def n_levels(self) -> int:
        return len(self.fields)

    @property
    def jets(self) -> Jet:
        """Box jets for every slab, arrays of shape ``(n_levels - 1, n, 5)``."""
        if self._jets is None:
            js = [jets_from_field(a, b) for a, b in zip(self.fields[:-1], self.fields[1:])]
            self._jets = Jet(np.stack([j.z for j in js]), np.stack([j.z_t for j in js]),
                             np.stack([j.z_m for j in js]))
        return self._jets

    def component(self, idx: int) -> np.ndarray:
        return self.z[:, :, idx]

    def tau(self) -> np.ndarray:
        """Nodal specific volume from the geometry, central ``x_m``.

        The box scheme only constrains p through four-corner averages, so
        nodal p may carry a small ``(-1)^k`` component in time.  The node
        spacing has no such mode, which keeps time differences of energy
        densities smooth.
        """
        tau = self.x_m()
        if np.any(~(tau > 0.0)):
            raise JacobianCollapse("x_m must stay positive")
        return tau

    def eps_tau(self) -> np.ndarray:
        """Internal energy per unit mass, ``p(tau, S) tau / (gamma - 1)``."""
        tau = self.tau()
        p = invert_pressure(self.eos, 1.0 / tau, self.component(IS))
        return p * tau / (self.eos.gamma - 1.0)

    def s_m(self) -> np.ndarray:
        return central_dm(self.component(IS).T, self.dm).T

    def x_m(self) -> np.ndarray:
        return np.stack([f.x_m_central() for f in self.fields])


# ------------------------------------------------------------------- laws

def energy_law(hist: History, x0_form: bool = False) -> ConsLaw:
    """``(u^2/2 + eps tau)_t + (p u)_m = 0``.

    With ``x0_form`` the density carries the reference-density weight and the
    spacing is that of the initial position label, ``dx0 = dm / rho0``.
    """
    u, p = hist.component(IU), hist.component(IP)
    density = 0.5 * u * u + hist.eps_tau()
    flux = p * u
    if x0_form:
        rho0 = hist.eos.rho_ref
        return ConsLaw("energy_x0", rho0 * density, flux, hist.dt, hist.dm / rho0)
    return ConsLaw("energy", density, flux, hist.dt, hist.dm)


def m_translation_law(hist: History) -> ConsLaw:
    """``(u tau + r S_m)_t + (w - u^2/2)_m = 0``, nonlocal through r.

    The enthalpy is assembled as ``eps tau + p tau`` from the nodal state so
    that the law coincides with the Noether current of m-translations.
    """
    u, p, r = hist.component(IU), hist.component(IP), hist.component(IR)
    tau = hist.tau()
    density = u * tau + r * hist.s_m()
    flux = (hist.eps_tau() + p * tau) - 0.5 * u * u
    return ConsLaw("m_translation", density, flux, hist.dt, hist.dm)


def momentum_law(hist: History) -> ConsLaw:
    """Lagrangian x-momentum, ``u_t + p_m = 0``."""
    return ConsLaw("momentum", hist.component(IU), hist.component(IP), hist.dt, hist.dm)


@dataclass(frozen=True)
class NoetherGenerator:
    """Constant generator ``(V^t, V^m, V^x)`` with gauge terms ``Lambda``."""

    v_t: float = 0.0
    v_m: float = 0.0
    v_x: float = 0.0
    lam0: float = 0.0
    lam1: float = 0.0


def noether_law(gen: NoetherGenerator, hist: History) -> ConsLaw:
    """Noether current of a constant generator.

    ``D = V^t L + Vhat^s L^0_s + Lambda^0``, ``F = V^m L + Vhat^s L^1_s +
    Lambda^1`` with ``L = u^2/2 - eps tau`` and the characteristic
    ``Vhat^s = V^s - (V^t D_t + V^m D_m) z^s``.  Only x and S carry
    non-zero one-form coefficients (``L^0_x = u``, ``L^0_S = r``,
    ``L^1_x = p``).
    """
    u, p, r = hist.component(IU), hist.component(IP), hist.component(IR)
    tau = hist.tau()
    lag = 0.5 * u * u - hist.eps_tau()
    x_t, x_m = u, tau
    s_t, s_m = np.zeros_like(u), hist.s_m()
    vhat_x = gen.v_x - (gen.v_t * x_t + gen.v_m * x_m)
    vhat_s = -(gen.v_t * s_t + gen.v_m * s_m)
    density = gen.v_t * lag + vhat_x * u + vhat_s * r + gen.lam0
    flux = gen.v_m * lag + vhat_x * p + gen.lam1
    name = f"noether({gen.v_t:g},{gen.v_m:g},{gen.v_x:g})"
    return ConsLaw(name, density, flux, hist.dt, hist.dm)


def symplecticity_law(hist: History) -> ConsLaw:
    """``F^alpha_01 = z_t^T K^alpha z_m`` from the box jets of every slab.

    ``D = u_t x_m - x_t u_m + r_t S_m - S_t r_m`` and
    ``F = p_t x_m - x_t p_m``; the ``S_t r_m`` term vanishes on solutions.
    """
    if hist.n_levels < 3:
        raise InsufficientHistory("symplecticity law needs three time levels")
    j = hist.jets
    density = np.einsum("...i,ij,...j->...", j.z_t, K0, j.z_m)
    flux = np.einsum("...i,ij,...j->...", j.z_t, K1, j.z_m)
    return ConsLaw("symplecticity", density, flux, hist.dt, hist.dm, location="cell")


class HamiltonianGradientCheck(NamedTuple):
    density_defect: np.ndarray  # D + H_m
    flux_defect: np.ndarray  # F - H_t


def symplecticity_vs_hamiltonian(hist: History) -> HamiltonianGradientCheck:
    """Compare the symplecticity pair with ``(-H_m, H_t)`` on the box stencil."""
    law = symplecticity_law(hist)
    h = hamiltonian(hist.ms, hist.z)
    h_m = 0.5 * (cell_diff(h.T).T[1:] + cell_diff(h.T).T[:-1]) / hist.dm
    h_mean = 0.5 * (h + np.roll(h, -1, axis=1))
    h_t = (h_mean[1:] - h_mean[:-1]) / hist.dt
    return HamiltonianGradientCheck(law.density + h_m, law.flux - h_t)


def compatibility_identity(hist: History) -> np.ndarray:
    """Symplecticity residual plus the m-derivative of the energy residual.

    Both terms sit on the nodes of levels ``1 .. n_levels - 2``.
    """
    if hist.n_levels < 3:
        raise InsufficientHistory("compatibility identity needs three time levels")
    sym = symplecticity_law(hist).residual()
    e = energy_law(hist).residual()
    de = (np.roll(e, -1, axis=1) - e) / hist.dm
    return sym + 0.5 * (de[1:] + de[:-1])


def r_nonlocality(hist: History) -> np.ndarray:
    """``r - r(0) + int_0^t T dt'`` per node and level (trapezoidal rule)."""
    t = temperature(hist.eos, hist.component(IP), hist.component(IS))
    integral = cumulative_trapezoid(t, hist.times, axis=0, initial=0.0)
    r = hist.component(IR)
    return r - r[0] + integral


# -------------------------------------------------------------- Eulerian

@dataclass(frozen=True)
class EulerianLaw:
    """Eulerian density/flux sampled at the moving node positions."""

    name: str
    density: np.ndarray
    flux: np.ndarray
    x: np.ndarray
    u: np.ndarray
    dt: float
    dm: float
    x_period: float

    def residual(self) -> np.ndarray:
        """``d_t F0 + d_x F1`` at moving cell centres.

        The fixed-x time derivative is the Lagrangian one minus ``u d_x F0``;
        x-derivatives are ratios of m-differences on the non-uniform grid.
        """
        f0, f1, x, u = self.density, self.flux, self.x, self.u
        d0 = np.roll(f0, -1, axis=1) - f0
        d1 = np.roll(f1, -1, axis=1) - f1
        dx = np.roll(x, -1, axis=1) - x
        dx[:, -1] += self.x_period
        tmean = lambda a: 0.5 * (a[1:] + a[:-1])  # noqa: E731
        mmean = lambda a: 0.5 * (a + np.roll(a, -1, axis=1))  # noqa: E731
        dx_c = tmean(dx)
        lag_t = (mmean(f0)[1:] - mmean(f0)[:-1]) / self.dt
        u_c = tmean(mmean(u))
        return lag_t - u_c * tmean(d0) / dx_c + tmean(d1) / dx_c

    def norms(self) -> ResidualNorms:
        return _norms(self.residual(), self.dm, self.dt)


def to_eulerian(law: ConsLaw, hist: History) -> EulerianLaw:
    """Map a nodal Lagrangian law to Eulerian form.

    In one dimension ``F0 = I0/J`` and ``F1 = (u I0 + x_x0 I1)/J``; with the
    mass label ``J = rho0 x_m`` and ``I0 = rho0 D`` this is
    ``F0 = D / x_m`` and ``F1 = u D / x_m + F``.
    """
    if law.location != "node":
        raise ValueError("only node-sampled laws can be mapped to Eulerian form")
    x_m = hist.x_m()
    if np.any(~(x_m > 0.0)):
        raise JacobianCollapse("x_m must stay positive")
    u = hist.component(IU)
    f0 = law.density / x_m
    f1 = u * f0 + law.flux
    return EulerianLaw(law.name + "_eulerian", f0, f1, hist.component(IX), u, hist.dt,
                       hist.dm, hist.x_period)


def momentum_law_eulerian(hist: History) -> EulerianLaw:
    """``(rho u)_t + (rho u^2 + p)_x = 0`` with ``rho = 1/tau(p, S)``."""
    x_m = hist.x_m()
    if np.any(~(x_m > 0.0)):
        raise JacobianCollapse("x_m must stay positive")
    u, p = hist.component(IU), hist.component(IP)
    rho = 1.0 / hist.tau()
    return EulerianLaw("momentum_eulerian", rho * u, rho * u * u + p, hist.component(IX), u,
                       hist.dt, hist.dm, hist.x_period)


# ---------------------------------------------------------------- globals

class GlobalInvariants(NamedTuple):
    energy: float
    momentum: float
    entropy: float


def global_invariants(field: Field, eos: EquationOfState) -> GlobalInvariants:
    """Mass-weighted totals of energy, momentum and entropy on one level.

    Specific volume is the central ``x_m``, as in :class:`History`.
    """
    dm = field.grid.dm
    tau = field.x_m_central()
    p = invert_pressure(eos, 1.0 / tau, field.S)
    energy = 0.5 * field.u * field.u + p * tau / (eos.gamma - 1.0)
    return GlobalInvariants(float(np.sum(energy) * dm), float(np.sum(field.u) * dm),
                            float(np.sum(field.S) * dm))
