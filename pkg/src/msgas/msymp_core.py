"""Multi-symplectic structure of Lagrangian gas dynamics.

The state is ``z = (x, u, p, S, r)`` over the (t, m) plane, stored as the
last axis of a float array (``z[..., IX]`` is x, and so on).  The system is

    K0 z_t + K1 z_m = grad H(z),    H = u^2/2 + w(p, S),

whose rows read ``-(u_t + p_m) = 0``, ``x_t = u``, ``x_m = tau``,
``-r_t = T`` and ``S_t = 0``.  Every residual evaluator in the package goes
through :func:`ms_residual`, so the integrator, the post-hoc diagnostics and
the pullback checks all agree on what "the PDE" means.

Docs use 1-based component numbers (z^1 = x ... z^5 = r); storage is 0-based.
The Lagrange multipliers of the constraint terms are identified with p and
u and are never stored.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .eos_thermo import EquationOfState, enthalpy, specific_volume, temperature
from .errors import NonPositiveSpecificVolume

IX, IU, IP, IS, IR = range(5)
NFIELDS = 5
FIELD_NAMES = ("x", "u", "p", "S", "r")


def _skew(entries):
    k = np.zeros((NFIELDS, NFIELDS))
    for (i, j), v in entries.items():
        k[i - 1, j - 1] = v
        k[j - 1, i - 1] = -v
    k.setflags(write=False)
    return k


# 1-based entries as written for the structure matrices
K0 = _skew({(2, 1): 1.0, (5, 4): 1.0})
K1 = _skew({(3, 1): 1.0})

# non-zero coefficients of omega^0 = u dx + r dS and omega^1 = p dx,
# as (alpha, component-of-dz, component-of-z-giving-the-coefficient)
ONE_FORM_COEFFS = ((0, IX, IU), (0, IS, IR), (1, IX, IP))


@dataclass(frozen=True)
class MsStructure:
    eos: EquationOfState

    @property
    def K0(self) -> np.ndarray:
        return K0

    @property
    def K1(self) -> np.ndarray:
        return K1

    @property
    def K(self) -> tuple[np.ndarray, np.ndarray]:
        return K0, K1


@dataclass(frozen=True)
class Jet:
    """A state together with its t- and m-derivatives (arrays ``(..., 5)``)."""

    z: np.ndarray
    z_t: np.ndarray
    z_m: np.ndarray

    def __post_init__(self):
        for name in ("z", "z_t", "z_m"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape[-1] != NFIELDS:
                raise ValueError(f"{name} must have trailing dimension 5, got {arr.shape}")
            object.__setattr__(self, name, arr)

    def __getitem__(self, idx):
        return Jet(self.z[idx], self.z_t[idx], self.z_m[idx])


def state(x=0.0, u=0.0, p=1.0, S=0.0, r=0.0) -> np.ndarray:
    """Pack components into a state array, broadcasting as needed."""
    parts = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, u, p, S, r)))
    return np.stack(parts, axis=-1)


def hamiltonian(ms: MsStructure, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    u = z[..., IU]
    return 0.5 * u * u + enthalpy(ms.eos, z[..., IP], z[..., IS])


def grad_h(ms: MsStructure, z) -> np.ndarray:
    """``dH/dz = (0, u, tau, T, 0)``."""
    z = np.asarray(z, dtype=float)
    g = np.zeros_like(z)
    g[..., IU] = z[..., IU]
    g[..., IP] = specific_volume(ms.eos, z[..., IP], z[..., IS])
    g[..., IS] = temperature(ms.eos, z[..., IP], z[..., IS])
    return g


def ms_residual(ms: MsStructure, jet: Jet) -> np.ndarray:
    """``K0 z_t + K1 z_m - grad H``; row i vanishes iff equation i holds."""
    return jet.z_t @ K0.T + jet.z_m @ K1.T - grad_h(ms, jet.z)


def lagrangian_density(ms: MsStructure, jet: Jet) -> np.ndarray:
    """Phase-space Lagrangian ``u x_t + p x_m + r S_t - H``."""
    z, zt, zm = jet.z, jet.z_t, jet.z_m
    return (z[..., IU] * zt[..., IX] + z[..., IP] * zm[..., IX] + z[..., IR] * zt[..., IS]
            - hamiltonian(ms, z))


def constrained_lagrangian_density(ms: MsStructure, jet: Jet) -> np.ndarray:
    """The same Lagrangian written with explicit constraint terms.

    ``u^2/2 - eps*tau + p (x_m - tau) + u (x_t - u) + r S_t``, where the
    multipliers of the two constraints have been replaced by p and u.
    """
    eos = ms.eos
    z, zt, zm = jet.z, jet.z_t, jet.z_m
    u, p, S, r = z[..., IU], z[..., IP], z[..., IS], z[..., IR]
    tau = specific_volume(eos, p, S)
    eps_tau = p * tau / (eos.gamma - 1.0)
    return (0.5 * u * u - eps_tau + p * (zm[..., IX] - tau) + u * (zt[..., IX] - u)
            + r * zt[..., IS])


class DdwMomenta(NamedTuple):
    pi_t_x: np.ndarray
    pi_m_x: np.ndarray
    pi_t_S: np.ndarray


def ddw_momenta(ms: MsStructure, jet: Jet) -> DdwMomenta:
    """Poly-momenta read off the state: ``(u, p, r)``."""
    z = jet.z
    return DdwMomenta(z[..., IU], z[..., IP], z[..., IR])


def lagrangian_momenta(ms: MsStructure, jet: Jet, step: float = 1.0) -> DdwMomenta:
    """Poly-momenta as derivatives of the constrained Lagrangian.

    The Lagrangian is affine in ``x_t``, ``x_m`` and ``S_t``, so a central
    difference of any step is exact up to rounding.
    """
    out = []
    for target, comp in (("z_t", IX), ("z_m", IX), ("z_t", IS)):
        vals = []
        for sign in (1.0, -1.0):
            arr = getattr(jet, target).copy()
            arr[..., comp] += sign * step
            kw = {"z": jet.z, "z_t": jet.z_t, "z_m": jet.z_m, target: arr}
            vals.append(constrained_lagrangian_density(ms, Jet(**kw)))
        out.append((vals[0] - vals[1]) / (2.0 * step))
    return DdwMomenta(*out)


def legendre_check(ms: MsStructure, jet: Jet, constrained: bool = False) -> np.ndarray:
    """``|(u x_t + p x_m + r S_t - L) - H|`` for an arbitrary jet.

    With ``constrained=True`` the Lagrangian is taken in its constraint form,
    which makes the check independent of how ``L`` was assembled.
    """
    z, zt, zm = jet.z, jet.z_t, jet.z_m
    lag = constrained_lagrangian_density(ms, jet) if constrained else lagrangian_density(ms, jet)
    pairing = z[..., IU] * zt[..., IX] + z[..., IP] * zm[..., IX] + z[..., IR] * zt[..., IS]
    return np.abs((pairing - lag) - hamiltonian(ms, z))


def ddw_residual(ms: MsStructure, jet: Jet, pi_divergence=None) -> tuple[np.ndarray, np.ndarray]:
    """Canonical momentum balances ``div pi_x + H_x`` and ``d_t pi_S + H_S``.

    ``pi_divergence`` is ``(d_t pi^t_x + d_m pi^m_x, d_t pi^t_S)``; when
    omitted it is read from the jet.  The pair is the negative of rows 1
    and 4 of :func:`ms_residual` (those rows carry ``K0_12 = K0_45 = -1``).
    """
    z, zt, zm = jet.z, jet.z_t, jet.z_m
    if pi_divergence is None:
        pi_divergence = (zt[..., IU] + zm[..., IP], zt[..., IR])
    div_x, div_s = pi_divergence
    g = grad_h(ms, z)
    return div_x + g[..., IX], div_s + g[..., IS]


def wave_residual(eos: EquationOfState, x_tt, x_m, x_mm, S, S_m) -> np.ndarray:
    """Residual of the second-order wave equation for ``x(m, t)``.

    ``x_tt - N1 x_m^(-gamma-1) exp(S/Cv) (gamma x_mm - x_m S_m/Cv)`` with
    ``N1 = p0 rho0^-gamma``.
    """
    x_m = np.asarray(x_m, dtype=float)
    if np.any(~(x_m > 0.0)):
        raise NonPositiveSpecificVolume("x_m must be positive")
    g = eos.gamma
    n1 = eos.p_ref * eos.rho_ref ** (-g)
    sbar = np.asarray(S, float) / eos.c_v
    sbar_m = np.asarray(S_m, float) / eos.c_v
    return x_tt - n1 * x_m ** (-g - 1.0) * np.exp(sbar) * (g * x_mm - x_m * sbar_m)
