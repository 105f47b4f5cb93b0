"""Gamma-law equation of state in (p, S) variables.

The enthalpy ``w(p, S)`` is the thermodynamic potential of the (p, S)
description: its p-derivative is the specific volume and its S-derivative
is the temperature.  For a gamma-law gas

    w(p, S) = a0^2/(gamma-1) * (p/p0)^((gamma-1)/gamma) * exp(S/(gamma*Cv)),

with a0^2 = gamma*p0/rho0.  Because ``w`` is a power of p times an
exponential of S, every mixed partial has a closed form, which is what
:func:`enthalpy_derivative` returns.  All functions broadcast over numpy
arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateGamma, NonPositiveDensity, NonPositivePressure


@dataclass(frozen=True)
class EquationOfState:
    """Gamma-law closure ``p = p0 (rho/rho0)^gamma exp(S/Cv)``.

    Parameters
    ----------
    gamma
        Adiabatic index.  Any value other than 0 and 1 is accepted, but only
        ``gamma > 1`` is evolvable (negative values such as the Chaplygin
        gas are kept for point-wise structure checks).
    p_ref, rho_ref
        Reference pressure ``p0`` and density ``rho0``.
    c_v
        Specific heat; entropy enters only through ``S / c_v``.
    """

    gamma: float = 1.4
    p_ref: float = 1.0
    rho_ref: float = 1.0
    c_v: float = 1.0

    def __post_init__(self):
        if self.gamma == 0.0 or self.gamma == 1.0:
            raise DegenerateGamma(f"gamma must differ from 0 and 1, got {self.gamma}")
        for name in ("p_ref", "rho_ref", "c_v"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value}")

    @property
    def tau_ref(self) -> float:
        return 1.0 / self.rho_ref

    @property
    def a0_squared(self) -> float:
        return self.gamma * self.p_ref / self.rho_ref

    @property
    def evolvable(self) -> bool:
        """Whether the closure gives a hyperbolic system we can time-step."""
        return self.gamma > 1.0

    @property
    def lagrangian_sound_speed(self) -> float:
        """Reference wave speed in the mass coordinate, ``rho0 * a0``."""
        return math.sqrt(self.gamma * self.p_ref * self.rho_ref)


def _check_pressure(p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0)):
        raise NonPositivePressure("pressure must be positive")
    return p


def _falling_factorial(a: float, j: int) -> float:
    out = 1.0
    for i in range(j):
        out *= a - i
    return out


def enthalpy_derivative(eos: EquationOfState, p, S, order_p: int = 0, order_s: int = 0):
    """Closed-form ``d^(order_p + order_s) w / dp^order_p dS^order_s``."""
    if order_p < 0 or order_s < 0:
        raise ValueError("derivative orders must be non-negative")
    p = _check_pressure(p)
    S = np.asarray(S, dtype=float)
    g = eos.gamma
    a = (g - 1.0) / g
    b = 1.0 / (g * eos.c_v)
    coef = eos.a0_squared / (g - 1.0) * _falling_factorial(a, order_p) * b**order_s
    out = coef * (p / eos.p_ref) ** a * p ** (-order_p) * np.exp(b * S)
    return out[()] if out.ndim == 0 else out


def enthalpy(eos: EquationOfState, p, S):
    """Specific enthalpy ``w(p, S)``."""
    return enthalpy_derivative(eos, p, S)


class EnthalpyPartials(NamedTuple):
    w_p: np.ndarray
    w_S: np.ndarray
    w_pp: np.ndarray
    w_pS: np.ndarray
    w_SS: np.ndarray


def enthalpy_partials(eos: EquationOfState, p, S) -> EnthalpyPartials:
    """First and second partials of the enthalpy.

    ``w_p`` is the specific volume and ``w_S`` the temperature.
    """
    d = lambda i, j: enthalpy_derivative(eos, p, S, i, j)  # noqa: E731
    return EnthalpyPartials(d(1, 0), d(0, 1), d(2, 0), d(1, 1), d(0, 2))


def specific_volume(eos: EquationOfState, p, S):
    return enthalpy_derivative(eos, p, S, 1, 0)


def temperature(eos: EquationOfState, p, S):
    return enthalpy_derivative(eos, p, S, 0, 1)


def invert_pressure(eos: EquationOfState, rho, S):
    """Pressure of a parcel with density ``rho`` and entropy ``S``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0.0)):
        raise NonPositiveDensity("density must be positive")
    S = np.asarray(S, dtype=float)
    out = eos.p_ref * (rho / eos.rho_ref) ** eos.gamma * np.exp(S / eos.c_v)
    return out[()] if out.ndim == 0 else out


def internal_energy_density(eos: EquationOfState, rho, S):
    """Internal energy per unit volume, ``eps = p / (gamma - 1)``."""
    return invert_pressure(eos, rho, S) / (eos.gamma - 1.0)


@dataclass(frozen=True)
class ThermoPoint:
    """Thermodynamic state derived from (p, S)."""

    p: np.ndarray
    S: np.ndarray
    w: np.ndarray
    tau: np.ndarray
    T: np.ndarray
    gamma: float

    @property
    def rho(self):
        return 1.0 / self.tau

    @property
    def eps(self):
        return self.p / (self.gamma - 1.0)

    @property
    def e(self):
        return self.eps * self.tau

    @property
    def a2(self):
        return self.gamma * self.p * self.tau


def thermo_point(eos: EquationOfState, p, S) -> ThermoPoint:
    w = enthalpy(eos, p, S)
    tau = specific_volume(eos, p, S)
    T = temperature(eos, p, S)
    return ThermoPoint(np.asarray(p, float), np.asarray(S, float), w, tau, T, eos.gamma)


class FirstLawResiduals(NamedTuple):
    temperature: np.ndarray  # |rho T - eps_S|
    enthalpy: np.ndarray  # |w - eps_rho|
    pressure: np.ndarray  # |p - (rho eps_rho - eps)|


def check_first_law(eos: EquationOfState, rho, S) -> FirstLawResiduals:
    """Residuals of ``rho T = eps_S``, ``w = eps_rho``, ``p = rho eps_rho - eps``.

    ``eps(rho, S)`` and its partials are evaluated from the density side of
    the closure while ``T`` and ``w`` come from the enthalpy side, so the
    residuals measure the consistency of the two descriptions.
    """
    rho = np.asarray(rho, dtype=float)
    S = np.asarray(S, dtype=float)
    p = invert_pressure(eos, rho, S)
    eps = p / (eos.gamma - 1.0)
    eps_rho = eos.gamma * eps / rho
    eps_s = eps / eos.c_v
    T = temperature(eos, p, S)
    w = enthalpy(eos, p, S)
    return FirstLawResiduals(
        np.abs(rho * T - eps_s),
        np.abs(w - eps_rho),
        np.abs(p - (rho * eps_rho - eps)),
    )
