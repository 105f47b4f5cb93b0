"""Exterior calculus over the coordinates (t, m, x, u, p, S, r).

Forms are stored as dictionaries from strictly increasing index tuples to
coefficient functions.  Coefficients are small expression trees
(:class:`Fn`) that know their own analytic partial derivatives, so exterior
derivatives are exact up to rounding; the enthalpy enters through
:class:`EnthalpyDeriv`, whose partials are again closed-form enthalpy
derivatives.  A finite-difference fallback exists for opaque coefficient
functions.

Points are arrays of shape ``(7, N)`` (or ``(7,)``) in coordinate order.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .msymp_core import IP, IR, IS, IU, IX, K0, K1, Jet, MsStructure, lagrangian_density
from .conservation import ConsLaw, History
from .eos_thermo import EquationOfState, enthalpy_derivative
from .errors import (DegreeOverflow, IndexOutOfRange, InsufficientHistory, MissingPartials,
                     NonPositivePressure)

COORDS = ("t", "m", "x", "u", "p", "S", "r")
DIM = len(COORDS)
T, M, X, U, P, S, R = range(DIM)
# state component -> coordinate index
Z_COORD = {IX: X, IU: U, IP: P, IS: S, IR: R}


# ----------------------------------------------------------- coefficients

class Fn:
    """Scalar function of a point with analytic partials."""

    def __call__(self, pts) -> np.ndarray:
        raise NotImplementedError

    def partial(self, i: int, fd: bool = False) -> "Fn":
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False

    def __add__(self, other):
        return add(self, as_fn(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, as_fn(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(Const(-1.0), self)

    def __sub__(self, other):
        return add(self, -as_fn(other))

    def __rsub__(self, other):
        return add(as_fn(other), -self)


def _shape(pts):
    return np.shape(pts)[1:]


@dataclass(frozen=True, eq=False)
class Const(Fn):
    value: float

    def __call__(self, pts):
        return np.full(_shape(pts), float(self.value))

    def partial(self, i, fd=False):
        return ZERO

    @property
    def is_zero(self):
        return self.value == 0.0


ZERO = Const(0.0)
ONE = Const(1.0)


@dataclass(frozen=True, eq=False)
class Coord(Fn):
    index: int

    def __call__(self, pts):
        return np.asarray(pts, dtype=float)[self.index]

    def partial(self, i, fd=False):
        return ONE if i == self.index else ZERO


@dataclass(frozen=True, eq=False)
class Sum(Fn):
    terms: tuple

    def __call__(self, pts):
        out = self.terms[0](pts)
        for t in self.terms[1:]:
            out = out + t(pts)
        return out

    def partial(self, i, fd=False):
        out = ZERO
        for t in self.terms:
            out = add(out, t.partial(i, fd))
        return out


@dataclass(frozen=True, eq=False)
class Prod(Fn):
    factors: tuple

    def __call__(self, pts):
        out = self.factors[0](pts)
        for f in self.factors[1:]:
            out = out * f(pts)
        return out

    def partial(self, i, fd=False):
        out = ZERO
        for k, f in enumerate(self.factors):
            df = f.partial(i, fd)
            if df.is_zero:
                continue
            rest = self.factors[:k] + self.factors[k + 1:]
            out = add(out, mul(df, *rest))
        return out


@dataclass(frozen=True, eq=False)
class EnthalpyDeriv(Fn):
    """``d^(jp + js) w / dp^jp dS^js`` at the point's (p, S)."""

    eos: EquationOfState
    jp: int = 0
    js: int = 0

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.asarray(enthalpy_derivative(self.eos, pts[P], pts[S], self.jp, self.js))

    def partial(self, i, fd=False):
        if i == P:
            return EnthalpyDeriv(self.eos, self.jp + 1, self.js)
        if i == S:
            return EnthalpyDeriv(self.eos, self.jp, self.js + 1)
        return ZERO


@dataclass(frozen=True, eq=False)
class Opaque(Fn):
    """Wraps a plain function of the point array.

    Partials come from ``partials`` when given; otherwise they are central
    differences with one Richardson step, available only with ``fd=True``.
    """

    func: Callable
    partials: tuple | None = None
    step: float = 1e-5

    def __call__(self, pts):
        return np.asarray(self.func(np.asarray(pts, dtype=float)), dtype=float)

    def partial(self, i, fd=False):
        if self.partials is not None:
            return as_fn(self.partials[i])
        if not fd:
            raise MissingPartials("coefficient has no analytic partials and FD is disabled")
        return Opaque(_richardson(self, i, self.step), None, self.step)


def _richardson(f: Fn, i: int, h: float):
    def central(pts, step):
        e = np.zeros(DIM)
        e[i] = step
        e = e.reshape((DIM,) + (1,) * (np.ndim(pts) - 1))
        return (f(pts + e) - f(pts - e)) / (2.0 * step)

    return lambda pts: (4.0 * central(pts, 0.5 * h) - central(pts, h)) / 3.0


def as_fn(v) -> Fn:
    if isinstance(v, Fn):
        return v
    if callable(v):
        return Opaque(v)
    return Const(float(v))


def add(*fns: Fn) -> Fn:
    terms, c = [], 0.0
    for f in fns:
        if isinstance(f, Const):
            c += f.value
        elif isinstance(f, Sum):
            terms.extend(f.terms)
        else:
            terms.append(f)
    if c != 0.0 or not terms:
        terms.append(Const(c))
    return terms[0] if len(terms) == 1 else Sum(tuple(terms))


def mul(*fns: Fn) -> Fn:
    factors, c = [], 1.0
    for f in fns:
        if isinstance(f, Const):
            c *= f.value
        elif isinstance(f, Prod):
            factors.extend(f.factors)
        else:
            factors.append(f)
    if c == 0.0:
        return ZERO
    if c != 1.0 or not factors:
        factors.insert(0, Const(c))
    return factors[0] if len(factors) == 1 else Prod(tuple(factors))


def coord(name_or_index) -> Coord:
    i = COORDS.index(name_or_index) if isinstance(name_or_index, str) else int(name_or_index)
    return Coord(i)


# ------------------------------------------------------------------ forms

def _sort_sign(idx):
    """Sorted tuple and permutation sign, or ``(None, 0)`` on repeats."""
    if len(set(idx)) != len(idx):
        return None, 0
    sign = 1
    arr = list(idx)
    for a in range(len(arr)):
        for b in range(len(arr) - 1 - a):
            if arr[b] > arr[b + 1]:
                arr[b], arr[b + 1] = arr[b + 1], arr[b]
                sign = -sign
    return tuple(arr), sign


class DiffForm:
    """A k-form ``sum_I f_I dz^I`` over increasing index tuples ``I``."""

    def __init__(self, degree: int, coeffs=None):
        if not 0 <= degree <= DIM:
            raise DegreeOverflow(f"degree {degree} outside 0..{DIM}")
        self.degree = degree
        self.coeffs: dict[tuple, Fn] = {}
        for idx, f in (coeffs or {}).items():
            self._accumulate(tuple(idx), as_fn(f))

    def _accumulate(self, idx, f: Fn, sign: int = 1):
        if len(idx) != self.degree:
            raise ValueError(f"index {idx} does not match degree {self.degree}")
        key, s = _sort_sign(idx)
        if key is None or f.is_zero:
            return
        term = f if s * sign == 1 else -f
        self.coeffs[key] = add(self.coeffs[key], term) if key in self.coeffs else term

    def __repr__(self):
        names = ["^".join("d" + COORDS[i] for i in k) for k in sorted(self.coeffs)]
        return f"DiffForm({self.degree}, [{', '.join(names)}])"

    def __add__(self, other: "DiffForm") -> "DiffForm":
        if other.degree != self.degree:
            raise ValueError("cannot add forms of different degree")
        out = DiffForm(self.degree, self.coeffs)
        for k, f in other.coeffs.items():
            out._accumulate(k, f)
        return out

    def __neg__(self):
        return DiffForm(self.degree, {k: -f for k, f in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, f) -> "DiffForm":
        f = as_fn(f)
        return DiffForm(self.degree, {k: mul(f, g) for k, g in self.coeffs.items()})

    __rmul__ = scale

    def coefficient(self, slots, pts) -> np.ndarray:
        """Value of the component on ``slots`` in the given order."""
        slots = tuple(COORDS.index(s) if isinstance(s, str) else s for s in slots)
        key, sign = _sort_sign(slots)
        if key is None or key not in self.coeffs:
            return np.zeros(_shape(pts))
        return sign * self.coeffs[key](pts)

    def evaluate(self, pts) -> dict:
        return {k: f(pts) for k, f in self.coeffs.items()}

    def max_abs(self, pts) -> float:
        vals = [np.max(np.abs(v)) for v in self.evaluate(pts).values()]
        return float(max(vals, default=0.0))

    def distance(self, other: "DiffForm", pts) -> float:
        """Max coefficient difference at the points."""
        return (self - other).max_abs(pts)


def dz(i) -> DiffForm:
    i = COORDS.index(i) if isinstance(i, str) else int(i)
    return DiffForm(1, {(i,): ONE})


def zero_form(f) -> DiffForm:
    return DiffForm(0, {(): as_fn(f)})


def wedge(a: DiffForm, b: DiffForm) -> DiffForm:
    deg = a.degree + b.degree
    if deg > DIM:
        raise DegreeOverflow(f"wedge of degrees {a.degree} and {b.degree} exceeds {DIM}")
    out = DiffForm(deg)
    for (i, f), (j, g) in itertools.product(a.coeffs.items(), b.coeffs.items()):
        out._accumulate(i + j, mul(f, g))
    return out


def ext_d(a: DiffForm, fd: bool = False) -> DiffForm:
    """Exterior derivative; ``fd`` permits finite-difference partials."""
    if a.degree + 1 > DIM:
        raise DegreeOverflow("d of a top-degree form")
    out = DiffForm(a.degree + 1)
    for idx, f in a.coeffs.items():
        for j in range(DIM):
            if j in idx:
                continue
            out._accumulate((j,) + idx, f.partial(j, fd))
    return out


def interior(vector, a: DiffForm) -> DiffForm:
    """``V -| a`` for a coordinate direction (int or name) or 7 components."""
    if isinstance(vector, (int, np.integer, str)):
        i = COORDS.index(vector) if isinstance(vector, str) else int(vector)
        comps = [ONE if j == i else ZERO for j in range(DIM)]
    else:
        comps = [as_fn(v) for v in vector]
        if len(comps) != DIM:
            raise ValueError("vector needs 7 components")
    if a.degree == 0:
        return DiffForm(0)
    out = DiffForm(a.degree - 1)
    for idx, f in a.coeffs.items():
        for pos, j in enumerate(idx):
            if comps[j].is_zero:
                continue
            term = mul(comps[j], f)
            out._accumulate(idx[:pos] + idx[pos + 1:], term, -1 if pos % 2 else 1)
    return out


# -------------------------------------------------- gas-dynamics forms

def hamiltonian_fn(eos: EquationOfState) -> Fn:
    u = Coord(U)
    return add(mul(Const(0.5), u, u), EnthalpyDeriv(eos))


def volume_form() -> DiffForm:
    return wedge(dz(T), dz(M))


def dual_coframe() -> tuple[DiffForm, DiffForm]:
    """``(dm~_0, dm~_1) = (dm, -dt)`` so that ``dt^dm~_0 = dm^dm~_1 = dV``."""
    return dz(M), -dz(T)


def one_forms() -> tuple[DiffForm, DiffForm]:
    """``omega^0 = u dx + r dS`` and ``omega^1 = p dx``."""
    w0 = dz(X).scale(Coord(U)) + dz(S).scale(Coord(R))
    w1 = dz(X).scale(Coord(P))
    return w0, w1


def structure_two_forms() -> tuple[DiffForm, DiffForm]:
    """``kappa^a = (1/2) K^a_ij dz^i ^ dz^j`` built from the matrices."""
    out = []
    for k in (K0, K1):
        form = DiffForm(2)
        for a, b in zip(*np.nonzero(k)):
            form._accumulate((Z_COORD[a], Z_COORD[b]), Const(0.5 * k[a, b]))
        out.append(form)
    return tuple(out)


class CartanPoincare(NamedTuple):
    theta: DiffForm
    omega: DiffForm


def omega_from_structure(eos: EquationOfState) -> DiffForm:
    """``kappa^a ^ dm~_a - H_z dz ^ dV``, the closed three-form built directly."""
    kap = structure_two_forms()
    dual = dual_coframe()
    out = wedge(kap[0], dual[0]) + wedge(kap[1], dual[1])
    dH = ext_d(zero_form(hamiltonian_fn(eos)))
    return out - wedge(dH, volume_form())


def build_cartan_poincare(eos: EquationOfState, check_points=None,
                          tol: float = 1e-12) -> CartanPoincare:
    """``Theta = omega^a ^ dm~_a - H dV`` and ``Omega = d Theta``.

    ``Omega`` is compared coefficientwise with :func:`omega_from_structure`
    at ``check_points`` (a few seeded points by default).
    """
    w = one_forms()
    dual = dual_coframe()
    theta = (wedge(w[0], dual[0]) + wedge(w[1], dual[1])
             - volume_form().scale(hamiltonian_fn(eos)))
    omega = ext_d(theta)
    pts = sample_points(np.random.default_rng(0), 8) if check_points is None else check_points
    err = omega.distance(omega_from_structure(eos), pts)
    if not err <= tol:
        raise ArithmeticError(f"d Theta differs from the structure three-form by {err:.3e}")
    return CartanPoincare(theta, omega)


def _check_index(p_index: int):
    if not (isinstance(p_index, (int, np.integer)) and 1 <= p_index <= 5):
        raise IndexOutOfRange(f"p_index must be in 1..5, got {p_index}")


def contract_beta(eos: EquationOfState, p_index: int, cp: CartanPoincare | None = None):
    """``beta_p = d/dz^p -| Omega`` for p = 1..5 (x, u, p, S, r)."""
    _check_index(p_index)
    cp = build_cartan_poincare(eos) if cp is None else cp
    return interior(X + p_index - 1, cp.omega)


def beta_reference(eos: EquationOfState, p_index: int) -> DiffForm:
    """Hand-written two-forms of the contracted Cartan-Poincare form."""
    _check_index(p_index)
    dt, dm = dz(T), dz(M)
    if p_index == 1:
        return -wedge(dz(U), dm) + wedge(dz(P), dt)
    if p_index == 2:
        return wedge(dz(X) - dt.scale(Coord(U)), dm)
    if p_index == 3:
        return wedge(dt, dz(X) - dm.scale(EnthalpyDeriv(eos, 1, 0)))
    if p_index == 4:
        return -wedge(dz(R) + dt.scale(EnthalpyDeriv(eos, 0, 1)), dm)
    return wedge(dz(S), dm)


def beta_check(eos: EquationOfState, pts) -> np.ndarray:
    """Max coefficient gap between contracted and hand-written beta_p."""
    cp = build_cartan_poincare(eos)
    return np.array([contract_beta(eos, i, cp).distance(beta_reference(eos, i), pts)
                     for i in range(1, 6)])


def closure_rhs(eos: EquationOfState, p_index: int) -> DiffForm:
    """The ideal combination ``c_ij ^ beta_j`` that ``d beta_i`` must equal.

    ``d beta_2 = -beta_1 ^ dt``: with ``beta_1 = -du^dm + dp^dt`` and
    ``beta_2 = (dx - u dt)^dm`` both sides equal ``-du^dt^dm``.
    """
    _check_index(p_index)
    dt, dm = dz(T), dz(M)
    b1, b5 = beta_reference(eos, 1), beta_reference(eos, 5)
    w = lambda jp, js: EnthalpyDeriv(eos, jp, js)  # noqa: E731
    if p_index in (1, 5):
        return DiffForm(3)
    if p_index == 2:
        return -wedge(b1, dt)
    if p_index == 3:
        return wedge(b1, dm).scale(-w(2, 0)) + wedge(b5, dt).scale(w(1, 1))
    return wedge(b5, dt).scale(w(0, 2)) - wedge(b1, dm).scale(w(1, 1))


def _check_points(pts):
    pts = np.asarray(pts, dtype=float)
    if pts.shape[0] != DIM:
        raise ValueError("points must have leading dimension 7")
    if np.any(~(pts[P] > 0.0)):
        raise NonPositivePressure("sample points need p > 0")
    return pts


def ideal_closure_check(eos: EquationOfState, pts) -> np.ndarray:
    """Max-norm of ``d beta_i - c_ij ^ beta_j`` for i = 1..5."""
    pts = _check_points(pts)
    cp = build_cartan_poincare(eos, check_points=pts)
    return np.array([ext_d(contract_beta(eos, i, cp)).distance(closure_rhs(eos, i), pts)
                     for i in range(1, 6)])


class PotentialResiduals(NamedTuple):
    alpha1: float
    alpha5: float


def potential_forms() -> tuple[DiffForm, DiffForm]:
    """``alpha_1 = -u dm + p dt`` and ``alpha_5 = S dm``."""
    a1 = -dz(M).scale(Coord(U)) + dz(T).scale(Coord(P))
    a5 = dz(M).scale(Coord(S))
    return a1, a5


def potential_forms_check(eos: EquationOfState, pts) -> PotentialResiduals:
    """``d alpha_1 - beta_1`` and ``d alpha_5 - beta_5`` in max-norm."""
    pts = _check_points(pts)
    a1, a5 = potential_forms()
    return PotentialResiduals(ext_d(a1).distance(beta_reference(eos, 1), pts),
                              ext_d(a5).distance(beta_reference(eos, 5), pts))


# -------------------------------------------------------------- pullback

def jet_points(jet: Jet, t=0.0, m=0.0) -> np.ndarray:
    """Coordinates of the jet base points as a ``(7, ...)`` array."""
    z = jet.z
    shape = z.shape[:-1]
    pts = np.empty((DIM,) + shape)
    pts[T] = t
    pts[M] = m
    for comp, c in Z_COORD.items():
        pts[c] = z[..., comp]
    return pts


def _jet_tangents(jet: Jet) -> np.ndarray:
    """``(7, 2, ...)`` array of ``(d/dt, d/dm)`` components of each coordinate."""
    shape = jet.z.shape[:-1]
    jac = np.zeros((DIM, 2) + shape)
    jac[T, 0] = 1.0
    jac[M, 1] = 1.0
    for comp, c in Z_COORD.items():
        jac[c, 0] = jet.z_t[..., comp]
        jac[c, 1] = jet.z_m[..., comp]
    return jac


def pullback_two_form(form: DiffForm, jet: Jet, pts=None) -> np.ndarray:
    """Coefficient of ``dt ^ dm`` after pulling back through the jet section."""
    if form.degree != 2:
        raise ValueError("pullback to the (t, m) plane needs a two-form")
    pts = jet_points(jet) if pts is None else pts
    jac = _jet_tangents(jet)
    out = np.zeros(jet.z.shape[:-1])
    for (i, j), f in form.coeffs.items():
        out = out + f(pts) * (jac[i, 0] * jac[j, 1] - jac[j, 0] * jac[i, 1])
    return out


def pullback_theta(jet: Jet, eos: EquationOfState) -> np.ndarray:
    """``|psi* Theta - L dV|`` per jet, ``L = u x_t + p x_m + r S_t - H``."""
    theta = build_cartan_poincare(eos).theta
    return np.abs(pullback_two_form(theta, jet) - lagrangian_density(MsStructure(eos), jet))


def symplecticity_pullback(source, eos: EquationOfState) -> ConsLaw:
    """Symplecticity density and flux from the pullback of ``kappa^a``.

    ``source`` is a :class:`History` (at least three levels) or a bare
    :class:`Jet`, in which case unit spacings are attached.
    """
    if isinstance(source, History):
        if source.n_levels < 3:
            raise InsufficientHistory("symplecticity law needs three time levels")
        jet, dt, dm = source.jets, source.dt, source.dm
    else:
        jet, dt, dm = source, 1.0, 1.0
    kap = structure_two_forms()
    pts = jet_points(jet)
    return ConsLaw("symplecticity_pullback", pullback_two_form(kap[0], jet, pts),
                   pullback_two_form(kap[1], jet, pts), dt, dm, location="cell")


# --------------------------------------------------------------- samples

@dataclass(frozen=True)
class SamplePoint:
    t: float = 0.0
    m: float = 0.0
    x: float = 0.0
    u: float = 0.0
    p: float = 1.0
    S: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if not self.p > 0.0:
            raise NonPositivePressure("sample point needs p > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.t, self.m, self.x, self.u, self.p, self.S, self.r])


def sample_points(rng: np.random.Generator, n: int, p_range=(0.1, 10.0), s_range=(-2.0, 2.0),
                  box: float = 1.0) -> np.ndarray:
    """``(7, n)`` points: p log-uniform, S uniform, other coordinates in ``[-box, box]``."""
    pts = rng.uniform(-box, box, size=(DIM, n))
    pts[P] = np.exp(rng.uniform(math.log(p_range[0]), math.log(p_range[1]), size=n))
    pts[S] = rng.uniform(*s_range, size=n)
    return pts
