"""Reaction structure, equilibria and entropy functionals.

The system couples a bulk concentration u and a surface concentration v
through the reversible boundary reaction alpha*u <-> beta*v with power-law
rates:

    F(u, v) = -alpha * (k_u u^alpha - k_v v^beta)   (bulk source on the boundary)
    G(u, v) =  beta  * (k_u u^alpha - k_v v^beta)   (surface source)

so beta*F + alpha*G = 0 pointwise and the weighted total

    M = beta * integral(u over bulk) + alpha * integral(v over surface)

is conserved. The entropy functional and its dissipation follow the
normalized-rate convention (k_u = k_v = 1, reachable by rescaling);
with general equal rates the dissipation stays a valid nonnegative
diagnostic but matches -dE/dt only after that normalization.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import DegenerateInputError
from .grid import GridGeometry, GridKind, trace

__all__ = [
    "ModelParams",
    "State",
    "Equilibrium",
    "reaction_F",
    "reaction_G",
    "lipschitz_bounds",
    "shifted_f",
    "shifted_g",
    "constant_upper_solution",
    "mass",
    "solve_equilibrium",
    "equilibrium_from_measures",
    "equilibrium_state",
    "equilibrium_entropy",
    "entropy",
    "dissipation",
    "entropy_decomposition",
    "ckp_constant",
]

# floor under arguments of power-law derivatives (flat at 0 for exponent < 1)
DERIVATIVE_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Stoichiometric exponents, diffusivities and rate constants."""

    alpha: float
    beta: float
    delta_u: float
    delta_v: float
    k_u: float = 1.0
    k_v: float = 1.0

    def __post_init__(self):
        if self.alpha < 1 or self.beta < 1:
            raise ValueError(
                f"exponents must be >= 1, got alpha={self.alpha}, beta={self.beta}")
        if self.delta_u <= 0:
            raise ValueError(f"delta_u must be positive, got {self.delta_u}")
        if self.delta_v < 0:
            raise ValueError(f"delta_v must be nonnegative, got {self.delta_v}")
        if self.k_u <= 0 or self.k_v <= 0:
            raise ValueError(
                f"rate constants must be positive, got k_u={self.k_u}, k_v={self.k_v}")


@dataclass
class State:
    """Bulk and surface fields at one instant. Entries must be nonnegative."""

    u: np.ndarray
    v: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.ndim != 1 or self.v.ndim != 1:
            raise ValueError("state fields must be one-dimensional arrays")
        if np.any(self.u < 0) or np.any(self.v < 0):
            raise ValueError("state fields must be nonnegative")
        if self.time < 0:
            raise ValueError(f"time must be nonnegative, got {self.time}")

    def copy(self) -> "State":
        return State(self.u.copy(), self.v.copy(), self.time)


@dataclass(frozen=True)
class Equilibrium:
    """Spatially constant detailed-balance state for a given conserved mass."""

    u_inf: float
    v_inf: float
    mass: float


def _check_nonnegative(name, value):
    if np.any(np.asarray(value) < 0):
        raise ValueError(f"{name} must be nonnegative")


def reaction_F(params: ModelParams, u, v):
    """Boundary flux density feeding the bulk: -alpha*(k_u u^a - k_v v^b)."""
    _check_nonnegative("u", u)
    _check_nonnegative("v", v)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return -params.alpha * (params.k_u * u ** params.alpha
                            - params.k_v * v ** params.beta)


def reaction_G(params: ModelParams, u, v):
    """Surface source: beta*(k_u u^a - k_v v^b) = -(beta/alpha)*F."""
    _check_nonnegative("u", u)
    _check_nonnegative("v", v)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return params.beta * (params.k_u * u ** params.alpha
                          - params.k_v * v ** params.beta)


def lipschitz_bounds(params: ModelParams, upper_u: float, upper_v: float):
    """One-sided Lipschitz constants of the reaction on [0,upper_u]x[0,upper_v].

    L_u = alpha k_u upper_u^(alpha-1), L_v = beta k_v upper_v^(beta-1), with
    the convention 0^0 = 1 when an exponent vanishes.
    """
    if upper_u < 0 or upper_v < 0:
        raise ValueError("box bounds must be nonnegative")
    lu = params.alpha * params.k_u * float(upper_u) ** (params.alpha - 1.0)
    lv = params.beta * params.k_v * float(upper_v) ** (params.beta - 1.0)
    return lu, lv


def shifted_f(params: ModelParams, l_u: float, u, v):
    """F plus the stabilizing shift alpha*L_u*u; nondecreasing in both
    arguments on the box that produced L_u."""
    return reaction_F(params, u, v) + params.alpha * l_u * np.asarray(u, dtype=float)


def shifted_g(params: ModelParams, l_v: float, u, v):
    """G plus the stabilizing shift beta*L_v*v; nondecreasing in both
    arguments on the box that produced L_v."""
    return reaction_G(params, u, v) + params.beta * l_v * np.asarray(v, dtype=float)


def constant_upper_solution(params: ModelParams, sup_u0: float, sup_v0: float):
    """Smallest constant pair (A, B) dominating the initial data with
    balanced rates k_u A^alpha = k_v B^beta."""
    if sup_u0 < 0 or sup_v0 < 0:
        raise ValueError("initial suprema must be nonnegative")
    if sup_u0 == 0 and sup_v0 == 0:
        raise DegenerateInputError(
            "initial data identically zero; no positive constant upper solution")
    # anchor at whichever supremum forces the larger pair; deciding via the
    # implied partner (not the raw rates) keeps subnormal data from
    # underflowing the comparison, and the max guards the mirror image
    a = float(sup_u0)
    b = (params.k_u * a ** params.alpha / params.k_v) ** (1.0 / params.beta)
    if b < sup_v0:
        b = float(sup_v0)
        a = max(float(sup_u0),
                (params.k_v * b ** params.beta / params.k_u)
                ** (1.0 / params.alpha))
    return a, b


def mass(state: State, geom: GridGeometry, params: ModelParams) -> float:
    """Conserved weighted total beta*<u> + alpha*<v>."""
    return float(params.beta * geom.omega_weights @ state.u
                 + params.alpha * geom.gamma_weights @ state.v)


def equilibrium_from_measures(params: ModelParams, omega_measure: float,
                              gamma_measure: float, total_mass: float) -> Equilibrium:
    """Unique constant equilibrium for the given measures and mass.

    Solves k_u u^alpha = k_v v^beta together with
    beta*|Omega|*u + alpha*|Gamma|*v = M by bisection on u in
    (0, M/(beta*|Omega|)). The bracket is shrunk until both the u and the
    implied v intervals are resolved to 1e-13 relative width (or to float
    resolution), so both residuals come out near machine precision.
    """
    if total_mass <= 0:
        raise ValueError(f"total mass must be positive, got {total_mass}")
    if omega_measure <= 0 or gamma_measure <= 0:
        raise ValueError("measures must be positive")
    bo = params.beta * omega_measure
    ag = params.alpha * gamma_measure

    def v_of(u):
        return (total_mass - bo * u) / ag

    def phi(u):
        return params.k_u * u ** params.alpha - params.k_v * v_of(u) ** params.beta

    lo, hi = 0.0, total_mass / bo
    # phi(lo) < 0 < phi(hi): root strictly inside
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # float resolution exhausted
        if phi(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        width = hi - lo
        u_ok = width <= 1e-13 * max(abs(mid), 1e-300)
        v_mid = v_of(mid)
        v_ok = (bo / ag) * width <= 1e-13 * max(abs(v_mid), 1e-300)
        if u_ok and v_ok:
            break
    u_inf = 0.5 * (lo + hi)
    v_inf = v_of(u_inf)
    return Equilibrium(u_inf=float(u_inf), v_inf=float(v_inf),
                       mass=float(total_mass))


def solve_equilibrium(params: ModelParams, geom: GridGeometry,
                      total_mass: float) -> Equilibrium:
    return equilibrium_from_measures(params, geom.omega_measure,
                                     geom.gamma_measure, total_mass)


def equilibrium_state(eq: Equilibrium, geom: GridGeometry, time: float = 0.0) -> State:
    return State(np.full(geom.n_omega, eq.u_inf),
                 np.full(geom.n_gamma, eq.v_inf), time)


def entropy(state: State, geom: GridGeometry) -> float:
    """Free energy E = <u(log u - 1)> + <v(log v - 1)>, with 0*log 0 = 0."""
    if np.any(state.u < 0) or np.any(state.v < 0):
        raise ValueError("entropy requires nonnegative fields")
    eu = geom.omega_weights @ (xlogy(state.u, state.u) - state.u)
    ev = geom.gamma_weights @ (xlogy(state.v, state.v) - state.v)
    return float(eu + ev)


def equilibrium_entropy(eq: Equilibrium, geom: GridGeometry) -> float:
    return entropy(equilibrium_state(eq, geom), geom)


def _face_quadrature(values: np.ndarray, faces: np.ndarray,
                     coeffs: np.ndarray, floor: float) -> float:
    """Sum of coeff * (jump)^2 / logmean(a, b), the discrete |grad w|^2 / w.

    The logarithmic face mean makes the sum equal to sum coeff * jump *
    (log b - log a), which is exactly the rate at which the two-point-flux
    diffusion operator produces entropy, so dE/dt = -D holds at the
    semi-discrete level and the identity check sees pure time-stepping
    error. Flooring the arguments keeps the sum finite when a cell hits
    zero; each floored term still underestimates the exact integrand."""
    if len(faces) == 0:
        return 0.0
    a = np.maximum(values[faces[:, 0]], floor)
    b = np.maximum(values[faces[:, 1]], floor)
    jump = b - a
    with np.errstate(divide="ignore", invalid="ignore"):
        logmean = np.where(jump == 0.0, a, jump / np.log(b / a))
    return float(np.sum(coeffs * jump * jump / logmean))


def dissipation(state: State, geom: GridGeometry, params: ModelParams,
                floor: float = 1e-30) -> float:
    """Entropy dissipation: Fisher-type gradient terms plus the boundary
    reaction term (v^beta - u^alpha) log(v^beta / u^alpha) >= 0.

    floor > 0 bounds log arguments and denominators away from zero, making
    the result a finite lower bound of the exact functional. floor = 0
    requests the unfloored evaluation, which returns inf as soon as a
    zero/positive pairing occurs.
    """
    if floor < 0:
        raise ValueError(f"floor must be nonnegative, got {floor}")
    if np.any(state.u < 0) or np.any(state.v < 0):
        raise ValueError("dissipation requires nonnegative fields")
    eff_floor = floor if floor > 0 else 0.0

    if eff_floor == 0.0:
        return _dissipation_unfloored(state, geom, params)

    d = params.delta_u * _face_quadrature(
        state.u, geom.omega_faces, geom.omega_face_coeffs, eff_floor)
    if params.delta_v > 0:
        d += params.delta_v * _face_quadrature(
            state.v, geom.gamma_faces, geom.gamma_face_coeffs, eff_floor)

    ut = trace(state.u, geom)
    a = state.v ** params.beta
    b = ut ** params.alpha
    log_ratio = np.log(np.maximum(a, eff_floor) / np.maximum(b, eff_floor))
    integrand = np.where(a == b, 0.0, (a - b) * log_ratio)
    d += float(geom.gamma_weights @ integrand)
    return d


def _dissipation_unfloored(state, geom, params):
    for values, faces, coeffs, delta in (
            (state.u, geom.omega_faces, geom.omega_face_coeffs, params.delta_u),
            (state.v, geom.gamma_faces, geom.gamma_face_coeffs, params.delta_v)):
        if delta == 0 or len(faces) == 0:
            continue
        a = values[faces[:, 0]]
        b = values[faces[:, 1]]
        if np.any((a != b) & ((a == 0) | (b == 0))):
            return np.inf
    ut = trace(state.u, geom)
    a = state.v ** params.beta
    b = ut ** params.alpha
    if np.any((a != b) & ((a == 0) | (b == 0))):
        return np.inf
    return dissipation(state, geom, params, floor=np.finfo(float).tiny)


def entropy_decomposition(state: State, geom: GridGeometry,
                          params: ModelParams, eq: Equilibrium):
    """Split E - E_eq into spatial mixing (I1) and mean-vs-equilibrium (I2).

    I1 compares each field with its spatial mean, I2 compares the means with
    the equilibrium constants. Both are nonnegative and they sum to the
    relative entropy when the state's mass matches eq.mass, which is required
    to 1e-8 relative.
    """
    m = mass(state, geom, params)
    if abs(m - eq.mass) > 1e-8 * max(abs(eq.mass), 1.0):
        raise ValueError(
            f"state mass {m!r} does not match equilibrium mass {eq.mass!r}")
    u_bar = float(geom.omega_weights @ state.u) / geom.omega_measure
    v_bar = float(geom.gamma_weights @ state.v) / geom.gamma_measure

    i1 = float(geom.omega_weights @ (xlogy(state.u, state.u)
                                     - xlogy(state.u, u_bar))
               + geom.gamma_weights @ (xlogy(state.v, state.v)
                                       - xlogy(state.v, v_bar)))

    def bregman(x, x_inf):
        return xlogy(x, x) - xlogy(x, x_inf) - (x - x_inf)

    i2 = float(geom.omega_measure * bregman(u_bar, eq.u_inf)
               + geom.gamma_measure * bregman(v_bar, eq.v_inf))
    return i1, i2


def ckp_constant(params: ModelParams, total_mass: float) -> float:
    """Csiszar-Kullback-Pinsker constant min(alpha,beta)/(8M) tying relative
    entropy to squared L1 distances from equilibrium."""
    if total_mass <= 0:
        raise ValueError(f"total mass must be positive, got {total_mass}")
    return min(params.alpha, params.beta) / (8.0 * total_mass)
