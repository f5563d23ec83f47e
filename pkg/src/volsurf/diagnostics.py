"""Observables, audits and the explicit reference integrator.

A TraceSeries is the recorded history of one integration: conserved mass,
entropy, dissipation, distance from equilibrium and the mixing/translation
split of the relative entropy, one row per accepted step plus the initial
state. All audits consume the series (or the raw state trajectory) after the
fact; nothing here feeds back into the solvers.

The reference integrator is classical fixed-step RK4 on the identical
semi-discrete system, run at a step six orders of magnitude below the
horizon. It is deliberately restricted to tiny instances and exists to
cross-check the implicit path, so its inner loop is compiled with numba when
available (a pure-numpy fallback keeps the package importable without it).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import OracleFailure
from .grid import GridGeometry, trace
from .model import (Equilibrium, ModelParams, State, ckp_constant,
                    dissipation, entropy, entropy_decomposition,
                    equilibrium_entropy, mass, solve_equilibrium)
from .stepper import StepConfig, integrate, semi_discrete_rhs

__all__ = [
    "TraceSeries",
    "RateFit",
    "record",
    "check_entropy_dissipation_identity",
    "fit_rate",
    "audit_ckp",
    "audit_degenerate_coupling",
    "dense_oracle",
    "write_series_csv",
    "read_series_csv",
    "write_rate_fit",
]

SERIES_COLUMNS = ("t", "mass", "E", "D", "E_rel", "I1", "I2", "L1_u", "L1_v")


@dataclass
class TraceSeries:
    """Per-record observables of one run, plus the recorded states."""

    times: np.ndarray
    mass: np.ndarray
    entropy: np.ndarray
    dissipation: np.ndarray
    entropy_rel: np.ndarray
    i1: np.ndarray
    i2: np.ndarray
    l1_u: np.ndarray
    l1_v: np.ndarray
    equilibrium: Equilibrium
    entropy_eq: float
    states: list

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class RateFit:
    """Least-squares exponential decay fit of the relative entropy."""

    c0_emp: float
    r_squared: float
    window: tuple
    eed_min: float
    intercept: float


def record(state0: State, geom: GridGeometry, params: ModelParams,
           cfg: StepConfig, t_end: float, equilibrium: Equilibrium = None,
           floor: float = 1e-30) -> TraceSeries:
    """Integrate and record observables at the initial state and after every
    accepted step. The equilibrium defaults to the one matching the initial
    mass."""
    m0 = mass(state0, geom, params)
    eq = equilibrium if equilibrium is not None else solve_equilibrium(
        params, geom, m0)
    e_eq = equilibrium_entropy(eq, geom)

    rows = {name: [] for name in ("t", "m", "e", "d", "i1", "i2", "l1u", "l1v")}
    states = []

    def push(state):
        e = entropy(state, geom)
        i1, i2 = entropy_decomposition(state, geom, params, eq)
        rows["t"].append(state.time)
        rows["m"].append(mass(state, geom, params))
        rows["e"].append(e)
        rows["d"].append(dissipation(state, geom, params, floor=floor))
        rows["i1"].append(i1)
        rows["i2"].append(i2)
        rows["l1u"].append(float(geom.omega_weights @ np.abs(state.u - eq.u_inf)))
        rows["l1v"].append(float(geom.gamma_weights @ np.abs(state.v - eq.v_inf)))
        states.append(state.copy())

    push(state0)
    integrate(state0, geom, params, cfg, t_end, observer=push)

    e_arr = np.array(rows["e"])
    return TraceSeries(
        times=np.array(rows["t"]),
        mass=np.array(rows["m"]),
        entropy=e_arr,
        dissipation=np.array(rows["d"]),
        entropy_rel=e_arr - e_eq,
        i1=np.array(rows["i1"]),
        i2=np.array(rows["i2"]),
        l1_u=np.array(rows["l1u"]),
        l1_v=np.array(rows["l1v"]),
        equilibrium=eq,
        entropy_eq=e_eq,
        states=states,
    )


def check_entropy_dissipation_identity(series: TraceSeries,
                                       t_start: float = 0.0) -> float:
    """Largest normalized defect of dE/dt = -D over interior record times.

    The centered difference of E is compared against -D; the result shrinks
    linearly with dt on a fixed window. t_start can exclude an initial
    transient so runs with different dt are compared at matching times.
    """
    n = len(series)
    if n < 3:
        raise ValueError(f"need at least 3 records, got {n}")
    dts = np.diff(series.times)
    h = dts[0]
    if np.max(np.abs(dts - h)) > 1e-8 * abs(h):
        raise ValueError("identity check requires a uniform time grid")
    interior = np.arange(1, n - 1)
    interior = interior[series.times[interior] >= t_start]
    if len(interior) == 0:
        raise ValueError("t_start excludes every interior record")
    e = series.entropy
    d = series.dissipation
    resid = np.abs((e[interior + 1] - e[interior - 1]) / (2.0 * h) + d[interior])
    return float(np.max(resid / np.maximum(1.0, np.abs(d[interior]))))


def fit_rate(series: TraceSeries, skip_fraction: float = 0.3) -> RateFit:
    """Fit log E_rel against t on the tail window.

    Skips the initial skip_fraction of records, drops records whose relative
    entropy is at the cancellation floor (<= 10 eps |E_eq|), and needs at
    least two surviving records.
    """
    if not 0.0 <= skip_fraction < 1.0:
        raise ValueError(f"skip_fraction must be in [0, 1), got {skip_fraction}")
    n = len(series)
    start = int(math.floor(n * skip_fraction))
    t = series.times[start:]
    e_rel = series.entropy_rel[start:]
    d = series.dissipation[start:]
    floor = 10.0 * np.finfo(float).eps * abs(series.entropy_eq)
    keep = e_rel > floor
    if np.count_nonzero(keep) < 2:
        raise ValueError(
            "fewer than two records with resolvable relative entropy in window")
    t = t[keep]
    y = np.log(e_rel[keep])
    slope, intercept = np.polyfit(t, y, 1)
    fit = slope * t + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    eed = float(np.min(d[keep] / e_rel[keep]))
    return RateFit(c0_emp=float(-slope), r_squared=float(r2),
                   window=(float(t[0]), float(t[-1])), eed_min=eed,
                   intercept=float(intercept))


def audit_ckp(series: TraceSeries, params: ModelParams) -> float:
    """Smallest margin of E_rel >= C_ckp (||u - u_inf||_1^2 + ||v - v_inf||_1^2)
    over the records; nonnegative up to roundoff when the inequality holds."""
    c = ckp_constant(params, series.equilibrium.mass)
    margins = series.entropy_rel - c * (series.l1_u ** 2 + series.l1_v ** 2)
    return float(np.min(margins))


def audit_degenerate_coupling(states, geom: GridGeometry,
                              params: ModelParams) -> float:
    """Empirical constant in the boundary-coupling estimate for delta_v = 0.

    With U = sqrt(u), V = sqrt(v), returns the minimum over recorded states of

        [ ||U^a - V^b||^2_G + ||grad U||^2_O + ||U - mean(U)||^2_G ]
        / ||V - mean(V)||^2_G

    skipping states whose denominator is below 1e-14. Positive ratios are the
    evidence that surface oscillations are controlled by bulk quantities even
    without surface diffusion. Returns inf when every state is skipped.
    """
    if params.delta_v != 0:
        raise ValueError("degenerate coupling audit requires delta_v = 0")
    if not states:
        raise ValueError("empty trajectory")
    best = np.inf
    wg = geom.gamma_weights
    for state in states:
        v_sqrt = np.sqrt(state.v)
        v_mean = float(wg @ v_sqrt) / geom.gamma_measure
        den = float(wg @ (v_sqrt - v_mean) ** 2)
        if den <= 1e-14:
            continue
        u_sqrt = np.sqrt(state.u)
        ut_sqrt = np.sqrt(trace(state.u, geom))
        u_mean = float(geom.omega_weights @ u_sqrt) / geom.omega_measure
        jumps = u_sqrt[geom.omega_faces[:, 1]] - u_sqrt[geom.omega_faces[:, 0]]
        num = (float(wg @ (ut_sqrt ** params.alpha - v_sqrt ** params.beta) ** 2)
               + float(geom.omega_face_coeffs @ jumps ** 2)
               + float(wg @ (ut_sqrt - u_mean) ** 2))
        best = min(best, num / den)
    return float(best)


# --- explicit RK4 reference ------------------------------------------------

try:
    from numba import njit as _njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via forced fallback test
    _HAVE_NUMBA = False

MAX_ORACLE_UNKNOWNS = 64
ORACLE_DT_FACTOR = 1e-6


def _rk4_advance_python(z, m, h, n_u, geom, params):
    nu = n_u
    for _ in range(m):
        k1u, k1v = semi_discrete_rhs(z[:nu], z[nu:], geom, params)
        k1 = np.concatenate([k1u, k1v])
        z2 = z + 0.5 * h * k1
        k2u, k2v = semi_discrete_rhs(z2[:nu], z2[nu:], geom, params)
        k2 = np.concatenate([k2u, k2v])
        z3 = z + 0.5 * h * k2
        k3u, k3v = semi_discrete_rhs(z3[:nu], z3[nu:], geom, params)
        k3 = np.concatenate([k3u, k3v])
        z4 = z + h * k3
        k4u, k4v = semi_discrete_rhs(z4[:nu], z4[nu:], geom, params)
        k4 = np.concatenate([k4u, k4v])
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return z


if _HAVE_NUMBA:

    @_njit(cache=False)
    def _rhs_nb(z, out, n_u, au_data, au_indices, au_indptr,
                av_data, av_indices, av_indptr, tc, factors,
                alpha, beta, ku, kv, du, dv):
        n = z.shape[0]
        ng = n - n_u
        for i in range(n_u):
            acc = 0.0
            for p in range(au_indptr[i], au_indptr[i + 1]):
                acc += au_data[p] * z[au_indices[p]]
            out[i] = du * acc
        for j in range(ng):
            acc = 0.0
            for p in range(av_indptr[j], av_indptr[j + 1]):
                acc += av_data[p] * z[n_u + av_indices[p]]
            uj = z[tc[j]]
            if uj < 0.0:
                uj = 0.0
            vj = z[n_u + j]
            if vj < 0.0:
                vj = 0.0
            r = ku * uj ** alpha - kv * vj ** beta
            out[n_u + j] = dv * acc + beta * r
            out[tc[j]] += factors[j] * (-alpha) * r

    @_njit(cache=False)
    def _rk4_advance_nb(z0, m, h, n_u, au_data, au_indices, au_indptr,
                        av_data, av_indices, av_indptr, tc, factors,
                        alpha, beta, ku, kv, du, dv):
        n = z0.shape[0]
        z = z0.copy()
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        tmp = np.empty(n)
        for _ in range(m):
            _rhs_nb(z, k1, n_u, au_data, au_indices, au_indptr,
                    av_data, av_indices, av_indptr, tc, factors,
                    alpha, beta, ku, kv, du, dv)
            for i in range(n):
                tmp[i] = z[i] + 0.5 * h * k1[i]
            _rhs_nb(tmp, k2, n_u, au_data, au_indices, au_indptr,
                    av_data, av_indices, av_indptr, tc, factors,
                    alpha, beta, ku, kv, du, dv)
            for i in range(n):
                tmp[i] = z[i] + 0.5 * h * k2[i]
            _rhs_nb(tmp, k3, n_u, au_data, au_indices, au_indptr,
                    av_data, av_indices, av_indptr, tc, factors,
                    alpha, beta, ku, kv, du, dv)
            for i in range(n):
                tmp[i] = z[i] + h * k3[i]
            _rhs_nb(tmp, k4, n_u, au_data, au_indices, au_indptr,
                    av_data, av_indices, av_indptr, tc, factors,
                    alpha, beta, ku, kv, du, dv)
            for i in range(n):
                z[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        return z


def _stability_step(state0: State, geom: GridGeometry,
                    params: ModelParams) -> float:
    """Crude Gershgorin bound on the stiffest eigenvalue, used only to shrink
    the oracle step below the explicit stability limit in contrived cases."""
    lam = params.delta_u * float(np.max(
        np.abs(geom.bulk_laplacian).sum(axis=1)))
    if params.delta_v > 0 and geom.n_gamma > 0:
        lam = max(lam, params.delta_v * float(np.max(
            np.abs(geom.surface_laplacian).sum(axis=1))))
    bound = max(1.0, float(np.max(state0.u)), float(np.max(state0.v)))
    slope = (params.alpha ** 2 * params.k_u * bound ** (params.alpha - 1.0)
             * float(np.max(geom.trace_factors))
             + params.beta ** 2 * params.k_v * bound ** (params.beta - 1.0))
    lam = lam + slope
    return 1.0 / lam if lam > 0 else np.inf


def dense_oracle(state0: State, geom: GridGeometry, params: ModelParams,
                 t_end: float, n_checkpoints: int = 101):
    """Classical RK4 reference trajectory on the same spatial discretization.

    Runs at step 1e-6 * horizon (smaller if the explicit stability limit
    demands), restricted to instances with at most 64 unknowns. Returns the
    states at n_checkpoints evenly spaced times including both endpoints.
    Raises OracleFailure on NaN/overflow.
    """
    n_tot = geom.n_omega + geom.n_gamma
    if n_tot > MAX_ORACLE_UNKNOWNS:
        raise ValueError(
            f"oracle limited to {MAX_ORACLE_UNKNOWNS} unknowns, got {n_tot}")
    if state0.u.shape != (geom.n_omega,) or state0.v.shape != (geom.n_gamma,):
        raise ValueError("state does not match geometry dimensions")
    span = t_end - state0.time
    if span < 0:
        raise ValueError(f"t_end={t_end} is before state time {state0.time}")
    if span == 0:
        return [state0.copy()]
    if n_checkpoints < 2:
        raise ValueError(f"need at least 2 checkpoints, got {n_checkpoints}")

    h_max = min(ORACLE_DT_FACTOR * span, _stability_step(state0, geom, params))
    seg = span / (n_checkpoints - 1)
    m = max(1, int(math.ceil(seg / h_max)))
    h = seg / m

    n_u = geom.n_omega
    z = np.concatenate([state0.u, state0.v]).astype(float)
    out = [state0.copy()]
    if _HAVE_NUMBA:
        au = geom.bulk_laplacian
        av = geom.surface_laplacian
        args = (n_u, au.data, au.indices, au.indptr,
                av.data, av.indices, av.indptr,
                geom.trace_cells, geom.trace_factors,
                float(params.alpha), float(params.beta),
                float(params.k_u), float(params.k_v),
                float(params.delta_u), float(params.delta_v))
    for c in range(1, n_checkpoints):
        if _HAVE_NUMBA:
            z = _rk4_advance_nb(z, m, h, *args)
        else:
            z = _rk4_advance_python(z, m, h, n_u, geom, params)
        if not np.all(np.isfinite(z)):
            raise OracleFailure(
                f"reference integration produced non-finite values near "
                f"t={state0.time + c * seg:g}; reduce the step")
        scale = max(1.0, float(np.max(np.abs(z))))
        if np.min(z) < -1e-10 * scale:
            raise OracleFailure(
                f"reference integration left the nonnegative cone near "
                f"t={state0.time + c * seg:g}; reduce the step")
        zc = np.maximum(z, 0.0)
        out.append(State(zc[:n_u], zc[n_u:], state0.time + c * seg))
    return out


# --- plain-text export -----------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_series_csv(series: TraceSeries, path):
    """CSV with header t,mass,E,D,E_rel,I1,I2,L1_u,L1_v at full precision."""
    cols = (series.times, series.mass, series.entropy, series.dissipation,
            series.entropy_rel, series.i1, series.i2, series.l1_u, series.l1_v)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(SERIES_COLUMNS) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_series_csv(path):
    """Read a series CSV back into a dict of column arrays."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = [[] for _ in header]
        for line in fh:
            if not line.strip():
                continue
            for slot, tok in zip(data, line.strip().split(",")):
                slot.append(float(tok))
    return {name: np.array(vals) for name, vals in zip(header, data)}


def write_rate_fit(fit: RateFit, path):
    """Flat key-value text form of a RateFit."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"C0_emp={_fmt(fit.c0_emp)}\n")
        fh.write(f"r_squared={_fmt(fit.r_squared)}\n")
        fh.write(f"window_start={_fmt(fit.window[0])}\n")
        fh.write(f"window_end={_fmt(fit.window[1])}\n")
        fh.write(f"eed_min={_fmt(fit.eed_min)}\n")
        fh.write(f"intercept={_fmt(fit.intercept)}\n")
