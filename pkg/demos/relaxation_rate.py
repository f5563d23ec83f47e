"""
relaxation_rate.py
------------------
Measure the exponential rate at which a bulk/surface pair equilibrates.

Runs the same initial data with and without surface diffusion and fits
log E_rel against t on the tail of each trajectory. The fitted slope is the
empirical decay constant; eed_min = min D / E_rel over the window is the
direct witness of the entropy-dissipation estimate that proves the decay.
"""
import numpy as np

from volsurf.cli import build_initial_state
from volsurf.diagnostics import fit_rate, record
from volsurf.grid import build_periodic_strip
from volsurf.model import ModelParams
from volsurf.stepper import StepConfig


def run_and_fit(delta_v):
    geom = build_periodic_strip(16, 8, 1.0, 1.0)
    p = ModelParams(alpha=2.0, beta=1.0, delta_u=1.0, delta_v=delta_v)
    s0 = build_initial_state(
        {"kind": "cosine", "u0": 1.0, "v0": 0.5, "amplitude": 0.4}, geom)
    series = record(s0, geom, p, StepConfig(dt=1e-2), 10.0)

    # fast decay can push the whole default tail below the resolvable
    # floor; widen the window leftward until the fit has signal
    for skip in (0.3, 0.2, 0.1, 0.05):
        try:
            return series, fit_rate(series, skip_fraction=skip)
        except ValueError:
            continue
    raise RuntimeError("no resolvable window")


for delta_v in (0.0, 1.0):
    series, fit = run_and_fit(delta_v)
    print(f"delta_v = {delta_v:g}")
    print(f"  fitted rate C0 = {fit.c0_emp:.4f}   r^2 = {fit.r_squared:.6f}"
          f"   window t in [{fit.window[0]:.2f}, {fit.window[1]:.2f}]")
    print(f"  eed_min = {fit.eed_min:.4f}   (rate the estimate guarantees)")

    # monotone decay is exact, not asymptotic: no step increases E
    worst_step = float(np.max(np.diff(series.entropy)))
    print(f"  largest entropy increment over a step: {worst_step:+.2e}")

    half = series.entropy_rel[0] * 0.5
    t_half = series.times[np.argmax(series.entropy_rel <= half)]
    print(f"  relative entropy halves by t = {t_half:.2f}\n")

print("surface diffusion shortens the transient but is not needed for")
print("exponential decay; the bulk coupling alone drives v to equilibrium.")
