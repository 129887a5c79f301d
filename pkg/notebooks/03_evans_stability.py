# %% [markdown]
# # Evans-function stability checks
#
# A small-amplitude isentropic profile, a constant-coefficient system with a
# known unstable eigenvalue, and the zero-frequency value along a family of
# rescaled standing shocks.

# %%
import numpy as np

from steadytube.evans import contour_zeros, evans_at_zero, stability_index, standing_shock_evans, winding_count
from steadytube.steady import SteadyProfile, solve_steady
from steadytube.system import isentropic_ns, linear_system

# %%
sys = isentropic_ns(nu=0.5)
prof = solve_steady(sys, [1.0, 0.7], [0.75])
d0, rep = evans_at_zero(sys, prof)
print("c2 =", prof.c2, " det dPhi =", prof.det_dphi)
print("sign D(0) =", rep["sign_d0"], " D(0)/det dPhi =", rep["ratio"])
verdict = stability_index(sys, prof, n_grid=32)
print("stability index:", verdict.mu, " real-axis sign changes:", verdict.real_axis_sign_changes)
print("winding on half disk R = 20:", winding_count(sys, prof, {"kind": "half_disk", "radius": 20.0}))

# %% [markdown]
# Reversing the transport direction in the hyperbolic block produces a real
# unstable eigenvalue near 3.317, which the index, the winding count and the
# contour root finder all detect.

# %%
lin = linear_system([[-1.0, 1.0], [-1.0, 1.0]], [[1.0]], 1)
const = SteadyProfile.constant(lin, np.zeros(2))
print("index:", stability_index(lin, const, lambda_max=50.0).mu)
print("winding around 3.3:", winding_count(lin, const, {"kind": "circle", "center": 3.3, "radius": 1.0}))
print("zeros:", contour_zeros(lin, const, 3.3, 1.0))

# %%
for row in standing_shock_evans(0.5, [0.1, 0.05, 0.02]):
    print(f"eps = {row.eps:5.2f}  sign D(0) = {row.d0.sign_real():+d}  scaled D(0) = {row.d0_normalized:.5f}")
