# %% [markdown]
# # Inviscid limits of isentropic shock-tube profiles
#
# Six boundary-data sets, one per limiting configuration, all with mass flux
# m = 1 and pressure p = rho^2.  For each we classify the inviscid limit, solve
# the viscous profile at nu = 0.01 and compare the observed shape with the
# predicted one.

# %%
import math

import numpy as np

from steadytube.limits import (
    GasBoundaryData, classify_inviscid, expected_shape, profile_shape, solve_isentropic_viscous,
)

RHO_PLUS = (-1 + math.sqrt(33)) / 4
ZOO = {
    "LeftBL_expansive": (1.2, 1.0),
    "RightBL_expansive": (0.7, 0.5),
    "DoubleCharacteristicBL": (1.0, 0.6),
    "RightBL_compressive": (0.5, 0.7),
    "LeftBL_compressive": (1.0, 1.2),
    "InteriorShock": (0.5, RHO_PLUS),
}

# %%
xs = np.linspace(0.0, 1.0, 11)
for kind, (r0, r1) in ZOO.items():
    data = GasBoundaryData.from_densities(r0, r1)
    cfg = classify_inviscid(data)
    vp = solve_isentropic_viscous(data, nu=0.01)
    ok = profile_shape(vp) == expected_shape(cfg)
    print(f"{kind:24s} classified as {cfg.kind:24s} shape match: {ok}")
    print("   rho(x) =", np.array2string(vp(xs), precision=4))

# %% [markdown]
# The shock data place the transition at r1 / (r0 + r1), where r0 and r1 are
# the linear decay rates at the two rest points.

# %%
cfg = classify_inviscid(GasBoundaryData.from_densities(0.5, RHO_PLUS))
print("decay rates:", cfg.rates, " shock location:", cfg.shock_location)
