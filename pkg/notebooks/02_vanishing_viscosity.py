# %% [markdown]
# # Vanishing-viscosity rates
#
# Distances between viscous profiles and their inviscid limits over nu from
# 1e-2 to 1e-4.  The shock converges at first order in L1, and so does its
# location.  The double characteristic layer decays only algebraically, which
# shows up as a half-order rate in L2 and an L1 error of size nu log(1/nu).

# %%
import math

from steadytube.limits import GasBoundaryData, convergence_study

NU = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
shock = GasBoundaryData.from_densities(0.5, (-1 + math.sqrt(33)) / 4)
double = GasBoundaryData.from_densities(1.0, 0.6)

# %%
for data in (shock, double):
    table = convergence_study(data, NU, p_list=(1, 2))
    print(table.kind)
    for row in table.rows:
        print("  ", {k: round(v, 8) if isinstance(v, float) else v for k, v in row.items()})
    print("   fitted slopes:", table.slopes)

# %% [markdown]
# Large-viscosity limit for the full gas: the H1 distance to the explicit
# limiting profile falls like 1/alpha with nu/alpha held fixed.

# %%
from steadytube.limits import FullGasParams, full_gas_large_visc

table = full_gas_large_visc(FullGasParams(u0=1.0, e0=1.0, u1=2.0, e1=1.0), [10.0, 30.0, 100.0, 300.0])
for row in table.rows:
    print(f"alpha = {row['alpha']:6.0f}   H1 error = {row['h1_error']:.3e}")
print("slope:", table.slope)
