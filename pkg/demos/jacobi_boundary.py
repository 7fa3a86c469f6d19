"""Discrete Jacobi dynamics and the boundary value of the canonical field.

The field on the first interval is f_1 e_1 + xi_1(x) e_1^perp.  Its value
xi_1(0, t) follows from the continuity conditions as
sqrt(l_1) (u_1 - q_1 h - rho_1 v_2) with u_1 = h_t + h_{t-1}.  The shorter
form -rho_1 v_2 sqrt(l_1) - h (1/sqrt(l_1) - i sqrt(l_1)) is printed next
to it for comparison.
"""
import numpy as np

from canonsys.builders import build_jacobi_from_partition
from canonsys.timedomain import (jacobi_fields_from_v, jacobi_response_derived, jacobi_response_stated,
                                 solve_jacobi_discrete)

sys = build_jacobi_from_partition(np.ones(12), angles=np.arange(12) * np.pi / 2)
v = solve_jacobi_discrete(sys, np.r_[0, 0, 1, 0, 0, 0, 0, 0], 2)
print("quarter turns, h = delta at t = 2:  v_2 =", v.response.real)

rng = np.random.default_rng(1)
sys = build_jacobi_from_partition(rng.uniform(0.5, 1.5, 8), angles=np.cumsum(rng.uniform(0.5, 2.5, 8)))
h = np.r_[0, 0, rng.normal(size=6)]
v = solve_jacobi_discrete(sys, h, 5)
F = jacobi_fields_from_v(sys, v, "discrete")
xi0 = F.xi(1, [0.0])[:, 0]
derived = jacobi_response_derived(sys, v.field[:, 1], h, F.u[:, 0])
short = jacobi_response_stated(sys, v.field[:, 1], h)
print(" t   xi_1(0,t)      continuity     short form")
for t in range(2, len(h)):
    print(f"{t:2d}  {xi0[t].real:12.5f}  {derived[t].real:12.5f}  {short[t].real:12.5f}")
print("continuity defect at the breakpoints:", F.continuity_defect())
