"""Control and connecting operators for i D V_t + J V_x + psi V = 0.

Free transport (d1 = d2 = 1/2) gives C^T = 2 I.  One control reaches only
half of what a forward/auxiliary pair reaches.
"""
import numpy as np

from canonsys import SpaceGrid
from canonsys.bcmethod import connecting_operator, control_operator, controllability_check, reachability_defect
from canonsys.builders import DiracReduction

cases = {
    "free": DiracReduction.from_coefficients(0.5, 0.5, 0.0, SpaceGrid.from_step(2.2, 1 / 100)),
    "smooth": DiracReduction.from_coefficients(lambda x: 0.6 + 0.1 * np.sin(x), lambda x: 0.45 + 0.05 * np.cos(2 * x),
                                               lambda x: 0.3 * np.sin(3 * x), SpaceGrid.from_step(2.6, 1 / 100)),
}
for name, red in cases.items():
    W = control_operator(red, 1.0, "extended")
    C = connecting_operator(W)
    ctrl = controllability_check(W)
    d = reachability_defect(control_operator(red, 1.0, "single"), W)
    print(f"{name:7s} eig(C) in [{C.eigenvalues.min():.4f}, {C.eigenvalues.max():.4f}]"
          f"  |C - 2I|/2 = {C.distance_to(2.0):.2e}  sigma ratio {ctrl.ratio:.3f}"
          f"  single-control defect {d.defect:.2f}")
