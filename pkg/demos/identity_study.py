"""Discrete residual of the integral identity under mesh refinement.

A torsion-type source problem on a straight tube and a subcritical ground
state on a quarter-arc tube; the residual shrinks roughly like h^2.
"""

import numpy as np

from tubecert import (Nonlinearity, arc, build_chart, ground_state, inequality_check,
                      pohozaev_residual, segment, solve_source)

seg = build_chart(segment([-1, 0], [1, 0]), 0.2)
one = Nonlinearity.constant(1.0)
print("segment tube, p=2, source 1, eps=0.1")
for k in (8, 16, 32):
    sol = solve_source(seg.mesh(0.1, 0.1 / k), 2.0, 1.0)
    rep = pohozaev_residual(sol, seg, 2.0, one)
    print(f"  h=eps/{k:<3} lhs={rep.lhs:.6f}  relative residual {rep.relative_residual:.2e}")

chart = build_chart(arc([0, 0], 1.0, 0.0, np.pi / 2), 0.5)
f = Nonlinearity.power(4)
print("quarter-arc tube, p=1.5, f=u^3, eps=0.2")
for k in (4, 8, 16):
    sol = ground_state(chart.mesh(0.2, 0.2 / k), 1.5, f)
    rep = pohozaev_residual(sol, chart, 1.5, f)
    ineq = inequality_check(sol, chart, (2, 1.5, 4), f)
    print(f"  h=eps/{k:<3} |u|_inf={sol.u_inf:.4f}  relative residual {rep.relative_residual:.2e}  "
          f"energy gap {ineq.energy_gap:.1e}")
