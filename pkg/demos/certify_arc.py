"""Critical half-width for tubes around circular arcs of several radii.

For the unit circle the coefficient has the closed-form root
eps = m / (1 + m) with m = -(1 - n/p + n/q) / (1 + 1/p + 1/q); the
computed bisection result is printed next to it.
"""

import numpy as np

from tubecert import Exponents, arc, build_chart, critical_eps

ex = Exponents(2, 1.5, 10)
m = -ex.base / ex.slope
print(f"exponents n={ex.n} p={ex.p} q={ex.q}  critical q={ex.critical:.4f}")
for R in (0.5, 1.0, 2.0):
    chart = build_chart(arc([0, 0], R, 0.0, np.pi), R)
    cert = critical_eps(chart, ex)
    closed = R * m / (1 + m)
    print(f"R={R:<4} eps_bar={cert.eps_bar:.8f}  closed form {closed:.8f}  {cert.verdict}")
print()
print(cert.statement())
