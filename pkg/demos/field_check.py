"""Closed-form field derivatives against finite differences, and the
boundary sign of the field on a wavy spline tube."""

import numpy as np

from tubecert import boundary_positivity, build_chart, spline, verify_by_finite_differences

x = np.linspace(0, 3, 13)
chart = build_chart(spline(np.c_[x, 0.25 * np.sin(2 * x)]), 1.0)
print(f"eps_bar1 = {chart.eps_bar1:.4f}  ({', '.join(chart.limits)})")
for eps in (0.1, 0.5 * chart.eps_bar1):
    rep = verify_by_finite_differences(chart, eps)
    print(f"eps={eps:.3f}  div {rep.max_div_error:.1e}  form {rep.max_form_error:.1e}  "
          f"dv/dN {rep.max_dvN_error:.1e}  dv/dT {rep.max_dvT_error:.1e}")
for domain in ("D", "Omega"):
    pos = boundary_positivity(chart, 0.9 * chart.eps_bar1, domain=domain)
    print(f"{domain:<5} min v.nu = {pos.min_value:.4f} on {pos.piece} at (t, r) = "
          f"({pos.location[0]:.3f}, {pos.location[1]:.3f})")
