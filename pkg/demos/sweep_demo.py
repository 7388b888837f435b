"""Sweep the half-width across the certified threshold on the shipped
half-circle and print where the coefficient changes sign."""

import io

from tubecert.cli import ExperimentConfig, run_sweep, write_sweep_csv

cfg = ExperimentConfig(curve="unit_arc", p=1.5, q=10, eps_ladder="0.01:0.3:12")
rows = run_sweep(cfg)
buf = io.StringIO()
write_sweep_csv(rows, buf)
print(buf.getvalue())
for a, b in zip(rows, rows[1:]):
    if (a["C"] < 0) != (b["C"] < 0):
        print(f"C changes sign between eps={a['eps']:.4f} and eps={b['eps']:.4f}")
