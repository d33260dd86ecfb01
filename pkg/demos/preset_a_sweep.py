"""Sweep preset A and plot it when matplotlib is available.

Run:  python3 demos/preset_a_sweep.py [steps]

Writes preset_a.csv (and preset_a.png) in the current directory.
"""

import csv
import sys

from gfcap.cli import RunConfig, cmd_sweep

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 21
cmd_sweep(RunConfig(command="sweep", preset="A", steps=steps, out="preset_a.csv"))

with open("preset_a.csv") as fh:
    rows = [r for r in csv.DictReader(fh) if r["sweep_value"] and r["capacity"]]

curves = {}
for r in rows:
    curves.setdefault((r["series"], r["method"]), []).append((float(r["sweep_value"]), float(r["capacity"])))

for (series, method), pts in sorted(curves.items()):
    lo, hi = min(c for _, c in pts), max(c for _, c in pts)
    print(f"{series:>14s} {method:>9s}: {len(pts)} points, capacity in [{lo:.4f}, {hi:.4f}] nats")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit(0)

fig, ax = plt.subplots(figsize=(7, 4.5))
for (series, method), pts in sorted(curves.items()):
    if method == "iterate":
        continue  # indistinguishable from the certificate curve
    xs, ys = zip(*pts)
    ax.plot(xs, ys, "--" if method == "waterfill" else "-", label=f"{series} {method}")
ax.set_xlabel("alpha1")
ax.set_ylabel("capacity (nats)")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig("preset_a.png", dpi=120)
print("wrote preset_a.png")
