"""Power against signal strength in the low-dimensional linear design.

Runs the shipped scenario with fewer replications (pass a number to change
it) and prints the power table. The graph-based test should track the
classical F-test closely; the theta = 0 rows show the size.

    python3 gallery/02_power_curve.py 100
"""

import sys
from pathlib import Path

from mscrt.simulation import ScenarioConfig, run_power_study, stderr_progress

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 50
path = Path(__file__).with_name("scenarios") / "lowdim_linear.json"
sc = ScenarioConfig.from_json(path.read_text())
sc = ScenarioConfig.from_dict({**sc.to_dict(), "reps": reps})
table = run_power_study(sc, progress=stderr_progress)

methods = [f"{a}:{b}" for a, b in sc.methods]
print(f"{'theta':>6} " + " ".join(f"{m:>22s}" for m in methods))
for theta in sc.theta_grid:
    cells = [table.get(theta, m) for m in methods]
    print(f"{theta:6.2f} " + " ".join(f"{c.power:15.3f} ± {c.se:.3f}" for c in cells))
