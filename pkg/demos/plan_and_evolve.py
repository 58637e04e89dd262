"""Plan a simulation, run the product formula on a trig potential and compare with a reference.

Run with ``python3 demos/plan_and_evolve.py``.
"""
import numpy as np

from qsampleflow.evolution import evolve, fixed_plan, local_error_bound, plan, reference_evolve
from qsampleflow.grid import GridSpec
from qsampleflow.models import default_trig_torus
from qsampleflow.spectral import StateVector

# The planner turns error targets and potential norms into a grid size and step count.
worked = plan(T=1, eps=0.1, s=2, c_s=2, V_max=1, Vdot_max=0, L=1, d=1)
print(f"worked example: N={worked.N} (n={worked.n} qubits per axis), r={worked.r:,} steps")

# That step count is a worst-case guarantee. In practice far fewer steps already
# land close to the exact evolution, which we check on a small grid.
model = default_trig_torus(1)
grid = GridSpec(model.L, 32, 1)
x = grid.points()[:, 0]
psi0 = StateVector(np.exp(np.cos(2 * np.pi * x / model.L)) + 0j, grid).normalize()
exact = reference_evolve(model, grid, psi0, 0.0, model.T, tol=1e-10)

for r in (64, 256, 1024):
    report = evolve(fixed_plan(grid, model.T, r), model, psi0, references={"exact": exact})
    per_step = local_error_bound(model, grid, 0.0, model.T / r)
    print(f"r={r:5d}: distance to exact {report.distances['exact']:.2e}, "
          f"norm drift {abs(report.norms[-1] - 1):.1e}, one-step bound {per_step:.2e}")

# Each factor of 4 in r cuts the global error by about 4, as expected for a
# second-order formula whose global error scales like r * dt^2.
