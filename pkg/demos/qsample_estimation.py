"""Prepare a Gaussian qsample, draw Born samples and estimate a mean with median of means.

Run with ``python3 demos/qsample_estimation.py``.
"""
import numpy as np

from qsampleflow.estimation import (
    continuous_mean_var,
    coordinate_observable,
    end_to_end_mean_experiment,
    estimate_lipschitz,
    median_of_means,
    prepare_state,
)
from qsampleflow.grid import GridSpec
from qsampleflow.models import GaussianLinear
from qsampleflow.qsample import born_sample, tv_distance

# A path that moves a standard Gaussian to N(1.5, 0.6^2) on a box of side 16.
family = GaussianLinear(1.5, 0.6, L=16.0)
grid = GridSpec(16.0, 64, 1)
prepared = prepare_state(family, family, grid, r=400)
print(f"prepared state is {prepared.prep_error:.2e} from the ideal qsample in l2")

target_probs = np.abs(prepared.target.amplitudes) ** 2
state_probs = np.abs(prepared.state.amplitudes) ** 2
print(f"total variation between Born distributions: {tv_distance(state_probs, target_probs):.2e}")

# Born samples are grid indices, mapped back to points in the box.
idx = born_sample(prepared.state, 5, seed=3, flat=True)
print("five Born samples:", np.round(grid.points()[idx, 0], 3))

f = coordinate_observable(16.0)
mu, var = continuous_mean_var(family, family.T, f)
rng = np.random.default_rng(0)
heavy = rng.standard_t(2.5, size=20_000)
print(f"median of means on Student-t data: {median_of_means(heavy, 0.01):+.4f} (plain mean {heavy.mean():+.4f})")

lp = estimate_lipschitz(lambda x: family.density(family.T, x), family.L, family.d)
rep = end_to_end_mean_experiment(family, family, grid, f, 10_000, 0.01, seed=1, prepared=prepared,
                                 lp=lp, truth=(mu, var))
print(f"true mean {mu:.4f}, estimate {rep.estimate:.4f}, deviation {rep.deviation:.2e}")
print(f"statistical radius {rep.radius:.2e}, discretization allowance {rep.budget.eps_mean:.2e}")
