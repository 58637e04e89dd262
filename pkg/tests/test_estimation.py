import math

import numpy as np
import pytest

from qsampleflow.errors import InsufficientSamplesError, ParameterError
from qsampleflow.estimation import (
    constant_observable,
    continuous_mean_var,
    coordinate_observable,
    cosine_observable,
    end_to_end_mean_experiment,
    error_budget,
    estimate_lipschitz,
    grid_mean_var,
    lemma_d_checks,
    median_of_means,
    mom_groups,
    tanh_observable,
    tv_perturbation_cases,
)
from qsampleflow.grid import GridSpec
from qsampleflow.models import GaussianLinear
from qsampleflow.qsample import DiscretizedDistribution, discretize_density
from qsampleflow.rng import make_rng


def test_grid_moments_examples():
    g = GridSpec(1.0, 4, 1)
    uniform = DiscretizedDistribution(np.full(4, 0.25), g)
    assert grid_mean_var(uniform, coordinate_observable(1.0)) == pytest.approx((0.375, 0.078125))
    assert grid_mean_var(uniform, constant_observable(2.5)) == pytest.approx((2.5, 0.0))
    point = DiscretizedDistribution(np.eye(4)[1], g)
    assert grid_mean_var(point, coordinate_observable(1.0)) == pytest.approx((0.25, 0.0))


def test_observables_declare_valid_constants():
    for f in (coordinate_observable(16.0), cosine_observable(16.0), tanh_observable(16.0, 8.0, 2.0),
              constant_observable(-3.0)):
        assert f.validate(16.0, 1)


def test_continuous_moments_of_gaussian():
    fam = GaussianLinear(0.5, 0.8, L=16.0)
    mu, var = continuous_mean_var(fam, 1.0, coordinate_observable(16.0))
    assert mu == pytest.approx(8.5, abs=1e-9)
    assert var == pytest.approx(0.64, abs=1e-9)


def test_lipschitz_estimate():
    fam = GaussianLinear(0.0, 1.0, L=16.0)
    exact = math.exp(-0.5) / math.sqrt(2 * math.pi)  # max |p'| for a unit Gaussian
    est = estimate_lipschitz(lambda x: fam.density(0.0, x), 16.0, 1)
    assert exact <= est <= 1.06 * exact


def test_median_of_means_basics():
    assert mom_groups(0.01) == math.ceil(8 * math.log(100))
    assert median_of_means(np.full(100, 3.25), 0.01) == 3.25
    rng = np.random.default_rng(0)
    x = rng.standard_normal(5000)
    assert median_of_means(x, 0.01) == median_of_means(rng.permutation(x), 0.01)
    with pytest.raises(InsufficientSamplesError):
        median_of_means(np.ones(5), 0.01)
    with pytest.raises(ParameterError):
        mom_groups(1.5)


@pytest.mark.parametrize("kind", ["normal", "pareto"])
def test_median_of_means_coverage(kind):
    m, delta, C, trials = 10_000, 0.01, 4.0, 1000
    rng = make_rng(42)
    if kind == "normal":
        data, mean, sigma = rng.standard_normal((trials, m)), 0.0, 1.0
    else:
        a = 2.5  # Lomax (Pareto II) with shape 2.5
        data = rng.pareto(a, (trials, m))
        mean, sigma = 1 / (a - 1), math.sqrt(a / ((a - 1) ** 2 * (a - 2)))
    radius = C * sigma * math.sqrt(math.log(1 / delta) / m)
    hits = sum(abs(median_of_means(row, delta, seed=i) - mean) <= radius for i, row in enumerate(data))
    assert hits >= 0.99 * trials


def test_error_budget_examples():
    b = error_budget(M=1, lp=1, lf=1, d=1, L=1, N=100, eps=0)
    assert b.eps_mean == pytest.approx(0.03)
    assert b.eps_var == pytest.approx(0.06 + 0.04)
    b2 = error_budget(M=1, lp=1, lf=1, d=1, L=1, N=200, eps=0)
    assert b2.eps_mean == pytest.approx(b.eps_mean / 2) and b2.eps_var == pytest.approx(b.eps_var / 2)
    zero = error_budget(M=0, lp=2, lf=3, d=2, L=4, N=64, eps=0.1)
    assert zero.eps_mean == pytest.approx(3 * math.sqrt(2) * 4 / 64) and zero.eps_var == 0


def test_error_budget_second_route():
    rng = np.random.default_rng(1)
    for _ in range(20):
        M, lp, lf, L, eps = rng.uniform(0.1, 5, 5)
        d, N = int(rng.integers(1, 3)), int(2 ** rng.integers(3, 8))
        b = error_budget(M, lp, lf, d, L, N, eps)
        # written out term by term from the two lemma bounds plus the TV terms
        mean_disc = 2 * M * lp * math.sqrt(d) * L ** (d + 1) / N + lf * math.sqrt(d) * L / N
        var_disc = 6 * M * M * lp * math.sqrt(d) * L ** (d + 1) / N + 4 * M * lf * math.sqrt(d) * L / N
        assert b.eps_mean == pytest.approx(mean_disc + 2 * M * eps, rel=1e-13)
        assert b.eps_var == pytest.approx(var_disc + 6 * M * M * eps, rel=1e-13)


def test_lemma_checks():
    fam = GaussianLinear(0.5, 1.0, L=16.0)
    f = coordinate_observable(16.0)
    reps = [lemma_d_checks(fam, 1.0, f, GridSpec(16.0, n, 1)) for n in (64, 128)]
    assert all(r.passed for r in reps)
    const = lemma_d_checks(fam, 1.0, constant_observable(2.0), GridSpec(16.0, 32, 1))
    assert const.mean_gap < 1e-12 and const.var_gap < 1e-12
    dist = discretize_density(fam, 1.0, GridSpec(16.0, 32, 1))
    case0 = tv_perturbation_cases(dist, f)[0]
    assert case0["eps"] == 0 and case0["mean_gap"] == 0 and case0["var_gap"] == 0


def test_end_to_end_constant_and_determinism():
    fam = GaussianLinear(0.0, 1.0, L=16.0)
    g = GridSpec(16.0, 64, 1)
    const = end_to_end_mean_experiment(fam, fam, g, constant_observable(1.5), 2000, 0.01, seed=3, r=100)
    assert const.deviation < 1e-12
    a = end_to_end_mean_experiment(fam, fam, g, coordinate_observable(16.0), 2000, 0.01, seed=5, r=100)
    b = end_to_end_mean_experiment(fam, fam, g, coordinate_observable(16.0), 2000, 0.01, seed=5, r=100)
    assert a.to_dict() == b.to_dict()
