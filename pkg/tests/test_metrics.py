import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats

from abcgan.metrics import (MetricError, box_mass, kl_histogram, l1_mean_error, l1_trajectory,
                            posterior_report)
from abcgan.simulators import mixture_pdf, sim_mixture_normal


def test_kl_consistency_oracle():
    x = sim_mixture_normal(0.0, 0, 10**6)
    assert kl_histogram(mixture_pdf, x).kl <= 0.05


def test_kl_point_mass_is_zero():
    # all samples and all density mass inside one bin
    pdf = lambda t: np.where(np.abs(t - 0.1) < 0.05, 1.0, 0.0)
    # only the add-eps smoothing (100 bins x 1e-9) separates q from p
    assert kl_histogram(pdf, np.full(10, 0.1)).kl == pytest.approx(0.0, abs=1e-6)


def test_kl_reports_dropped_samples():
    res = kl_histogram(stats.norm.pdf, np.array([0.0, 0.5, 11.0, -20.0]))
    assert res.n_in_range == 2 and res.n_dropped == 2


def test_kl_no_samples_in_range():
    with pytest.raises(MetricError):
        kl_histogram(stats.norm.pdf, np.array([50.0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kl_nonnegative_and_order_invariant(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(200) * rng.uniform(0.3, 3)
    kl = kl_histogram(stats.norm.pdf, x).kl
    assert kl >= -1e-12
    assert kl_histogram(stats.norm.pdf, rng.permutation(x)).kl == pytest.approx(kl, abs=1e-12)


def test_kl_decreases_with_sample_size():
    rng = np.random.default_rng(1)
    small = kl_histogram(stats.norm.pdf, rng.standard_normal(10**3)).kl
    large = kl_histogram(stats.norm.pdf, rng.standard_normal(10**6)).kl
    assert large < small


def test_kl_symmetrize_switch():
    half = np.abs(np.random.default_rng(2).standard_normal(10**5))
    assert kl_histogram(stats.norm.pdf, half, symmetrize=True).kl < kl_histogram(stats.norm.pdf, half).kl


def test_l1_examples():
    t = np.ones(16)
    assert l1_mean_error(t, t) == 0.0
    assert l1_mean_error(t + 1, t) == 16.0
    with pytest.raises(MetricError):
        l1_mean_error(np.ones(3), np.ones(4))


@given(hnp.arrays(np.float64, 5, elements=st.floats(-100, 100)),
       hnp.arrays(np.float64, 5, elements=st.floats(0, 100)))
def test_l1_monotone_in_added_error(est, extra):
    truth = np.zeros(5)
    base = l1_mean_error(est, truth)
    assert l1_mean_error(est + np.sign(est + 1e-300) * extra, truth) >= base - 1e-9


def test_l1_trajectory_uses_batch_means():
    thetas = np.array([[[0.0, 2.0], [2.0, 2.0]], [[1.0, 1.0], [1.0, 1.0]]])
    np.testing.assert_allclose(l1_trajectory(thetas, [1.0, 1.0]), [1.0, 0.0])


def test_posterior_report_examples():
    rep = posterior_report(np.full((5, 2), 0.7), [0, 0], [1, 1])
    np.testing.assert_array_equal(rep.std, [0, 0])
    rep = posterior_report(np.array([0.0, 2.0]), 0, 2)
    assert rep.mean[0] == 1.0 and rep.std[0] == 1.0
    with pytest.raises(MetricError):
        posterior_report(np.array([[1.0]]), 0, 2)


@given(hnp.arrays(np.float64, (30, 2), elements=st.floats(0, 5)))
def test_posterior_bins_sum_to_count(x):
    rep = posterior_report(x, [0, 0], [5, 5], bins=50)
    assert rep.counts.shape == (2, 50)
    assert np.all(rep.counts.sum(axis=1) == 30)


def test_box_mass_thirds():
    # truth sits in the first third of both boxes: [0, 4] and [0, 2/3]
    x = np.array([[0.5, 0.1], [5.0, 0.2], [3.7, 1.9]])
    np.testing.assert_allclose(box_mass(x, [0, 0], [12, 2], [3.6, 0.6]), [2 / 3, 2 / 3])
