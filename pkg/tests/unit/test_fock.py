import itertools
import math

import numpy as np
import pytest

from pairscope import fock, oracle
from pairscope.exceptions import ConfigError
from pairscope.types import (
    Coherent,
    CorrelationObservable,
    IdealPair,
    LossNetwork,
    MultiModeCorrelated,
    TwoModeSqueezed,
    WeakSpdc,
)

ORACLE_TRANSMITTANCES = [0.0, 0.3, 0.7, 1.0]


def test_PhotonNumberDistribution_rejects_bad_tables():
    with pytest.raises(ConfigError):
        fock.PhotonNumberDistribution(np.zeros((2, 3)))
    with pytest.raises(ConfigError):
        fock.PhotonNumberDistribution(np.array([1.5, -0.5]))
    with pytest.raises(ConfigError):
        fock.PhotonNumberDistribution(np.array([0.5, 0.2]))
    dist = fock.PhotonNumberDistribution(np.array([0.5, 0.2]), deficit=0.3)
    assert dist.total == pytest.approx(0.7)
    with pytest.raises(ConfigError):
        fock.PhotonNumberDistribution(np.zeros(3), deficit=2.0)
    with pytest.raises(ConfigError):
        fock.PhotonNumberDistribution(np.array([0.75, 0.75]), deficit=-0.5)


def test_PhotonNumberDistribution_prunes_and_freezes():
    probs = np.zeros((3, 3))
    probs[1, 1] = 1.0
    probs[0, 2] = 1e-40
    dist = fock.PhotonNumberDistribution(probs)
    assert list(dist.items()) == [((1, 1), 1.0)]
    assert dist[(5, 0)] == 0.0
    with pytest.raises(ValueError):
        dist.probs[0, 0] = 1.0


def test_PhotonNumberDistribution_from_mapping():
    dist = fock.PhotonNumberDistribution.from_mapping({(0, 0): 0.75, (2, 1): 0.25}, 2, 2)
    assert dist[(2, 1)] == 0.25
    assert dist.marginal(0) == pytest.approx([0.75, 0.0, 0.25])
    with pytest.raises(ConfigError):
        fock.PhotonNumberDistribution.from_mapping({(3, 0): 1.0}, 2, 2)


def test_expand_source_ideal_pair():
    dist = fock.expand_source(IdealPair())
    assert dist.n_max == 2
    assert dist[(1, 1)] == 1.0
    assert dist.deficit == 0.0


def test_expand_source_weak_spdc():
    dist = fock.expand_source(WeakSpdc(beta=0.1))
    assert dist[(0, 0)] == pytest.approx(0.99)
    assert dist[(1, 1)] == pytest.approx(0.01)
    assert dist[(1, 0)] == 0.0


def test_expand_source_squeezed_vacuum_reports_deficit():
    dist = fock.expand_source(TwoModeSqueezed(beta=0.5, n_max=6))
    assert dist.deficit == pytest.approx(0.25**7)
    assert dist.total + dist.deficit == pytest.approx(1.0, abs=1e-15)
    assert dist[(3, 3)] == pytest.approx(0.75 * 0.25**3)


def test_expand_source_multi_mode_correlated():
    dist = fock.expand_source(MultiModeCorrelated(modes=3, beta=0.2, n_max=3))
    assert dist.mode_count == 3
    assert dist[(2, 2, 2)] == pytest.approx(0.96 * 0.04**2)
    assert dist[(2, 1, 2)] == 0.0


@pytest.mark.parametrize("mean", [0.5, 4.0, 30.0])
def test_expand_source_coherent_truncation_is_negligible(mean):
    dist = fock.expand_source(Coherent(mean_photons=mean))
    assert dist.deficit < 1e-15
    n = np.arange(dist.n_max + 1)
    assert np.dot(dist.marginal(0), n) == pytest.approx(mean, rel=1e-12)


@pytest.mark.parametrize("t", ORACLE_TRANSMITTANCES + [0.05, 0.999])
def test_thinning_kernel_is_column_stochastic(t):
    kernel = fock.thinning_kernel(t, 8)
    assert kernel.sum(axis=0) == pytest.approx(np.ones(9), abs=1e-14)
    assert np.all(np.triu(kernel) == kernel)


def test_thinning_kernel_rejects_bad_transmittance():
    with pytest.raises(ConfigError):
        fock.thinning_kernel(1.2, 3)


@pytest.mark.parametrize(
    "t1, t2", list(itertools.product(ORACLE_TRANSMITTANCES, ORACLE_TRANSMITTANCES))
)
def test_apply_loss_matches_beam_splitter_unitary(t1, t2):
    loss = LossNetwork(per_mode_t=(t1, t2))
    for n1, n2 in itertools.product(range(5), range(5)):
        dist = fock.PhotonNumberDistribution.from_mapping({(n1, n2): 1.0}, 2, 4)
        thinned = fock.apply_loss(dist, loss)
        exact = oracle.apply_loss_by_unitary(dist, loss)
        assert np.max(np.abs(thinned.probs - exact.probs)) < 1e-12, (n1, n2)


def test_apply_loss_matches_oracle_on_mixtures():
    dist = fock.expand_source(TwoModeSqueezed(beta=0.6, n_max=4))
    loss = LossNetwork(per_mode_t=(0.3, 0.7))
    thinned = fock.apply_loss(dist, loss)
    exact = oracle.apply_loss_by_unitary(dist, loss)
    assert np.max(np.abs(thinned.probs - exact.probs)) < 1e-12
    assert thinned.deficit == dist.deficit


def test_apply_loss_composes_multiplicatively():
    dist = fock.expand_source(TwoModeSqueezed(beta=0.5, n_max=8))
    once = fock.apply_loss(dist, LossNetwork(per_mode_t=(0.6 * 0.5, 0.9)))
    twice = fock.apply_loss(
        fock.apply_loss(dist, LossNetwork(per_mode_t=(0.6, 0.9))),
        LossNetwork(per_mode_t=(0.5, 1.0)),
    )
    assert np.max(np.abs(once.probs - twice.probs)) < 1e-14


def test_apply_loss_rejects_mode_mismatch():
    with pytest.raises(ConfigError):
        fock.apply_loss(fock.expand_source(IdealPair()), LossNetwork(per_mode_t=(0.5,)))


@pytest.mark.parametrize("orders", [(1, 1), (2, 1), (0, 2), (2, 2)])
def test_correlation_mean_scales_with_transmittance_power(orders):
    dist = fock.expand_source(TwoModeSqueezed(beta=0.4, n_max=10))
    obs = CorrelationObservable(orders=orders)
    base = fock.correlation_mean(dist, obs)
    for t in (0.2, 0.55, 0.9):
        thinned = fock.apply_loss(dist, LossNetwork(per_mode_t=(t, 1.0)))
        assert fock.correlation_mean(thinned, obs) == pytest.approx(
            t ** orders[0] * base, rel=1e-12
        )


@pytest.mark.parametrize("orders", [(1, 1), (1, 2), (2, 0)])
def test_correlation_moments_match_operator_oracle(orders):
    dist = fock.apply_loss(
        fock.expand_source(TwoModeSqueezed(beta=0.5, n_max=6)), LossNetwork(per_mode_t=(0.8, 0.4))
    )
    obs = CorrelationObservable(orders=orders)
    mean = fock.correlation_mean(dist, obs)
    second = fock.correlation_second_moment(dist, obs)
    assert mean == pytest.approx(oracle.operator_expectation(dist, obs), rel=1e-10)
    assert second == pytest.approx(oracle.operator_expectation(dist, obs, 2), rel=1e-10)
    assert fock.normal_ordered_second_moment(dist, obs) == pytest.approx(second, rel=1e-10)


def test_correlation_moment_of_indicator_is_flat():
    dist = fock.apply_loss(fock.expand_source(IdealPair()), LossNetwork(per_mode_t=(0.9, 0.5)))
    obs = CorrelationObservable(orders=(1, 1))
    assert fock.correlation_moment(dist, obs, 4) == pytest.approx(0.45)
    with pytest.raises(ConfigError):
        fock.correlation_moment(dist, obs, 0)


def test_correlation_mean_rejects_order_beyond_truncation():
    dist = fock.expand_source(IdealPair())
    with pytest.raises(ConfigError):
        fock.correlation_mean(dist, CorrelationObservable(orders=(2, 1)))
    with pytest.raises(ConfigError):
        fock.correlation_mean(dist, CorrelationObservable(orders=(1,)))


def test_lossless_ideal_pair_has_no_noise():
    dist = fock.expand_source(IdealPair(), n_max=2)
    obs = CorrelationObservable(orders=(1, 1))
    mean = fock.correlation_mean(dist, obs)
    assert mean == 1.0
    assert fock.correlation_second_moment(dist, obs) - mean**2 == 0.0


@pytest.mark.parametrize(
    "k, expected", [(1, (1, 1)), (2, (2, 4, 1)), (3, (6, 18, 9, 1)), (4, (24, 96, 72, 16, 1))]
)
def test_normal_order_coefficients(k, expected):
    assert fock.normal_order_coefficients(k) == expected


@pytest.mark.parametrize("k", range(1, fock.MAX_NORMAL_ORDER + 1))
def test_normal_order_coefficients_satisfy_falling_factorial_identity(k):
    coefficients = fock.normal_order_coefficients(k)
    assert coefficients[-1] == 1
    assert all(isinstance(c, int) for c in coefficients)
    for n in range(2 * k + 3):
        assert math.perm(n, k) ** 2 == sum(
            c * math.perm(n, k + m) for m, c in enumerate(coefficients)
        )


@pytest.mark.parametrize("k", [0, fock.MAX_NORMAL_ORDER + 1])
def test_normal_order_coefficients_out_of_range(k):
    with pytest.raises(ConfigError):
        fock.normal_order_coefficients(k)


def test_mean_photon_number():
    assert fock.mean_photon_number(fock.expand_source(IdealPair()), [1]) == 1.0
    weak = fock.expand_source(WeakSpdc(beta=0.1))
    assert fock.mean_photon_number(weak, [0, 1]) == pytest.approx(0.02)
    with pytest.raises(ConfigError):
        fock.mean_photon_number(weak, [])
    with pytest.raises(ConfigError):
        fock.mean_photon_number(weak, [2])


@pytest.mark.parametrize("modes", [2, 3, 4])
def test_expand_source_default_truncation_supports_coincidences(modes):
    dist = fock.expand_source(IdealPair(modes=modes))
    obs = CorrelationObservable(orders=(1,) * modes)
    assert dist.n_max == modes
    assert fock.correlation_mean(dist, obs) == 1.0
    assert fock.correlation_moment(dist, obs, 4) == 1.0
    weak = fock.expand_source(WeakSpdc(beta=0.1, modes=modes))
    assert fock.correlation_second_moment(weak, obs) == pytest.approx(0.01)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
@pytest.mark.parametrize("n_max", [4, 7, 10])
def test_normal_ordered_expansion_matches_direct_moment_on_random_states(k, n_max):
    rng = np.random.default_rng(100 * k + n_max)
    probs = rng.dirichlet(np.ones((n_max + 1) ** 2)).reshape(n_max + 1, n_max + 1)
    dist = fock.PhotonNumberDistribution(probs)
    checked = 0
    for orders in [(k, 0), (0, k), (k, 1), (1, k), (k, k)]:
        if sum(orders) > n_max:
            continue
        obs = CorrelationObservable(orders=orders)
        direct = fock.correlation_moment(dist, obs, 2)
        assert fock.normal_ordered_second_moment(dist, obs) == pytest.approx(
            direct, rel=1e-10, abs=1e-12
        )
        checked += 1
    assert checked >= 2
