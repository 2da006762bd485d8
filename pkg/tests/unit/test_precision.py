import math

import numpy as np
import pytest

from pairscope import precision
from pairscope.exceptions import ConfigError, UndefinedPrecisionError
from pairscope.fock import apply_loss, correlation_mean, expand_source
from pairscope.precision import ClosedForm
from pairscope.types import (
    Coherent,
    IdealPair,
    LossNetwork,
    MultiModeCorrelated,
    Scheme,
    SchemeConfig,
    TwoModeSqueezed,
    WeakSpdc,
)

GRID = np.linspace(0.0, 1.0, 101)


def _scheme(scheme, t, orders=(1, 1), **kwargs):
    return SchemeConfig(scheme=scheme, sample_t=float(t), orders=orders, **kwargs)


def test_ideal_pair_matches_closed_forms():
    source = IdealPair()
    worst = 0.0
    for t in GRID:
        single = precision.precision(source, _scheme(Scheme.SINGLE_PASS, t)).require()
        expected = precision.precision_closed_form(ClosedForm.IDEAL_SINGLE_PASS, t)
        worst = max(worst, abs(single - expected))
        if t > 0.0:
            double = precision.precision(source, _scheme(Scheme.DOUBLE_PASS, t)).require()
            expected = precision.precision_closed_form(ClosedForm.IDEAL_DOUBLE_PASS, t)
            worst = max(worst, abs(double - expected))
    assert worst < 1e-10


def test_ideal_double_pass_is_undefined_on_opaque_sample():
    report = precision.precision(IdealPair(), _scheme(Scheme.DOUBLE_PASS, 0.0))
    assert not report.is_defined
    assert report.undefined_reason
    with pytest.raises(UndefinedPrecisionError):
        report.require()


@pytest.mark.parametrize("mean_photons", [0.5, 3.0, 20.0])
def test_coherent_precision_is_independent_of_intensity(mean_photons):
    source = Coherent(mean_photons=mean_photons)
    for t in GRID:
        report = precision.precision(source, _scheme(Scheme.SINGLE_PASS, t, orders=(1,)))
        assert report.require() == pytest.approx(precision.classical_bound(t), abs=1e-10)


@pytest.mark.parametrize("beta", [1e-3, 1e-2, 1e-1])
def test_weak_spdc_matches_closed_forms(beta):
    source = WeakSpdc(beta=beta)
    worst = 0.0
    for t in GRID[1:]:
        single = precision.precision(source, _scheme(Scheme.SINGLE_PASS, t)).require()
        double = precision.precision(source, _scheme(Scheme.DOUBLE_PASS, t)).require()
        worst = max(
            worst,
            abs(single - precision.precision_closed_form(ClosedForm.WEAK_SINGLE_PASS, t, beta)),
            abs(double - precision.precision_closed_form(ClosedForm.WEAK_DOUBLE_PASS, t, beta)),
        )
        assert abs(double - 1.0 / math.sqrt(2.0)) <= beta**2
    assert worst < 1e-10


def test_weak_single_pass_approaches_classical_bound():
    source = WeakSpdc(beta=1e-3)
    for t in (0.1, 0.5, 0.9):
        single = precision.precision(source, _scheme(Scheme.SINGLE_PASS, t)).require()
        assert single == pytest.approx(precision.classical_bound(t), rel=1e-6)


def test_precision_closed_form_needs_beta_for_weak_source():
    with pytest.raises(ConfigError):
        precision.precision_closed_form(ClosedForm.WEAK_SINGLE_PASS, 0.5)
    with pytest.raises(ConfigError):
        precision.precision_closed_form(ClosedForm.COHERENT, 1.5)


def test_precision_reports_moments_and_resource():
    report = precision.precision(WeakSpdc(beta=0.1), _scheme(Scheme.DOUBLE_PASS, 0.5))
    assert report.mean_o == pytest.approx(0.01 * 0.25)
    assert report.resource_r == pytest.approx(0.02)
    assert report.derivative == pytest.approx(2 * 0.5 * 0.01)
    assert report.variance_o == pytest.approx(report.second_moment_o - report.mean_o**2)


def test_derivative_matches_finite_difference():
    source = TwoModeSqueezed(beta=0.4, n_max=12)
    cfg = _scheme(Scheme.DOUBLE_PASS, 0.6, orders=(2, 1))
    report = precision.precision(source, cfg)
    dist = expand_source(source, 12)
    h = 1e-5

    def mean_at(t):
        thinned = apply_loss(dist, LossNetwork(per_mode_t=cfg.transmittances(t)))
        return correlation_mean(thinned, cfg.observable)

    numeric = (mean_at(0.6 + h) - mean_at(0.6 - h)) / (2 * h)
    assert report.derivative == pytest.approx(numeric, rel=1e-7)


def test_trigger_only_observable_is_undefined():
    report = precision.precision(IdealPair(), _scheme(Scheme.SINGLE_PASS, 0.5, orders=(1, 0)))
    assert report.delta_t is None
    assert "no correlation order" in report.undefined_reason


def test_apparatus_loss_enters_the_precision():
    lossless = precision.precision(WeakSpdc(beta=0.1), _scheme(Scheme.SINGLE_PASS, 0.5))
    lossy = precision.precision(
        WeakSpdc(beta=0.1), _scheme(Scheme.SINGLE_PASS, 0.5, apparatus_t=(0.5, 0.5))
    )
    assert lossy.require() > lossless.require()


def test_precision_rejects_mode_mismatch():
    with pytest.raises(ConfigError):
        precision.precision(IdealPair(), _scheme(Scheme.SINGLE_PASS, 0.5, orders=(1,)))


@pytest.mark.parametrize("beta", [1e-3, 1e-2, 1e-1, 0.5, 0.9])
def test_find_crossover_matches_critical_transmittance(beta):
    expected = (1.0 - math.sqrt(1.0 - beta**2)) / beta**2
    assert precision.critical_transmittance(beta).value == pytest.approx(expected, abs=1e-9)
    assert precision.find_crossover(beta) == pytest.approx(expected, abs=1e-9)


def test_critical_transmittance_small_beta():
    critical = precision.critical_transmittance(0.01)
    assert abs(critical.value - (0.5 + 1.25e-5)) < 1e-9
    assert not critical.is_limit


def test_critical_transmittance_limits():
    limit = precision.critical_transmittance(0.0)
    assert limit.value == 0.5
    assert limit.is_limit
    assert precision.critical_transmittance(1.0).value == 1.0
    with pytest.raises(ConfigError):
        precision.critical_transmittance(1.5)


def test_enhancement_reaches_sqrt2_on_transparent_sample():
    curve = precision.enhancement_curve(0.01, [0.9999])
    assert curve[0] == pytest.approx(math.sqrt(2.0), abs=1e-3)


def test_enhancement_never_exceeds_sqrt2():
    curve = precision.enhancement_curve(0.01, GRID[1:])
    assert np.all(curve <= math.sqrt(2.0) + 1e-12)
    assert curve[0] < 1.0


def test_enhancement_curve_rejects_invalid_grid():
    with pytest.raises(ConfigError):
        precision.enhancement_curve(0.01, [0.0, 0.5])
    with pytest.raises(ConfigError):
        precision.enhancement_curve(0.01, [])


def test_three_pass_enhancement_reaches_sqrt3():
    source = WeakSpdc(beta=0.01, modes=3)
    assert precision.multipass_enhancement(source, 3, 0.9999) == pytest.approx(
        math.sqrt(3.0), abs=1e-2
    )


@pytest.mark.parametrize("passes", [2, 3, 4])
def test_multipass_precision_matches_closed_form(passes):
    beta = 0.1
    source = WeakSpdc(beta=beta, modes=passes)
    for t in (0.2, 0.5, 0.8, 1.0):
        report = precision.multipass_precision(source, passes, t=t)
        assert report.require() == pytest.approx(
            precision.multipass_closed_form(passes, t, beta), rel=1e-10
        )


def test_multipass_closed_form_reduces_to_double_pass():
    for t in (0.3, 0.7):
        assert precision.multipass_closed_form(2, t, 0.1) == pytest.approx(
            precision.precision_closed_form(ClosedForm.WEAK_DOUBLE_PASS, t, 0.1)
        )


def test_multipass_enhancement_rejects_unsuitable_sources():
    with pytest.raises(ConfigError):
        precision.multipass_enhancement(Coherent(mean_photons=1.0, modes=3), 3, 0.5)
    with pytest.raises(ConfigError):
        precision.multipass_enhancement(MultiModeCorrelated(modes=3, beta=0.1), 4, 0.5)


@pytest.mark.parametrize("t, expected", [(0.66, 1.2622), (0.87, 1.3642), (0.98, 1.4070)])
def test_snr_enhancement_prediction(t, expected):
    assert precision.snr_enhancement_prediction(t) == pytest.approx(expected, abs=1e-3)


def test_snr_enhancement_prediction_is_monotone_and_bounded():
    values = [precision.snr_enhancement_prediction(t) for t in GRID[1:]]
    assert all(b > a for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(math.sqrt(2.0))
    assert precision.snr_enhancement_prediction(1.0, passes=3) == pytest.approx(math.sqrt(3.0))


def test_PrecisionSweep_reproduces_weak_source_curve():
    grid = np.round(np.linspace(0.01, 1.0, 100), 12)
    rows = precision.PrecisionSweep(0.01).run(grid)
    assert len(rows) == 100
    assert rows[-1].t == 1.0
    assert rows[-1].enhancement == pytest.approx(1.4142, abs=1e-4)
    marked = [row.t for row in rows if row.t_critical]
    assert marked == [pytest.approx(0.51)]


def test_PrecisionSweep_ideal_pair_single_pass_column():
    grid = np.round(np.linspace(0.01, 0.99, 99), 12)
    rows = precision.PrecisionSweep(1.0).run(grid)
    for row in rows:
        assert row.dt_sp == pytest.approx(math.sqrt(row.t * (1.0 - row.t)), abs=1e-12)
        assert row.dt_cs == pytest.approx(math.sqrt(row.t), abs=1e-12)


def test_PrecisionSweep_is_independent_of_workers():
    grid = np.linspace(0.05, 1.0, 20)
    serial = precision.PrecisionSweep(0.1).run(grid)
    threaded = precision.PrecisionSweep(0.1, workers=4).run(grid)
    assert [row.dict() for row in serial] == [row.dict() for row in threaded]


def test_PrecisionSweep_opaque_sample_is_undefined():
    with pytest.raises(UndefinedPrecisionError):
        precision.PrecisionSweep(0.01).run([0.0, 0.5])
    with pytest.raises(ConfigError):
        precision.PrecisionSweep(0.01).run([-0.1, 0.5])


@pytest.mark.parametrize("beta", [1e-3, 1e-2, 1e-1, 0.5, 0.9])
def test_precision_gap_changes_sign_exactly_once(beta):
    source = WeakSpdc(beta=beta)
    gaps = []
    for t in np.linspace(0.005, 0.995, 199):
        single = precision.precision(source, _scheme(Scheme.SINGLE_PASS, t)).require()
        double = precision.precision(source, _scheme(Scheme.DOUBLE_PASS, t)).require()
        gaps.append(single - double)
    signs = np.sign(gaps)
    assert signs[0] < 0 < signs[-1]
    assert np.count_nonzero(np.diff(signs)) == 1


def test_multi_mode_correlated_three_pass_enhancement_reaches_sqrt3():
    source = MultiModeCorrelated(modes=3, beta=0.01)
    enhancement = precision.multipass_enhancement(source, 3, 0.9999)
    assert enhancement == pytest.approx(math.sqrt(3.0), abs=1e-2)
    assert enhancement <= math.sqrt(3.0) + 1e-12


def test_package_exposes_submodules():
    import pairscope

    assert pairscope.precision is precision
    assert pairscope.scan.SampleMap is pairscope.SampleMap
    assert callable(pairscope.precision_closed_form)
