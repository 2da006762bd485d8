import pytest
from pydantic import ValidationError

from pairscope import types
from pairscope.exceptions import UndefinedPrecisionError


def test_IdealPair_defaults_to_two_modes():
    source = types.IdealPair()
    assert source.kind == "ideal_pair"
    assert source.mode_count == 2


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.2, 1.5])
def test_WeakSpdc_rejects_beta_outside_open_interval(beta):
    with pytest.raises(ValidationError):
        types.WeakSpdc(beta=beta)


def test_Coherent_rejects_infinite_mean():
    with pytest.raises(ValidationError):
        types.Coherent(mean_photons=float("inf"))


def test_models_are_immutable():
    source = types.WeakSpdc(beta=0.1)
    with pytest.raises(TypeError):
        source.beta = 0.2


def test_models_reject_unknown_keys():
    with pytest.raises(ValidationError):
        types.IdealPair(modes=2, colour="red")


def test_LossNetwork_rejects_transmittance_outside_unit_interval():
    with pytest.raises(ValidationError):
        types.LossNetwork(per_mode_t=(0.5, 1.5))
    with pytest.raises(ValidationError):
        types.LossNetwork(per_mode_t=(float("nan"),))


def test_CorrelationObservable_needs_a_positive_order():
    with pytest.raises(ValidationError):
        types.CorrelationObservable(orders=(0, 0))
    with pytest.raises(ValidationError):
        types.CorrelationObservable(orders=(1, -1))
    obs = types.CorrelationObservable(orders=(2, 1))
    assert obs.total_order == 3
    assert obs.mode_count == 2


def test_SchemeConfig_double_pass_needs_two_modes():
    with pytest.raises(ValidationError):
        types.SchemeConfig(scheme="double_pass", orders=(1, 1, 1))


def test_SchemeConfig_multi_pass_needs_matching_passes():
    with pytest.raises(ValidationError):
        types.SchemeConfig(scheme="multi_pass", orders=(1, 1, 1))
    with pytest.raises(ValidationError):
        types.SchemeConfig(scheme="multi_pass", orders=(1, 1, 1), passes=2)
    cfg = types.SchemeConfig(scheme="multi_pass", orders=(1, 1, 1), passes=3)
    assert cfg.sample_modes() == (0, 1, 2)


def test_SchemeConfig_single_pass_puts_only_the_signal_mode_on_the_sample():
    cfg = types.SchemeConfig(scheme="single_pass", sample_t=0.5, apparatus_t=(0.9, 0.8))
    assert cfg.sample_modes() == (1,)
    assert cfg.sample_order() == 1
    assert cfg.transmittances() == pytest.approx((0.9, 0.4))
    assert cfg.transmittances(1.0) == pytest.approx((0.9, 0.8))


def test_SchemeConfig_signal_mode_can_be_moved():
    cfg = types.SchemeConfig(scheme="single_pass", sample_t=0.5, signal_mode=0)
    assert cfg.transmittances() == (0.5, 1.0)
    with pytest.raises(ValidationError):
        types.SchemeConfig(scheme="single_pass", signal_mode=2)


def test_SchemeConfig_double_pass_thins_both_modes():
    cfg = types.SchemeConfig(scheme="double_pass", sample_t=0.7)
    assert cfg.transmittances() == (0.7, 0.7)
    assert cfg.sample_order() == 2
    assert cfg.with_sample_t(0.2).transmittances() == (0.2, 0.2)


def test_ExperimentConfig_parses_source_by_kind():
    cfg = types.ExperimentConfig.parse_obj(
        {
            "source": {"kind": "weak_spdc", "beta": 0.1},
            "scheme": {"scheme": "single_pass", "sample_t": 0.9},
            "pairs_mean_per_dwell": 10.0,
            "dwells": 100,
        }
    )
    assert isinstance(cfg.source, types.WeakSpdc)
    assert cfg.scheme.scheme == types.Scheme.SINGLE_PASS
    assert cfg.required_modes() == (0, 1)


def test_ExperimentConfig_rejects_mode_mismatch():
    with pytest.raises(ValidationError):
        types.ExperimentConfig(
            source=types.IdealPair(modes=3),
            scheme=types.SchemeConfig(scheme="single_pass"),
            pairs_mean_per_dwell=1.0,
            dwells=10,
        )


@pytest.mark.parametrize(
    "field, value",
    [("pairs_mean_per_dwell", 0.0), ("dwells", 1), ("rng_seed", -1), ("background_rate", -0.1)],
)
def test_ExperimentConfig_rejects_invalid_values(field, value):
    kwargs = dict(
        source=types.IdealPair(),
        scheme=types.SchemeConfig(scheme="single_pass"),
        pairs_mean_per_dwell=1.0,
        dwells=10,
    )
    kwargs[field] = value
    with pytest.raises(ValidationError):
        types.ExperimentConfig(**kwargs)


def test_ExperimentConfig_folds_detector_efficiency_into_transmittance():
    cfg = types.ExperimentConfig(
        source=types.IdealPair(),
        scheme=types.SchemeConfig(scheme="double_pass", sample_t=0.5),
        pairs_mean_per_dwell=1.0,
        dwells=10,
        detector_efficiency=(0.8, 0.5),
    )
    assert cfg.transmittances() == pytest.approx((0.4, 0.25))
    assert cfg.transmittances(1.0) == pytest.approx((0.8, 0.5))
    with pytest.raises(ValidationError):
        types.ExperimentConfig(**dict(cfg.dict(), detector_efficiency=(0.0, 1.0)))
    with pytest.raises(ValidationError):
        types.ExperimentConfig(**dict(cfg.dict(), detector_efficiency=(1.0,)))


def test_PrecisionReport_require_raises_when_undefined():
    report = types.PrecisionReport(
        scheme="double_pass",
        sample_t=0.0,
        mean_o=0.0,
        second_moment_o=0.0,
        variance_o=0.0,
        derivative=0.0,
        resource_r=2.0,
        undefined_reason="vanishing derivative",
    )
    assert not report.is_defined
    assert report.per_measurement_delta_t(10) is None
    with pytest.raises(UndefinedPrecisionError) as e:
        report.require()
    assert e.value.report is report
    assert "vanishing derivative" in str(e.value)


def test_PrecisionReport_per_measurement_delta_t_scales_with_repeats():
    report = types.PrecisionReport(
        scheme="single_pass",
        sample_t=0.5,
        mean_o=0.5,
        second_moment_o=0.5,
        variance_o=0.25,
        derivative=1.0,
        resource_r=1.0,
        delta_t=0.5,
    )
    assert report.require() == 0.5
    assert report.per_measurement_delta_t(1) == pytest.approx(0.5)
    assert report.per_measurement_delta_t(100) == pytest.approx(0.05)
