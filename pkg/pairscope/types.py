import math
from enum import Enum
from typing import Literal, NewType, Optional, Tuple, Union

import pydantic
from pydantic import Field

from .exceptions import UndefinedPrecisionError

__all__ = [
    "Coherent",
    "CorrelationObservable",
    "ExperimentConfig",
    "IdealPair",
    "LossNetwork",
    "ModeIndex",
    "MultiModeCorrelated",
    "PrecisionReport",
    "Scheme",
    "SchemeConfig",
    "SourceModel",
    "TwoModeSqueezed",
    "WeakSpdc",
]

ModeIndex = NewType("ModeIndex", int)


class FrozenModel(pydantic.BaseModel):
    """Immutable value type; unknown keys are rejected"""

    class Config:
        extra = pydantic.Extra.forbid
        allow_mutation = False


def _check_transmittance(v: float) -> float:
    if not math.isfinite(v) or not 0.0 <= v <= 1.0:
        raise ValueError(f"transmittance {v!r} is outside [0, 1]")
    return v


class IdealPair(FrozenModel):
    """|1, 1⟩, or |1, ..., 1⟩ when `modes` > 2"""

    kind: Literal["ideal_pair"] = "ideal_pair"
    modes: int = Field(2, ge=1)

    @property
    def mode_count(self) -> int:
        return self.modes


class WeakSpdc(FrozenModel):
    """Weak down-conversion state α|0, 0⟩ + β|1, 1⟩ (diagonal part only)"""

    kind: Literal["weak_spdc"] = "weak_spdc"
    beta: float = Field(..., gt=0.0, lt=1.0)
    modes: int = Field(2, ge=1)

    @property
    def mode_count(self) -> int:
        return self.modes


class TwoModeSqueezed(FrozenModel):
    """Two-mode squeezed vacuum with P(n, n) = (1 - β²) β^(2n), truncated at `n_max`"""

    kind: Literal["two_mode_squeezed"] = "two_mode_squeezed"
    beta: float = Field(..., gt=0.0, lt=1.0)
    n_max: int = Field(..., ge=1)

    @property
    def mode_count(self) -> int:
        return 2


class Coherent(FrozenModel):
    """Product of Poisson marginals with mean `mean_photons` in every mode"""

    kind: Literal["coherent"] = "coherent"
    mean_photons: float = Field(..., gt=0.0)
    modes: int = Field(1, ge=1)
    n_max: Optional[int] = Field(None, ge=1)

    @pydantic.validator("mean_photons")
    def finite_mean(cls, v):
        if not math.isfinite(v):
            raise ValueError("mean photon number must be finite")
        return v

    @property
    def mode_count(self) -> int:
        return self.modes


class MultiModeCorrelated(FrozenModel):
    """N-mode correlated state with P(n, ..., n) = (1 - β²) β^(2n), truncated at `n_max`"""

    kind: Literal["multi_mode_correlated"] = "multi_mode_correlated"
    modes: int = Field(..., ge=2)
    beta: float = Field(..., gt=0.0, lt=1.0)
    n_max: int = Field(3, ge=1)

    @property
    def mode_count(self) -> int:
        return self.modes


SourceModel = Union[IdealPair, WeakSpdc, TwoModeSqueezed, Coherent, MultiModeCorrelated]


class LossNetwork(FrozenModel):
    """Independent per-mode power transmittances"""

    per_mode_t: Tuple[float, ...]

    @pydantic.validator("per_mode_t", each_item=True)
    def in_unit_interval(cls, v):
        return _check_transmittance(v)

    @property
    def mode_count(self) -> int:
        return len(self.per_mode_t)


class CorrelationObservable(FrozenModel):
    """O = Π (b_i†)^k_i b_i^k_i, one order k_i per mode"""

    orders: Tuple[int, ...]

    @pydantic.validator("orders")
    def valid_orders(cls, v):
        if any(k < 0 for k in v):
            raise ValueError(f"correlation orders must be non-negative, got {v}")
        if not any(k >= 1 for k in v):
            raise ValueError("at least one correlation order must be >= 1")
        return v

    @property
    def mode_count(self) -> int:
        return len(self.orders)

    @property
    def total_order(self) -> int:
        return sum(self.orders)


class Scheme(str, Enum):
    SINGLE_PASS = "single_pass"
    DOUBLE_PASS = "double_pass"
    MULTI_PASS = "multi_pass"


class SchemeConfig(FrozenModel):
    """Which modes cross the sample, and what is measured

    In the single-pass scheme only the signal mode (the last mode by default) crosses the sample,
    all other modes are triggers. Double- and multi-pass schemes send every mode through it.
    """

    scheme: Scheme
    sample_t: float = 1.0
    orders: Tuple[int, ...] = (1, 1)
    passes: Optional[int] = Field(None, ge=2)
    apparatus_t: Optional[Tuple[float, ...]] = None
    signal_mode: int = -1

    @pydantic.validator("sample_t")
    def sample_in_unit_interval(cls, v):
        return _check_transmittance(v)

    @pydantic.validator("apparatus_t", each_item=True)
    def apparatus_in_unit_interval(cls, v):
        return _check_transmittance(v)

    @pydantic.root_validator(skip_on_failure=True)
    def consistent_modes(cls, values):
        orders = values["orders"]
        CorrelationObservable(orders=orders)
        scheme = values["scheme"]
        if scheme == Scheme.DOUBLE_PASS and len(orders) != 2:
            raise ValueError("the double-pass scheme needs exactly two modes")
        if scheme == Scheme.MULTI_PASS:
            passes = values.get("passes")
            if passes is None:
                raise ValueError("the multi-pass scheme needs `passes`")
            if passes != len(orders):
                raise ValueError(f"passes={passes} does not match {len(orders)} correlation orders")
        apparatus = values.get("apparatus_t")
        if apparatus is not None and len(apparatus) != len(orders):
            raise ValueError("apparatus_t needs one transmittance per mode")
        if not -len(orders) <= values["signal_mode"] < len(orders):
            raise ValueError(f"signal_mode {values['signal_mode']} is not a valid mode")
        return values

    @property
    def mode_count(self) -> int:
        return len(self.orders)

    @property
    def observable(self) -> CorrelationObservable:
        return CorrelationObservable(orders=self.orders)

    def sample_modes(self) -> Tuple[ModeIndex, ...]:
        """Modes that cross the sample; these are also the resource modes"""
        if self.scheme == Scheme.SINGLE_PASS:
            return (ModeIndex(self.signal_mode % self.mode_count),)
        return tuple(ModeIndex(i) for i in range(self.mode_count))

    def sample_order(self) -> int:
        """Total correlation order over the modes that cross the sample"""
        return sum(self.orders[i] for i in self.sample_modes())

    def transmittances(self, sample_t: Optional[float] = None) -> Tuple[float, ...]:
        t = self.sample_t if sample_t is None else _check_transmittance(sample_t)
        apparatus = self.apparatus_t or (1.0,) * self.mode_count
        crossing = set(self.sample_modes())
        return tuple(a * t if i in crossing else a for i, a in enumerate(apparatus))

    def with_sample_t(self, sample_t: float) -> "SchemeConfig":
        return self.copy(update={"sample_t": _check_transmittance(sample_t)})


class PrecisionReport(FrozenModel):
    """Moments of O and the normalized precision Δt = √R √⟨ΔO²⟩ / |∂⟨O⟩/∂t|

    `delta_t` is `None` when the derivative vanishes (opaque sample with a higher-order
    observable, or an input with ⟨O⟩ = 0); `undefined_reason` then says why.
    """

    scheme: Scheme
    sample_t: float
    mean_o: float
    second_moment_o: float
    variance_o: float = Field(..., ge=0.0)
    derivative: float
    resource_r: float = Field(..., ge=0.0)
    delta_t: Optional[float] = Field(None, ge=0.0)
    undefined_reason: Optional[str] = None
    truncation_deficit: float = 0.0

    @property
    def is_defined(self) -> bool:
        return self.delta_t is not None

    def require(self) -> float:
        if self.delta_t is None:
            raise UndefinedPrecisionError(self, self.undefined_reason)
        return self.delta_t

    def per_measurement_delta_t(self, repeats: int = 1) -> Optional[float]:
        """Uncertainty of t after `repeats` measurements, without resource normalisation"""
        if repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.delta_t is None:
            return None
        return math.sqrt(self.variance_o) / (math.sqrt(repeats) * abs(self.derivative))


class ExperimentConfig(FrozenModel):
    """A photon-pair counting experiment repeated over `dwells` windows"""

    source: SourceModel = Field(..., discriminator="kind")
    scheme: SchemeConfig
    pairs_mean_per_dwell: float = Field(..., gt=0.0)
    dwells: int = Field(..., ge=2)
    rng_seed: int = Field(0, ge=0, lt=2**64)
    detector_efficiency: Optional[Tuple[float, ...]] = None
    background_rate: float = Field(0.0, ge=0.0)

    @pydantic.validator("pairs_mean_per_dwell", "background_rate")
    def finite_rate(cls, v):
        if not math.isfinite(v):
            raise ValueError("rates must be finite")
        return v

    @pydantic.validator("detector_efficiency", each_item=True)
    def efficiency_range(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError(f"detector efficiency {v!r} is outside (0, 1]")
        return v

    @pydantic.root_validator(skip_on_failure=True)
    def consistent_modes(cls, values):
        modes = values["source"].mode_count
        if values["scheme"].mode_count != modes:
            raise ValueError(
                f"scheme has {values['scheme'].mode_count} orders for a {modes}-mode source"
            )
        efficiency = values.get("detector_efficiency")
        if efficiency is not None and len(efficiency) != modes:
            raise ValueError("detector_efficiency needs one value per mode")
        return values

    @property
    def mode_count(self) -> int:
        return self.scheme.mode_count

    def transmittances(self, sample_t: Optional[float] = None) -> Tuple[float, ...]:
        """Total survival probability per mode: sample x apparatus x detector"""
        efficiency = self.detector_efficiency or (1.0,) * self.mode_count
        return tuple(
            t * eta for t, eta in zip(self.scheme.transmittances(sample_t), efficiency)
        )

    def required_modes(self) -> Tuple[ModeIndex, ...]:
        """Modes that must click for a coincidence"""
        return tuple(ModeIndex(i) for i, k in enumerate(self.scheme.orders) if k >= 1)
