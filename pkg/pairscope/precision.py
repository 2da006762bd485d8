"""Normalized transmittance-estimation precision for photon-counting observables

Δt = √R · √⟨ΔO²⟩ / |∂⟨O⟩/∂t|, with R the mean number of photons that illuminate the sample. The
moments come from the exact engine in `fock`; the closed forms below are kept only to cross-check
it.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np
import pydantic
from scipy import optimize

from .exceptions import ConfigError
from .fock import (
    apply_loss,
    correlation_mean,
    correlation_second_moment,
    default_n_max,
    expand_source,
    mean_photon_number,
)
from .types import (
    Coherent,
    IdealPair,
    LossNetwork,
    MultiModeCorrelated,
    PrecisionReport,
    Scheme,
    SchemeConfig,
    SourceModel,
    WeakSpdc,
)

logger = logging.getLogger(__name__)

_VARIANCE_TOLERANCE = 1e-12


class ClosedForm(str, Enum):
    IDEAL_SINGLE_PASS = "ideal_single_pass"  # √(t (1 - t))
    IDEAL_DOUBLE_PASS = "ideal_double_pass"  # √((1 - t²) / 2)
    COHERENT = "coherent"  # √t
    WEAK_SINGLE_PASS = "weak_single_pass"  # √(t - t² β²)
    WEAK_DOUBLE_PASS = "weak_double_pass"  # √((1 - t² β²) / 2)


def precision(
    source: SourceModel, cfg: SchemeConfig, n_max: Optional[int] = None
) -> PrecisionReport:
    """Evaluate the moments of O and the precision Δt for `source` measured under `cfg`

    A vanishing derivative does not raise: the report comes back with `delta_t = None` and an
    `undefined_reason`.
    """
    if source.mode_count != cfg.mode_count:
        raise ConfigError(
            f"{cfg.mode_count} correlation orders given for a {source.mode_count}-mode source"
        )
    if n_max is None:
        n_max = default_n_max(source, cfg.orders)
    dist = expand_source(source, n_max)
    obs = cfg.observable
    t = cfg.sample_t

    illuminating = apply_loss(dist, LossNetwork(per_mode_t=cfg.transmittances(1.0)))
    detected = apply_loss(dist, LossNetwork(per_mode_t=cfg.transmittances()))
    mean_in = correlation_mean(illuminating, obs)
    mean_o = correlation_mean(detected, obs)
    second = correlation_second_moment(detected, obs)
    variance = second - mean_o**2
    if variance < -_VARIANCE_TOLERANCE * max(1.0, second):
        logger.warning("variance of O is %.3g below zero at t=%s; clamping", variance, t)
    variance = max(variance, 0.0)

    # ⟨O⟩ = t^κ ⟨O⟩_in exactly, κ being the order carried by the modes that cross the sample
    kappa = cfg.sample_order()
    derivative = kappa * t ** (kappa - 1) * mean_in if kappa >= 1 else 0.0
    resource = mean_photon_number(dist, cfg.sample_modes())

    reason: Optional[str] = None
    if kappa == 0:
        reason = "no correlation order on the modes that cross the sample"
    elif mean_in == 0.0:
        reason = "⟨O⟩ vanishes on the illuminating state"
    elif derivative == 0.0:
        reason = f"∂⟨O⟩/∂t vanishes at t={t} for sample order {kappa}"
    if reason is None:
        delta_t: Optional[float] = math.sqrt(resource) * math.sqrt(variance) / abs(derivative)
    else:
        delta_t = None
        logger.debug("precision undefined: %s", reason)

    return PrecisionReport(
        scheme=cfg.scheme,
        sample_t=t,
        mean_o=mean_o,
        second_moment_o=second,
        variance_o=variance,
        derivative=derivative,
        resource_r=resource,
        delta_t=delta_t,
        undefined_reason=reason,
        truncation_deficit=dist.deficit,
    )


def precision_closed_form(formula: ClosedForm, t: float, beta: Optional[float] = None) -> float:
    if not 0.0 <= t <= 1.0:
        raise ConfigError(f"t={t!r} is outside [0, 1]")
    formula = ClosedForm(formula)
    if formula == ClosedForm.IDEAL_SINGLE_PASS:
        return math.sqrt(t * (1.0 - t))
    if formula == ClosedForm.IDEAL_DOUBLE_PASS:
        return math.sqrt((1.0 - t**2) / 2.0)
    if formula == ClosedForm.COHERENT:
        return math.sqrt(t)
    if beta is None:
        raise ConfigError(f"{formula.value} needs beta")
    if formula == ClosedForm.WEAK_SINGLE_PASS:
        return math.sqrt(t - t**2 * beta**2)
    return math.sqrt((1.0 - t**2 * beta**2) / 2.0)


def classical_bound(t: float) -> float:
    """Coherent-state precision, the reference that single-pass illumination approximates"""
    return precision_closed_form(ClosedForm.COHERENT, t)


def multipass_closed_form(passes: int, t: float, beta: float) -> float:
    """Δt for α|0, ..., 0⟩ + β|1, ..., 1⟩ sent N times through the sample"""
    if passes < 2:
        raise ConfigError("multi-pass needs at least two passes")
    if not 0.0 < t <= 1.0:
        raise ConfigError(f"t={t!r} is outside (0, 1]")
    return math.sqrt((1.0 - beta**2 * t**passes) / (passes * t ** (passes - 2)))


@dataclass(frozen=True)
class CriticalTransmittance:
    value: float
    is_limit: bool = False


def critical_transmittance(beta: float) -> CriticalTransmittance:
    """Transmittance above which double-pass beats single-pass for a weak SPDC source

    (1 - √(1 - β²)) / β², evaluated as 1 / (1 + √(1 - β²)) to avoid cancellation at small β.
    β = 0 returns the limit 1/2, flagged.
    """
    if not math.isfinite(beta) or not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta={beta!r} is outside (0, 1]")
    if beta == 0.0:
        return CriticalTransmittance(0.5, is_limit=True)
    return CriticalTransmittance(1.0 / (1.0 + math.sqrt(1.0 - beta**2)))


def pair_source(beta: float) -> Union[IdealPair, WeakSpdc]:
    """Weak SPDC source; β = 1 is the ideal pair"""
    if beta == 1.0:
        return IdealPair()
    return WeakSpdc(beta=beta)


def _scheme(scheme: Scheme, t: float, modes: int = 2) -> SchemeConfig:
    if scheme == Scheme.MULTI_PASS:
        return SchemeConfig(scheme=scheme, sample_t=t, orders=(1,) * modes, passes=modes)
    return SchemeConfig(scheme=scheme, sample_t=t, orders=(1,) * modes)


def _enhancement(source: SourceModel, t: float, n_max: Optional[int], passes: int = 2) -> float:
    multi = Scheme.DOUBLE_PASS if passes == 2 else Scheme.MULTI_PASS
    single = precision(source, _scheme(Scheme.SINGLE_PASS, t, passes), n_max).require()
    double = precision(source, _scheme(multi, t, passes), n_max).require()
    return single / double if double > 0.0 else float("nan")


def find_crossover(beta: float, n_max: Optional[int] = None, xtol: float = 1e-14) -> float:
    """Root of Δt_SP(t) - Δt_DP(t) found by bracketing the engine curves"""
    source = pair_source(beta)

    def gap(t: float) -> float:
        single = precision(source, _scheme(Scheme.SINGLE_PASS, t), n_max).require()
        double = precision(source, _scheme(Scheme.DOUBLE_PASS, t), n_max).require()
        return single - double

    return float(optimize.brentq(gap, 1e-6, 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps))


def _check_grid(t_grid: Sequence[float], allow_opaque: bool = False) -> np.ndarray:
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ConfigError("t grid must be a non-empty vector")
    low = grid < 0.0 if allow_opaque else grid <= 0.0
    if not np.all(np.isfinite(grid)) or np.any(low) or np.any(grid > 1.0):
        raise ConfigError(f"t grid must lie in {'[0' if allow_opaque else '(0'}, 1]")
    return grid


def enhancement_curve(
    beta: float, t_grid: Sequence[float], n_max: Optional[int] = None
) -> np.ndarray:
    """Δt_SP / Δt_DP of a weak SPDC source on every grid point"""
    source = pair_source(beta)
    return np.array([_enhancement(source, t, n_max) for t in _check_grid(t_grid)])


def multipass_precision(
    source: SourceModel,
    passes: int,
    orders: Optional[Sequence[int]] = None,
    t: float = 1.0,
    n_max: Optional[int] = None,
) -> PrecisionReport:
    """All `passes` modes cross the sample; R counts the photons of every mode"""
    if source.mode_count != passes:
        raise ConfigError(f"a {passes}-pass scheme needs a {passes}-mode source")
    orders = tuple(orders) if orders is not None else (1,) * passes
    cfg = SchemeConfig(scheme=Scheme.MULTI_PASS, sample_t=t, orders=orders, passes=passes)
    return precision(source, cfg, n_max)


def multipass_enhancement(
    source: SourceModel, passes: int, t: float, n_max: Optional[int] = None
) -> float:
    """Δt_SP / Δt_MP for the same N-mode source, single-pass triggering on N - 1 modes"""
    if not isinstance(source, (MultiModeCorrelated, IdealPair, WeakSpdc)):
        raise ConfigError(f"{source.kind} sources have no correlated multi-pass form")
    if source.mode_count != passes:
        raise ConfigError(f"a {passes}-pass scheme needs a {passes}-mode source")
    return _enhancement(source, t, n_max, passes)


def snr_enhancement_prediction(t: float, reference_t: float = 1.0, passes: int = 2) -> float:
    """SNR_MP / SNR_SP for Poissonian pair counting at matched illumination

    Single-pass counts scale as μ t, N-pass counts as (μ / N) t^N; the SNR contrasts a region of
    transmittance t with a reference region. Equal transmittances give the continuous limit.
    """
    if not 0.0 < t <= 1.0 or not 0.0 < reference_t <= 1.0:
        raise ConfigError("transmittances must lie in (0, 1]")
    if passes < 2:
        raise ConfigError("passes must be >= 2")
    n = passes
    if t == reference_t:
        contrast_ratio = n * t ** (n - 1)
    else:
        contrast_ratio = (reference_t**n - t**n) / (reference_t - t)
    return (
        contrast_ratio
        * math.sqrt(reference_t + t)
        / math.sqrt(n * (reference_t**n + t**n))
    )


class SweepRow(pydantic.BaseModel):
    t: float
    dt_sp: float
    dt_dp: float
    dt_cs: float
    enhancement: float
    t_critical: bool


class PrecisionSweep:
    """Single-pass, double-pass and coherent-state precision over a transmittance grid"""

    def __init__(self, beta: float, n_max: Optional[int] = None, workers: int = 1):
        self.logger = logging.getLogger(__name__)
        self.source = pair_source(beta)
        self.critical = critical_transmittance(beta)
        self.coherent = Coherent(mean_photons=1.0)
        self.n_max = n_max
        self.workers = max(1, workers)

    def __repr__(self) -> str:
        return f"<PrecisionSweep: {self.source}>"

    def _row(self, t: float) -> SweepRow:
        single = precision(self.source, _scheme(Scheme.SINGLE_PASS, t), self.n_max).require()
        double = precision(self.source, _scheme(Scheme.DOUBLE_PASS, t), self.n_max).require()
        coherent = precision(self.coherent, _scheme(Scheme.SINGLE_PASS, t, modes=1)).require()
        if double > 0.0:
            enhancement = single / double
        else:
            # noiseless on both schemes (ideal pair, transparent sample)
            enhancement = float("nan")
        return SweepRow(
            t=t,
            dt_sp=single,
            dt_dp=double,
            dt_cs=coherent,
            enhancement=enhancement,
            t_critical=False,
        )

    def run(self, t_grid: Sequence[float]) -> List[SweepRow]:
        """One row per grid point; the first row at or above t_critical is marked"""
        grid = _check_grid(t_grid, allow_opaque=True)
        start_ts = time.time()
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            rows = list(executor.map(self._row, (float(t) for t in grid)))
        for idx, row in enumerate(rows):
            if row.t >= self.critical.value:
                rows[idx] = row.copy(update={"t_critical": True})
                break
        elapsed_time = time.time() - start_ts
        self.logger.info("Swept %d transmittances (%.3fms)", len(rows), elapsed_time * 1e3)
        return rows
