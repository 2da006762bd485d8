"""Raster-scan simulation of a region-labelled transmittance map"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pydantic
from pydantic import Field

from .exceptions import ConfigError, EmptyRegionError, MapParseError, ResourceMatchError
from .montecarlo import (
    BOOTSTRAP_RESAMPLES,
    SnrEstimate,
    Stream,
    analytic_counts,
    enhancement_ratio,
    launched_per_event,
    predicted_snr,
    resource_matched_pair,
    simulate_dwells,
    snr_estimate,
    stream_generator,
)
from .precision import snr_enhancement_prediction
from .types import ExperimentConfig, FrozenModel, Scheme

logger = logging.getLogger(__name__)

DEFAULT_TARGET_COUNTS = 5000.0
DEFAULT_ENSEMBLE_ROWS = 25
DEFAULT_PIXEL_PITCH_NM = 100.0


class RegionSpec(FrozenModel):
    """Transmittance of one map region, given directly or as `t_mono` per layer"""

    label: str = Field(..., min_length=1, max_length=1)
    t: float = Field(..., ge=0.0, le=1.0)
    layers: Optional[int] = Field(None, ge=0)
    t_mono: Optional[float] = Field(None, ge=0.0, le=1.0)

    @classmethod
    def from_layers(cls, label: str, layers: int, t_mono: float) -> "RegionSpec":
        return cls(label=label, t=t_mono**layers, layers=layers, t_mono=t_mono)

    def legend_line(self) -> str:
        if self.layers is not None and self.t_mono is not None:
            return f"{self.label} layers={self.layers} t_mono={self.t_mono!r}"
        return f"{self.label} t={self.t!r}"


@dataclass(frozen=True, eq=False)
class SampleMap:
    """Grid of single-character region labels and their transmittances

    Row 0 is the first grid line of a map file; `pixel_pitch_nm` is metadata only.
    """

    labels: np.ndarray
    legend: Dict[str, RegionSpec]
    pixel_pitch_nm: float = DEFAULT_PIXEL_PITCH_NM

    def __post_init__(self):
        labels = np.array(self.labels, dtype="<U1")
        if labels.ndim != 2 or labels.size == 0:
            raise ConfigError(f"label grid must be 2-D and non-empty, got {labels.shape}")
        missing = sorted(set(np.unique(labels)) - set(self.legend))
        if missing:
            raise ConfigError(f"labels {missing} have no legend entry")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __repr__(self) -> str:
        return f"<SampleMap: {self.width}x{self.height}, regions {''.join(self.regions)}>"

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def regions(self) -> List[str]:
        return sorted(self.legend)

    @property
    def reference(self) -> str:
        """Label of the most transparent region; ties go to the first label in sort order"""
        return max(self.regions, key=lambda label: (self.legend[label].t, -ord(label)))

    def transmittance(self, label: str) -> float:
        return self.legend[label].t

    def same_layout(self, other: "SampleMap") -> bool:
        return np.array_equal(self.labels, other.labels) and self.legend == other.legend

    def ensemble_mask(self, label: str, ensemble_rows: Optional[int] = None) -> np.ndarray:
        """Pixels of `label` in the bottom `ensemble_rows` rows (all rows when None)"""
        mask = self.labels == label
        if ensemble_rows is not None:
            if ensemble_rows < 1:
                raise ConfigError(f"ensemble_rows must be >= 1, got {ensemble_rows}")
            mask[: max(self.height - ensemble_rows, 0), :] = False
        return mask

    @classmethod
    def from_text(cls, text: str, path: str = "<string>") -> "SampleMap":
        lines = text.splitlines()
        if not lines:
            raise MapParseError(path, 1, "empty map file")
        header = lines[0].split()
        try:
            width, height = (int(v) for v in header)
        except ValueError:
            raise MapParseError(path, 1, f"expected `width height`, got {lines[0]!r}")
        if width < 1 or height < 1:
            raise MapParseError(path, 1, f"map size must be positive, got {width}x{height}")
        if len(lines) < height + 1:
            raise MapParseError(path, len(lines) + 1, f"expected {height} label rows")

        rows = []
        for lineno in range(2, height + 2):
            row = lines[lineno - 1].rstrip()
            if len(row) != width or any(c.isspace() for c in row):
                raise MapParseError(
                    path, lineno, f"expected {width} single-character labels, got {row!r}"
                )
            rows.append(list(row))

        legend: Dict[str, RegionSpec] = {}
        for lineno in range(height + 2, len(lines) + 1):
            line = lines[lineno - 1].strip()
            if not line or line.startswith("#") or line == "legend":
                continue
            entry = _parse_legend_line(line, path, lineno)
            if entry.label in legend:
                raise MapParseError(path, lineno, f"duplicate legend entry for {entry.label!r}")
            legend[entry.label] = entry

        grid = np.array(rows, dtype="<U1")
        for lineno, row in enumerate(rows, start=2):
            for label in row:
                if label not in legend:
                    raise MapParseError(path, lineno, f"label {label!r} has no legend entry")
        return cls(grid, legend)

    @classmethod
    def parse_file(cls, path: Union[str, Path]) -> "SampleMap":
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), str(path))

    def to_text(self) -> str:
        lines = [f"{self.width} {self.height}"]
        lines.extend("".join(row) for row in self.labels)
        lines.extend(self.legend[label].legend_line() for label in self.regions)
        return "\n".join(lines) + "\n"


def _parse_legend_line(line: str, path: str, lineno: int) -> RegionSpec:
    label, *assignments = line.split()
    if len(label) != 1:
        raise MapParseError(path, lineno, f"region label must be one character, got {label!r}")
    values: Dict[str, str] = {}
    for item in assignments:
        key, sep, value = item.partition("=")
        if not sep or key not in ("t", "layers", "t_mono") or key in values:
            raise MapParseError(path, lineno, f"unexpected legend field {item!r}")
        values[key] = value
    try:
        if set(values) == {"t"}:
            return RegionSpec(label=label, t=float(values["t"]))
        if set(values) == {"layers", "t_mono"}:
            return RegionSpec.from_layers(label, int(values["layers"]), float(values["t_mono"]))
    except (ValueError, pydantic.ValidationError) as e:
        raise MapParseError(path, lineno, f"invalid legend entry: {e}")
    raise MapParseError(path, lineno, "legend needs `t=<float>` or `layers=<int> t_mono=<float>`")


class TransmittanceEstimate(pydantic.BaseModel):
    """t̂ with the error of the ensemble estimate and the spread of a single pixel's estimate"""

    value: float
    error: float
    pixel_error: Optional[float] = None
    clamped: bool = False


@dataclass(frozen=True)
class RegionStats:
    label: str
    t: float
    pixels: int
    mean: float
    variance: float
    std_error: float
    t_hat: Optional[TransmittanceEstimate] = None
    snr: Optional[SnrEstimate] = None


@dataclass(frozen=True, eq=False)
class ScanResult:
    sample: SampleMap
    config: ExperimentConfig
    counts: np.ndarray
    ensemble_rows: Optional[int]
    reference: str
    region_stats: Dict[str, RegionStats] = field(default_factory=dict)

    def __repr__(self) -> str:
        return f"<ScanResult: {self.scheme.value}, {self.sample!r}>"

    @property
    def scheme(self) -> Scheme:
        return self.config.scheme.scheme

    @property
    def launched_photons(self) -> float:
        """Expected photons sent onto the sample over the whole raster"""
        return self.config.pairs_mean_per_dwell * launched_per_event(self.config) * self.counts.size

    def ensemble(self, label: str) -> np.ndarray:
        return self.counts[self.sample.ensemble_mask(label, self.ensemble_rows)]

    def pixel_rows(self) -> List[dict]:
        return [
            {
                "pixel_x": x,
                "pixel_y": y,
                "label": str(self.sample.labels[y, x]),
                "counts": int(self.counts[y, x]),
            }
            for y in range(self.sample.height)
            for x in range(self.sample.width)
        ]

    def region_rows(self) -> List[dict]:
        rows = []
        for label in self.sample.regions:
            stats = self.region_stats[label]
            snr = stats.snr
            rows.append(
                {
                    "region": label,
                    "mean": stats.mean,
                    "variance": stats.variance,
                    "t_hat": stats.t_hat.value,
                    "t_err": stats.t_hat.error,
                    "snr_vs_ref": snr.snr if snr is not None else None,
                    "snr_err": snr.std_error if snr is not None else None,
                }
            )
        return rows


def _detected_exponent(cfg: ExperimentConfig) -> int:
    """Power of the sample transmittance in the mean coincidence count"""
    orders = cfg.scheme.orders
    return sum(1 for mode in cfg.scheme.sample_modes() if orders[mode] >= 1)


def _propagate(value: float, ratio: float, ratio_error: float, exponent: int) -> float:
    """Error of ratio^(1/exponent) given the error of the ratio"""
    if ratio > 0.0:
        return value * ratio_error / (exponent * ratio)
    return ratio_error ** (1.0 / exponent)


def _transmittance(stats: RegionStats, ref: RegionStats, exponent: int) -> TransmittanceEstimate:
    if stats.label == ref.label:
        return TransmittanceEstimate(value=1.0, error=0.0, pixel_error=0.0)
    if ref.mean == 0.0:
        raise ConfigError(f"reference region {ref.label!r} has zero mean counts")
    ratio = stats.mean / ref.mean
    value = ratio ** (1.0 / exponent)
    ratio_error = math.hypot(stats.std_error, ratio * ref.std_error) / ref.mean
    spread = math.hypot(math.sqrt(stats.variance), ratio * math.sqrt(ref.variance)) / ref.mean
    error = _propagate(value, ratio, ratio_error, exponent)
    pixel_error = _propagate(value, ratio, spread, exponent)
    if value > 1.0:
        logger.warning("transmittance estimate %.6f of region %r clamped to 1", value, stats.label)
        return TransmittanceEstimate(value=1.0, error=error, pixel_error=pixel_error, clamped=True)
    return TransmittanceEstimate(value=value, error=error, pixel_error=pixel_error)


def estimate_transmittance(
    result: ScanResult, region: str, reference: Optional[str] = None
) -> TransmittanceEstimate:
    """t̂ from the ratio of ensemble means, with propagated standard errors

    Single-pass counts scale as t and double-pass counts as t², so the double-pass estimate is
    the square root of the ratio and carries half its relative error.
    """
    reference = reference or result.reference
    for label in (region, reference):
        if label not in result.region_stats:
            raise ConfigError(f"region {label!r} is not part of the scan")
    return _transmittance(
        result.region_stats[region],
        result.region_stats[reference],
        _detected_exponent(result.config),
    )


def calibrate_budget(
    sample: SampleMap, cfg: ExperimentConfig, target_counts: float = DEFAULT_TARGET_COUNTS
) -> ExperimentConfig:
    """Pair rate giving `target_counts` mean coincidences per reference pixel"""
    if target_counts <= 0.0:
        raise ConfigError(f"target counts must be positive, got {target_counts}")
    per_pair = analytic_counts(cfg, sample.transmittance(sample.reference)).mean
    per_pair /= cfg.pairs_mean_per_dwell
    if per_pair <= 0.0:
        raise ConfigError("the reference region yields no coincidences")
    return cfg.copy(update={"pairs_mean_per_dwell": target_counts / per_pair})


class ScanningMicroscope:
    """Scans a `SampleMap` pixel by pixel; one RNG stream per map row"""

    logger = logging.getLogger(__name__)

    def __init__(
        self,
        cfg: ExperimentConfig,
        workers: int = 1,
        ensemble_rows: Optional[int] = DEFAULT_ENSEMBLE_ROWS,
        resamples: int = BOOTSTRAP_RESAMPLES,
    ):
        self.cfg = cfg
        self.workers = max(1, workers)
        self.ensemble_rows = ensemble_rows
        self.resamples = resamples
        self._scheme_tag = list(Scheme).index(cfg.scheme.scheme)

    def __repr__(self) -> str:
        return f"<ScanningMicroscope: {self.cfg.scheme.scheme.value}>"

    def _row(self, sample: SampleMap, survival: Dict[str, np.ndarray], y: int) -> np.ndarray:
        rng = stream_generator(self.cfg.rng_seed, Stream.SCAN, self._scheme_tag, y)
        row = np.stack([survival[label] for label in sample.labels[y]])
        record = simulate_dwells(
            rng,
            self.cfg.pairs_mean_per_dwell,
            row,
            self.cfg.required_modes(),
            self.cfg.background_rate,
        )
        return record.coincidences

    def _region_stats(
        self, sample: SampleMap, counts: np.ndarray, reference: str
    ) -> Dict[str, RegionStats]:
        ensembles = {}
        for label in sample.regions:
            values = counts[sample.ensemble_mask(label, self.ensemble_rows)].astype(float)
            if values.size == 0:
                raise EmptyRegionError(label)
            if values.size < 2:
                self.logger.warning("region %r has a single pixel; no variance", label)
            ensembles[label] = values

        plain = {
            label: RegionStats(
                label=label,
                t=sample.transmittance(label),
                pixels=int(values.size),
                mean=float(values.mean()),
                variance=float(values.var(ddof=1)) if values.size >= 2 else math.nan,
                std_error=_standard_error(values),
            )
            for label, values in ensembles.items()
        }
        ref = plain[reference]
        exponent = _detected_exponent(self.cfg)

        stats = {}
        for index, label in enumerate(sample.regions):
            values = ensembles[label]
            snr = None
            if label != reference and values.size >= 2 and ref.pixels >= 2:
                snr = snr_estimate(
                    ensembles[reference],
                    values,
                    self.resamples,
                    self.cfg.rng_seed,
                    key=(self._scheme_tag, index),
                )
            t_hat = _transmittance(plain[label], ref, exponent)
            stats[label] = replace(plain[label], t_hat=t_hat, snr=snr)
            self.logger.debug(
                "region %r: %d pixels, mean %.3f, t_hat %.5f",
                label,
                values.size,
                plain[label].mean,
                t_hat.value,
            )
        return stats

    def scan(self, sample: SampleMap) -> ScanResult:
        start_ts = time.time()
        survival = {
            label: np.array(self.cfg.transmittances(sample.transmittance(label)), dtype=float)
            for label in sample.regions
        }
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            rows = list(executor.map(partial(self._row, sample, survival), range(sample.height)))
        counts = np.stack(rows)
        reference = sample.reference
        result = ScanResult(
            sample=sample,
            config=self.cfg,
            counts=counts,
            ensemble_rows=self.ensemble_rows,
            reference=reference,
            region_stats=self._region_stats(sample, counts, reference),
        )
        elapsed_time = time.time() - start_ts
        self.logger.info(
            "Scanned %dx%d pixels, %s (%.3fms)",
            sample.width,
            sample.height,
            self.cfg.scheme.scheme.value,
            elapsed_time * 1e3,
        )
        return result


def _standard_error(values: np.ndarray) -> float:
    if values.size < 2:
        return math.nan
    return float(values.std(ddof=1) / math.sqrt(values.size))


def scan(
    sample: SampleMap,
    cfg: ExperimentConfig,
    workers: int = 1,
    ensemble_rows: Optional[int] = DEFAULT_ENSEMBLE_ROWS,
    resamples: int = BOOTSTRAP_RESAMPLES,
) -> ScanResult:
    return ScanningMicroscope(cfg, workers, ensemble_rows, resamples).scan(sample)


def matched_scans(
    sample: SampleMap,
    cfg_sp: ExperimentConfig,
    cfg_dp: ExperimentConfig,
    target_counts: float = DEFAULT_TARGET_COUNTS,
    workers: int = 1,
    ensemble_rows: Optional[int] = DEFAULT_ENSEMBLE_ROWS,
    resamples: int = BOOTSTRAP_RESAMPLES,
) -> Tuple[ScanResult, ScanResult]:
    """Single-pass scan calibrated to `target_counts` and its resource-matched double-pass scan"""
    calibrated = calibrate_budget(sample, cfg_sp, target_counts)
    matched = resource_matched_pair(calibrated, cfg_dp)
    return (
        scan(sample, matched.single_pass, workers, ensemble_rows, resamples),
        scan(sample, matched.double_pass, workers, ensemble_rows, resamples),
    )


class EnhancementRow(pydantic.BaseModel):
    region: str
    t: float
    snr_sp: Optional[float]
    snr_sp_err: Optional[float]
    snr_dp: Optional[float]
    snr_dp_err: Optional[float]
    enhancement: Optional[float]
    enhancement_err: Optional[float]
    predicted: Optional[float]


class EnhancementReport(pydantic.BaseModel):
    reference: str
    rows: List[EnhancementRow]
    curve: List[Tuple[float, float]]

    def row(self, region: str) -> EnhancementRow:
        for row in self.rows:
            if row.region == region:
                return row
        raise KeyError(region)

    def curve_rows(self) -> List[dict]:
        return [{"t": t, "predicted_enhancement": e} for t, e in self.curve]


def _predicted_ratio(sp: ScanResult, dp: ScanResult, t: float, reference_t: float) -> float:
    snr_sp = predicted_snr(sp.config, t, reference_t)
    if snr_sp == 0.0:
        return math.nan
    return predicted_snr(dp.config, t, reference_t) / snr_sp


def enhancement_report(
    sp: ScanResult, dp: ScanResult, curve_points: int = 100
) -> EnhancementReport:
    """SNR_DP / SNR_SP of every region against the reference, plus the analytic overlay curve"""
    if not sp.sample.same_layout(dp.sample):
        raise ResourceMatchError("single- and double-pass scans were taken on different maps")
    if sp.ensemble_rows != dp.ensemble_rows:
        raise ResourceMatchError("scans use different region ensembles")
    budget_sp, budget_dp = sp.launched_photons, dp.launched_photons
    if abs(budget_sp - budget_dp) > 1e-3 * budget_sp:
        raise ResourceMatchError(
            f"launched photons differ: {budget_sp:.6g} (single) vs {budget_dp:.6g} (double)"
        )

    reference_t = sp.sample.transmittance(sp.reference)
    rows = []
    for label in sp.sample.regions:
        if label == sp.reference:
            continue
        est_sp, est_dp = sp.region_stats[label].snr, dp.region_stats[label].snr
        ratio: Optional[float] = None
        error: Optional[float] = None
        if est_sp is not None and est_dp is not None and est_sp.is_defined and est_sp.snr:
            if est_dp.is_defined:
                ratio, error = enhancement_ratio(est_sp, est_dp)
        t = sp.sample.transmittance(label)
        rows.append(
            EnhancementRow(
                region=label,
                t=t,
                snr_sp=est_sp.snr if est_sp else None,
                snr_sp_err=est_sp.std_error if est_sp else None,
                snr_dp=est_dp.snr if est_dp else None,
                snr_dp_err=est_dp.std_error if est_dp else None,
                enhancement=ratio,
                enhancement_err=error,
                predicted=_predicted_ratio(sp, dp, t, reference_t),
            )
        )

    passes = dp.config.scheme.passes or 2
    grid = np.linspace(reference_t / curve_points, reference_t, curve_points)
    curve = [(float(t), snr_enhancement_prediction(float(t), reference_t, passes)) for t in grid]
    return EnhancementReport(reference=sp.reference, rows=rows, curve=curve)


def layered_map(
    width: int, bands: Sequence[Tuple[str, float, int]], pixel_pitch_nm: float = 100.0
) -> SampleMap:
    """Map of horizontal bands, each (label, t, rows) from top to bottom"""
    labels = np.concatenate(
        [np.full((rows, width), label, dtype="<U1") for label, _, rows in bands]
    )
    legend = {label: RegionSpec(label=label, t=t) for label, t, _ in bands}
    return SampleMap(labels, legend, pixel_pitch_nm)
