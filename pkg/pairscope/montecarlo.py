"""Seeded simulation of photon-pair coincidence counting

Every dwell window receives Poisson(pairs_mean_per_dwell) generation events. An event emits one
photon into each mode; every photon survives its mode's total transmittance independently, and the
event registers a coincidence when every mode with a non-zero correlation order clicks.

Random numbers come from independent streams keyed by (seed, stream, block). Blocks are fixed runs
of dwells, so a run is bit-identical whatever the number of workers.
"""

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pydantic

from .exceptions import ConfigError, ResourceMatchError, UndefinedSnrError
from .fock import (
    apply_loss,
    correlation_mean,
    correlation_moment,
    correlation_second_moment,
    default_n_max,
    expand_source,
    mean_photon_number,
)
from .types import (
    Coherent,
    CorrelationObservable,
    ExperimentConfig,
    IdealPair,
    LossNetwork,
)

DWELL_BLOCK = 4096
BOOTSTRAP_RESAMPLES = 1000
_BOOTSTRAP_CELLS = 2_000_000  # resampled values held in memory at once


class Stream(IntEnum):
    COUNTING = 0
    BOOTSTRAP = 1
    SCAN = 2


def stream_generator(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream identified by `key` under the master seed"""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(sequence))


@dataclass(frozen=True, eq=False)
class CountRecord:
    """Per-dwell coincidence counts and per-mode singles counts"""

    coincidences: np.ndarray
    singles: np.ndarray
    required: Tuple[int, ...] = ()

    def __post_init__(self):
        coincidences = np.asarray(self.coincidences, dtype=np.int64)
        singles = np.asarray(self.singles, dtype=np.int64)
        if coincidences.ndim != 1 or singles.ndim != 2 or singles.shape[0] != coincidences.size:
            raise ConfigError("count record needs one coincidence and one singles row per dwell")
        if np.any(coincidences < 0) or np.any(singles < 0):
            raise ConfigError("counts must be non-negative")
        participating = singles[:, list(self.required)] if self.required else singles
        if participating.shape[1] and np.any(coincidences > participating.min(axis=1)):
            raise ConfigError("coincidences exceed the singles of a participating mode")
        object.__setattr__(self, "coincidences", coincidences)
        object.__setattr__(self, "singles", singles)

    def __repr__(self) -> str:
        return f"<CountRecord: {self.dwells} dwells, {self.mode_count} modes>"

    @property
    def dwells(self) -> int:
        return int(self.coincidences.size)

    @property
    def mode_count(self) -> int:
        return int(self.singles.shape[1])

    def fieldnames(self) -> List[str]:
        return ["dwell_index", "coincidences"] + [
            f"singles_{i + 1}" for i in range(self.mode_count)
        ]

    def to_rows(self) -> List[Dict[str, int]]:
        rows = []
        for idx in range(self.dwells):
            row = {"dwell_index": idx, "coincidences": int(self.coincidences[idx])}
            for mode in range(self.mode_count):
                row[f"singles_{mode + 1}"] = int(self.singles[idx, mode])
            rows.append(row)
        return rows

    @classmethod
    def concatenate(cls, parts: Sequence["CountRecord"]) -> "CountRecord":
        return cls(
            np.concatenate([p.coincidences for p in parts]),
            np.concatenate([p.singles for p in parts]),
            parts[0].required,
        )


def _survival_patterns(modes: int) -> np.ndarray:
    """All 2^M click patterns, one row per pattern"""
    return np.array(list(itertools.product((0, 1), repeat=modes)), dtype=np.int64)


def simulate_dwells(
    rng: np.random.Generator,
    pairs_mean: float,
    transmittances: np.ndarray,
    required: Sequence[int],
    background_rate: float = 0.0,
) -> CountRecord:
    """Count coincidences for one dwell per row of `transmittances` (shape dwells x modes)"""
    dwells, modes = transmittances.shape
    pairs = rng.poisson(pairs_mean, size=dwells)
    patterns = _survival_patterns(modes)
    survive = transmittances[:, None, :]
    pvals = np.prod(np.where(patterns[None, :, :] == 1, survive, 1.0 - survive), axis=2)
    outcomes = rng.multinomial(pairs, pvals)
    singles = outcomes @ patterns
    coincident = patterns[:, list(required)].all(axis=1)
    coincidences = outcomes[:, coincident].sum(axis=1)
    if background_rate > 0.0:
        # uncorrelated background clicks never complete a coincidence
        singles = singles + rng.poisson(background_rate, size=singles.shape)
    return CountRecord(coincidences, singles, tuple(required))


def _check_source(cfg: ExperimentConfig) -> None:
    if isinstance(cfg.source, Coherent):
        raise ConfigError("coherent sources have no pair events to count")
    if cfg.mode_count < 2:
        raise ConfigError("the counting harness needs a correlated multi-mode source")


class CountingSimulator:
    """Runs an `ExperimentConfig` in fixed blocks of dwells, optionally on several threads"""

    def __init__(self, cfg: ExperimentConfig, workers: int = 1, stream: Sequence[int] = ()):
        _check_source(cfg)
        self.logger = logging.getLogger(__name__)
        self.cfg = cfg
        self.workers = max(1, workers)
        self.stream = tuple(stream) or (Stream.COUNTING,)

    def __repr__(self) -> str:
        return f"<CountingSimulator: {self.cfg.dwells} dwells, seed={self.cfg.rng_seed}>"

    def _block(self, block: Tuple[int, int, int]) -> CountRecord:
        index, start, stop = block
        rng = stream_generator(self.cfg.rng_seed, *self.stream, index)
        self.logger.debug("block %d: dwells %d..%d, stream %s", index, start, stop, self.stream)
        survival = np.broadcast_to(
            np.array(self.cfg.transmittances(), dtype=float), (stop - start, self.cfg.mode_count)
        )
        return simulate_dwells(
            rng,
            self.cfg.pairs_mean_per_dwell,
            survival,
            self.cfg.required_modes(),
            self.cfg.background_rate,
        )

    def run(self) -> CountRecord:
        start_ts = time.time()
        dwells = self.cfg.dwells
        blocks = [
            (idx, start, min(start + DWELL_BLOCK, dwells))
            for idx, start in enumerate(range(0, dwells, DWELL_BLOCK))
        ]
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            parts = list(executor.map(self._block, blocks))
        record = CountRecord.concatenate(parts)
        elapsed_time = time.time() - start_ts
        self.logger.info("Simulated %d dwells (%.3fms)", dwells, elapsed_time * 1e3)
        return record


def run_counting(
    cfg: ExperimentConfig, workers: int = 1, stream: Sequence[int] = ()
) -> CountRecord:
    return CountingSimulator(cfg, workers, stream).run()


@dataclass(frozen=True)
class SnrEstimate:
    """(⟨O_in⟩ - ⟨O_out⟩) / √(Var O_in + Var O_out) with a bootstrap standard error"""

    snr: Optional[float]
    std_error: Optional[float]
    mean_in: float
    mean_out: float
    var_in: float
    var_out: float

    @property
    def is_defined(self) -> bool:
        return self.snr is not None

    def require(self) -> float:
        if self.snr is None:
            raise UndefinedSnrError(self)
        return self.snr


def _coincidence_array(counts: Union[CountRecord, np.ndarray, Sequence[float]]) -> np.ndarray:
    if isinstance(counts, CountRecord):
        return counts.coincidences.astype(float)
    return np.asarray(counts, dtype=float).reshape(-1)


def snr_estimate(
    in_counts: Union[CountRecord, np.ndarray, Sequence[float]],
    out_counts: Union[CountRecord, np.ndarray, Sequence[float]],
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
    key: Sequence[int] = (),
) -> SnrEstimate:
    """SNR of two count ensembles from sample means and unbiased sample variances"""
    x = _coincidence_array(in_counts)
    y = _coincidence_array(out_counts)
    if x.size < 2 or y.size < 2:
        raise ConfigError("SNR needs at least two dwells in each ensemble")
    mean_in, mean_out = float(x.mean()), float(y.mean())
    var_in, var_out = float(x.var(ddof=1)), float(y.var(ddof=1))
    combined = var_in + var_out
    if combined == 0.0:
        logging.getLogger(__name__).warning("SNR undefined: both ensembles are constant")
        return SnrEstimate(None, None, mean_in, mean_out, var_in, var_out)
    snr = (mean_in - mean_out) / math.sqrt(combined)

    rng = stream_generator(seed, Stream.BOOTSTRAP, *key)
    batch = max(1, min(resamples, _BOOTSTRAP_CELLS // max(x.size, y.size)))
    replicas = []
    for start in range(0, resamples, batch):
        size = min(batch, resamples - start)
        xs = x[rng.integers(0, x.size, size=(size, x.size))]
        ys = y[rng.integers(0, y.size, size=(size, y.size))]
        spread = np.sqrt(xs.var(axis=1, ddof=1) + ys.var(axis=1, ddof=1))
        with np.errstate(divide="ignore", invalid="ignore"):
            replicas.append((xs.mean(axis=1) - ys.mean(axis=1)) / spread)
    values = np.concatenate(replicas)
    values = values[np.isfinite(values)]
    std_error = float(values.std(ddof=1)) if values.size >= 2 else None
    return SnrEstimate(snr, std_error, mean_in, mean_out, var_in, var_out)


def launched_per_event(cfg: ExperimentConfig) -> float:
    """Mean photons one generation event sends onto the sample"""
    event = IdealPair(modes=cfg.mode_count)
    return mean_photon_number(expand_source(event), cfg.scheme.sample_modes())


def launched_photons(cfg: ExperimentConfig) -> float:
    """Expected photons launched onto the sample over the whole run"""
    return cfg.pairs_mean_per_dwell * launched_per_event(cfg) * cfg.dwells


@dataclass(frozen=True)
class MatchedPair:
    single_pass: ExperimentConfig
    double_pass: ExperimentConfig

    @property
    def launched_photons(self) -> float:
        return launched_photons(self.single_pass)


def resource_matched_pair(cfg_sp: ExperimentConfig, cfg_dp: ExperimentConfig) -> MatchedPair:
    """Rescale the pair rate of `cfg_dp` so both runs launch the same photons onto the sample

    A double-pass event puts two photons on the sample where a single-pass event puts one, so
    the double-pass rate (equivalently its dwell time) is halved.
    """
    if cfg_sp.source != cfg_dp.source:
        raise ResourceMatchError("matched runs must share the same source")
    if cfg_sp.scheme.sample_t != cfg_dp.scheme.sample_t:
        raise ResourceMatchError("matched runs must share the same sample transmittance")
    per_event_sp = launched_per_event(cfg_sp)
    per_event_dp = launched_per_event(cfg_dp)
    if cfg_sp.pairs_mean_per_dwell * per_event_sp <= 0.0 or per_event_dp <= 0.0:
        raise ResourceMatchError("cannot match a zero photon rate")
    rate = cfg_sp.pairs_mean_per_dwell * per_event_sp / per_event_dp
    matched = cfg_dp.copy(update={"pairs_mean_per_dwell": rate, "dwells": cfg_sp.dwells})
    budget_sp, budget_dp = launched_photons(cfg_sp), launched_photons(matched)
    if abs(budget_dp - budget_sp) > 1e-3 * budget_sp:
        raise ResourceMatchError(f"launched photons differ: {budget_sp} vs {budget_dp}")
    return MatchedPair(cfg_sp, matched)


@dataclass(frozen=True)
class CountMoments:
    mean: float
    variance: float
    fourth_central: float
    singles_mean: Tuple[float, ...]


def analytic_counts(cfg: ExperimentConfig, sample_t: Optional[float] = None) -> CountMoments:
    """Moments of the per-dwell coincidence count predicted from fock-core

    The per-dwell count is a compound Poisson sum of per-event indicators X, so its cumulants
    are κ_j = λ ⟨X^j⟩.
    """
    orders = tuple(min(k, 1) for k in cfg.scheme.orders)
    indicator = CorrelationObservable(orders=orders)
    event_source = IdealPair(modes=cfg.mode_count)
    event = expand_source(event_source, default_n_max(event_source, orders))
    transmittances = cfg.transmittances(sample_t)
    detected = apply_loss(event, LossNetwork(per_mode_t=transmittances))
    lam = cfg.pairs_mean_per_dwell
    variance = lam * correlation_second_moment(detected, indicator)
    kappa4 = lam * correlation_moment(detected, indicator, 4)
    return CountMoments(
        mean=lam * correlation_mean(detected, indicator),
        variance=variance,
        fourth_central=kappa4 + 3.0 * variance**2,
        singles_mean=tuple(lam * t + cfg.background_rate for t in transmittances),
    )


def predicted_snr(
    cfg: ExperimentConfig, sample_t: float, reference_t: float = 1.0
) -> float:
    reference = analytic_counts(cfg, reference_t)
    sample = analytic_counts(cfg, sample_t)
    return (reference.mean - sample.mean) / math.sqrt(reference.variance + sample.variance)


class ConvergenceRow(pydantic.BaseModel):
    rep: int
    dwells: int
    statistic: str
    empirical: float
    analytic: float
    std_error: float
    z: float


class ConvergenceReport(pydantic.BaseModel):
    rows: List[ConvergenceRow]

    def fraction_within(self, limit: float = 4.0) -> float:
        if not self.rows:
            return 0.0
        return sum(abs(row.z) < limit for row in self.rows) / len(self.rows)

    def to_rows(self) -> List[dict]:
        return [row.dict() for row in self.rows]


def mc_vs_analytic_report(
    cfg: ExperimentConfig, reps: int, workers: int = 1
) -> ConvergenceReport:
    """z-scores of empirical coincidence mean/variance and singles means against fock-core"""
    if reps < 10:
        raise ConfigError(f"at least 10 repetitions are needed, got {reps}")
    moments = analytic_counts(cfg)
    n = cfg.dwells
    var_of_variance = (moments.fourth_central - moments.variance**2 * (n - 3) / (n - 1)) / n
    rows: List[ConvergenceRow] = []
    for rep in range(reps):
        record = run_counting(cfg, workers, stream=(Stream.COUNTING, rep))
        cells = [
            (
                "coincidence_mean",
                float(record.coincidences.mean()),
                moments.mean,
                math.sqrt(moments.variance / n),
            ),
            (
                "coincidence_variance",
                float(record.coincidences.var(ddof=1)),
                moments.variance,
                math.sqrt(max(var_of_variance, 0.0)),
            ),
        ]
        for mode, expected in enumerate(moments.singles_mean):
            # singles are thinned Poisson plus Poisson background
            cells.append(
                (
                    f"singles_{mode + 1}_mean",
                    float(record.singles[:, mode].mean()),
                    expected,
                    math.sqrt(expected / n),
                )
            )
        for statistic, empirical, analytic, std_error in cells:
            z = (empirical - analytic) / std_error if std_error > 0.0 else 0.0
            if std_error == 0.0 and empirical != analytic:
                z = math.inf
            rows.append(
                ConvergenceRow(
                    rep=rep,
                    dwells=n,
                    statistic=statistic,
                    empirical=empirical,
                    analytic=analytic,
                    std_error=std_error,
                    z=z,
                )
            )
    report = ConvergenceReport(rows=rows)
    logging.getLogger(__name__).info(
        "%d reps of %d dwells: %.1f%% of z-scores within 4",
        reps,
        n,
        100.0 * report.fraction_within(),
    )
    return report


@dataclass(frozen=True)
class SchemeComparison:
    sample_t: float
    reference_t: float
    single_pass: SnrEstimate
    double_pass: SnrEstimate
    enhancement: float
    enhancement_error: float
    predicted: float


def enhancement_ratio(
    single_pass: SnrEstimate, double_pass: SnrEstimate
) -> Tuple[float, float]:
    """SNR_DP / SNR_SP with relative bootstrap errors added in quadrature"""
    snr_sp, snr_dp = single_pass.require(), double_pass.require()
    if snr_sp == 0.0:
        raise UndefinedSnrError(single_pass)
    ratio = snr_dp / snr_sp
    if snr_dp == 0.0 or single_pass.std_error is None or double_pass.std_error is None:
        return ratio, math.nan
    relative = math.hypot(single_pass.std_error / snr_sp, double_pass.std_error / snr_dp)
    return ratio, abs(ratio) * relative


def compare_schemes(
    matched: MatchedPair,
    sample_t: float,
    reference_t: float = 1.0,
    resamples: int = BOOTSTRAP_RESAMPLES,
    workers: int = 1,
) -> SchemeComparison:
    """SNR of sample against reference under both schemes at matched resources"""
    estimates = []
    for tag, cfg in enumerate((matched.single_pass, matched.double_pass)):
        reference_cfg = cfg.copy(update={"scheme": cfg.scheme.with_sample_t(reference_t)})
        sample_cfg = cfg.copy(update={"scheme": cfg.scheme.with_sample_t(sample_t)})
        reference = run_counting(reference_cfg, workers, stream=(Stream.COUNTING, 1000 + tag, 0))
        sample = run_counting(sample_cfg, workers, stream=(Stream.COUNTING, 1000 + tag, 1))
        estimates.append(snr_estimate(reference, sample, resamples, seed=cfg.rng_seed + tag))
    ratio, error = enhancement_ratio(*estimates)
    predicted = predicted_snr(matched.double_pass, sample_t, reference_t) / predicted_snr(
        matched.single_pass, sample_t, reference_t
    )
    return SchemeComparison(
        sample_t=sample_t,
        reference_t=reference_t,
        single_pass=estimates[0],
        double_pass=estimates[1],
        enhancement=ratio,
        enhancement_error=error,
        predicted=predicted,
    )
