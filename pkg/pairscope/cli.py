"""`pairscope` command line: config-driven runs that write CSV/PGM data and a manifest"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, ClassVar, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
import pydantic
from pydantic import Field

from .artifacts import write_csv, write_manifest, write_pgm
from .exceptions import (
    ConfigError,
    ResourceMatchError,
    UndefinedPrecisionError,
    UndefinedSnrError,
)
from .fock import normal_order_coefficients
from .montecarlo import (
    BOOTSTRAP_RESAMPLES,
    compare_schemes,
    mc_vs_analytic_report,
    resource_matched_pair,
    run_counting,
)
from .precision import PrecisionSweep, critical_transmittance, find_crossover
from .scan import (
    DEFAULT_ENSEMBLE_ROWS,
    DEFAULT_TARGET_COUNTS,
    SampleMap,
    enhancement_report,
    matched_scans,
)
from .types import ExperimentConfig, FrozenModel, IdealPair, Scheme, SchemeConfig, SourceModel

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNDEFINED = 3

SWEEP_FIELDS = ["t", "dt_sp", "dt_dp", "dt_cs", "enhancement", "t_critical"]
CRITICAL_FIELDS = ["beta", "t_critical", "t_critical_bisection", "limit"]
COEFF_FIELDS = ["k", "m", "C"]
CONVERGENCE_FIELDS = ["rep", "dwells", "statistic", "empirical", "analytic", "std_error", "z"]
REGION_FIELDS = ["region", "mean", "variance", "t_hat", "t_err", "snr_vs_ref", "snr_err"]
PIXEL_FIELDS = ["pixel_x", "pixel_y", "label", "counts"]
ENHANCEMENT_FIELDS = [
    "region",
    "t",
    "snr_sp",
    "snr_sp_err",
    "snr_dp",
    "snr_dp_err",
    "enhancement",
    "enhancement_err",
    "predicted",
]
CURVE_FIELDS = ["t", "predicted_enhancement"]


class RunConfig(FrozenModel):
    truncates: ClassVar[bool] = True

    rng_seed: int = Field(0, ge=0, lt=2**64)
    out_dir: str = "."
    n_max: Optional[int] = Field(None, ge=1)

    @pydantic.validator("n_max")
    def truncation_is_used(cls, v):
        if v is not None and not cls.truncates:
            raise ValueError("n_max has no effect on this command")
        return v


class SweepConfig(RunConfig):
    beta: float = Field(0.01, gt=0.0, le=1.0)
    t_min: float = Field(0.01, ge=0.0, le=1.0)
    t_max: float = Field(1.0, gt=0.0, le=1.0)
    t_steps: int = Field(100, ge=1)

    @pydantic.root_validator(skip_on_failure=True)
    def ordered_grid(cls, values):
        if values["t_min"] > values["t_max"]:
            raise ValueError("t_min must not exceed t_max")
        return values

    def grid(self) -> np.ndarray:
        return np.round(np.linspace(self.t_min, self.t_max, self.t_steps), 12)


class CriticalConfig(RunConfig):
    betas: Tuple[float, ...] = (0.0, 0.001, 0.01, 0.1, 0.5, 0.9)

    @pydantic.validator("betas", each_item=True)
    def beta_range(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"beta {v!r} is outside [0, 1]")
        return v


class CoeffsConfig(RunConfig):
    truncates = False

    k_max: int = Field(4, ge=1, le=6)


class _CountingConfig(RunConfig):
    truncates = False

    source: SourceModel = Field(IdealPair(), discriminator="kind")
    orders: Tuple[int, ...] = (1, 1)
    apparatus_t: Optional[Tuple[float, ...]] = None
    detector_efficiency: Optional[Tuple[float, ...]] = None
    background_rate: float = Field(0.0, ge=0.0)

    def experiment(
        self, scheme: Scheme, pairs_mean: float, dwells: int, sample_t: float = 1.0
    ) -> ExperimentConfig:
        passes = len(self.orders) if scheme == Scheme.MULTI_PASS else None
        return ExperimentConfig(
            source=self.source,
            scheme=SchemeConfig(
                scheme=scheme,
                sample_t=sample_t,
                orders=self.orders,
                passes=passes,
                apparatus_t=self.apparatus_t,
            ),
            pairs_mean_per_dwell=pairs_mean,
            dwells=dwells,
            rng_seed=self.rng_seed,
            detector_efficiency=self.detector_efficiency,
            background_rate=self.background_rate,
        )


class MonteCarloConfig(_CountingConfig):
    scheme: Scheme = Scheme.SINGLE_PASS
    sample_t: float = Field(1.0, ge=0.0, le=1.0)
    pairs_mean_per_dwell: float = Field(5000.0, gt=0.0)
    dwells: int = Field(100_000, ge=2)
    reps: int = Field(10, ge=10)
    compare_t: Optional[float] = Field(None, gt=0.0, le=1.0)
    resamples: int = Field(BOOTSTRAP_RESAMPLES, ge=2)


class ScanConfig(_CountingConfig):
    map_path: Optional[str] = None
    target_counts: float = Field(DEFAULT_TARGET_COUNTS, gt=0.0)
    ensemble_rows: Optional[int] = Field(DEFAULT_ENSEMBLE_ROWS, ge=1)
    resamples: int = Field(BOOTSTRAP_RESAMPLES, ge=2)


def _resolved(cfg: RunConfig) -> dict:
    return json.loads(cfg.json())


def cmd_precision_sweep(cfg: SweepConfig, threads: int) -> Tuple[List[Path], dict]:
    out_dir = Path(cfg.out_dir)
    rows = PrecisionSweep(cfg.beta, cfg.n_max, threads).run(cfg.grid())
    path = write_csv(out_dir / "sweep.csv", SWEEP_FIELDS, (row.dict() for row in rows))
    return [path], {}


def cmd_critical(cfg: CriticalConfig, threads: int) -> Tuple[List[Path], dict]:
    rows = []
    for beta in cfg.betas:
        critical = critical_transmittance(beta)
        bisection = None if critical.is_limit else find_crossover(beta, cfg.n_max)
        rows.append(
            {
                "beta": beta,
                "t_critical": critical.value,
                "t_critical_bisection": bisection,
                "limit": critical.is_limit,
            }
        )
    path = write_csv(Path(cfg.out_dir) / "critical.csv", CRITICAL_FIELDS, rows)
    return [path], {}


def cmd_coeffs(cfg: CoeffsConfig, threads: int) -> Tuple[List[Path], dict]:
    rows = [
        {"k": k, "m": m, "C": c}
        for k in range(1, cfg.k_max + 1)
        for m, c in enumerate(normal_order_coefficients(k))
    ]
    path = write_csv(Path(cfg.out_dir) / "coeffs.csv", COEFF_FIELDS, rows)
    return [path], {}


def cmd_montecarlo(cfg: MonteCarloConfig, threads: int) -> Tuple[List[Path], dict]:
    out_dir = Path(cfg.out_dir)
    experiment = cfg.experiment(cfg.scheme, cfg.pairs_mean_per_dwell, cfg.dwells, cfg.sample_t)
    record = run_counting(experiment, threads)
    report = mc_vs_analytic_report(experiment, cfg.reps, threads)
    artifacts = [
        write_csv(out_dir / "counts.csv", record.fieldnames(), record.to_rows()),
        write_csv(out_dir / "convergence.csv", CONVERGENCE_FIELDS, report.to_rows()),
    ]
    summary = {"fraction_within_4": report.fraction_within(4.0)}
    if cfg.compare_t is not None:
        matched = resource_matched_pair(
            cfg.experiment(Scheme.SINGLE_PASS, cfg.pairs_mean_per_dwell, cfg.dwells),
            cfg.experiment(Scheme.DOUBLE_PASS, cfg.pairs_mean_per_dwell, cfg.dwells),
        )
        comparison = compare_schemes(matched, cfg.compare_t, 1.0, cfg.resamples, threads)
        row = {
            "region": "sample",
            "t": comparison.sample_t,
            "snr_sp": comparison.single_pass.snr,
            "snr_sp_err": comparison.single_pass.std_error,
            "snr_dp": comparison.double_pass.snr,
            "snr_dp_err": comparison.double_pass.std_error,
            "enhancement": comparison.enhancement,
            "enhancement_err": comparison.enhancement_error,
            "predicted": comparison.predicted,
        }
        artifacts.append(write_csv(out_dir / "enhancement.csv", ENHANCEMENT_FIELDS, [row]))
    return artifacts, summary


def cmd_scan(cfg: ScanConfig, threads: int) -> Tuple[List[Path], dict]:
    if cfg.map_path is None:
        raise ConfigError("scan needs a map file (`map_path` or --map)")
    out_dir = Path(cfg.out_dir)
    sample = SampleMap.parse_file(cfg.map_path)
    # the pair rate is recalibrated from target_counts
    sp, dp = matched_scans(
        sample,
        cfg.experiment(Scheme.SINGLE_PASS, 1.0, 2),
        cfg.experiment(Scheme.DOUBLE_PASS, 1.0, 2),
        cfg.target_counts,
        threads,
        cfg.ensemble_rows,
        cfg.resamples,
    )
    report = enhancement_report(sp, dp)
    artifacts = []
    for tag, result in (("sp", sp), ("dp", dp)):
        artifacts.append(write_pgm(out_dir / f"scan_{tag}.pgm", result.counts))
        artifacts.append(
            write_csv(out_dir / f"pixels_{tag}.csv", PIXEL_FIELDS, result.pixel_rows())
        )
        artifacts.append(
            write_csv(out_dir / f"regions_{tag}.csv", REGION_FIELDS, result.region_rows())
        )
    artifacts.append(
        write_csv(
            out_dir / "enhancement.csv", ENHANCEMENT_FIELDS, (row.dict() for row in report.rows)
        )
    )
    artifacts.append(
        write_csv(out_dir / "enhancement_curve.csv", CURVE_FIELDS, report.curve_rows())
    )
    summary = {
        "reference": report.reference,
        "pairs_mean_per_dwell": {
            "single_pass": sp.config.pairs_mean_per_dwell,
            "double_pass": dp.config.pairs_mean_per_dwell,
        },
        "launched_photons": {
            "single_pass": sp.launched_photons,
            "double_pass": dp.launched_photons,
        },
    }
    return artifacts, summary


Command = Callable[..., Tuple[List[Path], dict]]

COMMANDS: Dict[str, Tuple[Type[RunConfig], Command, str]] = {
    "precision-sweep": (
        SweepConfig,
        cmd_precision_sweep,
        "Δt of single-pass, double-pass and coherent light over t",
    ),
    "critical": (CriticalConfig, cmd_critical, "transmittance above which double-pass wins"),
    "coeffs": (CoeffsConfig, cmd_coeffs, "normal-ordering coefficients C_{k,m}"),
    "montecarlo": (MonteCarloConfig, cmd_montecarlo, "counting runs against analytic moments"),
    "scan": (ScanConfig, cmd_scan, "raster-scan a transmittance map under both schemes"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master RNG seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument(
        "--threads", type=int, default=1, help="worker threads; never changes results"
    )
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="pairscope", description="Correlated-photon absorption estimation lab"
    )
    sub = parser.add_subparsers(dest="cmd", required=True)
    for name, (_, _, help_text) in COMMANDS.items():
        command = sub.add_parser(name, parents=[common], help=help_text)
        if name == "scan":
            command.add_argument("--map", type=Path, help="sample map file (overrides the config)")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Config file values, then command-line overrides; relative map paths follow the file"""
    model, _, _ = COMMANDS[args.cmd]
    raw: dict = {}
    if args.config is not None:
        raw = json.loads(model.parse_file(args.config).json())
        if raw.get("map_path") is not None:
            raw["map_path"] = str(args.config.parent / raw["map_path"])
    if args.seed is not None:
        raw["rng_seed"] = args.seed
    if args.out is not None:
        raw["out_dir"] = str(args.out)
    if getattr(args, "map", None) is not None:
        raw["map_path"] = str(args.map)
    return model.parse_obj(raw)


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    if args.threads < 1:
        print("pairscope: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args)
        _, command, _ = COMMANDS[args.cmd]
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        artifacts, summary = command(cfg, args.threads)
        write_manifest(Path(cfg.out_dir), args.cmd, _resolved(cfg), artifacts, summary)
    except (UndefinedPrecisionError, UndefinedSnrError) as e:
        logger.error("%s", e)
        print(f"pairscope: {e}", file=sys.stderr)
        return EXIT_UNDEFINED
    except (ConfigError, ResourceMatchError, pydantic.ValidationError, OSError) as e:
        logger.error("%s", e)
        print(f"pairscope: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK
