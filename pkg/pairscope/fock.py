"""Exact photon-number statistics of diagonal multi-mode states

A state is held as a dense probability table over occupation tuples (n_1, ..., n_M) with
0 <= n_i <= n_max. The table is not renormalised after truncation; the missing probability is
carried as `deficit`. Both the loss channel and the correlation observables act diagonally on
photon number, so coherences between Fock states never enter anything computed here.
"""

import functools
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy
from scipy import special, stats

from .exceptions import ConfigError
from .types import (
    Coherent,
    CorrelationObservable,
    IdealPair,
    LossNetwork,
    MultiModeCorrelated,
    SourceModel,
    TwoModeSqueezed,
    WeakSpdc,
)

logger = logging.getLogger(__name__)

PRUNE_BELOW = 1e-30
MAX_NORMAL_ORDER = 8
_NORM_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class PhotonNumberDistribution:
    """Joint photon-number distribution of `mode_count` modes truncated at `n_max`

    probs[n_1, ..., n_M] is the probability of the occupation tuple; `deficit` is the probability
    mass lost beyond the truncation, so that probs.sum() == 1 - deficit.
    """

    probs: np.ndarray
    deficit: float = 0.0

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim < 1 or len(set(probs.shape)) != 1:
            raise ConfigError(f"probability table must be a hypercube, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
            raise ConfigError("probabilities must be finite and non-negative")
        if not 0.0 <= self.deficit <= 1.0:
            raise ConfigError(f"truncation deficit {self.deficit!r} is outside [0, 1]")
        probs[probs < PRUNE_BELOW] = 0.0
        total = float(probs.sum())
        if not 1.0 - self.deficit - _NORM_TOLERANCE <= total <= 1.0 + _NORM_TOLERANCE:
            raise ConfigError(
                f"probabilities sum to {total!r}, expected 1 - deficit = {1.0 - self.deficit!r}"
            )
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def __repr__(self) -> str:
        return (
            f"<PhotonNumberDistribution: {self.mode_count} modes, n_max={self.n_max}, "
            f"deficit={self.deficit:.3g}>"
        )

    @classmethod
    def from_mapping(
        cls,
        mapping: Mapping[Tuple[int, ...], float],
        mode_count: int,
        n_max: int,
        deficit: float = 0.0,
    ) -> "PhotonNumberDistribution":
        probs = np.zeros((n_max + 1,) * mode_count)
        for occupation, p in mapping.items():
            if len(occupation) != mode_count or not all(0 <= n <= n_max for n in occupation):
                raise ConfigError(f"occupation {occupation} does not fit {mode_count} modes")
            probs[tuple(occupation)] += p
        return cls(probs, deficit)

    @property
    def mode_count(self) -> int:
        return self.probs.ndim

    @property
    def n_max(self) -> int:
        return self.probs.shape[0] - 1

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def items(self) -> Iterator[Tuple[Tuple[int, ...], float]]:
        """Stored (occupation, probability) pairs with non-zero probability"""
        for index in zip(*np.nonzero(self.probs)):
            occupation = tuple(int(n) for n in index)
            yield occupation, float(self.probs[occupation])

    def __getitem__(self, occupation: Sequence[int]) -> float:
        if any(n > self.n_max for n in occupation):
            return 0.0
        return float(self.probs[tuple(occupation)])

    def marginal(self, mode: int) -> np.ndarray:
        axes = tuple(i for i in range(self.mode_count) if i != mode)
        return self.probs.sum(axis=axes) if axes else np.array(self.probs)


def default_n_max(source: SourceModel, orders: Optional[Sequence[int]] = None) -> int:
    """Smallest truncation that represents `source` and supports the observable `orders`"""
    total_order = sum(orders) if orders is not None else 1
    if isinstance(source, (TwoModeSqueezed, MultiModeCorrelated)):
        n_max = source.n_max
    elif isinstance(source, Coherent):
        if source.n_max is not None:
            n_max = source.n_max
        else:
            # 12 standard deviations plus margin keeps the Poisson tail far below 1e-15
            lam = source.mean_photons
            n_max = int(math.ceil(lam + 12.0 * math.sqrt(lam))) + 20
    else:
        # one photon per mode; room for the full coincidence order
        n_max = source.mode_count
    return max(n_max, total_order)


def expand_source(source: SourceModel, n_max: Optional[int] = None) -> PhotonNumberDistribution:
    """Photon-number table of a source, truncated at `n_max`, with its truncation deficit"""
    if n_max is None:
        n_max = default_n_max(source)
    if n_max < 1:
        raise ConfigError(f"n_max must be >= 1, got {n_max}")
    modes = source.mode_count
    probs = np.zeros((n_max + 1,) * modes)
    deficit = 0.0
    if isinstance(source, IdealPair):
        probs[(1,) * modes] = 1.0
    elif isinstance(source, WeakSpdc):
        beta2 = source.beta**2
        probs[(0,) * modes] = 1.0 - beta2
        probs[(1,) * modes] = beta2
    elif isinstance(source, (TwoModeSqueezed, MultiModeCorrelated)):
        beta2 = source.beta**2
        cutoff = min(n_max, source.n_max)
        for n in range(cutoff + 1):
            probs[(n,) * modes] = (1.0 - beta2) * beta2**n
        # geometric tail beyond the cutoff
        deficit = beta2 ** (cutoff + 1)
    elif isinstance(source, Coherent):
        marginal = stats.poisson.pmf(np.arange(n_max + 1), source.mean_photons)
        probs = functools.reduce(np.multiply.outer, [marginal] * modes)
        deficit = 1.0 - float(stats.poisson.cdf(n_max, source.mean_photons)) ** modes
        deficit = max(deficit, 0.0)
    else:
        raise ConfigError(f"unknown source {source!r}")
    logger.debug("expanded %s at n_max=%d, deficit=%.3g", source, n_max, deficit)
    return PhotonNumberDistribution(probs, deficit)


def thinning_kernel(t: float, n_max: int) -> np.ndarray:
    """K[m, n] = C(n, m) t^m (1 - t)^(n - m): probability that m of n photons survive"""
    if not 0.0 <= t <= 1.0:
        raise ConfigError(f"transmittance {t!r} is outside [0, 1]")
    n = np.arange(n_max + 1)
    m = n[:, None]
    lost = np.clip(n[None, :] - m, 0, None)
    return special.comb(n[None, :], m) * np.power(t, m) * np.power(1.0 - t, lost)


def apply_loss(dist: PhotonNumberDistribution, loss: LossNetwork) -> PhotonNumberDistribution:
    """Binomial thinning of every mode by its own transmittance"""
    if loss.mode_count != dist.mode_count:
        raise ConfigError(
            f"loss network has {loss.mode_count} modes, distribution has {dist.mode_count}"
        )
    probs = np.array(dist.probs)
    for axis, t in enumerate(loss.per_mode_t):
        if t == 1.0:
            continue
        kernel = thinning_kernel(t, dist.n_max)
        probs = np.moveaxis(np.tensordot(kernel, probs, axes=([1], [axis])), 0, axis)
    return PhotonNumberDistribution(probs, dist.deficit)


def _falling_factorial_weights(n_max: int, orders: Sequence[int]) -> np.ndarray:
    """Π_i FF(n_i, k_i) laid out like the probability table"""
    n = np.arange(n_max + 1)
    vectors = [special.perm(n, k) for k in orders]
    return functools.reduce(np.multiply.outer, vectors)


def _factorial_moment(dist: PhotonNumberDistribution, orders: Sequence[int], power: int = 1):
    weights = _falling_factorial_weights(dist.n_max, orders)
    return float(np.sum(dist.probs * weights**power))


def _check_observable(dist: PhotonNumberDistribution, obs: CorrelationObservable) -> None:
    if obs.mode_count != dist.mode_count:
        raise ConfigError(
            f"observable has {obs.mode_count} orders, distribution has {dist.mode_count} modes"
        )
    if obs.total_order > dist.n_max:
        raise ConfigError(
            f"total correlation order {obs.total_order} exceeds the truncation n_max={dist.n_max}"
        )


def correlation_mean(dist: PhotonNumberDistribution, obs: CorrelationObservable) -> float:
    """⟨O⟩ = Σ P(n) Π FF(n_i, k_i)"""
    _check_observable(dist, obs)
    return _factorial_moment(dist, obs.orders)


def correlation_moment(
    dist: PhotonNumberDistribution, obs: CorrelationObservable, power: int
) -> float:
    """⟨O^power⟩; O is diagonal so this is Σ P(n) [Π FF(n_i, k_i)]^power"""
    if power < 1:
        raise ConfigError(f"power must be >= 1, got {power}")
    _check_observable(dist, obs)
    return _factorial_moment(dist, obs.orders, power)


def normal_ordered_second_moment(
    dist: PhotonNumberDistribution, obs: CorrelationObservable
) -> float:
    """⟨O²⟩ from the expansion Σ_m Π C_{k_i, m_i} ⟨Π (a_i†)^(k_i + m_i) a_i^(k_i + m_i)⟩"""
    _check_observable(dist, obs)
    tables = [_coefficients(k) for k in obs.orders]
    total = 0.0
    for shifts in itertools.product(*(range(k + 1) for k in obs.orders)):
        weight = math.prod(table[m] for table, m in zip(tables, shifts))
        raised = [k + m for k, m in zip(obs.orders, shifts)]
        total += weight * _factorial_moment(dist, raised)
    return total


def correlation_second_moment(
    dist: PhotonNumberDistribution, obs: CorrelationObservable
) -> float:
    """⟨O²⟩, computed directly and checked against the normal-ordered expansion"""
    direct = correlation_moment(dist, obs, 2)
    expanded = normal_ordered_second_moment(dist, obs)
    if not math.isclose(direct, expanded, rel_tol=1e-9, abs_tol=1e-12):
        raise ArithmeticError(
            f"normal-ordered expansion {expanded!r} disagrees with direct value {direct!r}"
        )
    return direct


def normal_order_coefficients(k: int) -> Tuple[int, ...]:
    """C_{k, m}, m = 0..k, such that FF(n, k)² = Σ_m C_{k, m} FF(n, k + m) for all n >= 0"""
    if not 1 <= k <= MAX_NORMAL_ORDER:
        raise ConfigError(f"order k={k} is outside [1, {MAX_NORMAL_ORDER}]")
    return _coefficients(k)


@functools.lru_cache(maxsize=None)
def _coefficients(k: int) -> Tuple[int, ...]:
    if k == 0:
        return (1,)
    # FF(n, k + m) vanishes for n < k + m: at n = k..2k the system is lower triangular
    points = range(k, 2 * k + 1)
    matrix = sympy.Matrix([[sympy.ff(n, k + m) for m in range(k + 1)] for n in points])
    rhs = sympy.Matrix([sympy.ff(n, k) ** 2 for n in points])
    solution = matrix.LUsolve(rhs)
    if not all(c.is_integer for c in solution):
        raise ArithmeticError(f"non-integer normal-ordering coefficients for k={k}: {solution}")
    coefficients = tuple(int(c) for c in solution)
    for n in range(2 * k + 3):
        lhs = math.perm(n, k) ** 2
        rhs_value = sum(c * math.perm(n, k + m) for m, c in enumerate(coefficients))
        if lhs != rhs_value:
            raise ArithmeticError(f"coefficients {coefficients} fail the identity at n={n}")
    return coefficients


def mean_photon_number(dist: PhotonNumberDistribution, modes: Iterable[int]) -> float:
    """Σ over `modes` of the mean photon number of each mode"""
    chosen = sorted(set(modes))
    if not chosen:
        raise ConfigError("at least one mode is needed")
    if any(not 0 <= j < dist.mode_count for j in chosen):
        raise ConfigError(f"modes {chosen} out of range for {dist.mode_count} modes")
    n = np.arange(dist.n_max + 1)
    return float(sum(np.dot(dist.marginal(j), n) for j in chosen))
