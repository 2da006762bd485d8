"""Brute-force operator oracles on a truncated Fock space

These build the actual bosonic operators as matrices and are slow on purpose: they are the
independent reference that the probability-table engine in `fock` is checked against.
"""

import functools
from typing import List, Sequence

import numpy as np
from scipy.linalg import expm

from .fock import PhotonNumberDistribution
from .types import CorrelationObservable, LossNetwork


def annihilation(cutoff: int) -> np.ndarray:
    """Truncated annihilation operator on span{|0⟩, ..., |cutoff - 1⟩}"""
    return np.diag(np.sqrt(np.arange(1, cutoff)), k=1)


def beam_splitter_unitary(t: float, cutoff: int) -> np.ndarray:
    """exp(θ (a† c - a c†)) with cos²θ = t, on mode ⊗ ancilla

    The generator conserves total photon number, so every block with at most `cutoff - 1`
    photons is represented exactly despite the truncation.
    """
    theta = np.arccos(np.sqrt(t))
    a = annihilation(cutoff)
    eye = np.eye(cutoff)
    mode = np.kron(a, eye)
    ancilla = np.kron(eye, a)
    generator = mode.T @ ancilla - mode @ ancilla.T
    return expm(theta * generator)


def beam_splitter_transitions(t: float, n_max: int) -> np.ndarray:
    """T[m, n] = Σ_j |⟨m, j| BS |n, 0⟩|²: the mode marginal after tracing out the ancilla"""
    cutoff = n_max + 1
    unitary = beam_splitter_unitary(t, cutoff)
    transitions = np.zeros((cutoff, cutoff))
    for n in range(cutoff):
        column = unitary[:, n * cutoff]  # input |n, 0⟩
        amplitudes = column.reshape(cutoff, cutoff)  # [m, j]
        transitions[:, n] = np.sum(np.abs(amplitudes) ** 2, axis=1)
    return transitions


def apply_loss_by_unitary(
    dist: PhotonNumberDistribution, loss: LossNetwork
) -> PhotonNumberDistribution:
    """Loss by coupling each mode to vacuum through a beam splitter and tracing the ancilla"""
    probs = np.array(dist.probs)
    for axis, t in enumerate(loss.per_mode_t):
        transitions = beam_splitter_transitions(t, dist.n_max)
        probs = np.moveaxis(np.tensordot(transitions, probs, axes=([1], [axis])), 0, axis)
    probs = np.clip(probs, 0.0, None)
    return PhotonNumberDistribution(probs, dist.deficit)


def correlation_operator(orders: Sequence[int], cutoff: int) -> np.ndarray:
    """O = Π_i (a_i†)^k_i a_i^k_i as a full matrix on the multi-mode truncated space"""
    a = annihilation(cutoff)
    factors: List[np.ndarray] = []
    for k in orders:
        lowered = np.linalg.matrix_power(a, k)
        factors.append(lowered.T @ lowered)
    return functools.reduce(np.kron, factors)


def density_matrix(dist: PhotonNumberDistribution) -> np.ndarray:
    return np.diag(dist.probs.reshape(-1))


def operator_expectation(
    dist: PhotonNumberDistribution, obs: CorrelationObservable, power: int = 1
) -> float:
    """Tr(ρ O^power) with O built from ladder-operator matrices"""
    operator = correlation_operator(obs.orders, dist.n_max + 1)
    return float(np.trace(density_matrix(dist) @ np.linalg.matrix_power(operator, power)))
