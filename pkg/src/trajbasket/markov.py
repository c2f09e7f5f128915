"""Per-basket Markov summaries of response trajectories.

For each basket we estimate the baseline state distribution, the one-step
transition matrix, the distribution of assessment counts, and the mixture
of ``pi0 @ P**(t-1)`` over those counts (the weighted final-state
distribution).  States with no outgoing transitions get a uniform row.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Mapping

import numpy as np

from .trajectory import N_STATES, BasketData, _responders

__all__ = [
    "BasketModel",
    "count_transitions",
    "estimate_transition_matrix",
    "estimate_initial_distribution",
    "estimate_schedule_weights",
    "weighted_final_state",
    "fit_basket",
    "fit_basket_arrays",
]

ROW_TOL = 1e-12


def _check_stochastic(p: np.ndarray, what: str) -> None:
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError(f"{what}: entries must lie in [0, 1]")
    if not np.allclose(p.sum(axis=-1), 1.0, rtol=0, atol=ROW_TOL):
        raise ValueError(f"{what}: rows must sum to 1")


def _count_arrays(states: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    if states.shape[1] < 2:
        return np.zeros((N_STATES, N_STATES), dtype=np.int64)
    src = states[:, :-1].astype(np.int64)
    dst = states[:, 1:].astype(np.int64)
    ok = (src >= 0) & (dst >= 0)
    flat = np.bincount(src[ok] * N_STATES + dst[ok], minlength=N_STATES * N_STATES)
    return flat.reshape(N_STATES, N_STATES)


def count_transitions(basket: BasketData) -> np.ndarray:
    """4x4 matrix of adjacent-pair counts summed over patients."""
    return _count_arrays(*basket.as_arrays())


def estimate_transition_matrix(counts) -> np.ndarray:
    counts = np.asarray(counts)
    if counts.shape != (N_STATES, N_STATES):
        raise ValueError(f"counts must be {N_STATES}x{N_STATES}")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    rowsum = counts.sum(axis=1, keepdims=True)
    p = np.full((N_STATES, N_STATES), 1.0 / N_STATES)
    seen = rowsum[:, 0] > 0
    p[seen] = counts[seen] / rowsum[seen]
    return p


def _initial_arrays(states: np.ndarray) -> np.ndarray:
    return np.bincount(states[:, 0].astype(np.int64), minlength=N_STATES) / states.shape[0]


def estimate_initial_distribution(basket: BasketData) -> np.ndarray:
    states, _ = basket.as_arrays()
    return _initial_arrays(states)


def _weights_arrays(lengths: np.ndarray) -> dict[int, float]:
    values, freq = np.unique(lengths, return_counts=True)
    total = freq.sum()
    return {int(t): float(c / total) for t, c in zip(values, freq)}


def estimate_schedule_weights(basket: BasketData) -> dict[int, float]:
    """Relative frequency of each observed number of assessments."""
    return _weights_arrays(basket.as_arrays()[1])


def weighted_final_state(pi0, P, weights: Mapping[int, float]) -> np.ndarray:
    """``sum_t w_t * pi0 @ P^(t-1)``, with ``P^0`` the identity.

    Powers are accumulated by repeated multiplication; each step is
    renormalised so rounding does not drift the distribution off the
    simplex.
    """
    pi0 = np.asarray(pi0, dtype=float)
    P = np.asarray(P, dtype=float)
    _check_stochastic(pi0, "pi0")
    _check_stochastic(P, "transition matrix")
    if not weights:
        raise ValueError("weights must be non-empty")
    if any(int(t) < 1 for t in weights):
        raise ValueError("assessment counts must be >= 1")
    if abs(sum(weights.values()) - 1.0) > ROW_TOL:
        raise ValueError("weights must sum to 1")

    out = np.zeros(N_STATES)
    dist = pi0.copy()
    step = 1
    for t in sorted(int(t) for t in weights):
        while step < t:
            dist = dist @ P
            dist /= dist.sum()
            step += 1
        out += weights[t] * dist
    return out / out.sum()


@dataclass(frozen=True, eq=False)
class BasketModel:
    basket_id: Hashable
    pi0_hat: np.ndarray
    transition: np.ndarray
    weights: dict[int, float]
    final_state: np.ndarray
    orr_hat: float
    n: int
    counts: np.ndarray

    @property
    def responders(self) -> int:
        return int(round(self.orr_hat * self.n))

    def to_dict(self) -> dict:
        return {
            "basket_id": self.basket_id,
            "n": self.n,
            "orr_hat": self.orr_hat,
            "pi0_hat": self.pi0_hat.tolist(),
            "transition": self.transition.tolist(),
            "counts": self.counts.tolist(),
            "weights": {str(t): w for t, w in sorted(self.weights.items())},
            "final_state": self.final_state.tolist(),
        }


def fit_basket_arrays(basket_id, states: np.ndarray, lengths: np.ndarray) -> BasketModel:
    """`fit_basket` on the padded-array form used by the simulators."""
    counts = _count_arrays(states, lengths)
    P = estimate_transition_matrix(counts)
    pi0 = _initial_arrays(states)
    w = _weights_arrays(lengths)
    n = int(len(lengths))
    return BasketModel(
        basket_id=basket_id,
        pi0_hat=pi0,
        transition=P,
        weights=w,
        final_state=weighted_final_state(pi0, P, w),
        orr_hat=_responders(states, lengths) / n,
        n=n,
        counts=counts,
    )


def fit_basket(basket: BasketData) -> BasketModel:
    return fit_basket_arrays(basket.basket_id, *basket.as_arrays())
