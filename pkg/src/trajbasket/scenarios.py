"""Synthetic basket trials generated from known Markov response models."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .rng import child_keys, derive_key
from .trajectory import N_STATES, BasketData

__all__ = [
    "BasketTruth",
    "ScenarioSpec",
    "LENGTH_PROBS",
    "builtin_scenario",
    "load_scenario",
    "scenario_from_dict",
    "simulate_basket",
    "simulate_basket_arrays",
    "true_orr",
    "OrrEstimate",
]

LENGTH_PROBS = (0.03, 0.05, 0.25, 0.25, 0.20, 0.10, 0.05, 0.03, 0.02, 0.02)

_PI_A = (0.05, 0.10, 0.35, 0.50)
_P_A = (
    (0.60, 0.00, 0.00, 0.40),
    (0.10, 0.40, 0.10, 0.40),
    (0.05, 0.20, 0.40, 0.35),
    (0.00, 0.05, 0.35, 0.60),
)
_PI_B = (0.075, 0.150, 0.425, 0.350)
_P_B = (
    (0.675, 0.000, 0.000, 0.325),
    (0.150, 0.475, 0.100, 0.275),
    (0.075, 0.250, 0.400, 0.275),
    (0.025, 0.100, 0.325, 0.550),
)
_PI_C = (0.10, 0.20, 0.50, 0.20)
_P_C = (
    (0.75, 0.00, 0.00, 0.25),
    (0.20, 0.55, 0.10, 0.15),
    (0.10, 0.30, 0.40, 0.20),
    (0.05, 0.15, 0.30, 0.50),
)

# (truth per basket, true cluster labels)
_BUILTIN = {
    1: ((("A", _PI_A, _P_A),) * 5, (0, 0, 0, 0, 0)),
    2: ((("A", _PI_A, _P_A),) * 3 + (("B", _PI_B, _P_B),) * 2, (0, 0, 0, 1, 1)),
    3: ((("A", _PI_A, _P_A),) * 2 + (("B", _PI_B, _P_B),) * 2 + (("C", _PI_C, _P_C),),
        (0, 0, 1, 1, 2)),
}


def _stochastic(a, what: str, shape) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != shape:
        raise ValueError(f"{what}: expected shape {shape}, got {a.shape}")
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError(f"{what}: probabilities must lie in [0, 1]")
    if not np.allclose(a.sum(axis=-1), 1.0, rtol=0, atol=1e-9):
        raise ValueError(f"{what}: probabilities must sum to 1")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class BasketTruth:
    pi0: np.ndarray
    P: np.ndarray
    length_probs: np.ndarray = field(default_factory=lambda: np.array(LENGTH_PROBS))
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pi0", _stochastic(self.pi0, "pi0", (N_STATES,)))
        object.__setattr__(self, "P", _stochastic(self.P, "P", (N_STATES, N_STATES)))
        lp = np.asarray(self.length_probs, dtype=float)
        object.__setattr__(self, "length_probs", _stochastic(lp, "length_probs", lp.shape))

    def tables(self):
        """Cumulative tables consumed by the simulation kernels."""
        return (
            np.cumsum(self.length_probs),
            np.cumsum(self.pi0),
            np.ascontiguousarray(np.cumsum(self.P, axis=1)),
        )


@dataclass(frozen=True)
class ScenarioSpec:
    baskets: tuple[BasketTruth, ...]
    n_per_basket: tuple[int, ...]
    true_partition: tuple[int, ...] | None = None
    # mixed into stream keys so different scenarios never share streams
    key: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "baskets", tuple(self.baskets))
        n = tuple(int(v) for v in self.n_per_basket)
        if len(n) != len(self.baskets):
            raise ValueError("n_per_basket must give one size per basket")
        if any(v < 1 for v in n):
            raise ValueError("every basket needs n >= 1")
        object.__setattr__(self, "n_per_basket", n)
        if self.true_partition is not None:
            tp = tuple(int(v) for v in self.true_partition)
            if len(tp) != len(self.baskets):
                raise ValueError("true_partition must label every basket")
            object.__setattr__(self, "true_partition", tp)

    @property
    def J(self) -> int:
        return len(self.baskets)

    def with_n(self, n: int | Sequence[int]) -> "ScenarioSpec":
        if isinstance(n, (int, np.integer)):
            n = (int(n),) * self.J
        return ScenarioSpec(self.baskets, tuple(n), self.true_partition, self.key, self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "key": self.key,
            "baskets": [{"pi0": b.pi0.tolist(), "P": b.P.tolist()} for b in self.baskets],
            "n_per_basket": list(self.n_per_basket),
            "length_probs": self.baskets[0].length_probs.tolist(),
            "true_partition": list(self.true_partition) if self.true_partition else None,
        }


def builtin_scenario(scenario_id: int, n_per_basket: int = 20) -> ScenarioSpec:
    try:
        truths, labels = _BUILTIN[int(scenario_id)]
    except (KeyError, ValueError, TypeError):
        raise ValueError(f"unknown scenario {scenario_id!r} (built-ins are 1, 2, 3)") from None
    baskets = tuple(BasketTruth(pi0, P, label=lab) for lab, pi0, P in truths)
    return ScenarioSpec(baskets, (int(n_per_basket),) * 5, labels,
                        key=int(scenario_id), name=f"scenario{scenario_id}")


def scenario_from_dict(doc: dict, n_per_basket=None) -> ScenarioSpec:
    """Build a scenario from the JSON schema.

    ``{"baskets": [{"pi0": [4], "P": [[4] x 4]}, ...], "n_per_basket": int | [int],
    "length_probs": [...], "true_partition": [...]}``; a basket may carry its
    own ``length_probs``.
    """
    try:
        raw = doc["baskets"]
        shared_lp = doc.get("length_probs", LENGTH_PROBS)
        baskets = tuple(
            BasketTruth(b["pi0"], b["P"], b.get("length_probs", shared_lp), b.get("label", ""))
            for b in raw
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed scenario: {exc}") from None
    n = n_per_basket if n_per_basket is not None else doc.get("n_per_basket", 20)
    if isinstance(n, (int, np.integer)):
        n = (int(n),) * len(baskets)
    return ScenarioSpec(baskets, tuple(n), doc.get("true_partition"),
                        key=int(doc.get("key", 0)), name=str(doc.get("name", "")))


def load_scenario(path, n_per_basket=None) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh), n_per_basket)


def _patient_keys(seed: int, path: Sequence[int], n: int) -> np.ndarray:
    return child_keys(derive_key(seed, *path), np.arange(n, dtype=np.uint64))


def simulate_basket_arrays(truth: BasketTruth, n: int, seed: int, path: Sequence[int]):
    """``(states, lengths)`` for ``n`` patients on the stream ``(seed, *path, patient)``."""
    return kernels.simulate_patients(_patient_keys(seed, path, n), *truth.tables())


def simulate_basket(truth: BasketTruth, n: int, seed: int, path: Sequence[int] = (),
                    basket_id="B1") -> BasketData:
    states, lengths = simulate_basket_arrays(truth, n, seed, path)
    return BasketData.from_arrays(basket_id, states, lengths)


@dataclass(frozen=True)
class OrrEstimate:
    value: float
    se: float
    reps: int


def true_orr(truth: BasketTruth, reps: int, seed: int = 0, path: Sequence[int] = (),
             chunk: int = 1 << 20) -> OrrEstimate:
    """Monte Carlo probability that a patient is ever CR or PR."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    base = derive_key(seed, *path)
    tables = truth.tables()
    hits = 0
    for start in range(0, reps, chunk):
        idx = np.arange(start, min(start + chunk, reps), dtype=np.uint64)
        hits += int(kernels.count_responders(child_keys(base, idx), *tables))
    p = hits / reps
    return OrrEstimate(p, math.sqrt(p * (1 - p) / reps), reps)
