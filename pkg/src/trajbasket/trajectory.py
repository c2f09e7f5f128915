"""Response-state trajectories and basket datasets.

A trajectory is the ordered list of tumor-response assessments for one
patient.  The first element is the baseline assessment.  Baskets are
ingested from a flat table with one row per assessment.
"""
from __future__ import annotations

import csv
import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

__all__ = [
    "ResponseState",
    "N_STATES",
    "Trajectory",
    "BasketData",
    "IngestError",
    "ingest_trial_data",
    "read_trial_csv",
    "write_trial_csv",
    "orr_estimate",
    "CSV_HEADER",
]


class ResponseState(enum.IntEnum):
    CR = 0
    PR = 1
    SD = 2
    PD = 3

    @classmethod
    def parse(cls, value) -> "ResponseState":
        if isinstance(value, ResponseState):
            return value
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            return cls(int(value))
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown response state {value!r}") from None


N_STATES = len(ResponseState)
RESPONDER_STATES = (ResponseState.CR, ResponseState.PR)
CSV_HEADER = ("basket_id", "patient_id", "assessment_index", "state")


class IngestError(ValueError):
    """Raised when trial data rows cannot be turned into baskets."""


@dataclass(frozen=True)
class Trajectory:
    patient_id: Hashable
    states: tuple[ResponseState, ...]

    def __post_init__(self):
        states = tuple(ResponseState.parse(s) for s in self.states)
        if len(states) < 1:
            raise ValueError(f"patient {self.patient_id!r}: trajectory needs at least one assessment")
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def responded(self) -> bool:
        return any(s <= ResponseState.PR for s in self.states)


@dataclass(frozen=True)
class BasketData:
    basket_id: Hashable
    patients: tuple[Trajectory, ...]
    _arrays: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        patients = tuple(self.patients)
        if not patients:
            raise ValueError(f"basket {self.basket_id!r} has no patients")
        ids = [p.patient_id for p in patients]
        if len(set(ids)) != len(ids):
            raise ValueError(f"basket {self.basket_id!r} has duplicate patient ids")
        object.__setattr__(self, "patients", patients)

    @property
    def n(self) -> int:
        return len(self.patients)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded state matrix (``-1`` past each length) and per-patient lengths."""
        if self._arrays is None:
            lengths = np.array([len(p) for p in self.patients], dtype=np.int64)
            states = np.full((self.n, int(lengths.max())), -1, dtype=np.int8)
            for i, p in enumerate(self.patients):
                states[i, : len(p)] = [int(s) for s in p.states]
            states.flags.writeable = False
            lengths.flags.writeable = False
            object.__setattr__(self, "_arrays", (states, lengths))
        return self._arrays

    @classmethod
    def from_arrays(cls, basket_id, states: np.ndarray, lengths: np.ndarray,
                    patient_ids: Sequence | None = None) -> "BasketData":
        if patient_ids is None:
            patient_ids = range(1, len(lengths) + 1)
        patients = tuple(
            Trajectory(pid, tuple(ResponseState(int(s)) for s in states[i, :t]))
            for i, (pid, t) in enumerate(zip(patient_ids, lengths))
        )
        return cls(basket_id, patients)


def orr_estimate(basket: BasketData) -> float:
    """Fraction of patients that were CR or PR at any assessment, baseline included."""
    states, lengths = basket.as_arrays()
    return _responders(states, lengths) / basket.n


def _responders(states: np.ndarray, lengths: np.ndarray) -> int:
    # padding is -1, so it never counts as CR(0)/PR(1)
    hit = (states >= 0) & (states <= ResponseState.PR)
    return int(hit.any(axis=1).sum())


def ingest_trial_data(rows: Iterable) -> list[BasketData]:
    """Group assessment rows into baskets.

    Each row is ``(basket_id, patient_id, assessment_index, state)`` or a
    mapping with those keys.  Assessment indices are 1-based and must form
    a contiguous run per patient.  Baskets come back in order of first
    appearance.
    """
    grouped: dict = defaultdict(dict)
    seen_index: dict = {}
    for rowno, row in enumerate(rows, start=1):
        if isinstance(row, dict):
            try:
                row = tuple(row[k] for k in CSV_HEADER)
            except KeyError as exc:
                raise IngestError(f"row {rowno}: missing column {exc.args[0]!r}") from None
        try:
            basket_id, patient_id, index, state = row
        except (TypeError, ValueError):
            raise IngestError(f"row {rowno}: expected 4 fields, got {row!r}") from None
        try:
            index = int(index)
        except (TypeError, ValueError):
            raise IngestError(f"row {rowno}: assessment_index {index!r} is not an integer") from None
        try:
            state = ResponseState.parse(state)
        except ValueError:
            raise IngestError(f"row {rowno}: unknown state {state!r}") from None
        per_patient = grouped[basket_id].setdefault(patient_id, {})
        if index in per_patient:
            raise IngestError(
                f"patient {patient_id!r} in basket {basket_id!r}: duplicate assessment_index {index} "
                f"(rows {seen_index[basket_id, patient_id, index]} and {rowno})"
            )
        per_patient[index] = state
        seen_index[basket_id, patient_id, index] = rowno

    baskets = []
    for basket_id, patients in grouped.items():
        trajectories = []
        for patient_id, assessments in patients.items():
            indices = sorted(assessments)
            if indices != list(range(1, len(indices) + 1)):
                missing = sorted(set(range(1, indices[-1] + 1)) - set(indices))
                raise IngestError(
                    f"patient {patient_id!r} in basket {basket_id!r}: assessment_index gap "
                    f"(missing {missing})"
                )
            trajectories.append(Trajectory(patient_id, tuple(assessments[i] for i in indices)))
        baskets.append(BasketData(basket_id, tuple(trajectories)))
    return baskets


def read_trial_csv(path) -> list[BasketData]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise IngestError(f"{path}: missing column(s) {', '.join(missing)}")
        reader.fieldnames = header
        return ingest_trial_data(reader)


def write_trial_csv(baskets: Iterable[BasketData], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for basket in baskets:
            for traj in basket.patients:
                for i, s in enumerate(traj.states, start=1):
                    writer.writerow((basket.basket_id, traj.patient_id, i, s.name))
