"""Pilot sequences and per-block phase-rotation schedules.

UE 1 always sends its pilot unrotated. UE 2 multiplies its pilot by
``exp(1j * phases[i])`` in coherence block ``i`` according to one of three
schedules: structured (equally spaced on the circle), pseudo-random
(i.i.d. uniform angles) or canonical (no rotation).
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np


class Scheme(str, enum.Enum):
    STRUCTURED = "structured"
    PSEUDO_RANDOM = "pseudorandom"
    CANONICAL = "canonical"

    @classmethod
    def parse(cls, value: "str | Scheme") -> "Scheme":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(
            f"unknown phase scheme {value!r}; expected one of "
            + ", ".join(m.value for m in cls)
        )


@dataclass(frozen=True)
class PilotBook:
    """``tau_p`` orthonormal pilot sequences stored as the columns of a matrix."""

    tau_p: int
    sequences: np.ndarray  # (tau_p, tau_p), column q is phi_q

    def __post_init__(self):
        self.sequences.setflags(write=False)

    def sequence(self, q: int) -> np.ndarray:
        self.check_index(q)
        return self.sequences[:, q]

    def check_index(self, q: int) -> None:
        if not 0 <= q < self.tau_p:
            raise IndexError(f"pilot index {q} outside 0..{self.tau_p - 1}")

    def gram(self) -> np.ndarray:
        return self.sequences.conj().T @ self.sequences


@dataclass(frozen=True)
class PhaseSchedule:
    scheme: Scheme
    phases: np.ndarray  # radians, one per coherence block

    def __post_init__(self):
        self.phases.setflags(write=False)

    @property
    def block_count(self) -> int:
        return self.phases.size

    def rotations(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    def to_csv(self) -> str:
        """Rows ``block_index,phase_radians`` with 1-based block indices."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["block_index", "phase_radians"])
        for i, phi in enumerate(self.phases, start=1):
            writer.writerow([i, repr(float(phi))])
        return buf.getvalue()


@dataclass(frozen=True)
class PilotAssignment:
    ue_index: int  # 1 or 2
    pilot_index: int  # 0-based column of the pilot book
    schedule: PhaseSchedule

    def __post_init__(self):
        if self.ue_index not in (1, 2):
            raise ValueError("ue_index must be 1 or 2")
        if self.ue_index == 1 and self.schedule.scheme is not Scheme.CANONICAL:
            raise ValueError("UE 1 transmits its pilot without phase rotation")


def _check_blocks(block_count: int) -> None:
    if int(block_count) != block_count or block_count < 1:
        raise ValueError(f"block_count must be a positive integer, got {block_count!r}")


def build_pilot_book(tau_p: int) -> PilotBook:
    """Columns of the unitary ``tau_p``-point DFT matrix."""
    if int(tau_p) != tau_p or tau_p < 1:
        raise ValueError(f"tau_p must be a positive integer, got {tau_p!r}")
    n = np.arange(tau_p)
    dft = np.exp(-2j * np.pi * np.outer(n, n) / tau_p) / np.sqrt(tau_p)
    return PilotBook(tau_p=int(tau_p), sequences=dft)


def structured_phases(block_count: int) -> PhaseSchedule:
    _check_blocks(block_count)
    i = np.arange(1, block_count + 1)
    phases = (2 * i - 1) * np.pi / block_count - np.pi
    return PhaseSchedule(Scheme.STRUCTURED, phases)


def random_phases(block_count: int, seed) -> PhaseSchedule:
    """I.i.d. uniform angles on [-pi, pi]; ``seed`` is anything ``default_rng`` takes."""
    _check_blocks(block_count)
    rng = np.random.default_rng(seed)
    return PhaseSchedule(Scheme.PSEUDO_RANDOM, rng.uniform(-np.pi, np.pi, block_count))


def canonical_phases(block_count: int) -> PhaseSchedule:
    _check_blocks(block_count)
    return PhaseSchedule(Scheme.CANONICAL, np.zeros(block_count))


def make_schedule(scheme, block_count: int, seed=None) -> PhaseSchedule:
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.STRUCTURED:
        return structured_phases(block_count)
    if scheme is Scheme.PSEUDO_RANDOM:
        return random_phases(block_count, seed)
    return canonical_phases(block_count)


def co_pilot_assignments(schedule2: PhaseSchedule, pilot_index: int = 0):
    """Both UEs on the same pilot; UE 2 rotates it per ``schedule2``."""
    return (
        PilotAssignment(1, pilot_index, canonical_phases(schedule2.block_count)),
        PilotAssignment(2, pilot_index, schedule2),
    )
