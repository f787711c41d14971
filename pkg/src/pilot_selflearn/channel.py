"""Channel draws, uplink pilot synthesis and de-spreading for one AP."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .pilots import PilotAssignment, PilotBook


class ChannelModel(str, enum.Enum):
    LOS = "los"
    RAYLEIGH = "rayleigh"


@dataclass(frozen=True)
class ChannelRealization:
    beta: np.ndarray  # (2,) linear path losses
    gains: np.ndarray  # (2, I) complex, row k-1 is UE k
    model: ChannelModel

    @property
    def block_count(self) -> int:
        return self.gains.shape[1]


@dataclass(frozen=True)
class DespreadObservation:
    values: np.ndarray  # (I,) complex y_iq
    rho_p: float = 1.0
    tau_p: int = 1

    @property
    def squared_magnitudes(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def block_count(self) -> int:
        return self.values.size

    @property
    def noise_var(self) -> float:
        """Noise variance left after dividing the observation by sqrt(rho_p)."""
        return 1.0 / (self.rho_p * self.tau_p)

    def normalized_power(self) -> np.ndarray:
        """|y|^2 / rho_p, i.e. |g1 + e^{j phi} g2 + noise|^2 with noise variance ``noise_var``."""
        return self.squared_magnitudes / self.rho_p

    def concat(self, other: "DespreadObservation") -> "DespreadObservation":
        if (self.rho_p, self.tau_p) != (other.rho_p, other.tau_p):
            raise ValueError("cannot join observations taken with different rho_p/tau_p")
        return DespreadObservation(np.concatenate([self.values, other.values]), self.rho_p, self.tau_p)

    @classmethod
    def from_values(cls, values, rho_p: float = 1.0, tau_p: int = 1) -> "DespreadObservation":
        return cls(np.atleast_1d(np.asarray(values, dtype=complex)), float(rho_p), int(tau_p))


def generate_channel(
    beta1: float,
    beta2: float,
    block_count: int,
    model: ChannelModel | str = ChannelModel.LOS,
    seed=None,
    *,
    los_phase: str = "constant",
    max_drift: float = np.pi / 16,
) -> ChannelRealization:
    """Draw the two UEs' gains over ``block_count`` coherence blocks.

    LoS gains have magnitude ``sqrt(beta_k)`` and a uniform phase drawn once
    per call. With ``los_phase="linear"`` that phase also advances by a
    per-UE slope drawn uniformly from ``[-max_drift, max_drift]`` per block.
    Rayleigh gains are i.i.d. CN(0, beta_k).
    """
    model = ChannelModel(model)
    beta = np.array([beta1, beta2], dtype=float)
    if np.any(~np.isfinite(beta)) or np.any(beta < 0):
        raise ValueError(f"path losses must be finite and nonnegative, got {beta.tolist()}")
    if int(block_count) != block_count or block_count < 1:
        raise ValueError(f"block_count must be a positive integer, got {block_count!r}")
    rng = np.random.default_rng(seed)
    amp = np.sqrt(beta)[:, None]
    if model is ChannelModel.LOS:
        theta = rng.uniform(-np.pi, np.pi, size=(2, 1))
        if los_phase == "constant":
            phase = np.broadcast_to(theta, (2, block_count))
        elif los_phase == "linear":
            slope = rng.uniform(-max_drift, max_drift, size=(2, 1))
            phase = theta + slope * np.arange(block_count)
        else:
            raise ValueError(f"los_phase must be 'constant' or 'linear', got {los_phase!r}")
        gains = amp * np.exp(1j * phase)
    else:
        z = rng.standard_normal((2, block_count)) + 1j * rng.standard_normal((2, block_count))
        gains = amp * z / np.sqrt(2)
    return ChannelRealization(beta=beta, gains=gains, model=model)


def received_pilot_signal(
    channel: ChannelRealization,
    book: PilotBook,
    assignments: Sequence[PilotAssignment],
    rho_p: float,
    seed=None,
    *,
    noise: bool = True,
) -> np.ndarray:
    """Received pilot vectors, shape ``(I, tau_p)``; row i is block i.

    ``assignments[k]`` describes UE k+1. Noise entries are CN(0, 1).
    """
    if rho_p <= 0:
        raise ValueError("rho_p must be positive")
    if len(assignments) != 2:
        raise ValueError("exactly two pilot assignments are required")
    n_blocks = channel.block_count
    y = np.zeros((n_blocks, book.tau_p), dtype=complex)
    for k, assignment in enumerate(assignments):
        if assignment.schedule.block_count != n_blocks:
            raise ValueError(
                f"UE {assignment.ue_index} schedule covers {assignment.schedule.block_count} "
                f"blocks but the channel has {n_blocks}"
            )
        pilot = book.sequence(assignment.pilot_index)
        coeff = channel.gains[k] * assignment.schedule.rotations()
        y += np.outer(coeff, pilot)
    y *= np.sqrt(rho_p * book.tau_p)
    if noise:
        rng = np.random.default_rng(seed)
        shape = (n_blocks, book.tau_p)
        y += (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return y


def despread(
    received: np.ndarray, book: PilotBook, pilot_index: int, rho_p: float = 1.0
) -> DespreadObservation:
    """Project each block onto ``phi_q`` and scale by ``1/sqrt(tau_p)``."""
    received = np.atleast_2d(received)
    pilot = book.sequence(pilot_index)
    if received.shape[1] != book.tau_p:
        raise ValueError(f"received vectors have length {received.shape[1]}, expected {book.tau_p}")
    values = received @ pilot.conj() / np.sqrt(book.tau_p)
    return DespreadObservation(values, float(rho_p), book.tau_p)


def trace_csv(observations: Iterable[DespreadObservation]) -> str:
    """Per-drop trace rows ``drop,block,re(y),im(y),|y|2`` (both indices 0-based)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["drop", "block", "re(y)", "im(y)", "|y|2"])
    for d, obs in enumerate(observations):
        for i, (v, p) in enumerate(zip(obs.values, obs.squared_magnitudes)):
            writer.writerow([d, i, repr(float(v.real)), repr(float(v.imag)), repr(float(p))])
    return buf.getvalue()
