"""Path-loss ML grid search, plug-in MMSE channel estimates and de-rotation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import DespreadObservation
from .likelihood import loglik_surface
from .pilots import PhaseSchedule


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SearchGrid:
    """Candidate large-scale SNRs ``rho_p * beta`` in dB, shared by both axes."""

    beta_values_db: np.ndarray
    refine_step_db: float = 0.1
    refine_half_width_db: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.beta_values_db, dtype=float)
        if v.size == 0:
            raise ValueError("search grid is empty")
        if v.size > 1 and np.any(np.diff(v) <= 0):
            raise ValueError("search grid must be strictly increasing")
        object.__setattr__(self, "beta_values_db", v)

    @classmethod
    def uniform(cls, lo_db=-20.0, hi_db=40.0, step_db=1.0, **kw) -> "SearchGrid":
        n = int(round((hi_db - lo_db) / step_db)) + 1
        return cls(np.round(lo_db + step_db * np.arange(n), 10), **kw)

    def refine_axis(self, center_db: float) -> np.ndarray:
        k = int(round(self.refine_half_width_db / self.refine_step_db))
        axis = np.round(center_db + self.refine_step_db * np.arange(-k, k + 1), 10)
        lo, hi = self.beta_values_db[0], self.beta_values_db[-1]
        return axis[(axis >= lo - 1e-9) & (axis <= hi + 1e-9)]


def default_grid() -> SearchGrid:
    return SearchGrid.uniform(-20.0, 40.0, 1.0)


@dataclass(frozen=True)
class LikelihoodSurface:
    beta1_db: np.ndarray
    beta2_db: np.ndarray
    loglik: np.ndarray  # (len(beta1_db), len(beta2_db))

    def argmax(self) -> tuple[int, int]:
        # np.argmax returns the first maximum in row-major order, i.e. the
        # lexicographically smallest (beta1, beta2) among ties
        flat = int(np.argmax(self.loglik))
        return np.unravel_index(flat, self.loglik.shape)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["beta1_db", "beta2_db", "loglik"])
        for i, x in enumerate(self.beta1_db):
            for j, y in enumerate(self.beta2_db):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(self.loglik[i, j]))])
        return buf.getvalue()


@dataclass(frozen=True)
class PathLossEstimate:
    beta1_hat: float
    beta2_hat: float
    loglik: float
    snr1_db: float  # grid coordinates of the estimate, rho_p * beta in dB
    snr2_db: float


def likelihood_surface(
    observations: DespreadObservation,
    beta1_db,
    beta2_db,
    quad_nodes: int = 64,
    *,
    symmetric: bool = True,
) -> LikelihoodSurface:
    """Evaluate the log-likelihood on a grid given in ``rho_p * beta`` dB."""
    b1_db = np.asarray(beta1_db, dtype=float)
    b2_db = np.asarray(beta2_db, dtype=float)
    rho = observations.rho_p
    ll = loglik_surface(observations, db2lin(b1_db) / rho, db2lin(b2_db) / rho, quad_nodes, symmetric=symmetric)
    return LikelihoodSurface(b1_db, b2_db, ll)


def ml_grid_search(
    observations: DespreadObservation,
    grid: SearchGrid | None = None,
    quad_nodes: int = 64,
    *,
    refine: bool = True,
    symmetric: bool = True,
) -> PathLossEstimate:
    """Two-stage argmax of the summed log-likelihood.

    A coarse pass over ``grid`` is followed, if ``refine``, by a pass on a
    ``refine_step_db`` lattice within ``refine_half_width_db`` of the coarse
    winner (clipped to the grid's range). Ties go to the lexicographically
    smallest ``(beta1, beta2)``.

    The squared-magnitude likelihood cannot tell the two UEs apart, so with
    ``symmetric=True`` the surface is exactly swap-symmetric and the tie rule
    hands the smaller estimate to UE 1.
    """
    if grid is None:
        grid = default_grid()
    if observations.block_count < 1:
        raise ValueError("need at least one observation")
    axis = grid.beta_values_db
    surf = likelihood_surface(observations, axis, axis, quad_nodes, symmetric=symmetric)
    i, j = surf.argmax()
    if refine:
        surf = likelihood_surface(
            observations, grid.refine_axis(axis[i]), grid.refine_axis(axis[j]), quad_nodes, symmetric=symmetric
        )
        i, j = surf.argmax()
    s1, s2 = float(surf.beta1_db[i]), float(surf.beta2_db[j])
    rho = observations.rho_p
    return PathLossEstimate(
        beta1_hat=float(db2lin(s1)) / rho,
        beta2_hat=float(db2lin(s2)) / rho,
        loglik=float(surf.loglik[i, j]),
        snr1_db=s1,
        snr2_db=s2,
    )


def ml_grid_search_many(observations: Sequence[DespreadObservation], grid=None, quad_nodes=64, **kw):
    """One independent search per (AP, pilot) observation set."""
    return [ml_grid_search(obs, grid, quad_nodes, **kw) for obs in observations]


# --- channel estimates ------------------------------------------------------


@dataclass(frozen=True)
class ChannelEstimate:
    values: np.ndarray  # (2, I) complex
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(2))  # (2,)


def mmse_gain(beta_k: float, beta_sum: float, rho_p: float, tau_p: int) -> float:
    return np.sqrt(rho_p) * tau_p * beta_k / (rho_p * tau_p * beta_sum + 1.0)


def mean_square_quality(beta_k: float, beta_sum: float, rho_p: float, tau_p: int) -> float:
    """``E|g_hat|^2``; never exceeds ``beta_k``."""
    return rho_p * tau_p * beta_k**2 / (rho_p * tau_p * beta_sum + 1.0)


def rotate(estimates: ChannelEstimate, schedule2: PhaseSchedule) -> ChannelEstimate:
    if schedule2.block_count != estimates.values.shape[1]:
        raise ValueError("schedule length does not match the number of blocks")
    values = estimates.values.copy()
    values[1] = values[1] * np.exp(1j * schedule2.phases)
    return ChannelEstimate(values, estimates.gamma)


def de_rotate(estimates: ChannelEstimate, schedule2: PhaseSchedule) -> ChannelEstimate:
    """Undo UE 2's pilot rotation block by block; UE 1 is left as is."""
    if schedule2.block_count != estimates.values.shape[1]:
        raise ValueError("schedule length does not match the number of blocks")
    values = estimates.values.copy()
    values[1] = values[1] * np.exp(-1j * schedule2.phases)
    return ChannelEstimate(values, estimates.gamma)


def mmse_channel_estimate(
    observations: DespreadObservation,
    beta1: float,
    beta2: float,
    rho_p: float,
    tau_p: int,
    schedule2: PhaseSchedule,
) -> ChannelEstimate:
    """Plug-in MMSE estimates of both UEs' gains from the shared pilot.

    The shrinkage factor is applied to the de-spread observation as written,
    with the contamination sum over both UEs. UE 2's output refers to its
    rotated effective channel until :func:`de_rotate` is applied, which this
    function does before returning.
    """
    if beta1 < 0 or beta2 < 0:
        raise ValueError("path losses must be nonnegative")
    y = observations.values
    total = beta1 + beta2
    values = np.vstack([mmse_gain(beta1, total, rho_p, tau_p) * y, mmse_gain(beta2, total, rho_p, tau_p) * y])
    gamma = np.array([mean_square_quality(beta1, total, rho_p, tau_p), mean_square_quality(beta2, total, rho_p, tau_p)])
    return de_rotate(ChannelEstimate(values, gamma), schedule2)
