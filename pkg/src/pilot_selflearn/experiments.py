"""Monte Carlo NMSE of the path-loss estimates over scenario sweeps."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .channel import ChannelModel, despread, generate_channel, received_pilot_signal
from .estimator import SearchGrid, db2lin, default_grid, ml_grid_search
from .pilots import Scheme, build_pilot_book, co_pilot_assignments, make_schedule

FIG1_GAPS_DB = tuple(range(11))
FIG2_BLOCK_COUNTS = (2, 5, 10, 20, 30, 50)
FIG2_SNRS_DB = (-10.0, -5.0, 0.0, 3.0, 5.0, 10.0, 15.0, 20.0)
ALL_SCHEMES = (Scheme.STRUCTURED, Scheme.PSEUDO_RANDOM, Scheme.CANONICAL)

RESULT_HEADER = ["scheme", "snr1_db", "snr2_db", "I", "drops", "nmse1", "nmse2", "mean_nmse", "stderr"]


@dataclass(frozen=True)
class ScenarioConfig:
    scheme: Scheme = Scheme.STRUCTURED
    snr1_db: float = 20.0
    snr2_db: float = 20.0
    block_count: int = 10
    drops: int = 500
    seed: int = 0
    grid: SearchGrid = field(default_factory=default_grid)
    quad_nodes: int = 64
    rho_p: float = 1.0
    tau_p: int = 1
    channel_model: ChannelModel = ChannelModel.LOS
    los_phase: str = "constant"
    noiseless: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        object.__setattr__(self, "channel_model", ChannelModel(self.channel_model))
        if self.drops < 1:
            raise ValueError("drops must be >= 1")
        if self.block_count < 1:
            raise ValueError("block_count must be >= 1")
        if self.quad_nodes < 2:
            raise ValueError("quad_nodes must be >= 2")
        if self.rho_p <= 0 or self.tau_p < 1:
            raise ValueError("rho_p must be > 0 and tau_p >= 1")

    @property
    def betas(self) -> tuple[float, float]:
        return float(db2lin(self.snr1_db)) / self.rho_p, float(db2lin(self.snr2_db)) / self.rho_p

    def as_dict(self) -> dict:
        d = asdict(self)
        d["scheme"] = self.scheme.value
        d["channel_model"] = self.channel_model.value
        g = self.grid
        d["grid"] = {
            "values_db": [float(v) for v in g.beta_values_db],
            "refine_step_db": g.refine_step_db,
            "refine_half_width_db": g.refine_half_width_db,
        }
        return d


@dataclass(frozen=True)
class ScenarioResult:
    config: ScenarioConfig
    nmse1: float
    nmse2: float
    mean_nmse: float
    stderr: float  # standard error of mean_nmse
    stderr1: float
    stderr2: float
    drops_used: int

    def csv_row(self) -> list[str]:
        c = self.config
        return [
            c.scheme.value,
            repr(float(c.snr1_db)),
            repr(float(c.snr2_db)),
            str(c.block_count),
            str(self.drops_used),
            repr(self.nmse1),
            repr(self.nmse2),
            repr(self.mean_nmse),
            repr(self.stderr),
        ]


def drop_errors(config: ScenarioConfig, seed_seq: np.random.SeedSequence) -> tuple[float, float]:
    """Normalized squared errors ``|beta_hat - beta|^2 / beta^2`` for one drop."""
    ch_seed, noise_seed, sched_seed = seed_seq.spawn(3)
    beta1, beta2 = config.betas
    book = build_pilot_book(config.tau_p)
    schedule2 = make_schedule(config.scheme, config.block_count, sched_seed)
    assignments = co_pilot_assignments(schedule2, pilot_index=0)
    channel = generate_channel(
        beta1, beta2, config.block_count, config.channel_model, ch_seed, los_phase=config.los_phase
    )
    y = received_pilot_signal(channel, book, assignments, config.rho_p, noise_seed, noise=not config.noiseless)
    obs = despread(y, book, 0, config.rho_p)
    est = ml_grid_search(obs, config.grid, config.quad_nodes)
    return (est.beta1_hat - beta1) ** 2 / beta1**2, (est.beta2_hat - beta2) ** 2 / beta2**2


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("PILOT_SELFLEARN_THREADS", "1"))
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def _stderr(x: np.ndarray) -> float:
    if x.size < 2:
        return 0.0
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def run_scenario(config: ScenarioConfig, threads: int | None = None) -> ScenarioResult:
    """Average the per-drop normalized squared errors over ``config.drops`` drops.

    Drop ``d`` draws from the ``d``-th child of ``SeedSequence(config.seed)``,
    so results do not depend on ``threads``.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.drops)
    n_threads = resolve_threads(threads)
    if n_threads == 1:
        errs = [drop_errors(config, s) for s in children]
    else:
        with ThreadPoolExecutor(n_threads) as pool:
            errs = list(pool.map(lambda s: drop_errors(config, s), children))
    e = np.array(errs)
    nmse1 = math.fsum(e[:, 0]) / config.drops
    nmse2 = math.fsum(e[:, 1]) / config.drops
    return ScenarioResult(
        config=config,
        nmse1=nmse1,
        nmse2=nmse2,
        mean_nmse=(nmse1 + nmse2) / 2,
        stderr=_stderr(e.mean(axis=1)),
        stderr1=_stderr(e[:, 0]),
        stderr2=_stderr(e[:, 1]),
        drops_used=config.drops,
    )


def sweep_fig1(
    base: ScenarioConfig,
    gaps_db: Iterable[float] = FIG1_GAPS_DB,
    schemes: Sequence[Scheme] = ALL_SCHEMES,
    threads: int | None = None,
) -> list[ScenarioResult]:
    """UE 2 stronger than UE 1 by each gap; one row per (scheme, gap)."""
    return [
        run_scenario(replace(base, scheme=s, snr2_db=base.snr1_db + g), threads)
        for s in schemes
        for g in gaps_db
    ]


def sweep_fig2(
    base: ScenarioConfig,
    side: str = "both",
    block_counts: Iterable[int] = FIG2_BLOCK_COUNTS,
    snrs_db: Iterable[float] = FIG2_SNRS_DB,
    schemes: Sequence[Scheme] = ALL_SCHEMES,
    threads: int | None = None,
) -> tuple[list[ScenarioResult], list[ScenarioResult]]:
    """Equal path losses. Left: NMSE versus I at ``base.snr1_db``. Right: versus SNR at ``base.block_count``."""
    if side not in ("left", "right", "both"):
        raise ValueError("side must be 'left', 'right' or 'both'")
    left, right = [], []
    if side in ("left", "both"):
        for s in schemes:
            for n in block_counts:
                left.append(run_scenario(replace(base, scheme=s, snr2_db=base.snr1_db, block_count=n), threads))
    if side in ("right", "both"):
        for s in schemes:
            for snr in snrs_db:
                right.append(run_scenario(replace(base, scheme=s, snr1_db=snr, snr2_db=snr), threads))
    return left, right


def results_csv(results: Iterable[ScenarioResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_HEADER)
    for r in results:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def plot_sweep(results: Sequence[ScenarioResult], x: str, path, y: str = "mean_nmse") -> None:
    """Static SVG of NMSE against ``x`` (``"gap"``, ``"I"`` or ``"snr"``), one line per scheme."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for scheme in ALL_SCHEMES:
        rows = [r for r in results if r.config.scheme is scheme]
        if not rows:
            continue
        if x == "gap":
            xs = [r.config.snr2_db - r.config.snr1_db for r in rows]
        elif x == "I":
            xs = [r.config.block_count for r in rows]
        else:
            xs = [r.config.snr1_db for r in rows]
        ax.semilogy(xs, [getattr(r, y) for r in rows], marker="o", label=scheme.value)
    ax.set_xlabel({"gap": "path-loss gap [dB]", "I": "coherence blocks I", "snr": "large-scale SNR [dB]"}[x])
    ax.set_ylabel(y.replace("_", " "))
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
