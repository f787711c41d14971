"""Path-loss learning for two co-pilot UEs with phase-rotated pilots (LoS cell-free uplink)."""

__version__ = "0.1.0"

from .channel import (
    ChannelModel,
    ChannelRealization,
    DespreadObservation,
    despread,
    generate_channel,
    received_pilot_signal,
)
from .estimator import (
    ChannelEstimate,
    LikelihoodSurface,
    PathLossEstimate,
    SearchGrid,
    de_rotate,
    default_grid,
    likelihood_surface,
    ml_grid_search,
    mmse_channel_estimate,
)
from .experiments import ScenarioConfig, ScenarioResult, run_scenario, sweep_fig1, sweep_fig2
from .likelihood import (
    LikelihoodParams,
    QuadratureRule,
    build_quadrature,
    conditional_pdf,
    log_bessel_i0,
    log_likelihood,
    marginal_pdf,
    rice_pdf_log,
)
from .pilots import (
    PhaseSchedule,
    PilotAssignment,
    PilotBook,
    Scheme,
    build_pilot_book,
    canonical_phases,
    random_phases,
    structured_phases,
)
