"""Robust limited-feedback SDMA downlink simulation.

Mobiles quantize their channel shape on a multi-basis codebook and feed
the index back over a noisy PSK link. The base station schedules one
orthonormal basis, picks rates that bound the outage probability under
feedback errors, and robust index assignment (a travelling-salesman tour
over codewords) keeps feedback errors landing on nearby codewords.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ChannelRealization,
    ConfigurationError,
    NormalizationError,
    OrthonormalBasis,
    distortion,
    draw_channel,
    draw_orthonormal_basis,
)
from .codebook import Codebook, build_codebook, codeword_priors, feedback_gate, quantize  # noqa: E402
from .feedback import (  # noqa: E402
    Constellation,
    IndexMapping,
    csit_transition,
    hamming_feedback,
    neighbor_set,
    parametric_nn_transition,
    psk_transition_matrix,
    transmit_index,
)
from .assignment import (  # noqa: E402
    TourSolution,
    TspInstance,
    build_tsp,
    cnna,
    cycle_cost,
    exhaustive_tsp,
    expected_distortion,
    tour_to_mapping,
    two_opt,
)
from .basestation import (  # noqa: E402
    RateTable,
    ScheduleOutcome,
    build_rate_table,
    mutual_info_exact,
    mutual_info_highsnr,
    outage_bound,
    schedule,
)
from .sim import GoodputSummary, SimConfig, average_goodput, build_context, run_trial, simulate  # noqa: E402
