"""Fisher information under post-selection: checks, bounds and experiments."""

__version__ = "0.1.0"

from .abstention import (
    AbstentionModel,
    FidelityChain,
    build_model,
    fidelity,
    fidelity_chain,
    repeated_protocol_gamble,
    sector_mean_fidelity,
    sector_table,
)
from .estimation import (
    ExperimentReport,
    GridMLE,
    gamble_mse_experiment,
    normal_rule,
    root_prob_snr,
    simulate_mle,
)
from .fisher import classical_fisher, povm_classical_fisher, pure_qfi, qfi, sld
from .gamble import (
    ChernoffReport,
    GambleSetup,
    binomial_tail,
    chernoff_standard,
    chernoff_tight,
    gamble_bounds,
    simulate_gamble,
)
from .objects import (
    POVM,
    AnalyticUnitary,
    ChannelFamily,
    CustomFamily,
    KrausChannel,
    SelectionMeasurement,
)
from .postselect import (
    build_conditioned,
    build_joint,
    build_lumped,
    fisher_breakdown,
    purify_and_decohere,
    theorem_chain,
)
from .scenario import Scenario, get_scenario, load_scenario
