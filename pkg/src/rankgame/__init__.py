"""Rank-allocation game among experiment administrators, with estimation tools."""

__version__ = "0.1.0"

from rankgame.errors import GuardError, NoDataError, ValidationError
from rankgame.game import (
    GameConfig,
    SampleProfile,
    activation_probability,
    allocate_ranks,
    check_rank_exclusivity,
    exact_rank_win_probabilities,
    sample_profile,
    sample_value,
    simulate_ranks,
)
from rankgame.utility import (
    UtilityEstimate,
    exact_mse_utility,
    exact_sv_utility,
    jensen_gap,
    mc_mse_utility,
    mc_sv_utility,
    printed_formula_sv_utility,
)
from rankgame.equilibrium import (
    approx_nash_audit,
    best_response,
    build_canonical_equilibrium,
    check_lemma_conditions,
    concentration_check,
    enumerate_pure_nash,
    verify_pure_nash,
)
from rankgame.causal import (
    OutcomesModel,
    data_splitting_compare,
    estimate_tau_pipeline,
    ht_estimate_rank,
    minimax_lower_bound,
    sample_outcomes,
)
from rankgame.experiments import RunReport, Scenario, run_scenario, sweep
