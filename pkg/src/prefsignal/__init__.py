"""Signal checks for multi-rater preference and ranking datasets."""

__version__ = "0.1.0"

from .ranks import (
    MajorityTournament,
    PairTally,
    RankPanel,
    Ranking,
    has_condorcet_cycle,
    kendall_tau,
    majority_tournament,
    p_max,
    pair_tallies,
    prompt_T,
)
from .nulls import NullPMF, MallowsParams, T_null, cycle_null_rate, mahonian_counts, pmax_null, tau_null
from .significance import binom_test, bonferroni, chisq_gof

__all__ = [
    "MajorityTournament",
    "MallowsParams",
    "NullPMF",
    "PairTally",
    "RankPanel",
    "Ranking",
    "T_null",
    "binom_test",
    "bonferroni",
    "chisq_gof",
    "cycle_null_rate",
    "has_condorcet_cycle",
    "kendall_tau",
    "mahonian_counts",
    "majority_tournament",
    "p_max",
    "pair_tallies",
    "pmax_null",
    "prompt_T",
    "tau_null",
]
