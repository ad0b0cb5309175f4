"""Learning tight bounds on the probability of necessity and sufficiency.

Synthetic SCM data generation, exact per-subgroup causal quantities, Tian-Pearl
bounds, and a small numpy MLP that predicts PNS bounds for unseen subgroups.
"""

__version__ = "0.1.0"

N_FEATURES = 20
N_OBSERVED = 15
N_HIDDEN = N_FEATURES - N_OBSERVED
N_SUBGROUPS = 1 << N_OBSERVED
