from .chain import ConvergenceMonitor, HmmError
from .chmm1 import (Chmm1Model, asymmetry, backward1, circular_mask, forward1, init_chmm1,
                    init_emissions, likelihood1, sample_chmm1, train_chmm1, viterbi1)
from .chmm2 import (BackwardLattice, Chmm2Model, ForwardLattice, backward2, circular_mask3,
                    forward2, init_chmm2, likelihood2, sample_chmm2, train_chmm2, viterbi2)
from .gmm import VAR_FLOOR, GaussianMixture, GmmError, gmm_fit, gmm_log_density, gmm_sample

__all__ = [
    "BackwardLattice", "Chmm1Model", "Chmm2Model", "ConvergenceMonitor", "ForwardLattice",
    "GaussianMixture", "GmmError", "HmmError", "VAR_FLOOR", "asymmetry", "backward1",
    "backward2", "circular_mask", "circular_mask3", "forward1", "forward2", "gmm_fit",
    "gmm_log_density", "gmm_sample", "init_chmm1", "init_chmm2", "init_emissions", "likelihood1",
    "likelihood2", "sample_chmm1", "sample_chmm2", "train_chmm1", "train_chmm2", "viterbi1",
    "viterbi2",
]
