"""
Choosing an index assignment for a noisy feedback link
======================================================

Feedback symbols that are corrupted tend to land on a neighbouring PSK
point. If neighbouring points carry nearby codewords, an error costs
little distortion. Finding such a labelling is a travelling-salesman
problem on the codewords.
"""

import numpy as np

from robust_sdma.assignment import (
    build_tsp,
    cnna,
    exhaustive_tsp,
    expected_distortion,
    tour_to_mapping,
    two_opt,
)
from robust_sdma.codebook import build_codebook, codeword_priors
from robust_sdma.feedback import IndexMapping, parametric_nn_transition

rng = np.random.default_rng(7)
cb = build_codebook(rng, n_t=4, c_fb=3)
priors = codeword_priors(cb, delta=0.3, rng=rng)
p_e = 0.2
p_ch = parametric_nn_transition(8, p_e)
inst = build_tsp(cb, priors, p_e)

greedy = cnna(inst)
polished = two_opt(inst, greedy)
best = exhaustive_tsp(inst)
print(f"tour cost  CNNA {greedy.cost:.4f}  2-opt {polished.cost:.4f}  optimum {best.cost:.4f}")

###############################################################################
# The tour cost is the average feedback distortion of the mapping it
# induces. A random labelling does noticeably worse.

xi = tour_to_mapping(greedy, 8)
print("CNNA mapping   ", expected_distortion(xi, priors, p_ch, cb))
rand = [expected_distortion(IndexMapping.random(8, rng), priors, p_ch, cb) for _ in range(200)]
print("random mapping ", np.mean(rand), "(mean of 200)")
