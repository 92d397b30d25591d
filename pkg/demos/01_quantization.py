"""
Quantizing channel shapes with a multi-basis codebook
=====================================================

A codebook of 16 unit vectors in C^4 is four random orthonormal bases
stacked together. A mobile reports its codeword only when the shape is
well quantized (distortion below ``delta``) and the channel is strong
(gain above ``g_th``).
"""

import numpy as np

from robust_sdma.codebook import build_codebook, gate_many
from robust_sdma.core import draw_channel_matrix, sin_angle_cdf

rng = np.random.default_rng(1)
cb = build_codebook(rng, n_t=4, c_fb=4)
print(f"{cb.size} codewords in {cb.n_sets} orthonormal sets")

# Within a set the vectors are orthogonal; across sets they are not.
print("sines inside set 0:", np.round(cb.pairwise_sin[:4, :4], 3)[0])
print("sines to set 1:    ", np.round(cb.pairwise_sin[0, 4:8], 3))

###############################################################################
# The sine of the angle between a random shape and a fixed unit vector has
# CDF x^(2(n_t-1)). Compare the histogram to it.

h = draw_channel_matrix(rng, 4, 200_000)
shape = h / np.linalg.norm(h, axis=1)[:, None]
s = np.sqrt(1 - np.abs(shape @ cb.entries[0].conj()) ** 2)
for x in (0.5, 0.8, 0.95):
    print(f"Pr(sin < {x}): empirical {np.mean(s < x):.4f}, closed form {sin_angle_cdf(x, 4):.4f}")

###############################################################################
# How many of 100 users pass the feedback gate?

gain = np.sum(np.abs(h[:100]) ** 2, axis=1)
ok, idx, dist = gate_many(shape[:100], gain, cb, delta=0.1, g_th=2.0)
print(f"{ok.sum()} of 100 users feed back; reported codewords: {sorted(set(idx[ok].tolist()))}")
