"""
Second-order encoding, step by step
===================================

Build a small feature map by hand and walk through the encoding chain:
outer-product pooling over locations, vectorization, signed square
root, and L2 normalization.
"""

import numpy as np

from bilin import bilinear_pool, encode, l2_normalize, signed_sqrt

# A feature map is an (H, W, C) grid of channel vectors. Here: 2x2
# locations, 3 channels.
rng = np.random.default_rng(0)
fmap = rng.random((2, 2, 3))

# Pooling sums the outer product of the channel vector with itself at
# every location, so the result is a symmetric 3x3 matrix of channel
# co-occurrences. Spatial layout is discarded entirely.
pooled = bilinear_pool(fmap)
print("pooled matrix:\n", pooled)
print("symmetric:", np.allclose(pooled, pooled.T))

# Shuffling the locations changes nothing: the descriptor is orderless.
shuffled = fmap.reshape(4, 3)[rng.permutation(4)].reshape(2, 2, 3)
print("orderless:", np.allclose(pooled, bilinear_pool(shuffled)))

# The matrix is vectorized row-major, compressed by a signed square
# root, and scaled to unit length.
x = pooled.reshape(-1)
y = signed_sqrt(x)
z = l2_normalize(y)
print("norm after L2 stage:", np.linalg.norm(z))

# encode() runs the whole chain in one call.
print("encode matches:", np.allclose(z, encode(fmap)))

# Two maps with different channel counts can be combined as well; the
# descriptor length is the product of the channel counts.
other = rng.random((2, 2, 5))
print("3x5 channels ->", encode(fmap, other).shape)
