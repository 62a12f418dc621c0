"""
Verifying the backward passes
=============================

Every backward pass in the toolkit is exact, which makes the whole
stack trainable end to end. This script checks the analytic gradients
of the full chain (convolution, rectification, bilinear pooling, signed
square root, L2 normalization) against central finite differences.
"""

import numpy as np

from bilin import encode, encode_backward_shared, finite_diff_check
from bilin.extractor import conv_backward, conv_forward, init_conv_params

rng = np.random.default_rng(7)

# A random patch and a small convolutional extractor. The positive bias
# keeps most units active, away from the ReLU kink where finite
# differences are meaningless.
patch = rng.uniform(0.1, 1.0, (5, 5, 3))
params = init_conv_params(kernel_size=2, c_in=3, c_out=4, seed=7)
params.bias[:] = 0.4

# Scalar loss: a fixed random projection of the descriptor.
r = rng.standard_normal(16)


def loss_and_grad(flat_patch):
    x = flat_patch.reshape(patch.shape)
    fmap = conv_forward(x, params)
    value = float(r @ encode(fmap))
    g_map = encode_backward_shared(fmap, r)
    g_x, _, _ = conv_backward(x, params, g_map)
    return value, g_x


report = finite_diff_check(loss_and_grad, patch, step=1e-4)
print(f"checked {report.probe_count} coordinates at step {report.step:g}")
print(f"max absolute error: {report.max_abs_error:.3e}")
print(f"max relative error: {report.max_rel_error:.3e}")
print("gradients trustworthy:", report.ok(rel_tol=1e-4))

# The checker also works coordinate-sampled for big inputs.
sampled = finite_diff_check(loss_and_grad, patch, step=1e-4, max_probes=10)
print(f"sampled check on {sampled.probe_count} coordinates:",
      f"{sampled.max_rel_error:.3e}")
