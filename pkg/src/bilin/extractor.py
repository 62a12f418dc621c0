"""Minimal trainable feature extractor: one convolution plus rectification.

One layer is enough to exercise end-to-end backpropagation through the
bilinear pooling stage into extractor parameters; realistic deep stacks
are produced offline and ingested as ``.bfm`` feature maps instead.

Convolution here means cross-correlation (no kernel flip), the usual
CNN convention.  Patches are ``(H, W, C)`` arrays with values in
``[0, 1]`` after ingestion.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class ConvParams:
    """Learnable extractor parameters.

    kernel : (k, k, c_in, c_out) float64 array
    bias   : (c_out,) float64 array
    stride : positive int
    padding : non-negative int (zero padding on both spatial sides)
    """

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def copy(self):
        return ConvParams(
            self.kernel.copy(), self.bias.copy(), self.stride, self.padding
        )


def init_conv_params(kernel_size, c_in, c_out, stride=1, padding=0, seed=0):
    """Seeded rectifier-aware initialization.

    Kernel entries are zero-mean Gaussian with standard deviation
    ``sqrt(2 / (k * k * c_in))``; biases start at zero.
    """
    rng = np.random.default_rng(seed)
    std = np.sqrt(2.0 / (kernel_size * kernel_size * c_in))
    kernel = rng.normal(0.0, std, size=(kernel_size, kernel_size, c_in, c_out))
    return ConvParams(kernel=kernel, bias=np.zeros(c_out), stride=stride,
                      padding=padding)


def conv_output_shape(in_h, in_w, params):
    k = params.kernel.shape[0]
    out_h = (in_h + 2 * params.padding - k) // params.stride + 1
    out_w = (in_w + 2 * params.padding - k) // params.stride + 1
    return out_h, out_w


def _check_input(x, params):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected (H, W, C) input, got shape {x.shape}")
    k, k2, c_in, _ = params.kernel.shape
    if k != k2:
        raise ShapeError(f"kernel must be square, got {params.kernel.shape[:2]}")
    if x.shape[2] != c_in:
        raise ShapeError(
            f"input has {x.shape[2]} channels, kernel expects {c_in}"
        )
    out_h, out_w = conv_output_shape(x.shape[0], x.shape[1], params)
    if out_h < 1 or out_w < 1:
        raise ShapeError(
            f"output spatial dims ({out_h}, {out_w}) collapse below 1"
        )
    return x, out_h, out_w


def _pad(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((padding, padding), (padding, padding), (0, 0)))


def conv_preactivation(x, params):
    """Cross-correlation plus bias, before rectification."""
    x, out_h, out_w = _check_input(x, params)
    k = params.kernel.shape[0]
    c_out = params.kernel.shape[3]
    s = params.stride
    padded = _pad(x, params.padding)
    pre = np.zeros((out_h, out_w, c_out))
    for ki in range(k):
        for kj in range(k):
            window = padded[ki : ki + out_h * s : s, kj : kj + out_w * s : s, :]
            pre += window @ params.kernel[ki, kj]
    return pre + params.bias


def conv_forward(x, params):
    """Rectified convolution output; entries are all >= 0."""
    return np.maximum(conv_preactivation(x, params), 0.0)


def conv_backward(x, params, g_out):
    """Gradients w.r.t. input, kernel and bias with the ReLU mask applied.

    ``g_out`` must have the shape of ``conv_forward(x, params)``.
    Positions where the pre-activation is <= 0 contribute nothing.
    """
    x, out_h, out_w = _check_input(x, params)
    g_out = np.asarray(g_out, dtype=np.float64)
    c_out = params.kernel.shape[3]
    if g_out.shape != (out_h, out_w, c_out):
        raise ShapeError(
            f"upstream gradient shape {g_out.shape} does not match "
            f"output shape {(out_h, out_w, c_out)}"
        )
    k = params.kernel.shape[0]
    s = params.stride
    padded = _pad(x, params.padding)

    g_pre = g_out * (conv_preactivation(x, params) > 0.0)
    g_bias = g_pre.sum(axis=(0, 1))
    g_kernel = np.zeros_like(params.kernel)
    g_padded = np.zeros_like(padded)
    flat_g = g_pre.reshape(-1, c_out)
    for ki in range(k):
        for kj in range(k):
            rows = slice(ki, ki + out_h * s, s)
            cols = slice(kj, kj + out_w * s, s)
            window = padded[rows, cols, :]
            g_kernel[ki, kj] = window.reshape(-1, window.shape[2]).T @ flat_g
            g_padded[rows, cols, :] += g_pre @ params.kernel[ki, kj].T
    p = params.padding
    g_x = g_padded[p : p + x.shape[0], p : p + x.shape[1], :] if p else g_padded
    return g_x, g_kernel, g_bias


def ingest_patch(values, out_hw=None):
    """Turn a raw array into a patch with entries in [0, 1].

    Optionally resizes to ``out_hw = (H, W)`` by nearest-neighbor
    sampling, deliberately not preserving the aspect ratio.  Values are
    then min-max scaled into [0, 1]; a constant array maps to zeros.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeError(f"expected 2-D or 3-D array, got shape {arr.shape}")
    if out_hw is not None:
        out_h, out_w = out_hw
        if out_h < 1 or out_w < 1:
            raise ShapeError("target size must be positive")
        rows = (np.arange(out_h) * arr.shape[0] // out_h).clip(0, arr.shape[0] - 1)
        cols = (np.arange(out_w) * arr.shape[1] // out_w).clip(0, arr.shape[1] - 1)
        arr = arr[rows][:, cols]
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)
