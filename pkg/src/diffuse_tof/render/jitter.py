"""Jitter-kernel convolution with a fractional temporal offset, and kernel resampling."""

from __future__ import annotations

import math

import numpy as np

from ..exceptions import InvalidParameterError


def _shifted(x: np.ndarray, shift: int) -> np.ndarray:
    """``out[i] = x[i + shift]`` along axis 0, zero outside the range."""
    out = np.zeros_like(x)
    n = x.shape[0]
    if shift >= 0:
        if shift < n:
            out[: n - shift] = x[shift:]
    elif -shift < n:
        out[-shift:] = x[: n + shift]
    return out


def _integer_shift_convolve(x: np.ndarray, kernel: np.ndarray, shift: int) -> np.ndarray:
    out = np.zeros_like(x)
    for j, s in enumerate(kernel):
        if s != 0.0:
            out += s * _shifted(x, shift - j)
    return out


def shift_convolve(x, kernel, offset: float, with_offset_grad: bool = False):
    """``h[i] = sum_j x[i + offset - j] * kernel[j]`` along axis 0.

    A fractional ``offset`` linearly interpolates between the two
    neighbouring integer shifts; indices outside ``x`` read as zero.
    With ``with_offset_grad`` also returns ``dh/d offset``.
    """
    x = np.asarray(x, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    m = math.floor(offset)
    f = offset - m
    lo = _integer_shift_convolve(x, kernel, m)
    if f == 0.0 and not with_offset_grad:
        return lo
    hi = _integer_shift_convolve(x, kernel, m + 1)
    h = (1.0 - f) * lo + f * hi
    if with_offset_grad:
        return h, hi - lo
    return h


def convolve_jitter(raw, spec, kernel=None):
    """Apply the sensor's (resampled) jitter kernel and temporal offset.

    ``raw`` is a :class:`TransientHistogram` or an array whose axis 0 is the
    bin axis (extra axes, e.g. Jacobian columns, are carried along).
    """
    from .scene import TransientHistogram

    if kernel is None:
        kernel = spec.effective_kernel()
    if isinstance(raw, TransientHistogram):
        counts = shift_convolve(raw.counts, kernel, spec.temporal_offset_bins)
        return TransientHistogram(counts, raw.bin_width_s, raw.sensor_id)
    return shift_convolve(raw, kernel, spec.temporal_offset_bins)


def resample_kernel(reference, s_scale: float, with_grad: bool = False):
    """Stretch a kernel's time axis by ``s_scale`` with linear interpolation.

    Output tap ``j`` samples the piecewise-linear reference at ``j / s_scale``
    for ``j = 0 .. floor((L - 1) * s_scale)``; the result is renormalized to
    unit sum. With ``with_grad`` also returns the derivative w.r.t. ``s_scale``.
    """
    if not s_scale > 0:
        raise InvalidParameterError("s_scale must be positive")
    ref = np.asarray(reference, dtype=float).ravel()
    n = len(ref)
    if n == 1:
        out = np.ones(1)
        return (out, np.zeros(1)) if with_grad else out
    n_out = int(math.floor((n - 1) * s_scale + 1e-12)) + 1
    j = np.arange(n_out, dtype=float)
    x = np.minimum(j / s_scale, n - 1)
    i0 = np.minimum(np.floor(x).astype(int), n - 2)
    frac = x - i0
    slope = ref[i0 + 1] - ref[i0]
    u = ref[i0] + frac * slope
    total = u.sum()
    if not total > 0:
        raise InvalidParameterError("resampled kernel has zero mass")
    out = u / total
    if not with_grad:
        return out
    du = slope * (-j / s_scale**2)
    grad = du / total - u * du.sum() / total**2
    return out, grad
