"""Pure numpy implementations of the numerical kernels.

Same signatures as the compiled ``_ckernels`` module; used when the extension
is not built or when ``ROAR_PURE_PYTHON=1`` is set.
"""
from __future__ import annotations

import numpy as np


def mlp_forward(X, Ws, bs):
    """Forward pass of a ReLU MLP with a linear output layer.

    Returns every layer's post-activation output, input first, so that
    :func:`mlp_backward` can reuse them.
    """
    acts = [X]
    a = X
    last = len(Ws) - 1
    for i, (W, b) in enumerate(zip(Ws, bs)):
        z = a @ W + b
        a = z if i == last else np.maximum(z, 0.0)
        acts.append(a)
    return acts


def mlp_backward(acts, Ws, dout):
    """Backpropagate ``dout`` (gradient w.r.t. the output) through the net."""
    n_layers = len(Ws)
    dWs = [None] * n_layers
    dbs = [None] * n_layers
    delta = dout
    for i in range(n_layers - 1, -1, -1):
        dWs[i] = acts[i].T @ delta
        dbs[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ Ws[i].T) * (acts[i] > 0.0)
    return dWs, dbs


def convolve_full(x, h):
    return np.convolve(x, h, mode="full")


def linear_resample(x, out_len, step):
    # output sample i reads the source at position i*step
    pos = np.arange(out_len, dtype=np.float64) * step
    return np.interp(pos, np.arange(len(x), dtype=np.float64), x)


def ola_stretch(x, out_len, analysis_hop, synthesis_hop, window, tolerance=0):
    """Overlap-add time stretch with window-sum normalisation.

    Frame ``m`` is centred near source position ``m * analysis_hop`` and
    placed centred on output position ``m * synthesis_hop``. With
    ``tolerance > 0`` each frame may shift by up to that many samples to the
    position whose normalised cross-correlation with the natural continuation
    of the previous frame is highest (WSOLA).
    """
    win_len = len(window)
    half = win_len // 2
    tol = int(tolerance)
    n_frames = (out_len + half) // synthesis_hop + 2
    out = np.zeros(n_frames * synthesis_hop + win_len)
    wsum = np.zeros_like(out)
    pad = half + tol
    src = np.zeros(pad + len(x) + int(n_frames * analysis_hop) + 2 * tol + win_len + synthesis_hop + 2)
    src[pad : pad + len(x)] = x
    ones = np.ones(win_len)
    prev = 0
    for m in range(n_frames):
        a = int(np.floor(m * analysis_hop + 0.5))
        if m > 0 and tol > 0:
            t0 = pad + prev + synthesis_hop - half
            template = src[t0 : t0 + win_len]
            r0 = pad + a - tol - half
            region = src[r0 : r0 + win_len + 2 * tol]
            dots = np.correlate(region, template, mode="valid")
            energy = np.convolve(region * region, ones, mode="valid")
            score = np.where(energy > 0.0, dots / np.sqrt(np.maximum(energy, 1e-300)), 0.0)
            a = a - tol + int(np.argmax(score))
        f0 = pad + a - half
        s = m * synthesis_hop
        out[s : s + win_len] += src[f0 : f0 + win_len] * window
        wsum[s : s + win_len] += window
        prev = a
    out = out[half : half + out_len]
    wsum = wsum[half : half + out_len]
    nz = wsum > 1e-8
    out[nz] /= wsum[nz]
    out[~nz] = 0.0
    return out
