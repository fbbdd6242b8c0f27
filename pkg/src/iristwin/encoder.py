"""Shared-weight convolutional encoder in plain numpy.

Architecture: N blocks of (3x3 conv, stride 2, pad 1, tanh), global
average pooling, one affine map to the embedding dimension, L2
normalization.  Parameters live in one flat float64 vector; the
backward pass is validated against central finite differences in the
test suite, so keep forward and backward in lockstep when editing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SMALLCONV_WIDTHS = (32, 64, 128, 256)


@dataclass(frozen=True)
class ArchDescriptor:
    input_size: int
    in_channels: int = 1
    widths: tuple[int, ...] = SMALLCONV_WIDTHS
    embed_dim: int = 128
    kernel: int = 3
    stride: int = 2
    pad: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation != "tanh":
            raise ValueError("only tanh is implemented")
        if not self.widths:
            raise ValueError("need at least one conv block")
        size = self.input_size
        for _ in self.widths:
            size = (size + 2 * self.pad - self.kernel) // self.stride + 1
            if size < 1:
                raise ValueError("input_size too small for this depth")

    def to_json(self) -> dict:
        return {
            "input_size": self.input_size,
            "in_channels": self.in_channels,
            "widths": list(self.widths),
            "embed_dim": self.embed_dim,
            "kernel": self.kernel,
            "stride": self.stride,
            "pad": self.pad,
            "activation": self.activation,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ArchDescriptor":
        return cls(
            input_size=int(d["input_size"]),
            in_channels=int(d["in_channels"]),
            widths=tuple(int(x) for x in d["widths"]),
            embed_dim=int(d["embed_dim"]),
            kernel=int(d["kernel"]),
            stride=int(d["stride"]),
            pad=int(d["pad"]),
            activation=str(d["activation"]),
        )


def smallconv_arch(input_size: int, in_channels: int = 1, embed_dim: int = 128) -> ArchDescriptor:
    return ArchDescriptor(input_size=input_size, in_channels=in_channels, embed_dim=embed_dim)


def _layer_shapes(arch: ArchDescriptor):
    """[(c_in, c_out), ...] for conv blocks plus the affine (f_in, embed)."""
    convs = []
    c_in = arch.in_channels
    for c_out in arch.widths:
        convs.append((c_in, c_out))
        c_in = c_out
    return convs, (c_in, arch.embed_dim)


def param_count(arch: ArchDescriptor) -> int:
    convs, (f_in, d) = _layer_shapes(arch)
    k2 = arch.kernel * arch.kernel
    n = sum(ci * k2 * co + co for ci, co in convs)
    n += f_in * d + d
    return n


def init_params(arch: ArchDescriptor, seed: int) -> np.ndarray:
    """Fan-in-scaled zero-mean init; the affine bias gets a small random
    component so degenerate (constant) inputs still embed to unit norm."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1215]))
    convs, (f_in, d) = _layer_shapes(arch)
    k2 = arch.kernel * arch.kernel
    chunks = []
    for ci, co in convs:
        fan_in = ci * k2
        chunks.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=ci * k2 * co))
        chunks.append(np.zeros(co))
    chunks.append(rng.normal(0.0, 1.0 / np.sqrt(f_in), size=f_in * d))
    chunks.append(rng.normal(0.0, 0.1, size=d))
    return np.concatenate(chunks).astype(np.float64)


def _unpack(arch: ArchDescriptor, w: np.ndarray):
    convs, (f_in, d) = _layer_shapes(arch)
    k2 = arch.kernel * arch.kernel
    params = []
    o = 0
    for ci, co in convs:
        n = ci * k2 * co
        W = w[o : o + n].reshape(ci * k2, co)
        o += n
        b = w[o : o + co]
        o += co
        params.append((W, b))
    A = w[o : o + f_in * d].reshape(f_in, d)
    o += f_in * d
    c = w[o : o + d]
    o += d
    assert o == w.size, "flat parameter vector length mismatch"
    return params, (A, c)


def _im2col(x: np.ndarray, k: int, s: int, p: int):
    """(N, C, H, W) -> (N, oh*ow, C*k*k) patch matrix, plus (oh, ow)."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, c * k * k)
    return np.ascontiguousarray(cols), oh, ow


def _col2im(dcols, n, c, h, w, oh, ow, k, s, p):
    """Scatter-add the im2col adjoint back to image space."""
    dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=np.float64)
    d = dcols.reshape(n, oh, ow, c, k, k).transpose(0, 3, 1, 2, 4, 5)
    for ky in range(k):
        for kx in range(k):
            dxp[:, :, ky : ky + s * oh : s, kx : kx + s * ow : s] += d[:, :, :, :, ky, kx]
    return dxp[:, :, p : h + p, p : w + p]


def forward(arch: ArchDescriptor, w: np.ndarray, x: np.ndarray):
    """Embed a batch (N, C, H, W) -> unit-norm (N, embed_dim).

    Returns (embeddings, cache); the cache feeds backward().
    """
    params, (A, c) = _unpack(arch, w)
    k, s, p = arch.kernel, arch.stride, arch.pad
    a = np.ascontiguousarray(x, dtype=np.float64)
    blocks = []
    for W, b in params:
        cols, oh, ow = _im2col(a, k, s, p)
        z = cols @ W + b
        act = np.tanh(z)
        blocks.append({"cols": cols, "act": act, "oh": oh, "ow": ow, "in_shape": a.shape})
        f = W.shape[1]
        a = act.transpose(0, 2, 1).reshape(a.shape[0], f, oh, ow)
    n, f, oh, ow = a.shape
    g = a.reshape(n, f, oh * ow).mean(axis=2)
    u = g @ A + c
    nrm = np.linalg.norm(u, axis=1, keepdims=True)
    nrm_safe = np.maximum(nrm, 1e-12)
    e = u / nrm_safe
    cache = {"blocks": blocks, "g": g, "u": u, "e": e, "nrm": nrm_safe, "pool": oh * ow}
    return e, cache


def backward(arch: ArchDescriptor, w: np.ndarray, cache, de: np.ndarray) -> np.ndarray:
    """Gradient of sum(de * embeddings) with respect to the flat w."""
    params, (A, c) = _unpack(arch, w)
    k, s, p = arch.kernel, arch.stride, arch.pad
    e, nrm, g = cache["e"], cache["nrm"], cache["g"]

    # through the L2 normalization
    du = (de - e * np.sum(e * de, axis=1, keepdims=True)) / nrm
    dA = g.T @ du
    dc = du.sum(axis=0)
    dg = du @ A.T

    blocks = cache["blocks"]
    n = dg.shape[0]
    pool = cache["pool"]
    last = blocks[-1]
    f = last["act"].shape[2]
    da_map = np.broadcast_to(
        (dg / pool)[:, :, None], (n, f, pool)
    )  # (N, F, oh*ow), uniform over positions

    grads: list[np.ndarray] = []
    da = da_map
    for i in range(len(blocks) - 1, -1, -1):
        blk = blocks[i]
        act, cols, oh, ow = blk["act"], blk["cols"], blk["oh"], blk["ow"]
        W, _ = params[i]
        dact = da.transpose(0, 2, 1)  # (N, F, P) -> (N, P, F)
        dz = dact * (1.0 - act * act)
        dW = np.tensordot(cols, dz, axes=([0, 1], [0, 1]))
        db = dz.sum(axis=(0, 1))
        grads.append(db)
        grads.append(dW.ravel())
        if i > 0:
            dcols = dz @ W.T
            _, ci, hi, wi = blk["in_shape"]
            dx = _col2im(dcols, n, ci, hi, wi, oh, ow, k, s, p)
            da = dx.reshape(n, ci, hi * wi)
    grads.reverse()
    flat = np.concatenate([g_.ravel() for g_ in grads] + [dA.ravel(), dc.ravel()])
    assert flat.size == w.size
    return flat
