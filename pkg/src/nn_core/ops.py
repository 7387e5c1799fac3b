"""
レイヤー演算

SpectralMLP と SAUNet が必要とする演算一式（全結合、畳み込み、活性化、
プーリング/リサンプリング、連結、MSE）と、体積レンダリング用の排他的累積和。
"""
from typing import Sequence

import numpy as np

from src.errors import ShapeMismatch
from src.nn_core import tensor as _tensor
from src.nn_core.tensor import Tensor, as_tensor, make_result


# ==================== 全結合 ====================

def dense(x, W, b) -> Tensor:
    """
    アフィン変換 x @ W + b

    Args:
        x: [B, in]
        W: [in, out]
        b: [out]

    Returns:
        [B, out]
    """
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.ndim != 2 or W.ndim != 2 or b.ndim != 1:
        raise ShapeMismatch(f"dense: ranks x={x.ndim} W={W.ndim} b={b.ndim}")
    if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"dense: x{x.shape} W{W.shape} b{b.shape}")
    out = x.data @ W.data + b.data

    def backward(g):
        return g @ W.data.T, x.data.T @ g, g.sum(axis=0)

    return make_result(out, (x, W, b), backward, "dense")


# ==================== 畳み込み ====================

def conv2d(x, k, b, stride: int = 1, padding: int = 0) -> Tensor:
    """
    2次元相互相関（NCHW）

    Args:
        x: [B, C, H, W]
        k: [O, C, kh, kw]
        b: [O]
        stride: ストライド
        padding: ゼロパディング幅

    Returns:
        [B, O, floor((H+2p-kh)/stride)+1, floor((W+2p-kw)/stride)+1]
    """
    x, k, b = as_tensor(x), as_tensor(k), as_tensor(b)
    if x.ndim != 4 or k.ndim != 4 or b.ndim != 1:
        raise ShapeMismatch(f"conv2d: ranks x={x.ndim} k={k.ndim} b={b.ndim}")
    B, C, H, W = x.shape
    O, Ck, kh, kw = k.shape
    if Ck != C or b.shape[0] != O:
        raise ShapeMismatch(f"conv2d: x{x.shape} k{k.shape} b{b.shape}")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if kh > Hp or kw > Wp:
        raise ShapeMismatch(f"conv2d: kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    out = np.zeros((B, O, Ho, Wo), dtype=x.data.dtype)
    for dy in range(kh):
        for dx in range(kw):
            patch = xp[:, :, dy:dy + stride * (Ho - 1) + 1:stride, dx:dx + stride * (Wo - 1) + 1:stride]
            out += np.einsum("bchw,oc->bohw", patch, k.data[:, :, dy, dx], optimize=True)
    out += b.data[None, :, None, None]

    def backward(g):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(k.data)
        for dy in range(kh):
            for dx in range(kw):
                ys = slice(dy, dy + stride * (Ho - 1) + 1, stride)
                xs = slice(dx, dx + stride * (Wo - 1) + 1, stride)
                patch = xp[:, :, ys, xs]
                gk[:, :, dy, dx] = np.einsum("bohw,bchw->oc", g, patch, optimize=True)
                gxp[:, :, ys, xs] += np.einsum("bohw,oc->bchw", g, k.data[:, :, dy, dx], optimize=True)
        gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
        return gx, gk, g.sum(axis=(0, 2, 3))

    return make_result(out, (x, k, b), backward, "conv2d")


# ==================== 活性化 ====================

def relu(x) -> Tensor:
    """relu'(0) = 0"""
    x = as_tensor(x)
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # tanh 形式でオーバーフローを避ける
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make_result(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


# ==================== プーリング / リサンプリング ====================

def global_avg_pool(x) -> Tensor:
    """[B, C, H, W] -> [B, C, 1, 1]"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeMismatch(f"global_avg_pool expects NCHW, got {x.shape}")
    return x.mean(axis=(2, 3), keepdims=True)


def downsample2(x) -> Tensor:
    """2x2 平均プーリング"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeMismatch(f"downsample2 expects NCHW, got {x.shape}")
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeMismatch(f"downsample2 needs even spatial dims, got {H}x{W}")
    out = x.data.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))

    def backward(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25,)

    return make_result(out, (x,), backward, "downsample2")


def upsample2(x) -> Tensor:
    """最近傍 2 倍拡大"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeMismatch(f"upsample2 expects NCHW, got {x.shape}")
    B, C, H, W = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g):
        return (g.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5)),)

    return make_result(out, (x,), backward, "upsample2")


def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("concat of an empty sequence")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != ax):
            raise ShapeMismatch(f"concat: {[t.shape for t in tensors]} along axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors))
        )

    return make_result(out, tuple(tensors), backward, "concat")


# ==================== 損失 ====================

def mse(pred, target) -> Tensor:
    """平均二乗誤差（スカラー）"""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray(np.mean(diff * diff))

    def backward(g):
        scale = 2.0 * g / n
        return scale * diff, -scale * diff

    return make_result(out, (pred, target), backward, "mse")


# ==================== 体積レンダリング補助 ====================

def exclusive_cumsum(x, axis: int = -1) -> Tensor:
    """out[i] = sum_{j<i} x[j]（axis 方向）"""
    x = as_tensor(x)
    ax = axis % x.ndim
    inclusive = np.cumsum(x.data, axis=ax)
    out = inclusive - x.data

    def backward(g):
        # 逆順の累積和から自分自身を除く
        rev = np.flip(np.cumsum(np.flip(g, axis=ax), axis=ax), axis=ax)
        return (rev - g,)

    return make_result(out, (x,), backward, "exclusive_cumsum")


# ==================== 初期化 ====================

def init_dense(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=None):
    """重み U(-1/sqrt(fan_in), 1/sqrt(fan_in))、バイアス 0"""
    dtype = dtype or _tensor.DEFAULT_DTYPE
    bound = 1.0 / np.sqrt(fan_in)
    W = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype), requires_grad=True)
    b = Tensor(np.zeros(fan_out, dtype=dtype), requires_grad=True)
    return W, b


def init_conv(rng: np.random.Generator, in_ch: int, out_ch: int, ksize: int, dtype=None):
    """畳み込み版: fan_in = in_ch * k * k"""
    dtype = dtype or _tensor.DEFAULT_DTYPE
    fan_in = in_ch * ksize * ksize
    bound = 1.0 / np.sqrt(fan_in)
    k = Tensor(rng.uniform(-bound, bound, size=(out_ch, in_ch, ksize, ksize)).astype(dtype), requires_grad=True)
    b = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True)
    return k, b
