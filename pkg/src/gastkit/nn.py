"""Layers, losses, and optimization on top of the autodiff tensor core.

Everything here is float64 and deterministic: parameter initialization is
Kaiming-uniform from an explicit ``numpy.random.Generator`` and all kernels
are plain numpy, so two runs with the same seed produce identical
trajectories.
"""

from __future__ import annotations

import struct
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DisconnectedGraphError, ShapeMismatchError, Tensor

__all__ = [
    "Parameter", "Module", "Dense", "Conv2d", "Conv3d", "ConvTranspose2d",
    "BatchNorm", "PReLU",
    "conv2d", "conv3d", "transposed_conv2d", "maxpool2d", "maxpool3d",
    "batchnorm", "softmax", "log_softmax", "cross_entropy", "smooth_l1",
    "kl_standard_normal", "laplacian_pyramid_loss", "Adam", "grad_check",
    "save_checkpoint", "load_checkpoint",
]


class UnregisteredParameterError(KeyError):
    """Raised when the optimizer meets a parameter outside its registry."""


class ExtentUnderflowError(ValueError):
    """Raised when a conv/pool output extent would drop below one."""


class Parameter:
    """A named, trainable tensor."""

    def __init__(self, data: np.ndarray, name: str, trainable: bool = True):
        self.tensor = Tensor(data, requires_grad=True, name=name)
        self.name = name
        self.trainable = trainable

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


class Module:
    """Minimal container tracking parameters of a model."""

    def parameters(self) -> list:
        params: list[Parameter] = []
        seen: set[int] = set()
        for value in vars(self).values():
            for p in _collect_params(value):
                if id(p) not in seen:
                    seen.add(id(p))
                    params.append(p)
        return params

    def state_dict(self) -> dict:
        state = {p.name: p.data.copy() for p in self.parameters()}
        for name, buf in getattr(self, "_buffers", {}).items():
            state[name] = buf.copy()
        return state

    def load_state_dict(self, state: dict) -> None:
        for p in self.parameters():
            p.tensor.data = np.array(state[p.name], dtype=np.float64)
        for name, buf in getattr(self, "_buffers", {}).items():
            buf[...] = state[name]


def _collect_params(value):
    if isinstance(value, Parameter):
        yield value
    elif isinstance(value, Module):
        yield from value.parameters()
    elif isinstance(value, (list, tuple)):
        for v in value:
            yield from _collect_params(v)


def kaiming_uniform(shape: Sequence[int], fan_in: int,
                    rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def _pair(v, n):
    if isinstance(v, (tuple, list)):
        if len(v) != n:
            raise ValueError(f"expected {n}-tuple, got {v}")
        return tuple(int(x) for x in v)
    return (int(v),) * n


def _conv_extent(size: int, k: int, stride: int, pad: int, axis: str) -> int:
    out = (size + 2 * pad - k) // stride + 1
    if out < 1:
        raise ExtentUnderflowError(
            f"axis {axis}: extent {size} with kernel {k}, stride {stride}, "
            f"pad {pad} yields non-positive output {out}")
    return out


# ----------------------------------------------------------------------
# convolutions
# ----------------------------------------------------------------------

def _convnd(x: Tensor, K: Tensor, stride, padding, nsp: int) -> Tensor:
    """Shared n-spatial-dim convolution (nsp in {2, 3})."""
    strides = _pair(stride, nsp)
    ksp = K.shape[2:]
    if padding == "same":
        pads = tuple((k - 1) // 2 for k in ksp)
    else:
        pads = _pair(padding, nsp)
    if x.data.ndim != nsp + 2:
        raise ShapeMismatchError(
            f"conv{nsp}d input must have {nsp + 2} axes, got shape {x.shape}")
    if K.shape[1] != x.shape[1]:
        raise ShapeMismatchError(
            f"channel axis: input has {x.shape[1]}, kernel expects {K.shape[1]}")
    names = "dhw"[-nsp:]
    outsp = tuple(_conv_extent(x.shape[2 + i], ksp[i], strides[i], pads[i],
                               names[i]) for i in range(nsp))
    xp = x.data
    if any(pads):
        pad_spec = [(0, 0), (0, 0)] + [(p, p) for p in pads]
        xp = np.pad(xp, pad_spec)

    win = sliding_window_view(xp, ksp, axis=tuple(range(2, 2 + nsp)))
    win = win[(slice(None), slice(None))
              + tuple(slice(None, None, s) for s in strides)]
    # win: (N, Ci, *outsp, *ksp); contract channel + kernel axes against K
    n = x.shape[0]
    ci = x.shape[1]
    co = K.shape[0]
    sp = "ijl"[:nsp]   # output spatial axis labels
    kk = "pqr"[:nsp]   # kernel spatial axis labels
    out_data = np.einsum(f"nc{sp}{kk},oc{kk}->no{sp}", win, K.data,
                         optimize=True)
    out = Tensor(out_data, _prev=(x, K))

    def _bw(g):
        if K.requires_grad or K._prev:
            dK = np.einsum(f"no{sp},nc{sp}{kk}->oc{kk}", g, win,
                           optimize=True)
            K._accumulate(dK)
        if x.requires_grad or x._prev:
            if all(s == 1 for s in strides):
                # stride-1 input gradient is a full correlation of the
                # output gradient with the spatially flipped kernel
                flip = K.data[(slice(None), slice(None))
                              + (slice(None, None, -1),) * nsp]
                gpad = np.pad(g, [(0, 0), (0, 0)]
                              + [(k - 1, k - 1) for k in ksp])
                gwin = sliding_window_view(
                    gpad, ksp, axis=tuple(range(2, 2 + nsp)))
                dxp = np.einsum(f"no{sp}{kk},oc{kk}->nc{sp}", gwin, flip,
                                optimize=True)
            else:
                kmat = K.data.reshape(co, -1)
                gmat = np.moveaxis(g, 1, -1).reshape(
                    n * int(np.prod(outsp)), co)
                dcols = gmat @ kmat  # (N*prod(out), Ci*prod(ksp))
                dcols = dcols.reshape((n,) + outsp + (ci,) + tuple(ksp))
                dxp = np.zeros(xp.shape, dtype=np.float64)
                # scatter each kernel offset back onto the padded input
                for off in np.ndindex(*ksp):
                    sl = (slice(None), slice(None)) + tuple(
                        slice(off[i], off[i] + strides[i] * outsp[i],
                              strides[i])
                        for i in range(nsp))
                    piece = dcols[(slice(None),) + (slice(None),) * nsp
                                  + (slice(None),) + off]
                    dxp[sl] += np.moveaxis(piece, -1, 1)
            if any(pads):
                sl = (slice(None), slice(None)) + tuple(
                    slice(p, dxp.shape[2 + i] - p) if p else slice(None)
                    for i, p in enumerate(pads))
                dxp = dxp[sl]
            x._accumulate(dxp)
    out._backward = _bw
    return out


def conv2d(x: Tensor, K: Tensor, stride=1, padding=0) -> Tensor:
    """2-D convolution (cross-correlation); x (N,Ci,H,W), K (Co,Ci,kh,kw)."""
    return _convnd(x, K, stride, padding, 2)


def conv3d(x: Tensor, K: Tensor, stride=1, padding=0) -> Tensor:
    """3-D convolution; x (N,Ci,D,H,W), K (Co,Ci,kd,kh,kw)."""
    return _convnd(x, K, stride, padding, 3)


def transposed_conv2d(x: Tensor, K: Tensor, stride=1) -> Tensor:
    """Transposed 2-D convolution; x (N,Ci,H,W), K (Ci,Co,kh,kw)."""
    sh, sw = _pair(stride, 2)
    n, ci, h, w = x.shape
    if K.shape[0] != ci:
        raise ShapeMismatchError(
            f"channel axis: input has {ci}, kernel expects {K.shape[0]}")
    _, co, kh, kw = K.shape
    oh = (h - 1) * sh + kh
    ow = (w - 1) * sw + kw
    out_data = np.zeros((n, co, oh, ow), dtype=np.float64)
    for a in range(kh):
        for b in range(kw):
            out_data[:, :, a:a + sh * h:sh, b:b + sw * w:sw] += np.einsum(
                "nchw,co->nohw", x.data, K.data[:, :, a, b], optimize=True)
    out = Tensor(out_data, _prev=(x, K))

    def _bw(g):
        if x.requires_grad or x._prev:
            dx = np.zeros_like(x.data)
            for a in range(kh):
                for b in range(kw):
                    dx += np.einsum(
                        "nohw,co->nchw",
                        g[:, :, a:a + sh * h:sh, b:b + sw * w:sw],
                        K.data[:, :, a, b], optimize=True)
            x._accumulate(dx)
        if K.requires_grad or K._prev:
            dK = np.zeros_like(K.data)
            for a in range(kh):
                for b in range(kw):
                    dK[:, :, a, b] = np.einsum(
                        "nchw,nohw->co", x.data,
                        g[:, :, a:a + sh * h:sh, b:b + sw * w:sw],
                        optimize=True)
            K._accumulate(dK)
    out._backward = _bw
    return out


# ----------------------------------------------------------------------
# pooling
# ----------------------------------------------------------------------

def _maxpoolnd(x: Tensor, window, stride, nsp: int) -> Tensor:
    win_sp = _pair(window, nsp)
    strides = _pair(stride, nsp)
    names = "dhw"[-nsp:]
    outsp = tuple(_conv_extent(x.shape[2 + i], win_sp[i], strides[i], 0,
                               names[i]) for i in range(nsp))
    win = sliding_window_view(x.data, win_sp, axis=tuple(range(2, 2 + nsp)))
    win = win[(slice(None), slice(None))
              + tuple(slice(None, None, s) for s in strides)]
    flat = win.reshape(win.shape[:2 + nsp] + (-1,))
    arg = flat.argmax(axis=-1)
    out = Tensor(flat.max(axis=-1), _prev=(x,))

    def _bw(g):
        dx = np.zeros_like(x.data)
        offs = np.unravel_index(arg.ravel(), win_sp)
        lead = np.meshgrid(*[np.arange(s) for s in out.shape], indexing="ij")
        idx = [m.ravel() for m in lead[:2]]
        for i in range(nsp):
            idx.append(lead[2 + i].ravel() * strides[i] + offs[i])
        np.add.at(dx, tuple(idx), g.ravel())
        x._accumulate(dx)
    out._backward = _bw
    return out


def maxpool2d(x: Tensor, window, stride=None) -> Tensor:
    return _maxpoolnd(x, window, stride if stride is not None else window, 2)


def maxpool3d(x: Tensor, window, stride=None) -> Tensor:
    return _maxpoolnd(x, window, stride if stride is not None else window, 3)


# ----------------------------------------------------------------------
# normalization / activations
# ----------------------------------------------------------------------

def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor,
              running_mean: np.ndarray, running_var: np.ndarray,
              train: bool, momentum: float = 0.1,
              eps: float = 1e-5) -> Tensor:
    """Batch normalization over all axes except the channel axis (1)."""
    axes = (0,) + tuple(range(2, x.data.ndim))
    shape = (1, x.shape[1]) + (1,) * (x.data.ndim - 2)
    if train:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= (1.0 - momentum)
        running_mean += momentum * mean
        running_var *= (1.0 - momentum)
        running_var += momentum * var
    else:
        mean, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(shape)) * inv.reshape(shape)
    out = Tensor(xhat * gamma.data.reshape(shape) + beta.data.reshape(shape),
                 _prev=(x, gamma, beta))
    m = float(np.prod([x.shape[a] for a in axes]))

    def _bw(g):
        if gamma.requires_grad or gamma._prev:
            gamma._accumulate((g * xhat).sum(axis=axes))
        if beta.requires_grad or beta._prev:
            beta._accumulate(g.sum(axis=axes))
        if x.requires_grad or x._prev:
            gx = g * gamma.data.reshape(shape)
            if train:
                s1 = gx.sum(axis=axes, keepdims=True)
                s2 = (gx * xhat).sum(axis=axes, keepdims=True)
                dx = (gx - s1 / m - xhat * s2 / m) * inv.reshape(shape)
            else:
                dx = gx * inv.reshape(shape)
            x._accumulate(dx)
    out._backward = _bw
    return out


def prelu(x: Tensor, a: Tensor) -> Tensor:
    """Parametric ReLU with a single learnable slope ``a``."""
    mask = x.data > 0.0
    out = Tensor(np.where(mask, x.data, a.data * x.data), _prev=(x, a))

    def _bw(g):
        if x.requires_grad or x._prev:
            x._accumulate(g * np.where(mask, 1.0, a.data))
        if a.requires_grad or a._prev:
            a._accumulate(np.array((g * np.where(mask, 0.0, x.data)).sum()))
    out._backward = _bw
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, _prev=(x,))

    def _bw(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        x._accumulate(y * (g - dot))
    out._backward = _bw
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = Tensor(z - lse, _prev=(x,))
    y = np.exp(out.data)

    def _bw(g):
        x._accumulate(g - y * g.sum(axis=axis, keepdims=True))
    out._backward = _bw
    return out


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax."""
    ls = log_softmax(logits, axis=-1)
    n = logits.shape[0]
    picked = ls[np.arange(n), np.asarray(labels, dtype=np.intp)]
    return -picked.mean()


# ----------------------------------------------------------------------
# losses
# ----------------------------------------------------------------------

def smooth_l1(pred: Tensor, target: Tensor, beta: float = 1.0) -> Tensor:
    """Huber-style loss, mean over all elements."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(
            f"smooth_l1 shapes differ: {pred.shape} vs {target.shape}")
    d = pred.data - target.data
    quad = np.abs(d) < beta
    vals = np.where(quad, 0.5 * d * d / beta, np.abs(d) - 0.5 * beta)
    out = Tensor(vals.mean(), _prev=(pred, target))
    n = float(d.size)

    def _bw(g):
        dd = np.where(quad, d / beta, np.sign(d)) * (g / n)
        if pred.requires_grad or pred._prev:
            pred._accumulate(dd)
        if target.requires_grad or target._prev:
            target._accumulate(-dd)
    out._backward = _bw
    return out


def kl_standard_normal(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, 1)), summed over latent dims, batch mean."""
    if mu.shape != logvar.shape:
        raise ShapeMismatchError(
            f"kl shapes differ: {mu.shape} vs {logvar.shape}")
    batch = mu.shape[0] if mu.data.ndim > 1 else 1
    term = (1.0 + logvar - mu * mu - logvar.exp()) * (-0.5)
    return term.sum() * (1.0 / float(batch))


_BLUR_1D = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _blur(x: Tensor, gain: float = 1.0) -> Tensor:
    """Separable 5-tap binomial blur on (N, C, H, W), zero-padded."""
    c = x.shape[1]
    kv = np.zeros((c, c, 5, 1))
    kh = np.zeros((c, c, 1, 5))
    for i in range(c):
        kv[i, i, :, 0] = _BLUR_1D * gain
        kh[i, i, 0, :] = _BLUR_1D
    return conv2d(conv2d(x, Tensor(kv), padding="same"), Tensor(kh),
                  padding="same")


def _downsample2(x: Tensor) -> Tensor:
    out = Tensor(x.data[:, :, ::2, ::2], _prev=(x,))

    def _bw(g):
        dx = np.zeros_like(x.data)
        dx[:, :, ::2, ::2] = g
        x._accumulate(dx)
    out._backward = _bw
    return out


def _upsample2(x: Tensor) -> Tensor:
    """Zero-stuffing x2 followed by a 4x-gain blur (pyramid expand)."""
    n, c, h, w = x.shape
    stuffed = np.zeros((n, c, 2 * h, 2 * w), dtype=np.float64)
    stuffed[:, :, ::2, ::2] = x.data
    out_pre = Tensor(stuffed, _prev=(x,))

    def _bw(g):
        x._accumulate(g[:, :, ::2, ::2])
    out_pre._backward = _bw
    return _blur(out_pre, gain=4.0)


def laplacian_pyramid_loss(pred: Tensor, target: Tensor,
                           levels: int = 4, beta: float = 1.0) -> Tensor:
    """Band-wise smooth-L1 over a Laplacian pyramid, finest band weight 1.

    Band weights grow linearly with the level: weight of band ``l`` is
    ``l + 1``, so coarser (lower frequency) bands count more after the
    residual; the finest detail band has weight 1.
    """
    if pred.shape != target.shape:
        raise ShapeMismatchError(
            f"pyramid loss shapes differ: {pred.shape} vs {target.shape}")
    side = pred.shape[-1]
    if pred.shape[-2] != side:
        raise ValueError("laplacian_pyramid_loss expects square images")
    if side % (2 ** (levels - 1)) != 0:
        raise ValueError(
            f"image side {side} not divisible by 2^{levels - 1}")

    def bands(img: Tensor) -> list:
        gauss = [img]
        for _ in range(levels - 1):
            gauss.append(_downsample2(_blur(gauss[-1])))
        bs = []
        for lvl in range(levels - 1):
            bs.append(gauss[lvl] - _upsample2(gauss[lvl + 1]))
        bs.append(gauss[-1])
        return bs

    pb = bands(pred)
    tb = bands(target)
    total = None
    for lvl in range(levels):
        term = smooth_l1(pb[lvl], tb[lvl], beta=beta) * float(lvl + 1)
        total = term if total is None else total + term
    return total


# ----------------------------------------------------------------------
# layers
# ----------------------------------------------------------------------

class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 name: str = "dense"):
        self.W = Parameter(kaiming_uniform((n_in, n_out), n_in, rng),
                           f"{name}.W")
        self.b = Parameter(np.zeros(n_out), f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W.tensor + self.b.tensor


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel, rng: np.random.Generator,
                 stride=1, padding=0, name: str = "conv2d"):
        kh, kw = _pair(kernel, 2)
        fan_in = c_in * kh * kw
        self.K = Parameter(kaiming_uniform((c_out, c_in, kh, kw), fan_in, rng),
                           f"{name}.K")
        self.b = Parameter(np.zeros(c_out), f"{name}.b")
        self.stride, self.padding = stride, padding

    def __call__(self, x: Tensor) -> Tensor:
        y = conv2d(x, self.K.tensor, self.stride, self.padding)
        return y + self.b.tensor.reshape(1, -1, 1, 1)


class Conv3d(Module):
    def __init__(self, c_in: int, c_out: int, kernel, rng: np.random.Generator,
                 stride=1, padding=0, name: str = "conv3d"):
        kd, kh, kw = _pair(kernel, 3)
        fan_in = c_in * kd * kh * kw
        self.K = Parameter(
            kaiming_uniform((c_out, c_in, kd, kh, kw), fan_in, rng),
            f"{name}.K")
        self.b = Parameter(np.zeros(c_out), f"{name}.b")
        self.stride, self.padding = stride, padding

    def __call__(self, x: Tensor) -> Tensor:
        y = conv3d(x, self.K.tensor, self.stride, self.padding)
        return y + self.b.tensor.reshape(1, -1, 1, 1, 1)


class ConvTranspose2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel, rng: np.random.Generator,
                 stride=1, name: str = "convT2d"):
        kh, kw = _pair(kernel, 2)
        fan_in = c_in * kh * kw
        self.K = Parameter(
            kaiming_uniform((c_in, c_out, kh, kw), fan_in, rng), f"{name}.K")
        self.b = Parameter(np.zeros(c_out), f"{name}.b")
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        y = transposed_conv2d(x, self.K.tensor, self.stride)
        return y + self.b.tensor.reshape(1, -1, 1, 1)


class BatchNorm(Module):
    def __init__(self, channels: int, name: str = "bn",
                 momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(channels), f"{name}.gamma")
        self.beta = Parameter(np.zeros(channels), f"{name}.beta")
        self.momentum, self.eps = momentum, eps
        self._buffers = {
            f"{name}.running_mean": np.zeros(channels),
            f"{name}.running_var": np.ones(channels),
        }
        self._rm = self._buffers[f"{name}.running_mean"]
        self._rv = self._buffers[f"{name}.running_var"]

    def __call__(self, x: Tensor, train: bool = True) -> Tensor:
        return batchnorm(x, self.gamma.tensor, self.beta.tensor,
                         self._rm, self._rv, train, self.momentum, self.eps)


class PReLU(Module):
    def __init__(self, name: str = "prelu", init: float = 0.25):
        self.a = Parameter(np.array(init), f"{name}.a")

    def __call__(self, x: Tensor) -> Tensor:
        return prelu(x, self.a.tensor)


# ----------------------------------------------------------------------
# optimizer
# ----------------------------------------------------------------------

class Adam:
    """Standard Adam with bias correction over a fixed parameter registry."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = [p for p in params if p.trainable]
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise UnregisteredParameterError(
                f"duplicate parameter names in registry: {dup}")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p in self.params:
            if p.name not in self.m:
                raise UnregisteredParameterError(p.name)
            g = p.tensor.grad
            if g is None:
                continue
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.tensor.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


# ----------------------------------------------------------------------
# gradient checking
# ----------------------------------------------------------------------

def grad_check(f, x: Tensor, h: float = 1e-5,
               max_coords: Optional[int] = None,
               rng: Optional[np.random.Generator] = None) -> float:
    """Compare backward() gradients of scalar ``f(x)`` to central differences.

    Returns the worst relative error over the checked coordinates.  With
    ``max_coords`` set, a random subset of coordinates is probed, which keeps
    whole-model checks tractable.
    """
    x.zero_grad()
    loss = f(x)
    loss.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    n = x.data.size
    if max_coords is not None and max_coords < n:
        if rng is None:
            rng = np.random.default_rng(0)
        coords = rng.choice(n, size=max_coords, replace=False)
    else:
        coords = np.arange(n)

    flat = x.data.reshape(-1)
    aflat = analytic.reshape(-1)
    worst = 0.0
    for c in coords:
        orig = flat[c]
        flat[c] = orig + h
        fp = float(f(x).data)
        flat[c] = orig - h
        fm = float(f(x).data)
        flat[c] = orig
        numeric = (fp - fm) / (2.0 * h)
        a = aflat[c]
        denom = max(abs(a), abs(numeric))
        if denom < 1e-7:
            continue
        worst = max(worst, abs(a - numeric) / denom)
    return worst


# ----------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------

_CKPT_MAGIC = b"GASTNN1"


def save_checkpoint(path, state: dict) -> None:
    """Write a named-tensor archive (little-endian, float64)."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(state)))
        for name in sorted(state):
            arr = np.asarray(state[name], dtype="<f8")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            for e in arr.shape:
                fh.write(struct.pack("<I", e))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint")
        (count,) = struct.unpack("<I", fh.read(4))
        state = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape)
            state[name] = np.array(data)
    return state
