"""Independent reference implementations used by the tests.

Everything here is deliberately written the slow, obvious way (explicit
loops, textbook formulas) and shares no code with the package, so a bug
in a fast kernel cannot hide in its own test.
"""

import numpy as np
from scipy.special import erf

from wavemix.tensor import Parameter


def gelu_ref(x):
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def softmax_ref(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm_ref(x, gain, bias, eps=1e-5, axis=-3):
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=axis, keepdims=True)
    var = x.var(axis=axis, keepdims=True)
    xhat = (x - mu) / np.sqrt(var + eps)
    shape = [1] * x.ndim
    shape[axis] = x.shape[axis]
    return xhat * np.reshape(gain, shape) + np.reshape(bias, shape)


def cross_entropy_ref(logits, labels):
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(labels)
    total = 0.0
    for row, lab in zip(logits, labels):
        p = softmax_ref(row)
        total += -np.log(p[int(lab)])
    return total / len(labels)


def conv2d_loops(x, w, groups=1):
    """Quintuple-loop same-padded cross-correlation, one group at a time."""
    n, c_in, H, W = x.shape
    c_out, c_in_g, k, _ = w.shape
    pad = k // 2
    out = np.zeros((n, c_out, H, W), dtype=np.float64)
    per_g_out = c_out // groups
    xp = np.zeros((n, c_in, H + 2 * pad, W + 2 * pad))
    xp[:, :, pad:pad + H, pad:pad + W] = x
    for b in range(n):
        for co in range(c_out):
            g = co // per_g_out
            for ci in range(c_in_g):
                cin = g * c_in_g + ci
                for i in range(H):
                    for j in range(W):
                        patch = xp[b, cin, i:i + k, j:j + k]
                        out[b, co, i, j] += float((patch * w[co, ci]).sum())
    return out


def haar_blocks(x):
    """Per-2x2-block Haar arithmetic: returns (ll, lh, hl, hh).

    For block [[a, b], [c, d]] (row index = height): ll=(a+b+c+d)/2,
    lh=(a+b-c-d)/2 (smooth across width, detail across height),
    hl=(a-b+c-d)/2, hh=(a-b-c+d)/2.
    """
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return ((a + b + c + d) / 2, (a + b - c - d) / 2,
            (a - b + c - d) / 2, (a - b - c + d) / 2)


def dft2_loops(x):
    """Textbook double-loop 2D DFT (unnormalized forward)."""
    x = np.asarray(x, dtype=np.complex128)
    h, w = x.shape[-2:]
    out = np.zeros_like(x)
    iy = np.arange(h)
    ix = np.arange(w)
    for u in range(h):
        for v in range(w):
            phase = np.exp(-2j * np.pi * (u * iy[:, None] / h + v * ix[None, :] / w))
            out[..., u, v] = (x * phase).sum(axis=(-2, -1))
    return out


def attention_loops(seq, w_qkv, w_out, heads):
    """Per-query-key loop attention on an (n, d) sequence."""
    n, d = seq.shape
    dh = d // heads
    q = seq @ w_qkv[:, :d]
    k = seq @ w_qkv[:, d:2 * d]
    v = seq @ w_qkv[:, 2 * d:]
    mixed = np.zeros((n, d))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(n):
            scores = np.empty(n)
            for j in range(n):
                scores[j] = float(q[i, sl] @ k[j, sl]) / np.sqrt(dh)
            weights = softmax_ref(scores)
            mixed[i, sl] = sum(weights[j] * v[j, sl] for j in range(n))
    return mixed @ w_out


def grad_check(fn, arrays, step=1e-5, rtol=1e-4, atol=1e-7, seed=0, max_probes=None):
    """Central-difference check of reverse-mode grads of scalar ``fn``.

    Probes every element unless ``max_probes`` caps it (seeded choice).
    """
    tensors = [Parameter(np.asarray(a, dtype=np.float64)) for a in arrays]
    fn(*tensors).backward()
    rng = np.random.default_rng(seed)
    for t in tensors:
        flat = t.data.ravel()
        grad = t.grad.ravel()
        idx = np.arange(flat.size)
        if max_probes is not None and flat.size > max_probes:
            idx = rng.choice(flat.size, size=max_probes, replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + step
            up = float(fn(*tensors).item())
            flat[i] = keep - step
            down = float(fn(*tensors).item())
            flat[i] = keep
            fd = (up - down) / (2 * step)
            a = grad[i]
            if abs(a) < 1e-4:
                assert abs(a - fd) <= max(atol, 2e-6 * max(1.0, abs(fd))), (
                    f"element {i}: analytic {a}, fd {fd}")
            else:
                assert abs(a - fd) / abs(a) <= rtol, (
                    f"element {i}: analytic {a}, fd {fd}")


def adam_scalar_ref(g_seq, lr, beta1=0.9, beta2=0.999, eps=1e-8, x0=0.0, wd=0.0):
    """Reference scalar Adam with decoupled decay, one value per step."""
    m = v = 0.0
    x = x0
    out = []
    for t, g in enumerate(g_seq, start=1):
        x -= lr * wd * x
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        x -= lr * mhat / (np.sqrt(vhat) + eps)
        out.append(x)
    return out
