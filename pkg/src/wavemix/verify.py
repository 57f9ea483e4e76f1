"""Executable invariant suites for every module, behind ``wavemix verify``.

Each suite re-derives expected values through independent routes (finite
differences, dense naive transforms, hand-worked block arithmetic)
rather than re-calling the code under test, so a defect in a kernel
makes its invariant fail instead of self-confirming.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import analysis, config as config_mod, data as data_mod
from . import fourier, mixers, model as model_mod, ops, training, wavelets
from .counting import FLOPS_PER_MULTADD
from .errors import ConfigError, NumericalError, WavemixError
from .tensor import Parameter, Tensor, no_grad


@dataclass
class CheckResult:
    module: str
    name: str
    ok: bool
    detail: str = ""


def provenance_hash() -> str:
    """Content hash of the code-visible constants reports depend on."""
    payload = (
        f"haar_low={tuple(wavelets.HAAR.low)!r};"
        f"haar_high={tuple(wavelets.HAAR.high)!r};"
        f"flops_per_multadd={FLOPS_PER_MULTADD}"
    )
    return hashlib.sha256(payload.encode("ascii")).hexdigest()


# -- finite-difference gradient checking -----------------------------------


def fd_check(fn, arrays, step: float = 1e-5, rtol: float = 1e-4, atol: float = 1e-7,
             max_probes: int = 24, seed: int = 0):
    """Compare reverse-mode grads of scalar ``fn(*tensors)`` with central
    finite differences.

    Large inputs are probed at a random subset of positions. Relative
    error must stay within ``rtol`` except where the analytic gradient
    is below 1e-4, where absolute error within ``atol`` is accepted.
    """
    rng = np.random.default_rng(seed)
    tensors = [Parameter(np.array(a, dtype=np.float64)) for a in arrays]
    loss = fn(*tensors)
    loss.backward()
    for t in tensors:
        flat = t.data.ravel()
        grad = t.grad.ravel()
        idx = np.arange(flat.size)
        if flat.size > max_probes:
            idx = rng.choice(flat.size, size=max_probes, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = float(fn(*tensors).item())
            flat[i] = orig - step
            down = float(fn(*tensors).item())
            flat[i] = orig
            fd = (up - down) / (2 * step)
            a = grad[i]
            err = abs(a - fd)
            if abs(a) < 1e-4:
                assert err <= max(atol, 2e-6 * max(1.0, abs(fd))), (
                    f"grad[{i}] analytic {a} vs fd {fd} (abs err {err})"
                )
            else:
                assert err / abs(a) <= rtol, (
                    f"grad[{i}] analytic {a} vs fd {fd} (rel err {err / abs(a)})"
                )


def _weighted(fn, seed=1):
    """Wrap a tensor-valued fn into a scalar loss with fixed random weights."""
    state = {}

    def loss(*tensors):
        out = fn(*tensors)
        if "w" not in state:
            state["w"] = Tensor(np.random.default_rng(seed).normal(size=out.shape))
        return ops.sum_(ops.mul(out, state["w"]))

    return loss


# -- naive oracles ----------------------------------------------------------


def naive_attention(x_seq: np.ndarray, w_qkv: np.ndarray, w_out: np.ndarray,
                    heads: int) -> np.ndarray:
    """Triple-loop reference attention over an (n, d) token sequence."""
    n, d = x_seq.shape
    dh = d // heads
    qkv = x_seq @ w_qkv
    q, k, v = qkv[:, :d], qkv[:, d:2 * d], qkv[:, 2 * d:]
    out = np.zeros((n, d))
    for h in range(heads):
        qs = q[:, h * dh:(h + 1) * dh]
        ks = k[:, h * dh:(h + 1) * dh]
        vs = v[:, h * dh:(h + 1) * dh]
        for i in range(n):
            scores = np.array([qs[i] @ ks[j] / np.sqrt(dh) for j in range(n)])
            scores -= scores.max()
            w = np.exp(scores)
            w /= w.sum()
            for j in range(n):
                out[i, h * dh:(h + 1) * dh] += w[j] * vs[j]
    return out @ w_out


def naive_dft2(x: np.ndarray) -> np.ndarray:
    """Double-loop dense 2D DFT (unnormalized forward)."""
    h, w = x.shape[-2:]
    out = np.zeros(x.shape, dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            ph = np.exp(-2j * np.pi * (u * np.arange(h)[:, None] / h
                                       + v * np.arange(w)[None, :] / w))
            out[..., u, v] = (x * ph).sum(axis=(-2, -1))
    return out


def _gelu_ref(x):
    return np.asarray(x, dtype=np.float64) * ndtr(np.asarray(x, dtype=np.float64))


# -- suite plumbing ----------------------------------------------------------


def _run_checks(module: str, checks) -> list:
    results = []
    for name, fn in checks:
        try:
            fn()
            results.append(CheckResult(module, name, True))
        except AssertionError as exc:
            results.append(CheckResult(module, name, False, str(exc) or "assertion failed"))
        except WavemixError as exc:
            results.append(CheckResult(module, name, False, f"{type(exc).__name__}: {exc}"))
        except Exception as exc:  # pragma: no cover - defensive
            results.append(CheckResult(module, name, False, f"{type(exc).__name__}: {exc}"))
    return results


# -- tensor-core -------------------------------------------------------------


def _suite_tensor_core() -> list:
    rng = np.random.default_rng(7)

    def grad_elementwise():
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4,))
        fd_check(_weighted(lambda x, y: ops.add(x, y)), [a, b])
        fd_check(_weighted(lambda x, y: ops.sub(x, y)), [a, a + 1])
        fd_check(_weighted(lambda x, y: ops.mul(x, y)), [a, b])
        fd_check(_weighted(lambda x: ops.scale(x, 1.7)), [a])

    def grad_matmul():
        fd_check(_weighted(lambda x, y: ops.matmul(x, y)),
                 [rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))])
        fd_check(_weighted(lambda x, y: ops.matmul(x, y)),
                 [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))])

    def grad_shape_ops():
        a = rng.normal(size=(2, 3, 4))
        fd_check(_weighted(lambda x: ops.reshape(x, (6, 4))), [a])
        fd_check(_weighted(lambda x: ops.moveaxis(x, 0, 2)), [a])
        fd_check(_weighted(lambda x: ops.transpose(x, (1, 2, 0))), [a])
        fd_check(_weighted(lambda x: ops.swapaxes(x, 0, 1)), [a])
        fd_check(_weighted(lambda x: ops.getitem(x, (slice(0, 2), slice(None, None, 2)))),
                 [rng.normal(size=(4, 6))])
        fd_check(_weighted(lambda x, y: ops.concat((x, y), axis=1)),
                 [rng.normal(size=(2, 3)), rng.normal(size=(2, 2))])

    def grad_reductions():
        a = rng.normal(size=(3, 4, 2))
        fd_check(_weighted(lambda x: ops.sum_(x, axis=1)), [a])
        fd_check(_weighted(lambda x: ops.sum_(x, axis=1, keepdims=True)), [a])
        fd_check(_weighted(lambda x: ops.mean(x, axis=(0, 2))), [a])
        fd_check(lambda x: ops.mean(x), [a])

    def grad_nonlinear():
        fd_check(_weighted(ops.gelu), [rng.normal(size=16)])
        fd_check(_weighted(lambda x: ops.softmax(x, axis=-1)), [rng.normal(size=(3, 5))])
        fd_check(_weighted(lambda x, g, b: ops.layer_norm(x, g, b)),
                 [rng.normal(size=(2, 3, 4, 4)), rng.normal(size=3), rng.normal(size=3)])
        labels = np.array([1, 0, 3, 2])
        fd_check(lambda x: ops.cross_entropy(x, labels), [rng.normal(size=(4, 6))])

    def grad_conv():
        fd_check(_weighted(lambda x, w: ops.grouped_conv2d(x, w, 1)),
                 [rng.normal(size=(1, 3, 4, 4)), rng.normal(size=(3, 3, 3, 3))])
        fd_check(_weighted(lambda x, w: ops.grouped_conv2d(x, w, 2)),
                 [rng.normal(size=(2, 4, 4, 4)), rng.normal(size=(4, 2, 3, 3))])
        fd_check(_weighted(lambda x, w: ops.grouped_conv2d(x, w, 4)),
                 [rng.normal(size=(1, 4, 3, 3)), rng.normal(size=(4, 1, 1, 1))])

    def conv_groups_bitwise():
        x = rng.normal(size=(2, 6, 5, 5))
        w = rng.normal(size=(6, 2, 3, 3))
        grouped = ops.conv2d_raw(x, w, 3)
        for gi in range(3):
            dense = ops.conv2d_raw(
                np.ascontiguousarray(x[:, gi * 2:(gi + 1) * 2]),
                np.ascontiguousarray(w[gi * 2:(gi + 1) * 2]), 1)
            assert np.array_equal(dense, grouped[:, gi * 2:(gi + 1) * 2]), (
                f"group {gi} differs from dense conv on its slice"
            )

    def conv_impulse():
        x = np.zeros((1, 1, 3, 3))
        x[0, 0, 1, 1] = 1.0
        w = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
        out = ops.grouped_conv2d(Tensor(x), Tensor(w), 1).data[0, 0]
        # Cross-correlating an impulse stamps the kernel rotated by 180 deg.
        expect = w[0, 0, ::-1, ::-1]
        assert np.allclose(out, expect, atol=1e-15), f"{out} vs {expect}"
        assert out[1, 1] == 5.0

    def softmax_props():
        x = rng.normal(size=(5, 7))
        y = ops.softmax(Tensor(x)).data
        assert np.abs(y.sum(axis=-1) - 1.0).max() <= 1e-12
        y2 = ops.softmax(Tensor(x + 123.456)).data
        assert np.abs(y - y2).max() <= 1e-12, "softmax not shift invariant"
        assert np.allclose(ops.softmax(Tensor(np.array([1000.0, 1000.0]))).data, [0.5, 0.5])

    def gelu_props():
        grid = np.linspace(0.0, 8.0, 8001)
        vals = ops.gelu(Tensor(grid)).data
        assert (np.diff(vals) >= 0).all(), "gelu not monotone for x >= 0"
        neg = np.linspace(-30.0, -1.0, 8001)
        nvals = ops.gelu(Tensor(neg)).data
        assert nvals.min() >= -0.2 and nvals.max() <= 0.0, "gelu tail must stay in [-0.2, 0]"
        assert abs(float(ops.gelu(Tensor(np.array(1.0))).item()) - _gelu_ref(1.0)) <= 1e-6
        assert float(ops.gelu(Tensor(np.array(0.0))).item()) == 0.0
        big = ops.gelu(Tensor(np.array(30.0))).item()
        assert abs(big - 30.0) <= 1e-12, "gelu must approach identity for large x"

    def layer_norm_props():
        x = rng.normal(size=(2, 6, 3, 3)) * 3 + 1
        g = np.ones(6)
        b = np.zeros(6)
        y = ops.layer_norm(Tensor(x), Tensor(g), Tensor(b), eps=1e-12).data
        assert np.abs(y.mean(axis=1)).max() <= 1e-10
        assert np.abs(y.var(axis=1) - 1.0).max() <= 1e-6
        tok = ops.layer_norm(Tensor(np.array([1.0, 2, 3]).reshape(3, 1, 1)),
                             Tensor(g[:3]), Tensor(b[:3]), eps=0.0).data.ravel()
        assert np.allclose(tok, [-np.sqrt(1.5), 0, np.sqrt(1.5)], atol=1e-9)

    def backward_contract():
        p = Parameter(np.array([1.0, 2.0, 3.0]))
        loss = ops.sum_(p)
        loss.backward()
        assert np.array_equal(p.grad, np.ones(3))
        loss2 = ops.sum_(ops.mul(p, p))
        loss2.backward()
        assert np.allclose(p.grad, 1.0 + 2.0 * p.data), "grads must accumulate"
        p.zero_grad()
        assert np.array_equal(p.grad, np.zeros(3))
        try:
            ops.mul(p, p).backward()
        except ValueError:
            pass
        else:
            raise AssertionError("backward on a non-scalar must raise")
        with no_grad():
            q = ops.mul(p, p)
        assert not q.requires_grad, "no_grad must not record the graph"

    return _run_checks("tensor-core", [
        ("grad-elementwise", grad_elementwise),
        ("grad-matmul", grad_matmul),
        ("grad-shape-ops", grad_shape_ops),
        ("grad-reductions", grad_reductions),
        ("grad-nonlinear", grad_nonlinear),
        ("grad-conv", grad_conv),
        ("conv-groups-bitwise", conv_groups_bitwise),
        ("conv-impulse-rot180", conv_impulse),
        ("softmax-sum-shift", softmax_props),
        ("gelu-monotone-exact", gelu_props),
        ("layer-norm-standardizes", layer_norm_props),
        ("backward-contract", backward_contract),
    ])


# -- transforms --------------------------------------------------------------


def _suite_transforms() -> list:
    def taps_orthonormal():
        r = np.array(wavelets.HAAR.low)
        s = np.array(wavelets.HAAR.high)
        assert abs(r @ r - 1) <= 1e-15 and abs(s @ s - 1) <= 1e-15, "taps not unit norm"
        assert abs(r @ s) <= 1e-15, "taps not orthogonal"

    def hand_block():
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2)
        packed = wavelets.dwt2_raw(x)
        got = packed.reshape(4)
        assert np.allclose(got, [5.0, -2.0, -1.0, 0.0], atol=1e-12), f"subbands {got}"

    def constant_examples():
        c = np.ones((1, 2, 2))
        packed = wavelets.dwt2_raw(c)
        assert abs(packed[0, 0, 0] - 2.0) <= 1e-14, "constant LL gain must be 2"
        assert np.abs(packed[1:]).max() <= 1e-14, "details of constant must vanish"
        back = wavelets.idwt2_raw(np.array([2.0, 0, 0, 0]).reshape(4, 1, 1))
        assert np.allclose(back, np.ones((1, 2, 2)), atol=1e-14)

    def perfect_reconstruction():
        for seed in range(100):
            x = np.random.default_rng(seed).normal(size=(8, 16, 16))
            rec = wavelets.idwt2_raw(wavelets.dwt2_raw(x))
            assert np.abs(rec - x).max() <= 1e-10, f"PR failed at seed {seed}"

    def parseval():
        rng = np.random.default_rng(11)
        x = rng.normal(size=(3, 8, 8))
        sb = wavelets.decompose(Tensor(x), 2)
        total = float((sb.ll.data ** 2).sum())
        count = sb.ll.size
        for lh, hl, hh in sb.details:
            total += float((lh.data ** 2).sum() + (hl.data ** 2).sum() + (hh.data ** 2).sum())
            count += lh.size + hl.size + hh.size
        ref = float((x ** 2).sum())
        assert count == x.size, "subband element count must match input"
        assert abs(total - ref) <= 1e-12 * ref, f"energy {total} vs {ref}"

    def linearity():
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 4, 4))
        y = rng.normal(size=(2, 4, 4))
        lhs = wavelets.dwt2_raw(2.5 * x - 1.25 * y)
        rhs = 2.5 * wavelets.dwt2_raw(x) - 1.25 * wavelets.dwt2_raw(y)
        assert np.abs(lhs - rhs).max() <= 1e-12

    def counter_linearity():
        from .counting import count_multadds
        x1 = np.zeros((1, 8, 8))
        x2 = np.zeros((1, 8, 16))
        with count_multadds() as c1:
            wavelets.dwt2_raw(x1)
        with count_multadds() as c2:
            wavelets.dwt2_raw(x2)
        assert c2.multadds == 2 * c1.multadds, (
            f"doubling N changed count {c1.multadds} -> {c2.multadds}"
        )

    def multilevel_roundtrip():
        rng = np.random.default_rng(9)
        x = rng.normal(size=(2, 3, 8, 8))
        sb = wavelets.decompose(Tensor(x), 3)
        rec = wavelets.reconstruct(sb).data
        assert np.abs(rec - x).max() <= 1e-10

    def dft_examples():
        imp = np.zeros(4)
        imp[0] = 1.0
        assert np.allclose(fourier.fft(imp), np.ones(4), atol=1e-12)
        const = np.full((1, 4, 8), 2.5)
        spec = fourier.dft2(const)
        assert abs(spec[0, 0, 0] - 2.5 * 32) <= 1e-9
        spec[0, 0, 0] = 0
        assert np.abs(spec).max() <= 1e-9

    def dft_roundtrip():
        rng = np.random.default_rng(21)
        for shape in ((2, 8, 8), (1, 4, 16), (1, 6, 12)):
            x = rng.normal(size=shape)
            rec = fourier.idft2(fourier.dft2(x))
            assert np.abs(rec.real - x).max() <= 1e-9
            assert np.abs(rec.imag).max() <= 1e-9

    def fast_vs_naive():
        rng = np.random.default_rng(5)
        for hw in (8, 16):
            x = rng.normal(size=(2, hw, hw))
            fast = fourier.dft2(x)
            ref = naive_dft2(x)
            assert np.abs(fast - ref).max() <= 1e-9, f"fast DFT deviates at {hw}x{hw}"

    def odd_dims_error():
        try:
            wavelets.dwt2_raw(np.zeros((1, 3, 4)))
        except WavemixError:
            return
        raise AssertionError("odd height must be a shape error")

    return _run_checks("transforms", [
        ("haar-taps-orthonormal", taps_orthonormal),
        ("hand-block-5-m2-m1-0", hand_block),
        ("constant-image-examples", constant_examples),
        ("perfect-reconstruction-100-seeds", perfect_reconstruction),
        ("parseval-energy", parseval),
        ("linearity", linearity),
        ("counter-linear-in-n", counter_linearity),
        ("multilevel-roundtrip", multilevel_roundtrip),
        ("dft-impulse-constant", dft_examples),
        ("dft-roundtrip", dft_roundtrip),
        ("dft-fast-vs-naive", fast_vs_naive),
        ("odd-dims-hard-error", odd_dims_error),
    ])


# -- mixers ------------------------------------------------------------------


def _suite_mixers() -> list:
    rng = np.random.default_rng(13)

    def shapes_preserved():
        x = Tensor(rng.normal(size=(2, 8, 4, 4)))
        for kind in mixers.MIXER_KINDS:
            mx = mixers.build_mixer(kind, 8, 4, 4, np.random.default_rng(1))
            y = mx(x)
            assert y.shape == x.shape, f"{kind} changed shape to {y.shape}"

    def mwa_linearity():
        p = mixers.MwaParams(4, mixers.MwaConfig(levels=1), np.random.default_rng(2))
        p.w_skip1.data[...] = 0.0
        p.w_skip3.data[...] = 0.0
        p.activation = ops.identity
        x = rng.normal(size=(1, 4, 4, 4))
        y = rng.normal(size=(1, 4, 4, 4))
        a, b = 1.7, -0.6
        lhs = p(Tensor(a * x + b * y)).data
        rhs = a * p(Tensor(x)).data + b * p(Tensor(y)).data
        assert np.abs(lhs - rhs).max() <= 1e-11, "wavelet branch must be linear"

    def mwa_zero_cases():
        p = mixers.MwaParams(3, rng=np.random.default_rng(3))
        z = p(Tensor(np.zeros((1, 3, 4, 4)))).data
        assert np.abs(z).max() == 0.0, "zero input must map to zero"
        for w in p.parameters():
            w.data[...] = 0.0
        y = p(Tensor(rng.normal(size=(1, 3, 4, 4)))).data
        assert np.abs(y).max() == 0.0, "zero weights must map to zero"

    def mwa_hand_example():
        p = mixers.MwaParams(1, mixers.MwaConfig(k_w=1), np.random.default_rng(4))
        p.w_wave.data[...] = 1.0
        p.w_skip1.data[...] = 0.0
        p.w_skip3.data[...] = 0.0
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        got = p(Tensor(x)).data.ravel()
        ll, lh, hl, hh = _gelu_ref([5.0, -2.0, -1.0, 0.0])
        grid = 0.5 * np.array([ll + lh + hl + hh, ll + lh - hl - hh,
                               ll - lh + hl - hh, ll - lh - hl + hh])
        expect = _gelu_ref(grid)
        assert np.abs(got - expect).max() <= 1e-12, f"{got} vs {expect}"

    def sa_oracle():
        for n_side, d, heads, seed in ((2, 4, 1, 0), (2, 8, 2, 1), (2, 6, 3, 2), (1, 4, 4, 3)):
            p = mixers.SaParams(d, mixers.SaConfig(heads=heads), np.random.default_rng(seed))
            x = np.random.default_rng(seed + 50).normal(size=(1, d, n_side, 2))
            got = sa_forward_grid = p(Tensor(x)).data[0]
            seq = np.moveaxis(x[0], 0, -1).reshape(-1, d)
            ref = naive_attention(seq, p.w_qkv.data, p.w_out.data, heads)
            ref_grid = np.moveaxis(ref.reshape(n_side, 2, d), -1, 0)
            assert np.abs(got - ref_grid).max() <= 1e-12, "attention deviates from oracle"

    def sa_degenerate():
        p = mixers.SaParams(4, mixers.SaConfig(heads=2), np.random.default_rng(5))
        tok = rng.normal(size=(1, 4, 1, 1))
        y = p(Tensor(tok)).data.reshape(4)
        qkv = tok.reshape(1, 4) @ p.w_qkv.data
        expect = (qkv[:, 8:] @ p.w_out.data).reshape(4)
        assert np.abs(y - expect).max() <= 1e-12, "single token must attend to itself"
        two = np.concatenate([tok, tok], axis=-1)  # two identical tokens
        y2 = p(Tensor(two)).data
        assert np.abs(y2[..., 0] - y2[..., 1]).max() <= 1e-12

    def gfn_filters():
        d, h, w = 3, 4, 4
        p = mixers.GfnParams(d, h, w, rng=np.random.default_rng(6))
        x = rng.normal(size=(2, d, h, w))
        p.f_re.data[...] = 1.0
        p.f_im.data[...] = 0.0
        assert np.abs(p(Tensor(x)).data - x).max() <= 1e-9, "identity filter must pass through"
        p.f_re.data[...] = 0.0
        assert np.abs(p(Tensor(x)).data).max() <= 1e-12, "zero filter must block everything"
        p.f_re.data[:, 0, 0] = 1.0  # DC only
        y = p(Tensor(x)).data
        expect = np.broadcast_to(x.mean(axis=(-2, -1), keepdims=True), x.shape)
        assert np.abs(y - expect).max() <= 1e-9, "DC filter must broadcast the mean"

    def mixer_grads():
        p = mixers.MwaParams(4, mixers.MwaConfig(g_w=2, g1=2, g2=4, levels=2),
                             np.random.default_rng(7))
        fd_check(_weighted(lambda x, a, b, c: _with_weights(p, x, a, b, c)),
                 [rng.normal(size=(1, 4, 4, 4)) * 0.5,
                  p.w_wave.data.copy(), p.w_skip1.data.copy(), p.w_skip3.data.copy()])
        ps = mixers.SaParams(4, mixers.SaConfig(heads=2), np.random.default_rng(8))
        fd_check(_weighted(lambda x, a, b: _sa_with_weights(ps, x, a, b)),
                 [rng.normal(size=(1, 4, 2, 2)), ps.w_qkv.data.copy(), ps.w_out.data.copy()])
        pg = mixers.GfnParams(3, 4, 4, rng=np.random.default_rng(9))
        fd_check(_weighted(lambda x, a, b: fourier.spectral_filter(x, a, b)),
                 [rng.normal(size=(1, 3, 4, 4)), pg.f_re.data.copy(), pg.f_im.data.copy()])

    def _with_weights(p, x, a, b, c):
        p.w_wave, p.w_skip1, p.w_skip3 = a, b, c
        return p(x)

    def _sa_with_weights(p, x, a, b):
        p.w_qkv, p.w_out = a, b
        return p(x)

    def scaling_ratios():
        d = 8
        pm = mixers.MwaParams(d, rng=np.random.default_rng(10))
        m1 = analysis.count_mixer_multadds(pm, d, 4, 4)
        m2 = analysis.count_mixer_multadds(pm, d, 4, 8)
        assert m2 == 2 * m1, f"MWA multadds {m1} -> {m2}, expected exact 2x"
        psa = mixers.SaParams(d, mixers.SaConfig(heads=2), np.random.default_rng(11))
        s1 = analysis.count_mixer_multadds(psa, d, 4, 4)
        s2 = analysis.count_mixer_multadds(psa, d, 4, 8)
        assert s2 > 2 * s1, f"SA multadds {s1} -> {s2}, expected superlinear"
        pg = mixers.GfnParams(d, 4, 8, rng=np.random.default_rng(12))
        pg_small = mixers.GfnParams(d, 4, 4, rng=np.random.default_rng(12))
        g1 = analysis.count_mixer_multadds(pg_small, d, 4, 4)
        g2 = analysis.count_mixer_multadds(pg, d, 4, 8)
        assert 2 * g1 < g2 <= 2.6 * g1, f"GFN multadds {g1} -> {g2}, expected ~N log N"

    def arbitrary_length():
        p = mixers.MwaParams(4, rng=np.random.default_rng(13))
        for side in (8, 16, 32):
            y = p(Tensor(rng.normal(size=(1, 4, side, side))))
            assert y.shape == (1, 4, side, side)

    return _run_checks("mixers", [
        ("shape-preserved", shapes_preserved),
        ("mwa-linear-with-identity-act", mwa_linearity),
        ("mwa-zero-cases", mwa_zero_cases),
        ("mwa-hand-example", mwa_hand_example),
        ("sa-naive-oracle", sa_oracle),
        ("sa-degenerate-tokens", sa_degenerate),
        ("gfn-identity-zero-dc", gfn_filters),
        ("mixer-gradient-checks", mixer_grads),
        ("counted-scaling-ratios", scaling_ratios),
        ("mwa-arbitrary-grid", arbitrary_length),
    ])


# -- backbone ----------------------------------------------------------------


def _micro_cfg(mixer: str, **kw):
    base = dict(mixer=mixer, image_size=8, patch_size=4, dim=8, depth=1, classes=3,
                heads=2, seed=3)
    base.update(kw)
    return model_mod.ModelConfig(**base)


def _suite_backbone() -> list:
    rng = np.random.default_rng(17)

    def forward_deterministic():
        m = model_mod.VitModel(_micro_cfg("mwa"))
        x = rng.normal(size=(2, 3, 8, 8))
        a = m.forward(x).data
        b = m.forward(x).data
        assert np.array_equal(a, b), "repeated forward must be bit-identical"
        dup = np.stack([x[0], x[0]])
        y = m.forward(dup).data
        assert np.array_equal(y[0], y[1]), "identical inputs must give identical logits"

    def pluggability():
        others = {}
        for kind in mixers.MIXER_KINDS:
            m = model_mod.VitModel(_micro_cfg(kind, image_size=16, depth=2))
            br = analysis.count_params(m)
            non_mixer = {n: p.shape for n, p in m.named_parameters().items()
                         if ".mixer." not in n}
            others[kind] = (br.other, non_mixer)
        vals = list(others.values())
        assert vals[0] == vals[1] == vals[2], "non-mixer parameters must not depend on mixer"

    def end_to_end_grads():
        labels = np.array([0, 2])
        for kind in mixers.MIXER_KINDS:
            m = model_mod.VitModel(_micro_cfg(kind))
            x = rng.normal(size=(2, 3, 8, 8)) * 0.5

            def loss_of(xt):
                return ops.cross_entropy(m.forward(xt), labels)

            fd_check(loss_of, [x], max_probes=10, seed=kind == "sa")
            params = m.parameters()
            for p in params:
                p.zero_grad()
            loss = loss_of(Tensor(x))
            loss.backward()
            probe = np.random.default_rng(23)
            for p in params:
                flat = p.data.ravel()
                gflat = p.grad.ravel()
                for i in probe.choice(flat.size, size=min(3, flat.size), replace=False):
                    orig = flat[i]
                    flat[i] = orig + 1e-5
                    up = float(loss_of(Tensor(x)).item())
                    flat[i] = orig - 1e-5
                    down = float(loss_of(Tensor(x)).item())
                    flat[i] = orig
                    fd = (up - down) / 2e-5
                    a = gflat[i]
                    if abs(a) < 1e-4:
                        assert abs(a - fd) <= 5e-7, f"{kind} {p.name}[{i}]: {a} vs {fd}"
                    else:
                        assert abs(a - fd) / abs(a) <= 1e-4, f"{kind} {p.name}[{i}]: {a} vs {fd}"

    def depth_zero():
        m = model_mod.VitModel(_micro_cfg("mwa", depth=0))
        x = rng.normal(size=(1, 3, 8, 8))
        got = m.forward(x).data
        grid = m.embed(Tensor(np.asarray(x))).data
        normed = ops.layer_norm(Tensor(grid), Tensor(m.norm_gain.data),
                                Tensor(m.norm_bias.data)).data
        pooled = normed.mean(axis=(-2, -1))
        expect = pooled @ m.head_w.data + m.head_b.data
        assert np.abs(got - expect).max() <= 1e-12

    def mwa_flops_linear_in_grid():
        m8 = model_mod.VitModel(_micro_cfg("mwa", image_size=32, dim=16, depth=1))
        m16 = model_mod.VitModel(_micro_cfg("mwa", image_size=64, dim=16, depth=1))
        head = lambda m: m.cfg.classes * m.cfg.dim
        f8 = analysis.count_model_multadds(m8) - head(m8)
        f16 = analysis.count_model_multadds(m16) - head(m16)
        assert f16 == 4 * f8, f"grid 8->16 quadruples N but multadds went {f8} -> {f16}"

    def parameter_bands():
        bands = {"mwa": (16e6, 17e6), "gfn": (15e6, 15e6), "sa": (21e6, 21e6)}
        for kind, (lo, hi) in bands.items():
            m = model_mod.VitModel(analysis.vits4_config(kind, classes=100, dtype="float32"))
            total = analysis.count_params(m).total
            assert 0.9 * lo <= total <= 1.1 * hi, (
                f"{kind} ViT-S/4 has {total / 1e6:.2f}M params, outside band"
            )
            del m

    def checkpoint_roundtrip():
        m = model_mod.VitModel(_micro_cfg("gfn"))
        state = m.state_dict()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "ck.wvmx")
            model_mod.save_checkpoint(path, state)
            back = model_mod.load_checkpoint(path)
            assert set(back) == set(state)
            for k in state:
                assert np.array_equal(back[k], state[k]), f"checkpoint altered {k}"

    return _run_checks("backbone", [
        ("forward-deterministic", forward_deterministic),
        ("mixer-pluggability", pluggability),
        ("end-to-end-gradients", end_to_end_grads),
        ("depth-zero-degenerate", depth_zero),
        ("mwa-flops-linear-in-grid", mwa_flops_linear_in_grid),
        ("vits4-parameter-bands", parameter_bands),
        ("checkpoint-roundtrip", checkpoint_roundtrip),
    ])


# -- data-io -----------------------------------------------------------------


def _suite_data_io() -> list:
    def roundtrip():
        rng = np.random.default_rng(31)
        images = rng.integers(0, 256, size=(7, 3, 32, 32)).astype(np.uint8)
        labels = rng.integers(0, 10, size=7).astype(np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "batch.bin")
            data_mod.write_cifar_binary(path, images, labels)
            assert os.path.getsize(path) == 7 * 3073
            lab, img = data_mod.read_cifar_binary(path, 1)
            assert np.array_equal(lab[:, 0], labels) and np.array_equal(img, images)

    def record_arithmetic():
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "batch.bin")
            images = np.zeros((4, 3, 32, 32), dtype=np.uint8)
            data_mod.write_cifar_binary(path, images, np.zeros(4, dtype=np.uint8))
            lab, img = data_mod.read_cifar_binary(path, 1)
            assert img.dtype == np.uint8 and (img == 0).all()
            with open(path, "ab") as fh:
                fh.write(b"\x00" * 100)  # partial record
            try:
                data_mod.read_cifar_binary(path, 1)
            except WavemixError:
                return
            raise AssertionError("truncated file must be a data error")

    def bad_label():
        with tempfile.TemporaryDirectory() as tmp:
            base = os.path.join(tmp, "cifar-10-batches-bin")
            os.makedirs(base)
            images = np.zeros((2, 3, 32, 32), dtype=np.uint8)
            for i in range(1, 6):
                data_mod.write_cifar_binary(os.path.join(base, f"data_batch_{i}.bin"),
                                            images, np.array([200, 0], dtype=np.uint8))
            data_mod.write_cifar_binary(os.path.join(base, "test_batch.bin"),
                                        images, np.zeros(2, dtype=np.uint8))
            try:
                data_mod.load_cifar10(tmp)
            except WavemixError as exc:
                assert "200" in str(exc) and "record 0" in str(exc), str(exc)
                return
            raise AssertionError("label 200 must be a format error")

    def shuffle_properties():
        a = data_mod.epoch_order(100, seed=5, epoch=0)
        b = data_mod.epoch_order(100, seed=5, epoch=0)
        c = data_mod.epoch_order(100, seed=5, epoch=1)
        assert np.array_equal(a, b), "same (seed, epoch) must reproduce"
        assert not np.array_equal(a, c), "different epochs must differ"

    def synthetic_determinism():
        x1, y1 = data_mod.synthetic_classification(16, classes=4, seed=7)
        x2, y2 = data_mod.synthetic_classification(16, classes=4, seed=7)
        assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
        assert (np.bincount(y1, minlength=4) == 4).all(), "labels must be balanced"
        assert x1.min() >= 0.0 and x1.max() <= 1.0

    def normalization_no_leakage():
        ds = data_mod.load_synthetic(seed=1, train_n=64, test_n=32)
        raw_test = ds.test_x.copy()
        train_mean = ds.train_x.mean(axis=(0, 2, 3))
        train_std = ds.train_x.std(axis=(0, 2, 3))
        data_mod.normalize_(ds)
        expect = (raw_test - train_mean[None, :, None, None]) / train_std[None, :, None, None]
        assert np.allclose(ds.test_x, expect, atol=1e-12), "test must use train statistics"
        assert np.abs(ds.train_x.mean(axis=(0, 2, 3))).max() <= 1e-10

    def subset_pure():
        d1 = data_mod.load_dataset("synthetic", seed=9, subset=20)
        d2 = data_mod.load_dataset("synthetic", seed=9, subset=20)
        assert np.array_equal(d1.train_x, d2.train_x)
        assert d1.train_x.shape[0] == 20 and d1.test_x.shape[0] == 4

    return _run_checks("data-io", [
        ("binary-roundtrip", roundtrip),
        ("record-arithmetic-and-truncation", record_arithmetic),
        ("label-range-validated", bad_label),
        ("shuffle-pure-in-seed-epoch", shuffle_properties),
        ("synthetic-deterministic-balanced", synthetic_determinism),
        ("normalize-train-stats-only", normalization_no_leakage),
        ("subset-pure-in-seed", subset_pure),
    ])


# -- training ----------------------------------------------------------------


def _suite_training() -> list:
    def schedule():
        cfg = training.TrainConfig(epochs=305, warmup_epochs=5, base_lr=5e-4, min_lr=1e-5)
        assert abs(training.lr_at(cfg, 2) - 3e-4) <= 1e-18
        assert abs(training.lr_at(cfg, 4) - 5e-4) <= 1e-18
        assert abs(training.lr_at(cfg, 5) - 5e-4) <= 1e-15, "junction must be continuous"
        mid = 5 + (305 - 5) // 2
        assert abs(training.lr_at(cfg, mid) - 2.55e-4) <= 1e-12
        lrs = [training.lr_at(cfg, e) for e in range(5, 305)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:])), "cosine must be nonincreasing"
        assert abs(lrs[-1] - cfg.min_lr) <= 1e-7, "end of schedule must approach min_lr"

    def clipping():
        a = Parameter(np.zeros(2), name="a")
        b = Parameter(np.zeros(2), name="b")
        a.grad[:] = [3.0, 0.0]
        b.grad[:] = [0.0, 4.0]
        scale = training.clip_global_norm([a, b], 1.0)
        assert abs(scale - 0.2) <= 1e-15, f"3-4-5 triangle clip gave {scale}"
        norm = np.sqrt((a.grad ** 2).sum() + (b.grad ** 2).sum())
        assert abs(norm - 1.0) <= 1e-12
        a.grad[:] = [0.3, 0.0]
        b.grad[:] = [0.0, 0.4]
        assert training.clip_global_norm([a, b], 1.0) == 1.0
        assert a.grad[0] == 0.3, "clip must never increase magnitudes"
        a.grad[:] = 0
        b.grad[:] = 0
        assert training.clip_global_norm([a, b], 1.0) == 1.0

    def adam_examples():
        cfg = training.TrainConfig(epochs=2, warmup_epochs=0, weight_decay=0.0)
        p = Parameter(np.array([1.0]), name="p")
        p.grad[:] = 0.1
        st = training.OptimizerState()
        training.adam_step([p], st, 1e-3, cfg)
        delta = 1.0 - p.data[0]
        assert abs(delta - 9.99999e-4) <= 1e-9, f"Adam delta {delta}"
        # decay-only step
        cfg2 = training.TrainConfig(epochs=2, warmup_epochs=0, weight_decay=0.05)
        q = Parameter(np.array([1.0]), name="q")
        st2 = training.OptimizerState()
        training.adam_step([q], st2, 1e-3, cfg2)
        assert abs(q.data[0] - 0.99995) <= 1e-15
        # zero grads, no decay: unchanged
        r = Parameter(np.array([2.0]), name="r", decay=False)
        training.adam_step([r], training.OptimizerState(), 1e-3, cfg2)
        assert r.data[0] == 2.0
        # NaN grad names parameter
        s = Parameter(np.array([1.0]), name="bad.param")
        s.grad[:] = np.nan
        try:
            training.adam_step([s], training.OptimizerState(), 1e-3, cfg)
        except NumericalError as exc:
            assert "bad.param" in str(exc)
        else:
            raise AssertionError("NaN gradient must raise")

    def quadratic_descends():
        p = Parameter(np.array([0.7]), name="x")
        cfg = training.TrainConfig(epochs=2, warmup_epochs=0, weight_decay=0.0)
        st = training.OptimizerState()
        loss0 = float((p.data ** 2).sum())
        loss = ops.sum_(ops.mul(p, p))
        loss.backward()
        training.adam_step([p], st, 0.05, cfg)
        assert float((p.data ** 2).sum()) < loss0, "one Adam step must descend on x^2"

    def _tiny_run(lr, seed=0, poison=False, checkpoint=None, epochs=3):
        ds = data_mod.load_synthetic(seed=2, train_n=32, test_n=16, classes=4, size=8)
        if poison:
            ds.train_x[0, 0, 0, 0] = np.nan
        mcfg = _micro_cfg_train()
        m = model_mod.VitModel(mcfg)
        tcfg = training.TrainConfig(epochs=epochs, warmup_epochs=1, base_lr=lr,
                                    batch_size=16, seed=seed)
        hist = training.fit(m, ds, tcfg, checkpoint_path=checkpoint)
        return m, hist

    def _micro_cfg_train():
        return model_mod.ModelConfig(mixer="mwa", image_size=8, patch_size=4, dim=8,
                                     depth=1, classes=4, seed=5)

    def lr_zero_frozen():
        m0 = model_mod.VitModel(_micro_cfg_train())
        before = {n: p.copy() for n, p in m0.state_dict().items()}
        ds = data_mod.load_synthetic(seed=2, train_n=16, test_n=8, classes=4, size=8)
        tcfg = training.TrainConfig(epochs=2, warmup_epochs=0, base_lr=0.0, min_lr=0.0,
                                    batch_size=8, seed=0)
        training.fit(m0, ds, tcfg)
        after = m0.state_dict()
        for n in before:
            assert np.array_equal(before[n], after[n]), f"lr=0 changed {n}"

    def determinism():
        _, h1 = _tiny_run(1e-3, seed=4)
        _, h2 = _tiny_run(1e-3, seed=4)
        l1 = [r["train_loss"] for r in h1]
        l2 = [r["train_loss"] for r in h2]
        assert l1 == l2, "identical seeds must give bit-identical losses"
        assert all(r["test_top5"] >= r["test_top1"] for r in h1)

    def nan_abort_keeps_checkpoint():
        with tempfile.TemporaryDirectory() as tmp:
            ck = os.path.join(tmp, "best.wvmx")
            _tiny_run(1e-3, seed=4, checkpoint=ck, epochs=2)
            good = open(ck, "rb").read()
            try:
                _tiny_run(1e-3, seed=4, poison=True, checkpoint=ck, epochs=2)
            except NumericalError:
                pass
            else:
                raise AssertionError("NaN loss must abort training")
            assert open(ck, "rb").read() == good, "abort must keep the last good checkpoint"

    return _run_checks("training", [
        ("lr-schedule-examples", schedule),
        ("global-norm-clipping", clipping),
        ("adam-hand-examples", adam_examples),
        ("quadratic-toy-descends", quadratic_descends),
        ("lr-zero-parameters-frozen", lr_zero_frozen),
        ("fit-deterministic-top5-ge-top1", determinism),
        ("nan-abort-keeps-checkpoint", nan_abort_keeps_checkpoint),
    ])


# -- cli-report --------------------------------------------------------------


def _suite_cli_report() -> list:
    def config_roundtrip():
        text = "mixer = gfn\nepochs = 7\nbase_lr = 0.002\naugment = true\n"
        cfg = config_mod.parse_config_text(text)
        canon = cfg.to_text()
        cfg2 = config_mod.parse_config_text(canon)
        assert cfg == cfg2 and cfg2.to_text() == canon, "canonical form must be stable"

    def unknown_key():
        try:
            config_mod.parse_config_text("not_a_key = 3\n")
        except WavemixError:
            return
        raise AssertionError("unknown config keys must be errors")

    def precedence():
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.cfg")
            with open(path, "w") as fh:
                fh.write("epochs = 9\ndim = 64\n")
            cfg = config_mod.resolve(path, {"dim": 128})
            assert cfg.epochs == 9, "file must override default"
            assert cfg.dim == 128, "flag must override file"
            assert cfg.depth == 12, "defaults must fill the rest"

    def provenance():
        h = provenance_hash()
        assert len(h) == 64 and int(h, 16) >= 0
        assert h == provenance_hash(), "hash must be deterministic"

    def cost_rows():
        rep = analysis.mixer_cost_report(n=64, d=8)
        assert [r.mixer for r in rep.rows] == list(analysis.TABLE1_ROWS)
        sa = rep.row("sa")
        assert sa.params_table1 == 3 * 64 and sa.params_measured == 4 * 64
        assert sa.diverges, "SA table-vs-measured divergence must be flagged"
        afno = rep.row("afno")
        assert afno.params_measured is None and afno.flops_measured is None
        assert abs(analysis.table1_params("sa", 64, 384) - 442368.0) == 0.0
        mwa_f = analysis.table1_flops("mwa", 64, 8, k1=1, k2=3, g1=1, g2=1)
        assert mwa_f == 24576.0, f"hand-evaluated MWA row gives {mwa_f}"
        assert analysis.table1_flops("mwa", 128, 8) == 2 * analysis.table1_flops("mwa", 64, 8)
        assert analysis.table1_flops("sa", 128, 8) > 2 * analysis.table1_flops("sa", 64, 8)

    def table_headers():
        from . import cli
        assert cli.REPORT_HEADER == "Model\tParameters (M)\tFlops (G)\tTop-1 (%)\tTop-5 (%)"
        assert cli.BENCH_HEADER == "mixer\tN\td\tmultadds\tseconds"

    return _run_checks("cli-report", [
        ("config-canonical-roundtrip", config_roundtrip),
        ("config-unknown-key-rejected", unknown_key),
        ("flag-file-default-precedence", precedence),
        ("provenance-hash-stable", provenance),
        ("table1-rows-and-divergence", cost_rows),
        ("report-table-headers", table_headers),
    ])


SUITES = {
    "tensor-core": _suite_tensor_core,
    "transforms": _suite_transforms,
    "mixers": _suite_mixers,
    "backbone": _suite_backbone,
    "data-io": _suite_data_io,
    "training": _suite_training,
    "cli-report": _suite_cli_report,
}


def run(only=None) -> list:
    """Run invariant suites (all, or one module) and return their results."""
    if only is not None and only not in SUITES:
        raise ConfigError(f"unknown module {only!r}; expected one of {sorted(SUITES)}")
    results = []
    for name, suite in SUITES.items():
        if only is not None and name != only:
            continue
        results.extend(suite())
    return results
