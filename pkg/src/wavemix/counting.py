"""Exact multiply-accumulate accounting for the numerical kernels.

The counter tallies multiply-accumulate operations (one multiply feeding one
accumulate) performed by the linear-algebra kernels: matrix multiplies,
grouped convolutions, wavelet filter banks, and Fourier transforms.
Elementwise activations and normalizations are not counted. One mult-add is
reported as ``FLOPS_PER_MULTADD`` floating-point operations.

Counting conventions, applied from actual call shapes (never from closed
forms):

* matmul (M,K)@(K,N): M*K*N per batch element.
* grouped conv: c_out * H_out * W_out * (c_in/g) * k^2 per batch element.
* 2-tap wavelet filter pass: taps * outputs, i.e. 2 per output coefficient.
* radix-2 FFT of length n: (n/2)*log2(n) butterflies, 4 real mult-adds each.
* naive DFT of length n: n^2 complex mult-adds, 4 real mult-adds each.
* complex pointwise filter: 4 real mult-adds per spectral bin.
"""

from __future__ import annotations

from contextlib import contextmanager

FLOPS_PER_MULTADD = 2


class MultAddCounter:
    def __init__(self):
        self.multadds = 0

    def add(self, n: int) -> None:
        self.multadds += int(n)

    @property
    def flops(self) -> int:
        return self.multadds * FLOPS_PER_MULTADD


_active: list[MultAddCounter] = []


def record(multadds: int) -> None:
    """Charge ``multadds`` to every active counter. Cheap no-op when idle."""
    if _active:
        n = int(multadds)
        for c in _active:
            c.multadds += n


def counting_active() -> bool:
    return bool(_active)


@contextmanager
def count_multadds():
    """Collect mult-adds performed inside the block.

    Yields the counter; read ``counter.multadds`` / ``counter.flops`` after
    the block exits. Nesting is allowed; inner work is charged to all open
    counters.
    """
    c = MultAddCounter()
    _active.append(c)
    try:
        yield c
    finally:
        _active.remove(c)
