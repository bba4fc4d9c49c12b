"""Synthetic series with known scaling, used to check the engine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Series
from .errors import BadParam

MIN_LENGTH = 2 ** 8
KINDS = ("binomial_cascade", "white_noise", "powerlaw_noise")


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) % 2 ** 64)


def _check_length(n: int) -> int:
    if int(n) != n or n < MIN_LENGTH:
        raise BadParam(f"length must be an integer >= {MIN_LENGTH}, got {n}")
    return int(n)


def binomial_cascade(n: int, a: float, seed: int = 0) -> Series:
    """Deterministic binomial multiplicative cascade of ``n = 2**k`` values.

    Sample ``i`` (0-based) is ``a**c * (1 - a)**(k - c)`` where ``c`` is the
    number of ones in the binary expansion of ``i``; the values sum to 1.
    ``seed`` is accepted for interface symmetry and has no effect.
    """
    n = _check_length(n)
    k = n.bit_length() - 1
    if n != 1 << k:
        raise BadParam(f"cascade length must be a power of two, got {n}")
    if not 0.0 < a < 1.0:
        raise BadParam(f"cascade multiplier must lie in (0, 1), got {a}")
    idx = np.arange(n, dtype=np.uint64)
    ones = np.zeros(n, dtype=np.int64)
    for bit in range(k):
        ones += ((idx >> np.uint64(bit)) & np.uint64(1)).astype(np.int64)
    x = np.power(a, ones) * np.power(1.0 - a, k - ones)
    return Series(x, label=f"binomial_cascade(a={a:g}, k={k})")


def analytic_hurst(a: float, q: float) -> float:
    """Generalized Hurst exponent of the binomial cascade profile.

    ``h(q) = 1/q - ln(a**q + (1-a)**q) / (q ln 2)``, with the q = 0 value
    taken as the limit ``-(ln a + ln(1-a)) / (2 ln 2)``.
    """
    if not 0.0 < a < 1.0:
        raise BadParam(f"cascade multiplier must lie in (0, 1), got {a}")
    b = 1.0 - a
    if q == 0:
        return -(math.log(a) + math.log(b)) / (2.0 * math.log(2.0))
    return 1.0 / q - math.log(a ** q + b ** q) / (q * math.log(2.0))


def analytic_alpha(a: float, q: float) -> float:
    """Singularity strength ``d(q h(q))/dq`` of the binomial cascade."""
    b = 1.0 - a
    aq, bq = a ** q, b ** q
    return -(aq * math.log(a) + bq * math.log(b)) / ((aq + bq) * math.log(2.0))


def white_noise(n: int, seed: int = 0) -> Series:
    """I.i.d. standard Gaussian samples."""
    n = _check_length(n)
    return Series(_rng(seed).standard_normal(n), label=f"white_noise(seed={seed})")


def powerlaw_noise(n: int, beta: float, seed: int = 0) -> Series:
    """Gaussian noise with power spectrum proportional to ``f**-beta``.

    White Gaussian noise is shaped in the Fourier domain and the result is
    rescaled to zero mean and unit variance.  Expected DFA exponent is
    ``(1 + beta) / 2``.
    """
    n = _check_length(n)
    if not 0.0 <= beta <= 2.0:
        raise BadParam(f"spectral exponent must lie in [0, 2], got {beta}")
    white = _rng(seed).standard_normal(n)
    if beta == 0:
        x = white
    else:
        spec = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n)
        gain = np.zeros_like(freqs)
        gain[1:] = freqs[1:] ** (-beta / 2.0)
        x = np.fft.irfft(spec * gain, n)
    x = x - x.mean()
    x = x / x.std()
    return Series(x, label=f"powerlaw_noise(beta={beta:g}, seed={seed})")


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    length: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    def generate(self) -> Series:
        if self.kind == "binomial_cascade":
            return binomial_cascade(self.length, self.params.get("a", 0.6), self.seed)
        if self.kind == "white_noise":
            return white_noise(self.length, self.seed)
        if self.kind == "powerlaw_noise":
            return powerlaw_noise(self.length, self.params.get("beta", 1.0), self.seed)
        raise BadParam(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
