"""Shuffle surrogates: separate correlation-driven from distribution-driven
multifractality."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AnalysisConfig, Series, analyze_with_fallback, as_series
from .errors import ValidationError

VERDICTS = ("correlation_dominated", "distribution_dominated", "mixed")

# correlation_dominated: shuffled mean below this fraction of the original
COLLAPSE_FRACTION = 0.5
# distribution_dominated: gap within this fraction of the original
SURVIVAL_FRACTION = 0.1
N_SD = 2.0


def shuffle(x, seed: int) -> Series:
    """Uniform random permutation of ``x`` from a seeded PCG64 generator."""
    x = as_series(x)
    rng = np.random.default_rng(int(seed) % 2 ** 64)
    return x.with_samples(rng.permutation(x.samples))


def surrogate_seeds(seed: int, n: int) -> list[int]:
    """Independent per-surrogate seeds derived from one master seed."""
    state = np.random.SeedSequence(int(seed) % 2 ** 64).generate_state(n, dtype=np.uint64)
    return [int(v) for v in state]


@dataclass
class ShuffleTestResult:
    W_original: float
    W_shuffled_mean: float
    W_shuffled_sd: float
    verdict: str
    W_shuffled: list[float]
    h2_original: float
    h2_shuffled_mean: float
    seed: int

    def as_dict(self) -> dict:
        return {
            "W_original": self.W_original,
            "W_shuffled_mean": self.W_shuffled_mean,
            "W_shuffled_sd": self.W_shuffled_sd,
            "verdict": self.verdict,
            "W_shuffled": list(self.W_shuffled),
            "h2_original": self.h2_original,
            "h2_shuffled_mean": self.h2_shuffled_mean,
            "seed": self.seed,
        }


def classify(w_original: float, w_mean: float, w_sd: float) -> str:
    gap = w_original - w_mean
    if w_mean < COLLAPSE_FRACTION * w_original and gap > N_SD * w_sd:
        return "correlation_dominated"
    if abs(gap) <= N_SD * w_sd or abs(gap) <= SURVIVAL_FRACTION * w_original:
        return "distribution_dominated"
    return "mixed"


def _h2(spec) -> float:
    try:
        return spec.hurst.at(2.0)
    except KeyError:
        return float("nan")


def shuffle_test(x, cfg: AnalysisConfig | None = None, n_surrogates: int = 20,
                 seed: int = 0) -> ShuffleTestResult:
    """Width of ``x`` against the widths of ``n_surrogates`` shuffles.

    Undefined quadratic widths fall back to the endpoint span for the
    original and every surrogate alike.
    """
    if n_surrogates < 1:
        raise ValidationError("n_surrogates must be at least 1")
    cfg = cfg or AnalysisConfig()
    x = as_series(x)
    orig = analyze_with_fallback(x, cfg)
    widths, h2s = [], []
    for child in surrogate_seeds(seed, n_surrogates):
        spec = analyze_with_fallback(shuffle(x, child), cfg)
        widths.append(spec.width)
        h2s.append(_h2(spec))
    w = np.asarray(widths)
    mean = float(w.mean())
    sd = float(w.std(ddof=1)) if w.size > 1 else 0.0
    return ShuffleTestResult(
        W_original=float(orig.width),
        W_shuffled_mean=mean,
        W_shuffled_sd=sd,
        verdict=classify(float(orig.width), mean, sd),
        W_shuffled=[float(v) for v in w],
        h2_original=_h2(orig),
        h2_shuffled_mean=float(np.mean(h2s)),
        seed=int(seed),
    )
