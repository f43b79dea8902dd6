"""Similarity metric and Monte-Carlo uncertainty quantification.

The similarity between two non-negative distributions,

    S = sum_i sqrt(p_i q_i) / sqrt(sum_i p_i * sum_i q_i),

is the classical fidelity normalised for distributions that do not sum
to one; it is invariant under rescaling of either argument.  Credible
intervals on measured similarities are obtained by resampling each
channel count from the Poissonian that most likely produced it and
taking the highest-posterior-density interval of the resampled S
values.  Random-distribution baselines give the context for how
discriminating a given similarity level actually is.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

MODE_BIN_WIDTH = 0.001  # 0.1 percentage points
_CHUNK = 1 << 17


def similarity(p, q) -> float:
    """Normalised classical fidelity between two non-negative vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("similarity arguments must be non-negative")
    sp, sq = p.sum(), q.sum()
    if sp <= 0 or sq <= 0:
        raise ValueError("similarity arguments must have positive sums")
    # square roots first: the plain product can underflow for tiny sums
    return float((np.sqrt(p) * np.sqrt(q)).sum() / (np.sqrt(sp) * np.sqrt(sq)))


def _similarity_rows(draws: np.ndarray, theory: np.ndarray) -> np.ndarray:
    num = np.sqrt(draws * theory).sum(axis=1)
    den = np.sqrt(draws.sum(axis=1) * theory.sum())
    with np.errstate(invalid="ignore"):
        s = num / den
    return np.nan_to_num(s, nan=0.0)


def hpd_interval(samples, mass: float = 0.68) -> tuple[float, float]:
    """Shortest contiguous interval containing at least ``mass`` of the samples."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("empty sample set")
    if not 0 < mass <= 1:
        raise ValueError("mass must be in (0, 1]")
    m = int(np.ceil(mass * n))
    if m >= n:
        return float(x[0]), float(x[-1])
    widths = x[m - 1:] - x[:n - m + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m - 1])


def _mode_of(samples: np.ndarray, bin_width: float = MODE_BIN_WIDTH) -> float:
    counts, edges = np.histogram(np.clip(samples, 0.0, 1.0),
                                 bins=int(round(1.0 / bin_width)), range=(0.0, 1.0))
    i = int(np.argmax(counts))
    return float(0.5 * (edges[i] + edges[i + 1]))


def max_threads() -> int:
    """Worker cap from the MMI_LAB_THREADS environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("MMI_LAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SimilarityResult:
    """Most-likely similarity with credible interval from resampling.

    ``mode`` is the densest 0.1-percentage-point histogram bin of the
    resampled similarities; ``raw`` is the similarity of the unsampled
    input counts themselves (None for random baselines).  The two need
    not agree: normalising inside S couples the channel fluctuations.
    """

    mode: float
    hpd68: tuple[float, float]
    mean: float
    histogram: np.ndarray
    bin_width: float
    n_trials: int
    seed: int
    raw: float | None = None
    samples: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "hpd68": [self.hpd68[0], self.hpd68[1]],
            "mean": self.mean,
            "n_trials": self.n_trials,
            "seed": self.seed,
        }
        if self.raw is not None:
            d["raw"] = self.raw
        return d

    def histogram_csv(self) -> str:
        """Plot-ready ``similarity,count`` rows of the resampled histogram."""
        lines = ["similarity,count"]
        for b, count in enumerate(self.histogram):
            if count:
                center = (b + 0.5) * self.bin_width
                lines.append(f"{center:.4f},{int(count)}")
        return "\n".join(lines) + "\n"


def _run_chunks(trials: int, seed: int, chunk_fn) -> np.ndarray:
    """Evaluate ``chunk_fn(rng, size)`` over deterministic chunks.

    Each chunk's generator is derived from (seed, chunk index), so results
    are bit-identical no matter how many threads execute the chunks.
    """
    spans = [(a, min(a + _CHUNK, trials)) for a in range(0, trials, _CHUNK)]

    def one(idx_span):
        idx, (a, b) = idx_span
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(idx,)))
        return a, chunk_fn(rng, b - a)

    out = np.empty(trials)
    workers = max_threads()
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for a, block in pool.map(one, enumerate(spans)):
                out[a:a + block.size] = block
    else:
        for a, block in map(one, enumerate(spans)):
            out[a:a + block.size] = block
    return out


def _summarize(samples: np.ndarray, trials: int, seed: int, raw: float | None,
               keep_samples: bool, mass: float) -> SimilarityResult:
    histogram, _ = np.histogram(np.clip(samples, 0.0, 1.0),
                                bins=int(round(1.0 / MODE_BIN_WIDTH)), range=(0.0, 1.0))
    return SimilarityResult(
        mode=_mode_of(samples),
        hpd68=hpd_interval(samples, mass),
        mean=float(samples.mean()),
        histogram=histogram,
        bin_width=MODE_BIN_WIDTH,
        n_trials=trials,
        seed=seed,
        raw=raw,
        samples=samples if keep_samples else None,
    )


def poisson_mc_similarity(counts, theory, trials: int = 1_000_000, seed: int = 0,
                          mass: float = 0.68,
                          keep_samples: bool = False) -> SimilarityResult:
    """Resample measured channel counts Poissonially and collect the
    similarity to ``theory`` for every trial.

    Each trial draws ``n_i ~ Poisson(N_i)`` independently, with the measured
    count ``N_i`` as the most likely Poissonian mean.
    """
    counts = np.asarray(counts, dtype=float)
    theory = np.asarray(theory, dtype=float)
    if counts.shape != theory.shape:
        raise ValueError("counts and theory must have equal length")
    if counts.sum() <= 0:
        raise ValueError("all-zero counts cannot be resampled")
    raw = similarity(counts, theory)

    def chunk(rng, size):
        draws = rng.poisson(lam=counts, size=(size, counts.size)).astype(float)
        return _similarity_rows(draws, theory)

    samples = _run_chunks(trials, seed, chunk)
    return _summarize(samples, trials, seed, raw, keep_samples, mass)


def random_baseline(theory=None, dims: int = 6, trials: int = 1_000_000, seed: int = 0,
                    mass: float = 0.68,
                    keep_samples: bool = True) -> SimilarityResult:
    """Similarity of distributions drawn evenly from the ``dims``-dimensional
    space of distributions, against ``theory`` (or against a second random
    draw when ``theory`` is None).

    Even sampling means uniform on the probability simplex, realised as
    i.i.d. unit-exponential entries (the similarity is scale invariant, so
    no explicit normalisation is needed).
    """
    if dims < 2:
        raise ValueError("need at least 2 dimensions")
    th = None if theory is None else np.asarray(theory, dtype=float)
    if th is not None and th.size != dims:
        dims = th.size

    def chunk(rng, size):
        draws = rng.exponential(size=(size, dims))
        if th is None:
            other = rng.exponential(size=(size, dims))
            num = np.sqrt(draws * other).sum(axis=1)
            den = np.sqrt(draws.sum(axis=1) * other.sum(axis=1))
            return num / den
        return _similarity_rows(draws, th)

    samples = _run_chunks(trials, seed, chunk)
    return _summarize(samples, trials, seed, None, keep_samples, mass)


def exceedance_probability(baseline: SimilarityResult,
                           interval: tuple[float, float]) -> float:
    """Fraction of baseline similarities at or above the interval's lower edge.

    Quantifies the chance that a random distribution performs within or
    beyond the credible interval of a measured result.
    """
    lo, hi = interval
    if not 0.0 <= lo <= 1.0 + 1e-12 or hi < lo:
        raise ValueError(f"invalid interval ({lo}, {hi})")
    if baseline.samples is not None:
        return float(np.mean(baseline.samples >= lo))
    # fall back to the stored histogram with partial-bin interpolation
    edges = np.arange(baseline.histogram.size + 1) * baseline.bin_width
    full = baseline.histogram[edges[1:] > lo].sum()
    k = int(np.searchsorted(edges, lo, side="right")) - 1
    if 0 <= k < baseline.histogram.size:
        frac_inside = (lo - edges[k]) / baseline.bin_width
        full -= baseline.histogram[k] * frac_inside
    return float(full / baseline.n_trials)


@dataclass(frozen=True)
class WindowedSimilarity:
    center: float
    n_events: int
    vs_quantum: SimilarityResult
    vs_classical: SimilarityResult


def similarity_vs_dt(dtau_ns, pair_labels, theory_quantum, theory_classical,
                     n_modes: int = 4, half_window: float = 25.0,
                     centers=None, trials: int = 100_000, seed: int = 0,
                     min_events: int = 5) -> list[WindowedSimilarity]:
    """Time-resolved similarity of cross-detector coincidences.

    Slides a window of +/- ``half_window`` over the absolute detection time
    difference, builds the cross-channel count distribution inside each
    window, and resamples it against the interfering and non-interfering
    predictions.  Windows with fewer than ``min_events`` events are omitted.
    """
    dtau = np.abs(np.asarray(dtau_ns, dtype=float))
    if dtau.size == 0:
        raise ValueError("no coincidence events supplied")
    cross_pairs = [(k, l) for k in range(n_modes) for l in range(k + 1, n_modes)]
    index = {p: c for c, p in enumerate(cross_pairs)}
    labels = np.array([index.get((min(k, l), max(k, l)), -1) for k, l in pair_labels])
    tq = np.asarray(theory_quantum, dtype=float)
    tc = np.asarray(theory_classical, dtype=float)
    if tq.size != len(cross_pairs) or tc.size != len(cross_pairs):
        raise ValueError("theories must be cross-detector vectors")
    if centers is None:
        top = float(dtau.max())
        centers = np.arange(0.0, top + half_window, half_window / 2.5)
    out = []
    for w, center in enumerate(centers):
        lo = max(0.0, center - half_window)
        hi = center + half_window
        sel = (dtau >= lo) & (dtau <= hi) & (labels >= 0)
        n = int(sel.sum())
        if n < min_events:
            continue
        counts = np.bincount(labels[sel], minlength=len(cross_pairs)).astype(float)
        out.append(WindowedSimilarity(
            center=float(center),
            n_events=n,
            vs_quantum=poisson_mc_similarity(counts, tq, trials, seed + 2 * w),
            vs_classical=poisson_mc_similarity(counts, tc, trials, seed + 2 * w + 1),
        ))
    return out
