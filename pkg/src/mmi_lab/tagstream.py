"""Time-tag ingestion and correlation analysis.

Detection events are (channel, tick) records with an 81 ps tick.  The
correlators run in a single chronological pass with working memory
bounded by the correlation range, not the stream length, so arbitrarily
long acquisitions stream through unchanged.

Binary file layout (little endian):

    offset 0   4 bytes  magic ``TTAG``
    offset 4   u16      format version (1)
    offset 6   u16      channel count
    offset 8   u64      tick size in femtoseconds (81 ps -> 81000, exact)
    offset 16  records  12 bytes each: u64 tick, u8 channel, 3 reserved

The CSV alternative is ``channel,tick`` rows with a header line.
"""

from __future__ import annotations

import io
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import CoincidenceDistribution, mode_pairs

MAGIC = b"TTAG"
VERSION = 1
DEFAULT_TICK_FS = 81_000  # 81 ps
_RECORD = np.dtype([("tick", "<u8"), ("channel", "u1"), ("reserved", "V3")])


class StreamFormatError(ValueError):
    """Malformed time-tag payload; carries the offending byte/row position."""


@dataclass(frozen=True)
class TimeTag:
    channel: int
    tick: int


@dataclass
class TimeTagStream:
    """Chronologically ordered detector events."""

    channels: np.ndarray
    ticks: np.ndarray
    n_channels: int
    tick_fs: int = DEFAULT_TICK_FS
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.uint8)
        tk = np.asarray(self.ticks, dtype=np.uint64)
        if ch.shape != tk.shape or ch.ndim != 1:
            raise ValueError("channels and ticks must be matching 1-D arrays")
        if ch.size and int(ch.max()) >= self.n_channels:
            raise ValueError(f"channel {int(ch.max())} outside the "
                             f"{self.n_channels}-channel map")
        if tk.size > 1 and np.any(np.diff(tk.astype(np.int64)) < 0):
            pos = int(np.argmax(np.diff(tk.astype(np.int64)) < 0)) + 1
            raise StreamFormatError(f"non-monotonic timestamps at record {pos}")
        self.channels = ch
        self.ticks = tk

    def __len__(self) -> int:
        return int(self.ticks.size)

    @property
    def tick_ns(self) -> float:
        return self.tick_fs * 1e-6

    def times_ns(self) -> np.ndarray:
        return self.ticks.astype(np.float64) * self.tick_ns

    def duration_ns(self) -> float:
        return float(self.ticks[-1]) * self.tick_ns if len(self) else 0.0

    def counts_per_channel(self) -> np.ndarray:
        return np.bincount(self.channels, minlength=self.n_channels)

    def select(self, channels) -> "TimeTagStream":
        mask = np.isin(self.channels, list(channels))
        return TimeTagStream(self.channels[mask], self.ticks[mask],
                             self.n_channels, self.tick_fs, dict(self.metadata))

    # -- binary format ---------------------------------------------------

    def to_bytes(self) -> bytes:
        head = io.BytesIO()
        head.write(MAGIC)
        head.write(np.uint16(VERSION).tobytes())
        head.write(np.uint16(self.n_channels).tobytes())
        head.write(np.uint64(self.tick_fs).tobytes())
        rec = np.zeros(len(self), dtype=_RECORD)
        rec["tick"] = self.ticks
        rec["channel"] = self.channels
        return head.getvalue() + rec.tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes) -> "TimeTagStream":
        if len(payload) < 16:
            raise StreamFormatError(f"header truncated: {len(payload)} bytes")
        if payload[:4] != MAGIC:
            raise StreamFormatError(f"bad magic {payload[:4]!r}")
        version = int(np.frombuffer(payload, np.uint16, 1, 4)[0])
        if version != VERSION:
            raise StreamFormatError(f"unsupported format version {version}")
        n_channels = int(np.frombuffer(payload, np.uint16, 1, 6)[0])
        tick_fs = int(np.frombuffer(payload, np.uint64, 1, 8)[0])
        body = payload[16:]
        if len(body) % _RECORD.itemsize:
            raise StreamFormatError(f"truncated record at byte {16 + len(body) - len(body) % _RECORD.itemsize}")
        rec = np.frombuffer(body, dtype=_RECORD)
        return cls(rec["channel"].copy(), rec["tick"].copy(), n_channels, tick_fs)

    def write_file(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_file(cls, path) -> "TimeTagStream":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    # -- CSV alternative ---------------------------------------------------

    def to_csv(self) -> str:
        lines = ["channel,tick"]
        lines += [f"{int(c)},{int(t)}" for c, t in zip(self.channels, self.ticks)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, n_channels: int | None = None,
                 tick_fs: int = DEFAULT_TICK_FS) -> "TimeTagStream":
        rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if rows and rows[0].lower().replace(" ", "") == "channel,tick":
            rows = rows[1:]
        channels, ticks = [], []
        for nr, row in enumerate(rows, start=1):
            try:
                c, t = row.split(",")
                channels.append(int(c))
                ticks.append(int(t))
            except ValueError as exc:
                raise StreamFormatError(f"bad CSV row {nr}: {row!r}") from exc
        if n_channels is None:
            n_channels = (max(channels) + 1) if channels else 1
        return cls(np.array(channels, np.uint8), np.array(ticks, np.uint64),
                   n_channels, tick_fs)


def parse_stream(payload) -> TimeTagStream:
    """Parse binary bytes or CSV text into a stream."""
    if isinstance(payload, (bytes, bytearray)):
        return TimeTagStream.from_bytes(bytes(payload))
    return TimeTagStream.from_csv(str(payload))


# -- sliding histograms --------------------------------------------------


@dataclass(frozen=True)
class SlidingProfile:
    """Count-rate profile from overlapping bins (width >= pitch)."""

    centers: np.ndarray
    counts: np.ndarray
    bin_width: float
    pitch: float
    folded: bool
    fine_counts: np.ndarray
    fine_edges: np.ndarray


def _moving_sum(fine: np.ndarray, width: int, circular: bool) -> np.ndarray:
    if circular:
        ext = np.concatenate([fine, fine[:width - 1]]) if width > 1 else fine
        return np.convolve(ext, np.ones(width), mode="valid")[:fine.size]
    return np.convolve(fine, np.ones(width), mode="valid")


def sliding_histogram(stream: TimeTagStream, channels=None,
                      bin_width: float = 40.0, pitch: float = 4.0,
                      fold_period: float | None = None,
                      span: float | None = None) -> SlidingProfile:
    """Overlapping-bin count profile of detection times.

    With ``fold_period`` the times are folded modulo the period (circular
    windows), which is how pulse intensity profiles are accumulated.
    """
    if pitch <= 0 or bin_width < pitch:
        raise ValueError("need pitch > 0 and bin_width >= pitch")
    width = max(1, int(round(bin_width / pitch)))
    sub = stream if channels is None else stream.select(channels)
    t = sub.times_ns()
    if fold_period is not None:
        t = np.mod(t, fold_period)
        span = fold_period
    elif span is None:
        span = float(t.max()) + pitch if t.size else bin_width
    n_fine = max(width, int(np.ceil(span / pitch)))
    edges = np.arange(n_fine + 1) * pitch
    fine, _ = np.histogram(t, bins=edges)
    circular = fold_period is not None
    counts = _moving_sum(fine.astype(float), width, circular)
    if circular:
        centers = (np.arange(n_fine) + width / 2.0) * pitch % span
        order = np.argsort(centers)
        centers, counts = centers[order], counts[order]
    else:
        centers = (np.arange(counts.size) + width / 2.0) * pitch
    return SlidingProfile(centers=centers, counts=counts, bin_width=bin_width,
                          pitch=pitch, folded=circular,
                          fine_counts=fine, fine_edges=edges)


# -- pair correlators ------------------------------------------------------


@dataclass(frozen=True)
class CorrelationHistogram:
    """Histogram of pairwise time differences t_b - t_a.

    ``fine_counts`` are non-overlapping pitch-resolution bins; ``counts``
    are the sliding (width ``bin_width``) sums used for display.
    """

    ch_a: int
    ch_b: int
    range_ns: float
    bin_width: float
    pitch: float
    fine_edges: np.ndarray
    fine_counts: np.ndarray
    centers: np.ndarray
    counts: np.ndarray

    def total_pairs(self) -> int:
        return int(self.fine_counts.sum())


def cross_correlate(stream: TimeTagStream, ch_a: int, ch_b: int,
                    range_ns: float, bin_width: float = 100.0,
                    pitch: float = 20.0,
                    allow_same: bool = False) -> CorrelationHistogram:
    """Histogram every pair of detections on the two channels with
    |t_b - t_a| inside the range; single pass, rolling buffer."""
    if ch_a == ch_b and not allow_same:
        raise ValueError("same-channel correlation needs allow_same=True")
    if pitch <= 0 or bin_width < pitch:
        raise ValueError("need pitch > 0 and bin_width >= pitch")
    n_half = int(np.ceil(range_ns / pitch))
    edges = (np.arange(2 * n_half + 1) - n_half) * pitch
    fine = np.zeros(2 * n_half, dtype=np.int64)
    span = edges[-1]

    sub = stream.select([ch_a] if ch_a == ch_b else [ch_a, ch_b])
    times = sub.times_ns()
    chans = sub.channels
    buf: deque[tuple[float, int]] = deque()
    for t, c in zip(times, chans):
        while buf and t - buf[0][0] > span:
            buf.popleft()
        for t_old, c_old in buf:
            if ch_a == ch_b:
                dts = (t - t_old, t_old - t)
            elif c_old == ch_a and c == ch_b:
                dts = (t - t_old,)
            elif c_old == ch_b and c == ch_a:
                dts = (t_old - t,)
            else:
                continue
            for dt in dts:
                idx = int(np.floor(dt / pitch)) + n_half
                if 0 <= idx < fine.size:
                    fine[idx] += 1
        buf.append((t, c))

    width = max(1, int(round(bin_width / pitch)))
    counts = _moving_sum(fine.astype(float), width, circular=False)
    centers = edges[:counts.size] + (width / 2.0) * pitch
    return CorrelationHistogram(ch_a=ch_a, ch_b=ch_b, range_ns=range_ns,
                                bin_width=bin_width, pitch=pitch,
                                fine_edges=edges, fine_counts=fine,
                                centers=centers, counts=counts)


@dataclass(frozen=True)
class G2Result:
    g2_zero: float
    central_counts: float
    side_peak_counts: dict
    extrapolated_uncorrelated: float


def g2_zero(hist: CorrelationHistogram, duty_cycle: float,
            n_fit_peaks: int = 4) -> G2Result:
    """Second-order correlation at zero delay from a peaked correlogram.

    Integrates each peak over a window of +/- half the duty cycle and
    normalises the central peak by the uncorrelated level extrapolated to
    zero separation (linear fit against |peak index|, which removes the
    decay of the side peaks caused by finite emission sequences).
    """
    n_peaks = int(np.floor(hist.range_ns / duty_cycle - 0.5))
    if n_peaks < max(n_fit_peaks, 5):
        raise ValueError(f"histogram range covers only {n_peaks} side peaks; "
                         f"need at least {max(n_fit_peaks, 5)} per side")
    centers = hist.fine_edges[:-1] + np.diff(hist.fine_edges) / 2.0
    peak_counts = {}
    for m in range(-n_peaks, n_peaks + 1):
        sel = np.abs(centers - m * duty_cycle) <= duty_cycle / 2.0
        peak_counts[m] = float(hist.fine_counts[sel].sum())
    ms = [m for m in range(-n_fit_peaks, n_fit_peaks + 1) if m != 0]
    side = np.array([peak_counts[m] for m in ms], dtype=float)
    if side.sum() == 0:
        raise ValueError("no side peaks found; cannot normalise g2")
    slope, intercept = np.polyfit(np.abs(ms), side, 1)
    if intercept <= 0:
        intercept = float(side.mean())
    return G2Result(g2_zero=peak_counts[0] / intercept,
                    central_counts=peak_counts[0],
                    side_peak_counts=peak_counts,
                    extrapolated_uncorrelated=float(intercept))


# -- coincidence extraction ------------------------------------------------


@dataclass(frozen=True)
class CoincidenceSet:
    """Greedily paired detection events.

    ``dtau_ns`` is the separation of the later minus the earlier tag,
    minus the pairing offset, so time-offset (distinguishable reference)
    extractions are centred at zero as well.
    """

    pair_k: np.ndarray
    pair_l: np.ndarray
    dtau_ns: np.ndarray
    counts: CoincidenceDistribution
    window_ns: float
    time_offset_ns: float
    n_unmatched: int

    def __len__(self) -> int:
        return int(self.dtau_ns.size)

    def pair_labels(self) -> list[tuple[int, int]]:
        return list(zip(self.pair_k.tolist(), self.pair_l.tolist()))

    def same_detector_counts(self) -> np.ndarray:
        n = self.counts.n_modes
        out = np.zeros(n)
        for k, l, in zip(self.pair_k, self.pair_l):
            if k == l:
                out[k] += 1
        return out


def extract_coincidences(stream: TimeTagStream, window_ns: float,
                         channels=None,
                         time_offset_ns: float = 0.0) -> CoincidenceSet:
    """Pair detection events whose separation falls within
    ``time_offset_ns +/- window_ns``, chronologically and greedily.

    Every tag is used at most once: the oldest unmatched tag that can
    still form a pair is matched first.  ``time_offset_ns`` selects
    events a fixed number of duty cycles apart, which is how the
    fully-distinguishable same-detector reference is measured.
    """
    if window_ns <= 0:
        raise ValueError("window must be positive")
    if time_offset_ns < 0:
        raise ValueError("time offset must be non-negative")
    sub = stream if channels is None else stream.select(channels)
    times = sub.times_ns()
    chans = sub.channels
    lo = time_offset_ns - window_ns
    hi = time_offset_ns + window_ns
    buf: deque[tuple[float, int]] = deque()
    out_k, out_l, out_dt = [], [], []
    n_unmatched = 0
    for t, c in zip(times, chans):
        while buf and t - buf[0][0] > hi:
            buf.popleft()
            n_unmatched += 1
        if buf and t - buf[0][0] >= lo:
            t_old, c_old = buf.popleft()
            k, l = sorted((int(c_old), int(c)))
            out_k.append(k)
            out_l.append(l)
            out_dt.append((t - t_old) - time_offset_ns)
        else:
            buf.append((t, float(c)))
    n_unmatched += len(buf)
    n = sub.n_channels
    pairs = mode_pairs(n)
    vals = np.zeros(len(pairs))
    for k, l in zip(out_k, out_l):
        vals[pairs.index((k, l))] += 1
    return CoincidenceSet(
        pair_k=np.array(out_k, dtype=int),
        pair_l=np.array(out_l, dtype=int),
        dtau_ns=np.array(out_dt, dtype=float),
        counts=CoincidenceDistribution(n, vals),
        window_ns=window_ns,
        time_offset_ns=time_offset_ns,
        n_unmatched=n_unmatched,
    )


# -- dead-time correction ---------------------------------------------------


@dataclass(frozen=True)
class DeadtimeCorrectionResult:
    corrected: CoincidenceDistribution
    missed: float
    missed_sigma: float
    fit_scale: float
    clamped: bool


def deadtime_correction(dtau_ns, intensity: SlidingProfile, tau_r_ns: float,
                        reference_same, measured: CoincidenceDistribution,
                        max_dtau_ns: float | None = None) -> DeadtimeCorrectionResult:
    """Recover same-detector coincidences lost to detector recovery time.

    The time-difference distribution of all coincidences follows the
    autoconvolution of the photon intensity profile.  Its amplitude is
    fitted to the measured |dtau| histogram outside the recovery time;
    the deficit inside |dtau| <= tau_r is the number of missed pairs,
    distributed over the same-detector channels proportionally to the
    distinguishable-photon reference (that relative distribution does not
    depend on photon interference).
    """
    ref = np.asarray(reference_same, dtype=float)
    if ref.ndim != 1 or ref.size != measured.n_modes:
        raise ValueError("reference must hold one entry per detector channel")
    if np.any(ref < 0) or ref.sum() <= 0:
        raise ValueError("reference same-detector distribution must be "
                         "non-negative with positive total")
    if tau_r_ns <= 0:
        return DeadtimeCorrectionResult(corrected=measured, missed=0.0,
                                        missed_sigma=0.0, fit_scale=0.0,
                                        clamped=False)
    dtau = np.abs(np.asarray(dtau_ns, dtype=float))
    step = intensity.pitch
    profile = intensity.counts.astype(float)
    # dark counts add a flat pedestal to the folded profile whose
    # autoconvolution would fake a broad coincidence background
    floor = np.median(np.sort(profile)[:max(1, profile.size // 4)])
    profile = np.clip(profile - floor, 0.0, None)
    auto = np.correlate(profile, profile, mode="full")
    mid = profile.size - 1
    # expected |dtau| histogram: continuous separations straddle adjacent
    # lags triangularly, so bin b collects lags b and b+1 (half each,
    # already folded over the sign)
    n_bins = profile.size
    lags = np.concatenate([auto[mid:], [0.0]])
    shape = lags[:n_bins] + lags[1:n_bins + 1]
    if max_dtau_ns is None:
        max_dtau_ns = n_bins * step
    # drop any bin only partially covered by the coincidence window
    n_use = min(n_bins, int(max_dtau_ns / step))
    shape = shape[:n_use]
    hist, _ = np.histogram(dtau, bins=np.arange(n_use + 1) * step)
    # a bin straddling the recovery time is partially suppressed, so it
    # belongs to the deficit window, not the amplitude fit
    left_edges = np.arange(n_use) * step
    inside = left_edges < tau_r_ns
    a_out, h_out = shape[~inside], hist[~inside].astype(float)
    if a_out.size < 2 or np.all(a_out == 0):
        raise ValueError("no usable bins beyond the recovery time")
    scale = float(np.dot(a_out, h_out) / np.dot(a_out, a_out))
    resid = h_out - scale * a_out
    # Poisson noise concentrates in the large-amplitude bins that dominate
    # the fit, so take the larger of the empirical and Poisson variances
    var_emp = float(resid @ resid) / max(a_out.size - 1, 1) / float(a_out @ a_out)
    var_poisson = max(scale, 0.0) * float((a_out ** 3).sum()) / float(a_out @ a_out) ** 2
    var_scale = max(var_emp, var_poisson)
    expected_inside = scale * shape[inside].sum()
    measured_inside = float(hist[inside].sum())
    missed = expected_inside - measured_inside
    # the Poisson term uses the expected in-window total: the deficit is
    # a difference against a fluctuating count of that size
    sigma = float(np.sqrt(var_scale * shape[inside].sum() ** 2
                          + max(expected_inside, measured_inside)))
    clamped = False
    if missed < 0:
        warnings.warn("inferred missed-coincidence count was negative; "
                      "clamping to zero (statistical fluctuation)", stacklevel=2)
        missed, clamped = 0.0, True
    add = missed * ref / ref.sum()
    vals = measured.values.copy()
    for idx, (k, l) in enumerate(mode_pairs(measured.n_modes)):
        if k == l:
            vals[idx] += add[k]
    corrected = CoincidenceDistribution(measured.n_modes, vals)
    return DeadtimeCorrectionResult(corrected=corrected, missed=float(missed),
                                    missed_sigma=sigma, fit_scale=scale,
                                    clamped=clamped)
