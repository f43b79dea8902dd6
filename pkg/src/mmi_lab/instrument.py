"""Phenomenological simulator of the source-routing-interferometer-detector chain.

An atom transiting the cavity is driven by a fixed train of pulses, each
attempt emitting 0, 1 or 2 photons with alternating polarisation until a
spontaneous decay parks the atom in a dark state.  One polarisation is
routed through a fibre delay of one duty cycle so that sequentially
emitted photons arrive at the interference element simultaneously;
simultaneous pairs at different inputs are drawn from the time-resolved
joint detection density, everything else propagates as independent
single photons.  Detection applies the loss chain, timing jitter,
per-channel dead time and dark counts, and quantises to converter ticks.

All randomness comes from one seeded generator consumed in a fixed
order, so identical seeds give bit-identical streams.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import mode_pairs
from .matrix import TransferMatrix, balanced_splitter, measured_chip_matrix
from .tagstream import TimeTagStream
from .temporal import (CoherenceModel, Wavepacket, calibrate_gaussian_jitter,
                       joint_density, sin2_envelope)

_TRANSIT_CHUNK = 4096


class ConfigError(ValueError):
    """Invalid or inconsistent simulation configuration."""


@dataclass(frozen=True)
class SourceConfig:
    """Photon-source phenomenology.

    ``overall_efficiency`` is the per-attempt probability that a produced
    photon ends up recorded (emission, transmission and detection
    combined); the simulator derives the downstream per-photon survival
    from it as ``overall_efficiency / emission_prob``.

    ``dark_state_prob`` and ``routing_error_prob`` are fitted so that the
    simulated correlation combs resemble the measured ones; they are not
    direct measurements.
    """

    duty_cycle_ns: float = 664.0
    pulse_length_ns: float = 300.0
    pulses_per_transit: int = 100
    emission_prob: float = 0.30
    two_photon_prob: float = 0.003
    dark_state_prob: float = 0.05
    routing_error_prob: float = 0.05
    atom_transit_rate: float = 0.2
    overall_efficiency: float = 0.094
    coherence_jitter_sd: float | None = None   # rad/ns; None -> calibrated
    hom_visibility_target: float = 0.708

    def __post_init__(self):
        probs = {
            "emission_prob": self.emission_prob,
            "two_photon_prob": self.two_photon_prob,
            "dark_state_prob": self.dark_state_prob,
            "routing_error_prob": self.routing_error_prob,
            "overall_efficiency": self.overall_efficiency,
        }
        for name, p in probs.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {p}")
        if self.two_photon_prob > self.emission_prob:
            raise ConfigError("two_photon_prob cannot exceed emission_prob")
        if self.duty_cycle_ns <= self.pulse_length_ns:
            raise ConfigError("duty cycle must exceed the pulse length")
        if self.pulses_per_transit < 1:
            raise ConfigError("need at least one pulse per transit")
        if self.atom_transit_rate < 0:
            raise ConfigError("transit rate must be non-negative")
        if self.emission_prob > 0 and self.overall_efficiency > self.emission_prob:
            raise ConfigError("overall_efficiency cannot exceed emission_prob")

    def detection_chain_prob(self) -> float:
        """Per emitted photon: probability it survives to a recorded tag."""
        if self.emission_prob <= 0:
            return 0.0
        return min(1.0, self.overall_efficiency / self.emission_prob)

    def envelope(self, dt: float = 1.0) -> Wavepacket:
        return sin2_envelope(self.pulse_length_ns, dt)

    def coherence(self) -> CoherenceModel:
        if self.coherence_jitter_sd is not None:
            return CoherenceModel.gaussian(self.coherence_jitter_sd)
        return calibrate_gaussian_jitter(self.envelope(),
                                         self.hom_visibility_target)


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float = 0.85
    jitter_sd_ps: float = 50.0
    dead_time_ns: float = 50.0
    dark_rate_per_hour: float = 30.0
    tick_fs: int = 81_000

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError("detector efficiency must be in [0, 1]")
        if self.dead_time_ns < 0 or self.jitter_sd_ps < 0 or self.dark_rate_per_hour < 0:
            raise ConfigError("detector parameters must be non-negative")

    @property
    def tick_ns(self) -> float:
        return self.tick_fs * 1e-6


LAYOUT_KINDS = ("hbt", "hom_splitter", "mmi")


@dataclass(frozen=True)
class Layout:
    """Optical layout downstream of the source.

    ``hbt`` splits the undelayed photon stream onto two detectors;
    ``hom_splitter`` and ``mmi`` route the two polarisations onto the
    interference element's ``input_delayed`` / ``input_direct`` modes with
    a one-duty-cycle delay on the former.  ``orthogonal`` polarisation
    makes the paired photons fully distinguishable.
    """

    kind: str = "mmi"
    interference_matrix: TransferMatrix = field(default_factory=measured_chip_matrix)
    delay_line_ns: float = 664.0
    input_delayed: int = 0
    input_direct: int = 1
    polarization: str = "parallel"

    def __post_init__(self):
        if self.kind not in LAYOUT_KINDS:
            raise ConfigError(f"layout kind must be one of {LAYOUT_KINDS}")
        if self.polarization not in ("parallel", "orthogonal"):
            raise ConfigError("polarization must be 'parallel' or 'orthogonal'")
        if self.kind != "hbt":
            n = self.interference_matrix.n_modes
            if self.kind == "hom_splitter" and n != 2:
                raise ConfigError("hom_splitter layout needs a 2-mode matrix")
            if not (0 <= self.input_delayed < n and 0 <= self.input_direct < n):
                raise ConfigError("layout input indices out of range")
            if self.input_delayed == self.input_direct:
                raise ConfigError("input mapping must be injective")

    @property
    def n_detectors(self) -> int:
        return 2 if self.kind == "hbt" else self.interference_matrix.n_modes

    @classmethod
    def hbt(cls) -> "Layout":
        return cls(kind="hbt", interference_matrix=balanced_splitter())

    @classmethod
    def hom(cls, polarization: str = "parallel") -> "Layout":
        return cls(kind="hom_splitter", interference_matrix=balanced_splitter(),
                   polarization=polarization)

    @classmethod
    def mmi(cls, matrix: TransferMatrix | None = None, input_delayed: int = 0,
            input_direct: int = 1, polarization: str = "parallel") -> "Layout":
        return cls(kind="mmi",
                   interference_matrix=matrix or measured_chip_matrix(),
                   input_delayed=input_delayed, input_direct=input_direct,
                   polarization=polarization)


@dataclass(frozen=True)
class TruthRecord:
    """Oracle bookkeeping from a simulation run.

    ``pre_deadtime`` is the stream the detectors would have recorded with
    zero recovery time (identical thinning, jitter and dark counts).
    """

    pre_deadtime: TimeTagStream
    n_emitted: int
    delivered_pairs: int
    detected_pairs: int
    n_suppressed: int


class _PairSampler:
    """Inverse-CDF sampler over the discretised joint detection density."""

    def __init__(self, matrix: TransferMatrix, i: int, j: int,
                 envelope: Wavepacket, coherence: CoherenceModel):
        jd = joint_density(matrix, i, j, envelope, envelope, coherence,
                           t_max=envelope.duration)
        pairs = mode_pairs(matrix.n_modes)
        self.pair_k = np.array([k for k, _ in pairs])
        self.pair_l = np.array([l for _, l in pairs])
        self.nt = jd.t.size
        self.dt = jd.dt
        flat = np.concatenate([jd.densities[p].ravel() for p in pairs])
        total = flat.sum()
        if total <= 0:
            raise ConfigError("joint density vanishes; cannot sample pairs")
        self.cdf = np.cumsum(flat) / total

    def sample(self, rng: np.random.Generator, size: int):
        u = rng.random(size)
        flat_idx = np.searchsorted(self.cdf, u)
        cells = self.nt * self.nt
        pair_idx = flat_idx // cells
        rem = flat_idx % cells
        c1, c2 = rem // self.nt, rem % self.nt
        t1 = (c1 + rng.random(size)) * self.dt
        t2 = (c2 + rng.random(size)) * self.dt
        return self.pair_k[pair_idx], self.pair_l[pair_idx], t1, t2


def _emit_photons(source: SourceConfig, n_transits: int, transit_intervals,
                  rng: np.random.Generator, envelope: Wavepacket):
    """Vectorised emission phase.

    Returns flat arrays (global attempt interval, polarisation parity,
    emission time within the interval); parity 0 is the delayed
    polarisation.
    """
    n_att = source.pulses_per_transit
    out_interval, out_pol, out_t = [], [], []
    for a in range(0, n_transits, _TRANSIT_CHUNK):
        b = min(a + _TRANSIT_CHUNK, n_transits)
        block = b - a
        u = rng.random((block, n_att))
        photons = np.zeros((block, n_att), dtype=np.int8)
        photons[u < source.emission_prob] = 1
        photons[u < source.two_photon_prob] = 2
        # a spontaneous-decay branch replaces the emission and silences the
        # rest of the transit
        dark = (photons > 0) & (rng.random((block, n_att)) < source.dark_state_prob)
        has_dark = dark.any(axis=1)
        first_dark = np.where(has_dark, dark.argmax(axis=1), n_att)
        cols = np.arange(n_att)[None, :]
        photons[cols >= first_dark[:, None]] = 0
        phase = rng.integers(0, 2, size=block)
        pol = (cols + phase[:, None]) % 2
        rows, att = np.nonzero(photons)
        reps = photons[rows, att]
        rows = np.repeat(rows, reps)
        att = np.repeat(att, reps)
        pols = pol[rows, att]
        # a double emission flips the spin twice: the second photon carries
        # the opposite polarisation, so the routing splits the pair
        if np.any(reps == 2):
            second = np.zeros(rows.size, dtype=bool)
            second[np.cumsum(reps)[reps == 2] - 1] = True
            pols = np.where(second, 1 - pols, pols)
        out_interval.append(transit_intervals[a + rows] + att)
        out_pol.append(pols)
        out_t.append(envelope.sample_times(rng, rows.size))
    if not out_interval:
        empty = np.array([], dtype=np.int64)
        return empty, empty.astype(np.int8), np.array([], dtype=float)
    return (np.concatenate(out_interval),
            np.concatenate(out_pol).astype(np.int8),
            np.concatenate(out_t))


def _route_singles(matrix: TransferMatrix, inputs: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
    """Independent single-photon propagation, renormalised per input row."""
    m = np.abs(matrix.elements) ** 2
    out = np.empty(inputs.size, dtype=np.int64)
    for i in np.unique(inputs):
        sel = inputs == i
        row = m[i, :]
        if row.sum() <= 0:
            raise ConfigError(f"input mode {i} has zero transmission")
        out[sel] = np.searchsorted(np.cumsum(row / row.sum()),
                                   rng.random(int(sel.sum())))
    return out


def simulate_run(source: SourceConfig, layout: Layout, detectors: DetectorConfig,
                 wall_time_s: float, seed: int, with_truth: bool = False):
    """Produce a deterministic time-tag stream for the configured chain.

    Returns the stream, or ``(stream, TruthRecord)`` when ``with_truth``
    is set.
    """
    if wall_time_s <= 0:
        raise ConfigError("wall time must be positive")
    if layout.kind != "hbt" and layout.delay_line_ns != source.duty_cycle_ns:
        warnings.warn("delay line does not match the duty cycle; "
                      "paired photons will not arrive simultaneously",
                      stacklevel=2)
    rng = np.random.default_rng(seed)
    duty = source.duty_cycle_ns
    wall_ns = wall_time_s * 1e9
    n_intervals = int(wall_ns // duty)
    envelope = source.envelope()

    # -- transits and raw emissions ------------------------------------
    n_transits = int(rng.poisson(source.atom_transit_rate * wall_time_s))
    transit_intervals = np.sort(rng.integers(0, max(n_intervals, 1),
                                             size=n_transits)).astype(np.int64)
    g_interval, pol, t_emit = _emit_photons(source, n_transits,
                                            transit_intervals, rng, envelope)
    n_emitted = int(g_interval.size)

    # -- routing and interference ---------------------------------------
    delivered_pairs = 0
    if layout.kind == "hbt":
        channel = rng.integers(0, 2, size=n_emitted)
        t_ns = g_interval.astype(float) * duty + t_emit
        pair_id = np.full(n_emitted, -1, dtype=np.int64)
    else:
        err = rng.random(n_emitted) < source.routing_error_prob
        eff_pol = np.where(err, 1 - pol, pol)  # wrong path flips delay and input
        input_idx = np.where(eff_pol == 0, layout.input_delayed, layout.input_direct)
        arrival = g_interval + (eff_pol == 0).astype(np.int64)
        order = np.argsort(arrival, kind="stable")
        arrival, input_idx, t_arr = arrival[order], input_idx[order], t_emit[order]

        _, start, counts = np.unique(arrival, return_index=True, return_counts=True)
        pair_first = start[(counts == 2)]
        pair_first = pair_first[input_idx[pair_first] != input_idx[pair_first + 1]]
        delivered_pairs = int(pair_first.size)
        is_pair = np.zeros(arrival.size, dtype=bool)
        is_pair[pair_first] = True
        is_pair[pair_first + 1] = True

        chans, times, pids = [], [], []
        if delivered_pairs and layout.polarization == "parallel":
            # indistinguishable pairs: joint draw over output pair and times
            sampler = _PairSampler(layout.interference_matrix,
                                   layout.input_delayed, layout.input_direct,
                                   envelope, source.coherence())
            k, l, t1, t2 = sampler.sample(rng, delivered_pairs)
            base = arrival[pair_first].astype(float) * duty
            pid = np.arange(delivered_pairs, dtype=np.int64)
            chans += [k, l]
            times += [base + t1, base + t2]
            pids += [pid, pid]
            singles = ~is_pair
        elif delivered_pairs:
            # distinguishable pairs: route both photons independently but
            # keep the pair bookkeeping
            pid_arr = np.full(arrival.size, -1, dtype=np.int64)
            pid_arr[pair_first] = np.arange(delivered_pairs)
            pid_arr[pair_first + 1] = np.arange(delivered_pairs)
            chans.append(_route_singles(layout.interference_matrix,
                                        input_idx[is_pair], rng))
            times.append(arrival[is_pair].astype(float) * duty + t_arr[is_pair])
            pids.append(pid_arr[is_pair])
            singles = ~is_pair
        else:
            singles = np.ones(arrival.size, dtype=bool)
        n_single = int(singles.sum())
        if n_single:
            chans.append(_route_singles(layout.interference_matrix,
                                        input_idx[singles], rng))
            times.append(arrival[singles].astype(float) * duty + t_arr[singles])
            pids.append(np.full(n_single, -1, dtype=np.int64))
        channel = np.concatenate(chans) if chans else np.array([], dtype=np.int64)
        t_ns = np.concatenate(times) if times else np.array([], dtype=float)
        pair_id = np.concatenate(pids) if pids else np.array([], dtype=np.int64)

    # -- detection chain -------------------------------------------------
    keep_prob = source.detection_chain_prob() if detectors.efficiency > 0 else 0.0
    kept = rng.random(channel.size) < keep_prob
    channel, t_ns, pair_id = channel[kept], t_ns[kept], pair_id[kept]
    if delivered_pairs:
        surviving = pair_id[pair_id >= 0]
        per_pair = np.bincount(surviving, minlength=delivered_pairs)
        detected_pairs = int(np.sum(per_pair == 2))
    else:
        detected_pairs = 0
    if detectors.jitter_sd_ps > 0 and t_ns.size:
        t_ns = t_ns + rng.normal(0.0, detectors.jitter_sd_ps * 1e-3, t_ns.size)

    n_det = layout.n_detectors
    dark_mean = detectors.dark_rate_per_hour * wall_time_s / 3600.0
    dark_ch = [np.full(int(rng.poisson(dark_mean)), ch, dtype=np.int64)
               for ch in range(n_det)]
    dark_t = [rng.random(c.size) * wall_ns for c in dark_ch]
    channel = np.concatenate([channel] + dark_ch)
    t_ns = np.concatenate([t_ns] + dark_t)

    inside = (t_ns >= 0) & (t_ns < wall_ns)
    channel, t_ns = channel[inside], t_ns[inside]
    ticks = np.round(t_ns / detectors.tick_ns).astype(np.int64)
    order = np.lexsort((channel, ticks))
    channel, ticks = channel[order], ticks[order]

    dead_ticks = int(round(detectors.dead_time_ns / detectors.tick_ns))
    keep = _apply_dead_time(channel, ticks, n_det, dead_ticks)
    stream = TimeTagStream(channel[keep].astype(np.uint8),
                           ticks[keep].astype(np.uint64),
                           n_channels=n_det, tick_fs=detectors.tick_fs,
                           metadata={"seed": seed, "wall_time_s": wall_time_s,
                                     "layout": layout.kind,
                                     "polarization": layout.polarization})
    if not with_truth:
        return stream
    truth = TruthRecord(
        pre_deadtime=TimeTagStream(channel.astype(np.uint8),
                                   ticks.astype(np.uint64),
                                   n_channels=n_det, tick_fs=detectors.tick_fs),
        n_emitted=n_emitted,
        delivered_pairs=delivered_pairs,
        detected_pairs=detected_pairs,
        n_suppressed=int(np.sum(~keep)),
    )
    return stream, truth


def _apply_dead_time(channel: np.ndarray, ticks: np.ndarray, n_channels: int,
                     dead_ticks: int) -> np.ndarray:
    keep = np.ones(channel.size, dtype=bool)
    if dead_ticks <= 0:
        return keep
    last = [-dead_ticks - 1] * n_channels
    ch_list = channel.tolist()
    tk_list = ticks.tolist()
    for idx, (ch, t) in enumerate(zip(ch_list, tk_list)):
        if t - last[ch] < dead_ticks:
            keep[idx] = False
        else:
            last[ch] = t
    return keep


def expected_pair_rate(source: SourceConfig, layout: Layout,
                       detectors: DetectorConfig) -> float:
    """Analytic mean rate of recorded coincident pairs (both photons
    detected), to first order in the routing-error and two-photon rates.

    A delivered pair needs two consecutive attempts to emit exactly one
    photon each (delayed polarisation first), neither emission to branch
    into the dark state, correct routing of both photons and survival of
    the detection chain for both.  The per-attempt atom survival is
    ``a = 1 - emission_prob * dark_state_prob``; the two equally likely
    alternation phases see slightly different numbers of usable slots
    (floor(n/2) and floor((n-1)/2) for n pulses).

    For the ``hbt`` layout there is no pair delivery; the returned rate is
    that of detected same-interval pairs from two-photon emissions.
    """
    p1, p2 = source.emission_prob, source.two_photon_prob
    keep = source.detection_chain_prob() if detectors.efficiency > 0 else 0.0
    if p1 <= 0 or keep <= 0:
        return 0.0
    n = source.pulses_per_transit
    a = 1.0 - p1 * source.dark_state_prob
    if layout.kind == "hbt":
        alive = float(n) if a == 1.0 else (1.0 - a ** n) / (1.0 - a)
        return source.atom_transit_rate * alive * p2 * keep ** 2
    n_even = n // 2            # slots (0,1), (2,3), ... for the aligned phase
    n_odd = (n - 1) // 2       # slots (1,2), (3,4), ... for the shifted phase
    if a == 1.0:
        slots = 0.5 * (n_even + n_odd)
    else:
        s_even = (1.0 - a ** (2 * n_even)) / (1.0 - a * a)
        s_odd = a * (1.0 - a ** (2 * n_odd)) / (1.0 - a * a)
        slots = 0.5 * (s_even + s_odd)
    # each of the two emissions must also dodge its own dark-state branch
    per_slot = ((p1 - p2) ** 2
                * (1.0 - source.dark_state_prob) ** 2
                * (1.0 - source.routing_error_prob) ** 2
                * keep ** 2)
    return source.atom_transit_rate * slots * per_slot
