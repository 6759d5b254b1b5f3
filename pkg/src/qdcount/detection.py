"""Detector chain and histogram builders for HBT-style measurements.

The chain mirrors a two-SPAD Hanbury Brown-Twiss arm: a beam splitter
routes each photon, detection efficiency thins the stream, timing jitter
smears arrival times, detector dead time removes close followers, and dark
counts add an uncorrelated Poisson background.  Everything is a pure
function of (stream, config, seed), so shards can be processed
independently and merged.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .streams import SCHEMA_VERSION, PhotonStream

__all__ = [
    "DetectorConfig",
    "DecayHistogram",
    "CoincidenceHistogram",
    "apply_detector_chain",
    "build_decay_histogram",
    "build_coincidence_histogram",
]

_DETECTION_TAG = 0xDE7EC7
_SEED_MASK = (1 << 64) - 1


def _readonly(a):
    out = np.array(a, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DetectorConfig:
    """Parameters of the two-detector chain.

    Defaults are the clean-physics configuration (lossless, noiseless) so
    that analysis tests see the bare emission model; :meth:`realistic`
    returns a plausible SPAD-like preset.

    Attributes
    ----------
    efficiency : float
        Probability that a routed photon is detected, in [0, 1].
    dead_time_ns : float
        Per-detector hold-off after each kept photon.
    jitter_sigma_ps : float
        Gaussian timing jitter (standard deviation).
    dark_rate_cps : float
        Dark counts per second per detector.
    splitter_ratio : float
        Fraction of photons routed to detector 0.
    """

    efficiency: float = 1.0
    dead_time_ns: float = 0.0
    jitter_sigma_ps: float = 0.0
    dark_rate_cps: float = 0.0
    splitter_ratio: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if self.dead_time_ns < 0:
            raise ValueError(f"dead_time_ns must be >= 0, got {self.dead_time_ns}")
        if self.jitter_sigma_ps < 0:
            raise ValueError(f"jitter_sigma_ps must be >= 0, got {self.jitter_sigma_ps}")
        if self.dark_rate_cps < 0:
            raise ValueError(f"dark_rate_cps must be >= 0, got {self.dark_rate_cps}")
        if not 0.0 <= self.splitter_ratio <= 1.0:
            raise ValueError(f"splitter_ratio must lie in [0, 1], got {self.splitter_ratio}")

    @classmethod
    def realistic(cls) -> "DetectorConfig":
        """SPAD-like preset: 60% efficiency, 50 ns dead time, 350 ps jitter,
        100 dark counts per second."""
        return cls(
            efficiency=0.6,
            dead_time_ns=50.0,
            jitter_sigma_ps=350.0,
            dark_rate_cps=100.0,
            splitter_ratio=0.5,
        )


@njit(cache=True)
def _dead_time_keep(times_ps, dead_ps):
    keep = np.ones(times_ps.shape[0], np.bool_)
    last = -1e300
    for i in range(times_ps.shape[0]):
        if times_ps[i] - last >= dead_ps:
            last = times_ps[i]
        else:
            keep[i] = False
    return keep


def apply_detector_chain(
    stream: PhotonStream, config: DetectorConfig, seed: int
) -> PhotonStream:
    """Push a pre-detector stream through the two-detector chain.

    Per photon, in order: route by the splitter, keep with the detection
    efficiency, add Gaussian jitter, then drop photons arriving within the
    dead time of the previous kept photon on the same detector.  Dark
    counts are finally merged in as a uniform Poisson background per
    detector (they originate in the diode itself, so they are not subject
    to the optical dead-time bookkeeping applied here).

    Photons jittered to negative absolute time are dropped; photons
    jittered across a pulse boundary are reassigned to the neighboring
    pulse, keeping ``delay_ps`` inside ``[0, period)``.

    Parameters
    ----------
    stream : PhotonStream
        Pre-detector stream (all detector labels -1).
    config : DetectorConfig
    seed : int
        Non-negative; the chain RNG is independent of the emission RNG
        even for equal seed values.

    Returns
    -------
    PhotonStream
        Detected stream with detector labels in {0, 1}.
    """
    if len(stream) and not np.all(stream.detector == -1):
        raise ValueError("stream has already passed a detector chain")
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    rng = np.random.default_rng([seed & _SEED_MASK, _DETECTION_TAG])
    period_ps = stream.period_ns * 1000.0
    n_in = len(stream)

    det = (rng.random(n_in) >= config.splitter_ratio).astype(np.int8)
    if config.efficiency >= 1.0:
        kept = np.ones(n_in, dtype=bool)
    else:
        kept = rng.random(n_in) < config.efficiency
    det = det[kept]
    t_abs = stream.pulse_index[kept] * period_ps + stream.delay_ps[kept]
    if config.jitter_sigma_ps > 0 and t_abs.size:
        t_abs = t_abs + rng.normal(0.0, config.jitter_sigma_ps, size=t_abs.size)
        ok = t_abs >= 0
        t_abs = t_abs[ok]
        det = det[ok]

    pulse = np.floor(t_abs / period_ps).astype(np.int64)
    delay = np.rint(t_abs - pulse * period_ps).astype(np.int64)
    # rounding can nudge a delay onto the next period boundary
    over = delay >= period_ps
    pulse[over] += 1
    delay[over] = 0

    if config.dead_time_ns > 0 and pulse.size:
        order = np.argsort(pulse * period_ps + delay, kind="stable")
        pulse, delay, det = pulse[order], delay[order], det[order]
        dead_ps = config.dead_time_ns * 1000.0
        keep = np.ones(pulse.size, dtype=bool)
        for d in (0, 1):
            sel = det == d
            keep[sel] = _dead_time_keep(
                (pulse[sel] * period_ps + delay[sel]).astype(np.float64), dead_ps
            )
        pulse, delay, det = pulse[keep], delay[keep], det[keep]

    parts_p, parts_d, parts_t = [pulse], [det], [delay]
    if config.dark_rate_cps > 0:
        duration_ps = stream.n_pulses * period_ps
        lam = config.dark_rate_cps * duration_ps * 1e-12
        max_delay = int(math.ceil(period_ps)) - 1
        for d in (0, 1):
            n_dark = rng.poisson(lam)
            t_dark = rng.random(n_dark) * duration_ps
            p_dark = np.floor(t_dark / period_ps).astype(np.int64)
            dl_dark = np.minimum(
                np.floor(t_dark - p_dark * period_ps).astype(np.int64), max_delay
            )
            parts_p.append(p_dark)
            parts_d.append(np.full(n_dark, d, dtype=np.int8))
            parts_t.append(dl_dark)

    meta = dict(stream.meta)
    meta["detector_config"] = asdict(config)
    meta["detector_seed"] = int(seed)
    return PhotonStream(
        pulse_index=np.concatenate(parts_p),
        detector=np.concatenate(parts_d),
        delay_ps=np.concatenate(parts_t),
        meta=meta,
    )


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------


def _write_hist_csv(path, meta, starts, counts):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("bin_start_ps,count\n")
        for s, c in zip(starts, counts):
            fh.write(f"{s},{c}\n")


def _read_hist_csv(path):
    meta_lines, starts, counts = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                meta_lines.append(line.lstrip("#").strip())
                continue
            line = line.strip()
            if not line or line.startswith("bin_start_ps"):
                continue
            a, b = line.split(",")
            starts.append(int(a))
            counts.append(int(b))
    meta = json.loads("\n".join(meta_lines)) if meta_lines else {}
    return meta, np.array(starts, dtype=np.int64), np.array(counts, dtype=np.int64)


@dataclass(frozen=True)
class DecayHistogram:
    """Pooled-detector histogram of photon delays since the pulse.

    Attributes
    ----------
    bin_width_ps : int
    counts : numpy.ndarray
        Photons per bin, bin ``i`` covering ``[i*w, (i+1)*w)`` ps.
    n_pulses : int
        Pulses contributing to the histogram.
    period_ns : float
    """

    bin_width_ps: int
    counts: np.ndarray
    n_pulses: int
    period_ns: float

    def __post_init__(self):
        if self.bin_width_ps < 1:
            raise ValueError(f"bin_width_ps must be >= 1, got {self.bin_width_ps}")
        if self.n_pulses < 0:
            raise ValueError("n_pulses must be >= 0")
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or (counts.size and counts.min() < 0):
            raise ValueError("counts must be a 1-D array of non-negative integers")
        object.__setattr__(self, "counts", _readonly(counts))

    @property
    def bin_starts_ps(self) -> np.ndarray:
        return np.arange(self.counts.size, dtype=np.int64) * self.bin_width_ps

    @property
    def bin_centers_ns(self) -> np.ndarray:
        return (self.bin_starts_ps + 0.5 * self.bin_width_ps) / 1000.0

    @property
    def total_counts(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "DecayHistogram") -> "DecayHistogram":
        if not isinstance(other, DecayHistogram):
            return NotImplemented
        if self.bin_width_ps != other.bin_width_ps or self.counts.size != other.counts.size:
            raise ValueError("histograms must share binning to merge")
        if self.period_ns != other.period_ns:
            raise ValueError("histograms must share the pulse period to merge")
        return DecayHistogram(
            bin_width_ps=self.bin_width_ps,
            counts=self.counts + other.counts,
            n_pulses=self.n_pulses + other.n_pulses,
            period_ns=self.period_ns,
        )

    def to_csv(self, path):
        meta = {
            "kind": "decay",
            "bin_width_ps": self.bin_width_ps,
            "n_pulses": self.n_pulses,
            "period_ns": self.period_ns,
            "schema_version": SCHEMA_VERSION,
        }
        _write_hist_csv(path, meta, self.bin_starts_ps, self.counts)

    @classmethod
    def from_csv(cls, path) -> "DecayHistogram":
        meta, starts, counts = _read_hist_csv(path)
        width = int(meta.get("bin_width_ps", starts[1] - starts[0] if starts.size > 1 else 1))
        return cls(
            bin_width_ps=width,
            counts=counts,
            n_pulses=int(meta.get("n_pulses", 0)),
            period_ns=float(meta.get("period_ns", (starts[-1] + width) / 1000.0 if starts.size else 1.0)),
        )


def build_decay_histogram(
    stream: PhotonStream, bin_width_ps: int, first_photon_only: bool = False
) -> DecayHistogram:
    """Histogram photon delays, both detectors pooled.

    Bins cover ``[0, period)``; the histogram from disjoint pulse ranges
    adds exactly, so shards can be reduced with ``+``.

    With ``first_photon_only`` each pulse contributes at most its earliest
    photon, emulating classic start-stop TCSPC electronics.  For a
    multi-photon emitter that restricts the histogram to first-arrival
    statistics, whose decay reflects the initial-state emission rate rather
    than the whole emission cascade.
    """
    if bin_width_ps < 1:
        raise ValueError(f"bin_width_ps must be >= 1, got {bin_width_ps}")
    n_bins = int(math.ceil(stream.period_ns * 1000.0 / bin_width_ps))
    delays = stream.delay_ps
    if first_photon_only and len(stream):
        # records are sorted by absolute time, so the first occurrence of a
        # pulse index is the earliest photon of that pulse
        _, first = np.unique(stream.pulse_index, return_index=True)
        delays = delays[first]
    if delays.size:
        counts = np.bincount(delays // bin_width_ps, minlength=n_bins)
    else:
        counts = np.zeros(n_bins, dtype=np.int64)
    return DecayHistogram(
        bin_width_ps=int(bin_width_ps),
        counts=counts,
        n_pulses=stream.n_pulses,
        period_ns=stream.period_ns,
    )


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Histogram of detector-1 minus detector-0 arrival-time differences.

    The axis is symmetric and spans ``(k_periods + 1/2)`` pulse periods on
    each side, so every correlation peak from ``-k_periods`` to
    ``+k_periods`` lies whole inside the range.

    Attributes
    ----------
    bin_width_ps : int
    counts : numpy.ndarray
        Pair counts per bin; zero delay sits on the central bin edge.
    k_periods : int
        Number of side peaks covered on each side (>= 3).
    period_ns : float
    n_pulses : int
    """

    bin_width_ps: int
    counts: np.ndarray
    k_periods: int
    period_ns: float
    n_pulses: int

    def __post_init__(self):
        if self.bin_width_ps < 1:
            raise ValueError(f"bin_width_ps must be >= 1, got {self.bin_width_ps}")
        if self.k_periods < 3:
            raise ValueError(f"k_periods must be >= 3, got {self.k_periods}")
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size % 2:
            raise ValueError("counts must be a 1-D array of even length (symmetric axis)")
        object.__setattr__(self, "counts", _readonly(counts))

    @property
    def bin_edges_ps(self) -> np.ndarray:
        half = self.counts.size // 2
        return (np.arange(self.counts.size + 1, dtype=np.int64) - half) * self.bin_width_ps

    @property
    def bin_centers_ps(self) -> np.ndarray:
        return (self.bin_edges_ps[:-1] + self.bin_edges_ps[1:]) / 2.0

    def __add__(self, other: "CoincidenceHistogram") -> "CoincidenceHistogram":
        if not isinstance(other, CoincidenceHistogram):
            return NotImplemented
        if (
            self.bin_width_ps != other.bin_width_ps
            or self.counts.size != other.counts.size
            or self.k_periods != other.k_periods
            or self.period_ns != other.period_ns
        ):
            raise ValueError("histograms must share binning to merge")
        return CoincidenceHistogram(
            bin_width_ps=self.bin_width_ps,
            counts=self.counts + other.counts,
            k_periods=self.k_periods,
            period_ns=self.period_ns,
            n_pulses=self.n_pulses + other.n_pulses,
        )

    def peak_window_counts(self, peak: int, half_window_ps: float | None = None) -> int:
        """Total pairs within a window centered on peak ``peak * period``.

        The default half-window is a quarter period.
        """
        if abs(peak) > self.k_periods:
            raise ValueError(f"peak {peak} outside +-{self.k_periods}")
        period_ps = self.period_ns * 1000.0
        if half_window_ps is None:
            half_window_ps = period_ps / 4.0
        center = peak * period_ps
        centers = self.bin_centers_ps
        sel = np.abs(centers - center) <= half_window_ps
        return int(self.counts[sel].sum())

    def to_csv(self, path):
        meta = {
            "kind": "coincidence",
            "bin_width_ps": self.bin_width_ps,
            "k_periods": self.k_periods,
            "period_ns": self.period_ns,
            "n_pulses": self.n_pulses,
            "schema_version": SCHEMA_VERSION,
        }
        _write_hist_csv(path, meta, self.bin_edges_ps[:-1], self.counts)

    @classmethod
    def from_csv(cls, path) -> "CoincidenceHistogram":
        meta, starts, counts = _read_hist_csv(path)
        width = int(meta.get("bin_width_ps", starts[1] - starts[0] if starts.size > 1 else 1))
        return cls(
            bin_width_ps=width,
            counts=counts,
            k_periods=int(meta.get("k_periods", 3)),
            period_ns=float(meta["period_ns"]),
            n_pulses=int(meta.get("n_pulses", 0)),
        )


def build_coincidence_histogram(
    stream: PhotonStream, bin_width_ps: int, k_periods: int = 5
) -> CoincidenceHistogram:
    """Correlate detector 0 against detector 1.

    Every (detector-0, detector-1) photon pair with
    ``|t1 - t0| <= (k_periods + 1/2) * period`` contributes one count at
    ``t1 - t0``.  Pairing is done chunk-wise against a sorted time axis,
    so memory stays bounded for long streams.
    """
    if k_periods < 3:
        raise ValueError(f"k_periods must be >= 3, got {k_periods}")
    if bin_width_ps < 1:
        raise ValueError(f"bin_width_ps must be >= 1, got {bin_width_ps}")
    period_ps = stream.period_ns * 1000.0
    reach = (k_periods + 0.5) * period_ps
    half_bins = int(math.ceil(reach / bin_width_ps))
    counts = np.zeros(2 * half_bins, dtype=np.int64)

    t0 = np.sort(stream.absolute_times_ps()[stream.detector == 0])
    t1 = np.sort(stream.absolute_times_ps()[stream.detector == 1])
    if t0.size and t1.size:
        chunk = 1 << 14
        for lo in range(0, t0.size, chunk):
            ref = t0[lo : lo + chunk]
            left = np.searchsorted(t1, ref - reach, side="left")
            right = np.searchsorted(t1, ref + reach, side="right")
            lens = right - left
            total = int(lens.sum())
            if total == 0:
                continue
            # flat indices of every partner slice [left_i, right_i)
            base = np.repeat(np.cumsum(lens) - lens, lens)
            pos = np.repeat(left, lens) + (np.arange(total) - base)
            delta = t1[pos] - np.repeat(ref, lens)
            idx = np.floor(delta / bin_width_ps).astype(np.int64) + half_bins
            np.clip(idx, 0, counts.size - 1, out=idx)
            counts += np.bincount(idx, minlength=counts.size)
    return CoincidenceHistogram(
        bin_width_ps=int(bin_width_ps),
        counts=counts,
        k_periods=int(k_periods),
        period_ns=stream.period_ns,
        n_pulses=stream.n_pulses,
    )
