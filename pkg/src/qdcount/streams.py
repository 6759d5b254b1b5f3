"""Photon event streams and their on-disk formats.

A :class:`PhotonStream` is the interchange object between the simulator, the
detector chain, and the analysis estimators: one record per detected photon,
carrying the pulse it belongs to, the detector that clicked (or -1 before
any detector model is applied), and the delay since the start of its pulse
in integer picoseconds.

Two serializations are provided:

* CSV (default interchange): ``#``-prefixed JSON metadata header, then a
  ``pulse_index,detector,delay_ps`` table.  Human-inspectable and diffable.
* Compact binary: magic ``QDT1``, a length-prefixed JSON metadata block,
  then fixed 12-byte little-endian records ``(u32 pulse_index,
  i16 detector, u16 delay_high, u32 delay_low)`` where the delay is the
  48-bit value ``delay_high << 32 | delay_low``.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SCHEMA_VERSION",
    "PhotonStream",
    "read_stream",
    "read_stream_chunks",
    "write_stream",
]

SCHEMA_VERSION = 1

_MAGIC = b"QDT1"
_RECORD_DTYPE = np.dtype(
    [
        ("pulse", "<u4"),
        ("detector", "<i2"),
        ("delay_high", "<u2"),
        ("delay_low", "<u4"),
    ]
)
_VALID_DETECTORS = (-1, 0, 1)


def _readonly(a):
    out = np.array(a, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PhotonStream:
    """Time-tagged photon records from a pulsed experiment.

    Attributes
    ----------
    pulse_index : numpy.ndarray
        Pulse each photon belongs to (int64, >= 0).
    detector : numpy.ndarray
        Detector channel per photon: 0 or 1, or -1 for photons that have
        not passed a detector model yet (int8).
    delay_ps : numpy.ndarray
        Delay since the pulse start in integer picoseconds (int64); always
        in ``[0, period)``.
    meta : dict
        Metadata; must contain ``period_ns`` and ``n_pulses``.  Typical
        producers also record ``seed`` and ``config_hash``.

    Records are kept sorted by absolute time
    ``pulse_index * period + delay``; unsorted input is sorted stably on
    construction.
    """

    pulse_index: np.ndarray
    detector: np.ndarray
    delay_ps: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pulse = np.asarray(self.pulse_index, dtype=np.int64)
        det = np.asarray(self.detector, dtype=np.int8)
        delay = np.asarray(self.delay_ps, dtype=np.int64)
        if not (pulse.ndim == det.ndim == delay.ndim == 1):
            raise ValueError("stream columns must be 1-D arrays")
        if not (pulse.shape == det.shape == delay.shape):
            raise ValueError("stream columns must have equal length")
        if "period_ns" not in self.meta or "n_pulses" not in self.meta:
            raise ValueError("stream meta must contain period_ns and n_pulses")
        period_ps = float(self.meta["period_ns"]) * 1000.0
        if not period_ps > 0:
            raise ValueError(f"period_ns must be positive, got {self.meta['period_ns']}")
        if pulse.size:
            if pulse.min() < 0:
                raise ValueError("pulse_index must be non-negative")
            if delay.min() < 0:
                raise ValueError("delay_ps must be non-negative")
            if delay.max() >= period_ps:
                raise ValueError(
                    f"delay_ps must stay below the period ({period_ps:g} ps), "
                    f"got {delay.max()}"
                )
            if not np.isin(det, _VALID_DETECTORS).all():
                raise ValueError("detector values must be in {-1, 0, 1}")
            t_abs = pulse * period_ps + delay
            if np.any(np.diff(t_abs) < 0):
                order = np.argsort(t_abs, kind="stable")
                pulse = pulse[order]
                det = det[order]
                delay = delay[order]
        object.__setattr__(self, "pulse_index", _readonly(pulse))
        object.__setattr__(self, "detector", _readonly(det))
        object.__setattr__(self, "delay_ps", _readonly(delay))
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self) -> int:
        return self.pulse_index.shape[0]

    @property
    def period_ns(self) -> float:
        return float(self.meta["period_ns"])

    @property
    def n_pulses(self) -> int:
        return int(self.meta["n_pulses"])

    def select_detector(self, detector: int) -> "PhotonStream":
        """Sub-stream of photons seen by one detector channel."""
        mask = self.detector == detector
        return PhotonStream(
            pulse_index=self.pulse_index[mask],
            detector=self.detector[mask],
            delay_ps=self.delay_ps[mask],
            meta=dict(self.meta),
        )

    def absolute_times_ps(self) -> np.ndarray:
        """Per-photon absolute times in ps (float64)."""
        return self.pulse_index * (self.period_ns * 1000.0) + self.delay_ps


def _meta_for_write(stream: PhotonStream) -> dict:
    meta = dict(stream.meta)
    meta.setdefault("schema_version", SCHEMA_VERSION)
    return meta


def _write_csv(stream: PhotonStream, path):
    meta = _meta_for_write(stream)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("pulse_index,detector,delay_ps\n")
        for p, d, t in zip(stream.pulse_index, stream.detector, stream.delay_ps):
            fh.write(f"{p},{d},{t}\n")


def _read_csv(path) -> PhotonStream:
    meta_lines = []
    body = io.StringIO()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                meta_lines.append(line.lstrip("#").strip())
            elif line.strip() and not line.startswith("pulse_index"):
                body.write(line)
    meta = json.loads("\n".join(meta_lines)) if meta_lines else {}
    if body.tell():
        body.seek(0)
        data = np.loadtxt(body, delimiter=",", dtype=np.int64, ndmin=2)
    else:
        data = np.empty((0, 3), dtype=np.int64)
    if data.size == 0:
        data = np.empty((0, 3), dtype=np.int64)
    return PhotonStream(
        pulse_index=data[:, 0],
        detector=data[:, 1].astype(np.int8),
        delay_ps=data[:, 2],
        meta=meta,
    )


def _write_binary(stream: PhotonStream, path):
    if len(stream) and stream.pulse_index.max() >= 1 << 32:
        raise OverflowError("binary format stores pulse_index as u32")
    if len(stream) and stream.delay_ps.max() >= 1 << 48:
        raise OverflowError("binary format stores delay_ps as 48-bit")
    meta_blob = json.dumps(_meta_for_write(stream), sort_keys=True).encode()
    rec = np.empty(len(stream), dtype=_RECORD_DTYPE)
    rec["pulse"] = stream.pulse_index
    rec["detector"] = stream.detector
    rec["delay_high"] = stream.delay_ps >> 32
    rec["delay_low"] = stream.delay_ps & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(meta_blob).to_bytes(4, "little"))
        fh.write(meta_blob)
        fh.write(rec.tobytes())


def _read_binary(path) -> PhotonStream:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a {_MAGIC.decode()} stream: bad magic {magic!r}")
        meta_len = int.from_bytes(fh.read(4), "little")
        meta = json.loads(fh.read(meta_len).decode())
        payload = fh.read()
    if len(payload) % _RECORD_DTYPE.itemsize:
        raise ValueError("truncated binary stream")
    rec = np.frombuffer(payload, dtype=_RECORD_DTYPE)
    delay = (rec["delay_high"].astype(np.int64) << 32) | rec["delay_low"].astype(np.int64)
    return PhotonStream(
        pulse_index=rec["pulse"].astype(np.int64),
        detector=rec["detector"].astype(np.int8),
        delay_ps=delay,
        meta=meta,
    )


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "binary"):
            raise ValueError(f"format must be 'csv' or 'binary', got {fmt!r}")
        return fmt
    name = str(path).lower()
    if name.endswith(".csv"):
        return "csv"
    if name.endswith((".qdt", ".bin")):
        return "binary"
    raise ValueError(
        f"cannot infer stream format from {path!r}; pass format='csv' or 'binary'"
    )


def write_stream(stream: PhotonStream, path, format: str | None = None):
    """Write a stream to disk.

    Parameters
    ----------
    stream : PhotonStream
    path : str or os.PathLike
        Target file.  ``.csv`` selects CSV, ``.qdt``/``.bin`` selects the
        compact binary format; ``format`` overrides the inference.
    format : {'csv', 'binary'}, optional
    """
    fmt = _infer_format(path, format)
    if fmt == "csv":
        _write_csv(stream, path)
    else:
        _write_binary(stream, path)


def read_stream(path, format: str | None = None) -> PhotonStream:
    """Read a stream written by :func:`write_stream`.

    Unless ``format`` is given, the binary magic is sniffed first and CSV is
    assumed otherwise.
    """
    if format is None:
        with open(path, "rb") as fh:
            fmt = "binary" if fh.read(4) == _MAGIC else "csv"
    else:
        fmt = _infer_format(path, format)
    return _read_binary(path) if fmt == "binary" else _read_csv(path)


def read_stream_chunks(path, format: str | None = None, chunk_size: int = 1_000_000):
    """Yield a stream file as PhotonStream chunks of bounded size.

    Memory stays bounded regardless of file length, so histogram
    accumulation over arbitrarily long recordings needs only
    ``chunk_size`` photons at a time.  At least one (possibly empty)
    chunk is always yielded so the metadata survives.

    Parameters
    ----------
    path : str or os.PathLike
    format : {'csv', 'binary'}, optional
        Sniffed from the binary magic when omitted.
    chunk_size : int, optional
        Maximum photons per yielded chunk.

    Yields
    ------
    PhotonStream
        Consecutive slices sharing the file's metadata.
    """
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    if format is None:
        with open(path, "rb") as fh:
            fmt = "binary" if fh.read(4) == _MAGIC else "csv"
    else:
        fmt = _infer_format(path, format)

    if fmt == "binary":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _MAGIC:
                raise ValueError(f"not a {_MAGIC.decode()} stream: bad magic {magic!r}")
            meta_len = int.from_bytes(fh.read(4), "little")
            meta = json.loads(fh.read(meta_len).decode())
            first = True
            while True:
                payload = fh.read(chunk_size * _RECORD_DTYPE.itemsize)
                if not payload and not first:
                    break
                if len(payload) % _RECORD_DTYPE.itemsize:
                    raise ValueError("truncated binary stream")
                rec = np.frombuffer(payload, dtype=_RECORD_DTYPE)
                delay = (rec["delay_high"].astype(np.int64) << 32) | rec[
                    "delay_low"
                ].astype(np.int64)
                yield PhotonStream(
                    pulse_index=rec["pulse"].astype(np.int64),
                    detector=rec["detector"].astype(np.int8),
                    delay_ps=delay,
                    meta=dict(meta),
                )
                first = False
                if len(payload) < chunk_size * _RECORD_DTYPE.itemsize:
                    break
        return

    with open(path, "r", encoding="utf-8") as fh:
        meta_lines, rows, meta = [], [], None
        first = True

        def _emit(row_lines):
            if row_lines:
                body = io.StringIO("".join(row_lines))
                data = np.loadtxt(body, delimiter=",", dtype=np.int64, ndmin=2)
            else:
                data = np.empty((0, 3), dtype=np.int64)
            if data.size == 0:
                data = np.empty((0, 3), dtype=np.int64)
            return PhotonStream(
                pulse_index=data[:, 0],
                detector=data[:, 1].astype(np.int8),
                delay_ps=data[:, 2],
                meta=dict(meta) if meta else {},
            )

        for line in fh:
            if line.startswith("#"):
                meta_lines.append(line.lstrip("#").strip())
                continue
            if not line.strip() or line.startswith("pulse_index"):
                continue
            if meta is None:
                meta = json.loads("\n".join(meta_lines)) if meta_lines else {}
            rows.append(line)
            if len(rows) >= chunk_size:
                yield _emit(rows)
                first = False
                rows = []
        if meta is None:
            meta = json.loads("\n".join(meta_lines)) if meta_lines else {}
        if rows or first:
            yield _emit(rows)
