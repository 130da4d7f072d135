"""Stream ingestion, multi-sensor alignment, and cochleagram writers.

Frames move between stages through bounded queues. A full queue blocks the
producer; nothing is dropped after synchronization.
"""

import io
import queue
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FramingError, LayoutError, ParseError, UnsupportedFormat

_PCM = 1
_FLOAT = 3
_EXTENSIBLE = 0xFFFE
DEFAULT_QUEUE_DEPTH = 4096


@dataclass
class SyncReport:
    drops: list                 # valid frames not emitted, per input stream
    gaps: list                  # (stream, first missing index, length)
    withheld: int               # aligned indices skipped because a sensor was missing
    start_index: int = 0


@dataclass
class FrameStream:
    """Frames of simultaneous sensor samples.

    ``samples`` is (n_frames, n_sensors). Frame j sits at sample index
    ``start + offset + j``; ``valid`` marks frames that carry real data.
    After synchronization ``source_index`` keeps the aligned index each
    frame came from.
    """

    sample_rate_hz: float
    samples: np.ndarray
    start: int = 0
    offset: int = 0
    valid: np.ndarray = None
    source_index: np.ndarray = None
    report: SyncReport = None

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ConfigError("sample rate must be positive")
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[1] < 1:
            raise LayoutError("samples must be (n_frames, n_sensors)")
        self.samples = s
        if self.valid is None:
            self.valid = np.ones(len(s), dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != (len(s),):
                raise LayoutError("one validity flag per frame")

    @property
    def n_sensors(self):
        return self.samples.shape[1]

    @property
    def n_frames(self):
        return self.samples.shape[0]

    @property
    def timestamps(self):
        return self.start + self.offset + np.arange(self.n_frames)

    def frames(self):
        """Iterate (timestamp, samples) over valid frames."""
        for ts, ok, row in zip(self.timestamps, self.valid, self.samples):
            if ok:
                yield int(ts), row

    def sensor(self, i):
        return self.samples[:, i]


# ---------------------------------------------------------------------------
# WAV


def _read_exact(buf, pos, n, what):
    if pos + n > len(buf):
        raise ParseError(f"truncated {what}: need {n} bytes at offset {pos}, "
                         f"file has {len(buf) - pos}", offset=pos)
    return buf[pos:pos + n]


def _decode_pcm(data, bits, n_ch):
    width = bits // 8
    n = len(data) // (width * n_ch)
    data = data[:n * width * n_ch]
    if bits == 16:
        ints = np.frombuffer(data, dtype="<i2").astype(np.int64)
    elif bits == 32:
        ints = np.frombuffer(data, dtype="<i4").astype(np.int64)
    else:
        ints = _i24_from_bytes(data, "little")
    scale = float(1 << (bits - 1))
    return (ints / scale).reshape(n, n_ch)


def read_wav(source):
    """Read a RIFF WAVE file (PCM 16/24/32 or IEEE float 32/64)."""
    if isinstance(source, (bytes, bytearray)):
        buf = bytes(source)
    elif hasattr(source, "read"):
        buf = source.read()
    else:
        with open(source, "rb") as fh:
            buf = fh.read()

    head = _read_exact(buf, 0, 12, "RIFF header")
    if head[:4] != b"RIFF":
        raise ParseError("missing RIFF tag", offset=0)
    if head[8:12] != b"WAVE":
        raise ParseError("RIFF form type is not WAVE", offset=8)

    pos = 12
    fmt = None
    while True:
        if pos + 8 > len(buf):
            raise ParseError("no data chunk found", offset=pos)
        cid, size = struct.unpack("<4sI", buf[pos:pos + 8])
        body = pos + 8
        if cid == b"fmt ":
            raw = _read_exact(buf, body, size, "fmt chunk")
            if size < 16:
                raise ParseError(f"fmt chunk too short ({size} bytes)", offset=body)
            tag, n_ch, rate, _, _, bits = struct.unpack("<HHIIHH", raw[:16])
            if tag == _EXTENSIBLE:
                if size < 40:
                    raise ParseError("extensible fmt chunk too short", offset=body)
                tag = struct.unpack("<H", raw[24:26])[0]
            fmt = (tag, n_ch, rate, bits)
        elif cid == b"data":
            if fmt is None:
                raise ParseError("data chunk before fmt chunk", offset=pos)
            have = len(buf) - body
            if size > have:
                raise ParseError(f"truncated data: header promises {size} bytes, "
                                 f"file has {have}", offset=body)
            data = buf[body:body + size]
            break
        pos = body + size + (size & 1)

    tag, n_ch, rate, bits = fmt
    if n_ch < 1:
        raise ParseError("channel count is zero", offset=22)
    if rate < 1:
        raise ParseError("sample rate is zero", offset=24)
    if tag == _PCM and bits in (16, 24, 32):
        samples = _decode_pcm(data, bits, n_ch)
    elif tag == _FLOAT and bits in (32, 64):
        dt = "<f4" if bits == 32 else "<f8"
        n = len(data) // (bits // 8 * n_ch)
        samples = np.frombuffer(data[:n * n_ch * bits // 8], dtype=dt)
        samples = samples.astype(np.float64).reshape(n, n_ch)
    else:
        raise UnsupportedFormat(f"format tag {tag} with {bits}-bit samples is not supported")
    return FrameStream(float(rate), samples)


def write_wav(dest, samples, sample_rate_hz, bits=16, float_format=False):
    """Reference WAV writer; the inverse of read_wav on exact sample grids."""
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    n, n_ch = s.shape
    if float_format:
        if bits not in (32, 64):
            raise UnsupportedFormat("float WAV needs 32 or 64 bits")
        data = s.astype("<f4" if bits == 32 else "<f8").tobytes()
        tag = _FLOAT
    else:
        if bits not in (16, 24, 32):
            raise UnsupportedFormat("PCM WAV needs 16, 24 or 32 bits")
        full = 1 << (bits - 1)
        ints = np.clip(np.round(s * full), -full, full - 1).astype(np.int64)
        if bits == 16:
            data = ints.astype("<i2").tobytes()
        elif bits == 32:
            data = ints.astype("<i4").tobytes()
        else:
            data = _i24_to_bytes(ints.ravel(), "little")
        tag = _PCM
    block = n_ch * bits // 8
    fmt = struct.pack("<HHIIHH", tag, n_ch, int(sample_rate_hz),
                      int(sample_rate_hz) * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(data)) + data
    if len(data) & 1:
        body += b"\x00"
    out = b"RIFF" + struct.pack("<I", len(body)) + body
    if hasattr(dest, "write"):
        dest.write(out)
    else:
        with open(dest, "wb") as fh:
            fh.write(out)
    return len(out)


# ---------------------------------------------------------------------------
# raw 24-bit


def _i24_from_bytes(data, endianness):
    b = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.int64)
    if endianness == "little":
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
    else:
        v = b[:, 2] | (b[:, 1] << 8) | (b[:, 0] << 16)
    return np.where(v >= 1 << 23, v - (1 << 24), v)


def _i24_to_bytes(ints, endianness):
    u = np.asarray(ints, dtype=np.int64) & 0xFFFFFF
    b = np.stack([u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF], axis=1).astype(np.uint8)
    if endianness == "big":
        b = b[:, ::-1]
    return b.tobytes()


def read_raw_i24(source, sample_rate_hz, n_sensors=1, endianness="little", strict=True):
    """Interleaved signed 24-bit words, one frame per n_sensors words."""
    if endianness not in ("little", "big"):
        raise ConfigError("endianness must be 'little' or 'big'")
    if n_sensors < 1:
        raise ConfigError("n_sensors must be at least 1")
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    frame = 3 * n_sensors
    extra = len(data) % frame
    if extra:
        if strict:
            raise FramingError(f"{len(data)} bytes is not a whole number of "
                               f"{frame}-byte frames ({extra} left over)")
        data = data[:len(data) - extra]
    ints = _i24_from_bytes(data, endianness)
    return FrameStream(float(sample_rate_hz), (ints / float(1 << 23)).reshape(-1, n_sensors))


def write_raw_i24(dest, samples, endianness="little"):
    s = np.asarray(samples, dtype=np.float64)
    ints = np.clip(np.round(s * (1 << 23)), -(1 << 23), (1 << 23) - 1).astype(np.int64)
    data = _i24_to_bytes(ints.ravel(), endianness)
    if hasattr(dest, "write"):
        dest.write(data)
    else:
        with open(dest, "wb") as fh:
            fh.write(data)
    return len(data)


# ---------------------------------------------------------------------------
# synchronization


def synchronize(streams):
    """Align streams on sample index and gate on every sensor being valid.

    Emitted frames are renumbered consecutively from zero; the aligned
    index of each frame is kept in ``source_index``.
    """
    streams = list(streams)
    if not streams:
        raise ConfigError("nothing to synchronize")
    rate = streams[0].sample_rate_hz
    for s in streams[1:]:
        if s.sample_rate_hz != rate:
            raise ConfigError(f"sample rate mismatch: {rate} vs {s.sample_rate_hz}")

    lo = max(int(s.start + s.offset) for s in streams)
    hi = min(int(s.start + s.offset + s.n_frames) for s in streams)
    span = max(hi - lo, 0)
    ok = np.ones(span, dtype=bool)
    gaps = []
    for i, s in enumerate(streams):
        a = lo - int(s.start + s.offset)
        v = s.valid[a:a + span] if span else np.zeros(0, dtype=bool)
        ok &= v
        missing = np.flatnonzero(~v)
        if missing.size:
            # runs of consecutive missing indices
            cuts = np.flatnonzero(np.diff(missing) > 1) + 1
            for run in np.split(missing, cuts):
                gaps.append((i, lo + int(run[0]), int(run.size)))

    keep = np.flatnonzero(ok)
    parts = []
    drops = []
    for s in streams:
        a = lo - int(s.start + s.offset)
        parts.append(s.samples[a + keep])
        drops.append(int(s.valid.sum()) - keep.size)
    samples = np.concatenate(parts, axis=1) if parts else np.zeros((0, 0))
    report = SyncReport(drops=drops, gaps=gaps, withheld=int(span - keep.size), start_index=lo)
    return FrameStream(rate, samples, valid=np.ones(keep.size, dtype=bool),
                       source_index=lo + keep, report=report)


# ---------------------------------------------------------------------------
# bounded frame queue


class _End:
    pass


END = _End()


class FrameQueue:
    """Bounded FIFO of frame blocks, sized in frames.

    ``put`` blocks while the queue lacks room for the block (backpressure);
    a block larger than the whole capacity is admitted once the queue is
    empty so it cannot deadlock.
    """

    def __init__(self, depth=DEFAULT_QUEUE_DEPTH):
        if depth < 1:
            raise ConfigError("queue depth must be at least 1")
        self.depth = depth
        self._items = queue.SimpleQueue()
        self._level = 0
        self._cv = threading.Condition()
        self.high_water = 0
        self.blocked_puts = 0

    def ready(self, n=1):
        with self._cv:
            return self._level + n <= self.depth

    def put(self, block):
        n = 0 if block is END else len(block)
        with self._cv:
            if n and self._level and self._level + n > self.depth:
                self.blocked_puts += 1
            while n and self._level and self._level + n > self.depth:
                self._cv.wait()
            self._level += n
            self.high_water = max(self.high_water, self._level)
            self._items.put(block)

    def get(self):
        block = self._items.get()
        if block is not END:
            with self._cv:
                self._level -= len(block)
                self._cv.notify_all()
        return block


# ---------------------------------------------------------------------------
# cochleagram sinks

FORMATS = ("binary-le-float32", "csv", "pgm")
NORMALIZATIONS = ("none", "per-block-max")
HEADER_MAGIC = b"CGRM"


@dataclass
class CochleagramSink:
    n_channels: int
    samples_per_block: int = None   # None accepts any block length
    format: str = "binary-le-float32"
    normalization: str = "none"
    header: bool = False
    sample_rate_hz: float = 0.0
    bytes_written: int = field(default=0, init=False)
    _header_done: bool = field(default=False, init=False, repr=False)

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
        if self.n_channels < 1:
            raise ConfigError("n_channels must be at least 1")

    def check(self, block):
        b = np.asarray(block)
        if b.ndim != 2 or b.shape[1] != self.n_channels:
            raise LayoutError(f"block shape {b.shape} does not match "
                              f"{self.n_channels} channels")
        if self.samples_per_block is not None and b.shape[0] != self.samples_per_block:
            raise LayoutError(f"block has {b.shape[0]} samples, sink expects "
                              f"{self.samples_per_block}")
        return b

    def encode(self, block):
        b = self.check(block)
        out = b""
        if self.format == "binary-le-float32":
            if self.header and not self._header_done:
                out += HEADER_MAGIC + struct.pack("<III", self.n_channels,
                                                  int(self.sample_rate_hz), 0)
            out += np.ascontiguousarray(b, dtype="<f4").tobytes()
        elif self.format == "csv":
            text = io.StringIO()
            if not self._header_done:
                text.write(",".join(f"ch{i}" for i in range(self.n_channels)) + "\n")
            np.savetxt(text, b.astype(np.float32), fmt="%.9g", delimiter=",")
            out = text.getvalue().encode()
        else:
            out = _pgm_image(b, self.normalization)
        self._header_done = True
        self.bytes_written += len(out)
        return out


def _pgm_image(block, normalization):
    """One P5 image per block: channels are rows, samples are columns."""
    mag = np.abs(np.asarray(block, dtype=np.float64)).T
    if normalization == "per-block-max":
        peak = mag.max() if mag.size else 0.0
        norm = mag / peak if peak > 0 else np.zeros_like(mag)
    else:
        norm = np.clip(mag, 0.0, 1.0)
    pix = np.round(norm * 255.0).astype(np.uint8)
    rows, cols = pix.shape
    return f"P5\n{cols} {rows}\n255\n".encode() + pix.tobytes()


def write_cochleagram(sink, blocks, dest):
    """Write blocks to ``dest`` (path or binary file); returns bytes written."""
    own = not hasattr(dest, "write")
    fh = open(dest, "wb") if own else dest
    total = 0
    try:
        for block in blocks:
            data = sink.encode(block)
            fh.write(data)
            total += len(data)
    finally:
        if own:
            fh.close()
    return total


def read_cochleagram(source, n_channels=None, header=False):
    """Read binary float32 frames back; returns (array, sample_rate or None)."""
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    rate = None
    if header:
        if data[:4] != HEADER_MAGIC or len(data) < 16:
            raise ParseError("missing CGRM header", offset=0)
        n_channels, rate, _ = struct.unpack("<III", data[4:16])
        data = data[16:]
    if not n_channels:
        raise ConfigError("channel count needed for headerless input")
    frame = 4 * n_channels
    if len(data) % frame:
        raise FramingError(f"{len(data)} bytes is not a whole number of {frame}-byte frames")
    return np.frombuffer(data, dtype="<f4").reshape(-1, n_channels), rate


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineStats:
    frames_in: int
    frames_out: int
    elapsed_s: float
    sample_rate_hz: float
    queue_high_water: int = 0
    blocked_puts: int = 0

    @property
    def throughput(self):
        return self.frames_in / self.elapsed_s if self.elapsed_s > 0 else float("inf")

    @property
    def realtime_factor(self):
        dur = self.frames_in / self.sample_rate_hz
        return dur / self.elapsed_s if self.elapsed_s > 0 else float("inf")


def _blocks(stream, block):
    valid = stream.samples[stream.valid]
    for i in range(0, len(valid), block):
        yield valid[i:i + block]


def run_pipeline(stream, bindings, sinks, block=1024, threaded=True,
                 depth=DEFAULT_QUEUE_DEPTH):
    """Push a synchronized stream through engine instances into sinks.

    ``bindings`` is a list of (engine, sensor_index); ``sinks`` a matching
    list of writable callables taking one output block. With
    ``threaded=True`` reader, engines and writers run as three stages joined
    by bounded queues; otherwise everything runs in order on this thread.
    Both modes produce the same bytes.
    """
    if len(bindings) != len(sinks):
        raise ConfigError("one sink per engine instance")
    for _, idx in bindings:
        if not 0 <= idx < stream.n_sensors:
            raise ConfigError(f"sensor {idx} not in stream with {stream.n_sensors} sensors")
    if block < 1:
        raise ConfigError("block must be at least 1 frame")

    counts = {"in": 0, "out": 0}

    def compute(frames):
        return [eng.process(np.ascontiguousarray(frames[:, idx])) for eng, idx in bindings]

    def emit(outs):
        for sink, out in zip(sinks, outs):
            sink(out)
        counts["out"] += len(outs[0]) if outs else 0

    t0 = time.perf_counter()
    if not threaded:
        for frames in _blocks(stream, block):
            counts["in"] += len(frames)
            emit(compute(frames))
        return PipelineStats(counts["in"], counts["out"], time.perf_counter() - t0,
                             stream.sample_rate_hz)

    q_in = FrameQueue(depth)
    q_out = FrameQueue(depth)
    errors = []

    def reader():
        try:
            for frames in _blocks(stream, block):
                counts["in"] += len(frames)
                q_in.put(frames)
        except BaseException as exc:  # surfaced after join
            errors.append(exc)
        finally:
            q_in.put(END)

    def engine():
        try:
            while True:
                frames = q_in.get()
                if frames is END:
                    break
                q_out.put(_Outs(compute(frames)))
        except BaseException as exc:
            errors.append(exc)
            # keep draining so the reader never blocks forever
            while q_in.get() is not END:
                pass
        finally:
            q_out.put(END)

    workers = [threading.Thread(target=reader, daemon=True),
               threading.Thread(target=engine, daemon=True)]
    for w in workers:
        w.start()
    try:
        while True:
            outs = q_out.get()
            if outs is END:
                break
            if not errors:
                emit(outs.blocks)
    finally:
        for w in workers:
            w.join()
    if errors:
        raise errors[0]
    return PipelineStats(counts["in"], counts["out"], time.perf_counter() - t0,
                         stream.sample_rate_hz,
                         queue_high_water=max(q_in.high_water, q_out.high_water),
                         blocked_puts=q_in.blocked_puts + q_out.blocked_puts)


class _Outs:
    """Engine outputs for one input block; sized by frame count for the queue."""

    def __init__(self, blocks):
        self.blocks = blocks
        self._n = len(blocks[0]) if blocks else 0

    def __len__(self):
        return self._n


def file_sink(sink, path):
    """Return (callable, close) writing encoded blocks of ``sink`` to ``path``."""
    fh = open(path, "wb")

    def write(block):
        fh.write(sink.encode(block))

    return write, fh.close

