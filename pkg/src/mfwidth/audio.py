"""WAV decoding and carving of recordings into fixed-length analysis parts."""

from __future__ import annotations

import io
import json
import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .core import Series, as_series
from .errors import (
    BadFactor,
    ClipOutOfRange,
    NotWav,
    TruncatedData,
    UnsupportedCodec,
    ValidationError,
)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_EXTENSIBLE = 0xFFFE
# KSDATAFORMAT_SUBTYPE_PCM
_PCM_SUBFORMAT = b"\x01\x00\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int
    channels_collapsed: bool
    source: str | None = None
    data_offset: int = 0
    data_length: int = 0

    @property
    def duration_s(self) -> float:
        return self.samples.shape[0] / self.sample_rate_hz

    def to_series(self) -> Series:
        return Series(self.samples, float(self.sample_rate_hz), self.source)


def _pcm_to_float(raw: bytes, width: int) -> np.ndarray:
    """Integer PCM codes to floats in [-1, 1), full scale = 2**(bits-1)."""
    if width == 1:
        return (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if width == 2:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        return v.astype(np.float64) / float(1 << 23)
    if width == 4:
        return np.frombuffer(raw, dtype="<i4").astype(np.float64) / float(1 << 31)
    raise UnsupportedCodec(f"unsupported PCM sample width of {width} bytes")


def decode_wav(data: bytes, source: str | None = None) -> AudioClip:
    """Decode a RIFF/WAVE PCM byte string and mix it down to mono.

    Channels are averaged.  8-bit audio is unsigned with offset 128; wider
    integer formats are signed little-endian.
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotWav("missing RIFF/WAVE header")
    pos = 12
    fmt = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if cid == b"fmt ":
            if body + 16 > len(data) or size < 16:
                raise TruncatedData("fmt chunk is truncated")
            tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == WAVE_FORMAT_EXTENSIBLE:
                if size < 40 or body + 40 > len(data):
                    raise TruncatedData("extensible fmt chunk is truncated")
                if data[body + 24:body + 40] != _PCM_SUBFORMAT:
                    raise UnsupportedCodec("extensible WAV with non-PCM subformat")
                tag = WAVE_FORMAT_PCM
            if tag != WAVE_FORMAT_PCM:
                raise UnsupportedCodec(f"WAV format tag 0x{tag:04x} is not integer PCM")
            if channels < 1 or rate < 1 or bits not in (8, 16, 24, 32):
                raise UnsupportedCodec(f"unsupported layout: {channels} ch, {rate} Hz, {bits} bit")
            fmt = (channels, rate, bits // 8, block_align)
        elif cid == b"data":
            if fmt is None:
                raise NotWav("data chunk precedes fmt chunk")
            channels, rate, width, block_align = fmt
            if block_align != channels * width:
                raise UnsupportedCodec("block alignment does not match channels x width")
            if body + size > len(data):
                raise TruncatedData(f"data chunk declares {size} bytes, {len(data) - body} present")
            if size % block_align:
                raise TruncatedData("data chunk ends mid-frame")
            frames = _pcm_to_float(data[body:body + size], width).reshape(-1, channels)
            mono = frames[:, 0].copy() if channels == 1 else frames.mean(axis=1)
            return AudioClip(mono, int(rate), channels > 1, source, body, size)
        pos = body + size + (size & 1)
    if fmt is None:
        raise NotWav("no fmt chunk found")
    raise TruncatedData("no data chunk found")


def read_wav(path) -> AudioClip:
    path = Path(path)
    return decode_wav(path.read_bytes(), str(path))


def encode_wav(samples, sample_rate_hz: int = 44100, peak: float | None = None) -> bytes:
    """16-bit mono PCM encoding of ``samples``.

    With ``peak`` set, the series is first rescaled so that its largest
    magnitude equals ``peak`` (useful for generators with tiny amplitudes).
    """
    x = np.asarray(as_series(samples).samples, dtype=np.float64)
    if peak is not None:
        m = np.max(np.abs(x)) if x.size else 0.0
        if m > 0:
            x = x * (peak / m)
    codes = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate_hz))
        w.writeframes(codes.tobytes())
    return buf.getvalue()


@dataclass(frozen=True)
class PartitionPlan:
    clip_start_s: float = 0.0
    clip_length_s: float = 120.0
    n_parts: int = 4

    def __post_init__(self):
        if int(self.n_parts) != self.n_parts or self.n_parts < 1:
            raise ValidationError("n_parts must be a positive integer")
        if self.clip_start_s < 0:
            raise ValidationError("clip_start_s must be non-negative")
        if not self.clip_length_s > 0:
            raise ValidationError("clip_length_s must be positive")

    def part_samples(self, sample_rate_hz: int) -> int:
        total = self.clip_length_s * sample_rate_hz
        per = total / self.n_parts
        if abs(total - round(total)) > 1e-6 or abs(per - round(per)) > 1e-6:
            raise ValidationError(
                f"{self.clip_length_s} s at {sample_rate_hz} Hz does not split into "
                f"{self.n_parts} equal whole-sample parts")
        return int(round(per))


def extract_parts(clip: AudioClip, plan: PartitionPlan | None = None) -> list[Series]:
    """Cut ``plan.n_parts`` contiguous equal parts from the clip window."""
    plan = plan or PartitionPlan()
    rate = clip.sample_rate_hz
    per = plan.part_samples(rate)
    start = int(round(plan.clip_start_s * rate))
    stop = start + per * plan.n_parts
    if stop > clip.samples.shape[0]:
        raise ClipOutOfRange(
            f"window {plan.clip_start_s:g}+{plan.clip_length_s:g} s exceeds the "
            f"{clip.duration_s:.3f} s recording")
    label = clip.source or "clip"
    return [Series(clip.samples[start + i * per:start + (i + 1) * per], float(rate),
                   f"{label}#part{i + 1}")
            for i in range(plan.n_parts)]


def decimate(x, factor: int) -> Series:
    """Anti-aliased downsampling by an integer factor.

    Uses a polyphase FIR low-pass with unit DC gain and linear edge
    extension, so constant input stays constant.
    """
    if int(factor) != factor or factor < 1:
        raise BadFactor(f"decimation factor must be a positive integer, got {factor}")
    x = as_series(x)
    if factor == 1:
        return x
    y = signal.resample_poly(x.samples, 1, int(factor), padtype="line")
    rate = None if x.sample_rate_hz is None else x.sample_rate_hz / factor
    return Series(y, rate, x.label)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    gharana: str
    artist_id: str
    generation: int
    lineage: str | None = None
    clip_start_s: float = 0.0


def load_manifest(path) -> list[ManifestEntry]:
    """Read a manifest JSON array; relative paths resolve against its folder."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest is not valid JSON: {exc}") from exc
    return parse_manifest(raw, path.parent)


def parse_manifest(raw, base_dir=None) -> list[ManifestEntry]:
    if not isinstance(raw, list):
        raise ValidationError("manifest must be a JSON array")
    entries = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ValidationError(f"manifest entry {i} is not an object")
        missing = {"path", "gharana", "artist_id", "generation"} - item.keys()
        if missing:
            raise ValidationError(f"manifest entry {i} lacks {sorted(missing)}")
        gen = item["generation"]
        if not isinstance(gen, int) or isinstance(gen, bool) or gen < 1:
            raise ValidationError(f"manifest entry {i}: generation must be an integer >= 1")
        p = Path(item["path"])
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        entries.append(ManifestEntry(
            path=str(p),
            gharana=str(item["gharana"]),
            artist_id=str(item["artist_id"]),
            generation=gen,
            lineage=item.get("lineage"),
            clip_start_s=float(item.get("clip_start_s", 0.0)),
        ))
    return entries
