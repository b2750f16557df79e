"""Concrete scores and Standard MIDI File round-tripping.

Scores are monophonic and syllable-aligned: one note per syllable, each
note carrying its pitch, duration, and the rest preceding it, all in
quarter-note units. MIDI output is a single-track format-0 file at 480
ticks per quarter note, so every supported duration (multiples of 0.25)
maps to an exact integer tick count. The reader is an independent decoder
used as the round-trip oracle for the writer.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

from .errors import ContractError, MidiFormatError
from .gan import ATTRIBUTES, AttributeVocab

TICKS_PER_QUARTER = 480
NOTE_VELOCITY = 90
DEFAULT_TEMPO_BPM = 100.0


@dataclass(frozen=True)
class Note:
    pitch: int            # MIDI note number
    duration: float       # quarter-note multiples, > 0
    rest_before: float    # quarter-note multiples, >= 0


@dataclass
class Override:
    step: int
    attribute: str
    value: float


@dataclass
class Score:
    id: str
    syllables: list[str]
    notes: list[Note]
    tempo_bpm: float = DEFAULT_TEMPO_BPM
    seed: int = 0
    overrides: list[Override] = field(default_factory=list)

    def __post_init__(self):
        if len(self.notes) != len(self.syllables):
            raise ContractError(f"{len(self.notes)} notes for "
                                f"{len(self.syllables)} syllables")
        if self.tempo_bpm <= 0:
            raise ContractError("tempo must be positive")


def decode_attributes(indices, vocab: AttributeVocab) -> list[Note]:
    """Index triples (pitch, duration, rest) to concrete notes."""
    notes = []
    lists = [vocab.pitch_values, vocab.duration_values, vocab.rest_values]
    for step, triple in enumerate(indices):
        picked = []
        for name, idx, values in zip(ATTRIBUTES, triple, lists):
            if not 0 <= idx < len(values):
                raise ContractError(f"step {step}: {name} index {idx} out of "
                                    f"range 0..{len(values) - 1}")
            picked.append(values[idx])
        notes.append(Note(int(picked[0]), float(picked[1]), float(picked[2])))
    return notes


def _ticks(quarters: float) -> int:
    return int(round(quarters * TICKS_PER_QUARTER))


def _vlq(value: int) -> bytes:
    """Variable-length quantity, 7 bits per byte, high bit chains."""
    chunks = [value & 0x7F]
    value >>= 7
    while value:
        chunks.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(chunks))


def write_midi(score: Score) -> bytes:
    """Single-track format-0 SMF with tempo, lyric, and note events."""
    track = bytearray()
    tempo_us = int(round(60_000_000 / score.tempo_bpm))
    track += _vlq(0) + bytes([0xFF, 0x51, 0x03]) + tempo_us.to_bytes(3, "big")
    for syllable, note in zip(score.syllables, score.notes):
        text = syllable.encode("utf-8")
        track += _vlq(_ticks(note.rest_before)) + bytes([0xFF, 0x05]) + _vlq(len(text)) + text
        track += _vlq(0) + bytes([0x90, note.pitch, NOTE_VELOCITY])
        track += _vlq(_ticks(note.duration)) + bytes([0x80, note.pitch, 0x00])
    track += _vlq(0) + bytes([0xFF, 0x2F, 0x00])

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, TICKS_PER_QUARTER)
    return header + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MidiFormatError(f"truncated file: wanted {n} bytes at "
                                  f"offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def vlq(self) -> int:
        value = 0
        for _ in range(4):  # the SMF spec caps quantities at 4 bytes
            byte = self.take(1)[0]
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise MidiFormatError("overlong variable-length quantity (more than 4 bytes)")


def read_midi(data: bytes) -> list[tuple[int, str, tuple]]:
    """Decode a format-0 file into (absolute tick, kind, payload) events.

    Kinds: tempo(us_per_quarter), lyric(text), note_on(pitch, velocity),
    note_off(pitch, velocity), end_of_track().
    """
    r = _Reader(data)
    if r.take(4) != b"MThd":
        raise MidiFormatError("bad magic: file does not start with MThd")
    length, fmt, ntrks, division = struct.unpack(">IHHH", r.take(10))
    if length != 6:
        raise MidiFormatError(f"header length {length}, expected 6")
    if fmt != 0 or ntrks != 1:
        raise MidiFormatError(f"expected format 0 with one track, got format "
                              f"{fmt} with {ntrks}")
    if r.take(4) != b"MTrk":
        raise MidiFormatError("missing MTrk chunk")
    (track_len,) = struct.unpack(">I", r.take(4))
    end = r.pos + track_len
    if end > len(data):
        raise MidiFormatError("track length exceeds file size")

    events: list[tuple[int, str, tuple]] = []
    now = 0
    while r.pos < end:
        now += r.vlq()
        status = r.take(1)[0]
        if status == 0xFF:
            meta = r.take(1)[0]
            length = r.vlq()
            payload = r.take(length)
            if meta == 0x51:
                events.append((now, "tempo", (int.from_bytes(payload, "big"),)))
            elif meta == 0x05:
                events.append((now, "lyric", (payload.decode("utf-8"),)))
            elif meta == 0x2F:
                events.append((now, "end_of_track", ()))
            else:
                events.append((now, "meta", (meta, payload)))
        elif status & 0xF0 == 0x90:
            pitch, velocity = r.take(2)
            events.append((now, "note_on", (pitch, velocity)))
        elif status & 0xF0 == 0x80:
            pitch, velocity = r.take(2)
            events.append((now, "note_off", (pitch, velocity)))
        else:
            raise MidiFormatError(f"unsupported status byte 0x{status:02X} at "
                                  f"offset {r.pos - 1}")
    return events


def rebuild_score(events, score_id: str, seed: int = 0,
                  overrides: list[Override] | None = None) -> Score:
    """Reassemble a Score from decoded events (round-trip oracle side)."""
    tempo_bpm = DEFAULT_TEMPO_BPM
    syllables: list[str] = []
    notes: list[Note] = []
    pending: dict[str, tuple] = {}
    last_off = 0
    for time, kind, payload in events:
        if kind == "tempo":
            tempo_bpm = 60_000_000 / payload[0]
        elif kind == "lyric":
            syllables.append(payload[0])
            pending["rest"] = (time - last_off) / TICKS_PER_QUARTER
        elif kind == "note_on":
            pending["on"] = (time, payload[0])
        elif kind == "note_off":
            on_time, pitch = pending.pop("on")
            if payload[0] != pitch:
                raise MidiFormatError("note_off pitch does not match note_on")
            notes.append(Note(pitch, (time - on_time) / TICKS_PER_QUARTER,
                              pending.pop("rest")))
            last_off = time
    return Score(score_id, syllables, notes, tempo_bpm, seed, overrides or [])


def score_to_json(score: Score) -> str:
    """Canonical JSON: sorted keys, fixed separators, stable float forms."""
    doc = {
        "id": score.id,
        "tempo_bpm": score.tempo_bpm,
        "seed": score.seed,
        "steps": [
            {"syllable": s, "pitch": n.pitch, "duration": n.duration,
             "rest": n.rest_before}
            for s, n in zip(score.syllables, score.notes)
        ],
        "overrides": [
            {"step": o.step, "attribute": o.attribute, "value": o.value}
            for o in score.overrides
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def score_from_json(text: str) -> Score:
    doc = json.loads(text)
    notes = [Note(int(s["pitch"]), float(s["duration"]), float(s["rest"]))
             for s in doc["steps"]]
    overrides = [Override(int(o["step"]), o["attribute"], o["value"])
                 for o in doc["overrides"]]
    return Score(doc["id"], [s["syllable"] for s in doc["steps"]], notes,
                 float(doc["tempo_bpm"]), int(doc["seed"]), overrides)
