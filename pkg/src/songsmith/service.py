"""Inference facade: generation with ranked candidates, recomposition,
session storage, and the HTTP surface the studio UI talks to.

Generation is a pure function of (lyrics, checkpoint fingerprint, seed, k):
the presented melody is the greedy argmax of each attribute head, and the
per-step candidate lists carry the heads' probabilities so a human can
swap any step's attribute for a recommended alternative. Recomposition is
a local substitution; it never regenerates the other steps.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import threading
from collections import OrderedDict
from dataclasses import dataclass, replace

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .errors import ContractError, NotFoundError, TokenizationError
from .gan import ATTRIBUTES, generator_forward
from .lyrics import encode, tokenize_lyrics
from .score import Note, Override, Score, score_to_json, write_midi
from .training import Checkpoint

DEFAULT_K = 5
DEFAULT_SEED = 0


@dataclass(frozen=True)
class Candidate:
    value: float | int
    probability: float


@dataclass
class StepCandidates:
    pitch: list[Candidate]
    duration: list[Candidate]
    rest: list[Candidate]

    def of(self, attribute: str) -> list[Candidate]:
        return getattr(self, attribute)


@dataclass
class GenerationResult:
    score: Score
    candidates: list[StepCandidates]
    seed: int
    k: int
    fingerprint: str

    def to_dict(self) -> dict:
        return {
            "score": json.loads(score_to_json(self.score)),
            "candidates": [
                {attr: [{"value": c.value, "probability": c.probability}
                        for c in sc.of(attr)]
                 for attr in ATTRIBUTES}
                for sc in self.candidates
            ],
            "seed": self.seed,
            "k": self.k,
            "fingerprint": self.fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def top_k(dist: np.ndarray, values: list, k: int) -> list[Candidate]:
    """k most probable values, descending; ties break on ascending value."""
    if not 1 <= k <= len(values):
        raise ContractError(f"k must be in 1..{len(values)}, got {k}")
    order = sorted(range(len(values)), key=lambda i: (-dist[i], values[i]))
    return [Candidate(values[i], float(dist[i])) for i in order[:k]]


def generate_melody(lyrics: str, ckpt: Checkpoint, seed: int = DEFAULT_SEED,
                    k: int = DEFAULT_K, fingerprint: str | None = None) -> GenerationResult:
    """Greedy conditioned generation plus ranked per-step candidates."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    seq = tokenize_lyrics(lyrics)
    emb = encode(seq, ckpt.syl_table, ckpt.word_table)
    steps = len(seq.syllables)

    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.standard_normal((steps, ckpt.gen.noise_dim))
    out = generator_forward(emb, noise, ckpt.gen, ckpt.config.tau_end, rng)
    dists = out.distributions()

    vocab = ckpt.attr_vocab
    indices = np.stack([np.argmax(dists.head(a), axis=1) for a in ATTRIBUTES], axis=1)
    notes = [Note(vocab.pitch_values[p], vocab.duration_values[d], vocab.rest_values[r])
             for p, d, r in indices]

    fingerprint = fingerprint or ckpt.fingerprint()
    score_id = hashlib.sha256(
        f"{fingerprint}:{seed}:{k}:{lyrics}".encode("utf-8")).hexdigest()[:16]
    score = Score(score_id, seq.syllables, notes, seed=seed)

    candidates = []
    for t in range(steps):
        per_attr = {}
        for attr in ATTRIBUTES:
            values = vocab.values_of(attr)
            per_attr[attr] = top_k(dists.head(attr)[t], values, min(k, len(values)))
        candidates.append(StepCandidates(**per_attr))
    return GenerationResult(score, candidates, seed, k, fingerprint)


def recompose_result(parent: GenerationResult, overrides: list[Override],
                     vocab, new_score_id: str) -> GenerationResult:
    """Apply value overrides to a parent result; parent stays untouched."""
    notes = list(parent.score.notes)
    applied = list(parent.score.overrides)
    for o in overrides:
        if not 0 <= o.step < len(notes):
            raise ContractError(f"override step {o.step} out of range "
                                f"0..{len(notes) - 1}")
        if o.attribute not in ATTRIBUTES:
            raise ContractError(f"unknown attribute {o.attribute!r}")
        values = vocab.values_of(o.attribute)
        if o.value not in values:
            raise ContractError(f"value {o.value!r} is not in the "
                                f"{o.attribute} vocabulary")
        note = notes[o.step]
        if o.attribute == "pitch":
            note = replace(note, pitch=int(o.value))
        elif o.attribute == "duration":
            note = replace(note, duration=float(o.value))
        else:
            note = replace(note, rest_before=float(o.value))
        notes[o.step] = note
        applied.append(Override(o.step, o.attribute, o.value))
    new_score = Score(new_score_id, list(parent.score.syllables), notes,
                      parent.score.tempo_bpm, parent.score.seed, applied)
    return GenerationResult(new_score, parent.candidates, parent.seed,
                            parent.k, parent.fingerprint)


class SessionStore:
    """Bounded LRU of generation results; ids are opaque and never reused."""

    def __init__(self, capacity: int = 256):
        self.capacity = capacity
        self._items: OrderedDict[str, GenerationResult] = OrderedDict()
        self._lock = threading.Lock()
        self._counter = 0

    def put(self, result: GenerationResult) -> str:
        with self._lock:
            self._counter += 1
            rid = f"{self._counter:06d}-{secrets.token_hex(4)}"
            self._items[rid] = result
            while len(self._items) > self.capacity:
                self._items.popitem(last=False)
            return rid

    def get(self, rid: str) -> GenerationResult:
        with self._lock:
            if rid not in self._items:
                raise NotFoundError(f"unknown or evicted result id {rid!r}")
            self._items.move_to_end(rid)
            return self._items[rid]

    def __len__(self):
        with self._lock:
            return len(self._items)


class MelodyService:
    """Checkpoint-backed generation and recomposition with result storage."""

    def __init__(self, ckpt: Checkpoint, capacity: int = 256):
        self.ckpt = ckpt
        self.fingerprint = ckpt.fingerprint()
        self.store = SessionStore(capacity)

    def generate(self, lyrics: str, seed: int = DEFAULT_SEED,
                 k: int = DEFAULT_K) -> tuple[str, GenerationResult]:
        result = generate_melody(lyrics, self.ckpt, seed, k, self.fingerprint)
        return self.store.put(result), result

    def recompose(self, rid: str, overrides: list[Override]) -> tuple[str, GenerationResult]:
        parent = self.store.get(rid)
        new_id = f"{parent.score.id}-r{secrets.token_hex(3)}"
        result = recompose_result(parent, overrides, self.ckpt.attr_vocab, new_id)
        return self.store.put(result), result

    def midi(self, rid: str) -> bytes:
        return write_midi(self.store.get(rid).score)

    def score_json(self, rid: str) -> str:
        return score_to_json(self.store.get(rid).score)


def create_app(ckpt: Checkpoint, static_dir=None) -> FastAPI:
    """FastAPI app exposing the documented JSON surface."""
    app = FastAPI(title="songsmith", docs_url=None, redoc_url=None)
    svc = MelodyService(ckpt)
    app.state.service = svc

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message})

    def result_payload(rid: str, result: GenerationResult) -> dict:
        doc = result.to_dict()
        return {"result_id": rid, "score": doc["score"], "candidates": doc["candidates"]}

    @app.post("/api/generate")
    async def api_generate(request: Request):
        try:
            body = await request.json()
        except Exception:
            return error(400, "request body must be JSON")
        if not isinstance(body, dict) or not isinstance(body.get("lyrics"), str):
            return error(400, "missing 'lyrics' string")
        seed = body.get("seed", DEFAULT_SEED)
        k = body.get("k", DEFAULT_K)
        if not isinstance(seed, int) or isinstance(seed, bool):
            return error(400, "'seed' must be an integer")
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            return error(400, "'k' must be a positive integer")
        try:
            rid, result = svc.generate(body["lyrics"], seed, k)
        except (TokenizationError, ContractError) as exc:
            return error(400, str(exc))
        return result_payload(rid, result)

    @app.post("/api/recompose")
    async def api_recompose(request: Request):
        try:
            body = await request.json()
        except Exception:
            return error(400, "request body must be JSON")
        if not isinstance(body, dict) or "result_id" not in body:
            return error(400, "missing 'result_id'")
        raw = body.get("overrides", [])
        if not isinstance(raw, list):
            return error(400, "'overrides' must be a list")
        overrides = []
        for item in raw:
            if (not isinstance(item, dict) or "step" not in item
                    or "attribute" not in item or "value" not in item):
                return error(400, "each override needs step, attribute, value")
            if not isinstance(item["step"], int) or isinstance(item["step"], bool):
                return error(400, "override 'step' must be an integer")
            overrides.append(Override(item["step"], item["attribute"], item["value"]))
        try:
            rid, result = svc.recompose(body["result_id"], overrides)
        except NotFoundError as exc:
            return error(404, str(exc))
        except ContractError as exc:
            return error(400, str(exc))
        return result_payload(rid, result)

    @app.get("/api/score/{rid}/midi")
    def api_midi(rid: str):
        try:
            data = svc.midi(rid)
        except NotFoundError as exc:
            return error(404, str(exc))
        return Response(content=data, media_type="audio/midi")

    @app.get("/api/score/{rid}")
    def api_score(rid: str):
        try:
            doc = svc.score_json(rid)
        except NotFoundError as exc:
            return error(404, str(exc))
        return Response(content=doc, media_type="application/json")

    @app.get("/api/health")
    def api_health():
        return {"status": "ok", "model": svc.fingerprint}

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
