"""Reading-session service: ingest, score, and per-user vocabulary.

The browser reader talks to this HTTP+JSON API. State is kept in
append-only JSON Lines event logs (one per user); replaying a log
reconstructs the same records, and compaction rewrites it as a snapshot.
Scoring runs the full pipeline (smooth, resample, align, featurize,
predict) against a trained checkpoint when a session closes.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .alignment import AlignmentConfig, ReadingSession, smoothing_group_delay_ms
from .corpus import DocumentLayout, SubwordTokenizer, document_from_dict, document_to_dict
from .errors import GazeLexError, LayoutError, TraceError
from .knowledge import FrequencyTable
from .model import ModelConfig, load_checkpoint
from .pipeline import CorpusAssets, score_session
from .signal import DEFAULT_RESAMPLE_HZ, DEFAULT_SMOOTH_WINDOW, GazeTrace, condition

VALID_STATUS = ("open", "closed", "scored")


@dataclass
class ServiceConfig:
    data_dir: str = "./data"
    checkpoint: str | None = None
    freq_table: str | None = None
    host: str = "127.0.0.1"
    port: int = 8600
    auth_token: str | None = None
    smooth_window: int = DEFAULT_SMOOTH_WINDOW
    resample_hz: float = DEFAULT_RESAMPLE_HZ
    scoring_workers: int = 2

    @staticmethod
    def load(path=None, env=None) -> "ServiceConfig":
        """Config file plus GAZELEX_* environment overrides."""
        raw: dict = {}
        if path:
            with open(path, "r", encoding="utf-8") as f:
                raw.update(json.load(f))
        env = os.environ if env is None else env
        mapping = {
            "GAZELEX_DATA_DIR": ("data_dir", str),
            "GAZELEX_CHECKPOINT": ("checkpoint", str),
            "GAZELEX_FREQ_TABLE": ("freq_table", str),
            "GAZELEX_HOST": ("host", str),
            "GAZELEX_PORT": ("port", int),
            "GAZELEX_AUTH_TOKEN": ("auth_token", str),
            "GAZELEX_SMOOTH_WINDOW": ("smooth_window", int),
            "GAZELEX_RESAMPLE_HZ": ("resample_hz", float),
        }
        for key, (name, cast) in mapping.items():
            if key in env:
                raw[name] = cast(env[key])
        known = set(ServiceConfig.__dataclass_fields__)
        return ServiceConfig(**{k: v for k, v in raw.items() if k in known})


@dataclass
class SessionRecord:
    session_id: str
    user_id: str
    doc_id: str
    created_at: float
    layout: DocumentLayout
    samples: list[tuple[float, float, float]] = field(default_factory=list)
    marked_words: set[int] = field(default_factory=set)
    predictions: list[dict] | None = None
    status: str = "open"

    def last_t(self) -> float:
        return self.samples[-1][0] if self.samples else -1.0


@dataclass
class VocabEntry:
    user_id: str
    word: str
    first_seen: str
    times_flagged: int = 1
    dismissed: bool = False

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "word": self.word,
            "first_seen": self.first_seen,
            "times_flagged": self.times_flagged,
            "dismissed": self.dismissed,
        }


class SessionStore:
    """Append-only event store; replay rebuilds identical records."""

    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        self.users_dir = os.path.join(data_dir, "users")
        os.makedirs(self.users_dir, exist_ok=True)
        self.lock = threading.RLock()
        self.sessions: dict[str, SessionRecord] = {}
        self.vocab: dict[tuple[str, str], VocabEntry] = {}
        self._replay_all()

    # -- event log -----------------------------------------------------------

    def _log_path(self, user_id: str) -> str:
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in user_id) or "anon"
        return os.path.join(self.users_dir, f"{safe}.log")

    def _append(self, user_id: str, event: dict) -> None:
        with open(self._log_path(user_id), "a", encoding="utf-8") as f:
            f.write(json.dumps(event, separators=(",", ":")) + "\n")

    def _replay_all(self) -> None:
        for name in sorted(os.listdir(self.users_dir)):
            if name.endswith(".log"):
                with open(os.path.join(self.users_dir, name), "r", encoding="utf-8") as f:
                    for line in f:
                        line = line.strip()
                        if line:
                            self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "session_created":
            layout = document_from_dict(event["layout"])
            self.sessions[event["session_id"]] = SessionRecord(
                session_id=event["session_id"],
                user_id=event["user_id"],
                doc_id=layout.doc_id,
                created_at=event["created_at"],
                layout=layout,
            )
        elif kind == "gaze_appended":
            rec = self.sessions[event["session_id"]]
            rec.samples.extend((s["t"], s["x"], s["y"]) for s in event["samples"])
        elif kind == "words_marked":
            rec = self.sessions[event["session_id"]]
            rec.marked_words.update(int(w) for w in event["words"])
        elif kind == "session_closed":
            self.sessions[event["session_id"]].status = "closed"
        elif kind == "session_scored":
            rec = self.sessions[event["session_id"]]
            rec.predictions = event["predictions"]
            rec.status = "scored"
        elif kind == "vocab_flagged":
            key = (event["user_id"], event["word"])
            if key in self.vocab:
                self.vocab[key].times_flagged += 1
            else:
                self.vocab[key] = VocabEntry(event["user_id"], event["word"], event["session_id"])
        elif kind == "vocab_dismissed":
            key = (event["user_id"], event["word"])
            if key in self.vocab:
                self.vocab[key].dismissed = True
        else:
            raise GazeLexError(f"unknown event type {kind!r}")

    def record(self, user_id: str, event: dict) -> None:
        """Apply and persist one event atomically under the store lock."""
        with self.lock:
            self._apply(event)
            self._append(user_id, event)

    def compact(self, user_id: str) -> None:
        """Rewrite the user's log as a snapshot of current state."""
        with self.lock:
            events: list[dict] = []
            for rec in self.sessions.values():
                if rec.user_id != user_id:
                    continue
                events.append(
                    {
                        "type": "session_created",
                        "session_id": rec.session_id,
                        "user_id": rec.user_id,
                        "created_at": rec.created_at,
                        "layout": document_to_dict(rec.layout),
                    }
                )
                if rec.samples:
                    events.append(
                        {
                            "type": "gaze_appended",
                            "session_id": rec.session_id,
                            "samples": [{"t": t, "x": x, "y": y} for t, x, y in rec.samples],
                        }
                    )
                if rec.marked_words:
                    events.append(
                        {"type": "words_marked", "session_id": rec.session_id, "words": sorted(rec.marked_words)}
                    )
                if rec.status in ("closed", "scored"):
                    events.append({"type": "session_closed", "session_id": rec.session_id})
                if rec.status == "scored":
                    events.append(
                        {"type": "session_scored", "session_id": rec.session_id, "predictions": rec.predictions}
                    )
            for (uid, word), entry in self.vocab.items():
                if uid != user_id:
                    continue
                for _ in range(entry.times_flagged):
                    events.append(
                        {"type": "vocab_flagged", "user_id": uid, "word": word, "session_id": entry.first_seen}
                    )
                if entry.dismissed:
                    events.append({"type": "vocab_dismissed", "user_id": uid, "word": word})
            tmp = self._log_path(user_id) + ".tmp"
            with open(tmp, "w", encoding="utf-8") as f:
                for event in events:
                    f.write(json.dumps(event, separators=(",", ":")) + "\n")
            os.replace(tmp, self._log_path(user_id))


class SessionService:
    """Business operations over the store plus model scoring."""

    def __init__(self, config: ServiceConfig, params=None, model_config: ModelConfig | None = None,
                 tokenizer: SubwordTokenizer | None = None):
        self.config = config
        os.makedirs(config.data_dir, exist_ok=True)
        self.store = SessionStore(config.data_dir)
        self.tokenizer = tokenizer or SubwordTokenizer.default()
        self.params = params
        self.model_config = model_config
        if self.params is None and config.checkpoint:
            self.params, self.model_config = load_checkpoint(config.checkpoint)
        self.freq_table = FrequencyTable.load(config.freq_table) if config.freq_table else None
        self.pool = ThreadPoolExecutor(max_workers=max(1, config.scoring_workers))

    def create_session(self, user_id: str, layout_dict: dict) -> str:
        layout = document_from_dict(layout_dict)  # raises LayoutError on bad input
        if len(layout) == 0:
            raise LayoutError("layout has no words")
        session_id = uuid.uuid4().hex
        self.store.record(
            user_id,
            {
                "type": "session_created",
                "session_id": session_id,
                "user_id": user_id,
                "created_at": time.time(),
                "layout": document_to_dict(layout),
            },
        )
        return session_id

    def _session(self, session_id: str) -> SessionRecord:
        rec = self.store.sessions.get(session_id)
        if rec is None:
            raise KeyError(session_id)
        return rec

    def append_gaze(self, session_id: str, samples: list[dict]) -> int:
        with self.store.lock:
            rec = self._session(session_id)
            if rec.status != "open":
                raise TraceError(f"session {session_id} is {rec.status}; gaze rejected")
            if not samples:
                return 0
            last = rec.last_t()
            times = [float(s["t"]) for s in samples]
            ordered = all(b > a for a, b in zip(times, times[1:])) and times[0] > last
            if not ordered:
                return 0  # whole batch rejected on time regression
            self.store.record(
                rec.user_id,
                {"type": "gaze_appended", "session_id": session_id,
                 "samples": [{"t": float(s["t"]), "x": float(s["x"]), "y": float(s["y"])} for s in samples]},
            )
            return len(samples)

    def mark_words(self, session_id: str, words: list[int]) -> set[int]:
        with self.store.lock:
            rec = self._session(session_id)
            if rec.status == "scored":
                raise TraceError("session already scored")
            bad = [w for w in words if w < 0 or w >= len(rec.layout)]
            if bad:
                raise LayoutError(f"word ordinals out of range: {bad}")
            self.store.record(rec.user_id, {"type": "words_marked", "session_id": session_id, "words": list(words)})
            return set(rec.marked_words)

    def close_and_score(self, session_id: str) -> list[dict]:
        """Condition, align, and score the session; idempotent once scored."""
        with self.store.lock:
            rec = self._session(session_id)
            if rec.status == "scored":
                return list(rec.predictions or [])
            if len(rec.samples) < 2:
                raise TraceError("session trace has fewer than 2 samples")
            if self.params is None or self.model_config is None:
                raise GazeLexError("no model checkpoint configured")
            if rec.status == "open":
                self.store.record(rec.user_id, {"type": "session_closed", "session_id": session_id})

        future = self.pool.submit(self._score, rec)
        predictions = future.result()

        with self.store.lock:
            if rec.status == "scored":  # lost a race; keep the first result
                return list(rec.predictions or [])
            self.store.record(
                rec.user_id,
                {"type": "session_scored", "session_id": session_id, "predictions": predictions},
            )
            for text in sorted({p["text"] for p in predictions}):
                self.store.record(
                    rec.user_id,
                    {"type": "vocab_flagged", "user_id": rec.user_id, "word": text, "session_id": session_id},
                )
        return predictions

    def _score(self, rec: SessionRecord) -> list[dict]:
        times = [s[0] for s in rec.samples]
        raw = GazeTrace.from_arrays(rec.session_id, times, [(s[1], s[2]) for s in rec.samples])
        conditioned = condition(raw, self.config.smooth_window, self.config.resample_hz)
        session = ReadingSession(
            doc_id=rec.doc_id,
            trace=conditioned,
            t_start=times[0],
            t_end=times[-1],
            marked_words=frozenset(rec.marked_words),
            user_id=rec.user_id,
        )
        assets = CorpusAssets({rec.doc_id: rec.layout}, self.tokenizer, freq_table=self.freq_table)
        raw_gaps = [b - a for a, b in zip(times, times[1:])]
        raw_rate = 1000.0 / (sorted(raw_gaps)[len(raw_gaps) // 2]) if raw_gaps else 30.0
        align = AlignmentConfig(
            n_gaze=self.model_config.n_gaze,
            n_txt=self.model_config.n_txt,
            rate_hz=self.config.resample_hz,
            gaze_lag_ms=smoothing_group_delay_ms(self.config.smooth_window, raw_rate),
        )
        flagged = score_session(session, assets, self.params, self.model_config, align)
        return [
            {"word": int(w), "text": rec.layout.words[int(w)].text, "score": round(float(s), 6)}
            for w, s in sorted(flagged.items())
        ]

    def predictions(self, session_id: str) -> list[dict]:
        rec = self._session(session_id)
        if rec.status != "scored":
            raise TraceError(f"session {session_id} is {rec.status}, not scored")
        return list(rec.predictions or [])

    def vocab_list(self, user_id: str) -> list[dict]:
        entries = [e for (uid, _), e in self.store.vocab.items() if uid == user_id and not e.dismissed]
        entries.sort(key=lambda e: (-e.times_flagged, e.word))
        return [e.to_dict() for e in entries]


def create_app(config: ServiceConfig, service: SessionService | None = None):
    """FastAPI app over a SessionService."""
    from fastapi import Depends, FastAPI, Header, HTTPException

    app = FastAPI(title="gazelex session service")
    svc = service or SessionService(config)
    app.state.service = svc

    def auth(authorization: str = Header(default="")):
        if config.auth_token and authorization != f"Bearer {config.auth_token}":
            raise HTTPException(status_code=401, detail="invalid token")

    def get_or_404(session_id: str) -> SessionRecord:
        try:
            return svc._session(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")

    @app.post("/sessions", dependencies=[Depends(auth)])
    def create_session(payload: dict):
        user_id = payload.get("user_id")
        layout = payload.get("layout")
        if not user_id or not isinstance(layout, dict):
            raise HTTPException(status_code=422, detail="user_id and layout are required")
        try:
            session_id = svc.create_session(str(user_id), layout)
        except LayoutError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"session_id": session_id, "status": "open"}

    @app.post("/sessions/{session_id}/gaze", dependencies=[Depends(auth)])
    def append_gaze(session_id: str, payload: dict):
        get_or_404(session_id)
        samples = payload.get("samples", [])
        try:
            accepted = svc.append_gaze(session_id, samples)
        except TraceError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"accepted": accepted}

    @app.post("/sessions/{session_id}/marks", dependencies=[Depends(auth)])
    def mark_words(session_id: str, payload: dict):
        get_or_404(session_id)
        try:
            marked = svc.mark_words(session_id, [int(w) for w in payload.get("words", [])])
        except (LayoutError, TraceError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"marked": sorted(marked)}

    @app.post("/sessions/{session_id}/close", dependencies=[Depends(auth)])
    def close_session(session_id: str):
        get_or_404(session_id)
        try:
            predictions = svc.close_and_score(session_id)
        except TraceError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except GazeLexError as exc:
            raise HTTPException(status_code=503, detail=str(exc))
        return {"status": "scored", "predictions": predictions}

    @app.get("/sessions/{session_id}/predictions", dependencies=[Depends(auth)])
    def get_predictions(session_id: str):
        get_or_404(session_id)
        try:
            return {"predictions": svc.predictions(session_id)}
        except TraceError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/users/{user_id}/vocab", dependencies=[Depends(auth)])
    def vocab(user_id: str):
        return {"vocab": svc.vocab_list(user_id)}

    return app
