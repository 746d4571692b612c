"""JSON-over-HTTP service exposing episodes, retrieval, and offline scoring.

All endpoints live under /v1:

    POST /v1/episodes                {qid | sample, config?}      -> {episode_id}
    POST /v1/episodes/{id}/step      {raw_turn}                   -> {observation} | {terminal, reward}
    GET  /v1/episodes/{id}                                        -> transcript
    POST /v1/retrieve                {query, constraint?, k?}     -> {results}
    POST /v1/score                   {trajectory, gold, max_turns?} -> reward breakdown
    GET  /v1/health                                               -> {status, facts_loaded}

Steps on one episode are serialized behind a per-episode lock; distinct
episodes run concurrently over the shared read-only store.  Idle episodes
expire after a deadline and later access returns 404.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .environment import (
    Episode,
    EpisodeConfig,
    EpisodeStatus,
    EpisodeTerminatedError,
    QASample,
    StepKind,
    create_episode,
    transcript_to_dict,
)
from .protocol import trajectory_from_dict
from .retriever import RetrievalError, ScoredFact, retrieve_topk
from .rewards import RewardConfig, score_trajectory
from .store import FactStore, WindowMode
from .temporal import TimeInterval, TimestampError, parse_timestamp

logger = logging.getLogger(__name__)

DEFAULT_IDLE_TTL = 600.0


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        self.message = message
        super().__init__(message)


@dataclass
class _Session:
    episode: Episode
    created_at: float
    deadline: float
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionRegistry:
    """Episode-id keyed registry with idle expiry and per-episode locks."""

    def __init__(self, ttl: float = DEFAULT_IDLE_TTL, clock=time.monotonic):
        self._ttl = ttl
        self._clock = clock
        self._sessions: dict[str, _Session] = {}
        self._lock = threading.Lock()

    def create(self, episode: Episode) -> str:
        episode_id = uuid.uuid4().hex
        now = self._clock()
        with self._lock:
            self._sweep(now)
            self._sessions[episode_id] = _Session(episode, now, now + self._ttl)
        return episode_id

    def get(self, episode_id: str) -> _Session:
        """Touches the idle deadline; expired or unknown ids raise 404."""
        now = self._clock()
        with self._lock:
            session = self._sessions.get(episode_id)
            if session is not None and now > session.deadline:
                del self._sessions[episode_id]
                session = None
            if session is None:
                raise ApiError(404, f"unknown or expired episode {episode_id!r}")
            session.deadline = now + self._ttl
            return session

    def _sweep(self, now: float) -> None:
        dead = [k for k, s in self._sessions.items() if now > s.deadline]
        for k in dead:
            del self._sessions[k]

    def __len__(self) -> int:
        return len(self._sessions)


def _parse_constraint(payload: dict | None) -> tuple[WindowMode, TimeInterval] | None:
    if payload is None:
        return None
    try:
        mode = WindowMode(payload["mode"])
        start = parse_timestamp(str(payload["start"]))
        end = parse_timestamp(str(payload.get("end", payload["start"])))
    except (KeyError, ValueError, TimestampError) as exc:
        raise ApiError(400, f"bad constraint: {exc}") from exc
    try:
        window = TimeInterval.spanning(start, end)
    except ValueError as exc:
        raise ApiError(400, f"bad constraint: {exc}") from exc
    return mode, window


class ArenaService:
    """Transport-free request handling; the HTTP layer delegates here."""

    def __init__(
        self,
        store: FactStore,
        samples: dict[str, QASample] | None = None,
        episode_config: EpisodeConfig | None = None,
        reward_config: RewardConfig | None = None,
        ttl: float = DEFAULT_IDLE_TTL,
        clock=time.monotonic,
    ):
        self.store = store
        self.samples = samples or {}
        self.reward_config = reward_config or RewardConfig()
        self.episode_config = episode_config or EpisodeConfig(reward_config=self.reward_config)
        self.registry = SessionRegistry(ttl=ttl, clock=clock)

    # -- endpoint bodies ---------------------------------------------------

    def health(self) -> dict:
        return {"status": "ok", "facts_loaded": len(self.store)}

    def create(self, body: dict) -> dict:
        if "sample" in body:
            try:
                sample = QASample.from_dict(body["sample"])
            except (KeyError, ValueError) as exc:
                raise ApiError(400, f"bad sample: {exc}") from exc
        elif "qid" in body:
            sample = self.samples.get(str(body["qid"]))
            if sample is None:
                raise ApiError(400, f"unknown qid {body['qid']!r}")
        else:
            raise ApiError(400, "request needs either 'qid' or 'sample'")
        config = self.episode_config
        if body.get("config"):
            try:
                config = config.with_overrides(dict(body["config"]))
            except (TypeError, ValueError) as exc:
                raise ApiError(400, f"bad config: {exc}") from exc
        episode = create_episode(sample, config, self.store)
        return {"episode_id": self.registry.create(episode)}

    def step(self, episode_id: str, body: dict) -> dict:
        raw = body.get("raw_turn")
        if not isinstance(raw, str):
            raise ApiError(400, "'raw_turn' must be a string")
        session = self.registry.get(episode_id)
        with session.lock:
            try:
                result = session.episode.step(raw)
            except EpisodeTerminatedError as exc:
                raise ApiError(409, str(exc)) from exc
            except RetrievalError as exc:
                raise ApiError(503, str(exc)) from exc
        if result.kind is StepKind.OBSERVATION:
            return {"observation": result.observation}
        return {"terminal": result.status.value, "reward": result.reward.to_dict()}

    def transcript(self, episode_id: str) -> dict:
        session = self.registry.get(episode_id)
        with session.lock:
            out = transcript_to_dict(session.episode)
        out["episode_id"] = episode_id
        return out

    def retrieve(self, body: dict) -> dict:
        query = body.get("query")
        if not isinstance(query, str) or not query.strip():
            raise ApiError(400, "'query' must be a non-empty string")
        k = body.get("k", self.episode_config.top_k)
        if not isinstance(k, int) or k < 1:
            raise ApiError(400, "'k' must be an integer >= 1")
        constraint = _parse_constraint(body.get("constraint"))
        try:
            hits = retrieve_topk(self.store, self.episode_config.scorer, query, constraint, k)
        except RetrievalError as exc:
            raise ApiError(503, str(exc)) from exc
        return {"results": [self._result_row(h) for h in hits]}

    def _result_row(self, hit: ScoredFact) -> dict:
        fact = self.store.fact(hit.fact_id)
        return {
            "fact_id": hit.fact_id,
            "score": hit.score,
            "text": self.store.verbalize(hit.fact_id),
            "start": fact.interval.start.isoformat(),
            "end": fact.interval.end.isoformat(),
        }

    def score(self, body: dict) -> dict:
        gold = body.get("gold")
        if not isinstance(gold, list) or not gold:
            raise ApiError(400, "'gold' must be a non-empty list")
        try:
            traj = trajectory_from_dict(body["trajectory"])
        except (KeyError, TypeError, ValueError, TimestampError) as exc:
            raise ApiError(400, f"bad trajectory: {exc}") from exc
        max_turns = body.get("max_turns", self.episode_config.max_turns)
        if not isinstance(max_turns, int) or max_turns < 1:
            raise ApiError(400, "'max_turns' must be an integer >= 1")
        reward = score_trajectory(
            traj, frozenset(str(g) for g in gold), self.reward_config, max_turns=max_turns
        )
        return reward.to_dict()

    # -- routing -----------------------------------------------------------

    def dispatch(self, method: str, path: str, body: dict | None) -> tuple[int, dict]:
        parts = [p for p in path.split("/") if p]
        if not parts or parts[0] != "v1":
            raise ApiError(404, f"no such path: {path}")
        parts = parts[1:]
        if method == "GET" and parts == ["health"]:
            return 200, self.health()
        if method == "POST" and parts == ["episodes"]:
            return 200, self.create(body or {})
        if method == "POST" and len(parts) == 3 and parts[0] == "episodes" and parts[2] == "step":
            return 200, self.step(parts[1], body or {})
        if method == "GET" and len(parts) == 2 and parts[0] == "episodes":
            return 200, self.transcript(parts[1])
        if method == "POST" and parts == ["retrieve"]:
            return 200, self.retrieve(body or {})
        if method == "POST" and parts == ["score"]:
            return 200, self.score(body or {})
        raise ApiError(404, f"no such path: {path}")


def _make_handler(service: ArenaService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _respond(self, status: int, payload: dict) -> None:
            data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _handle(self, method: str) -> None:
            body: dict | None = None
            if method == "POST":
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b""
                if raw:
                    try:
                        body = json.loads(raw.decode("utf-8"))
                    except (json.JSONDecodeError, UnicodeDecodeError):
                        self._respond(400, {"error": "request body is not valid JSON"})
                        return
                if body is not None and not isinstance(body, dict):
                    self._respond(400, {"error": "request body must be a JSON object"})
                    return
            try:
                status, payload = service.dispatch(method, self.path, body)
            except ApiError as exc:
                self._respond(exc.status, {"error": exc.message})
                return
            except Exception as exc:  # pragma: no cover - last-ditch guard
                logger.exception("unhandled error on %s %s", method, self.path)
                self._respond(500, {"error": f"internal error: {exc}"})
                return
            self._respond(status, payload)

        def do_GET(self) -> None:
            self._handle("GET")

        def do_POST(self) -> None:
            self._handle("POST")

        def log_message(self, fmt: str, *args) -> None:
            logger.debug("%s - %s", self.address_string(), fmt % args)

    return Handler


def serve(service: ArenaService, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    """Bind the HTTP server (port 0 picks a free port); caller runs serve_forever."""
    return ThreadingHTTPServer((host, port), _make_handler(service))
