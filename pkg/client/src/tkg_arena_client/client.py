"""Client SDK for the tkg-arena /v1 HTTP API.

The SDK is deliberately thin: it formats turns, moves text, and mirrors
transcripts.  All validation and reward computation happens server-side;
whatever the policy emits is passed through verbatim and the server's
verdict comes back unfiltered.  `run_episode` drives the full
create/step loop with a policy callable that sees the transcript so far
as plain text, exactly the way an LLM would.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import requests

_SEARCH_ACTIONS = frozenset(
    {"search_time", "search_specific", "search_before", "search_after", "search_between"}
)


class ArenaClientError(Exception):
    """Transport-level failure; `retry_after` carries the server's hint if any."""

    def __init__(self, message: str, retry_after: float | None = None):
        self.retry_after = retry_after
        super().__init__(message)


class ArenaApiError(ArenaClientError):
    """Non-2xx HTTP response from the service."""

    def __init__(self, status: int, message: str, retry_after: float | None = None):
        self.status = status
        super().__init__(f"HTTP {status}: {message}", retry_after)


def format_turn(thought: str, action: str, *args: str) -> str:
    """Canonical turn text for one emission.

    `action` is "plan", "answer", or one of the five search tools; search
    arguments are rendered double-quoted and comma-separated, matching the
    grammar the server parses.
    """
    if action == "plan":
        body = f"<plan>{args[0] if args else ''}</plan>"
    elif action == "answer":
        if len(args) != 1:
            raise ValueError("answer takes exactly one argument")
        body = f"<answer>{args[0]}</answer>"
    elif action in _SEARCH_ACTIONS:
        rendered = ", ".join(f'"{a}"' for a in args)
        body = f"<action>{action}({rendered})</action>"
    else:
        raise ValueError(f"unknown action {action!r}")
    return f"<think>{thought}</think>{body}"


def transcript_text(transcript: dict) -> str:
    """Flatten a server transcript to the text a policy model would consume."""
    segments = [f"Question: {transcript.get('question', '')}"]
    for turn in transcript.get("turns", []):
        name = turn["action"]["name"]
        args = turn["action"]["args"]
        segments.append(format_turn(turn.get("thought", ""), name, *args))
        if turn.get("observation") is not None:
            segments.append(turn["observation"])
    return "\n".join(segments)


@dataclass
class ClientSession:
    """One episode handle: endpoint, id, and the local transcript mirror."""

    base_url: str
    episode_id: str
    transcript: dict = field(default_factory=dict)

    @property
    def text(self) -> str:
        return transcript_text(self.transcript)


@dataclass(frozen=True)
class EpisodeResult:
    status: str
    reward: dict
    transcript: dict


class ArenaClient:
    """Typed access to every /v1 endpoint plus the policy-driven episode loop."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._http = requests.Session()

    # -- plumbing ----------------------------------------------------------

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = f"{self.base_url}{path}"
        try:
            response = self._http.request(method, url, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ArenaClientError(f"{method} {url} failed: {exc}") from exc
        if response.status_code >= 400:
            retry_after = None
            if "Retry-After" in response.headers:
                try:
                    retry_after = float(response.headers["Retry-After"])
                except ValueError:
                    retry_after = None
            try:
                message = response.json().get("error", response.text)
            except ValueError:
                message = response.text
            raise ArenaApiError(response.status_code, message, retry_after)
        try:
            return response.json()
        except ValueError as exc:
            raise ArenaClientError(f"{method} {url} returned non-JSON body") from exc

    # -- endpoints -----------------------------------------------------------

    def health(self) -> dict:
        return self._request("GET", "/v1/health")

    def create_episode(
        self,
        sample: dict | None = None,
        qid: str | None = None,
        config: dict | None = None,
    ) -> ClientSession:
        body: dict[str, Any] = {}
        if sample is not None:
            body["sample"] = sample
        if qid is not None:
            body["qid"] = qid
        if config:
            body["config"] = config
        created = self._request("POST", "/v1/episodes", body)
        session = ClientSession(self.base_url, created["episode_id"])
        self.refresh(session)
        return session

    def step(self, session: ClientSession, raw_turn: str) -> dict:
        """One raw emission in, the server's observation or terminal out.

        The local mirror is refreshed from GET /episodes/{id} afterwards, so
        it matches the server at every step boundary.
        """
        result = self._request(
            "POST", f"/v1/episodes/{session.episode_id}/step", {"raw_turn": raw_turn}
        )
        self.refresh(session)
        return result

    def refresh(self, session: ClientSession) -> dict:
        session.transcript = self._request("GET", f"/v1/episodes/{session.episode_id}")
        return session.transcript

    def retrieve(self, query: str, constraint: dict | None = None, k: int | None = None) -> list[dict]:
        body: dict[str, Any] = {"query": query}
        if constraint is not None:
            body["constraint"] = constraint
        if k is not None:
            body["k"] = k
        return self._request("POST", "/v1/retrieve", body)["results"]

    def score(self, trajectory: dict, gold: list[str], max_turns: int | None = None) -> dict:
        body: dict[str, Any] = {"trajectory": trajectory, "gold": gold}
        if max_turns is not None:
            body["max_turns"] = max_turns
        return self._request("POST", "/v1/score", body)

    # -- the policy loop ------------------------------------------------------

    def run_episode(
        self,
        sample_or_qid: dict | str,
        policy_fn: Callable[[str], str],
        config: dict | None = None,
    ) -> EpisodeResult:
        """Create an episode and loop policy_fn until the server ends it.

        policy_fn receives the transcript so far as plain text and returns
        the next raw turn; its output is never validated locally.  The
        returned reward is the server's, verbatim.
        """
        if isinstance(sample_or_qid, str):
            session = self.create_episode(qid=sample_or_qid, config=config)
        else:
            session = self.create_episode(sample=sample_or_qid, config=config)
        while True:
            result = self.step(session, policy_fn(session.text))
            if "terminal" in result:
                return EpisodeResult(
                    status=result["terminal"],
                    reward=result["reward"],
                    transcript=session.transcript,
                )
