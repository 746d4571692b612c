"""Client test harness: a real service subprocess behind the /v1 API.

The server is launched through the primary package's CLI (its external
interface), never imported in-process, so the SDK is exercised exactly the
way a detached policy runtime would use it.
"""

from __future__ import annotations

import json
import re
import subprocess
import sys
import time
from pathlib import Path

import pytest
import requests

from tkg_arena_client import ArenaClient

FIXTURES = Path(__file__).parent / "fixtures"


def _load_samples() -> list[dict]:
    rows = []
    for line in (FIXTURES / "samples.jsonl").read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def _gold_turns(sample: dict) -> list[str]:
    query = sample["question"].replace('"', "").replace("?", "")
    answer = sample["answers"][0]
    return [
        "<think>Decompose the question.</think><plan>retrieve the facts, then answer</plan>",
        f'<think>Search the graph.</think><action>search_time("{query}")</action>',
        f"<think>Commit to the answer.</think><answer>{answer}</answer>",
    ]


@pytest.fixture(scope="session")
def gold_turns():
    return _gold_turns


@pytest.fixture(scope="session")
def samples() -> list[dict]:
    return _load_samples()


@pytest.fixture(scope="session")
def server_url(tmp_path_factory):
    workdir = tmp_path_factory.mktemp("server")
    store = workdir / "fixture.store"
    ingest = subprocess.run(
        [sys.executable, "-m", "tkg_arena.cli", "ingest",
         "--facts", str(FIXTURES / "facts_quad.tsv"), "--format", "quad",
         "--out", str(store)],
        capture_output=True, text=True,
    )
    assert ingest.returncode == 0, ingest.stderr

    proc = subprocess.Popen(
        [sys.executable, "-u", "-m", "tkg_arena.cli", "serve",
         "--store", str(store), "--samples", str(FIXTURES / "samples.jsonl"),
         "--port", "0"],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
    )
    try:
        line = proc.stdout.readline()
        match = re.search(r"http://[\d.]+:(\d+)/v1", line)
        assert match, f"no port in server banner: {line!r}"
        url = f"http://127.0.0.1:{match.group(1)}"
        deadline = time.monotonic() + 10
        while True:
            try:
                if requests.get(url + "/v1/health", timeout=1).ok:
                    break
            except requests.RequestException:
                if time.monotonic() > deadline:
                    raise
                time.sleep(0.05)
        yield url
    finally:
        proc.terminate()
        proc.wait(timeout=10)


@pytest.fixture
def client(server_url) -> ArenaClient:
    return ArenaClient(server_url)
