"""Shared fixtures: the fixture stores, QA samples, gold replays, and a live server."""

from __future__ import annotations

import json
import threading
from pathlib import Path

import pytest
import requests

from tkg_arena.environment import QASample
from tkg_arena.evaluation import load_samples
from tkg_arena.service import ArenaService, serve
from tkg_arena.store import FactFormat, load_facts

FIXTURES = Path(__file__).parent / "fixtures"

# Search turn used in each sample's gold replay; every replay is
# plan -> one search -> answer(gold), which keeps i_fmt = 1 and r_out = 1.
_GOLD_SEARCH_CALLS = {
    "q01": 'search_specific("Luka Dončić play for", "2025-02-03")',
    "q02": 'search_between("host World Cup", "2022", "2022")',
    "q03": 'search_time("Qatar host World Cup")',
    "q04": 'search_specific("host Olympics", "2008")',
    "q05": 'search_specific("Angela Merkel visit France", "2015-03")',
    "q06": 'search_after("host Olympics", "2016-08-05")',
    "q07": 'search_before("LeBron James play for", "2010-07-08")',
    "q08": 'search_before("host World Cup", "2018")',
    "q09": 'search_before("host Olympics", "2005")',
    "q10": 'search_after("negotiate with Yemen", "2013-11")',
    "q11": 'search_before("LeBron James play for", "2004")',
    "q12": 'search_specific("champion of Champions League", "2014")',
    "q13": 'search_time("Japan sign agreement with Qatar")',
    "q14": 'search_between("host Olympics", "1993", "2008")',
    "q15": 'search_between("negotiate with Yemen", "2013-09", "2013-12")',
    "q16": 'search_specific("Luka Dončić play for", "2018-10-21")',
    "q17": 'search_time("Luka Dončić born in Slovenia")',
    "q18": 'search_after("Emmanuel Macron visit", "2017-05-15")',
    "q19": 'search_time("Real Madrid champion of Champions League")',
    "q20": 'search_specific("visit Japan", "2015-03")',
    "q21": 'search_before("host World Cup", "2022-11-20")',
    "q22": 'search_after("Luka Dončić play for", "2018-10-21")',
    "q23": 'search_specific("champion of Champions League", "2015")',
    "q24": 'search_before("Angela Merkel visit", "2015-03-31")',
}


def gold_turns_for(sample: QASample) -> list[str]:
    call = _GOLD_SEARCH_CALLS[sample.qid]
    answer = sorted(sample.gold_answers)[0]
    return [
        "<think>Break the question into temporal lookups.</think>"
        "<plan>1. retrieve the relevant facts 2. answer</plan>",
        f"<think>Run the temporal search.</think><action>{call}</action>",
        f"<think>The evidence pins down the answer.</think><answer>{answer}</answer>",
    ]


@pytest.fixture(scope="session")
def quad_store():
    return load_facts(FIXTURES / "facts_quad.tsv", FactFormat.QUAD_TSV)


@pytest.fixture(scope="session")
def quint_store():
    return load_facts(FIXTURES / "facts_quint.tsv", FactFormat.QUINT_TSV)


@pytest.fixture(scope="session")
def samples() -> list[QASample]:
    return load_samples(FIXTURES / "samples.jsonl")


@pytest.fixture(scope="session")
def samples_by_qid(samples) -> dict[str, QASample]:
    return {s.qid: s for s in samples}


@pytest.fixture(scope="session")
def gold_replays(samples) -> dict[str, list[str]]:
    return {s.qid: gold_turns_for(s) for s in samples}


class LiveServer:
    def __init__(self, service: ArenaService):
        self.service = service
        self._server = serve(service, port=0)
        self.port = self._server.server_address[1]
        self.url = f"http://127.0.0.1:{self.port}"
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def get(self, path: str) -> requests.Response:
        return requests.get(self.url + path, timeout=10)

    def post(self, path: str, body: dict) -> requests.Response:
        return requests.post(self.url + path, json=body, timeout=10)

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def live_server(quad_store, samples_by_qid):
    server = LiveServer(ArenaService(quad_store, samples=samples_by_qid))
    yield server
    server.close()


def write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
