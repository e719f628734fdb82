import json

import pytest

from claimmatch.corpus import ingest_corpus

MINIMAL_RECORDS = [
    {"kind": "tweet", "id": "t1", "lang": "en", "text": "dam broke"},
    {"kind": "tweet", "id": "t2", "lang": "en", "text": "power cut rumour"},
    {
        "kind": "article",
        "id": "a1",
        "lang": "en",
        "title": "Flood rumours debunked",
        "body": ["The dam did not break.", "Electricity was not cut off."],
    },
    {"kind": "pair", "tweet_id": "t1", "article_id": "a1", "label": "match"},
    {"kind": "pair", "tweet_id": "t2", "article_id": "a1", "label": "match"},
]


def to_jsonl(records) -> bytes:
    return ("\n".join(json.dumps(r, ensure_ascii=False) for r in records) + "\n").encode()


@pytest.fixture
def minimal_jsonl() -> bytes:
    return to_jsonl(MINIMAL_RECORDS)


@pytest.fixture
def minimal_corpus(minimal_jsonl):
    return ingest_corpus(minimal_jsonl)
