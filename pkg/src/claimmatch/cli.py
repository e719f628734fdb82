"""Thin command-line client for the claim-matching service.

Every subcommand marshals its arguments into a request, posts it to the
service, and renders the response. By default the service runs in-process
(no network); ``--server URL`` targets a running instance instead.

Exit codes: 0 success, 1 usage error, 2 data error, 3 provider error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import httpx

_EXIT_BY_KIND = {"usage": 1, "data": 2, "provider": 3}


class CliError(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the contract wants 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise CliError(f"usage error: {message}", 1)


class ServiceClient:
    def __init__(self, server: str | None):
        if server:
            self._client = httpx.Client(base_url=server.rstrip("/"), timeout=600.0)
        else:
            from fastapi.testclient import TestClient

            from .service.app import create_app

            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        try:
            response = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise CliError(f"cannot reach service: {exc}", 3) from exc
        try:
            body = response.json()
        except (json.JSONDecodeError, ValueError) as exc:
            raise CliError(f"service returned non-JSON (status {response.status_code})", 3) from exc
        if response.status_code != 200:
            kind = body.get("kind", "provider") if isinstance(body, dict) else "provider"
            message = body.get("error", str(body)) if isinstance(body, dict) else str(body)
            raise CliError(message, _EXIT_BY_KIND.get(kind, 3))
        return body


def _provider_options(args: argparse.Namespace) -> dict:
    return {
        "embed_url": os.environ.get("EMBED_URL") or None,
        "embed_model": getattr(args, "model", None) or "hashed-" + str(args.dim),
        "embed_dim": args.dim,
    }


def _print(body: dict) -> None:
    print(json.dumps(body, indent=2, ensure_ascii=False, sort_keys=True))


def _cmd_ingest(client: ServiceClient, args) -> None:
    body = client.post("/v1/corpus/ingest", {"path": args.corpus, "out_path": args.out})
    _print(body)


def _cmd_validate(client: ServiceClient, args) -> None:
    body = client.post("/v1/corpus/validate", {"path": args.corpus})
    _print(body)


def _cmd_index(client: ServiceClient, args) -> None:
    body = client.post(
        "/v1/index/build",
        {
            "corpus_path": args.corpus,
            "out_path": args.out,
            "granularity": args.granularity,
            "partition": args.partition,
            "k1": args.k1,
            "b": args.b,
            "token_limit": args.token_limit,
            "include_title": not args.no_title,
        },
    )
    _print(body)


def _cmd_embed_store(client: ServiceClient, args) -> None:
    body = client.post(
        "/v1/store/build",
        {
            "corpus_path": args.corpus,
            "out_path": args.out,
            "partition": args.partition,
            "token_limit": args.token_limit,
            "include_title": not args.no_title,
            "provider": _provider_options(args),
        },
    )
    _print(body)


def _cmd_search(client: ServiceClient, args) -> None:
    body = client.post(
        "/v1/search",
        {
            "system": args.system,
            "query": args.query,
            "k": args.k,
            "query_id": args.query_id,
            "index_path": args.index,
            "store_path": args.store,
            "aggregate": args.aggregate,
            "provider": _provider_options(args),
        },
    )
    for hit in body["hits"]:
        print(f"{hit['rank']:>3}  {hit['article_id']}  {hit['score']:.6f}")
    if not body["hits"]:
        print("(no matching articles)")


def _cmd_mine(client: ServiceClient, args) -> None:
    body = client.post(
        "/v1/mine",
        {
            "corpus_path": args.corpus,
            "partition": args.partition,
            "out_path": args.out,
            "strategy": args.strategy,
            "similarity_ceiling": args.ceiling,
            "negatives_per_positive": args.ratio,
            "seed": args.seed,
            "assemble_with_positives": not args.negatives_only,
            "provider": _provider_options(args),
        },
    )
    summary = {key: body[key] for key in ("partition", "n_positives", "n_negatives", "out_path")}
    _print(summary)


def _cmd_eval_retrieval(client: ServiceClient, args) -> None:
    body = client.post(
        "/v1/eval/retrieval",
        {"run_path": args.run, "qrels_path": args.qrels, "ks": args.ks},
    )
    _print(body)


def _cmd_eval_match(client: ServiceClient, args) -> None:
    body = client.post(
        "/v1/eval/match",
        {
            "corpus_path": args.corpus,
            "dataset_path": args.dataset,
            "partition": args.partition,
            "folds": args.folds,
            "seed": args.seed,
            "threshold": args.threshold,
            "group_by_article": args.group_by_article,
            "provider": _provider_options(args),
        },
    )
    _print(body)


def _cmd_experiment(client: ServiceClient, args) -> None:
    body = client.post("/v1/experiment", {"config_path": args.config})
    _print(body)


def _cmd_serve(_: ServiceClient, args) -> None:
    import uvicorn

    from .service.app import create_app

    table = {}
    if args.translation_table:
        table = json.loads(open(args.translation_table, encoding="utf-8").read())
    uvicorn.run(create_app(translation_table=table), host=args.host, port=args.port)


def _add_provider_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dim", type=int, default=256, help="built-in embedder dimension")
    parser.add_argument("--model", default=None, help="remote embedding model name (with EMBED_URL)")


def build_parser() -> _Parser:
    parser = _Parser(prog="claimmatch", description=__doc__)
    parser.add_argument("--server", default=None, help="service URL; default runs in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="read, validate and summarize a JSONL corpus")
    p.add_argument("corpus")
    p.add_argument("--out", default=None, help="write the normalized corpus here")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("validate", help="report partitions, orphans and duplicate pairs")
    p.add_argument("corpus")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("index", help="build a BM25 index file")
    p.add_argument("corpus")
    p.add_argument("--granularity", choices=["article", "paragraph"], default="article")
    p.add_argument("--out", required=True)
    p.add_argument("--partition", default=None)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--token-limit", type=int, default=512)
    p.add_argument("--no-title", action="store_true", help="do not index titles as paragraph 0")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("embed-store", help="build an embedding vector store file")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--partition", default=None)
    p.add_argument("--token-limit", type=int, default=512)
    p.add_argument("--no-title", action="store_true")
    _add_provider_args(p)
    p.set_defaults(func=_cmd_embed_store)

    p = sub.add_parser("search", help="query an index or store")
    p.add_argument("--system", choices=["bm25-full", "bm25-para", "dense"], required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--query-id", default="q0")
    p.add_argument("--index", default=None, help="BM25 index path")
    p.add_argument("--store", default=None, help="dense store path")
    p.add_argument("--aggregate", choices=["max", "mean", "sum"], default="max")
    _add_provider_args(p)
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("mine", help="mine negative pairs and write a labeled dataset")
    p.add_argument("corpus")
    p.add_argument("--partition", required=True)
    p.add_argument("--strategy", choices=["random", "hard"], default="hard")
    p.add_argument("--ceiling", type=float, default=0.7)
    p.add_argument("--ratio", type=int, default=1, help="negatives per positive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--negatives-only", action="store_true", help="write negatives without positives")
    _add_provider_args(p)
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("eval-retrieval", help="score a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--ks", type=lambda s: [int(x) for x in s.split(",")], default=[1, 5, 10, 20, 50])
    p.set_defaults(func=_cmd_eval_retrieval)

    p = sub.add_parser("eval-match", help="cross-validate the pair scorer on a labeled dataset")
    p.add_argument("corpus")
    p.add_argument("--dataset", required=True)
    p.add_argument("--partition", default="")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--group-by-article", action="store_true")
    _add_provider_args(p)
    p.set_defaults(func=_cmd_eval_match)

    p = sub.add_parser("experiment", help="run the configured retrieval/matching experiments")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--translation-table", default=None, help="JSON token table for /v1/translate")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        client = None if args.command == "serve" else ServiceClient(args.server)
        args.func(client, args)
        return 0
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
