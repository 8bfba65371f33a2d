"""Command-line client for the sketch service.

Every subcommand talks HTTP to a service instance: pass --server to reach a
running one, otherwise an in-process application handles the requests.
File handling stays on the client side — token streams are newline-delimited
UTF-8 text, sketch snapshots are the binary format produced by the service.
"""

from __future__ import annotations

import argparse
import base64
import sys


def _client(server: str | None):
    import httpx
    if server:
        return httpx.Client(base_url=server, timeout=None)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # starlette's httpx deprecation notice
        from fastapi.testclient import TestClient
    from .service.app import create_app
    return TestClient(create_app())


def _check(resp) -> dict:
    if resp.status_code >= 300:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise SystemExit(f"error ({resp.status_code}): {detail}")
    return resp.json()


def _read_tokens(path: str) -> list[str]:
    fh = sys.stdin if path == "-" else open(path, "r", encoding="utf-8")
    try:
        return [line.rstrip("\n") for line in fh if line.strip()]
    finally:
        if fh is not sys.stdin:
            fh.close()


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_generate(client, args) -> None:
    body = {"family": args.family, "a": args.a, "lam": getattr(args, "lambda"),
            "sigma": args.sigma, "n": args.n, "seed": args.seed}
    data = _check(client.post("/generate", json=body))
    _write_text(args.out, "\n".join(data["tokens"]) + "\n")


def cmd_sketch(client, args) -> None:
    tokens = _read_tokens(getattr(args, "in"))
    body = {"tokens": tokens, "kind": args.kind, "d": args.d, "w": args.w,
            "seed": args.seed, "m0": args.m0}
    summary = _check(client.post("/sketches", json=body))
    exported = _check(client.get(f"/sketches/{summary['sketch_id']}/export"))
    with open(args.out_snapshot, "wb") as fh:
        fh.write(base64.b64decode(exported["snapshot_b64"]))
    _write_text(args.out_snapshot + ".counts", exported["counts_tsv"])
    print(f"sketched {summary['m_sketched']} tokens after a warm-up of "
          f"{summary['m0']} ({summary['distinct_warmup']} distinct); "
          f"snapshot -> {args.out_snapshot}")


def cmd_query(client, args) -> None:
    with open(args.snapshot, "rb") as fh:
        snapshot_b64 = base64.b64encode(fh.read()).decode("ascii")
    with open(args.snapshot + ".counts", "r", encoding="utf-8") as fh:
        counts_tsv = fh.read()
    summary = _check(client.post("/sketches/import", json={
        "snapshot_b64": snapshot_b64, "counts_tsv": counts_tsv}))
    body = {"tokens": args.token, "alpha": args.alpha, "regime": args.regime,
            "score": args.score, "L": args.L, "m_prime": args.m_prime,
            "m0_train": args.m0_train, "seed": args.seed,
            "two_sided": args.two_sided, "exact_warmup": args.exact_warmup,
            "return_calibration": bool(args.save_calibration)}
    data = _check(client.post(f"/sketches/{summary['sketch_id']}/query", json=body))
    for iv in data["intervals"]:
        print(f"{iv['token']}\t{iv['lower']}\t{iv['upper']}")
    if args.save_calibration:
        with open(args.save_calibration + ".quant", "wb") as fh:
            fh.write(base64.b64decode(data["calibration_b64"]))
        if data.get("model_b64"):
            with open(args.save_calibration + ".model", "wb") as fh:
                fh.write(base64.b64decode(data["model_b64"]))


def cmd_experiment(client, args) -> None:
    with open(args.config, "r", encoding="utf-8") as fh:
        config_text = fh.read()
    data = _check(client.post("/experiment", json={"config_text": config_text}))
    _write_text(args.out, data["csv"])


def _expand_theory_args(pairs: list[str]) -> list[dict]:
    """key=value arguments; one value may be a start:stop:step sweep."""
    base: dict = {}
    sweep_key = None
    sweep_vals: list[float] = []
    for raw in pairs:
        if "=" not in raw:
            raise SystemExit(f"theory args must look like key=value, got {raw!r}")
        key, _, value = raw.partition("=")
        if ":" in value:
            if sweep_key is not None:
                raise SystemExit("at most one swept argument is supported")
            start, stop, step = (float(v) for v in value.split(":"))
            n = int((stop - start) / step + 1e-9) + 1
            sweep_key, sweep_vals = key, [start + i * step for i in range(n)]
        else:
            base[key] = value
    if sweep_key is None:
        return [base]
    return [{**base, sweep_key: v} for v in sweep_vals]


def cmd_theory(client, args) -> None:
    print("op,inputs,output")
    for call_args in _expand_theory_args(args.args):
        data = _check(client.post("/theory", json={"op": args.op, "args": call_args}))
        print(data["csv"])


def cmd_serve(args) -> None:
    import uvicorn
    uvicorn.run("sketchci.service.app:app", host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchci",
        description="Sketch token streams and query them with calibrated "
                    "frequency intervals.")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service; default: in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit a synthetic token stream")
    p.add_argument("--family", choices=["zipf", "pyp"], default="zipf")
    p.add_argument("--a", type=float, default=1.5, help="zipf tail exponent")
    p.add_argument("--lambda", type=float, default=5000.0, dest="lambda",
                   help="pitman-yor concentration")
    p.add_argument("--sigma", type=float, default=0.0, help="pitman-yor discount")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output file, - for stdout")

    p = sub.add_parser("sketch", help="build a sketch snapshot from a stream")
    p.add_argument("--kind", choices=["cms", "cmscu"], default="cmscu")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--w", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m0", type=int, required=True, help="warm-up length")
    p.add_argument("--in", required=True, help="token stream file, - for stdin")
    p.add_argument("--out-snapshot", required=True)

    p = sub.add_parser("query", help="confidence intervals for tokens")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--regime", choices=["marginal", "conditional", "unique"],
                   default="marginal")
    p.add_argument("--score", choices=["fixed", "adaptive"], default="fixed")
    p.add_argument("--L", type=int, default=5, help="frequency bins (conditional)")
    p.add_argument("--m-prime", type=int, default=100, dest="m_prime",
                   help="calibration group size (unique)")
    p.add_argument("--m0-train", type=int, default=-1, dest="m0_train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--two-sided", action="store_true")
    p.add_argument("--exact-warmup", action="store_true",
                   help="answer warm-up tokens with their exact count")
    p.add_argument("--save-calibration", default=None, metavar="PREFIX",
                   help="write PREFIX.quant (and PREFIX.model) sidecars")
    p.add_argument("--token", nargs="+", required=True)

    p = sub.add_parser("experiment", help="run a config-driven experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="-", help="CSV output file, - for stdout")

    p = sub.add_parser("theory", help="evaluate a closed-form quantity")
    p.add_argument("--op", required=True)
    p.add_argument("--args", nargs="*", default=[],
                   help="key=value; one value may be start:stop:step")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        cmd_serve(args)
        return 0
    handlers = {"generate": cmd_generate, "sketch": cmd_sketch,
                "query": cmd_query, "experiment": cmd_experiment,
                "theory": cmd_theory}
    with _client(args.server) as client:
        handlers[args.command](client, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
