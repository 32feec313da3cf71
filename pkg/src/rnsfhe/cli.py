"""Command line harness: microbenchmarks, encrypted queries, ablations.

All commands print a JSON report to stdout (optionally to a file) and exit
nonzero when any correctness check fails.
"""

from __future__ import annotations

import json
import sys

import click

from . import bench
from .pools import MAX_LEN


def _emit(report: dict, json_path: str | None):
    text = json.dumps(report, indent=2)
    if json_path:
        with open(json_path, "w") as fh:
            fh.write(text + "\n")
    click.echo(text)


@click.group()
def main():
    """RNS homomorphic encryption benchmark and query harness."""


@main.command("bench")
@click.option("--scheme", type=click.Choice(["ckks", "bfv", "bgv"]),
              required=True)
@click.option("--profile", default="desk4k",
              type=click.Choice(["desk4k", "desk8k", "pdq", "big32k"]))
@click.option("--reps", default=10, show_default=True)
@click.option("--json", "json_path", default=None, type=click.Path())
def bench_cmd(scheme, profile, reps, json_path):
    """Per-operator microbenchmarks for one scheme."""
    try:
        report = bench.bench_operators(scheme, profile, reps)
    except bench.OracleMismatch as exc:
        click.echo(f"correctness check failed: {exc}", err=True)
        sys.exit(1)
    _emit(report, json_path)


@main.command("pdq")
@click.option("--query", type=click.IntRange(1, 4), required=True)
@click.option("--rows", default=1024, show_default=True)
@click.option("--profile", default="pdq", show_default=True)
@click.option("--digits", default=8, show_default=True,
              help="Digits per value in the comparison encoding.")
@click.option("--base", default=4, show_default=True)
@click.option("--transport", default="inproc",
              type=click.Choice(["inproc", "socket"]), show_default=True)
@click.option("--server", "server_url", default=None,
              help="Run against a remote HTTP service instead of a local "
                   "server thread.")
@click.option("--no-mem-pool", is_flag=True,
              help="Ablation: bypass the arena memory pool.")
@click.option("--return-every-op", is_flag=True,
              help="Ablation: release every block to the host immediately.")
@click.option("--lanes", default=MAX_LEN, show_default=True,
              type=click.IntRange(1, MAX_LEN))
@click.option("--ntt", default="auto", type=click.Choice(["auto", "bm", "mm"]),
              show_default=True)
@click.option("--seed", default=None, type=int,
              help="Dataset seed (defaults to the shipped benchmark seed).")
@click.option("--json", "json_path", default=None, type=click.Path())
def pdq_cmd(query, rows, profile, digits, base, transport, server_url,
            no_mem_pool, return_every_op, lanes, ntt, seed, json_path):
    """One encrypted benchmark query, validated against the plain oracle."""
    kwargs = dict(rows=rows, profile=profile, digits=digits, base=base,
                  lanes=lanes, use_mem_pool=not no_mem_pool,
                  pool_mode="return_every_op" if return_every_op else "pooled",
                  ntt=ntt)
    if seed is not None:
        kwargs["seed"] = seed
    try:
        if server_url:
            report = _run_pdq_remote(query, server_url, **kwargs)
        else:
            report = bench.run_pdq(query, transport=transport, **kwargs)
    except bench.OracleMismatch as exc:
        click.echo(f"oracle mismatch: {exc}", err=True)
        sys.exit(1)
    _emit(report, json_path)


def _run_pdq_remote(query_id, server_url, rows, profile, digits, base,
                    seed=None, **_ignored):
    """Thin-client run against a running HTTP service; pool/lane ablation
    flags apply to the remote process, not here, and are ignored."""
    import time

    from .context import Scheme, params_for_profile
    from .coremath.modmath import ParameterError
    from .pdq.dataset import DEFAULT_SEED, make_dataset
    from .pdq.engine import standard_query
    from .pdq.protocol import PdqClient
    from .service.client import HttpTransport

    seed = DEFAULT_SEED if seed is None else seed
    cfg = bench._pdq_config(rows, profile, digits, base)
    params = params_for_profile(profile, Scheme.CKKS)
    if rows > params.n // 2:
        raise ParameterError(f"{rows} rows exceed {params.n // 2} slots")
    data = make_dataset(cfg, seed=seed)
    spec = standard_query(query_id)
    transport = HttpTransport(server_url)
    client = PdqClient(transport, cfg)
    t0 = time.perf_counter()
    client.upload_context()
    for name, vals in data.items():
        client.upload_column(name, vals)
    upload_ms = (time.perf_counter() - t0) * 1e3
    t0 = time.perf_counter()
    result, _meta = client.run_query(spec)
    first_cal_ms = (time.perf_counter() - t0) * 1e3
    client.close()
    oracle = bench.check_pdq_result(spec, data, result)
    return {
        "kind": "run_pdq",
        "query": query_id,
        "rows": rows,
        "profile": profile,
        "transport": "http",
        "server": server_url,
        "upload_ms": upload_ms,
        "first_cal_ms": first_cal_ms,
        "full_task_ms": upload_ms + first_cal_ms,
        "oracle": oracle,
        "oracle_ok": True,
    }


@main.command("ablate")
@click.option("--which", required=True,
              type=click.Choice(["mempool", "streampool", "ntt", "mod"]))
@click.option("--json", "json_path", default=None, type=click.Path())
def ablate_cmd(which, json_path):
    """Resource-manager and kernel ablations."""
    try:
        report = bench.run_ablations(which)
    except bench.OracleMismatch as exc:
        click.echo(f"correctness check failed: {exc}", err=True)
        sys.exit(1)
    _emit(report, json_path)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8470, show_default=True)
@click.option("--mask-seed", default=None, type=int,
              help="Seed for the server's inverse-protocol masks.")
def serve_cmd(host, port, mask_seed):
    """Run the HTTP query service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(mask_seed=mask_seed), host=host, port=port)


if __name__ == "__main__":
    main()
