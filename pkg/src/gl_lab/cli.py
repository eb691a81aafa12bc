"""Command-line client for the experiment runner.

Subcommands mirror the runner registry: sample | dgff | hs | gibbs | clt |
coupling | mean-harm | entropy | bl | beurling, plus `serve` to start the
HTTP service.  By default a run executes in-process; with --server URL the
config is posted to a running service and any artifacts are written locally.
A JSON config document (--config) supplies defaults; explicit flags win, and
the manifest records the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError
from .runner import parse_config, run
from .runner.config import BoundarySpec, DomainSpec


def _pair(text: str) -> tuple[float, float]:
    a, _, b = text.partition(",")
    return (float(a), float(b or 0.0))


def _int_pair(text: str) -> tuple[int, int]:
    a, _, b = text.partition(",")
    return (int(a), int(b))


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="gl-lab",
        description="Stochastic lattice laboratory for gradient interface models",
    )
    sub = top.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="64-bit master seed (default 0)")
        p.add_argument("--out", help="output directory for CSVs, summary.json, manifest.json")
        p.add_argument("--threads", type=int, help="worker processes for replica-parallel runs")
        p.add_argument("--config", help="JSON config document; flags override its values")
        p.add_argument("--server", help="URL of a running gl-lab service; run remotely")
        p.add_argument("--domain", help="rect:WxH | disk:R | mask:PATH")
        p.add_argument("--potential", choices=["quadratic", "cosine"])
        p.add_argument("--dt", type=float, help="EM step size (capped at 1/(8*A_V))")

    p = sub.add_parser("sample", help="stationary field samples as CSV grids")
    common(p)
    p.add_argument("--boundary", help="zero | tilt:u1,u2 | sine:amp[,waves] | file:PATH")
    p.add_argument("--burn", type=float, dest="burn_multiplier", help="burn-in horizon in units of R^2")
    p.add_argument("--thin", type=int, dest="thin_steps", help="EM steps between retained samples")
    p.add_argument("--n-samples", type=int, dest="n_samples")

    p = sub.add_parser("dgff", help="exact Gaussian field samples and moment checks")
    common(p)
    p.add_argument("--boundary")
    p.add_argument("--n-samples", type=int, dest="n_samples")

    p = sub.add_parser("hs", help="dynamic-environment walk estimators (mean | cov)")
    common(p)
    p.add_argument("--mode", choices=["mean", "cov"])
    p.add_argument("--boundary")
    p.add_argument("--x", type=_int_pair, help="walk start site i,j")
    p.add_argument("--y", type=_int_pair, help="occupation target site i,j (cov mode)")
    p.add_argument("--walks", type=int)
    p.add_argument("--traj", type=int, help="number of environment segments")
    p.add_argument("--r-nodes", type=int, dest="r_nodes", help="quadrature nodes for the mean")

    p = sub.add_parser("gibbs", help="torus gradient state: tilt weights a_u and beta")
    common(p)
    p.add_argument("--n", type=int, help="torus side")
    p.add_argument("--u", type=_pair, help="tilt u1,u2")
    p.add_argument("--burn", type=float, dest="burn_multiplier")
    p.add_argument("--samples", type=int)
    p.add_argument("--thin", type=int, dest="thin_steps")

    p = sub.add_parser("clt", help="normality of the gradient linear functional")
    common(p)
    p.add_argument("--n", type=int, help="square side")
    p.add_argument("--u", type=_pair)
    p.add_argument("--boundary")
    p.add_argument("--n-samples", type=int, dest="n_samples")

    p = sub.add_parser("coupling", help="harmonicity of the coupled difference field")
    common(p)
    p.add_argument("--boundary")
    p.add_argument("--boundary-tilde", dest="boundary_tilde")
    p.add_argument("--r-fraction", type=float, dest="r_fraction")
    p.add_argument("--snapshots", type=int)

    p = sub.add_parser("mean-harm", help="harmonicity of the estimated mean field")
    common(p)
    p.add_argument("--boundary")
    p.add_argument("--u", type=_pair)
    p.add_argument("--r-fraction", type=float, dest="r_fraction")
    p.add_argument("--n-samples", type=int, dest="n_samples")

    p = sub.add_parser("entropy", help="symmetrized entropy estimate and TV bound")
    common(p)
    p.add_argument("--boundary")
    p.add_argument("--boundary-tilde", dest="boundary_tilde")
    p.add_argument("--n-samples", type=int, dest="n_samples")

    p = sub.add_parser("bl", help="variance domination by the Gaussian comparison field")
    common(p)
    p.add_argument("--boundary")
    p.add_argument("--n-vectors", type=int, dest="n_vectors")
    p.add_argument("--n-samples", type=int, dest="n_samples")

    p = sub.add_parser("beurling", help="obstacle-escape probability experiment")
    common(p)
    p.add_argument("--r", type=float, help="escape radius")
    p.add_argument("--d-list", type=_int_list, dest="d_list", help="obstacle distances, e.g. 2,4,8,16")
    p.add_argument("--walks", type=int)
    p.add_argument("--beta", type=_pair, help="axis weights b1,b2")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return top


_SPEC_FIELDS = {"domain": DomainSpec, "boundary": BoundarySpec, "boundary_tilde": BoundarySpec}


def _collect_overrides(args: argparse.Namespace) -> dict:
    skip = {"subcommand", "config", "server"}
    overrides = {}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        if key in _SPEC_FIELDS and isinstance(value, str):
            value = _SPEC_FIELDS[key].parse(value).model_dump()
        overrides[key] = value
    return overrides


def _run_remote(server: str, name: str, cfg, out: str | None) -> int:
    import httpx

    payload = {"config": json.loads(cfg.model_dump_json()), "include_artifacts": bool(out)}
    payload["config"]["out"] = None  # artifacts are written client-side
    resp = httpx.post(f"{server.rstrip('/')}/run/{name}", json=payload, timeout=None)
    if resp.status_code != 200:
        print(f"server error {resp.status_code}: {resp.text}", file=sys.stderr)
        return 2
    body = resp.json()
    if out:
        os.makedirs(out, exist_ok=True)
        for fname, text in (body.get("artifacts") or {}).items():
            with open(os.path.join(out, fname), "w") as fh:
                fh.write(text)
        with open(os.path.join(out, "summary.json"), "w") as fh:
            json.dump(body["summary"], fh, indent=2)
        with open(os.path.join(out, "manifest.json"), "w") as fh:
            json.dump(body["manifest"], fh, indent=2)
    print(json.dumps({"verdicts": body["verdicts"], "passed": body["passed"]}, indent=2))
    return 0 if body["passed"] else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    name = args.subcommand

    if name == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    file_values = {}
    if args.config:
        if not os.path.exists(args.config):
            print(f"config file not found: {args.config}", file=sys.stderr)
            return 2
        with open(args.config) as fh:
            file_values = json.load(fh)

    try:
        cfg = parse_config(name, file_values, _collect_overrides(args))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    if args.server:
        return _run_remote(args.server, name, cfg, cfg.out)

    result = run(name, cfg)
    print(json.dumps({"verdicts": result.verdicts, "passed": result.passed,
                      "wall_seconds": round(result.wall_seconds, 3)}, indent=2))
    if cfg.out:
        print(f"outputs written to {cfg.out}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
