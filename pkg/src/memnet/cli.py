"""Command-line client of the simulation service.

All work happens in the service handlers; the CLI only reads input files,
builds requests, and writes the returned files. By default the handlers run
in-process; ``--server URL`` sends the same requests to a running service
instead.

Subcommands: ``check`` (topology + consistency, exit code 0 iff both hold),
``run`` (transient, coupled or drive mode), ``steady`` (stationary state at
fixed bias), ``serve`` (start the HTTP service).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import SimulatorError
from .service import models


def _client(server: str | None):
    if server is None:
        from .service import check_handler, run_handler, steady_handler

        return {
            "/check": check_handler,
            "/run": run_handler,
            "/steady": steady_handler,
        }

    import httpx

    def remote(path, response_model):
        def call(req):
            resp = httpx.post(
                server.rstrip("/") + path, json=req.model_dump(),
                timeout=3600.0,
            )
            if resp.status_code != 200:
                raise SimulatorError(
                    f"server error {resp.status_code}: {resp.text}")
            return response_model.model_validate(resp.json())

        return call

    return {
        "/check": remote("/check", models.CheckResponse),
        "/run": remote("/run", models.RunResponse),
        "/steady": remote("/steady", models.SteadyResponse),
    }


def _read(path: str) -> str:
    return Path(path).read_text()


def _device_text(args) -> str:
    """Device config from the explicit argument or the netlist reference."""
    if getattr(args, "device", None):
        return _read(args.device)
    if getattr(args, "netlist", None):
        from .netlist import parse_netlist

        nl = parse_netlist(_read(args.netlist))
        mem = nl.memristor
        if mem is not None and mem.device:
            path = Path(args.netlist).parent / mem.device
            if path.exists():
                return path.read_text()
    raise SimulatorError(
        "no device config: pass one explicitly or reference it from the "
        "memristor element (device=<path>)"
    )


def cmd_check(args) -> int:
    client = _client(args.server)
    req = models.CheckRequest(
        netlist=_read(args.netlist),
        device_config=_device_text(args),
        repair=args.repair_consistency,
    )
    resp = client["/check"](req)
    print(f"no LI-cutset:  {'pass' if resp.no_li_cutset else 'FAIL'}")
    if resp.cutset_witness is not None:
        print(f"  witness: {resp.cutset_witness}")
    print(f"no CV-loop:    {'pass' if resp.no_cv_loop else 'FAIL'}")
    if resp.loop_witness is not None:
        print(f"  witness: {resp.loop_witness}")
    if resp.decoupled:
        print(f"decoupling:    pass (cond(E1) = {resp.cond_E1:.3e})")
    else:
        print(f"decoupling:    FAIL ({resp.detail})")
    if resp.consistent is not None:
        status = "pass" if (resp.consistent or args.repair_consistency) else "FAIL"
        print(f"consistency:   {status} "
              f"(residual {resp.consistency_residual:.3e})")
    print("ok" if resp.ok else f"not ok: {resp.detail}")
    return 0 if resp.ok else 1


def cmd_run(args) -> int:
    client = _client(args.server)
    mode = "drive" if args.drive else "coupled"
    req = models.RunRequest(
        device_config=_device_text(args),
        netlist=_read(args.netlist) if args.netlist else None,
        dt=args.dt,
        t_end=args.t_end,
        mode=mode,
        drive=args.drive,
        fields_every=args.fields_every,
        repair_consistency=args.repair_consistency,
        k_trunc=args.k_trunc,
        gummel_tol=args.gummel_tol,
    )
    resp = client["/run"](req)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(resp.files.items()):
        (out / name).write_text(text)
        print(f"wrote {out / name}")
    print(json.dumps({"summary": resp.summary,
                      "conservation": resp.conservation}, indent=2))
    return 0


def cmd_steady(args) -> int:
    client = _client(args.server)
    req = models.SteadyRequest(
        device_config=_read(args.device),
        bias=(args.bias, args.bias2),
        dt0=args.dt,
        tol=args.tol,
        max_steps=args.max_steps,
    )
    resp = client["/steady"](req)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "steady_fields.txt").write_text(resp.fields)
    print(json.dumps({
        "converged": resp.converged, "steps": resp.steps,
        "rate": resp.rate, "masses": resp.masses,
        "min_density": resp.min_density, "max_density": resp.max_density,
    }, indent=2))
    return 0 if resp.converged else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memnet",
        description="Memristor device / electric network co-simulator",
    )
    parser.add_argument("--server", default=None,
                        help="URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("check", help="index-1 topology and consistency check")
    pc.add_argument("netlist")
    pc.add_argument("--device", help="device config file")
    pc.add_argument("--repair-consistency", action="store_true")
    pc.set_defaults(func=cmd_check)

    pr = sub.add_parser("run", help="transient simulation")
    pr.add_argument("netlist", nargs="?", default=None,
                    help="netlist file (omit in drive mode)")
    pr.add_argument("--device", help="device config file")
    pr.add_argument("--dt", type=float, default=1e-3)
    pr.add_argument("--t-end", type=float, default=0.1)
    pr.add_argument("--drive", default=None,
                    help="open-loop bias, e.g. SIN:1.0,0.5 or DC:0.2")
    pr.add_argument("--k-trunc", type=float, default=None,
                    help="drift clamp level (default off)")
    pr.add_argument("--gummel-tol", type=float, default=None)
    pr.add_argument("--repair-consistency", action="store_true")
    pr.add_argument("--fields-every", type=int, default=0, metavar="N")
    pr.add_argument("--out", default="out")
    pr.set_defaults(func=cmd_run)

    ps = sub.add_parser("steady", help="stationary state at fixed bias")
    ps.add_argument("device", help="device config file")
    ps.add_argument("--bias", type=float, default=0.0,
                    help="terminal 1 bias")
    ps.add_argument("--bias2", type=float, default=0.0,
                    help="terminal 2 bias")
    ps.add_argument("--dt", type=float, default=0.1, help="initial step")
    ps.add_argument("--tol", type=float, default=1e-10)
    ps.add_argument("--max-steps", type=int, default=200)
    ps.add_argument("--out", default="out")
    ps.set_defaults(func=cmd_steady)

    pv = sub.add_parser("serve", help="start the HTTP service")
    pv.add_argument("--host", default="127.0.0.1")
    pv.add_argument("--port", type=int, default=8000)
    pv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SimulatorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
