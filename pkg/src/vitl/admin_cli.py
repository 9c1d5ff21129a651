"""Operator CLI over the HTTP API.

Every subcommand is a single API call; the tool holds no business logic of
its own, so anything it shows is also visible to any other API client.

    vitl-admin [--server URL] [--token T] [--json] images list
    vitl-admin images seed <file>
    vitl-admin hosts list
    vitl-admin hosts register --ip A [--total-mem MB] [--max-instances N] ...
    vitl-admin requests submit --vm N --cpu INTEL|AMD --lease HOURS ...
    vitl-admin requests get <job_id>
    vitl-admin requests stop <job_id>
    vitl-admin placements simulate --cpu INTEL|AMD [--mem MB] [--exclude N ...]
    vitl-admin log tail [--after SEQ] [--limit N]

Exit codes: 0 ok, 2 usage, 3 service unreachable, 4 not found, 5 auth
rejected, 6 validation rejected, 7 conflict, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import urllib.error
import urllib.request

DEFAULT_SERVER = os.environ.get("VITL_SERVER", "http://127.0.0.1:8095")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNREACHABLE = 3
EXIT_NOT_FOUND = 4
EXIT_AUTH = 5
EXIT_VALIDATION = 6
EXIT_CONFLICT = 7
EXIT_OTHER = 1

_STATUS_EXITS = {401: EXIT_AUTH, 404: EXIT_NOT_FOUND, 409: EXIT_CONFLICT, 400: EXIT_VALIDATION}


class CliFailure(Exception):
    def __init__(self, exit_code: int, message: str, payload: dict | None = None):
        super().__init__(message)
        self.exit_code = exit_code
        self.payload = payload or {}


def call_api(server: str, method: str, path: str, body: dict | None = None,
             token: str | None = None) -> dict:
    headers = {"Content-Type": "application/json"}
    if token:
        headers["X-Auth-Token"] = token
    data = json.dumps(body).encode() if body is not None else None
    request = urllib.request.Request(server.rstrip("/") + path, method=method,
                                     data=data, headers=headers)
    try:
        with urllib.request.urlopen(request, timeout=30) as response:
            return json.loads(response.read())
    except urllib.error.HTTPError as exc:
        try:
            payload = json.loads(exc.read())
        except (ValueError, OSError):
            payload = {}
        message = payload.get("error", {}).get("message", f"HTTP {exc.code}")
        raise CliFailure(_STATUS_EXITS.get(exc.code, EXIT_OTHER), message, payload)
    except (urllib.error.URLError, OSError) as exc:
        raise CliFailure(EXIT_UNREACHABLE, f"cannot reach {server}: {exc}")


def render_table(rows: list[dict], columns: list[str]) -> str:
    if not rows:
        return "(none)"
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in columns}
    header = "  ".join(c.ljust(widths[c]) for c in columns)
    lines = [header, "  ".join("-" * widths[c] for c in columns)]
    for row in rows:
        lines.append("  ".join(str(row.get(c, "")).ljust(widths[c]) for c in columns))
    return "\n".join(lines)


def emit(args, payload: dict, table_text: str) -> None:
    print(json.dumps(payload, indent=2) if args.json else table_text)


# -- subcommand handlers -----------------------------------------------------

def cmd_images_list(args) -> int:
    payload = call_api(args.server, "GET", "/images")
    emit(args, payload, render_table(
        payload["images"],
        ["vm_id", "os_name", "os_family", "display_name"],
    ))
    return EXIT_OK


def cmd_images_seed(args) -> int:
    records = []
    with open(args.file, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                records.append(json.loads(line))
    payload = call_api(args.server, "POST", "/images", {"images": records}, args.token)
    emit(args, payload, f"seeded {len(payload['added'])} image(s): {payload['added']}")
    return EXIT_OK


def cmd_hosts_list(args) -> int:
    payload = call_api(args.server, "GET", "/hosts")
    emit(args, payload, render_table(
        payload["hosts"],
        ["node_id", "ip_addr", "cpu_model", "machine_status", "avail_mem",
         "total_mem", "runningvms", "max_instances"],
    ))
    return EXIT_OK


def cmd_hosts_register(args) -> int:
    body = {
        "ip_or_hostname": args.ip,
        "distro_name": args.distro,
        "cpu_model": args.cpu,
        "architecture": args.architecture,
        "total_mem": args.total_mem,
        "avail_mem": args.avail_mem if args.avail_mem is not None else args.total_mem,
        "automation": args.automation,
        "max_instances": args.max_instances,
        "hostname": args.hostname or args.ip,
    }
    payload = call_api(args.server, "POST", "/hosts/register", body, args.token)
    emit(args, payload, f"registered node {payload['node_id']}")
    return EXIT_OK


def cmd_requests_submit(args) -> int:
    body = {
        "vm_id": args.vm,
        "cpu_model": args.cpu,
        "lease_time_hours": args.lease,
        "requestor": args.requestor,
        "request_type": args.type,
    }
    if args.vm_user:
        body["vm_user"] = args.vm_user
    payload = call_api(args.server, "POST", "/requests", body, args.token)
    request = payload["request"]
    emit(args, payload, f"job {payload['job_id']} submitted: {request['status']}")
    return EXIT_OK


def _request_summary(record: dict) -> str:
    lines = [
        f"job {record['job_id']}: {record['status']}",
        f"  image vm_id={record['vm_id']}  cpu={record['architecture']}  "
        f"lease={record['lease_time_hours']}h  remaining={record['time_remaining_seconds']}s",
        f"  node={record['node_id']}  ip={record['ip_address'] or '-'}",
        "  steps: copy={status_copy_vm} boot={status_vm_up} "
        "ip={status_ip_set} email={status_email_sent}".format(**record),
        f"  reason: {record['status_reason']}",
    ]
    if record.get("credentials"):
        creds = record["credentials"]
        lines.append(f"  login: {creds['username']} / {creds['password']}")
    return "\n".join(lines)


def cmd_requests_get(args) -> int:
    payload = call_api(args.server, "GET", f"/requests/{args.job_id}")
    emit(args, payload, _request_summary(payload["request"]))
    return EXIT_OK


def cmd_requests_stop(args) -> int:
    payload = call_api(args.server, "POST", f"/requests/{args.job_id}:stop", {}, args.token)
    emit(args, payload, f"job {args.job_id} stopped: {payload['request']['status']}")
    return EXIT_OK


def cmd_placements_simulate(args) -> int:
    body = {"cpu_model": args.cpu, "request_type": args.type}
    if args.vm is not None:
        body["vm_id"] = args.vm
    if args.mem is not None:
        body["required_mem"] = args.mem
    if args.exclude:
        body["excluded_nodes"] = args.exclude
    if args.k is not None:
        body["k"] = args.k
    payload = call_api(args.server, "POST", "/placements:simulate", body)
    decision = payload["decision"]
    if decision["outcome"] == "QUEUE":
        headline = "decision: QUEUE (no eligible host)"
    else:
        headline = (
            f"decision: CHOSEN node {decision['node_id']} "
            f"via {decision['set_label']} (score {decision['score']:.4f})"
        )
    table = render_table(
        payload["hosts"],
        ["node_id", "eligible", "set", "runningvms", "memory_factor", "score"],
    )
    emit(args, payload, headline + "\n" + table)
    return EXIT_OK


def cmd_log_tail(args) -> int:
    payload = call_api(args.server, "GET", f"/events?after={args.after}&limit={args.limit}")
    emit(args, payload, render_table(
        payload["events"],
        ["seq", "at", "job_id", "old_status", "event", "new_status"],
    ))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vitl-admin", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--server", default=DEFAULT_SERVER,
                        help="service base URL (or $VITL_SERVER)")
    parser.add_argument("--token", default=os.environ.get("VITL_TOKEN", ""),
                        help="auth token for mutating calls (or $VITL_TOKEN)")
    parser.add_argument("--json", action="store_true", help="print raw API bodies")
    top = parser.add_subparsers(dest="group", required=True)

    images = top.add_parser("images").add_subparsers(dest="action", required=True)
    images.add_parser("list").set_defaults(fn=cmd_images_list)
    seed = images.add_parser("seed")
    seed.add_argument("file")
    seed.set_defaults(fn=cmd_images_seed)

    hosts = top.add_parser("hosts").add_subparsers(dest="action", required=True)
    hosts.add_parser("list").set_defaults(fn=cmd_hosts_list)
    register = hosts.add_parser("register")
    register.add_argument("--ip", required=True)
    register.add_argument("--total-mem", type=int, default=8192, dest="total_mem")
    register.add_argument("--avail-mem", type=int, default=None, dest="avail_mem")
    register.add_argument("--cpu", default="INTEL", choices=("INTEL", "AMD"))
    register.add_argument("--architecture", default="32-bit", choices=("32-bit", "64-bit"))
    register.add_argument("--distro", default="linux")
    register.add_argument("--hostname", default="")
    register.add_argument("--automation", default="B", choices=("Y", "N", "B"))
    register.add_argument("--max-instances", type=int, default=1, dest="max_instances")
    register.set_defaults(fn=cmd_hosts_register)

    requests_ = top.add_parser("requests").add_subparsers(dest="action", required=True)
    submit = requests_.add_parser("submit")
    submit.add_argument("--vm", type=int, required=True)
    submit.add_argument("--cpu", default="INTEL", choices=("INTEL", "AMD"))
    submit.add_argument("--lease", type=int, required=True, help="lease hours")
    submit.add_argument("--requestor", default=os.environ.get("USER", "operator"))
    submit.add_argument("--type", default="USER", choices=("USER", "TOD"))
    submit.add_argument("--vm-user", default="", dest="vm_user")
    submit.set_defaults(fn=cmd_requests_submit)
    get = requests_.add_parser("get")
    get.add_argument("job_id", type=int)
    get.set_defaults(fn=cmd_requests_get)
    stop = requests_.add_parser("stop")
    stop.add_argument("job_id", type=int)
    stop.set_defaults(fn=cmd_requests_stop)

    placements = top.add_parser("placements").add_subparsers(dest="action", required=True)
    simulate = placements.add_parser("simulate")
    simulate.add_argument("--vm", type=int, default=None)
    simulate.add_argument("--cpu", required=True, choices=("INTEL", "AMD"))
    simulate.add_argument("--mem", type=int, default=None)
    simulate.add_argument("--type", default="USER", choices=("USER", "TOD"))
    simulate.add_argument("--exclude", type=int, nargs="*", default=[])
    simulate.add_argument("--k", type=float, default=None)
    simulate.set_defaults(fn=cmd_placements_simulate)

    log = top.add_parser("log").add_subparsers(dest="action", required=True)
    tail = log.add_parser("tail")
    tail.add_argument("--after", type=int, default=0)
    tail.add_argument("--limit", type=int, default=50)
    tail.set_defaults(fn=cmd_log_tail)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except CliFailure as failure:
        if args.json and failure.payload:
            print(json.dumps(failure.payload, indent=2), file=sys.stderr)
        print(f"vitl-admin: {failure}", file=sys.stderr)
        return failure.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
