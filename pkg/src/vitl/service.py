"""HTTP surface and service wiring.

Endpoints (JSON in, JSON out):

    POST /requests                  submit a request  (token required)
    GET  /requests/{job_id}         full record incl. the four sub-statuses
    POST /requests/{job_id}:stop    stop a running instance  (token required)
    GET  /images                    the servable catalog
    GET  /hosts                     fleet view with liveness and capacity
    POST /hosts/register            host self-registration  (token required)
    POST /hosts/{node_id}/heartbeat status ping  (token required)
    POST /placements:simulate       placement dry run with per-host scores
    GET  /events?after=N&limit=M    transition log tail

Every mutation funnels into the lifecycle engine's serialized core; the
HTTP layer itself is a thin threaded dispatcher. State survives restarts
via table snapshots plus an append-only transition journal (wal.jsonl).
"""

from __future__ import annotations

import argparse
import json
import os
import re
import signal
import threading
from dataclasses import dataclass, field, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .catalog import (
    CatalogError,
    CpuModel,
    Credentials,
    ImageCatalog,
    image_from_record,
    image_to_record,
    load_seed_file,
)
from .clock import Clock, RealClock
from .driver import SimDriverConfig, SimulatedDriver
from .hosts import (
    DuplicateHostError,
    HeartbeatPayload,
    HostRegistry,
    MalformedPayloadError,
    RegistryError,
    UnknownHostError,
)
from .lifecycle import (
    IllegalTransitionError,
    LifecycleEngine,
    RequestStatus,
    UnknownJobError,
    ValidationError,
)
from .notify import OutboxSink
from .persistence import (
    event_to_record,
    host_to_record,
    load_tables,
    persist_tables,
    request_to_record,
    snapshot_exists,
)
from .scheduling import (
    Automation,
    PlacementConstraints,
    RequestType,
    SchedulerConfig,
    explain_placement,
)

CONFIG_ENV_VAR = "VITL_CONFIG"


@dataclass(frozen=True)
class ServiceConfig:
    listen_address: str = "127.0.0.1:8095"
    offline_threshold_seconds: float = 300.0
    scheduler_k: float = 1.0
    reminder_fractions: tuple[float, float] = (0.75, 0.90)
    tokens: tuple[str, ...] = ("vitl-dev-token",)
    vm_memory_mb: int = 1024
    default_username: str = "vitl"
    default_password: str = "vitl-default"
    sim_driver: SimDriverConfig = field(default_factory=SimDriverConfig)
    persistence_dir: str = "vitl-state"
    outbox_path: str = ""  # default: <persistence_dir>/outbox.jsonl
    catalog_seed: str = ""
    sweep_interval_seconds: float = 30.0
    lease_tick_seconds: float = 1.0
    snapshot_interval_seconds: float = 60.0

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ServiceConfig":
        kwargs = dict(raw)
        if "reminder_fractions" in kwargs:
            kwargs["reminder_fractions"] = tuple(kwargs["reminder_fractions"])
        if "tokens" in kwargs:
            kwargs["tokens"] = tuple(kwargs["tokens"])
        if "sim_driver" in kwargs:
            sim = dict(kwargs["sim_driver"])
            if "failure_script" in sim:
                script = {}
                for key, mode in sim["failure_script"].items():
                    job, _, step = key.partition(":")
                    script[(int(job), step)] = mode
                sim["failure_script"] = script
            kwargs["sim_driver"] = SimDriverConfig(**sim)
        return cls(**kwargs)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _error_for(exc: Exception) -> ApiError:
    if isinstance(exc, ApiError):
        return exc
    if isinstance(exc, (UnknownJobError, UnknownHostError)):
        return ApiError(404, "not-found", str(exc))
    if isinstance(exc, IllegalTransitionError):
        return ApiError(409, "illegal-transition", str(exc))
    if isinstance(exc, DuplicateHostError):
        return ApiError(409, "duplicate-host", str(exc))
    if isinstance(exc, (ValidationError, MalformedPayloadError, CatalogError)):
        return ApiError(400, "validation", str(exc))
    if isinstance(exc, RegistryError):
        return ApiError(400, "validation", str(exc))
    if isinstance(exc, (KeyError, TypeError, ValueError)):
        return ApiError(400, "validation", f"bad request body: {exc}")
    return ApiError(500, "internal", "internal error")


class VitlService:
    """Owns the module graph and the HTTP server."""

    def __init__(self, config: ServiceConfig, clock: Clock | None = None):
        self.config = config
        self.clock = clock or RealClock()
        self.state_dir = Path(config.persistence_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        outbox = Path(config.outbox_path) if config.outbox_path else self.state_dir / "outbox.jsonl"

        self.catalog = ImageCatalog()
        self.registry = HostRegistry(offline_threshold_s=config.offline_threshold_seconds)
        self.driver = SimulatedDriver(
            config.sim_driver,
            self.clock,
            host_load=lambda node: max(0, self.registry.get(node).runningvms - 1),
        )
        self.engine = LifecycleEngine(
            self.catalog,
            self.registry,
            self.driver,
            OutboxSink(outbox),
            self.clock,
            scheduler_config=SchedulerConfig(k=config.scheduler_k),
            token_table=frozenset(config.tokens),
            reminder_fractions=config.reminder_fractions,
            vm_memory_mb=config.vm_memory_mb,
            default_credentials=Credentials(config.default_username, config.default_password),
            ip_subnet=config.sim_driver.subnet,
        )
        if snapshot_exists(self.state_dir):
            load_tables(self.state_dir, self.catalog, self.registry, self.engine)
        elif config.catalog_seed:
            for image in load_seed_file(config.catalog_seed):
                self.catalog.add(image)

        self._wal_lock = threading.Lock()
        self._wal_path = self.state_dir / "wal.jsonl"
        self.engine.journal = self._journal
        self.engine.on_jobs_assigned = self._start_pipelines

        host, _, port = config.listen_address.partition(":")
        self._httpd = ThreadingHTTPServer((host, int(port or "0")), _make_handler(self))
        self._httpd.daemon_threads = True
        self._threads: list[threading.Thread] = []
        self._stopping = threading.Event()

    # -- lifecycle of the service itself ------------------------------------

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._spawn(self._httpd.serve_forever, name="http")
        self._spawn(self._sweeper_loop, name="sweeper")
        self._spawn(self._ticker_loop, name="lease-ticker")
        self._spawn(self._snapshot_loop, name="snapshotter")

    def stop(self) -> None:
        self._stopping.set()
        self._httpd.shutdown()
        self._httpd.server_close()
        self.snapshot_now()

    def snapshot_now(self) -> None:
        persist_tables(self.state_dir, self.catalog, self.registry, self.engine)

    def _spawn(self, target, name: str, args=()) -> None:
        thread = threading.Thread(target=target, name=f"vitl-{name}", args=args, daemon=True)
        thread.start()
        self._threads.append(thread)

    def _sweeper_loop(self) -> None:
        while not self._stopping.wait(self.config.sweep_interval_seconds):
            self.registry.sweep_liveness(self.clock.now())

    def _ticker_loop(self) -> None:
        last = self.clock.now()
        while not self._stopping.wait(self.config.lease_tick_seconds):
            now = self.clock.now()
            if now > last:
                self.engine.expire_and_finalize(now, now - last)
            last = now

    def _snapshot_loop(self) -> None:
        while not self._stopping.wait(self.config.snapshot_interval_seconds):
            self.snapshot_now()

    def _journal(self, entry) -> None:
        with self._wal_lock, open(self._wal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event_to_record(entry)) + "\n")

    # -- pipeline orchestration ------------------------------------------------

    def _start_pipelines(self, job_ids: list[int]) -> None:
        for job_id in job_ids:
            self._spawn(self._drive_pipeline, name=f"pipeline-{job_id}", args=(job_id,))

    def _drive_pipeline(self, job_id: int) -> None:
        """Run the pipeline, reassigning away from failed hosts until the
        request is LIVE or out of candidates."""
        while True:
            record = self.engine.run_provision_pipeline(job_id)
            if record.status is not RequestStatus.INCOMPLETE:
                return
            decision = self.engine.reassign_incomplete(job_id)
            if decision.queued:
                return

    # -- request views -----------------------------------------------------------

    def request_view(self, job_id: int) -> dict:
        rec = self.engine.get_request(job_id)
        view = request_to_record(rec)
        view.pop("reservation_token", None)
        if rec.status in (RequestStatus.LIVE, RequestStatus.REMINDER1, RequestStatus.REMINDER2):
            creds = self.engine.credentials_for(job_id)
            view["credentials"] = {"username": creds.username, "password": creds.password}
        else:
            view["credentials"] = None
        return view

    # -- endpoint handlers ---------------------------------------------------------

    def check_token(self, token: str | None) -> bool:
        return token is not None and token in self.config.tokens

    def handle_submit(self, body: dict, token: str | None) -> tuple[int, dict]:
        rec = self.engine.submit_request(
            requestor=str(body["requestor"]),
            vm_id=int(body["vm_id"]),
            architecture=CpuModel(str(body["cpu_model"]).upper()),
            lease_time_hours=int(body["lease_time_hours"]),
            request_type=RequestType(str(body.get("request_type", "USER")).upper()),
            vm_user=str(body.get("vm_user", "")),
        )
        rec = self.engine.authorize(rec.job_id, token or "")
        if rec.status is RequestStatus.UNAUTHORIZED:
            return 401, {
                "error": {"code": "invalid-token", "message": "token not recognized"},
                "job_id": rec.job_id,
                "status": rec.status.value,
            }
        decision = self.engine.place(rec.job_id)
        if not decision.queued:
            self._start_pipelines([rec.job_id])
        return 201, {"job_id": rec.job_id, "request": self.request_view(rec.job_id)}

    def handle_get_request(self, job_id: int) -> tuple[int, dict]:
        return 200, {"request": self.request_view(job_id), "now": self.clock.now()}

    def handle_stop(self, job_id: int) -> tuple[int, dict]:
        self.engine.stop_and_teardown(job_id)
        return 200, {"request": self.request_view(job_id)}

    def handle_images(self) -> tuple[int, dict]:
        return 200, {"images": [image_to_record(im) for im in self.catalog]}

    def handle_seed_images(self, body: dict) -> tuple[int, dict]:
        records = body.get("images")
        if not isinstance(records, list):
            raise ApiError(400, "validation", "body needs an `images` array")
        added = []
        for record in records:
            image = image_from_record(record)
            self.catalog.add(image)
            added.append(image.vm_id)
        self.snapshot_now()
        return 201, {"added": added}

    def handle_hosts(self) -> tuple[int, dict]:
        hosts = [host_to_record(h) for h in self.registry.all_hosts()]
        return 200, {"hosts": hosts, "now": self.clock.now()}

    def handle_register(self, body: dict) -> tuple[int, dict]:
        payload = self._payload_from(body)
        node_id = self.registry.register_host(
            payload,
            automation=Automation(str(body.get("automation", "B")).upper()),
            max_instances=int(body.get("max_instances", 1)),
            mac_addr=str(body.get("mac_addr", "")),
            hostname=str(body.get("hostname", "")),
        )
        self.snapshot_now()
        return 201, {"node_id": node_id, "host": host_to_record(self.registry.get(node_id))}

    def handle_heartbeat(self, node_id: int, body: dict) -> tuple[int, dict]:
        rec = self.registry.apply_heartbeat(node_id, self._payload_from(body))
        return 200, {"host": host_to_record(rec)}

    def _payload_from(self, body: dict) -> HeartbeatPayload:
        return HeartbeatPayload(
            ip_or_hostname=str(body["ip_or_hostname"]),
            distro_name=str(body.get("distro_name", "")),
            cpu_model=CpuModel(str(body["cpu_model"]).upper()),
            architecture=str(body["architecture"]),
            total_mem=int(body["total_mem"]),
            avail_mem=int(body["avail_mem"]),
            sent_at=float(body.get("sent_at", self.clock.now())),
        )

    def handle_simulate(self, body: dict) -> tuple[int, dict]:
        constraints = PlacementConstraints(
            cpu_model=CpuModel(str(body["cpu_model"]).upper()),
            required_mem=int(body.get("required_mem", self.config.vm_memory_mb)),
            request_type=RequestType(str(body.get("request_type", "USER")).upper()),
            excluded_nodes=frozenset(int(n) for n in body.get("excluded_nodes", [])),
        )
        explained = explain_placement(
            self.registry.snapshot_fleet(),
            constraints,
            SchedulerConfig(k=float(body.get("k", self.config.scheduler_k))),
        )
        return 200, explained

    def handle_events(self, after: int, limit: int) -> tuple[int, dict]:
        events = [event_to_record(e) for e in self.engine.events if e.seq > after]
        return 200, {"events": events[:limit]}


_ROUTES = [
    ("POST", re.compile(r"^/requests$"), "submit"),
    ("GET", re.compile(r"^/requests/(\d+)$"), "get_request"),
    ("POST", re.compile(r"^/requests/(\d+):stop$"), "stop"),
    ("GET", re.compile(r"^/images$"), "images"),
    ("POST", re.compile(r"^/images$"), "seed_images"),
    ("GET", re.compile(r"^/hosts$"), "hosts"),
    ("POST", re.compile(r"^/hosts/register$"), "register"),
    ("POST", re.compile(r"^/hosts/(\d+)/heartbeat$"), "heartbeat"),
    ("POST", re.compile(r"^/placements:simulate$"), "simulate"),
    ("GET", re.compile(r"^/events$"), "events"),
]

_TOKEN_REQUIRED = {"submit", "stop", "register", "heartbeat", "seed_images"}


def _make_handler(service: VitlService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header(
                "Access-Control-Allow-Headers", "Content-Type, X-Auth-Token"
            )
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if length == 0:
                return {}
            try:
                parsed = json.loads(self.rfile.read(length) or b"{}")
            except json.JSONDecodeError:
                raise ApiError(400, "validation", "body is not valid JSON")
            if not isinstance(parsed, dict):
                raise ApiError(400, "validation", "body must be a JSON object")
            return parsed

        def do_OPTIONS(self):  # CORS preflight for the web console
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header(
                "Access-Control-Allow-Headers", "Content-Type, X-Auth-Token"
            )
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def _dispatch(self, method: str) -> None:
            parsed = urlparse(self.path)
            for route_method, pattern, name in _ROUTES:
                if route_method != method:
                    continue
                match = pattern.match(parsed.path)
                if not match:
                    continue
                try:
                    token = self.headers.get("X-Auth-Token")
                    if name in _TOKEN_REQUIRED and name != "submit":
                        if not service.check_token(token):
                            raise ApiError(401, "invalid-token", "token not recognized")
                    status, payload = self._invoke(name, match, token, parsed)
                except Exception as exc:  # noqa: BLE001 - mapped to wire errors
                    err = _error_for(exc)
                    status, payload = err.status, {
                        "error": {"code": err.code, "message": err.message}
                    }
                self._send(status, payload)
                return
            self._send(404, {"error": {"code": "not-found", "message": "no such endpoint"}})

        def _invoke(self, name: str, match, token, parsed) -> tuple[int, dict]:
            if name == "submit":
                return service.handle_submit(self._body(), token)
            if name == "get_request":
                return service.handle_get_request(int(match.group(1)))
            if name == "stop":
                return service.handle_stop(int(match.group(1)))
            if name == "images":
                return service.handle_images()
            if name == "seed_images":
                return service.handle_seed_images(self._body())
            if name == "hosts":
                return service.handle_hosts()
            if name == "register":
                return service.handle_register(self._body())
            if name == "heartbeat":
                return service.handle_heartbeat(int(match.group(1)), self._body())
            if name == "simulate":
                return service.handle_simulate(self._body())
            if name == "events":
                query = parse_qs(parsed.query)
                after = int(query.get("after", ["0"])[0])
                limit = int(query.get("limit", ["500"])[0])
                return service.handle_events(after, limit)
            raise AssertionError(f"unrouted handler {name}")

    return Handler


def load_config(args: argparse.Namespace) -> ServiceConfig:
    path = args.config or os.environ.get(CONFIG_ENV_VAR, "")
    config = ServiceConfig.from_file(path) if path else ServiceConfig()
    if args.listen:
        config = replace(config, listen_address=args.listen)
    if args.seed_catalog:
        config = replace(config, catalog_seed=args.seed_catalog)
    return config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="vitl-server", description=__doc__)
    parser.add_argument("--config", help=f"config file path (or ${CONFIG_ENV_VAR})")
    parser.add_argument("--listen", help="host:port to bind")
    parser.add_argument("--seed-catalog", help="image seed file loaded on first boot")
    args = parser.parse_args(argv)

    service = VitlService(load_config(args))
    service.start()
    print(f"vitl-server listening on {service.base_url}")
    done = threading.Event()
    signal.signal(signal.SIGINT, lambda *a: done.set())
    signal.signal(signal.SIGTERM, lambda *a: done.set())
    done.wait()
    service.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
