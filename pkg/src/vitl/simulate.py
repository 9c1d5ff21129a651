"""Turnaround-vs-load experiment on a virtual clock.

The harness boots the real service core (registry, scheduler, lifecycle,
simulated driver), registers a configured fleet, submits N requests at a
fixed cadence without ever releasing capacity, and records each request's
turnaround: simulated seconds from submission to LIVE. Load accumulates,
so the curve shows how placement and per-host contention shape latency as
the fleet fills.

Everything runs single-threaded over a discrete-event scheduler, so a
fixed config reproduces the identical point list (and CSV bytes) every
run.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import CpuModel, ImageCatalog, OsFamily, PreconfigChecklist, VmImage
from .clock import EventScheduler, ScheduledEvent, VirtualClock
from .driver import SimDriverConfig, SimulatedDriver, Step
from .hosts import HeartbeatPayload, HostRegistry
from .lifecycle import LifecycleEngine, RequestStatus
from .notify import CollectingSink
from .scheduling import Automation, SchedulerConfig

SIM_TOKEN = "sim-harness"
UNSERVED = "UNSERVED"


@dataclass(frozen=True)
class HostSpec:
    total_mem: int
    max_instances: int
    cpu_model: CpuModel = CpuModel.INTEL


# One high-end server that can carry fifteen instances plus four two-slot
# workstations; 23 requests of 1 GB fill it exactly.
DEFAULT_FLEET: tuple[HostSpec, ...] = (
    HostSpec(total_mem=16384, max_instances=15),
    HostSpec(total_mem=2048, max_instances=2),
    HostSpec(total_mem=2048, max_instances=2),
    HostSpec(total_mem=2048, max_instances=2),
    HostSpec(total_mem=2048, max_instances=2),
)


@dataclass(frozen=True)
class ExperimentConfig:
    fleet: tuple[HostSpec, ...] = DEFAULT_FLEET
    request_count: int = 23
    vm_memory_mb: int = 1024
    inter_arrival_s: float = 60.0
    driver: SimDriverConfig = field(default_factory=SimDriverConfig)
    seed: int = 0
    request_cpu: CpuModel = CpuModel.INTEL
    lease_hours: int = 10_000  # far beyond any run horizon

    def __post_init__(self):
        if self.request_count < 1:
            raise ValueError("request_count must be >= 1")
        if not self.fleet:
            raise ValueError("fleet must not be empty")


@dataclass(frozen=True)
class TurnaroundPoint:
    index: int  # submission order == load level
    turnaround_s: float
    node_id: int | None
    set_label: str
    served: bool = True


def _sim_image() -> VmImage:
    return VmImage(
        vm_id=1,
        os_name="sim-linux",
        clone_vmx_path="/mnt/vitl-share/clones/sim-linux.vmx",
        os_family=OsFamily.LINUX,
        display_name="Simulated Linux",
        preconfig=PreconfigChecklist(True, True, True, True, True, True),
    )


class _Runner:
    """One experiment run: owns the virtual clock, the event queue, and the
    per-job pipeline bookkeeping."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.clock = VirtualClock()
        self.scheduler = EventScheduler(self.clock)
        self.registry = HostRegistry()
        for i, spec in enumerate(cfg.fleet, start=1):
            self.registry.register_host(
                HeartbeatPayload(
                    ip_or_hostname=f"10.9.0.{i}",
                    distro_name="sim-host",
                    cpu_model=spec.cpu_model,
                    architecture="32-bit",
                    total_mem=spec.total_mem,
                    avail_mem=spec.total_mem,
                    sent_at=0.0,
                ),
                automation=Automation.B,
                max_instances=spec.max_instances,
            )
        catalog = ImageCatalog()
        catalog.add(_sim_image())
        # the experiment seed wins unless the driver config pinned its own
        driver_cfg = SimDriverConfig(
            **{**cfg.driver.__dict__, "seed": cfg.driver.seed or cfg.seed}
        )
        self.driver = SimulatedDriver(
            driver_cfg,
            self.clock,
            host_load=lambda node: max(0, self.registry.get(node).runningvms - 1),
        )
        self.engine = LifecycleEngine(
            catalog,
            self.registry,
            self.driver,
            CollectingSink(),
            self.clock,
            scheduler_config=SchedulerConfig(),
            token_table={SIM_TOKEN},
            vm_memory_mb=cfg.vm_memory_mb,
        )
        self.engine.on_jobs_assigned = self._on_jobs_assigned
        self.submitted_at: dict[int, float] = {}
        self.points: dict[int, TurnaroundPoint] = {}
        self.folder_to_job: dict[str, int] = {}
        self.copy_started_at: dict[int, float] = {}
        self.link_event: ScheduledEvent | None = None

    # -- event handlers --------------------------------------------------

    def _submit_one(self) -> None:
        rec = self.engine.submit_request(
            requestor="sim-user",
            vm_id=1,
            architecture=self.cfg.request_cpu,
            lease_time_hours=self.cfg.lease_hours,
        )
        self.submitted_at[rec.job_id] = self.clock.now()
        self.engine.authorize(rec.job_id, SIM_TOKEN)
        decision = self.engine.place(rec.job_id)
        if not decision.queued:
            self._start_pipeline(rec.job_id)

    def _on_jobs_assigned(self, job_ids: list[int]) -> None:
        for job_id in job_ids:
            self._start_pipeline(job_id)

    def _start_pipeline(self, job_id: int) -> None:
        now = self.clock.now()
        plan = self.engine.begin_provisioning(job_id)
        self.folder_to_job[plan.unique_folder_id] = job_id
        self.copy_started_at[job_id] = now
        self.driver.start_copy(plan, now)
        self._reschedule_link()

    def _reschedule_link(self) -> None:
        """Keep exactly one pending completion event for the shared link;
        arrivals and departures both move projected completions."""
        if self.link_event is not None:
            self.link_event.cancel()
            self.link_event = None
        next_done = self.driver.copy_completions()
        if next_done is not None:
            folder, when = next_done
            self.link_event = self.scheduler.at(when, lambda: self._copy_done(folder))

    def _copy_done(self, folder: str) -> None:
        self.link_event = None
        job_id = self.folder_to_job[folder]
        plan = self.engine.plan_for(job_id)
        outcome = self.driver.finish_copy(plan, self.clock.now(), self.copy_started_at[job_id])
        self._reschedule_link()
        remaining_setup = outcome.duration - (self.clock.now() - self.copy_started_at[job_id])
        self.scheduler.after(max(0.0, remaining_setup), lambda: self._apply_copy(job_id, outcome))

    def _apply_copy(self, job_id: int, outcome) -> None:
        rec = self.engine.complete_step(job_id, Step.COPY.value, outcome)
        if rec.status is not RequestStatus.PROCESSING:
            self._handle_failure(job_id, boot_attempted=False)
            return
        plan = self.engine.plan_for(job_id)
        boot = self.driver.boot_outcome(plan)
        self.scheduler.after(boot.duration, lambda: self._apply_boot(job_id, boot))

    def _apply_boot(self, job_id: int, outcome) -> None:
        rec = self.engine.complete_step(job_id, Step.BOOT.value, outcome)
        if rec.status is not RequestStatus.PROCESSING:
            self._handle_failure(job_id, boot_attempted=True)
            return
        plan = self.engine.plan_for(job_id)
        ip = self.driver.query_ip_outcome(plan)
        self.scheduler.after(ip.duration, lambda: self._apply_ip(job_id, ip))

    def _apply_ip(self, job_id: int, outcome) -> None:
        rec = self.engine.complete_step(job_id, Step.QUERY_IP.value, outcome)
        if rec.status is not RequestStatus.PROCESSING:
            self._handle_failure(job_id, boot_attempted=True)
            return
        self.scheduler.after(
            self.driver.config.notify_seconds, lambda: self._apply_notify(job_id)
        )

    def _apply_notify(self, job_id: int) -> None:
        rec = self.engine.perform_notify_step(job_id)
        if rec.status is RequestStatus.LIVE:
            decision = self.engine.placements[job_id]
            self.points[job_id] = TurnaroundPoint(
                index=job_id,
                turnaround_s=self.clock.now() - self.submitted_at[job_id],
                node_id=decision.node_id,
                set_label=decision.set_label.value,
            )
        else:
            self._handle_failure(job_id, boot_attempted=True)

    def _handle_failure(self, job_id: int, boot_attempted: bool) -> None:
        plan = self.engine.plan_for(job_id)
        if boot_attempted and plan is not None:
            self.driver.teardown_outcome(plan)
        self.engine.finalize_failure(job_id)
        decision = self.engine.reassign_incomplete(job_id)
        if not decision.queued:
            self._start_pipeline(job_id)

    # -- run ------------------------------------------------------------------

    def run(self) -> list[TurnaroundPoint]:
        for i in range(self.cfg.request_count):
            self.scheduler.at(i * self.cfg.inter_arrival_s, self._submit_one)
        horizon = self.scheduler.run()
        for job_id, submitted in self.submitted_at.items():
            if job_id not in self.points:
                self.points[job_id] = TurnaroundPoint(
                    index=job_id,
                    turnaround_s=horizon - submitted,
                    node_id=None,
                    set_label=UNSERVED,
                    served=False,
                )
        return [self.points[j] for j in sorted(self.points)]


def run_experiment(cfg: ExperimentConfig) -> list[TurnaroundPoint]:
    return _Runner(cfg).run()


# -- curve summary ---------------------------------------------------------------

def least_squares_slope(xs: list[float], ys: list[float]) -> float:
    n = len(xs)
    if n < 2:
        return 0.0
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    denominator = sum((x - mean_x) ** 2 for x in xs)
    if denominator == 0:
        return 0.0
    return sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys)) / denominator


def summarize_curve(points: list[TurnaroundPoint]) -> dict:
    """Per-segment mean slope over load levels 1-5, 6-15 and 16+, plus any
    places where turnaround dropped as load grew."""
    served = [p for p in points if p.served]
    by_index = {p.index: p.turnaround_s for p in served}
    max_index = max(by_index) if by_index else 0
    bounds = [(1, 5), (6, 15), (16, max_index)]
    segments = []
    for lo, hi in bounds:
        xs = [float(i) for i in sorted(by_index) if lo <= i <= hi]
        if len(xs) < 2:
            continue
        ys = [by_index[int(x)] for x in xs]
        segments.append(
            {
                "indices": f"{int(xs[0])}-{int(xs[-1])}",
                "points": len(xs),
                "slope": least_squares_slope(xs, ys),
            }
        )
    ordered = [by_index[i] for i in sorted(by_index)]
    violations = [
        sorted(by_index)[i]
        for i in range(1, len(ordered))
        if ordered[i] < ordered[i - 1]
    ]
    return {
        "segments": segments,
        "complete": len(segments) == 3,
        "monotone_violations": violations,
    }


# -- output ------------------------------------------------------------------------

CSV_HEADER = "load,turnaround_s,node_id,set_label"


def points_to_csv(points: list[TurnaroundPoint]) -> str:
    lines = [CSV_HEADER]
    for p in points:
        node = "" if p.node_id is None else str(p.node_id)
        lines.append(f"{p.index},{p.turnaround_s!r},{node},{p.set_label}")
    return "\n".join(lines) + "\n"


def points_to_json(points: list[TurnaroundPoint]) -> str:
    return json.dumps(
        {
            "points": [
                {
                    "load": p.index,
                    "turnaround_s": p.turnaround_s,
                    "node_id": p.node_id,
                    "set_label": p.set_label,
                    "served": p.served,
                }
                for p in points
            ]
        },
        indent=2,
    ) + "\n"


def points_from_json(text: str) -> list[TurnaroundPoint]:
    return [
        TurnaroundPoint(
            index=rec["load"],
            turnaround_s=rec["turnaround_s"],
            node_id=rec["node_id"],
            set_label=rec["set_label"],
            served=rec["served"],
        )
        for rec in json.loads(text)["points"]
    ]


def emit_curve(points: list[TurnaroundPoint], fmt: str, out_path: str | Path) -> Path:
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    text = points_to_csv(points) if fmt == "csv" else points_to_json(points)
    out_path = Path(out_path)
    out_path.write_text(text, encoding="utf-8")
    return out_path


# -- CLI -----------------------------------------------------------------------------

def load_fleet_file(path: str | Path) -> tuple[HostSpec, ...]:
    """One host per line: `total_mem_mb max_instances cpu_model`."""
    specs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected `total_mem max_instances cpu_model`")
            specs.append(
                HostSpec(
                    total_mem=int(parts[0]),
                    max_instances=int(parts[1]),
                    cpu_model=CpuModel(parts[2].upper()),
                )
            )
    if not specs:
        raise ValueError(f"{path}: no hosts defined")
    return tuple(specs)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="vitl-sim",
        description="Run the turnaround-vs-load experiment on a virtual clock.",
    )
    parser.add_argument("--fleet", help="fleet spec file; default: built-in 5-host fleet")
    parser.add_argument("--requests", type=int, default=23)
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--out", help="output path; default: stdout")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--inter-arrival", type=float, default=60.0)
    parser.add_argument("--vm-memory", type=int, default=1024)
    parser.add_argument("--summary", action="store_true", help="print segment slopes to stderr")
    args = parser.parse_args(argv)

    try:
        fleet = load_fleet_file(args.fleet) if args.fleet else DEFAULT_FLEET
    except (OSError, ValueError) as exc:
        print(f"vitl-sim: {exc}", file=sys.stderr)
        return 2

    cfg = ExperimentConfig(
        fleet=fleet,
        request_count=args.requests,
        vm_memory_mb=args.vm_memory,
        inter_arrival_s=args.inter_arrival,
        seed=args.seed,
    )
    points = run_experiment(cfg)
    text = points_to_csv(points) if args.format == "csv" else points_to_json(points)
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            print(f"vitl-sim: cannot write {args.out}: {exc}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(text)
    if args.summary:
        print(json.dumps(summarize_curve(points)), file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
