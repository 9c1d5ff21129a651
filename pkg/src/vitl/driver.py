"""Hypervisor driver boundary.

Four operations move a request through provisioning: copy the linked-clone
resources into a uniquely named folder on the shared file server, boot the
instance on the target host, query the guest's IP address, and tear the
instance down again. A real VMware/VirtualBox adapter would implement the
same four calls; the in-repo implementation is a deterministic simulation
whose timing model is simple but load-sensitive:

* clone copies share the file-server link equally, so overlapping
  transfers slow each other down;
* boot time grows multiplicatively with every instance already running on
  the target host;
* IP queries return an address derived from (seed, job_id), stable across
  runs.

A failure script can force any (job_id, step) to fail, which is how the
fault paths are exercised without a hypervisor.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

from .catalog import Credentials, VmImage
from .clock import Clock

FAIL = "fail"
FAIL_ONCE = "fail-once"
INVALID_IP = "invalid-ip"


class Step(str, Enum):
    COPY = "COPY"
    BOOT = "BOOT"
    QUERY_IP = "QUERY_IP"
    TEARDOWN = "TEARDOWN"


@dataclass(frozen=True)
class ProvisionPlan:
    job_id: int
    unique_folder_id: str
    image: VmImage
    target_node: int
    credentials: Credentials
    required_mem: int


@dataclass(frozen=True)
class DriverOutcome:
    step: Step
    success: bool
    ip: str = ""
    detail: str = ""
    duration: float = 0.0


@dataclass(frozen=True)
class SimDriverConfig:
    copy_base_seconds: float = 5.0
    boot_base_seconds: float = 30.0
    per_vm_slowdown: float = 1.2
    share_bandwidth_mbps: float = 100.0
    clone_size_mb: float = 500.0
    ip_query_seconds: float = 2.0
    notify_seconds: float = 1.0
    subnet: str = "10.20.0.0/16"
    failure_script: Mapping[tuple[int, str], str] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if min(self.copy_base_seconds, self.boot_base_seconds,
               self.ip_query_seconds, self.notify_seconds) < 0:
            raise ValueError("step times must be >= 0")
        if self.per_vm_slowdown < 1.0:
            raise ValueError("per_vm_slowdown must be >= 1.0")
        if self.share_bandwidth_mbps <= 0:
            raise ValueError("share_bandwidth_mbps must be positive")


class DriverError(Exception):
    pass


def parse_subnet(subnet: str) -> tuple[int, int]:
    """Only /16 subnets are supported; returns the two fixed octets."""
    addr, _, bits = subnet.partition("/")
    if bits != "16":
        raise ValueError(f"only /16 subnets are supported, got {subnet!r}")
    octets = addr.split(".")
    if len(octets) != 4:
        raise ValueError(f"bad subnet {subnet!r}")
    return int(octets[0]), int(octets[1])


def is_valid_ip(ip: str, subnet: str) -> bool:
    a, b = parse_subnet(subnet)
    parts = ip.split(".")
    if len(parts) != 4:
        return False
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        return False
    if any(not 0 <= v <= 255 for v in vals):
        return False
    return vals[0] == a and vals[1] == b and (vals[2], vals[3]) != (0, 0)


def derive_ip(seed: int, job_id: int, subnet: str) -> str:
    """Deterministic guest address: distinct job_ids in [1, 65533] map to
    distinct hosts of the /16, skipping the network and broadcast words."""
    a, b = parse_subnet(subnet)
    base = (seed * 48271) % 65534
    word = (base + job_id * 40503) % 65534 + 1  # 40503 is coprime to 65534
    return f"{a}.{b}.{word >> 8}.{word & 0xFF}"


class SharedLink:
    """Fluid model of the file-server link: active transfers split the
    bandwidth equally, and completion times shift as transfers come and go."""

    def __init__(self, bandwidth_mbps: float):
        self.bandwidth_mbps = bandwidth_mbps
        self._remaining_mb: dict[str, float] = {}
        self._last_time = 0.0

    def _rate_mb_s(self) -> float:
        # equal share of the link per transfer, in MB/s
        return self.bandwidth_mbps / 8.0 / len(self._remaining_mb)

    def advance(self, now: float) -> None:
        if now < self._last_time - 1e-9:
            raise ValueError("link time cannot move backwards")
        if self._remaining_mb:
            drained = (now - self._last_time) * self._rate_mb_s()
            for key in self._remaining_mb:
                self._remaining_mb[key] = max(0.0, self._remaining_mb[key] - drained)
        self._last_time = max(self._last_time, now)

    def start(self, key: str, size_mb: float, now: float) -> None:
        self.advance(now)
        if key in self._remaining_mb:
            raise DriverError(f"transfer {key!r} already in flight")
        self._remaining_mb[key] = float(size_mb)

    def projected_completion(self, key: str) -> float:
        """When `key` finishes if no transfer starts or stops before then."""
        if key not in self._remaining_mb:
            raise DriverError(f"no transfer {key!r}")
        ordered = sorted(self._remaining_mb.items(), key=lambda kv: kv[1])
        t = self._last_time
        done_mb = 0.0
        active = len(ordered)
        for name, remaining in ordered:
            t += (remaining - done_mb) * 8.0 * active / self.bandwidth_mbps
            if name == key:
                return t
            done_mb = remaining
            active -= 1
        raise AssertionError("unreachable")

    def next_completion(self) -> tuple[str, float] | None:
        if not self._remaining_mb:
            return None
        key = min(self._remaining_mb, key=lambda k: self._remaining_mb[k])
        return key, self.projected_completion(key)

    def finish(self, key: str, now: float) -> None:
        self.advance(now)
        if key not in self._remaining_mb:
            raise DriverError(f"no transfer {key!r}")
        del self._remaining_mb[key]

    def in_flight(self) -> int:
        return len(self._remaining_mb)


class SimulatedDriver:
    """Deterministic stand-in for a hypervisor adapter.

    The timing-native calls (start_copy, copy_completions, finish_copy,
    boot_outcome, query_ip_outcome, teardown_outcome) are what the
    virtual-time harness drives; the four blocking contract calls
    (copy_clone, boot, query_ip, teardown) wrap them for the live service,
    sleeping each computed duration on the injected clock.
    """

    def __init__(
        self,
        config: SimDriverConfig,
        clock: Clock,
        host_load: Callable[[int], int] | None = None,
    ):
        """host_load(node_id) -> number of instances already running on the
        host, not counting the one being provisioned."""
        self.config = config
        self.clock = clock
        self.host_load = host_load or (lambda node_id: 0)
        self.link = SharedLink(config.share_bandwidth_mbps)
        self._lock = threading.RLock()
        self._folders_seen: set[str] = set()
        self._copied: set[str] = set()
        self._booted: set[str] = set()
        self._torn_down: set[str] = set()
        self._fault_hits: dict[tuple[int, str], int] = {}
        self._blocking_copies = 0

    # -- failure script ---------------------------------------------------

    def _scripted(self, job_id: int, step: Step) -> str | None:
        key = (job_id, step.value)
        mode = self.config.failure_script.get(key)
        if mode is None:
            return None
        hits = self._fault_hits.get(key, 0)
        self._fault_hits[key] = hits + 1
        if mode == FAIL_ONCE and hits >= 1:
            return None
        return mode

    # -- timing-native operations ------------------------------------------

    def start_copy(self, plan: ProvisionPlan, now: float) -> None:
        with self._lock:
            if plan.unique_folder_id in self._folders_seen:
                raise DriverError(f"folder id {plan.unique_folder_id!r} already used")
            self._folders_seen.add(plan.unique_folder_id)
            self.link.start(plan.unique_folder_id, self.config.clone_size_mb, now)

    def copy_completions(self) -> tuple[str, float] | None:
        with self._lock:
            return self.link.next_completion()

    def finish_copy(self, plan: ProvisionPlan, now: float, started_at: float) -> DriverOutcome:
        """Complete a transfer at its link completion time; the returned
        duration adds the contention-free setup cost on top of the transfer,
        so the step ends `copy_base_seconds` after the link frees up."""
        with self._lock:
            self.link.finish(plan.unique_folder_id, now)
            return self._copy_result(plan, self.config.copy_base_seconds + (now - started_at))

    def _copy_result(self, plan: ProvisionPlan, duration: float) -> DriverOutcome:
        mode = self._scripted(plan.job_id, Step.COPY)
        if mode:
            return DriverOutcome(Step.COPY, False, detail=f"scripted copy failure ({mode})",
                                 duration=duration)
        self._copied.add(plan.unique_folder_id)
        return DriverOutcome(Step.COPY, True, detail=f"cloned into {plan.unique_folder_id}",
                             duration=duration)

    def boot_outcome(self, plan: ProvisionPlan) -> DriverOutcome:
        with self._lock:
            # the lifecycle sequences steps; a boot without its clone is a bug
            assert plan.unique_folder_id in self._copied, "boot before a successful copy"
            others = max(0, self.host_load(plan.target_node))
            duration = self.config.boot_base_seconds * self.config.per_vm_slowdown ** others
            mode = self._scripted(plan.job_id, Step.BOOT)
            if mode:
                return DriverOutcome(Step.BOOT, False, detail=f"scripted boot failure ({mode})",
                                     duration=duration)
            self._booted.add(plan.unique_folder_id)
            return DriverOutcome(Step.BOOT, True, detail=f"booted with {others} neighbours",
                                 duration=duration)

    def query_ip_outcome(self, plan: ProvisionPlan) -> DriverOutcome:
        with self._lock:
            assert plan.unique_folder_id in self._booted, "ip query before a successful boot"
            duration = self.config.ip_query_seconds
            mode = self._scripted(plan.job_id, Step.QUERY_IP)
            if mode == INVALID_IP:
                return DriverOutcome(Step.QUERY_IP, True, ip="0.0.0.0",
                                     detail="guest returned an unusable address",
                                     duration=duration)
            if mode:
                return DriverOutcome(Step.QUERY_IP, False,
                                     detail=f"scripted ip-query failure ({mode})",
                                     duration=duration)
            ip = derive_ip(self.config.seed, plan.job_id, self.config.subnet)
            return DriverOutcome(Step.QUERY_IP, True, ip=ip, duration=duration)

    def teardown_outcome(self, plan: ProvisionPlan) -> DriverOutcome:
        with self._lock:
            first = plan.unique_folder_id not in self._torn_down
            self._torn_down.add(plan.unique_folder_id)
            detail = "resources retired" if first else "already torn down"
            return DriverOutcome(Step.TEARDOWN, True, detail=detail, duration=0.0)

    # -- blocking contract (service mode) -----------------------------------
    #
    # The blocking calls sleep each duration on the injected clock. Copy
    # contention here is a snapshot at start (transfer term scales with the
    # copies in flight when this one begins); only the virtual-time path
    # re-times transfers as the link population changes.

    def copy_clone(self, plan: ProvisionPlan) -> DriverOutcome:
        with self._lock:
            if plan.unique_folder_id in self._folders_seen:
                raise DriverError(f"folder id {plan.unique_folder_id!r} already used")
            self._folders_seen.add(plan.unique_folder_id)
            self._blocking_copies += 1
            share = self._blocking_copies
        transfer = self.config.clone_size_mb * 8.0 / self.config.share_bandwidth_mbps
        duration = self.config.copy_base_seconds + transfer * share
        try:
            self.clock.sleep(duration)
        finally:
            with self._lock:
                self._blocking_copies -= 1
        with self._lock:
            return self._copy_result(plan, duration)

    def boot(self, plan: ProvisionPlan) -> DriverOutcome:
        outcome = self.boot_outcome(plan)
        self.clock.sleep(outcome.duration)
        return outcome

    def query_ip(self, plan: ProvisionPlan) -> DriverOutcome:
        outcome = self.query_ip_outcome(plan)
        self.clock.sleep(outcome.duration)
        return outcome

    def teardown(self, plan: ProvisionPlan) -> DriverOutcome:
        return self.teardown_outcome(plan)
