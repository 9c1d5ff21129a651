"""Host registry: registration, heartbeat ingestion, liveness sweeping, and
atomic capacity accounting.

Hosts push periodic status pings; a host that stays silent past the offline
threshold is swept OFFLINE and a later ping resurrects it. Memory available
for placement is tracked as a reservation ledger owned by this registry:
every placement holds a reservation from the moment the scheduler commits
to a host until teardown, so a stale ping can never double-book capacity.
The raw pinged figure is kept alongside for operators.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace

from .catalog import CpuModel
from .scheduling import Automation, FleetSnapshot, HostView, MachineStatus

DEFAULT_OFFLINE_THRESHOLD_S = 300.0

ARCHITECTURES = ("32-bit", "64-bit")


class RegistryError(Exception):
    pass


class UnknownHostError(RegistryError):
    pass


class DuplicateHostError(RegistryError):
    def __init__(self, ip_or_hostname: str, existing_node_id: int):
        super().__init__(
            f"{ip_or_hostname!r} is already registered online as node {existing_node_id}"
        )
        self.existing_node_id = existing_node_id


class MalformedPayloadError(RegistryError):
    pass


class CapacityRefused(RegistryError):
    """Reservation could not be granted; reason is one of
    'offline', 'insufficient-memory', 'instance-cap'."""

    def __init__(self, node_id: int, reason: str):
        super().__init__(f"node {node_id}: {reason}")
        self.node_id = node_id
        self.reason = reason


class ReleaseError(RegistryError):
    pass


@dataclass(frozen=True)
class HeartbeatPayload:
    ip_or_hostname: str
    distro_name: str
    cpu_model: CpuModel
    architecture: str
    total_mem: int
    avail_mem: int
    sent_at: float

    def __post_init__(self):
        if not self.ip_or_hostname:
            raise MalformedPayloadError("ip_or_hostname is empty")
        if self.architecture not in ARCHITECTURES:
            raise MalformedPayloadError(f"architecture must be one of {ARCHITECTURES}")
        if self.total_mem <= 0:
            raise MalformedPayloadError("total_mem must be positive")
        if not 0 <= self.avail_mem <= self.total_mem:
            raise MalformedPayloadError("avail_mem must lie in [0, total_mem]")


@dataclass
class HostRecord:
    node_id: int
    ip_addr: str
    hostname: str
    distro_name: str
    architecture: str
    mac_addr: str
    total_mem: int
    avail_mem: int  # placement ledger value; see module docstring
    machine_status: MachineStatus
    last_seen: float
    cpu_model: CpuModel
    runningvms: int
    automation: Automation
    max_instances: int
    reported_avail_mem: int  # last raw heartbeat figure, display only


@dataclass
class Reservation:
    token: int
    node_id: int
    mem_mb: int
    active: bool = True


class HostRegistry:
    """Shared mutable host state. reserve/release are linearizable; every
    operation takes the registry lock, so readers see consistent snapshots."""

    def __init__(self, offline_threshold_s: float = DEFAULT_OFFLINE_THRESHOLD_S):
        self.offline_threshold_s = offline_threshold_s
        self._lock = threading.RLock()
        self._hosts: dict[int, HostRecord] = {}
        self._reservations: dict[int, Reservation] = {}
        self._node_seq = 0
        self._token_seq = 0

    # -- registration and liveness -------------------------------------

    def register_host(
        self,
        payload: HeartbeatPayload,
        automation: Automation = Automation.B,
        max_instances: int = 1,
        mac_addr: str = "",
        hostname: str = "",
    ) -> int:
        if max_instances <= 0:
            raise RegistryError("max_instances must be positive")
        with self._lock:
            for rec in self._hosts.values():
                if (
                    rec.ip_addr == payload.ip_or_hostname
                    and rec.machine_status is MachineStatus.ONLINE
                ):
                    raise DuplicateHostError(payload.ip_or_hostname, rec.node_id)
            self._node_seq += 1
            rec = HostRecord(
                node_id=self._node_seq,
                ip_addr=payload.ip_or_hostname,
                hostname=hostname or payload.ip_or_hostname,
                distro_name=payload.distro_name,
                architecture=payload.architecture,
                mac_addr=mac_addr,
                total_mem=payload.total_mem,
                avail_mem=payload.avail_mem,
                machine_status=MachineStatus.ONLINE,
                last_seen=payload.sent_at,
                cpu_model=payload.cpu_model,
                runningvms=0,
                automation=automation,
                max_instances=max_instances,
                reported_avail_mem=payload.avail_mem,
            )
            self._hosts[rec.node_id] = rec
            return rec.node_id

    def apply_heartbeat(self, node_id: int, payload: HeartbeatPayload) -> HostRecord:
        """Refresh telemetry and liveness; resurrects an OFFLINE host.

        The ledger value is re-derived as the pinged free memory minus all
        active reservations, clamped at zero: memory we have promised to
        requests stays promised even if the guest has not claimed it yet.
        """
        with self._lock:
            rec = self._hosts.get(node_id)
            if rec is None:
                raise UnknownHostError(f"no host with node_id {node_id}")
            reserved = self._reserved_on(node_id)
            rec.last_seen = payload.sent_at
            rec.distro_name = payload.distro_name
            rec.total_mem = payload.total_mem
            rec.reported_avail_mem = payload.avail_mem
            rec.avail_mem = max(0, payload.avail_mem - reserved)
            rec.machine_status = MachineStatus.ONLINE
            return replace(rec)

    def sweep_liveness(self, now: float, offline_threshold_s: float | None = None) -> list[int]:
        """Mark hosts silent for >= threshold OFFLINE; returns the newly
        marked node_ids. Re-sweeping immediately returns nothing."""
        threshold = self.offline_threshold_s if offline_threshold_s is None else offline_threshold_s
        newly_offline = []
        with self._lock:
            for rec in self._hosts.values():
                if rec.machine_status is MachineStatus.ONLINE and now - rec.last_seen >= threshold:
                    rec.machine_status = MachineStatus.OFFLINE
                    newly_offline.append(rec.node_id)
        return newly_offline

    # -- capacity ledger -------------------------------------------------

    def reserve_capacity(self, node_id: int, mem_mb: int) -> Reservation:
        if mem_mb <= 0:
            raise RegistryError("reservation size must be positive")
        with self._lock:
            rec = self._hosts.get(node_id)
            if rec is None:
                raise UnknownHostError(f"no host with node_id {node_id}")
            if rec.machine_status is not MachineStatus.ONLINE:
                raise CapacityRefused(node_id, "offline")
            if rec.runningvms >= rec.max_instances:
                raise CapacityRefused(node_id, "instance-cap")
            if rec.avail_mem < mem_mb:
                raise CapacityRefused(node_id, "insufficient-memory")
            rec.avail_mem -= mem_mb
            rec.runningvms += 1
            self._token_seq += 1
            res = Reservation(token=self._token_seq, node_id=node_id, mem_mb=mem_mb)
            self._reservations[res.token] = res
            return res

    def release_capacity(self, token: int) -> HostRecord:
        with self._lock:
            res = self._reservations.get(token)
            if res is None or not res.active:
                raise ReleaseError(f"reservation token {token} is unknown or already released")
            res.active = False
            rec = self._hosts[res.node_id]
            rec.avail_mem = min(rec.total_mem, rec.avail_mem + res.mem_mb)
            rec.runningvms -= 1
            return replace(rec)

    def _reserved_on(self, node_id: int) -> int:
        return sum(r.mem_mb for r in self._reservations.values() if r.active and r.node_id == node_id)

    # -- views -----------------------------------------------------------

    def get(self, node_id: int) -> HostRecord:
        with self._lock:
            rec = self._hosts.get(node_id)
            if rec is None:
                raise UnknownHostError(f"no host with node_id {node_id}")
            return replace(rec)

    def running_on(self, node_id: int) -> int:
        with self._lock:
            return self.get(node_id).runningvms

    def all_hosts(self) -> list[HostRecord]:
        with self._lock:
            return [replace(r) for r in self._hosts.values()]

    def active_reservations(self, node_id: int | None = None) -> list[Reservation]:
        with self._lock:
            return [
                replace(r)
                for r in self._reservations.values()
                if r.active and (node_id is None or r.node_id == node_id)
            ]

    def reservation_by_token(self, token: int) -> Reservation:
        with self._lock:
            res = self._reservations.get(token)
            if res is None:
                raise ReleaseError(f"reservation token {token} is unknown")
            return res

    # -- persistence hooks -------------------------------------------------

    def export_state(self) -> dict:
        with self._lock:
            return {
                "hosts": [replace(r) for r in self._hosts.values()],
                "reservations": [replace(r) for r in self._reservations.values() if r.active],
                "node_seq": self._node_seq,
                "token_seq": self._token_seq,
            }

    def import_state(self, state: dict) -> None:
        with self._lock:
            self._hosts = {r.node_id: replace(r) for r in state["hosts"]}
            self._reservations = {r.token: replace(r) for r in state["reservations"]}
            self._node_seq = state["node_seq"]
            self._token_seq = state["token_seq"]

    def snapshot_fleet(self) -> FleetSnapshot:
        with self._lock:
            views = tuple(
                HostView(
                    node_id=r.node_id,
                    cpu_model=r.cpu_model,
                    architecture=r.architecture,
                    automation=r.automation,
                    machine_status=r.machine_status,
                    total_mem=r.total_mem,
                    avail_mem=r.avail_mem,
                    runningvms=r.runningvms,
                    max_instances=r.max_instances,
                )
                for r in self._hosts.values()
            )
            return FleetSnapshot.of(views)
