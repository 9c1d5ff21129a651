"""Placement: pick a target host for one request, or decide to queue it.

Eligible hosts are split into two sets. SET I holds hosts with no running
instances; SET II holds everything already carrying at least one. A
non-empty SET I always wins. Within SET I hosts rank by free-memory ratio;
within SET II by k * memory_factor / vm_distribution_factor, preferring
hosts that have plenty of free memory while carrying a small share of the
cloud's running instances. Ties break toward the lowest node_id so the
decision is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .catalog import CpuModel


class MachineStatus(str, Enum):
    ONLINE = "ONLINE"
    OFFLINE = "OFFLINE"


class Automation(str, Enum):
    """Which request kinds a host serves: user sessions, automation, or both."""

    Y = "Y"
    N = "N"
    B = "B"


class RequestType(str, Enum):
    USER = "USER"
    TOD = "TOD"


class SetLabel(str, Enum):
    SET_I = "SET_I"
    SET_II = "SET_II"


@dataclass(frozen=True)
class HostView:
    """Immutable per-host slice of the registry at decision time."""

    node_id: int
    cpu_model: CpuModel
    architecture: str
    automation: Automation
    machine_status: MachineStatus
    total_mem: int
    avail_mem: int
    runningvms: int
    max_instances: int


@dataclass(frozen=True)
class FleetSnapshot:
    hosts: tuple[HostView, ...]
    cloud_running_total: int

    def __post_init__(self):
        expected = sum(h.runningvms for h in self.hosts)
        if self.cloud_running_total != expected:
            raise ValueError(
                f"cloud_running_total {self.cloud_running_total} != sum of host counts {expected}"
            )

    @classmethod
    def of(cls, hosts) -> "FleetSnapshot":
        hosts = tuple(hosts)
        return cls(hosts, sum(h.runningvms for h in hosts))


@dataclass(frozen=True)
class PlacementConstraints:
    cpu_model: CpuModel
    required_mem: int
    request_type: RequestType = RequestType.USER
    excluded_nodes: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.required_mem <= 0:
            raise ValueError("required_mem must be positive")


@dataclass(frozen=True)
class SchedulerConfig:
    """k weights the free-memory factor against the instance-share factor
    in the SET II score; 1.0 works for most fleets."""

    k: float = 1.0

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("k must be positive")


@dataclass(frozen=True)
class PlacementDecision:
    node_id: int | None = None
    set_label: SetLabel | None = None
    score: float | None = None

    @property
    def queued(self) -> bool:
        return self.node_id is None

    @classmethod
    def queue(cls) -> "PlacementDecision":
        return cls()

    @classmethod
    def chosen(cls, node_id: int, set_label: SetLabel, score: float) -> "PlacementDecision":
        return cls(node_id, set_label, score)


_ADMITS = {
    RequestType.USER: (Automation.N, Automation.B),
    RequestType.TOD: (Automation.Y, Automation.B),
}


def eligible_hosts(snapshot: FleetSnapshot, c: PlacementConstraints) -> list[HostView]:
    """Filter the snapshot down to hosts that could serve this request.

    A host qualifies when it is online, matches the requested CPU vendor,
    serves this request kind, has memory headroom for the instance, has not
    hit its instance cap, and is not on the request's exclusion list.
    Snapshot order is preserved.
    """
    admit = _ADMITS[c.request_type]
    return [
        h
        for h in snapshot.hosts
        if h.machine_status is MachineStatus.ONLINE
        and h.cpu_model is c.cpu_model
        and h.automation in admit
        and h.avail_mem >= c.required_mem
        and h.runningvms < h.max_instances
        and h.node_id not in c.excluded_nodes
    ]


def partition_sets(eligible: list[HostView]) -> tuple[list[HostView], list[HostView]]:
    set_one = [h for h in eligible if h.runningvms == 0]
    set_two = [h for h in eligible if h.runningvms >= 1]
    return set_one, set_two


def score_set1(h: HostView) -> float:
    return h.avail_mem / h.total_mem


def score_set2(h: HostView, cloud_running_total: int, cfg: SchedulerConfig) -> float:
    # SET II membership guarantees runningvms >= 1, so the share is never zero
    assert h.runningvms >= 1, "SET II score is undefined for an idle host"
    memory_factor = h.avail_mem / h.total_mem
    vm_distribution_factor = h.runningvms / cloud_running_total
    return cfg.k * memory_factor / vm_distribution_factor


def _argmax(hosts: list[HostView], score_fn) -> tuple[HostView, float]:
    # max score first, lowest node_id on ties
    best, best_score = hosts[0], score_fn(hosts[0])
    for h in hosts[1:]:
        s = score_fn(h)
        if s > best_score or (s == best_score and h.node_id < best.node_id):
            best, best_score = h, s
    return best, best_score


def select_host(
    snapshot: FleetSnapshot,
    c: PlacementConstraints,
    cfg: SchedulerConfig = SchedulerConfig(),
) -> PlacementDecision:
    eligible = eligible_hosts(snapshot, c)
    if not eligible:
        return PlacementDecision.queue()
    set_one, set_two = partition_sets(eligible)
    if set_one:
        best, score = _argmax(set_one, score_set1)
        return PlacementDecision.chosen(best.node_id, SetLabel.SET_I, score)
    best, score = _argmax(set_two, lambda h: score_set2(h, snapshot.cloud_running_total, cfg))
    return PlacementDecision.chosen(best.node_id, SetLabel.SET_II, score)


def explain_placement(
    snapshot: FleetSnapshot,
    c: PlacementConstraints,
    cfg: SchedulerConfig = SchedulerConfig(),
) -> dict:
    """Decision plus per-host working, for the dry-run endpoint.

    Every host appears with its eligibility, its set, and the score it
    would have inside that set, so an operator tuning k can see both
    factors at once.
    """
    eligible = eligible_hosts(snapshot, c)
    eligible_ids = {h.node_id for h in eligible}
    decision = select_host(snapshot, c, cfg)
    rows = []
    for h in snapshot.hosts:
        row: dict = {
            "node_id": h.node_id,
            "eligible": h.node_id in eligible_ids,
            "runningvms": h.runningvms,
            "memory_factor": (h.avail_mem / h.total_mem) if h.total_mem else None,
        }
        if h.node_id in eligible_ids:
            if h.runningvms == 0:
                row["set"] = SetLabel.SET_I.value
                row["score"] = score_set1(h)
            else:
                row["set"] = SetLabel.SET_II.value
                row["vm_distribution_factor"] = h.runningvms / snapshot.cloud_running_total
                row["score"] = score_set2(h, snapshot.cloud_running_total, cfg)
        rows.append(row)
    return {
        "decision": {
            "outcome": "QUEUE" if decision.queued else "CHOSEN",
            "node_id": decision.node_id,
            "set_label": decision.set_label.value if decision.set_label else None,
            "score": decision.score,
        },
        "hosts": rows,
    }
