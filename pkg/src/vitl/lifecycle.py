"""Request lifecycle: one record per request from submission to archival.

The status machine is the single source of truth for what a request may do
next; every edge lives in the EDGES table and every transition is appended
to an event log, so a record's history replays to its current status.

A request flows NEW -> AUTHORIZED -> ASSIGNED -> PROCESSING -> LIVE, with
detours to UNASSIGNED (no capacity: queued, requestor told of the delay)
and INCOMPLETE (a provisioning step failed: the host is excluded and
placement reruns). While LIVE, the lease clock counts down through two
reminder thresholds to expiry, which stops the instance and frees its
capacity; freed capacity wakes the queue in job order.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

from .catalog import Credentials, CpuModel, ImageCatalog
from .clock import Clock
from .driver import DriverOutcome, ProvisionPlan, Step, is_valid_ip
from .hosts import CapacityRefused, HostRegistry, Reservation
from .notify import Notification, NotificationKind, NotificationSink
from .scheduling import (
    PlacementConstraints,
    PlacementDecision,
    RequestType,
    SchedulerConfig,
    select_host,
)


class RequestStatus(str, Enum):
    NEW = "NEW"
    AUTHORIZED = "AUTHORIZED"
    UNAUTHORIZED = "UNAUTHORIZED"
    PROCESSING = "PROCESSING"
    PROCESSED = "PROCESSED"
    DELETED = "DELETED"
    INCOMPLETE = "INCOMPLETE"
    ASSIGNED = "ASSIGNED"
    UNASSIGNED = "UNASSIGNED"
    LIVE = "LIVE"
    STOPPED = "STOPPED"
    REMINDER1 = "REMINDER1"
    REMINDER2 = "REMINDER2"


class SubStatus(str, Enum):
    PASSED = "PASSED"
    PENDING = "PENDING"
    FAILED = "FAILED"


# Transition events. EV_SUBMITTED anchors a fresh record at NEW and is not
# an edge.
EV_SUBMITTED = "submitted"
EV_TOKEN_ACCEPTED = "token-accepted"
EV_TOKEN_REJECTED = "token-rejected"
EV_PLACEMENT_CHOSEN = "placement-chosen"
EV_PLACEMENT_QUEUED = "placement-queued"
EV_CAPACITY_FREED = "capacity-freed"
EV_PROVISION_STARTED = "provision-started"
EV_PIPELINE_COMPLETE = "pipeline-complete"
EV_STEP_FAILED = "step-failed"
EV_REASSIGNED = "reassigned"
EV_NO_ALTERNATIVE = "no-alternative"
EV_REMINDER_1 = "reminder-1"
EV_REMINDER_2 = "reminder-2"
EV_LEASE_EXPIRED = "lease-expired"
EV_USER_STOP = "user-stop"
EV_TEARDOWN_CONFIRMED = "teardown-confirmed"
EV_ARCHIVED = "archived"

_S = RequestStatus

EDGES: dict[tuple[RequestStatus, str], RequestStatus] = {
    (_S.NEW, EV_TOKEN_ACCEPTED): _S.AUTHORIZED,
    (_S.NEW, EV_TOKEN_REJECTED): _S.UNAUTHORIZED,
    (_S.AUTHORIZED, EV_PLACEMENT_CHOSEN): _S.ASSIGNED,
    (_S.AUTHORIZED, EV_PLACEMENT_QUEUED): _S.UNASSIGNED,
    (_S.UNASSIGNED, EV_CAPACITY_FREED): _S.ASSIGNED,
    (_S.ASSIGNED, EV_PROVISION_STARTED): _S.PROCESSING,
    (_S.PROCESSING, EV_PIPELINE_COMPLETE): _S.LIVE,
    (_S.PROCESSING, EV_STEP_FAILED): _S.INCOMPLETE,
    (_S.INCOMPLETE, EV_REASSIGNED): _S.ASSIGNED,
    (_S.INCOMPLETE, EV_NO_ALTERNATIVE): _S.UNASSIGNED,
    (_S.LIVE, EV_REMINDER_1): _S.REMINDER1,
    (_S.REMINDER1, EV_REMINDER_2): _S.REMINDER2,
    (_S.LIVE, EV_LEASE_EXPIRED): _S.STOPPED,
    (_S.REMINDER1, EV_LEASE_EXPIRED): _S.STOPPED,
    (_S.REMINDER2, EV_LEASE_EXPIRED): _S.STOPPED,
    (_S.LIVE, EV_USER_STOP): _S.STOPPED,
    (_S.REMINDER1, EV_USER_STOP): _S.STOPPED,
    (_S.REMINDER2, EV_USER_STOP): _S.STOPPED,
    (_S.STOPPED, EV_TEARDOWN_CONFIRMED): _S.PROCESSED,
    (_S.PROCESSED, EV_ARCHIVED): _S.DELETED,
}

LEASE_STATES = (_S.LIVE, _S.REMINDER1, _S.REMINDER2)

# pipeline order; the first three are driver steps, NOTIFY is the sink call
STEP_NOTIFY = "NOTIFY"
PIPELINE_STEPS = (Step.COPY.value, Step.BOOT.value, Step.QUERY_IP.value, STEP_NOTIFY)

_SUBSTATUS_FIELD = {
    Step.COPY.value: "status_copy_vm",
    Step.BOOT.value: "status_vm_up",
    Step.QUERY_IP.value: "status_ip_set",
    STEP_NOTIFY: "status_email_sent",
}


class LifecycleError(Exception):
    pass


class UnknownJobError(LifecycleError):
    pass


class ValidationError(LifecycleError):
    pass


class IllegalTransitionError(LifecycleError):
    def __init__(self, status: RequestStatus, event: str):
        super().__init__(f"no edge from {status.value} on {event!r}")
        self.status = status
        self.event = event


@dataclass
class RequestRecord:
    job_id: int
    assigned_on: float
    requestor: str
    ip_address: str
    vmx_path: str
    status: RequestStatus
    request_type: RequestType
    authentication_token: str
    node_id: int | None
    log_file_path: str
    vm_id: int
    status_copy_vm: SubStatus
    status_vm_up: SubStatus
    status_ip_set: SubStatus
    status_email_sent: SubStatus
    architecture: CpuModel
    vm_user: str
    status_reason: str
    lease_time_hours: int
    time_remaining_seconds: float
    excluded_nodes: set[int] = field(default_factory=set)
    reservation: Reservation | None = None

    def substatuses(self) -> dict[str, SubStatus]:
        return {step: getattr(self, _SUBSTATUS_FIELD[step]) for step in PIPELINE_STEPS}


@dataclass(frozen=True)
class TransitionEvent:
    seq: int
    job_id: int
    old_status: RequestStatus | None
    event: str
    new_status: RequestStatus
    at: float


def replay_events(events: list[TransitionEvent]) -> dict[int, RequestStatus]:
    """Walk each job's event trail through the edge table; raises if any
    recorded transition is not a defined edge. This is the audit check that
    no record ever took an undefined path."""
    statuses: dict[int, RequestStatus] = {}
    for ev in events:
        if ev.event == EV_SUBMITTED:
            if ev.job_id in statuses:
                raise LifecycleError(f"job {ev.job_id} submitted twice")
            statuses[ev.job_id] = RequestStatus.NEW
            continue
        current = statuses.get(ev.job_id)
        if current is None:
            raise LifecycleError(f"job {ev.job_id} has events before submission")
        target = EDGES.get((current, ev.event))
        if target is None:
            raise IllegalTransitionError(current, ev.event)
        if target is not ev.new_status:
            raise LifecycleError(
                f"job {ev.job_id}: log says {ev.new_status.value}, edges say {target.value}"
            )
        statuses[ev.job_id] = target
    return statuses


class LifecycleEngine:
    """Serialized owner of all request mutations.

    Every public method takes the engine lock, so placement decisions pair
    atomically with their capacity reservation and concurrent pipeline
    completions interleave safely. Blocking driver work happens outside the
    lock (run_provision_pipeline), which is what lets pipelines for
    distinct requests overlap.
    """

    def __init__(
        self,
        catalog: ImageCatalog,
        registry: HostRegistry,
        driver,
        notifier: NotificationSink,
        clock: Clock,
        scheduler_config: SchedulerConfig = SchedulerConfig(),
        token_table: frozenset[str] | set[str] = frozenset(),
        reminder_fractions: tuple[float, float] = (0.75, 0.90),
        vm_memory_mb: int = 1024,
        default_credentials: Credentials = Credentials("vitl", "vitl-default"),
        ip_subnet: str = "10.20.0.0/16",
    ):
        if not 0 < reminder_fractions[0] < reminder_fractions[1] < 1:
            raise ValueError("reminder fractions must satisfy 0 < first < second < 1")
        self.catalog = catalog
        self.registry = registry
        self.driver = driver
        self.notifier = notifier
        self.clock = clock
        self.scheduler_config = scheduler_config
        self.token_table = frozenset(token_table)
        self.reminder_fractions = reminder_fractions
        self.vm_memory_mb = vm_memory_mb
        self.default_credentials = default_credentials
        self.ip_subnet = ip_subnet
        self.events: list[TransitionEvent] = []
        self.journal: Callable[[TransitionEvent], None] | None = None
        # invoked (outside the lock) with jobs the queue scan just assigned,
        # so the embedding runner can start their pipelines
        self.on_jobs_assigned: Callable[[list[int]], None] | None = None
        # most recent successful decision per job, for harness reporting
        self.placements: dict[int, PlacementDecision] = {}
        self._lock = threading.RLock()
        self._records: dict[int, RequestRecord] = {}
        self._plans: dict[int, ProvisionPlan] = {}
        self._job_seq = 0
        self._event_seq = 0
        self._attempts: dict[int, int] = {}

    # -- record access ----------------------------------------------------

    def get_request(self, job_id: int) -> RequestRecord:
        with self._lock:
            return self._copy(self._require(job_id))

    def all_requests(self) -> list[RequestRecord]:
        with self._lock:
            return [self._copy(r) for r in self._records.values()]

    def queued_jobs(self) -> list[int]:
        with self._lock:
            return sorted(
                j for j, r in self._records.items() if r.status is RequestStatus.UNASSIGNED
            )

    def plan_for(self, job_id: int) -> ProvisionPlan | None:
        with self._lock:
            return self._plans.get(job_id)

    def credentials_for(self, job_id: int) -> Credentials:
        rec = self.get_request(job_id)
        return Credentials(rec.vm_user, self.default_credentials.password)

    def _require(self, job_id: int) -> RequestRecord:
        rec = self._records.get(job_id)
        if rec is None:
            raise UnknownJobError(f"no request with job_id {job_id}")
        return rec

    @staticmethod
    def _copy(rec: RequestRecord) -> RequestRecord:
        return replace(rec, excluded_nodes=set(rec.excluded_nodes))

    # -- persistence hooks --------------------------------------------------

    def export_state(self) -> dict:
        with self._lock:
            return {
                "requests": [self._copy(r) for r in self._records.values()],
                "events": list(self.events),
                "job_seq": self._job_seq,
                "event_seq": self._event_seq,
                "attempts": dict(self._attempts),
            }

    def import_state(self, state: dict) -> None:
        """Adopt previously exported records; reservation references are
        re-linked to the registry's live objects by token."""
        with self._lock:
            records = {}
            for rec in state["requests"]:
                rec = self._copy(rec)
                if rec.reservation is not None:
                    rec.reservation = self.registry.reservation_by_token(rec.reservation.token)
                records[rec.job_id] = rec
            self._records = records
            self.events = list(state["events"])
            self._job_seq = state["job_seq"]
            self._event_seq = state["event_seq"]
            self._attempts = dict(state["attempts"])
            self._plans = {}

    # -- transitions --------------------------------------------------------

    def _log(self, rec: RequestRecord, old: RequestStatus | None, event: str) -> None:
        self._event_seq += 1
        entry = TransitionEvent(self._event_seq, rec.job_id, old, event, rec.status, self.clock.now())
        self.events.append(entry)
        if self.journal is not None:
            self.journal(entry)

    def _advance(self, rec: RequestRecord, event: str, detail: str = "") -> None:
        target = EDGES.get((rec.status, event))
        if target is None:
            raise IllegalTransitionError(rec.status, event)
        old = rec.status
        rec.status = target
        rec.status_reason = f"{event}: {detail}" if detail else event
        if target is RequestStatus.LIVE:
            assert all(s is SubStatus.PASSED for s in rec.substatuses().values())
            assert rec.node_id is not None and rec.ip_address
        self._log(rec, old, event)

    def advance_status(self, job_id: int, event: str, detail: str = "") -> RequestRecord:
        """Apply one edge of the status machine; undefined edges are
        rejected without touching the record."""
        with self._lock:
            rec = self._require(job_id)
            self._advance(rec, event, detail)
            return self._copy(rec)

    # -- intake ---------------------------------------------------------

    def submit_request(
        self,
        requestor: str,
        vm_id: int,
        architecture: CpuModel,
        lease_time_hours: int,
        request_type: RequestType = RequestType.USER,
        vm_user: str = "",
    ) -> RequestRecord:
        if not requestor or len(requestor) > 30:
            raise ValidationError("requestor must be 1..30 characters")
        if lease_time_hours < 1:
            raise ValidationError("lease_time_hours must be at least 1")
        image = self.catalog.lookup(vm_id)
        if image is None:
            raise ValidationError(f"no catalog image with vm_id {vm_id}")
        user = (vm_user or self.default_credentials.username)[:20]
        with self._lock:
            self._job_seq += 1
            rec = RequestRecord(
                job_id=self._job_seq,
                assigned_on=self.clock.now(),
                requestor=requestor,
                ip_address="",
                vmx_path=image.clone_vmx_path,
                status=RequestStatus.NEW,
                request_type=request_type,
                authentication_token="",
                node_id=None,
                log_file_path=f"vitl-service.log#job-{self._job_seq}",
                vm_id=vm_id,
                status_copy_vm=SubStatus.PENDING,
                status_vm_up=SubStatus.PENDING,
                status_ip_set=SubStatus.PENDING,
                status_email_sent=SubStatus.PENDING,
                architecture=architecture,
                vm_user=user,
                status_reason=EV_SUBMITTED,
                lease_time_hours=lease_time_hours,
                time_remaining_seconds=float(lease_time_hours * 3600),
            )
            self._records[rec.job_id] = rec
            self._log(rec, None, EV_SUBMITTED)
            return self._copy(rec)

    def authorize(self, job_id: int, token: str) -> RequestRecord:
        with self._lock:
            rec = self._require(job_id)
            if rec.status is not RequestStatus.NEW:
                raise IllegalTransitionError(rec.status, EV_TOKEN_ACCEPTED)
            rec.authentication_token = token
            if token in self.token_table:
                self._advance(rec, EV_TOKEN_ACCEPTED)
            else:
                self._advance(rec, EV_TOKEN_REJECTED, "token not recognized")
            return self._copy(rec)

    # -- placement ---------------------------------------------------------

    def _constraints(self, rec: RequestRecord) -> PlacementConstraints:
        return PlacementConstraints(
            cpu_model=rec.architecture,
            required_mem=self.vm_memory_mb,
            request_type=rec.request_type,
            excluded_nodes=frozenset(rec.excluded_nodes),
        )

    def _attempt_placement(self, rec: RequestRecord) -> PlacementDecision:
        """Selection and reservation as one atomic act: if the reservation
        is refused because the fleet moved underneath us, selection reruns
        on a fresh snapshot."""
        while True:
            snapshot = self.registry.snapshot_fleet()
            decision = select_host(snapshot, self._constraints(rec), self.scheduler_config)
            if decision.queued:
                return decision
            try:
                reservation = self.registry.reserve_capacity(decision.node_id, self.vm_memory_mb)
            except CapacityRefused:
                continue
            rec.node_id = decision.node_id
            rec.reservation = reservation
            rec.assigned_on = self.clock.now()
            self.placements[rec.job_id] = decision
            return decision

    def _notify(self, rec: RequestRecord, kind: NotificationKind) -> bool:
        notification = Notification(
            job_id=rec.job_id,
            recipient=rec.requestor,
            kind=kind,
            ip_address=rec.ip_address,
            credentials=Credentials(rec.vm_user, self.default_credentials.password)
            if kind is NotificationKind.READY
            else None,
        )
        return self.notifier.deliver(notification).ok

    def place(self, job_id: int) -> PlacementDecision:
        with self._lock:
            rec = self._require(job_id)
            if rec.status is not RequestStatus.AUTHORIZED:
                raise IllegalTransitionError(rec.status, EV_PLACEMENT_CHOSEN)
            decision = self._attempt_placement(rec)
            if decision.queued:
                self._advance(rec, EV_PLACEMENT_QUEUED, "no host can take the request now")
                self._notify(rec, NotificationKind.DELAYED)
            else:
                self._advance(rec, EV_PLACEMENT_CHOSEN, f"node {decision.node_id}")
            return decision

    def reassign_incomplete(self, job_id: int) -> PlacementDecision:
        """Retry a failed request everywhere except the hosts that already
        failed it; the exclusion set only ever grows."""
        with self._lock:
            rec = self._require(job_id)
            if rec.status is not RequestStatus.INCOMPLETE:
                raise IllegalTransitionError(rec.status, EV_REASSIGNED)
            if rec.node_id is not None:
                rec.excluded_nodes.add(rec.node_id)
                rec.node_id = None
            decision = self._attempt_placement(rec)
            if decision.queued:
                self._advance(rec, EV_NO_ALTERNATIVE, "all remaining hosts unsuitable")
                self._notify(rec, NotificationKind.DELAYED)
            else:
                self._advance(rec, EV_REASSIGNED, f"node {decision.node_id}")
            return decision

    def dequeue_on_capacity(self, freed_node_id: int | None = None) -> list[int]:
        """Re-evaluate queued requests oldest-first. A request that still
        cannot place parks again, and later requests wanting the exact same
        thing are skipped rather than allowed to jump it."""
        assigned: list[int] = []
        with self._lock:
            still_blocked: set = set()
            for job_id in self.queued_jobs():
                rec = self._records[job_id]
                key = (rec.architecture, rec.request_type, frozenset(rec.excluded_nodes))
                if key in still_blocked:
                    continue
                decision = self._attempt_placement(rec)
                if decision.queued:
                    still_blocked.add(key)
                    continue
                self._advance(rec, EV_CAPACITY_FREED, f"node {decision.node_id}")
                assigned.append(job_id)
        if assigned and self.on_jobs_assigned is not None:
            self.on_jobs_assigned(list(assigned))
        return assigned

    # -- provisioning --------------------------------------------------------

    def begin_provisioning(self, job_id: int) -> ProvisionPlan:
        with self._lock:
            rec = self._require(job_id)
            if rec.status is not RequestStatus.ASSIGNED:
                raise IllegalTransitionError(rec.status, EV_PROVISION_STARTED)
            if rec.reservation is None or rec.node_id is None:
                raise LifecycleError(f"job {job_id} is ASSIGNED without a reservation")
            image = self.catalog.lookup(rec.vm_id)
            assert image is not None
            attempt = self._attempts.get(job_id, 0) + 1
            self._attempts[job_id] = attempt
            plan = ProvisionPlan(
                job_id=job_id,
                unique_folder_id=f"job-{job_id:06d}-try-{attempt:02d}",
                image=image,
                target_node=rec.node_id,
                credentials=Credentials(rec.vm_user, self.default_credentials.password),
                required_mem=self.vm_memory_mb,
            )
            self._plans[job_id] = plan
            # a fresh attempt tracks fresh progress
            rec.status_copy_vm = SubStatus.PENDING
            rec.status_vm_up = SubStatus.PENDING
            rec.status_ip_set = SubStatus.PENDING
            rec.status_email_sent = SubStatus.PENDING
            rec.ip_address = ""
            self._advance(rec, EV_PROVISION_STARTED, plan.unique_folder_id)
            return plan

    def _next_step(self, rec: RequestRecord) -> str | None:
        for step in PIPELINE_STEPS:
            if getattr(rec, _SUBSTATUS_FIELD[step]) is SubStatus.PENDING:
                return step
        return None

    def complete_step(self, job_id: int, step: str, outcome: DriverOutcome) -> RequestRecord:
        """Fold one driver outcome into the record: mark the step's
        sub-status, stash the address on a good IP query, and move the
        request to LIVE or INCOMPLETE when the pipeline ends."""
        with self._lock:
            rec = self._require(job_id)
            if rec.status is not RequestStatus.PROCESSING:
                raise IllegalTransitionError(rec.status, EV_STEP_FAILED)
            expected = self._next_step(rec)
            if step != expected:
                raise LifecycleError(f"job {job_id}: expected step {expected}, got {step}")
            ok = outcome.success
            detail = outcome.detail
            if step == Step.QUERY_IP.value and ok:
                if is_valid_ip(outcome.ip, self.ip_subnet):
                    rec.ip_address = outcome.ip
                else:
                    ok = False
                    detail = f"address {outcome.ip!r} is not usable"
            setattr(rec, _SUBSTATUS_FIELD[step], SubStatus.PASSED if ok else SubStatus.FAILED)
            if not ok:
                self._advance(rec, EV_STEP_FAILED, f"{step} {detail}".strip())
            return self._copy(rec)

    def perform_notify_step(self, job_id: int) -> RequestRecord:
        """Last pipeline step: hand the requestor the address and default
        login. Sink success completes the pipeline; sink failure is a step
        failure like any other."""
        with self._lock:
            rec = self._require(job_id)
            if rec.status is not RequestStatus.PROCESSING:
                raise IllegalTransitionError(rec.status, EV_PIPELINE_COMPLETE)
            if self._next_step(rec) != STEP_NOTIFY:
                raise LifecycleError(f"job {job_id}: notify is not the next step")
            if self._notify(rec, NotificationKind.READY):
                rec.status_email_sent = SubStatus.PASSED
                self._advance(rec, EV_PIPELINE_COMPLETE)
            else:
                rec.status_email_sent = SubStatus.FAILED
                self._advance(rec, EV_STEP_FAILED, "NOTIFY delivery failed")
            return self._copy(rec)

    def finalize_failure(self, job_id: int) -> list[int]:
        """Release the failed attempt's capacity and let the queue at it;
        returns the queued jobs that placement just woke up."""
        with self._lock:
            rec = self._require(job_id)
            if rec.status is not RequestStatus.INCOMPLETE:
                raise IllegalTransitionError(rec.status, EV_REASSIGNED)
            freed = self._release_reservation(rec)
        return self.dequeue_on_capacity(freed)

    def _release_reservation(self, rec: RequestRecord) -> int | None:
        if rec.reservation is None:
            return None
        node = rec.reservation.node_id
        self.registry.release_capacity(rec.reservation.token)
        rec.reservation = None
        return node

    def run_provision_pipeline(self, job_id: int) -> RequestRecord:
        """Blocking pipeline for service mode: copy, boot, query the IP,
        notify. Driver calls sleep on the engine clock and run outside the
        engine lock so other requests keep moving."""
        plan = self.begin_provisioning(job_id)
        boot_attempted = False
        rec = None
        for step in PIPELINE_STEPS:
            if step == Step.COPY.value:
                outcome = self.driver.copy_clone(plan)
            elif step == Step.BOOT.value:
                boot_attempted = True
                outcome = self.driver.boot(plan)
            elif step == Step.QUERY_IP.value:
                outcome = self.driver.query_ip(plan)
            else:
                rec = self.perform_notify_step(job_id)
                break
            rec = self.complete_step(job_id, step, outcome)
            if rec.status is not RequestStatus.PROCESSING:
                break
        assert rec is not None
        if rec.status is RequestStatus.INCOMPLETE:
            if boot_attempted:
                self.driver.teardown(plan)
            self.finalize_failure(job_id)
            rec = self.get_request(job_id)
        return rec

    # -- stopping and leases ---------------------------------------------

    def request_stop(self, job_id: int) -> RequestRecord:
        with self._lock:
            rec = self._require(job_id)
            self._advance(rec, EV_USER_STOP)
            return self._copy(rec)

    def finalize_stop(self, job_id: int) -> list[int]:
        """After teardown: free the capacity, mark the record PROCESSED,
        tell the requestor, and wake the queue."""
        with self._lock:
            rec = self._require(job_id)
            if rec.status is not RequestStatus.STOPPED:
                raise IllegalTransitionError(rec.status, EV_TEARDOWN_CONFIRMED)
            freed = self._release_reservation(rec)
            self._advance(rec, EV_TEARDOWN_CONFIRMED)
            self._notify(rec, NotificationKind.STOPPED)
        return self.dequeue_on_capacity(freed)

    def stop_and_teardown(self, job_id: int) -> list[int]:
        """User-initiated stop, torn down synchronously."""
        self.request_stop(job_id)
        plan = self.plan_for(job_id)
        if plan is not None:
            self.driver.teardown(plan)
        return self.finalize_stop(job_id)

    def archive(self, job_id: int) -> RequestRecord:
        with self._lock:
            rec = self._require(job_id)
            self._advance(rec, EV_ARCHIVED)
            return self._copy(rec)

    def tick_leases(self, now: float, elapsed: float) -> list[tuple[int, str]]:
        """Advance every running lease by `elapsed` simulated seconds.

        Crossing the first reminder threshold emits reminder-1, the second
        reminder-2, and hitting zero emits lease-expired; several can fire
        in one tick but each fires at most once per request. Expired jobs
        are left STOPPED for the caller to tear down and finalize.
        """
        if elapsed <= 0:
            raise ValueError("elapsed must be positive")
        fired: list[tuple[int, str]] = []
        with self._lock:
            for job_id in sorted(self._records):
                rec = self._records[job_id]
                if rec.status not in LEASE_STATES:
                    continue
                lease_s = rec.lease_time_hours * 3600.0
                rec.time_remaining_seconds = max(0.0, rec.time_remaining_seconds - elapsed)
                remaining = rec.time_remaining_seconds
                f1, f2 = self.reminder_fractions
                eps = 1e-9 * lease_s  # fractions are decimal config; forgive binary dust
                if rec.status is RequestStatus.LIVE and remaining <= (1 - f1) * lease_s + eps:
                    self._advance(rec, EV_REMINDER_1, f"{remaining:.0f}s remaining")
                    self._notify(rec, NotificationKind.REMINDER1)
                    fired.append((job_id, EV_REMINDER_1))
                if rec.status is RequestStatus.REMINDER1 and remaining <= (1 - f2) * lease_s + eps:
                    self._advance(rec, EV_REMINDER_2, f"{remaining:.0f}s remaining")
                    self._notify(rec, NotificationKind.REMINDER2)
                    fired.append((job_id, EV_REMINDER_2))
                if remaining <= 0.0:
                    self._advance(rec, EV_LEASE_EXPIRED)
                    fired.append((job_id, EV_LEASE_EXPIRED))
        return fired

    def expire_and_finalize(self, now: float, elapsed: float) -> list[tuple[int, str]]:
        """tick_leases plus teardown and finalization of anything that
        expired; the convenience the service ticker and tests want."""
        fired = self.tick_leases(now, elapsed)
        for job_id, event in fired:
            if event == EV_LEASE_EXPIRED:
                plan = self.plan_for(job_id)
                if plan is not None:
                    self.driver.teardown(plan)
                self.finalize_stop(job_id)
        return fired
