import random

import pytest

from vitl.catalog import CpuModel
from vitl.lifecycle import (
    EDGES,
    EV_ARCHIVED,
    EV_LEASE_EXPIRED,
    EV_REMINDER_1,
    EV_REMINDER_2,
    EV_SUBMITTED,
    IllegalTransitionError,
    RequestStatus,
    SubStatus,
    ValidationError,
    replay_events,
)
from vitl.notify import CollectingSink, NotificationKind
from vitl.scheduling import MachineStatus, RequestType
from helpers import TOKEN, LabEnv

INTEL = CpuModel.INTEL
AMD = CpuModel.AMD

S = RequestStatus


# -- submission ----------------------------------------------------------------

def test_first_submission_is_job_one_and_new():
    env = LabEnv()
    rec = env.submit()
    assert rec.job_id == 1
    assert rec.status is S.NEW
    assert rec.time_remaining_seconds == 3600
    assert rec.substatuses() == {s: SubStatus.PENDING for s in rec.substatuses()}


def test_job_ids_strictly_increase():
    env = LabEnv()
    ids = [env.submit().job_id for _ in range(3)]
    assert ids == sorted(set(ids)) == [1, 2, 3]


def test_unknown_image_rejected_and_nothing_persisted():
    env = LabEnv()
    with pytest.raises(ValidationError):
        env.submit(vm_id=99)
    assert env.engine.all_requests() == []


def test_short_lease_rejected():
    env = LabEnv()
    with pytest.raises(ValidationError):
        env.submit(lease_hours=0)


# -- authorization ----------------------------------------------------------------

def test_valid_token_authorizes():
    env = LabEnv()
    rec = env.submit()
    assert env.engine.authorize(rec.job_id, TOKEN).status is S.AUTHORIZED


def test_invalid_token_is_terminal():
    env = LabEnv()
    rec = env.submit()
    assert env.engine.authorize(rec.job_id, "wrong").status is S.UNAUTHORIZED
    with pytest.raises(IllegalTransitionError):
        env.engine.place(rec.job_id)


def test_authorize_out_of_state_is_illegal():
    env = LabEnv()
    rec = env.submit_live()
    assert rec.status is S.LIVE
    with pytest.raises(IllegalTransitionError):
        env.engine.authorize(rec.job_id, TOKEN)


# -- status machine ---------------------------------------------------------------

def test_processing_with_all_steps_passed_goes_live():
    env = LabEnv()
    rec = env.submit_live()
    assert rec.status is S.LIVE
    assert all(s is SubStatus.PASSED for s in rec.substatuses().values())
    assert rec.ip_address.startswith("10.20.")
    assert rec.node_id == 1


def test_expiry_chain_reaches_processed():
    env = LabEnv()
    rec = env.submit_live()
    env.engine.expire_and_finalize(env.clock.now(), 3600)
    assert env.engine.get_request(rec.job_id).status is S.PROCESSED


def test_deleted_is_terminal():
    env = LabEnv()
    rec = env.submit_live()
    env.engine.stop_and_teardown(rec.job_id)
    env.engine.archive(rec.job_id)
    assert env.engine.get_request(rec.job_id).status is S.DELETED
    for event in {e for _, e in EDGES}:
        with pytest.raises(IllegalTransitionError):
            env.engine.advance_status(rec.job_id, event)


def test_fuzzed_illegal_events_all_rejected():
    env = LabEnv()
    rec = env.submit()
    rng = random.Random(7)
    events = sorted({e for _, e in EDGES} | {EV_SUBMITTED, "bogus-event"})
    for _ in range(200):
        current = env.engine.get_request(rec.job_id).status
        event = rng.choice(events)
        if (current, event) in EDGES:
            continue
        with pytest.raises(IllegalTransitionError):
            env.engine.advance_status(rec.job_id, event)
        assert env.engine.get_request(rec.job_id).status is current


def test_event_log_replays_to_final_status():
    env = LabEnv(host_specs=((8192, 8, INTEL), (4096, 2, AMD)))
    live = env.submit_live()
    queued = env.submit_placed(cpu=AMD, vm_id=1)
    env.engine.run_provision_pipeline(queued.job_id)
    env.submit(requestor="carol")
    env.engine.stop_and_teardown(live.job_id)
    replayed = replay_events(env.engine.events)
    for rec in env.engine.all_requests():
        assert replayed[rec.job_id] is rec.status


# -- placement through the engine ---------------------------------------------------

def test_placement_reserves_capacity():
    env = LabEnv()
    rec = env.submit_placed()
    assert rec.status is S.ASSIGNED
    assert rec.node_id == 1
    host = env.registry.get(1)
    assert host.runningvms == 1
    assert host.avail_mem == 8192 - 1024


def test_no_capacity_queues_and_notifies_delay():
    env = LabEnv(host_specs=((8192, 8, AMD),))
    rec = env.submit_placed(cpu=INTEL)
    assert rec.status is S.UNASSIGNED
    assert [n.kind for n in env.sink.sent] == [NotificationKind.DELAYED]


# -- pipeline failures ---------------------------------------------------------------

def test_boot_failure_marks_exactly_that_step():
    env = LabEnv(host_specs=((8192, 8, INTEL),), failure_script={(1, "BOOT"): "fail"})
    rec = env.submit_placed()
    rec = env.engine.run_provision_pipeline(rec.job_id)
    assert rec.status is S.INCOMPLETE
    assert rec.status_copy_vm is SubStatus.PASSED
    assert rec.status_vm_up is SubStatus.FAILED
    assert rec.status_ip_set is SubStatus.PENDING
    assert rec.status_email_sent is SubStatus.PENDING
    # capacity went back
    host = env.registry.get(1)
    assert host.runningvms == 0 and host.avail_mem == 8192


def test_invalid_ip_marks_ip_step():
    env = LabEnv(failure_script={(1, "QUERY_IP"): "invalid-ip"})
    rec = env.submit_placed()
    rec = env.engine.run_provision_pipeline(rec.job_id)
    assert rec.status is S.INCOMPLETE
    assert rec.status_ip_set is SubStatus.FAILED
    assert rec.ip_address == ""


def test_failed_notification_sink_marks_email_step():
    env = LabEnv(sink=CollectingSink(fail=True))
    rec = env.submit_placed()
    rec = env.engine.run_provision_pipeline(rec.job_id)
    assert rec.status is S.INCOMPLETE
    assert rec.status_email_sent is SubStatus.FAILED


def test_ready_notification_carries_address_and_login():
    env = LabEnv()
    rec = env.submit_live()
    ready = [n for n in env.sink.sent if n.kind is NotificationKind.READY]
    assert len(ready) == 1
    assert ready[0].ip_address == rec.ip_address
    assert ready[0].credentials.username == rec.vm_user


# -- reassignment ----------------------------------------------------------------------

def test_reassignment_excludes_failed_host():
    env = LabEnv(
        host_specs=((8192, 8, INTEL), (8192, 8, INTEL)),
        failure_script={(1, "BOOT"): "fail-once"},
    )
    rec = env.submit_placed()
    failed_node = rec.node_id
    rec = env.engine.run_provision_pipeline(rec.job_id)
    assert rec.status is S.INCOMPLETE
    decision = env.engine.reassign_incomplete(rec.job_id)
    rec = env.engine.get_request(rec.job_id)
    assert rec.status is S.ASSIGNED
    assert rec.excluded_nodes == {failed_node}
    assert decision.node_id != failed_node
    rec = env.engine.run_provision_pipeline(rec.job_id)
    assert rec.status is S.LIVE


def test_reassignment_with_no_alternative_queues():
    env = LabEnv(failure_script={(1, "BOOT"): "fail"})
    rec = env.submit_placed()
    env.engine.run_provision_pipeline(rec.job_id)
    decision = env.engine.reassign_incomplete(rec.job_id)
    assert decision.queued
    assert env.engine.get_request(rec.job_id).status is S.UNASSIGNED


def test_exclusions_grow_monotonically():
    env = LabEnv(
        host_specs=((8192, 8, INTEL), (8192, 8, INTEL)),
        failure_script={(1, "BOOT"): "fail"},
    )
    rec = env.submit_placed()
    seen = [set()]
    for _ in range(2):
        env.engine.run_provision_pipeline(rec.job_id)
        env.engine.reassign_incomplete(rec.job_id)
        rec = env.engine.get_request(rec.job_id)
        assert rec.excluded_nodes >= seen[-1]
        seen.append(set(rec.excluded_nodes))
    assert seen[-1] == {1, 2}
    assert rec.status is S.UNASSIGNED


def test_fresh_folder_id_per_attempt():
    env = LabEnv(
        host_specs=((8192, 8, INTEL), (8192, 8, INTEL)),
        failure_script={(1, "BOOT"): "fail-once"},
    )
    rec = env.submit_placed()
    env.engine.run_provision_pipeline(rec.job_id)
    first_plan = env.engine.plan_for(rec.job_id)
    env.engine.reassign_incomplete(rec.job_id)
    env.engine.run_provision_pipeline(rec.job_id)
    second_plan = env.engine.plan_for(rec.job_id)
    assert first_plan.unique_folder_id != second_plan.unique_folder_id


# -- leases -------------------------------------------------------------------------

def test_full_lease_timeline_fires_each_threshold_once():
    env = LabEnv()
    rec = env.submit_live()
    fired = []
    for _ in range(36):
        fired += env.engine.expire_and_finalize(env.clock.now(), 100)
    events = [e for _, e in fired]
    assert events == [EV_REMINDER_1, EV_REMINDER_2, EV_LEASE_EXPIRED]
    final = env.engine.get_request(rec.job_id)
    assert final.status is S.PROCESSED
    assert final.time_remaining_seconds == 0
    host = env.registry.get(1)
    assert host.runningvms == 0 and host.avail_mem == 8192


def test_reminder_thresholds_fire_at_remaining_boundaries():
    # 3600s lease: reminder-1 at remaining <= 900, reminder-2 at <= 360
    env = LabEnv()
    env.submit_live()
    assert env.engine.tick_leases(env.clock.now(), 1350) == []
    assert [e for _, e in env.engine.tick_leases(env.clock.now(), 1350)] == [EV_REMINDER_1]
    assert [e for _, e in env.engine.tick_leases(env.clock.now(), 540)] == [EV_REMINDER_2]
    assert [e for _, e in env.engine.tick_leases(env.clock.now(), 360)] == [EV_LEASE_EXPIRED]


def test_one_giant_tick_crosses_every_threshold_in_order():
    env = LabEnv()
    rec = env.submit_live()
    fired = env.engine.tick_leases(env.clock.now(), 3600)
    assert [e for _, e in fired] == [EV_REMINDER_1, EV_REMINDER_2, EV_LEASE_EXPIRED]
    assert env.engine.get_request(rec.job_id).status is S.STOPPED


def test_tick_ignores_requests_outside_lease_states():
    env = LabEnv()
    rec = env.submit_live()
    env.engine.stop_and_teardown(rec.job_id)
    assert env.engine.tick_leases(env.clock.now(), 500) == []


def test_reminders_notify_the_requestor():
    env = LabEnv()
    env.submit_live()
    env.engine.expire_and_finalize(env.clock.now(), 3600)
    kinds = [n.kind for n in env.sink.sent]
    assert kinds.count(NotificationKind.REMINDER1) == 1
    assert kinds.count(NotificationKind.REMINDER2) == 1
    assert kinds.count(NotificationKind.STOPPED) == 1


# -- queue wakeup -----------------------------------------------------------------------

def test_freed_capacity_assigns_queued_request():
    env = LabEnv(host_specs=((2048, 1, INTEL),))
    live = env.submit_live()
    queued = env.submit_placed(requestor="bob")
    assert queued.status is S.UNASSIGNED
    newly = env.engine.stop_and_teardown(live.job_id)
    assert newly == [queued.job_id]
    assert env.engine.get_request(queued.job_id).status is S.ASSIGNED


def test_queue_wakes_in_job_order():
    env = LabEnv(host_specs=((2048, 1, INTEL),))
    live = env.submit_live()
    first = env.submit_placed(requestor="bob")
    second = env.submit_placed(requestor="carol")
    newly = env.engine.stop_and_teardown(live.job_id)
    assert newly == [first.job_id]
    assert env.engine.get_request(second.job_id).status is S.UNASSIGNED


def test_incompatible_queued_request_stays_parked():
    env = LabEnv(host_specs=((2048, 1, INTEL),))
    live = env.submit_live()
    amd = env.submit_placed(requestor="bob", cpu=AMD)
    newly = env.engine.stop_and_teardown(live.job_id)
    assert newly == []
    assert env.engine.get_request(amd.job_id).status is S.UNASSIGNED


def test_mixed_queue_skips_blocked_but_serves_different():
    env = LabEnv(host_specs=((2048, 1, INTEL), (2048, 1, AMD)))
    live_intel = env.submit_live()          # lands on the INTEL host
    live_amd = env.submit_live(cpu=AMD)     # lands on the AMD host
    q_amd = env.submit_placed(cpu=AMD)
    q_intel = env.submit_placed(cpu=INTEL)
    assert {q_amd.status, q_intel.status} == {S.UNASSIGNED}
    newly = env.engine.stop_and_teardown(live_intel.job_id)
    # the younger INTEL request must not be blocked behind the older AMD one
    assert newly == [q_intel.job_id]
    assert env.engine.get_request(q_amd.job_id).status is S.UNASSIGNED
    assert live_amd.status is S.LIVE


# -- capacity bookkeeping invariant -------------------------------------------------------

def test_bound_requests_match_running_counts():
    env = LabEnv(host_specs=((8192, 4, INTEL), (8192, 4, INTEL)))
    for name in ("a", "b", "c"):
        env.submit_live(requestor=name)
    bound: dict[int, int] = {}
    for rec in env.engine.all_requests():
        if rec.status in (S.ASSIGNED, S.PROCESSING, S.LIVE, S.REMINDER1, S.REMINDER2):
            bound[rec.node_id] = bound.get(rec.node_id, 0) + 1
    for host in env.registry.all_hosts():
        assert host.runningvms == bound.get(host.node_id, 0)


# -- stop -------------------------------------------------------------------------

def test_user_stop_restores_capacity():
    env = LabEnv()
    rec = env.submit_live()
    env.engine.stop_and_teardown(rec.job_id)
    final = env.engine.get_request(rec.job_id)
    assert final.status is S.PROCESSED
    host = env.registry.get(1)
    assert host.runningvms == 0 and host.avail_mem == 8192


def test_stop_before_live_is_illegal():
    env = LabEnv()
    rec = env.submit_placed()
    with pytest.raises(IllegalTransitionError):
        env.engine.request_stop(rec.job_id)


def test_tod_requests_follow_the_same_pipeline():
    env = LabEnv()
    rec = env.submit_live(request_type=RequestType.TOD)
    assert rec.status is S.LIVE
    assert rec.request_type is RequestType.TOD


def test_offline_fleet_queues_everything():
    env = LabEnv()
    env.registry.sweep_liveness(now=10_000.0)
    assert env.registry.get(1).machine_status is MachineStatus.OFFLINE
    rec = env.submit_placed()
    assert rec.status is S.UNASSIGNED
