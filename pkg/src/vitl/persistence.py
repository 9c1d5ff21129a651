"""Table persistence: one versioned, line-delimited JSON file per table.

The snapshot covers everything the service needs to come back: the image
catalog, host records with their active reservations, request records, the
full transition log, and the id counters. Serialization is stable, so
persist -> load -> persist reproduces the files byte for byte. A load
either succeeds completely or refuses at the first bad line; it never
applies half a snapshot.

The live transition journal (wal.jsonl) uses the same record schema as the
events table and is appended as mutations happen; the snapshot is the
recovery point, the journal is the durable audit trail.
"""

from __future__ import annotations

import json
from pathlib import Path

from .catalog import CpuModel, ImageCatalog, VmImage, image_from_record, image_to_record
from .hosts import HostRecord, HostRegistry, Reservation
from .lifecycle import (
    LifecycleEngine,
    RequestRecord,
    RequestStatus,
    SubStatus,
    TransitionEvent,
)
from .scheduling import Automation, MachineStatus, RequestType

FORMAT_VERSION = 1

TABLES = ("images", "hosts", "reservations", "requests", "events", "meta")


class PersistenceError(Exception):
    pass


# -- record codecs ------------------------------------------------------------

def host_to_record(rec: HostRecord) -> dict:
    return {
        "node_id": rec.node_id,
        "ip_addr": rec.ip_addr,
        "hostname": rec.hostname,
        "distro_name": rec.distro_name,
        "architecture": rec.architecture,
        "mac_addr": rec.mac_addr,
        "total_mem": rec.total_mem,
        "avail_mem": rec.avail_mem,
        "machine_status": rec.machine_status.value,
        "last_seen": rec.last_seen,
        "cpu_model": rec.cpu_model.value,
        "runningvms": rec.runningvms,
        "automation": rec.automation.value,
        "max_instances": rec.max_instances,
        "reported_avail_mem": rec.reported_avail_mem,
    }


def host_from_record(rec: dict) -> HostRecord:
    return HostRecord(
        node_id=rec["node_id"],
        ip_addr=rec["ip_addr"],
        hostname=rec["hostname"],
        distro_name=rec["distro_name"],
        architecture=rec["architecture"],
        mac_addr=rec["mac_addr"],
        total_mem=rec["total_mem"],
        avail_mem=rec["avail_mem"],
        machine_status=MachineStatus(rec["machine_status"]),
        last_seen=rec["last_seen"],
        cpu_model=CpuModel(rec["cpu_model"]),
        runningvms=rec["runningvms"],
        automation=Automation(rec["automation"]),
        max_instances=rec["max_instances"],
        reported_avail_mem=rec["reported_avail_mem"],
    )


def reservation_to_record(res: Reservation) -> dict:
    return {"token": res.token, "node_id": res.node_id, "mem_mb": res.mem_mb}


def reservation_from_record(rec: dict) -> Reservation:
    return Reservation(token=rec["token"], node_id=rec["node_id"], mem_mb=rec["mem_mb"])


def request_to_record(rec: RequestRecord) -> dict:
    return {
        "job_id": rec.job_id,
        "assigned_on": rec.assigned_on,
        "requestor": rec.requestor,
        "ip_address": rec.ip_address,
        "vmx_path": rec.vmx_path,
        "status": rec.status.value,
        "request_type": rec.request_type.value,
        "authentication_token": rec.authentication_token,
        "node_id": rec.node_id,
        "log_file_path": rec.log_file_path,
        "vm_id": rec.vm_id,
        "status_copy_vm": rec.status_copy_vm.value,
        "status_vm_up": rec.status_vm_up.value,
        "status_ip_set": rec.status_ip_set.value,
        "status_email_sent": rec.status_email_sent.value,
        "architecture": rec.architecture.value,
        "vm_user": rec.vm_user,
        "status_reason": rec.status_reason,
        "lease_time_hours": rec.lease_time_hours,
        "time_remaining_seconds": rec.time_remaining_seconds,
        "excluded_nodes": sorted(rec.excluded_nodes),
        "reservation_token": rec.reservation.token if rec.reservation else None,
    }


def request_from_record(rec: dict, reservations: dict[int, Reservation]) -> RequestRecord:
    token = rec["reservation_token"]
    if token is not None and token not in reservations:
        raise PersistenceError(f"request {rec['job_id']} references unknown reservation {token}")
    return RequestRecord(
        job_id=rec["job_id"],
        assigned_on=rec["assigned_on"],
        requestor=rec["requestor"],
        ip_address=rec["ip_address"],
        vmx_path=rec["vmx_path"],
        status=RequestStatus(rec["status"]),
        request_type=RequestType(rec["request_type"]),
        authentication_token=rec["authentication_token"],
        node_id=rec["node_id"],
        log_file_path=rec["log_file_path"],
        vm_id=rec["vm_id"],
        status_copy_vm=SubStatus(rec["status_copy_vm"]),
        status_vm_up=SubStatus(rec["status_vm_up"]),
        status_ip_set=SubStatus(rec["status_ip_set"]),
        status_email_sent=SubStatus(rec["status_email_sent"]),
        architecture=CpuModel(rec["architecture"]),
        vm_user=rec["vm_user"],
        status_reason=rec["status_reason"],
        lease_time_hours=rec["lease_time_hours"],
        time_remaining_seconds=rec["time_remaining_seconds"],
        excluded_nodes=set(rec["excluded_nodes"]),
        reservation=reservations.get(token) if token is not None else None,
    )


def event_to_record(ev: TransitionEvent) -> dict:
    return {
        "seq": ev.seq,
        "job_id": ev.job_id,
        "old_status": ev.old_status.value if ev.old_status else None,
        "event": ev.event,
        "new_status": ev.new_status.value,
        "at": ev.at,
    }


def event_from_record(rec: dict) -> TransitionEvent:
    return TransitionEvent(
        seq=rec["seq"],
        job_id=rec["job_id"],
        old_status=RequestStatus(rec["old_status"]) if rec["old_status"] else None,
        event=rec["event"],
        new_status=RequestStatus(rec["new_status"]),
        at=rec["at"],
    )


# -- table files ---------------------------------------------------------------

def _table_path(state_dir: Path, table: str) -> Path:
    return state_dir / f"{table}.jsonl"


def write_table(state_dir: Path, table: str, records: list[dict]) -> Path:
    path = _table_path(state_dir, table)
    header = {"table": table, "version": FORMAT_VERSION, "count": len(records)}
    lines = [json.dumps(header)]
    lines.extend(json.dumps(rec) for rec in records)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_table(state_dir: Path, table: str) -> list[dict]:
    path = _table_path(state_dir, table)
    if not path.exists():
        raise PersistenceError(f"{path}: missing table file")
    records: list[dict] = []
    expected_count = None
    lineno = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line == "":
                raise PersistenceError(f"{path}:{lineno}: blank line in table file")
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PersistenceError(f"{path}:{lineno}: {exc.msg}")
            if lineno == 1:
                if rec.get("table") != table or rec.get("version") != FORMAT_VERSION:
                    raise PersistenceError(f"{path}:1: bad header for table {table!r}: {rec}")
                expected_count = rec.get("count")
                continue
            records.append(rec)
    if expected_count is None:
        raise PersistenceError(f"{path}:1: empty table file")
    if expected_count != len(records):
        raise PersistenceError(
            f"{path}:{lineno}: header promises {expected_count} records, found {len(records)}"
        )
    return records


# -- whole-state snapshot ---------------------------------------------------------

def persist_tables(
    state_dir: str | Path,
    catalog: ImageCatalog,
    registry: HostRegistry,
    engine: LifecycleEngine,
) -> list[Path]:
    state_dir = Path(state_dir)
    state_dir.mkdir(parents=True, exist_ok=True)
    reg_state = registry.export_state()
    eng_state = engine.export_state()
    written = [
        write_table(state_dir, "images", [image_to_record(im) for im in catalog]),
        write_table(state_dir, "hosts", [host_to_record(h) for h in reg_state["hosts"]]),
        write_table(
            state_dir,
            "reservations",
            [reservation_to_record(r) for r in reg_state["reservations"]],
        ),
        write_table(
            state_dir, "requests", [request_to_record(r) for r in eng_state["requests"]]
        ),
        write_table(state_dir, "events", [event_to_record(e) for e in eng_state["events"]]),
        write_table(
            state_dir,
            "meta",
            [
                {
                    "node_seq": reg_state["node_seq"],
                    "token_seq": reg_state["token_seq"],
                    "job_seq": eng_state["job_seq"],
                    "event_seq": eng_state["event_seq"],
                    "attempts": {str(k): v for k, v in sorted(eng_state["attempts"].items())},
                }
            ],
        ),
    ]
    return written


def load_tables(
    state_dir: str | Path,
    catalog: ImageCatalog,
    registry: HostRegistry,
    engine: LifecycleEngine,
) -> None:
    """Parse and validate every table, then apply the snapshot atomically
    to the given (expected fresh) catalog, registry and engine."""
    state_dir = Path(state_dir)
    raw = {table: read_table(state_dir, table) for table in TABLES}

    images = [image_from_record(r) for r in raw["images"]]
    hosts = [host_from_record(r) for r in raw["hosts"]]
    reservations = [reservation_from_record(r) for r in raw["reservations"]]
    by_token = {r.token: r for r in reservations}
    requests = [request_from_record(r, by_token) for r in raw["requests"]]
    events = [event_from_record(r) for r in raw["events"]]
    if len(raw["meta"]) != 1:
        raise PersistenceError(f"{_table_path(state_dir, 'meta')}: expected exactly one record")
    meta = raw["meta"][0]

    # nothing below parses, so state can now be applied as one unit
    for image in images:
        catalog.add(image)
    registry.import_state(
        {
            "hosts": hosts,
            "reservations": reservations,
            "node_seq": meta["node_seq"],
            "token_seq": meta["token_seq"],
        }
    )
    engine.import_state(
        {
            "requests": requests,
            "events": events,
            "job_seq": meta["job_seq"],
            "event_seq": meta["event_seq"],
            "attempts": {int(k): v for k, v in meta["attempts"].items()},
        }
    )


def snapshot_exists(state_dir: str | Path) -> bool:
    return _table_path(Path(state_dir), "meta").exists()
