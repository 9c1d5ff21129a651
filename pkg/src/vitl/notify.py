"""Notification sink: tell the requestor their instance is ready (address
plus default credentials), delayed, nearing lease expiry, or stopped.

The default sink is an append-only outbox file so nothing here needs a mail
server; an SMTP adapter would implement the same one-method interface.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol

from .catalog import Credentials


class NotificationKind(str, Enum):
    READY = "READY"
    REMINDER1 = "REMINDER1"
    REMINDER2 = "REMINDER2"
    STOPPED = "STOPPED"
    DELAYED = "DELAYED"


@dataclass(frozen=True)
class Notification:
    job_id: int
    recipient: str
    kind: NotificationKind
    ip_address: str = ""
    credentials: Credentials | None = None

    def __post_init__(self):
        if self.kind is NotificationKind.READY and not self.ip_address:
            raise ValueError("READY notifications must carry an address")


@dataclass(frozen=True)
class DeliveryRecord:
    ok: bool
    detail: str = ""


class NotificationSink(Protocol):
    def deliver(self, n: Notification) -> DeliveryRecord: ...


class OutboxSink:
    """Appends one JSON record per notification; never raises."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def deliver(self, n: Notification) -> DeliveryRecord:
        record = {
            "job_id": n.job_id,
            "recipient": n.recipient,
            "kind": n.kind.value,
            "ip_address": n.ip_address,
            "username": n.credentials.username if n.credentials else "",
            "password": n.credentials.password if n.credentials else "",
        }
        try:
            with self._lock, open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
        except OSError as exc:
            return DeliveryRecord(False, f"outbox write failed: {exc}")
        return DeliveryRecord(True, f"outbox {self.path}")


class CollectingSink:
    """In-memory sink for tests and the simulation harness."""

    def __init__(self, fail: bool = False):
        self.sent: list[Notification] = []
        self.fail = fail

    def deliver(self, n: Notification) -> DeliveryRecord:
        if self.fail:
            return DeliveryRecord(False, "sink configured to fail")
        self.sent.append(n)
        return DeliveryRecord(True, "collected")
