"""VM image catalog.

Each catalog row describes one bootable distribution: where its linked
clone lives on the shared mount, which OS family it is, and a checklist of
guest-side preparations (auto-login, remote access server, firewall, guest
tools, screensaver and auto-update settings).  An image is admitted to the
catalog only if the whole checklist is satisfied and the clone path sits
under the canonical shared-mount prefix, because every host must resolve
the clone's base image at the same location.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

DEFAULT_SHARE_PREFIX = "/mnt/vitl-share/"


class OsFamily(str, Enum):
    WIN = "WIN"
    LINUX = "LINUX"
    MAC = "MAC"
    OPENSOLARIS = "OPENSOLARIS"

    @classmethod
    def parse(cls, text: str) -> "OsFamily":
        # legacy data may carry an internal space in the Solaris token
        return cls(text.strip().upper().replace(" ", ""))


class CpuModel(str, Enum):
    INTEL = "INTEL"
    AMD = "AMD"


@dataclass(frozen=True)
class Credentials:
    """Default login for a freshly booted instance; password is opaque."""

    username: str
    password: str

    def __post_init__(self):
        if not self.username:
            raise ValueError("credentials need a non-empty username")


@dataclass(frozen=True)
class PreconfigChecklist:
    autologin_set: bool = False
    remote_server_installed: bool = False
    firewall_configured: bool = False
    guest_tools_installed: bool = False
    screensaver_off: bool = False
    auto_updates_off: bool = False

    def all_set(self) -> bool:
        return all(getattr(self, f.name) for f in fields(self))


_CHECKLIST_VIOLATIONS = {
    "autologin_set": "autologin not set",
    "remote_server_installed": "remote access server not installed",
    "firewall_configured": "firewall not configured for remote login",
    "guest_tools_installed": "guest tools not installed",
    "screensaver_off": "screensaver still enabled",
    "auto_updates_off": "auto updates still enabled",
}


@dataclass(frozen=True)
class VmImage:
    vm_id: int
    os_name: str
    clone_vmx_path: str
    os_family: OsFamily
    display_name: str
    preconfig: PreconfigChecklist = field(default_factory=PreconfigChecklist)


def validate_image(image: VmImage, share_prefix: str = DEFAULT_SHARE_PREFIX) -> list[str]:
    """Return one violation string per problem; an empty list means servable.

    Never raises: validation reports, admission (ImageCatalog.add) enforces.
    """
    violations: list[str] = []
    if image.vm_id <= 0:
        violations.append("vm_id must be a positive integer")
    if not image.os_name or len(image.os_name) > 30:
        violations.append("os_name must be 1..30 characters")
    if len(image.display_name) > 100:
        violations.append("display_name longer than 100 characters")
    if not image.clone_vmx_path:
        violations.append("clone_vmx_path is empty")
    else:
        if len(image.clone_vmx_path) > 100:
            violations.append("clone_vmx_path longer than 100 characters")
        if not image.clone_vmx_path.startswith(share_prefix):
            violations.append(
                f"clone_vmx_path must start with the shared-mount prefix {share_prefix!r}"
            )
    for flag, message in _CHECKLIST_VIOLATIONS.items():
        if not getattr(image.preconfig, flag):
            violations.append(message)
    return violations


class CatalogError(Exception):
    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = violations or []


class ImageCatalog:
    """Mapping of vm_id -> VmImage; concurrent reads, serialized writes."""

    def __init__(self, share_prefix: str = DEFAULT_SHARE_PREFIX):
        self.share_prefix = share_prefix
        self._images: dict[int, VmImage] = {}
        self._write_lock = threading.Lock()

    def add(self, image: VmImage) -> None:
        violations = validate_image(image, self.share_prefix)
        if violations:
            raise CatalogError(
                f"image {image.vm_id} is not servable: {'; '.join(violations)}",
                violations,
            )
        with self._write_lock:
            if image.vm_id in self._images:
                raise CatalogError(f"duplicate vm_id {image.vm_id}")
            self._images[image.vm_id] = image

    def remove(self, vm_id: int) -> None:
        with self._write_lock:
            self._images.pop(vm_id, None)

    def lookup(self, vm_id: int) -> VmImage | None:
        return self._images.get(vm_id)

    def __len__(self) -> int:
        return len(self._images)

    def __iter__(self):
        return iter(sorted(self._images.values(), key=lambda im: im.vm_id))


# --- seed file -------------------------------------------------------------
#
# One image per line, a self-describing JSON object. Keys follow the catalog
# row order, then the six checklist booleans.

_SEED_FIELDS = ("vm_id", "os_name", "clone_vmx_path", "os_family", "display_name")
_CHECKLIST_FIELDS = tuple(_CHECKLIST_VIOLATIONS)


def image_to_record(image: VmImage) -> dict:
    rec = {
        "vm_id": image.vm_id,
        "os_name": image.os_name,
        "clone_vmx_path": image.clone_vmx_path,
        "os_family": image.os_family.value,
        "display_name": image.display_name,
    }
    for flag in _CHECKLIST_FIELDS:
        rec[flag] = getattr(image.preconfig, flag)
    return rec


def image_from_record(rec: dict) -> VmImage:
    missing = [k for k in _SEED_FIELDS + _CHECKLIST_FIELDS if k not in rec]
    if missing:
        raise CatalogError(f"image record missing fields: {', '.join(missing)}")
    return VmImage(
        vm_id=int(rec["vm_id"]),
        os_name=str(rec["os_name"]),
        clone_vmx_path=str(rec["clone_vmx_path"]),
        os_family=OsFamily.parse(str(rec["os_family"])),
        display_name=str(rec["display_name"]),
        preconfig=PreconfigChecklist(**{f: bool(rec[f]) for f in _CHECKLIST_FIELDS}),
    )


def load_seed_file(path: str | Path, share_prefix: str = DEFAULT_SHARE_PREFIX) -> ImageCatalog:
    catalog = ImageCatalog(share_prefix)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CatalogError(f"{path}:{lineno}: not a JSON record ({exc.msg})")
            try:
                catalog.add(image_from_record(rec))
            except CatalogError as exc:
                raise CatalogError(f"{path}:{lineno}: {exc}", exc.violations)
    return catalog


def dump_seed_file(catalog: ImageCatalog, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for image in catalog:
            fh.write(json.dumps(image_to_record(image)) + "\n")
