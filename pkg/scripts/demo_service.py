#!/usr/bin/env python3
"""Boot a demo service with a seeded catalog and five simulated hosts,
then leave it running for the web console or vitl-admin to poke at.

Usage: python scripts/demo_service.py [listen_host:port]
"""

import sys
import threading
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from vitl.catalog import OsFamily  # noqa: E402
from vitl.driver import SimDriverConfig  # noqa: E402
from vitl.hosts import HeartbeatPayload  # noqa: E402
from vitl.catalog import CpuModel, PreconfigChecklist, VmImage  # noqa: E402
from vitl.scheduling import Automation  # noqa: E402
from vitl.service import ServiceConfig, VitlService  # noqa: E402

DEMO_TOKEN = "vitl-dev-token"

IMAGES = [
    ("winxp-sp3", OsFamily.WIN, "Windows XP SP3"),
    ("ubuntu-10.04", OsFamily.LINUX, "Ubuntu 10.04 LTS"),
    ("osx-10.6", OsFamily.MAC, "OS X Snow Leopard"),
]

FLEET = [(16384, 15), (2048, 2), (2048, 2), (2048, 2), (2048, 2)]


def main() -> int:
    listen = sys.argv[1] if len(sys.argv) > 1 else "127.0.0.1:8095"
    config = ServiceConfig(
        listen_address=listen,
        persistence_dir="vitl-state",
        tokens=(DEMO_TOKEN,),
        sim_driver=SimDriverConfig(
            copy_base_seconds=1.0, boot_base_seconds=3.0,
            ip_query_seconds=0.5, notify_seconds=0.2, clone_size_mb=50,
        ),
    )
    service = VitlService(config)
    checklist = PreconfigChecklist(True, True, True, True, True, True)
    for i, (name, family, display) in enumerate(IMAGES, start=1):
        if service.catalog.lookup(i) is None:
            service.catalog.add(VmImage(
                vm_id=i,
                os_name=name,
                clone_vmx_path=f"/mnt/vitl-share/clones/{name}.vmx",
                os_family=family,
                display_name=display,
                preconfig=checklist,
            ))
    if not service.registry.all_hosts():
        for i, (total, slots) in enumerate(FLEET, start=1):
            service.registry.register_host(
                HeartbeatPayload(
                    ip_or_hostname=f"10.9.0.{i}", distro_name="demo-host",
                    cpu_model=CpuModel.INTEL, architecture="32-bit",
                    total_mem=total, avail_mem=total, sent_at=service.clock.now(),
                ),
                automation=Automation.B,
                max_instances=slots,
            )
    service.start()
    print(f"demo service on {service.base_url} (token: {DEMO_TOKEN})")
    print("stop with Ctrl-C")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        service.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
