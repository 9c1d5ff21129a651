"""Builders and independent reference implementations shared by the suite.

reference_select is the brute-force placement oracle: it refilters,
repartitions and rescores every host straight from the published formulas,
so the production scheduler is checked against a second code path.
"""

from __future__ import annotations

import json
import time
import urllib.error
import urllib.request
from contextlib import contextmanager

from vitl.catalog import (
    Credentials,
    CpuModel,
    ImageCatalog,
    OsFamily,
    PreconfigChecklist,
    VmImage,
)
from vitl.hosts import HeartbeatPayload, HostRegistry
from vitl.scheduling import (
    Automation,
    FleetSnapshot,
    HostView,
    MachineStatus,
    PlacementConstraints,
    SchedulerConfig,
)

FULL_CHECKLIST = PreconfigChecklist(True, True, True, True, True, True)


def make_image(vm_id: int = 1, os_name: str = "ubuntu-10.04", family: OsFamily = OsFamily.LINUX,
               **overrides) -> VmImage:
    defaults = dict(
        vm_id=vm_id,
        os_name=os_name,
        clone_vmx_path=f"/mnt/vitl-share/clones/{os_name}-{vm_id}.vmx",
        os_family=family,
        display_name=os_name.replace("-", " ").title(),
        preconfig=FULL_CHECKLIST,
    )
    defaults.update(overrides)
    return VmImage(**defaults)


def make_catalog(*images: VmImage) -> ImageCatalog:
    catalog = ImageCatalog()
    for image in images or (make_image(),):
        catalog.add(image)
    return catalog


def make_payload(ip: str = "10.0.0.1", total: int = 8192, avail: int | None = None,
                 sent_at: float = 0.0, cpu: CpuModel = CpuModel.INTEL,
                 arch: str = "32-bit", distro: str = "ubuntu") -> HeartbeatPayload:
    return HeartbeatPayload(
        ip_or_hostname=ip,
        distro_name=distro,
        cpu_model=cpu,
        architecture=arch,
        total_mem=total,
        avail_mem=total if avail is None else avail,
        sent_at=sent_at,
    )


def make_registry(*host_specs: tuple[int, int, CpuModel]) -> HostRegistry:
    """host_specs: (total_mem, max_instances, cpu_model) per host."""
    registry = HostRegistry()
    for i, (total, max_instances, cpu) in enumerate(host_specs, start=1):
        registry.register_host(
            make_payload(ip=f"10.0.0.{i}", total=total, cpu=cpu),
            automation=Automation.B,
            max_instances=max_instances,
        )
    return registry


def make_view(node_id: int, *, cpu: CpuModel = CpuModel.INTEL, arch: str = "32-bit",
              automation: Automation = Automation.B,
              status: MachineStatus = MachineStatus.ONLINE,
              total: int = 8192, avail: int = 8192, running: int = 0,
              max_instances: int = 8) -> HostView:
    return HostView(node_id, cpu, arch, automation, status, total, avail, running, max_instances)


def reference_select(snapshot: FleetSnapshot, c: PlacementConstraints,
                     cfg: SchedulerConfig) -> tuple[int, str, float] | None:
    """Independent brute force: None means queue."""
    admit = {"USER": ("N", "B"), "TOD": ("Y", "B")}[c.request_type.value]
    eligible = [
        h for h in snapshot.hosts
        if h.machine_status.value == "ONLINE"
        and h.cpu_model.value == c.cpu_model.value
        and h.automation.value in admit
        and h.avail_mem >= c.required_mem
        and h.runningvms < h.max_instances
        and h.node_id not in c.excluded_nodes
    ]
    if not eligible:
        return None
    idle = [h for h in eligible if h.runningvms == 0]
    if idle:
        score, neg_id, host = max(
            (h.avail_mem / h.total_mem, -h.node_id, h) for h in idle
        )
        return host.node_id, "SET_I", score
    cloud_total = sum(h.runningvms for h in snapshot.hosts)
    score, neg_id, host = max(
        (cfg.k * (h.avail_mem / h.total_mem) / (h.runningvms / cloud_total), -h.node_id, h)
        for h in eligible
    )
    return host.node_id, "SET_II", score


DEFAULT_CREDENTIALS = Credentials("labuser", "changeme")

TOKEN = "sesame"

FAST_DRIVER = dict(
    copy_base_seconds=0.0,
    boot_base_seconds=0.0,
    ip_query_seconds=0.0,
    notify_seconds=0.0,
    clone_size_mb=0.0,
)


@contextmanager
def running_service(tmp_path, images=(1,), **overrides):
    """A live HTTP service on an ephemeral port with near-zero sim timings."""
    from vitl.driver import SimDriverConfig
    from vitl.service import ServiceConfig, VitlService

    driver_overrides = overrides.pop("driver", {})
    config = ServiceConfig(
        listen_address="127.0.0.1:0",
        persistence_dir=str(tmp_path / "state"),
        tokens=(TOKEN,),
        sim_driver=SimDriverConfig(**{**FAST_DRIVER, **driver_overrides}),
        sweep_interval_seconds=0.05,
        lease_tick_seconds=0.05,
        snapshot_interval_seconds=300.0,
        **overrides,
    )
    service = VitlService(config)
    for vm_id in images:
        if service.catalog.lookup(vm_id) is None:
            service.catalog.add(make_image(vm_id=vm_id))
    service.start()
    try:
        yield service
    finally:
        service.stop()


def api_call(service, method, path, body=None, token=TOKEN):
    headers = {"Content-Type": "application/json"}
    if token is not None:
        headers["X-Auth-Token"] = token
    data = json.dumps(body).encode() if body is not None else None
    request = urllib.request.Request(
        service.base_url + path, method=method, data=data, headers=headers
    )
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            return response.status, json.loads(response.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


def http_register_host(service, ip="10.0.0.1", total=8192, cpu="INTEL",
                       max_instances=8, token=TOKEN, **kw):
    return api_call(service, "POST", "/hosts/register", {
        "ip_or_hostname": ip,
        "distro_name": "ubuntu",
        "cpu_model": cpu,
        "architecture": "32-bit",
        "total_mem": total,
        "avail_mem": total,
        "max_instances": max_instances,
        **kw,
    }, token=token)


def http_submit(service, **kw):
    body = {"vm_id": 1, "cpu_model": "INTEL", "lease_time_hours": 2, "requestor": "alice"}
    body.update(kw)
    return api_call(service, "POST", "/requests", body)


def wait_for_status(service, job_id, wanted, timeout=10.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        _, payload = api_call(service, "GET", f"/requests/{job_id}")
        if payload["request"]["status"] == wanted:
            return payload["request"]
        time.sleep(0.02)
    raise AssertionError(f"job {job_id} never reached {wanted}")


class LabEnv:
    """A whole in-memory service core on a virtual clock."""

    def __init__(self, host_specs=((8192, 8, CpuModel.INTEL),), failure_script=None,
                 sink=None, driver_overrides=None, engine_overrides=None):
        from vitl.clock import VirtualClock
        from vitl.driver import SimDriverConfig, SimulatedDriver
        from vitl.lifecycle import LifecycleEngine
        from vitl.notify import CollectingSink

        self.catalog = make_catalog()
        self.registry = make_registry(*host_specs)
        self.clock = VirtualClock()
        self.sink = sink if sink is not None else CollectingSink()
        config = SimDriverConfig(
            failure_script=failure_script or {}, **(driver_overrides or {})
        )
        self.driver = SimulatedDriver(
            config,
            self.clock,
            host_load=lambda node: max(0, self.registry.get(node).runningvms - 1),
        )
        self.engine = LifecycleEngine(
            self.catalog,
            self.registry,
            self.driver,
            self.sink,
            self.clock,
            token_table={TOKEN},
            default_credentials=DEFAULT_CREDENTIALS,
            **(engine_overrides or {}),
        )

    def submit(self, requestor="alice", vm_id=1, cpu=CpuModel.INTEL, lease_hours=1, **kw):
        return self.engine.submit_request(requestor, vm_id, cpu, lease_hours, **kw)

    def submit_placed(self, **kw):
        rec = self.submit(**kw)
        self.engine.authorize(rec.job_id, TOKEN)
        self.engine.place(rec.job_id)
        return self.engine.get_request(rec.job_id)

    def submit_live(self, **kw):
        rec = self.submit_placed(**kw)
        return self.engine.run_provision_pipeline(rec.job_id)
