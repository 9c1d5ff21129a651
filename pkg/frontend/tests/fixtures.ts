import type { HostRecord, RequestRecord } from "../src/model.js";

export function makeRecord(overrides: Partial<RequestRecord> = {}): RequestRecord {
  return {
    job_id: 1,
    requestor: "alice",
    ip_address: "",
    status: "PROCESSING",
    request_type: "USER",
    node_id: 1,
    vm_id: 1,
    status_copy_vm: "PENDING",
    status_vm_up: "PENDING",
    status_ip_set: "PENDING",
    status_email_sent: "PENDING",
    architecture: "INTEL",
    vm_user: "labuser",
    status_reason: "provision-started",
    lease_time_hours: 2,
    time_remaining_seconds: 7200,
    excluded_nodes: [],
    credentials: null,
    ...overrides,
  };
}

export function makeHost(overrides: Partial<HostRecord> = {}): HostRecord {
  return {
    node_id: 1,
    ip_addr: "10.0.0.1",
    hostname: "lab-01",
    distro_name: "ubuntu",
    architecture: "32-bit",
    total_mem: 8192,
    avail_mem: 6144,
    machine_status: "ONLINE",
    last_seen: 100,
    cpu_model: "INTEL",
    runningvms: 2,
    automation: "B",
    max_instances: 8,
    reported_avail_mem: 6144,
    ...overrides,
  };
}
