/** Wire shapes returned by the lab service. The console renders these
 * verbatim; it never derives business state of its own. */

export type SubStatus = "PASSED" | "PENDING" | "FAILED";

export type RequestStatus =
  | "NEW"
  | "AUTHORIZED"
  | "UNAUTHORIZED"
  | "PROCESSING"
  | "PROCESSED"
  | "DELETED"
  | "INCOMPLETE"
  | "ASSIGNED"
  | "UNASSIGNED"
  | "LIVE"
  | "STOPPED"
  | "REMINDER1"
  | "REMINDER2";

export interface VmImage {
  vm_id: number;
  os_name: string;
  os_family: string;
  display_name: string;
}

export interface Credentials {
  username: string;
  password: string;
}

export interface RequestRecord {
  job_id: number;
  requestor: string;
  ip_address: string;
  status: RequestStatus;
  request_type: "USER" | "TOD";
  node_id: number | null;
  vm_id: number;
  status_copy_vm: SubStatus;
  status_vm_up: SubStatus;
  status_ip_set: SubStatus;
  status_email_sent: SubStatus;
  architecture: "INTEL" | "AMD";
  vm_user: string;
  status_reason: string;
  lease_time_hours: number;
  time_remaining_seconds: number;
  excluded_nodes: number[];
  credentials: Credentials | null;
}

export interface HostRecord {
  node_id: number;
  ip_addr: string;
  hostname: string;
  distro_name: string;
  architecture: string;
  total_mem: number;
  avail_mem: number;
  machine_status: "ONLINE" | "OFFLINE";
  last_seen: number;
  cpu_model: "INTEL" | "AMD";
  runningvms: number;
  automation: "Y" | "N" | "B";
  max_instances: number;
  reported_avail_mem: number;
}

export interface PlacementDecision {
  outcome: "CHOSEN" | "QUEUE";
  node_id: number | null;
  set_label: "SET_I" | "SET_II" | null;
  score: number | null;
}

export interface ScoredHost {
  node_id: number;
  eligible: boolean;
  runningvms: number;
  memory_factor: number | null;
  set?: "SET_I" | "SET_II";
  vm_distribution_factor?: number;
  score?: number;
}

export interface SimulateResult {
  decision: PlacementDecision;
  hosts: ScoredHost[];
}

export interface RequestForm {
  vm_id: number;
  cpu_model: "INTEL" | "AMD";
  lease_time_hours: number;
  requestor: string;
  request_type?: "USER" | "TOD";
}

/** The four provisioning steps in pipeline order, with display names. */
export const PIPELINE_STEPS: ReadonlyArray<{ key: keyof RequestRecord; label: string }> = [
  { key: "status_copy_vm", label: "Copy clone" },
  { key: "status_vm_up", label: "Boot instance" },
  { key: "status_ip_set", label: "Query address" },
  { key: "status_email_sent", label: "Notify requestor" },
];
