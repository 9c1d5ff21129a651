/** DOM shell: a hash-routed single page over the pure views.
 *
 * #/            request form
 * #/requests/N  status page with live checklist and lease countdown
 * #/dashboard   fleet table plus placement dry-run panel
 */

import { ApiError, VitlApi } from "../api.js";
import type { RequestForm } from "../model.js";
import { CoalescedPoller } from "../poller.js";
import {
  escapeHtml,
  renderDryRunPanel,
  renderHostsTable,
  renderImageOptions,
  renderStatusPage,
} from "../views.js";

const POLL_MS = 2000;

function settings(): { baseUrl: string; token: string } {
  return {
    baseUrl: localStorage.getItem("vitl.baseUrl") ?? "http://127.0.0.1:8095",
    token: localStorage.getItem("vitl.token") ?? "",
  };
}

function api(): VitlApi {
  const current = settings();
  return new VitlApi({ baseUrl: current.baseUrl, token: current.token });
}

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node;
}

let activePoller: CoalescedPoller | null = null;

function swapPoller(poller: CoalescedPoller | null): void {
  activePoller?.stop();
  activePoller = poller;
  poller?.start();
}

function banner(message: string): string {
  return `<div class="banner banner-error">${escapeHtml(message)}</div>`;
}

// -- settings bar -------------------------------------------------------------

function renderSettingsBar(): void {
  const current = settings();
  el("settings").innerHTML =
    `<label>service <input id="cfg-base" value="${escapeHtml(current.baseUrl)}"></label>` +
    `<label>token <input id="cfg-token" value="${escapeHtml(current.token)}" type="password"></label>` +
    `<button id="cfg-save">save</button>` +
    `<nav><a href="#/">request</a> | <a href="#/dashboard">dashboard</a></nav>`;
  el("cfg-save").onclick = () => {
    localStorage.setItem("vitl.baseUrl", (el("cfg-base") as HTMLInputElement).value.trim());
    localStorage.setItem("vitl.token", (el("cfg-token") as HTMLInputElement).value.trim());
    route();
  };
}

// -- request form ----------------------------------------------------------------

async function showForm(): Promise<void> {
  swapPoller(null);
  const main = el("main");
  main.innerHTML = "<p>loading images…</p>";
  let options: string;
  try {
    const { images } = await api().listImages();
    options = renderImageOptions(images);
  } catch (err) {
    main.innerHTML = banner(`Cannot load the image list: ${String(err)}`);
    return;
  }
  main.innerHTML =
    `<h2>Request an instance</h2>` +
    `<form id="request-form">` +
    `<label>distribution <select name="vm_id">${options}</select></label>` +
    `<label>processor <select name="cpu_model"><option>INTEL</option><option>AMD</option></select></label>` +
    `<label>username <input name="requestor" required maxlength="30"></label>` +
    `<label>lease (hours) <input name="lease_time_hours" type="number" value="2" min="1"></label>` +
    `<button type="submit">Submit</button>` +
    `<div id="form-errors"></div>` +
    `</form>`;
  el("request-form").onsubmit = async (event) => {
    event.preventDefault();
    const data = new FormData(event.target as HTMLFormElement);
    const lease = Number(data.get("lease_time_hours"));
    if (lease < 1) {
      el("form-errors").innerHTML = banner("Lease must be at least one hour.");
      return;
    }
    const form: RequestForm = {
      vm_id: Number(data.get("vm_id")),
      cpu_model: String(data.get("cpu_model")) as RequestForm["cpu_model"],
      lease_time_hours: lease,
      requestor: String(data.get("requestor")),
    };
    try {
      const created = await api().submitRequest(form);
      location.hash = `#/requests/${created.job_id}`;
    } catch (err) {
      const detail =
        err instanceof ApiError && err.code === "invalid-token"
          ? "The service rejected the token; set it in the bar above."
          : String(err);
      el("form-errors").innerHTML = banner(detail);
    }
  };
}

// -- status page -------------------------------------------------------------------

function showRequest(jobId: number): void {
  const main = el("main");
  const client = api();
  const poller = new CoalescedPoller(async () => {
    try {
      const { request } = await client.getRequest(jobId);
      main.innerHTML = renderStatusPage(request);
      const stop = main.querySelector<HTMLButtonElement>("button.stop");
      if (stop) {
        stop.onclick = async () => {
          stop.disabled = true;
          try {
            await client.stopRequest(jobId);
          } finally {
            void poller.tick();
          }
        };
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        swapPoller(null);
        main.innerHTML = banner(`Request ${jobId} no longer exists.`);
        return;
      }
      main.innerHTML = (main.innerHTML || "") + banner(`Refresh failed: ${String(err)}`);
    }
  }, POLL_MS);
  swapPoller(poller);
}

// -- dashboard ---------------------------------------------------------------------

function showDashboard(): void {
  const main = el("main");
  main.innerHTML =
    `<h2>Fleet</h2><div id="fleet">loading…</div>` +
    `<h2>Placement dry run</h2>` +
    `<form id="dryrun-form">` +
    `<label>processor <select name="cpu_model"><option>INTEL</option><option>AMD</option></select></label>` +
    `<label>memory (MB) <input name="required_mem" type="number" value="1024" min="1"></label>` +
    `<button type="submit">Score hosts</button>` +
    `</form><div id="dryrun"></div>`;
  const client = api();
  const fleet = el("fleet");
  const poller = new CoalescedPoller(async () => {
    try {
      const { hosts, now } = await client.listHosts();
      fleet.innerHTML = renderHostsTable(hosts, now);
      fleet.dataset["stale"] = "";
    } catch {
      fleet.dataset["stale"] = "1";
      fleet.innerHTML =
        banner("Service unreachable; showing the last loaded fleet.") + fleet.innerHTML;
    }
  }, POLL_MS);
  swapPoller(poller);
  el("dryrun-form").onsubmit = async (event) => {
    event.preventDefault();
    const data = new FormData(event.target as HTMLFormElement);
    try {
      const result = await client.simulatePlacement({
        cpu_model: String(data.get("cpu_model")),
        required_mem: Number(data.get("required_mem")),
      });
      el("dryrun").innerHTML = renderDryRunPanel(result);
    } catch (err) {
      el("dryrun").innerHTML = banner(String(err));
    }
  };
}

// -- router ------------------------------------------------------------------------

function route(): void {
  renderSettingsBar();
  const hash = location.hash || "#/";
  const request = hash.match(/^#\/requests\/(\d+)$/);
  if (request) {
    showRequest(Number(request[1]));
  } else if (hash === "#/dashboard") {
    showDashboard();
  } else {
    void showForm();
  }
}

window.addEventListener("hashchange", route);
window.addEventListener("DOMContentLoaded", route);
