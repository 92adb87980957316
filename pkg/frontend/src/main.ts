/** Console wiring: registry discovery, one control session (slices,
 * parameters, commands) plus an optional second session dedicated to
 * volume frames for the structure-factor map. Sessions are independent
 * on the service side, which is also what keeps the one-subscription-
 * per-field rule from tangling the slice and spectrum views.
 *
 * Rendering is pulled by requestAnimationFrame with latest-frame-wins,
 * so a fast emitter can never pile frames up behind the canvas. */

import { Session, Frame, ParamRow } from "./client";
import { WsTransport, wsUrl } from "./transport";
import { listRuns } from "./registry";
import { drawField, drawSpectrum } from "./render";
import { ColormapName } from "./colormap";
import { xSummedSpectrum, countPeaks } from "./spectrum";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing #${id}`);
  return el as T;
}

const ui = {
  connState: byId<HTMLSpanElement>("conn-state"),
  runLine: byId<HTMLSpanElement>("run-line"),
  registryUrl: byId<HTMLInputElement>("registry-url"),
  registryPoll: byId<HTMLButtonElement>("registry-poll"),
  runList: byId<HTMLUListElement>("run-list"),
  endpoint: byId<HTMLInputElement>("endpoint"),
  attach: byId<HTMLButtonElement>("attach"),
  detach: byId<HTMLButtonElement>("detach"),
  attachError: byId<HTMLDivElement>("attach-error"),
  commandRow: byId<HTMLDivElement>("command-row"),
  commandLog: byId<HTMLDivElement>("command-log"),
  paramBody: byId<HTMLTableElement>("param-table").querySelector("tbody")!,
  paramError: byId<HTMLDivElement>("param-error"),
  sliceField: byId<HTMLSelectElement>("slice-field"),
  sliceAxis: byId<HTMLSelectElement>("slice-axis"),
  sliceIndex: byId<HTMLInputElement>("slice-index"),
  sliceMap: byId<HTMLSelectElement>("slice-map"),
  overlayField: byId<HTMLSelectElement>("overlay-field"),
  sliceCanvas: byId<HTMLCanvasElement>("slice-canvas"),
  sliceCaption: byId<HTMLDivElement>("slice-caption"),
  specField: byId<HTMLSelectElement>("spec-field"),
  specStep: byId<HTMLSelectElement>("spec-step"),
  specOn: byId<HTMLInputElement>("spec-on"),
  specCanvas: byId<HTMLCanvasElement>("spec-canvas"),
  specCaption: byId<HTMLDivElement>("spec-caption"),
};

let session: Session | null = null;
let specSession: Session | null = null;
let pingTimer: number | undefined;

// latest-wins frame slots, drained by the render loop
let sliceFrame: Frame | null = null;
let maskFrame: Frame | null = null;
let volumeFrame: Frame | null = null;
let dirty = false;

function setConnected(on: boolean, why = ""): void {
  ui.connState.textContent = on ? "attached" : why || "detached";
  ui.connState.className = `badge ${on ? "on" : "off"}`;
  ui.detach.disabled = !on;
  ui.commandRow
    .querySelectorAll("button")
    .forEach((b) => (b.disabled = !on));
}

function logCommand(text: string, isError = false): void {
  const div = document.createElement("div");
  div.textContent = text;
  if (isError) div.className = "err";
  ui.commandLog.prepend(div);
  while (ui.commandLog.childElementCount > 40) {
    ui.commandLog.lastElementChild?.remove();
  }
}

function updateRunLine(): void {
  if (session === null || !session.connected) {
    ui.runLine.textContent = "";
    return;
  }
  const s = session;
  ui.runLine.textContent =
    `${s.runId}  ${s.dims.join("×")}  t=${s.timestep}` +
    `${s.paused ? "  [paused]" : ""}  max=${s.maxSteps}`;
}

// -- parameter table ----------------------------------------------------

function renderParams(rows: ParamRow[]): void {
  ui.paramBody.textContent = "";
  for (const row of rows) {
    const tr = document.createElement("tr");
    const name = document.createElement("td");
    name.textContent = row.desc.name;
    tr.appendChild(name);

    const val = document.createElement("td");
    if (row.desc.mutable) {
      const input = document.createElement("input");
      input.value = String(row.pending ?? row.desc.value);
      input.title = `${row.desc.kind} in [${row.desc.lo}, ${row.desc.hi}]`;
      input.addEventListener("change", () => {
        if (session === null) return;
        ui.paramError.textContent = "";
        const raw = input.value.trim();
        const num = Number(raw);
        session.setParam(
          row.desc.name,
          row.desc.kind === "enum" || Number.isNaN(num) ? raw : num,
        );
      });
      val.appendChild(input);
    } else {
      val.textContent = String(row.desc.value);
      val.className = "immutable";
    }
    tr.appendChild(val);

    const state = document.createElement("td");
    if (row.pending !== undefined) {
      state.textContent = "pending";
      state.className = "pending";
    }
    tr.appendChild(state);
    ui.paramBody.appendChild(tr);
  }
}

// -- subscriptions --------------------------------------------------------

function axisExtent(axis: string): number {
  if (session === null) return 1;
  const [nx, ny, nz] = session.dims;
  return axis === "x" ? nx : axis === "y" ? ny : nz;
}

let subscribedSlice = "";
let subscribedMask = "";

function resubscribeSlices(): void {
  if (session === null || !session.connected) return;
  const field = ui.sliceField.value;
  const axis = ui.sliceAxis.value as "x" | "y" | "z";
  const lim = axisExtent(axis);
  let index = Math.max(0, Math.min(lim - 1, Number(ui.sliceIndex.value) | 0));
  ui.sliceIndex.value = String(index);
  ui.sliceIndex.max = String(lim - 1);

  const overlay = ui.overlayField.value;
  if (subscribedSlice && subscribedSlice !== field &&
      subscribedSlice !== overlay) {
    session.unsubscribe(subscribedSlice);
  }
  if (subscribedMask && subscribedMask !== overlay &&
      subscribedMask !== field) {
    session.unsubscribe(subscribedMask);
  }
  sliceFrame = maskFrame = null;
  session.subscribeSlice(field, axis, index);
  subscribedSlice = field;
  if (overlay !== "") {
    session.subscribeSlice(overlay, axis, index);
    subscribedMask = overlay;
  } else {
    subscribedMask = "";
  }
  session.command("emit"); // a first frame without waiting a period
}

function resubscribeSpectrum(): void {
  if (specSession !== null) {
    specSession.detach();
    specSession = null;
  }
  volumeFrame = null;
  if (!ui.specOn.checked || session === null || !session.connected) return;
  const endpoint = ui.endpoint.value;
  const field = ui.specField.value;
  const step = Number(ui.specStep.value);
  specSession = new Session(new WsTransport(wsUrl(endpoint)), {
    welcome: () => {
      specSession?.subscribeVolume(field, step);
      specSession?.command("emit");
    },
    frame: (f) => {
      if (f.header.kind === "volume") {
        volumeFrame = f;
        dirty = true;
      }
    },
    close: () => {
      ui.specCaption.textContent = "spectrum session closed";
    },
  });
}

// -- attach / detach -------------------------------------------------------

function fillFieldSelectors(fields: string[]): void {
  for (const sel of [ui.sliceField, ui.specField]) {
    sel.textContent = "";
    for (const f of fields) {
      const opt = document.createElement("option");
      opt.textContent = f;
      sel.appendChild(opt);
    }
  }
  ui.overlayField.textContent = "";
  const none = document.createElement("option");
  none.value = "";
  none.textContent = "none";
  ui.overlayField.appendChild(none);
  for (const f of fields) {
    const opt = document.createElement("option");
    opt.textContent = f;
    ui.overlayField.appendChild(opt);
  }
}

function attach(endpoint: string): void {
  detach();
  ui.attachError.textContent = "";
  let transport: WsTransport;
  try {
    transport = new WsTransport(wsUrl(endpoint));
  } catch (e) {
    ui.attachError.textContent = String(e);
    return;
  }
  session = new Session(transport, {
    welcome: (w) => {
      setConnected(true);
      fillFieldSelectors(w.fields);
      updateRunLine();
      resubscribeSlices();
    },
    params: renderParams,
    status: () => {
      updateRunLine();
    },
    ack: (a) => {
      if (a.cmd === "set") {
        logCommand(`t=${a.timestep} set ${a.name} = ${a.value}`);
      } else if (a.cmd === "checkpoint") {
        logCommand(`t=${a.timestep} checkpoint ${a.path ?? "(failed)"}`);
      } else if (a.cmd !== "subscribe" && a.cmd !== "unsubscribe") {
        logCommand(`t=${a.timestep} ${a.cmd}`);
      }
      updateRunLine();
    },
    error: (e) => {
      const where = e.name ?? e.field ?? e.cmd ?? "";
      ui.paramError.textContent = `${where}: ${e.reason}`;
      logCommand(`error ${where}: ${e.reason}`, true);
    },
    frame: (f) => {
      if (f.header.kind !== "slice") return;
      if (f.header.field === subscribedMask && subscribedMask !== "") {
        maskFrame = f;
      }
      if (f.header.field === subscribedSlice) sliceFrame = f;
      dirty = true;
    },
    close: (reason) => {
      setConnected(false, `lost: ${reason}`);
      updateRunLine();
    },
  });
  pingTimer = window.setInterval(() => {
    session?.ping();
    updateRunLine();
  }, 2000);
}

function detach(): void {
  if (pingTimer !== undefined) window.clearInterval(pingTimer);
  pingTimer = undefined;
  if (specSession !== null) {
    specSession.detach();
    specSession = null;
  }
  if (session !== null) {
    session.detach();
    session = null;
  }
  sliceFrame = maskFrame = volumeFrame = null;
  subscribedSlice = subscribedMask = "";
  setConnected(false);
  updateRunLine();
}

// -- registry ----------------------------------------------------------------

async function pollRegistry(): Promise<void> {
  const url = ui.registryUrl.value.trim();
  if (url === "") return;
  ui.runList.textContent = "";
  let runs;
  try {
    runs = await listRuns(url);
  } catch (e) {
    const li = document.createElement("li");
    li.textContent = String(e);
    li.className = "dim";
    ui.runList.appendChild(li);
    return;
  }
  if (runs.length === 0) {
    const li = document.createElement("li");
    li.textContent = "(no live runs)";
    li.className = "dim";
    ui.runList.appendChild(li);
  }
  for (const run of runs) {
    const li = document.createElement("li");
    const comps = run.meta.components?.join(",") ?? "";
    li.innerHTML =
      `<strong>${run.run_id}</strong> ` +
      `<span class="dim">${run.dims.join("×")} ${comps}` +
      ` age ${run.age.toFixed(0)}s</span>`;
    if (run.http_port !== null) {
      li.title = `attach ${run.host}:${run.http_port}`;
      li.addEventListener("click", () => {
        ui.endpoint.value = `${run.host}:${run.http_port}`;
        attach(ui.endpoint.value);
      });
    } else {
      li.title = "run has no browser port (tcp only)";
      li.classList.add("dim");
    }
    ui.runList.appendChild(li);
  }
}

// -- render loop ---------------------------------------------------------------

function renderTick(): void {
  requestAnimationFrame(renderTick);
  if (!dirty) return;
  dirty = false;

  if (sliceFrame !== null) {
    const f = sliceFrame;
    const [h, w] = f.header.shape;
    const mask =
      maskFrame !== null &&
      maskFrame.header.shape[0] === h &&
      maskFrame.header.shape[1] === w
        ? maskFrame.data
        : undefined;
    const scale = drawField(ui.sliceCanvas, f.data, h, w, {
      colormap: ui.sliceMap.value as ColormapName,
      mask,
    });
    ui.sliceCaption.textContent =
      `${f.header.field} ${f.header.axis}=${f.header.index} ` +
      `t=${f.header.timestep}  [${scale.lo.toPrecision(3)}, ` +
      `${scale.hi.toPrecision(3)}]` +
      (mask !== undefined ? `  overlay ${maskFrame!.header.field}` : "");
  }

  if (volumeFrame !== null) {
    const f = volumeFrame;
    volumeFrame = null; // spectra are costly; compute each volume once
    const [nz, ny, nx] = f.header.shape;
    const spec = xSummedSpectrum(f.data, [nx, ny, nz]);
    drawSpectrum(ui.specCanvas, spec.map, spec.nz, spec.ny);
    ui.specCaption.textContent =
      `${f.header.field} t=${f.header.timestep}  ` +
      `X_max=${spec.max.toPrecision(4)}  peaks=${countPeaks(spec)}` +
      (f.header.step ? `  (1/${f.header.step} sites)` : "");
  }
}

// -- boot -------------------------------------------------------------------------

function boot(): void {
  const q = new URLSearchParams(location.search);
  ui.registryUrl.value = q.get("registry") ?? "";
  ui.endpoint.value =
    q.get("endpoint") ??
    (location.protocol.startsWith("http") ? location.host : "");

  ui.attach.addEventListener("click", () => attach(ui.endpoint.value));
  ui.detach.addEventListener("click", detach);
  ui.registryPoll.addEventListener("click", pollRegistry);
  window.setInterval(() => {
    if (ui.registryUrl.value.trim() !== "") void pollRegistry();
  }, 10000);

  ui.commandRow.querySelectorAll("button").forEach((b) =>
    b.addEventListener("click", () => {
      session?.command(b.dataset.verb as never);
    }),
  );

  for (const el of [ui.sliceField, ui.sliceAxis, ui.sliceIndex]) {
    el.addEventListener("change", resubscribeSlices);
  }
  ui.overlayField.addEventListener("change", resubscribeSlices);
  ui.sliceMap.addEventListener("change", () => {
    dirty = true;
  });
  for (const el of [ui.specField, ui.specStep, ui.specOn]) {
    el.addEventListener("change", resubscribeSpectrum);
  }

  setConnected(false);
  if (q.get("registry")) void pollRegistry();
  if (q.get("endpoint")) attach(ui.endpoint.value);
  requestAnimationFrame(renderTick);
}

boot();
