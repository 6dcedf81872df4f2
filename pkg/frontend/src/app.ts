/** Page wiring: session browser, the three-step annotate-and-fuse flow. */
import { AnnotationApi, ApiError, FuseResult, SessionSummary } from "./api.js";
import { attachBrush, paintGrayscale, paintLayer, paintMask } from "./canvas.js";
import { parsePgm } from "./pgm.js";
import { buildLayerStack, decodeSession, expertColor, fusionView, legend,
         SessionGrids } from "./render.js";
import { encodeGrid, Grid } from "./rle.js";
import { ViewState } from "./viewstate.js";

const api = new AnnotationApi(
  typeof window === "undefined" ? "" :
    (window as unknown as { PIXELDEFER_API?: string }).PIXELDEFER_API ?? "");

interface AppState {
  view: ViewState | null;
  session: SessionSummary | null;
  grids: SessionGrids | null;
  truth: Grid | null;
  masks: Map<number, Grid>; // expert -> local correction mask
  fused: FuseResult | null;
}

const state: AppState = {
  view: null, session: null, grids: null, truth: null,
  masks: new Map(), fused: null,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function banner(message: string | null): void {
  const bar = el<HTMLDivElement>("banner");
  bar.textContent = message ?? "";
  bar.style.display = message ? "block" : "none";
}

function canvasFor(id: string, h: number, w: number): CanvasRenderingContext2D {
  const canvas = el<HTMLCanvasElement>(id);
  canvas.width = w;
  canvas.height = h;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("no 2d context");
  return ctx;
}

async function refreshSessionList(): Promise<void> {
  try {
    const { sessions } = await api.listSessions();
    const list = el<HTMLUListElement>("session-list");
    list.innerHTML = "";
    for (const entry of sessions) {
      const item = document.createElement("li");
      const link = document.createElement("a");
      link.href = "#";
      link.textContent = `${entry.session_id} (${entry.state}`
        + `${entry.has_truth ? ", with reference" : ""})`;
      link.addEventListener("click", (ev) => {
        ev.preventDefault();
        void loadSession(entry.session_id);
      });
      item.appendChild(link);
      list.appendChild(item);
    }
  } catch (err) {
    banner(`could not list sessions: ${err}`);
  }
}

export async function loadSession(id: string): Promise<void> {
  try {
    const session = await api.getSession(id);
    startSession(session);
  } catch (err) {
    banner(err instanceof ApiError && err.status === 404
      ? `session ${id} not found` : `failed to load session: ${err}`);
  }
}

function startSession(session: SessionSummary): void {
  state.session = session;
  state.view = new ViewState(session.session_id, session.expert_count);
  state.grids = decodeSession(session, state.truth);
  state.masks = new Map();
  state.fused = null;
  for (let j = 1; j <= session.expert_count; j++) {
    state.masks.set(j, Grid.empty(session.shape[0], session.shape[1]));
  }
  banner(null);
  el<HTMLDivElement>("workbench").style.display = "block";
  renderLegend();
  renderTabs();
  renderStep();
}

function renderLegend(): void {
  if (!state.session) return;
  const box = el<HTMLDivElement>("legend");
  box.innerHTML = "";
  for (const entry of legend(state.session.expert_count)) {
    const chip = document.createElement("span");
    chip.className = "chip";
    chip.style.background = entry.color;
    chip.textContent = entry.label;
    box.appendChild(chip);
  }
}

function renderTabs(): void {
  if (!state.session || !state.view) return;
  const tabs = el<HTMLDivElement>("expert-tabs");
  tabs.innerHTML = "";
  for (let j = 1; j <= state.session.expert_count; j++) {
    const button = document.createElement("button");
    button.textContent = `expert ${j}`;
    button.style.borderBottom = `3px solid ${expertColor(j)}`;
    button.disabled = state.view.activeExpert === j;
    button.addEventListener("click", () => {
      state.view?.setActiveExpert(j);
      renderTabs();
      renderStep();
    });
    tabs.appendChild(button);
  }
}

function base64Bytes(b64: string): ArrayBuffer {
  const raw = atob(b64);
  const bytes = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
  return bytes.buffer;
}

function renderOverlays(): void {
  if (!state.session || !state.grids || !state.view) return;
  const [h, w] = state.session.shape;
  const baseCtx = canvasFor("base-canvas", h, w);
  paintGrayscale(baseCtx, parsePgm(base64Bytes(state.session.previews.image_pgm_b64)));
  const ctx = canvasFor("overlay-canvas", h, w);
  ctx.clearRect(0, 0, w, h);
  const stack = buildLayerStack(state.grids, state.view.toggles);
  for (const layer of stack) {
    if (!layer.visible) continue;
    const scratch = document.createElement("canvas");
    scratch.width = w;
    scratch.height = h;
    const sctx = scratch.getContext("2d");
    if (!sctx) continue;
    paintLayer(sctx, layer);
    ctx.drawImage(scratch, 0, 0);
  }
}

function renderAnnotationCanvas(): void {
  if (!state.session || !state.view || !state.grids) return;
  const [h, w] = state.session.shape;
  const j = state.view.activeExpert;
  const ctx = canvasFor("draw-canvas", h, w);
  ctx.clearRect(0, 0, w, h);
  paintMask(ctx, state.grids.regions[j - 1], expertColor(j), 0.25);
  const mask = state.masks.get(j);
  if (mask) paintMask(ctx, mask, "#ffffff", 0.8);
  el<HTMLSpanElement>("mask-count").textContent =
    `${mask?.countOn() ?? 0} px painted in expert ${j}'s region`;
}

function renderStep(): void {
  if (!state.view) return;
  for (const step of [1, 2, 3]) {
    el<HTMLDivElement>(`step-${step}`).style.display =
      state.view.step === step ? "block" : "none";
  }
  el<HTMLSpanElement>("step-label").textContent =
    `session ${state.view.sessionId} - step ${state.view.step}`;
  renderOverlays();
  if (state.view.step === 2) renderAnnotationCanvas();
  if (state.view.step === 3) renderFusion();
}

async function submitActive(): Promise<void> {
  if (!state.session || !state.view) return;
  const j = state.view.activeExpert;
  const mask = state.masks.get(j);
  if (!mask) return;
  try {
    const result = await api.submitCorrection(
      state.session.session_id, j, encodeGrid(mask));
    el<HTMLSpanElement>("submit-result").textContent =
      `expert ${j}: ${result.accepted_pixels} px accepted`;
    banner(null);
  } catch (err) {
    // keep the local mask and surface a retry affordance
    banner(`submission failed (${err}); your strokes are kept, retry when ready`);
  }
}

async function fuseNow(): Promise<void> {
  if (!state.session || !state.view) return;
  try {
    state.fused = await api.fuse(state.session.session_id);
    state.view.showFusion();
    renderStep();
  } catch (err) {
    banner(`fuse failed: ${err}`);
  }
}

function renderFusion(): void {
  if (!state.session || !state.fused) return;
  const [h, w] = state.session.shape;
  const view = fusionView(state.fused, state.truth);
  const fusedCtx = canvasFor("fused-canvas", h, w);
  paintGrayscale(fusedCtx, scaleMask(view.fusedMask));
  const truthCtx = canvasFor("truth-canvas", h, w);
  if (view.truth) {
    paintGrayscale(truthCtx, scaleMask(view.truth));
    el<HTMLDivElement>("no-reference").style.display = "none";
  } else {
    truthCtx.clearRect(0, 0, w, h);
    el<HTMLDivElement>("no-reference").style.display = "block";
    el<HTMLDivElement>("no-reference").textContent =
      view.notice ?? "no reference";
  }
  const table = el<HTMLTableElement>("metric-table");
  table.innerHTML = "<tr><th>branch</th><th>DSC</th><th>Jaccard</th>"
    + "<th>Sensitivity</th><th>pixels</th></tr>";
  if (view.rows) {
    for (const row of view.rows) {
      const tr = document.createElement("tr");
      tr.innerHTML = `<td>${row.branch}</td><td>${row.dsc}</td>`
        + `<td>${row.jaccard}</td><td>${row.sensitivity}</td><td>${row.pixels}</td>`;
      table.appendChild(tr);
    }
  }
  el<HTMLSpanElement>("system-dsc").textContent = `System DSC ${view.systemDsc}`;
}

function scaleMask(mask: Grid): Grid {
  const out = mask.clone();
  for (let i = 0; i < out.data.length; i++) out.data[i] = out.data[i] ? 255 : 0;
  return out;
}

async function createFromUpload(): Promise<void> {
  const imageInput = el<HTMLInputElement>("image-file");
  const truthInput = el<HTMLInputElement>("truth-file");
  const imageFile = imageInput.files?.[0];
  if (!imageFile) {
    banner("choose a PGM image first");
    return;
  }
  try {
    const image = parsePgm(await imageFile.arrayBuffer());
    const request: Parameters<AnnotationApi["createSession"]>[0] = {
      image: encodeGrid(image),
    };
    const truthFile = truthInput.files?.[0];
    if (truthFile) {
      const truth = parsePgm(await truthFile.arrayBuffer());
      for (let i = 0; i < truth.data.length; i++) {
        truth.data[i] = truth.data[i] > 127 ? 1 : 0;
      }
      request.truth = encodeGrid(truth);
      state.truth = truth;
    } else {
      state.truth = null;
    }
    const session = await api.createSession(request);
    startSession(session);
    void refreshSessionList();
  } catch (err) {
    banner(`could not create session: ${err}`);
  }
}

export function main(): void {
  el<HTMLButtonElement>("refresh-sessions").addEventListener("click",
    () => void refreshSessionList());
  el<HTMLButtonElement>("create-session").addEventListener("click",
    () => void createFromUpload());
  el<HTMLButtonElement>("to-step-2").addEventListener("click", () => {
    state.view?.beginAnnotation();
    renderStep();
  });
  el<HTMLButtonElement>("submit-correction").addEventListener("click",
    () => void submitActive());
  el<HTMLButtonElement>("fuse").addEventListener("click", () => void fuseNow());
  el<HTMLInputElement>("brush-size").addEventListener("input", (ev) => {
    state.view?.setBrushRadius(Number((ev.target as HTMLInputElement).value));
  });
  el<HTMLInputElement>("eraser").addEventListener("change", (ev) => {
    if (state.view) state.view.eraser = (ev.target as HTMLInputElement).checked;
  });
  for (const key of ["prediction", "regions", "heatmap", "groundTruth"] as const) {
    el<HTMLInputElement>(`toggle-${key}`).addEventListener("change", () => {
      state.view?.toggle(key);
      renderStep();
    });
  }
  attachBrush(
    el<HTMLCanvasElement>("draw-canvas"),
    () => {
      if (!state.view || !state.grids) return null;
      const j = state.view.activeExpert;
      const mask = state.masks.get(j);
      if (!mask) return null;
      return { state: state.view, mask, region: state.grids.regions[j - 1] };
    },
    renderAnnotationCanvas,
  );
  void refreshSessionList();
}

if (typeof document !== "undefined" && document.getElementById("workbench")) {
  main();
}
