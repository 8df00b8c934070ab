/** Browser shell: wires DOM controls to a UiSession.
 *
 * All rendering happens server-side; this file owns only interaction
 * state (drag accumulation, view transform, reconnect timer).
 */

import {
  DEFAULT_VIEW,
  clampZoom,
  dragLightPatch,
  panBy,
  shadingBasisPatch,
  sliderToTime,
} from "./controls.js";
import type { BasisChoice, ViewState } from "./controls.js";
import { UiSession } from "./session.js";
import { makeTransport } from "./transport.js";
import type { LiveFrame } from "./protocol.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node as T;
}

const serverInput = el<HTMLInputElement>("server");
const connectBtn = el<HTMLButtonElement>("connect");
const banner = el<HTMLDivElement>("banner");
const revisionOut = el<HTMLSpanElement>("revision");
const canvas = el<HTMLImageElement>("frame");
const viewport = el<HTMLDivElement>("viewport");
const timeSlider = el<HTMLInputElement>("time");
const timeOut = el<HTMLSpanElement>("time-value");
const basisSelect = el<HTMLSelectElement>("basis");
const lightSelect = el<HTMLSelectElement>("light");

let session: UiSession | null = null;
let frameUrl: string | null = null;
let view: ViewState = { ...DEFAULT_VIEW };
let reconnectTimer: number | null = null;

function showBanner(text: string, kind: "error" | "info" | "none"): void {
  banner.textContent = text;
  banner.className = kind === "none" ? "hidden" : kind;
}

function applyView(): void {
  canvas.style.transform =
    `translate(${view.panX}px, ${view.panY}px) scale(${view.zoom})`;
}

function showFrame(frame: LiveFrame, png: Uint8Array): void {
  const bytes = new Uint8Array(new ArrayBuffer(png.byteLength));
  bytes.set(png);
  const url = URL.createObjectURL(new Blob([bytes], { type: "image/png" }));
  canvas.src = url;
  if (frameUrl) {
    URL.revokeObjectURL(frameUrl);
  }
  frameUrl = url;
  revisionOut.textContent = `r${frame.revision} t=${frame.t.toFixed(2)}`;
}

function scheduleReconnect(): void {
  if (reconnectTimer !== null || !session) {
    return;
  }
  reconnectTimer = window.setTimeout(() => {
    reconnectTimer = null;
    session
      ?.reconnect()
      .then(() => showBanner("", "none"))
      .catch(() => {
        showBanner("server unreachable, retrying", "error");
        scheduleReconnect();
      });
  }, 1000);
}

function populateLights(): void {
  const doc = session?.document();
  const lights = Array.isArray(doc?.["lights"]) ? doc["lights"] : [];
  lightSelect.innerHTML = "";
  lights.forEach((light, i) => {
    const opt = document.createElement("option");
    const kind =
      typeof light === "object" && light !== null && !Array.isArray(light)
        ? String(light["kind"])
        : "?";
    opt.value = String(i);
    opt.textContent = `${i}: ${kind}`;
    lightSelect.appendChild(opt);
  });
}

async function connect(): Promise<void> {
  session?.close();
  showBanner("connecting", "info");
  try {
    session = await UiSession.connect(
      makeTransport(serverInput.value),
      {
        onFrame: showFrame,
        onRevision: () => populateLights(),
        onError: (message, issues) =>
          showBanner(`${message}: ${issues.join("; ")}`, "error"),
        onStatus: (status) => {
          if (status === "offline") {
            showBanner("connection lost, reconnecting", "error");
            scheduleReconnect();
          } else if (status === "connected") {
            showBanner("", "none");
          }
        },
      },
    );
    showBanner("", "none");
    populateLights();
  } catch {
    session = null;
    showBanner("could not reach server", "error");
  }
}

connectBtn.addEventListener("click", () => void connect());

// light dragging: left button on the frame
let dragging = false;
let lastX = 0;
let lastY = 0;
canvas.addEventListener("pointerdown", (ev) => {
  dragging = true;
  lastX = ev.clientX;
  lastY = ev.clientY;
  canvas.setPointerCapture(ev.pointerId);
});
canvas.addEventListener("pointermove", (ev) => {
  if (!dragging || !session) {
    return;
  }
  const dx = ev.clientX - lastX;
  const dy = ev.clientY - lastY;
  lastX = ev.clientX;
  lastY = ev.clientY;
  if (ev.shiftKey) {
    view = panBy(view, dx, dy);
    applyView();
    return;
  }
  session.edit(dragLightPatch(
    session.document(),
    Number(lightSelect.value || 0),
    dx,
    dy,
    { width: canvas.clientWidth || 1, height: canvas.clientHeight || 1 },
  ));
});
canvas.addEventListener("pointerup", () => {
  dragging = false;
});

viewport.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  view = { ...view, zoom: clampZoom(view.zoom * (ev.deltaY < 0 ? 1.1 : 0.9)) };
  applyView();
});

timeSlider.addEventListener("input", () => {
  const t = sliderToTime(Number(timeSlider.value) / 100);
  timeOut.textContent = t.toFixed(2);
  session?.setTime(t);
});

basisSelect.addEventListener("change", () => {
  if (!session) {
    return;
  }
  const choice: BasisChoice =
    basisSelect.value === "linear"
      ? { kind: "linear" }
      : basisSelect.value === "bspline0"
        ? { kind: "bspline0", knots: [0, 0.25, 0.5, 0.75, 1] }
        : { kind: "bezier", degree: Number(basisSelect.value.slice(6)) };
  session.edit(shadingBasisPatch(choice));
});

void connect();
