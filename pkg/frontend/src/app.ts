/** Browser wiring. State lives in ConsoleSession; this file only moves it
 * into the DOM and button clicks back out. */

import { buildPlotModel, fitViewBox, vehicleTriangle } from "./plot.js";
import { renderCatalog, renderNodes, renderTap, renderTranscript } from "./render.js";
import { RpcClient } from "./rpc.js";
import { ConsoleSession, stopToolFor } from "./session.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

function defaultUrl(): string {
  const saved = localStorage.getItem("neuronrt-url");
  return saved ?? "ws://127.0.0.1:8765";
}

let session: ConsoleSession | null = null;
let redrawQueued = false;

function scheduleRedraw(): void {
  if (redrawQueued) return;
  redrawQueued = true;
  requestAnimationFrame(() => {
    redrawQueued = false;
    redraw();
  });
}

function redraw(): void {
  if (!session) return;
  $("conn").textContent = session.conn;
  $("conn").dataset.state = session.conn;
  $("transcript").textContent = renderTranscript(session.transcript).join("\n");
  $("catalog").textContent = renderCatalog(session.catalog).join("\n");
  $("notices").textContent = session.notices.slice(-6).join("\n");
  drawNodes();
  drawTaps();
  drawPlot();
  ($("send") as HTMLButtonElement).disabled =
    !session.canSubmit(($("instruction") as HTMLInputElement).value);
}

function drawNodes(): void {
  const box = $("nodes");
  box.replaceChildren();
  const lines = renderNodes(session!.nodes);
  session!.nodes.forEach((node, i) => {
    const row = document.createElement("div");
    row.className = "node-row";
    const label = document.createElement("span");
    label.textContent = lines[i] ?? node.nodeId;
    row.appendChild(label);
    if (node.state === "running" && stopToolFor(node) !== null) {
      const stop = document.createElement("button");
      stop.textContent = "stop";
      stop.onclick = () => void session!.stopCapability(node.nodeId);
      row.appendChild(stop);
    }
    box.appendChild(row);
  });
  if (session!.nodes.length === 0) box.textContent = "(no nodes)";
}

function drawTaps(): void {
  const box = $("taps");
  box.replaceChildren();
  for (const feed of session!.taps.values()) {
    const pane = document.createElement("div");
    pane.className = "tap-pane";
    const head = document.createElement("div");
    const untap = document.createElement("button");
    untap.textContent = `untap ${feed.topic}`;
    untap.onclick = () => void session!.untapTopic(feed.topic);
    head.appendChild(untap);
    const pre = document.createElement("pre");
    pre.textContent = renderTap(feed, 12).join("\n");
    pane.append(head, pre);
    box.appendChild(pane);
  }
}

function drawPlot(): void {
  const svg = $("plot");
  const model = buildPlotModel(session!.taps.values());
  const vb = fitViewBox(model);
  // y flipped so +y points up on screen
  svg.setAttribute("viewBox", `${vb.x} ${-vb.y - vb.h} ${vb.w} ${vb.h}`);
  const parts: string[] = [];
  for (const v of model.vehicles) {
    const pts = vehicleTriangle(v)
      .map(([x, y]) => `${x},${-y}`)
      .join(" ");
    parts.push(`<polygon points="${pts}" class="vehicle"/>`);
    parts.push(`<text x="${v.x}" y="${-v.y - 0.25}" class="label">${v.id}</text>`);
  }
  if (model.trail && model.trail.points.length > 1) {
    const pts = model.trail.points.map(([x, y]) => `${x},${-y}`).join(" ");
    parts.push(`<polyline points="${pts}" class="trail${model.trail.grasped ? " grasped" : ""}"/>`);
  }
  for (const [x, y] of model.objects) {
    parts.push(`<circle cx="${x}" cy="${-y}" r="0.03" class="object"/>`);
  }
  svg.innerHTML = parts.join("");
}

async function connect(): Promise<void> {
  const url = ($("url") as HTMLInputElement).value.trim();
  localStorage.setItem("neuronrt-url", url);
  session?.client.close();
  const client = new RpcClient(url);
  session = new ConsoleSession(client);
  session.onChange(scheduleRedraw);
  await client.connect();
  await session.refreshCatalog();
  await session.refreshNodes();
  await session.refreshTopics();
  setInterval(() => {
    if (session && session.conn === "open") void session.refreshNodes();
  }, 1000);
  scheduleRedraw();
}

function main(): void {
  ($("url") as HTMLInputElement).value = defaultUrl();
  $("connect").onclick = () => void connect();
  $("instruction").oninput = scheduleRedraw;
  $("form").onsubmit = (ev) => {
    ev.preventDefault();
    const input = $("instruction") as HTMLInputElement;
    if (session?.canSubmit(input.value)) {
      void session.sendInstruction(input.value);
      input.value = "";
    }
  };
  $("estop").onclick = () => void session?.emergencyStop();
  $("tap-form").onsubmit = (ev) => {
    ev.preventDefault();
    const input = $("tap-topic") as HTMLInputElement;
    const topic = input.value.trim();
    if (topic && session) {
      void session.tapTopic(topic).catch(() => undefined);
      input.value = "";
    }
  };
}

main();
