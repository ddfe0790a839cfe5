/** Console state: the one place UI panels read from.
 *
 * Everything here mutates world state only through tools/call and
 * session/run; the refresh* methods and plot feeds are read paths.
 */

import { RpcCallError, RpcClient, type ConnState } from "./rpc.js";
import { TapFeed, envelopeFromWire, type EnvelopeView } from "./tap.js";

export interface ToolView {
  name: string;
  title: string;
  description: string;
  inputSchema: Record<string, unknown>;
}

export interface CatalogView {
  revision: number;
  tools: ToolView[];
}

export interface NodeView {
  nodeId: string;
  kind: string;
  state: string;
  reason: string | null;
  startedAtNs: number;
}

export interface StepView {
  tool: string;
  arguments: Record<string, unknown>;
  ok: boolean;
  result?: unknown;
  error?: { code?: string; message?: string };
  wallMs: number;
}

export interface TranscriptView {
  instruction: string;
  status: "running" | "done";
  outcome: string | null; // 'completed' | 'error' once done
  pathDecision: string | null;
  steps: StepView[];
  cleanup: StepView[];
  error: string | null;
}

export interface StopResult {
  nodeId: string;
  tool: string;
  ok: boolean;
  detail: unknown;
}

export interface EmergencyStopReport {
  stopped: StopResult[];
  twistSeq: number | null;
}

const CAPABILITY_KINDS = new Set(["perception", "inference", "control"]);

export const ZERO_TWIST = {
  linear: { x: 0, y: 0, z: 0 },
  angular: { x: 0, y: 0, z: 0 },
};

function stepFromWire(step: Record<string, any>): StepView {
  return {
    tool: step.tool,
    arguments: step.arguments ?? {},
    ok: Boolean(step.ok),
    result: step.result,
    error: step.error,
    wallMs: Number(step.wall_ms ?? 0),
  };
}

/** Which stop tool retires this node, if any. Platform nodes have none. */
export function stopToolFor(node: NodeView): { name: string; arguments: Record<string, unknown> } | null {
  if (node.kind === "perception" && node.nodeId.startsWith("camera-")) {
    return { name: "stop_camera", arguments: { camera_id: node.nodeId.slice("camera-".length) } };
  }
  if (node.kind === "inference") return { name: "stop_vla_inference", arguments: {} };
  if (node.kind === "control") return { name: "stop_controller", arguments: {} };
  return null;
}

export class ConsoleSession {
  conn: ConnState;
  catalog: CatalogView | null = null;
  nodes: NodeView[] = [];
  topics: Record<string, string> = {};
  services: Record<string, string> = {};
  transcript: TranscriptView | null = null;
  taps = new Map<string, TapFeed>();
  notices: string[] = [];

  private byTapId = new Map<string, TapFeed>();
  private changeHandlers: Array<() => void> = [];

  constructor(readonly client: RpcClient) {
    this.conn = client.state;
    client.onState((s) => {
      this.conn = s;
      if (s !== "open") {
        for (const feed of this.taps.values()) feed.live = false;
      }
      if (s === "open") void this.retap();
      this.changed();
    });
    client.onNotification((method, params) => {
      if (method === "topics/envelope") this.onEnvelope(params);
      else if (method === "session/step") this.onStep(params);
    });
  }

  onChange(handler: () => void): () => void {
    this.changeHandlers.push(handler);
    return () => {
      this.changeHandlers = this.changeHandlers.filter((h) => h !== handler);
    };
  }

  // ------------------------------------------------------------ read paths

  async refreshCatalog(): Promise<CatalogView> {
    const r = await this.client.call("tools/list");
    this.catalog = { revision: r.revision, tools: r.tools };
    this.changed();
    return this.catalog;
  }

  async refreshNodes(): Promise<NodeView[]> {
    const r = await this.client.call("status/nodes");
    this.nodes = (r.nodes as Array<Record<string, any>>).map((n) => ({
      nodeId: n.node_id,
      kind: n.kind,
      state: n.state,
      reason: n.reason ?? null,
      startedAtNs: Number(n.started_at_ns ?? 0),
    }));
    this.changed();
    return this.nodes;
  }

  async refreshTopics(): Promise<Record<string, string>> {
    const r = await this.client.call("status/topics");
    this.topics = r.topics ?? {};
    this.services = r.services ?? {};
    this.changed();
    return this.topics;
  }

  runningCapabilities(): NodeView[] {
    return this.nodes.filter(
      (n) => n.state === "running" && CAPABILITY_KINDS.has(n.kind),
    );
  }

  // ---------------------------------------------------------- instructions

  canSubmit(text: string): boolean {
    return text.trim().length > 0 && this.conn === "open";
  }

  /** Submit an instruction; steps land on the transcript as they happen. */
  async sendInstruction(text: string, timeoutMs = 120_000): Promise<TranscriptView> {
    const instruction = text.trim();
    if (!instruction) throw new Error("empty instruction");
    const view: TranscriptView = {
      instruction,
      status: "running",
      outcome: null,
      pathDecision: null,
      steps: [],
      cleanup: [],
      error: null,
    };
    this.transcript = view;
    this.changed();
    try {
      const r = await this.client.call("session/run", { instruction }, timeoutMs);
      view.status = "done";
      view.outcome = r.outcome;
      view.pathDecision = r.path_decision;
      view.steps = (r.steps as Array<Record<string, any>>).map(stepFromWire);
      view.cleanup = (r.cleanup as Array<Record<string, any>> ?? []).map(stepFromWire);
      view.error = r.error ?? null;
    } catch (e) {
      view.status = "done";
      view.outcome = "error";
      view.error = e instanceof Error ? e.message : String(e);
      this.notice(`session failed: ${view.error}`);
    }
    this.changed();
    return view;
  }

  private onStep(params: Record<string, any>): void {
    const t = this.transcript;
    if (!t || t.status !== "running" || params.instruction !== t.instruction) return;
    t.steps.push(stepFromWire(params.step));
    this.changed();
  }

  // ------------------------------------------------------------------ taps

  async tapTopic(topic: string): Promise<TapFeed> {
    const existing = this.taps.get(topic);
    if (existing?.live) return existing;
    try {
      const r = await this.client.call("topics/tap", { topic });
      const feed = existing ?? new TapFeed(topic);
      feed.tapId = r.tap_id;
      feed.live = true;
      this.taps.set(topic, feed);
      this.byTapId.set(feed.tapId!, feed);
      this.changed();
      return feed;
    } catch (e) {
      this.notice(
        e instanceof RpcCallError ? `tap ${topic}: ${e.message}` : String(e),
      );
      throw e;
    }
  }

  async untapTopic(topic: string): Promise<void> {
    const feed = this.taps.get(topic);
    if (!feed) return;
    if (feed.tapId) {
      this.byTapId.delete(feed.tapId);
      const tapId = feed.tapId;
      feed.tapId = null;
      feed.live = false;
      await this.client.call("topics/untap", { tap_id: tapId });
    }
    this.taps.delete(topic);
    this.changed();
  }

  private onEnvelope(params: Record<string, unknown>): void {
    const feed = this.byTapId.get(String(params.tap_id));
    if (!feed) return; // late envelope from an untapped stream
    feed.push(envelopeFromWire(params));
    this.changed();
  }

  /** Re-establish taps after a reconnect; old tap ids died with the socket. */
  private async retap(): Promise<void> {
    for (const feed of this.taps.values()) {
      if (feed.live) continue;
      try {
        const r = await this.client.call("topics/tap", { topic: feed.topic });
        if (feed.tapId) this.byTapId.delete(feed.tapId);
        feed.tapId = r.tap_id;
        feed.live = true;
        this.byTapId.set(feed.tapId!, feed);
      } catch (e) {
        this.notice(`re-tap ${feed.topic} failed: ${e instanceof Error ? e.message : e}`);
      }
    }
    this.changed();
  }

  // ------------------------------------------------------------- lifecycle

  async stopCapability(nodeId: string): Promise<StopResult> {
    const node = this.nodes.find((n) => n.nodeId === nodeId);
    const tool = node && stopToolFor(node);
    if (!tool) {
      const r: StopResult = {
        nodeId, tool: "", ok: false,
        detail: `no stop tool for ${nodeId}`,
      };
      this.notice(r.detail as string);
      return r;
    }
    try {
      const detail = await this.client.call("tools/call", tool);
      await this.refreshNodes();
      return { nodeId, tool: tool.name, ok: true, detail };
    } catch (e) {
      const msg = e instanceof Error ? e.message : String(e);
      this.notice(`stop ${nodeId}: ${msg}`);
      return { nodeId, tool: tool.name, ok: false, detail: msg };
    }
  }

  /**
   * Stop every running capability in reverse start order, then command a
   * zero twist. Individual failures are collected, never thrown: the rest
   * of the stops must still run.
   */
  async emergencyStop(): Promise<EmergencyStopReport> {
    await this.refreshNodes();
    const targets = this.runningCapabilities()
      .slice()
      .sort((a, b) => b.startedAtNs - a.startedAtNs);
    const stopped: StopResult[] = [];
    for (const node of targets) {
      const tool = stopToolFor(node);
      if (!tool) {
        stopped.push({ nodeId: node.nodeId, tool: "", ok: false, detail: "no stop tool" });
        continue;
      }
      try {
        const detail = await this.client.call("tools/call", tool);
        stopped.push({ nodeId: node.nodeId, tool: tool.name, ok: true, detail });
      } catch (e) {
        const msg = e instanceof Error ? e.message : String(e);
        stopped.push({ nodeId: node.nodeId, tool: tool.name, ok: false, detail: msg });
        this.notice(`emergency stop ${node.nodeId}: ${msg}`);
      }
    }
    let twistSeq: number | null = null;
    try {
      const r = await this.client.call("tools/call", {
        name: "pub_twist",
        arguments: ZERO_TWIST,
      });
      twistSeq = r.seq ?? null;
    } catch (e) {
      this.notice(`zero twist failed: ${e instanceof Error ? e.message : e}`);
    }
    await this.refreshNodes();
    return { stopped, twistSeq };
  }

  // -------------------------------------------------------------- internal

  private notice(text: string): void {
    this.notices.push(text);
    if (this.notices.length > 50) this.notices.shift();
    this.changed();
  }

  private changed(): void {
    for (const h of [...this.changeHandlers]) h();
  }
}

export type { EnvelopeView };
