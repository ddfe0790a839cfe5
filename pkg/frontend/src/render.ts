/** Text projections of console state. The DOM panels and the tests share
 * these so "what the operator sees" has one definition. */

import type { CatalogView, NodeView, TranscriptView } from "./session.js";
import type { TapFeed } from "./tap.js";

export function renderTranscript(t: TranscriptView | null): string[] {
  if (!t) return ["(no instruction yet)"];
  const lines = [`> ${t.instruction}`];
  t.steps.forEach((s, i) => {
    const mark = s.ok ? "ok" : `failed: ${s.error?.message ?? s.error?.code ?? "?"}`;
    lines.push(`${i + 1}. ${s.tool} ${mark} (${s.wallMs.toFixed(0)}ms)`);
  });
  if (t.status === "running") {
    lines.push("running...");
  } else {
    const path = t.pathDecision ? ` via ${t.pathDecision}` : "";
    lines.push(`outcome: ${t.outcome}${path}`);
    if (t.error) lines.push(`error: ${t.error}`);
    for (const c of t.cleanup) {
      lines.push(`cleanup: ${c.tool} ${c.ok ? "ok" : "failed"}`);
    }
  }
  return lines;
}

export function renderNodes(nodes: NodeView[]): string[] {
  if (nodes.length === 0) return ["(no nodes)"];
  return nodes.map((n) => {
    const why = n.reason ? `: ${n.reason}` : "";
    return `${n.nodeId} [${n.kind}] ${n.state}${why}`;
  });
}

export function renderCatalog(c: CatalogView | null): string[] {
  if (!c) return ["(catalog not loaded)"];
  const lines = [`revision ${c.revision}, ${c.tools.length} tools`];
  for (const t of c.tools) lines.push(`${t.name}: ${t.title}`);
  return lines;
}

export function renderTap(feed: TapFeed, last = 20): string[] {
  const lines = [
    `${feed.topic}${feed.live ? "" : " (stopped)"}: ${feed.entries.length} shown, ${feed.dropped} dropped`,
  ];
  for (const entry of feed.entries.slice(-last)) {
    if (entry.gapBefore > 0) {
      lines.push(`!! gap: ${entry.gapBefore} dropped`);
    }
    lines.push(`#${entry.env.seq} ${entry.env.type} ${JSON.stringify(entry.env.payload)}`);
  }
  return lines;
}
