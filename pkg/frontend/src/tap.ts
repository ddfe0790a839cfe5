/** One tapped topic: envelopes in arrival order with seq-gap accounting. */

export interface EnvelopeView {
  topic: string;
  seq: number;
  stampNs: number;
  type: string;
  payload: any;
}

export interface TapEntry {
  env: EnvelopeView;
  /** envelopes lost between this one and its predecessor (0 = consecutive) */
  gapBefore: number;
}

export class TapFeed {
  tapId: string | null = null;
  live = false;
  entries: TapEntry[] = [];
  dropped = 0;
  outOfOrder = 0; // stays 0 while the server honors per-topic seq order
  limit = 500;

  private lastSeq: number | null = null;

  constructor(readonly topic: string) {}

  push(env: EnvelopeView): TapEntry {
    let gapBefore = 0;
    if (this.lastSeq !== null) {
      const delta = env.seq - this.lastSeq;
      if (delta > 1) {
        gapBefore = delta - 1;
        this.dropped += gapBefore;
      } else if (delta < 1) {
        this.outOfOrder += 1;
      }
    }
    this.lastSeq = Math.max(this.lastSeq ?? env.seq, env.seq);
    const entry: TapEntry = { env, gapBefore };
    this.entries.push(entry);
    if (this.entries.length > this.limit) {
      this.entries.splice(0, this.entries.length - this.limit);
    }
    return entry;
  }

  latest(): EnvelopeView | null {
    const last = this.entries[this.entries.length - 1];
    return last ? last.env : null;
  }
}

export function envelopeFromWire(params: Record<string, unknown>): EnvelopeView {
  return {
    topic: String(params.topic),
    seq: Number(params.seq),
    stampNs: Number(params.stamp_ns),
    type: String(params.type),
    payload: params.payload,
  };
}
