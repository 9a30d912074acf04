// Document session: socket lifecycle, welcome/resume, coverage tracking,
// acks, and at-least-once re-send of unacknowledged ops.
//
// The client's `have_seq` is its contiguous coverage of the server log;
// a server ops frame with seq S and n ops covers (S-n, S]. On reconnect
// we offer have_seq, the server replays the gap (or a snapshot when we
// have nothing), and we re-send whatever of ours was never echoed back.

import { Replica, decodeBase64 } from "./replica.js";
import type { ClientFrame, CursorEntry, Op, ServerFrame } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
}

export type ConnStatus = "connecting" | "online" | "reconnecting" | "failed";

export interface ConnectionEvents {
  onChange?: () => void; // document state changed, re-render
  onStatus?: (status: ConnStatus) => void;
  onPresence?: (cursors: CursorEntry[]) => void;
  onChitchat?: (emoji: string, sender: string, sentAt: number) => void;
  onError?: (code: string, msg: string) => void;
}

export interface ConnectionOptions {
  url: string;
  token: string;
  docId: string;
  events?: ConnectionEvents;
  makeSocket?: (url: string) => SocketLike;
  reconnectDelayMs?: number;
  schedule?: (fn: () => void, ms: number) => unknown;
}

export class DocConnection {
  replica: Replica | null = null;
  status: ConnStatus = "connecting";
  participants: string[] = [];

  private haveSeq = 0;
  private chunks = new Map<number, number>(); // start -> end
  private sentOps: Array<{ key: string; op: Op }> = [];
  private acked = new Set<string>();
  private socket: SocketLike | null = null;
  private open = false;
  private stopped = false;
  private readonly opts: ConnectionOptions;
  private readonly events: ConnectionEvents;

  constructor(opts: ConnectionOptions) {
    this.opts = opts;
    this.events = opts.events ?? {};
  }

  connect(): void {
    const make = this.opts.makeSocket
      ?? ((url: string) => new WebSocket(url) as unknown as SocketLike);
    this.setStatus(this.replica ? "reconnecting" : "connecting");
    this.open = false;
    const socket = make(this.opts.url);
    this.socket = socket;
    socket.onopen = () => {
      this.open = true;
      this.sendFrame({ t: "hello", token: this.opts.token,
                       doc: this.opts.docId, have_seq: this.haveSeq });
    };
    socket.onmessage = (ev) => {
      this.handleFrame(JSON.parse(ev.data) as ServerFrame);
    };
    socket.onclose = () => {
      if (this.socket !== socket) return;
      this.open = false;
      this.socket = null;
      if (this.stopped) return;
      this.setStatus("reconnecting");
      const delay = this.opts.reconnectDelayMs ?? 1000;
      (this.opts.schedule ?? setTimeout)(() => {
        if (!this.stopped) this.connect();
      }, delay);
    };
  }

  stop(): void {
    this.stopped = true;
    this.socket?.close();
    this.socket = null;
  }

  private setStatus(status: ConnStatus): void {
    this.status = status;
    this.events.onStatus?.(status);
  }

  private sendFrame(frame: ClientFrame): void {
    if (this.open && this.socket) this.socket.send(JSON.stringify(frame));
  }

  private handleFrame(frame: ServerFrame): void {
    switch (frame.t) {
      case "welcome": {
        if (frame.snapshot !== null) {
          this.replica = Replica.fromSnapshot(decodeBase64(frame.snapshot));
          this.haveSeq = frame.seq;
          this.chunks.clear();
        }
        this.replica!.rebind(frame.replica);
        this.participants = frame.participants;
        this.setStatus("online");
        this.resendUnacked();
        this.events.onChange?.();
        break;
      }
      case "ops": {
        if (!this.replica) return;
        for (const op of frame.ops) {
          this.replica.integrate(op);
          const key = `${op.o}:${op.s}`;
          if (!this.acked.has(key)
              && this.sentOps.some((s) => s.key === key)) {
            this.acked.add(key);
          }
        }
        const start = frame.seq - frame.ops.length;
        const cur = this.chunks.get(start);
        if (cur === undefined || cur < frame.seq) {
          this.chunks.set(start, frame.seq);
        }
        this.advanceCoverage();
        this.events.onChange?.();
        break;
      }
      case "presence_fanout":
        this.events.onPresence?.(frame.cursors);
        break;
      case "chitchat_fanout":
        this.events.onChitchat?.(frame.emoji, frame.sender, frame.sent_at);
        break;
      case "error":
        this.events.onError?.(frame.code, frame.msg);
        if (frame.code === "auth_failed" || frame.code === "not_enrolled"
            || frame.code === "no_such_document") {
          this.stopped = true;
          this.setStatus("failed");
        }
        break;
    }
  }

  private advanceCoverage(): void {
    let moved = true;
    while (moved) {
      moved = false;
      for (const [start, end] of this.chunks) {
        if (start <= this.haveSeq) {
          this.chunks.delete(start);
          if (end > this.haveSeq) this.haveSeq = end;
          moved = true;
        }
      }
    }
  }

  private resendUnacked(): void {
    const unacked = this.sentOps.filter((s) => !this.acked.has(s.key))
      .map((s) => s.op);
    if (unacked.length) this.sendFrame({ t: "ops", ops: unacked });
  }

  get haveSeqValue(): number {
    return this.haveSeq;
  }

  unackedCount(): number {
    return this.sentOps.filter((s) => !this.acked.has(s.key)).length;
  }

  // -- outbound ------------------------------------------------------------

  sendOps(batch: Op[]): void {
    for (const op of batch) {
      this.sentOps.push({ key: `${op.o}:${op.s}`, op });
    }
    if (batch.length) this.sendFrame({ t: "ops", ops: batch });
    this.events.onChange?.();
  }

  sendCursor(block: string | null, offset: number): void {
    this.sendFrame({ t: "presence",
                     cursor: block === null ? null : { block, offset } });
  }

  sendChitchat(emoji: string): void {
    this.sendFrame({ t: "chitchat", emoji });
  }
}
