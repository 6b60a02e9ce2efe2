/**
 * Client reconciliation state machine, transport-free: feed it server frames
 * with onMessage(), which returns any frames to send back (resync requests).
 * The authoritative mirror is snapshot + op_applied prefix in server order;
 * locally submitted ops wait in a provisional overlay until acknowledged.
 */

import {
  ApplyError,
  EditOp,
  SketchDocument,
  applyOp,
  documentFromWire,
  emptyDocument,
  opFromWire,
  opToWire,
} from "./document.js";
import { Envelope, ParticipantInfo } from "./protocol.js";

export type Phase = "disconnected" | "joining" | "synced";

export interface GenerationEvent {
  type: "generation_status" | "asset_ready";
  payload: any;
}

export class StudioClient {
  phase: Phase = "disconnected";
  document: SketchDocument;
  lastSeq = 0;
  colorIndex: number | null = null;
  participants: ParticipantInfo[] = [];
  pending: EditOp[] = [];
  rejections: any[] = [];
  generationEvents: GenerationEvent[] = [];
  lastAsset: any | null = null;

  constructor(
    public readonly sessionId: string,
    public readonly participantId: string,
    public readonly displayName: string = participantId,
  ) {
    this.document = emptyDocument(sessionId);
  }

  private frame(type: Envelope["type"], payload: any): Envelope {
    return {
      type,
      session_id: this.sessionId,
      sender_id: this.participantId,
      payload,
    };
  }

  beginJoin(): Envelope {
    this.phase = "joining";
    return this.frame("join", { display_name: this.displayName });
  }

  submitOp(op: EditOp): Envelope {
    if (this.phase !== "synced") throw new Error("cannot submit before welcome");
    this.pending.push(op);
    return this.frame("submit_op", { op: opToWire(op) });
  }

  triggerGeneration(text: string, seed = 0, styleTags: string[] = [],
                    negativeText?: string): Envelope {
    if (this.phase !== "synced") throw new Error("cannot trigger before welcome");
    const prompt: any = { text, style_tags: styleTags };
    if (negativeText !== undefined) prompt.negative_text = negativeText;
    return this.frame("trigger_generation", { prompt, seed });
  }

  leave(): Envelope {
    this.phase = "disconnected";
    return this.frame("leave", {});
  }

  onMessage(msg: Envelope): Envelope[] {
    switch (msg.type) {
      case "welcome": {
        this.document = documentFromWire(msg.payload.snapshot);
        this.lastSeq = msg.payload.last_seq;
        this.colorIndex = msg.payload.color_index;
        this.participants = msg.payload.participants;
        const known = new Set(this.document.op_log.map((op) => op.op_id));
        this.pending = this.pending.filter((op) => !known.has(op.op_id));
        this.phase = "synced";
        return [];
      }
      case "op_applied": {
        const op = opFromWire(msg.payload.op);
        if (op.seq !== this.lastSeq + 1) return this.requestResync();
        try {
          this.document = applyOp(this.document, op);
        } catch (err) {
          if (err instanceof ApplyError) return this.requestResync();
          throw err;
        }
        this.lastSeq = op.seq!;
        this.pending = this.pending.filter((p) => p.op_id !== op.op_id);
        return [];
      }
      case "op_rejected": {
        const opId = msg.payload.op_id ?? "";
        this.pending = this.pending.filter((p) => p.op_id !== opId);
        this.rejections.push(msg.payload);
        return [];
      }
      case "presence_update": {
        this.participants = msg.payload.participants;
        return [];
      }
      case "generation_status":
      case "asset_ready": {
        this.generationEvents.push({ type: msg.type, payload: msg.payload });
        if (msg.type === "asset_ready") this.lastAsset = msg.payload;
        return [];
      }
      default:
        return [];
    }
  }

  private requestResync(): Envelope[] {
    this.phase = "joining";
    return [this.frame("join", { display_name: this.displayName })];
  }

  /** Authoritative document plus pending ops, best effort (display only). */
  overlayDocument(): SketchDocument {
    let doc = this.document;
    for (const op of this.pending) {
      try {
        doc = applyOp(doc, op);
      } catch {
        continue;
      }
    }
    return doc;
  }
}
