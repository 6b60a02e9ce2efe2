/** Wire protocol shared with the session server: one JSON envelope per
 * frame, fixed message-type vocabulary, 10-color attribution palette. */

export const PALETTE = [
  "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231",
  "#911eb4", "#46f0f0", "#f032e6", "#bcf60c", "#fabebe",
] as const;

export type MessageType =
  | "join" | "welcome" | "submit_op" | "op_applied" | "op_rejected"
  | "trigger_generation" | "generation_status" | "asset_ready"
  | "presence_update" | "leave";

const KNOWN_TYPES: ReadonlySet<string> = new Set([
  "join", "welcome", "submit_op", "op_applied", "op_rejected",
  "trigger_generation", "generation_status", "asset_ready",
  "presence_update", "leave",
]);

export interface Envelope {
  type: MessageType;
  session_id: string;
  sender_id: string;
  payload: any;
}

export interface ParticipantInfo {
  participant_id: string;
  display_name: string;
  color_index: number;
}

export function encodeFrame(msg: Envelope): string {
  return JSON.stringify({
    payload: msg.payload,
    sender_id: msg.sender_id,
    session_id: msg.session_id,
    type: msg.type,
  });
}

export function decodeFrame(frame: string): Envelope {
  const data = JSON.parse(frame);
  if (typeof data !== "object" || data === null) {
    throw new Error("frame must be a JSON object");
  }
  if (!KNOWN_TYPES.has(data.type)) {
    throw new Error(`unknown message type: ${data.type}`);
  }
  return {
    type: data.type,
    session_id: String(data.session_id ?? ""),
    sender_id: String(data.sender_id ?? ""),
    payload: data.payload ?? {},
  };
}

export function colorOf(colorIndex: number): string {
  return PALETTE[((colorIndex % PALETTE.length) + PALETTE.length) % PALETTE.length];
}
