// Channel protocol: message shapes, transport abstraction, session binding.
// The server is the source of truth; every state change flows from inbound
// messages, and every outbound message is validated against the shared
// schema before it leaves (a schema violation here is a bug, so it throws).

import { Schema, validate } from "./schema.js";

export type Role = "participant" | "wizard";

export interface Message {
  type: string;
  session_id?: string;
  seq?: number;
  ts?: number;
  client_ts?: number;
  role?: Role;
  actor?: string;
  payload?: Record<string, unknown>;
}

// A pluggable duplex text pipe: real WebSocket in the browser, a scripted
// stub in tests.
export interface ChannelTransport {
  send(text: string): void;
  close(): void;
  onMessage(handler: (text: string) => void): void;
  onClose(handler: () => void): void;
}

export class SchemaViolation extends Error {
  constructor(public problems: string[]) {
    super(`outbound message rejected: ${problems.join("; ")}`);
  }
}

export function checkOutbound(schema: Schema, message: Message): Message {
  const problems = validate(schema, message);
  if (problems.length > 0) throw new SchemaViolation(problems);
  return message;
}

export interface ChannelOptions {
  schema: Schema;
  connect: () => ChannelTransport;
  now?: () => number;
  reconnectDelayMs?: number;
}

/** Binds one session: opens the transport, requests a state sync, validates
 * everything outbound, and resumes from a fresh sync after reconnects. */
export class Channel {
  private transport: ChannelTransport | null = null;
  private handlers: Array<(message: Message) => void> = [];
  private closed = false;
  private readonly now: () => number;

  constructor(private options: ChannelOptions) {
    this.now = options.now ?? (() => Date.now());
  }

  open(): void {
    const transport = this.options.connect();
    this.transport = transport;
    transport.onMessage((text) => {
      let message: Message;
      try {
        message = JSON.parse(text) as Message;
      } catch {
        return; // a non-JSON frame is the server's problem, not the view's
      }
      for (const handler of this.handlers) handler(message);
    });
    transport.onClose(() => {
      if (!this.closed) this.reconnect();
    });
    this.send({ type: "hello" });
    this.send({ type: "state_sync" });
  }

  private reconnect(): void {
    // the log is replayed server-side; a fresh sync carries the whole view
    const delay = this.options.reconnectDelayMs ?? 1000;
    setTimeout(() => {
      if (!this.closed) this.open();
    }, delay);
  }

  onMessage(handler: (message: Message) => void): void {
    this.handlers.push(handler);
  }

  send(message: Message): void {
    if (!this.transport) throw new Error("channel is not open");
    const stamped: Message = { client_ts: this.now(), ...message };
    checkOutbound(this.options.schema, stamped);
    this.transport.send(JSON.stringify(stamped));
  }

  close(): void {
    this.closed = true;
    this.transport?.close();
  }
}

export function tokenFromJoinUrl(url: string): string {
  const match = /[?&]token=([^&#]+)/.exec(url);
  if (!match) throw new Error("join URL carries no token");
  return decodeURIComponent(match[1]);
}

export function channelUrl(joinUrl: string): string {
  const token = tokenFromJoinUrl(joinUrl);
  const base = joinUrl.replace(/^http/, "ws").replace(/\/ui\/.*$/, "");
  return `${base}/channel?token=${encodeURIComponent(token)}`;
}
