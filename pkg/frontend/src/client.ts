/**
 * Lockstep session client: connects to a bridge server, validates the
 * handshake, and answers every non-terminal observation frame with one action
 * frame until all environments finish their episodes.
 */

import { Socket, connect } from "node:net";

import {
  HANDSHAKE_LEN,
  ObsFrame,
  ProtocolError,
  decodeHandshake,
  decodeObsFrame,
  encodeActFrame,
  encodeHandshake,
} from "./protocol.js";

/** Maps an observation to the next normalized action (4 floats in [-1, 1]). */
export type Policy = (obs: ObsFrame) => ArrayLike<number>;

export interface SessionOptions {
  host: string;
  port: number;
  /** Episodes each environment runs; must match the server's --episodes. */
  episodesPerEnv: number;
  policy: Policy;
  /** Called for every received observation frame, in arrival order. */
  onFrame?: (obs: ObsFrame) => void;
  timeoutMs?: number;
}

export interface SessionResult {
  envCount: number;
  frames: number;
  /** Per-(envId, episode) sums over the 3 reward components, keyed "env:episode". */
  rewardSums: Map<string, number>;
  /** Terminal done code per "env:episode" (1 crash, 2 timeout). */
  outcomes: Map<string, number>;
}

/** Promise-based length-prefixed frame reader over a socket. */
export class FrameReader {
  private chunks: Buffer = Buffer.alloc(0);
  private waiting: (() => void) | null = null;
  private ended = false;
  private error: Error | null = null;

  constructor(private sock: Socket, private timeoutMs: number) {
    sock.on("data", (chunk: Buffer) => {
      this.chunks = this.chunks.length === 0 ? chunk : Buffer.concat([this.chunks, chunk]);
      this.waiting?.();
    });
    sock.on("end", () => {
      this.ended = true;
      this.waiting?.();
    });
    sock.on("error", (err) => {
      this.error = err;
      this.waiting?.();
    });
  }

  async readExact(n: number): Promise<Buffer> {
    while (this.chunks.length < n) {
      if (this.error) throw this.error;
      if (this.ended) throw new ProtocolError("connection closed mid-frame");
      await new Promise<void>((resolve, reject) => {
        const timer = setTimeout(
          () => reject(new ProtocolError(`read timed out after ${this.timeoutMs} ms`)),
          this.timeoutMs,
        );
        this.waiting = () => {
          clearTimeout(timer);
          this.waiting = null;
          resolve();
        };
      });
    }
    const out = this.chunks.subarray(0, n);
    this.chunks = this.chunks.subarray(n);
    return out;
  }

  async readFrame(maxLen = 1 << 24): Promise<Buffer> {
    const prefix = await this.readExact(4);
    const n = prefix.readUInt32LE(0);
    if (n > maxLen) throw new ProtocolError(`frame length ${n} exceeds limit ${maxLen}`);
    return this.readExact(n);
  }

  /** True once the peer has closed and every buffered byte is consumed. */
  get drained(): boolean {
    return this.ended && this.chunks.length === 0;
  }
}

function connectSocket(host: string, port: number, timeoutMs: number): Promise<Socket> {
  return new Promise((resolve, reject) => {
    const sock = connect({ host, port });
    const timer = setTimeout(() => {
      sock.destroy();
      reject(new ProtocolError(`connect to ${host}:${port} timed out`));
    }, timeoutMs);
    sock.once("connect", () => {
      clearTimeout(timer);
      resolve(sock);
    });
    sock.once("error", (err) => {
      clearTimeout(timer);
      reject(err);
    });
  });
}

export async function runSession(opts: SessionOptions): Promise<SessionResult> {
  const timeoutMs = opts.timeoutMs ?? 30000;
  const sock = await connectSocket(opts.host, opts.port, timeoutMs);
  sock.setNoDelay(true);
  const reader = new FrameReader(sock, timeoutMs);
  try {
    const handshake = await reader.readExact(HANDSHAKE_LEN);
    const envCount = decodeHandshake(handshake);
    sock.write(handshake); // echo

    const rewardSums = new Map<string, number>();
    const outcomes = new Map<string, number>();
    const lastStep = new Map<string, number>();
    const active = new Set<number>();
    for (let i = 0; i < envCount; i++) active.add(i);

    let frames = 0;
    while (active.size > 0) {
      const obs = decodeObsFrame(await reader.readFrame());
      frames += 1;
      opts.onFrame?.(obs);
      if (!active.has(obs.envId)) {
        throw new ProtocolError(`frame for finished env ${obs.envId}`);
      }
      const key = `${obs.envId}:${obs.episode}`;
      const sum = obs.reward[0]! + obs.reward[1]! + obs.reward[2]!;
      rewardSums.set(key, (rewardSums.get(key) ?? 0) + sum);
      const prev = lastStep.get(key);
      if (obs.step > 0 && prev !== obs.step - 1) {
        throw new ProtocolError(`step ${obs.step} for ${key} does not follow ${prev}`);
      }
      lastStep.set(key, obs.step);
      if (obs.done !== 0) {
        outcomes.set(key, obs.done);
        if (obs.episode + 1 >= opts.episodesPerEnv) {
          active.delete(obs.envId);
        }
        continue; // terminal frames take no action
      }
      sock.write(encodeActFrame(obs.envId, opts.policy(obs)));
    }
    return { envCount, frames, rewardSums, outcomes };
  } finally {
    sock.destroy();
  }
}
