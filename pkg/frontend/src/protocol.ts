/**
 * Binary wire protocol for the inspectsim bridge (SRLI v1).
 *
 * All integers and floats are little-endian. Every message after the 18-byte
 * handshake is a u32 length prefix followed by the payload. See the server
 * repository's PROTOCOL.md for the authoritative byte-level layout.
 */

import { createHash } from "node:crypto";

export const MAGIC = Buffer.from("SRLI", "ascii");
export const PROTOCOL_VERSION = 1;

export const MSG_OBS = 1;
export const MSG_ACT = 2;

export const STATE_LEN = 13;
export const ACTION_LEN = 4;
export const DEPTH_SHAPE: readonly [number, number] = [54, 96];
export const GRID_SHAPE: readonly [number, number, number] = [21, 21, 21];

const DEPTH_LEN = DEPTH_SHAPE[0] * DEPTH_SHAPE[1];
const GRID_LEN = GRID_SHAPE[0] * GRID_SHAPE[1] * GRID_SHAPE[2];

export const OBS_PAYLOAD_LEN =
  1 + 4 + 4 + 4 + STATE_LEN * 4 + ACTION_LEN * 4 + DEPTH_LEN * 4 + GRID_LEN + GRID_LEN * 4 + 3 * 4 + 1;
export const ACT_PAYLOAD_LEN = 1 + 4 + ACTION_LEN * 4;
export const HANDSHAKE_LEN = 18;

export class ProtocolError extends Error {}

/** First 8 bytes (little-endian) of the SHA-256 of the layout descriptor. */
export function layoutHash(): bigint {
  const desc =
    `state:${STATE_LEN};action:${ACTION_LEN};` +
    `depth:${DEPTH_SHAPE[0]}x${DEPTH_SHAPE[1]};` +
    `occ:${GRID_SHAPE[0]}x${GRID_SHAPE[1]}x${GRID_SHAPE[2]}:i8;` +
    `svs:${GRID_SHAPE[0]}x${GRID_SHAPE[1]}x${GRID_SHAPE[2]}:f32`;
  const digest = createHash("sha256").update(desc, "ascii").digest();
  return digest.readBigUInt64LE(0);
}

export interface ObsFrame {
  envId: number;
  episode: number;
  step: number;
  /** length 13: position(3), quaternion wxyz(4), linear velocity(3), angular velocity(3) */
  state: Float32Array;
  prevAction: Float32Array;
  /** row-major [54][96] */
  maskedDepth: Float32Array;
  /** row-major [21][21][21]; -1 unknown, 0 free, 1 occupied */
  localOcc: Int8Array;
  /** row-major [21][21][21] */
  localSvs: Float32Array;
  /** (f, v, p) */
  reward: Float32Array;
  /** 0 running, 1 crash, 2 timeout */
  done: number;
}

export function encodeHandshake(envCount: number): Buffer {
  const buf = Buffer.alloc(HANDSHAKE_LEN);
  MAGIC.copy(buf, 0);
  buf.writeUInt16LE(PROTOCOL_VERSION, 4);
  buf.writeUInt32LE(envCount, 6);
  buf.writeBigUInt64LE(layoutHash(), 10);
  return buf;
}

/** Validates magic/version/layout and returns the env count. */
export function decodeHandshake(data: Buffer): number {
  if (data.length !== HANDSHAKE_LEN) {
    throw new ProtocolError(`handshake must be 18 bytes, got ${data.length}`);
  }
  if (!data.subarray(0, 4).equals(MAGIC)) {
    throw new ProtocolError(`bad magic ${JSON.stringify(data.subarray(0, 4).toString("latin1"))}`);
  }
  const version = data.readUInt16LE(4);
  if (version !== PROTOCOL_VERSION) {
    throw new ProtocolError(`protocol version mismatch: ours ${PROTOCOL_VERSION}, peer ${version}`);
  }
  const hash = data.readBigUInt64LE(10);
  const expected = layoutHash();
  if (hash !== expected) {
    throw new ProtocolError(
      `layout hash mismatch: ours 0x${expected.toString(16)}, peer 0x${hash.toString(16)}`,
    );
  }
  return data.readUInt32LE(6);
}

/** Copies `count` little-endian f32 values out of `buf` starting at `offset`. */
function readF32(buf: Buffer, offset: number, count: number): Float32Array {
  const out = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = buf.readFloatLE(offset + i * 4);
  }
  return out;
}

export function decodeObsFrame(payload: Buffer): ObsFrame {
  if (payload.length !== OBS_PAYLOAD_LEN) {
    throw new ProtocolError(
      `obs frame length mismatch: expected ${OBS_PAYLOAD_LEN}, received ${payload.length}`,
    );
  }
  if (payload[0] !== MSG_OBS) {
    throw new ProtocolError(`expected obs frame (type ${MSG_OBS}), got type ${payload[0]}`);
  }
  const envId = payload.readUInt32LE(1);
  const episode = payload.readUInt32LE(5);
  const step = payload.readUInt32LE(9);
  let off = 13;
  const state = readF32(payload, off, STATE_LEN);
  off += STATE_LEN * 4;
  const prevAction = readF32(payload, off, ACTION_LEN);
  off += ACTION_LEN * 4;
  const maskedDepth = readF32(payload, off, DEPTH_LEN);
  off += DEPTH_LEN * 4;
  const localOcc = new Int8Array(GRID_LEN);
  for (let i = 0; i < GRID_LEN; i++) {
    localOcc[i] = payload.readInt8(off + i);
  }
  off += GRID_LEN;
  const localSvs = readF32(payload, off, GRID_LEN);
  off += GRID_LEN * 4;
  const reward = readF32(payload, off, 3);
  off += 12;
  const done = payload.readUInt8(off);
  return { envId, episode, step, state, prevAction, maskedDepth, localOcc, localSvs, reward, done };
}

/** Re-encodes a decoded frame, including the u32 length prefix. */
export function encodeObsFrame(frame: ObsFrame): Buffer {
  const buf = Buffer.alloc(4 + OBS_PAYLOAD_LEN);
  buf.writeUInt32LE(OBS_PAYLOAD_LEN, 0);
  let off = 4;
  buf.writeUInt8(MSG_OBS, off);
  off += 1;
  buf.writeUInt32LE(frame.envId, off);
  off += 4;
  buf.writeUInt32LE(frame.episode, off);
  off += 4;
  buf.writeUInt32LE(frame.step, off);
  off += 4;
  const writeF32 = (arr: Float32Array) => {
    for (let i = 0; i < arr.length; i++) {
      buf.writeFloatLE(arr[i]!, off);
      off += 4;
    }
  };
  writeF32(frame.state);
  writeF32(frame.prevAction);
  writeF32(frame.maskedDepth);
  for (let i = 0; i < frame.localOcc.length; i++) {
    buf.writeInt8(frame.localOcc[i]!, off);
    off += 1;
  }
  writeF32(frame.localSvs);
  writeF32(frame.reward);
  buf.writeUInt8(frame.done, off);
  return buf;
}

/** Encodes an action frame, including the u32 length prefix; clamps to [-1, 1]. */
export function encodeActFrame(envId: number, action: ArrayLike<number>): Buffer {
  if (action.length !== ACTION_LEN) {
    throw new ProtocolError(`action must have ${ACTION_LEN} entries, got ${action.length}`);
  }
  const buf = Buffer.alloc(4 + ACT_PAYLOAD_LEN);
  buf.writeUInt32LE(ACT_PAYLOAD_LEN, 0);
  buf.writeUInt8(MSG_ACT, 4);
  buf.writeUInt32LE(envId, 5);
  for (let i = 0; i < ACTION_LEN; i++) {
    buf.writeFloatLE(Math.max(-1, Math.min(1, action[i]!)), 9 + i * 4);
  }
  return buf;
}
