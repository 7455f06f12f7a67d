/**
 * Protocol conformance against the golden fixture shared with the server's
 * test suite: byte-exact decode, value probes, and re-encode round-trip.
 */

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import { describe, expect, it } from "vitest";

import {
  ACT_PAYLOAD_LEN,
  HANDSHAKE_LEN,
  OBS_PAYLOAD_LEN,
  ProtocolError,
  decodeHandshake,
  decodeObsFrame,
  encodeActFrame,
  encodeHandshake,
  encodeObsFrame,
  layoutHash,
} from "../src/protocol.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const DATA = join(HERE, "..", "..", "tests", "data");

interface Probe {
  length: number;
  sum: number;
  samples: [number, number][];
}

interface GoldenExpect {
  layout_hash: string;
  env_id: number;
  episode: number;
  step: number;
  done: number;
  state: number[];
  prev_action: number[];
  reward: number[];
  masked_depth: Probe;
  local_occ: Probe;
  local_svs: Probe;
}

function checkProbe(arr: ArrayLike<number>, probe: Probe) {
  expect(arr.length).toBe(probe.length);
  let sum = 0;
  for (let i = 0; i < arr.length; i++) sum += arr[i]!;
  expect(sum).toBeCloseTo(probe.sum, 5);
  for (const [i, v] of probe.samples) {
    expect(arr[i]).toBe(Math.fround(v));
  }
}

describe("golden fixture", () => {
  const blob = readFileSync(join(DATA, "golden_obs_frame.bin"));
  const expected = JSON.parse(
    readFileSync(join(DATA, "golden_obs_frame.json"), "utf8"),
  ) as GoldenExpect;

  it("matches the pinned layout hash", () => {
    expect(layoutHash()).toBe(BigInt(expected.layout_hash));
  });

  it("decodes scalars and arrays exactly", () => {
    expect(blob.readUInt32LE(0)).toBe(OBS_PAYLOAD_LEN);
    const frame = decodeObsFrame(blob.subarray(4));
    expect(frame.envId).toBe(expected.env_id);
    expect(frame.episode).toBe(expected.episode);
    expect(frame.step).toBe(expected.step);
    expect(frame.done).toBe(expected.done);
    expect([...frame.state]).toEqual(expected.state.map(Math.fround));
    expect([...frame.prevAction]).toEqual(expected.prev_action.map(Math.fround));
    expect([...frame.reward]).toEqual(expected.reward.map(Math.fround));
    checkProbe(frame.maskedDepth, expected.masked_depth);
    checkProbe(frame.localOcc, expected.local_occ);
    checkProbe(frame.localSvs, expected.local_svs);
  });

  it("re-encodes to the identical bytes", () => {
    const frame = decodeObsFrame(blob.subarray(4));
    expect(encodeObsFrame(frame).equals(blob)).toBe(true);
  });
});

describe("handshake", () => {
  it("round-trips", () => {
    const hs = encodeHandshake(16);
    expect(hs.length).toBe(HANDSHAKE_LEN);
    expect(decodeHandshake(hs)).toBe(16);
  });

  it("rejects corruption", () => {
    const good = encodeHandshake(1);
    const badMagic = Buffer.from(good);
    badMagic.write("XXXX", 0, "ascii");
    expect(() => decodeHandshake(badMagic)).toThrow(ProtocolError);
    const badVersion = Buffer.from(good);
    badVersion.writeUInt16LE(99, 4);
    expect(() => decodeHandshake(badVersion)).toThrow(/version/);
    const badHash = Buffer.from(good);
    badHash.writeBigUInt64LE(layoutHash() ^ 0xffn, 10);
    expect(() => decodeHandshake(badHash)).toThrow(/layout hash/);
    expect(() => decodeHandshake(good.subarray(0, 17))).toThrow(/18 bytes/);
  });
});

describe("act frame", () => {
  it("encodes with length prefix and clamps", () => {
    const buf = encodeActFrame(3, [0.5, -2, 2, 0]);
    expect(buf.readUInt32LE(0)).toBe(ACT_PAYLOAD_LEN);
    expect(buf.readUInt8(4)).toBe(2); // MSG_ACT
    expect(buf.readUInt32LE(5)).toBe(3);
    expect(buf.readFloatLE(9)).toBe(0.5);
    expect(buf.readFloatLE(13)).toBe(-1);
    expect(buf.readFloatLE(17)).toBe(1);
    expect(buf.readFloatLE(21)).toBe(0);
  });

  it("rejects wrong arity", () => {
    expect(() => encodeActFrame(0, [1, 2, 3])).toThrow(ProtocolError);
  });
});

describe("obs frame validation", () => {
  it("rejects wrong length and type", () => {
    expect(() => decodeObsFrame(Buffer.alloc(10))).toThrow(/expected 67135, received 10/);
    const wrongType = Buffer.alloc(OBS_PAYLOAD_LEN);
    wrongType.writeUInt8(2, 0);
    expect(() => decodeObsFrame(wrongType)).toThrow(/got type 2/);
  });
});
