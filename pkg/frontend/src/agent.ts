/**
 * Seeded policies. The random agent uses a small deterministic PRNG
 * (mulberry32) so identical seeds reproduce identical action streams.
 */

import { ObsFrame } from "./protocol.js";
import { Policy } from "./client.js";

/** Deterministic 32-bit PRNG returning floats in [0, 1). */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Uniform random actions in [-1, 1]^4; one independent stream per env. */
export function randomAgent(seed: number): Policy {
  const streams = new Map<number, () => number>();
  return (obs: ObsFrame) => {
    let rng = streams.get(obs.envId);
    if (rng === undefined) {
      rng = mulberry32(seed * 0x9e3779b9 + obs.envId);
      streams.set(obs.envId, rng);
    }
    return [rng() * 2 - 1, rng() * 2 - 1, rng() * 2 - 1, rng() * 2 - 1];
  };
}

/** Always hovers in place. */
export function zeroAgent(): Policy {
  return () => [0, 0, 0, 0];
}
