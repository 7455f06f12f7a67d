#!/usr/bin/env node
/**
 * Runs a lockstep session against a bridge server and prints per-episode
 * reward sums and outcomes.
 *
 * Usage:
 *   inspectsim-client --endpoint 127.0.0.1:7777 --episodes 1 --seed 0 [--agent random|zero]
 *
 * Pair with the server:
 *   python3 -m inspectsim.cli run --policy bridge --endpoint 127.0.0.1:7777 --episodes 1
 */

import { parseArgs } from "node:util";

import { runSession } from "./client.js";
import { randomAgent, zeroAgent } from "./agent.js";

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      endpoint: { type: "string", default: "127.0.0.1:7777" },
      episodes: { type: "string", default: "1" },
      seed: { type: "string", default: "0" },
      agent: { type: "string", default: "random" },
    },
  });
  const [host, portStr] = values.endpoint!.split(":");
  const port = Number(portStr);
  if (!host || !Number.isInteger(port) || port <= 0) {
    console.error(`invalid --endpoint ${values.endpoint}`);
    return 2;
  }
  const episodes = Number(values.episodes);
  const seed = Number(values.seed);
  const policy = values.agent === "zero" ? zeroAgent() : randomAgent(seed);

  const result = await runSession({
    host,
    port,
    episodesPerEnv: episodes,
    policy,
  });
  console.log(`session complete: ${result.envCount} envs, ${result.frames} frames`);
  const keys = [...result.rewardSums.keys()].sort();
  for (const key of keys) {
    const outcome = result.outcomes.get(key) === 1 ? "crash" : "timeout";
    console.log(`env:episode ${key}  reward_sum=${result.rewardSums.get(key)!.toFixed(6)}  ${outcome}`);
  }
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(err instanceof Error ? err.message : err);
    process.exit(1);
  },
);
