/**
 * Live lockstep session against the real server: spawns the simulator CLI in
 * bridge mode, runs 10 episodes with a seeded random agent, validates every
 * frame's shapes and value ranges, and checks that an identical second session
 * reproduces the per-episode reward sums exactly.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, describe, expect, it } from "vitest";

import { randomAgent } from "../src/agent.js";
import { SessionResult, runSession } from "../src/client.js";
import { GRID_SHAPE, DEPTH_SHAPE, ObsFrame, STATE_LEN, ACTION_LEN } from "../src/protocol.js";

const REPO_ROOT = join(dirname(fileURLToPath(import.meta.url)), "..", "..");
const HOST = "127.0.0.1";
const ENVS = 2;
const EPISODES = 5; // 2 envs x 5 episodes = 10 episodes total
const SEED = 3;

const CONFIG = [
  "episode_length = 2.0",
  "room.length = 5.0",
  "room.width = 5.0",
  "room.height = 2.5",
  "room.obstacle_count = 1",
  "lidar.h_rays = 64",
  "lidar.v_rays = 8",
].join("\n");

const GRID_LEN = GRID_SHAPE[0] * GRID_SHAPE[1] * GRID_SHAPE[2];
const DEPTH_LEN = DEPTH_SHAPE[0] * DEPTH_SHAPE[1];

const procs: ChildProcess[] = [];
afterAll(() => {
  for (const p of procs) p.kill("SIGKILL");
});

function startServer(port: number): ChildProcess {
  const dir = mkdtempSync(join(tmpdir(), "inspectsim-client-"));
  const cfgPath = join(dir, "episode.cfg");
  writeFileSync(cfgPath, CONFIG + "\n");
  const proc = spawn(
    "python3",
    [
      "-m", "inspectsim.cli", "run",
      "--policy", "bridge",
      "--endpoint", `${HOST}:${port}`,
      "--envs", String(ENVS),
      "--episodes", String(EPISODES),
      "--seed", String(SEED),
      "--config", cfgPath,
    ],
    { cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
  );
  proc.stderr!.on("data", (d: Buffer) => process.stderr.write(d));
  procs.push(proc);
  return proc;
}

async function sessionWithRetry(
  port: number,
  onFrame?: (obs: ObsFrame) => void,
): Promise<SessionResult> {
  let lastErr: unknown = null;
  for (let attempt = 0; attempt < 50; attempt++) {
    try {
      return await runSession({
        host: HOST,
        port,
        episodesPerEnv: EPISODES,
        policy: randomAgent(SEED),
        onFrame,
        timeoutMs: 60000,
      });
    } catch (err) {
      // the server may not have bound the port yet
      if ((err as NodeJS.ErrnoException).code !== "ECONNREFUSED") throw err;
      lastErr = err;
      await new Promise((r) => setTimeout(r, 200));
    }
  }
  throw lastErr;
}

function validateFrame(obs: ObsFrame) {
  expect(obs.envId).toBeGreaterThanOrEqual(0);
  expect(obs.envId).toBeLessThan(ENVS);
  expect(obs.episode).toBeLessThan(EPISODES);
  expect(obs.state.length).toBe(STATE_LEN);
  expect(obs.prevAction.length).toBe(ACTION_LEN);
  expect(obs.maskedDepth.length).toBe(DEPTH_LEN);
  expect(obs.localOcc.length).toBe(GRID_LEN);
  expect(obs.localSvs.length).toBe(GRID_LEN);
  expect(obs.reward.length).toBe(3);
  expect([0, 1, 2]).toContain(obs.done);
  for (let i = 0; i < STATE_LEN; i++) expect(Number.isFinite(obs.state[i])).toBe(true);
  for (let i = 0; i < GRID_LEN; i++) {
    expect(obs.localOcc[i]! >= -1 && obs.localOcc[i]! <= 1).toBe(true);
    expect(obs.localSvs[i]! >= 0).toBe(true);
  }
  for (let i = 0; i < DEPTH_LEN; i++) expect(obs.maskedDepth[i]! >= 0).toBe(true);
}

describe("live lockstep session", () => {
  const port = 41000 + (process.pid % 1000);

  let first: SessionResult;
  let violations = 0;
  let frames = 0;

  it("runs 10 episodes with valid frames throughout", async () => {
    startServer(port);
    first = await sessionWithRetry(port, (obs) => {
      frames += 1;
      try {
        validateFrame(obs);
      } catch {
        violations += 1;
        throw new Error(`frame ${frames} failed validation`);
      }
    });
    expect(violations).toBe(0);
    expect(frames).toBeGreaterThan(ENVS * EPISODES);
    // every (env, episode) pair ran to a terminal frame
    const keys = [...first.outcomes.keys()].sort();
    const want: string[] = [];
    for (let e = 0; e < ENVS; e++) for (let ep = 0; ep < EPISODES; ep++) want.push(`${e}:${ep}`);
    expect(keys).toEqual(want.sort());
    for (const code of first.outcomes.values()) expect([1, 2]).toContain(code);
  }, 120000);

  it("reproduces reward sums exactly on an identical rerun", async () => {
    startServer(port + 1);
    const second = await sessionWithRetry(port + 1);
    expect(second.frames).toBe(first.frames);
    expect([...second.rewardSums.entries()].sort()).toEqual(
      [...first.rewardSums.entries()].sort(),
    );
  }, 120000);
});
