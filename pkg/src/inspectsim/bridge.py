"""Framed binary wire protocol letting an external process act as the policy.

All integers and floats are little-endian. Every frame is a u32 length prefix
followed by the payload; the session opens with a fixed 18-byte handshake that
the client must echo back. See PROTOCOL.md for the byte-level layout.
"""

import hashlib
import socket
import struct
from dataclasses import dataclass, replace

import numpy as np

from inspectsim.config import BatchConfig
from inspectsim.env import CRASH, RUNNING, TIMEOUT, InspectionEnv

MAGIC = b"SRLI"
PROTOCOL_VERSION = 1

MSG_OBS = 1
MSG_ACT = 2

STATE_LEN = 13
ACTION_LEN = 4
DEPTH_SHAPE = (54, 96)
GRID_SHAPE = (21, 21, 21)

_DEPTH_LEN = DEPTH_SHAPE[0] * DEPTH_SHAPE[1]
_GRID_LEN = GRID_SHAPE[0] * GRID_SHAPE[1] * GRID_SHAPE[2]

OBS_PAYLOAD_LEN = 1 + 4 + 4 + 4 + STATE_LEN * 4 + ACTION_LEN * 4 + _DEPTH_LEN * 4 + _GRID_LEN + _GRID_LEN * 4 + 3 * 4 + 1
ACT_PAYLOAD_LEN = 1 + 4 + ACTION_LEN * 4

DONE_CODE = {RUNNING: 0, CRASH: 1, TIMEOUT: 2}


class ProtocolError(RuntimeError):
    pass


def layout_hash() -> int:
    """Pins every tensor shape constant; changes iff the observation layout changes."""
    desc = (
        f"state:{STATE_LEN};action:{ACTION_LEN};"
        f"depth:{DEPTH_SHAPE[0]}x{DEPTH_SHAPE[1]};"
        f"occ:{GRID_SHAPE[0]}x{GRID_SHAPE[1]}x{GRID_SHAPE[2]}:i8;"
        f"svs:{GRID_SHAPE[0]}x{GRID_SHAPE[1]}x{GRID_SHAPE[2]}:f32"
    )
    digest = hashlib.sha256(desc.encode()).digest()
    return int.from_bytes(digest[:8], "little")


def encode_handshake(env_count: int) -> bytes:
    return MAGIC + struct.pack("<HIQ", PROTOCOL_VERSION, env_count, layout_hash())


def decode_handshake(data: bytes) -> int:
    """Validates magic/version/layout and returns the env count."""
    if len(data) != 18:
        raise ProtocolError(f"handshake must be 18 bytes, got {len(data)}")
    if data[:4] != MAGIC:
        raise ProtocolError(f"bad magic {data[:4]!r}")
    version, env_count, h = struct.unpack("<HIQ", data[4:])
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"protocol version mismatch: ours {PROTOCOL_VERSION}, peer {version}")
    expected = layout_hash()
    if h != expected:
        raise ProtocolError(f"layout hash mismatch: ours {expected:#x}, peer {h:#x}")
    return env_count


@dataclass
class ObsFrame:
    env_id: int
    episode: int
    step: int
    state: np.ndarray  # (13,) f32
    prev_action: np.ndarray  # (4,) f32
    masked_depth: np.ndarray  # (54, 96) f32
    local_occ: np.ndarray  # (21,21,21) i8
    local_svs: np.ndarray  # (21,21,21) f32
    reward: np.ndarray  # (3,) f32: f, v, p
    done: int  # 0 running, 1 crash, 2 timeout


def encode_obs_frame(frame: ObsFrame) -> bytes:
    payload = b"".join(
        [
            struct.pack("<BIII", MSG_OBS, frame.env_id, frame.episode, frame.step),
            np.asarray(frame.state, dtype="<f4").tobytes(),
            np.asarray(frame.prev_action, dtype="<f4").tobytes(),
            np.asarray(frame.masked_depth, dtype="<f4").tobytes(),
            np.asarray(frame.local_occ, dtype=np.int8).tobytes(),
            np.asarray(frame.local_svs, dtype="<f4").tobytes(),
            np.asarray(frame.reward, dtype="<f4").tobytes(),
            struct.pack("<B", frame.done),
        ]
    )
    assert len(payload) == OBS_PAYLOAD_LEN
    return struct.pack("<I", len(payload)) + payload


def decode_obs_frame(payload: bytes) -> ObsFrame:
    if len(payload) != OBS_PAYLOAD_LEN:
        raise ProtocolError(f"obs frame length mismatch: expected {OBS_PAYLOAD_LEN}, received {len(payload)}")
    if payload[0] != MSG_OBS:
        raise ProtocolError(f"expected obs frame (type {MSG_OBS}), got type {payload[0]}")
    env_id, episode, step = struct.unpack("<III", payload[1:13])
    off = 13
    state = np.frombuffer(payload, "<f4", STATE_LEN, off).copy()
    off += STATE_LEN * 4
    prev_action = np.frombuffer(payload, "<f4", ACTION_LEN, off).copy()
    off += ACTION_LEN * 4
    depth = np.frombuffer(payload, "<f4", _DEPTH_LEN, off).reshape(DEPTH_SHAPE).copy()
    off += _DEPTH_LEN * 4
    occ = np.frombuffer(payload, np.int8, _GRID_LEN, off).reshape(GRID_SHAPE).copy()
    off += _GRID_LEN
    svs = np.frombuffer(payload, "<f4", _GRID_LEN, off).reshape(GRID_SHAPE).copy()
    off += _GRID_LEN * 4
    reward = np.frombuffer(payload, "<f4", 3, off).copy()
    off += 12
    done = payload[off]
    return ObsFrame(env_id, episode, step, state, prev_action, depth, occ, svs, reward, done)


def encode_act_frame(env_id: int, action) -> bytes:
    payload = struct.pack("<BI", MSG_ACT, env_id) + np.asarray(action, dtype="<f4").tobytes()
    assert len(payload) == ACT_PAYLOAD_LEN
    return struct.pack("<I", len(payload)) + payload


def decode_act_frame(payload: bytes) -> tuple[int, np.ndarray]:
    if len(payload) != ACT_PAYLOAD_LEN:
        raise ProtocolError(f"act frame length mismatch: expected {ACT_PAYLOAD_LEN}, received {len(payload)}")
    if payload[0] != MSG_ACT:
        raise ProtocolError(f"expected act frame (type {MSG_ACT}), got type {payload[0]}")
    (env_id,) = struct.unpack("<I", payload[1:5])
    action = np.frombuffer(payload, "<f4", ACTION_LEN, 5).astype(np.float64)
    return env_id, np.clip(action, -1.0, 1.0)


# --- framed stream I/O --------------------------------------------------------

class FrameStream:
    """Length-prefixed frame reader/writer over a socket-like object."""

    def __init__(self, sock: socket.socket, timeout: float | None = 60.0):
        self._sock = sock
        if timeout is not None:
            sock.settimeout(timeout)

    def send_raw(self, data: bytes) -> None:
        self._sock.sendall(data)

    def recv_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            chunk = self._sock.recv(remaining)
            if not chunk:
                raise ProtocolError("connection closed mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def recv_frame(self, max_len: int = 1 << 24) -> bytes:
        (n,) = struct.unpack("<I", self.recv_exact(4))
        if n > max_len:
            raise ProtocolError(f"frame length {n} exceeds limit {max_len}")
        return self.recv_exact(n)


def _obs_frame_from_result(env_id, episode, step, obs, reward3, done) -> bytes:
    return encode_obs_frame(
        ObsFrame(
            env_id=env_id,
            episode=episode,
            step=step,
            state=obs.state,
            prev_action=obs.prev_action,
            masked_depth=obs.masked_depth,
            local_occ=obs.local_occ,
            local_svs=obs.local_svs,
            reward=reward3,
            done=done,
        )
    )


def serve_connection(sock: socket.socket, batch: BatchConfig, timeout: float = 60.0) -> None:
    """Run one lockstep session over an established connection.

    The server owns the environment batch; for each running env it sends one
    ObsFrame, waits for the matching ActFrames, steps, and repeats. Terminal
    frames need no action; the follow-up reset frame (step=0) does.
    """
    stream = FrameStream(sock, timeout)
    stream.send_raw(encode_handshake(batch.env_count))
    peer = stream.recv_exact(18)
    decode_handshake(peer)

    envs = []
    for i in range(batch.env_count):
        seed = int(np.random.SeedSequence(entropy=batch.master_seed, spawn_key=(i,)).generate_state(1)[0])
        cfg = replace(batch.episode, seed=seed, room=replace(batch.episode.room, seed=seed))
        envs.append(InspectionEnv(cfg))

    episode = [0] * batch.env_count
    zero3 = np.zeros(3, dtype="<f4")
    obs = {}
    for i, env in enumerate(envs):
        obs[i] = env.reset()
        stream.send_raw(_obs_frame_from_result(i, episode[i], 0, obs[i], zero3, 0))

    active = set(range(batch.env_count))
    try:
        while active:
            actions = {}
            while len(actions) < len(active):
                env_id, action = decode_act_frame(stream.recv_frame())
                if env_id not in active:
                    raise ProtocolError(f"action for inactive env {env_id}")
                if env_id in actions:
                    raise ProtocolError(f"duplicate action for env {env_id} in one lockstep round")
                actions[env_id] = action
            for env_id in sorted(actions):
                env = envs[env_id]
                result = env.step(actions[env_id])
                obs[env_id] = result.observation
                reward3 = np.array([result.reward.f, result.reward.v, result.reward.p], dtype="<f4")
                done = DONE_CODE[result.terminated]
                stream.send_raw(
                    _obs_frame_from_result(env_id, episode[env_id], env.step_count, obs[env_id], reward3, done)
                )
                if done != 0:
                    episode[env_id] += 1
                    if episode[env_id] < batch.episodes_per_env:
                        obs[env_id] = env.reset()
                        stream.send_raw(_obs_frame_from_result(env_id, episode[env_id], 0, obs[env_id], zero3, 0))
                    else:
                        active.discard(env_id)
    except ProtocolError:
        raise
    finally:
        try:
            sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass


def serve(host: str, port: int, batch: BatchConfig, timeout: float = 60.0, ready_callback=None) -> None:
    """Listen for one client session on TCP and run it to completion."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as srv:
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind((host, port))
        srv.listen(1)
        if ready_callback is not None:
            ready_callback(srv.getsockname()[1])
        conn, _ = srv.accept()
        with conn:
            serve_connection(conn, batch, timeout)
