"""Wire protocol: frame round-trips, handshake validation, golden fixture, and a
full lockstep session over a socketpair."""

import json
import os
import socket
import struct
import threading

import numpy as np
import pytest

from inspectsim.agent import NoiseParams
from inspectsim.bridge import (
    ACT_PAYLOAD_LEN,
    MAGIC,
    OBS_PAYLOAD_LEN,
    PROTOCOL_VERSION,
    FrameStream,
    ObsFrame,
    ProtocolError,
    decode_act_frame,
    decode_handshake,
    decode_obs_frame,
    encode_act_frame,
    encode_handshake,
    encode_obs_frame,
    layout_hash,
    serve_connection,
)
from inspectsim.config import BatchConfig, EpisodeConfig
from inspectsim.scene import RoomSpec

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")


def _sample_frame():
    rng = np.random.Generator(np.random.PCG64(1))
    return ObsFrame(
        env_id=2, episode=0, step=7,
        state=rng.normal(size=13).astype("<f4"),
        prev_action=rng.uniform(-1, 1, 4).astype("<f4"),
        masked_depth=rng.uniform(0, 10, (54, 96)).astype("<f4"),
        local_occ=rng.integers(-1, 2, (21, 21, 21)).astype(np.int8),
        local_svs=rng.uniform(0, 0.36, (21, 21, 21)).astype("<f4"),
        reward=np.array([0.01, 0.1, 0.0], dtype="<f4"),
        done=0,
    )


def test_obs_frame_roundtrip():
    frame = _sample_frame()
    encoded = encode_obs_frame(frame)
    (length,) = struct.unpack("<I", encoded[:4])
    assert length == OBS_PAYLOAD_LEN
    out = decode_obs_frame(encoded[4:])
    assert (out.env_id, out.episode, out.step, out.done) == (2, 0, 7, 0)
    assert np.array_equal(out.state, frame.state)
    assert np.array_equal(out.prev_action, frame.prev_action)
    assert np.array_equal(out.masked_depth, frame.masked_depth)
    assert np.array_equal(out.local_occ, frame.local_occ)
    assert np.array_equal(out.local_svs, frame.local_svs)
    assert np.array_equal(out.reward, frame.reward)


def test_act_frame_roundtrip_and_clamp():
    encoded = encode_act_frame(5, [0.25, -1.0, 1.0, 0.0])
    (length,) = struct.unpack("<I", encoded[:4])
    assert length == ACT_PAYLOAD_LEN
    env_id, action = decode_act_frame(encoded[4:])
    assert env_id == 5
    assert np.allclose(action, [0.25, -1.0, 1.0, 0.0], atol=1e-7)
    # out-of-range floats are clamped server-side
    _, clamped = decode_act_frame(encode_act_frame(0, [1.5, -2.0, 0.0, 0.5])[4:])
    assert np.array_equal(clamped[:2], [1.0, -1.0])


def test_handshake_roundtrip():
    data = encode_handshake(8)
    assert len(data) == 18
    assert decode_handshake(data) == 8


def test_handshake_rejections():
    good = encode_handshake(1)
    with pytest.raises(ProtocolError, match="magic"):
        decode_handshake(b"XXXX" + good[4:])
    with pytest.raises(ProtocolError, match="version"):
        decode_handshake(MAGIC + struct.pack("<HIQ", PROTOCOL_VERSION + 1, 1, layout_hash()))
    with pytest.raises(ProtocolError, match="layout hash"):
        decode_handshake(MAGIC + struct.pack("<HIQ", PROTOCOL_VERSION, 1, layout_hash() ^ 0xFF))
    with pytest.raises(ProtocolError, match="18 bytes"):
        decode_handshake(good[:-1])


def test_length_mismatch_names_lengths():
    with pytest.raises(ProtocolError, match=f"expected {OBS_PAYLOAD_LEN}, received 10"):
        decode_obs_frame(b"\x01" + b"\x00" * 9)
    with pytest.raises(ProtocolError, match=f"expected {ACT_PAYLOAD_LEN}"):
        decode_act_frame(b"\x02" * 7)


def test_wrong_message_type_rejected():
    frame = encode_obs_frame(_sample_frame())[4:]
    with pytest.raises(ProtocolError, match="act frame"):
        decode_act_frame(frame[:ACT_PAYLOAD_LEN])


def test_golden_frame_fixture():
    with open(os.path.join(DATA, "golden_obs_frame.bin"), "rb") as fh:
        blob = fh.read()
    with open(os.path.join(DATA, "golden_obs_frame.json")) as fh:
        expect = json.load(fh)
    assert int(expect["layout_hash"], 16) == layout_hash()
    frame = decode_obs_frame(blob[4:])
    assert frame.env_id == expect["env_id"]
    assert frame.episode == expect["episode"]
    assert frame.step == expect["step"]
    assert frame.done == expect["done"]
    assert np.allclose(frame.state, expect["state"], atol=0)
    assert np.allclose(frame.reward, expect["reward"], atol=0)
    for name, arr in (
        ("masked_depth", frame.masked_depth),
        ("local_occ", frame.local_occ),
        ("local_svs", frame.local_svs),
    ):
        flat = arr.ravel()
        assert flat.size == expect[name]["length"]
        assert float(flat.astype(np.float64).sum()) == pytest.approx(expect[name]["sum"], abs=1e-6)
        for i, v in expect[name]["samples"]:
            assert float(flat[i]) == pytest.approx(v, abs=0)
    # re-encoding reproduces the stored bytes exactly
    assert encode_obs_frame(frame) == blob


def _session_batch():
    episode = EpisodeConfig(
        episode_length=1.0,
        room=RoomSpec(length=5.0, width=5.0, height=2.5, obstacle_count=0),
        noise=NoiseParams.zero(),
        seed=0,
    )
    return BatchConfig(
        env_count=2, episodes_per_env=2, obstacle_counts=(0,),
        policy="bridge", output="", master_seed=7, episode=episode,
    )


def _run_client_session(batch):
    """Zero-action client over a socketpair; returns per-(env, episode) reward sums."""
    server_sock, client_sock = socket.socketpair()
    err = []

    def serve():
        try:
            serve_connection(server_sock, batch, timeout=30.0)
        except Exception as e:  # surfaced in the main thread
            err.append(e)
        finally:
            server_sock.close()

    thread = threading.Thread(target=serve)
    thread.start()
    stream = FrameStream(client_sock, timeout=30.0)
    hs = stream.recv_exact(18)
    env_count = decode_handshake(hs)
    stream.send_raw(hs)  # echo

    sums = {}
    steps = {}
    active = set(range(env_count))
    pending = dict.fromkeys(active, True)  # envs owed an action this round
    while active:
        frame = decode_obs_frame(stream.recv_frame())
        key = (frame.env_id, frame.episode)
        sums[key] = sums.get(key, 0.0) + float(frame.reward.sum())
        # lockstep: step indices increase by one within an episode
        if frame.step > 0:
            assert steps[key] == frame.step - 1
        steps[key] = frame.step
        if frame.done != 0:
            if frame.episode + 1 >= batch.episodes_per_env:
                active.discard(frame.env_id)
            continue
        stream.send_raw(encode_act_frame(frame.env_id, np.zeros(4)))
    client_sock.close()
    thread.join(timeout=30.0)
    if err:
        raise err[0]
    return sums


def test_lockstep_session_zero_actions():
    batch = _session_batch()
    sums = _run_client_session(batch)
    # every env ran every episode to termination
    assert set(sums) == {(e, ep) for e in range(2) for ep in range(2)}
    # identical rerun reproduces the reward sums exactly
    assert _run_client_session(batch) == sums


def test_session_rejects_duplicate_action():
    batch = _session_batch()
    server_sock, client_sock = socket.socketpair()
    result = {}

    def serve():
        try:
            serve_connection(server_sock, batch, timeout=10.0)
        except ProtocolError as e:
            result["error"] = e
        finally:
            server_sock.close()

    thread = threading.Thread(target=serve)
    thread.start()
    stream = FrameStream(client_sock, timeout=10.0)
    stream.send_raw(stream.recv_exact(18))
    decode_obs_frame(stream.recv_frame())
    decode_obs_frame(stream.recv_frame())
    stream.send_raw(encode_act_frame(0, np.zeros(4)))
    stream.send_raw(encode_act_frame(0, np.zeros(4)))  # duplicate in one round
    thread.join(timeout=30.0)
    client_sock.close()
    assert "duplicate" in str(result["error"])
