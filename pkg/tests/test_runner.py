"""Policies, the feasible-coverage oracle on constructed scenes, batch metrics
accounting, and the throughput benchmark report."""

import csv
import io
from dataclasses import replace

import numpy as np
import pytest

from inspectsim.agent import NoiseParams
from inspectsim.config import BatchConfig, EpisodeConfig
from inspectsim.env import Observation
from inspectsim.mapping import FREE, OCCUPIED
from inspectsim.runner import (
    OrbitPolicy,
    RandomPolicy,
    bench,
    feasible_coverage,
    make_policy,
    run_batch,
)
from inspectsim.scene import RoomSpec, Scene, SceneObject, _wall_objects
from inspectsim.geometry import box_mesh, cylinder_mesh

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def _room_scene(extra_objects):
    objs = _wall_objects(8.0, 8.0, 4.0) + extra_objects
    return Scene(objs, (-0.1, -0.1, -0.1), (8.1, 8.1, 4.1))


def _obs(masked_depth=None, local_occ=None):
    return Observation(
        state=np.zeros(13),
        prev_action=np.zeros(4),
        masked_depth=np.zeros((54, 96)) if masked_depth is None else masked_depth,
        local_occ=np.full((21, 21, 21), FREE, dtype=np.int8) if local_occ is None else local_occ,
        local_svs=np.zeros((21, 21, 21)),
    )


def test_feasible_isolated_object_fully_coverable():
    target = SceneObject(cylinder_mesh(0.3, 0.8), np.array([4.0, 4.0, 2.0]), IDENTITY_Q, 1, "cylinder")
    ids, fraction = feasible_coverage(_room_scene([target]), 1, 1.0, 0.2)
    assert fraction == 1.0
    assert len(ids) == 60


def test_feasible_wall_flush_object_loses_wall_faces():
    # cylinder almost touching the x=0 wall: faces pointing at the wall have no
    # collision-free in-band viewpoint
    target = SceneObject(cylinder_mesh(0.3, 0.8), np.array([0.45, 4.0, 2.0]), IDENTITY_Q, 1, "cylinder")
    scene = _room_scene([target])
    ids, fraction = feasible_coverage(scene, 1, 1.0, 0.2)
    assert fraction < 1.0
    obj = scene.objects[scene.semantic_object_ids()[1]]
    centroids = obj.world_vertices()[obj.mesh.faces].mean(axis=1)
    # the most wall-facing face (minimal centroid x) must be infeasible
    assert int(np.argmin(centroids[:, 0])) not in set(ids.tolist())


def test_feasible_occluding_slab_blocks_faces():
    # box target: +x faces (ids 8, 9) have a flat outward plane, so a full-height
    # full-width slab just past that face leaves them no front-side viewpoint
    target = SceneObject(box_mesh(0.6, 0.6, 0.6), np.array([4.0, 4.0, 2.0]), IDENTITY_Q, 1, "box")
    slab = SceneObject(box_mesh(0.1, 8.2, 4.2), np.array([4.7, 4.0, 2.0]), IDENTITY_Q, 0, "box")
    open_ids, _ = feasible_coverage(_room_scene([target]), 1, 1.0, 0.2)
    blocked_ids, blocked_frac = feasible_coverage(_room_scene([target, slab]), 1, 1.0, 0.2)
    assert {8, 9} <= set(open_ids.tolist())
    assert blocked_frac < 1.0
    assert not {8, 9} & set(blocked_ids.tolist())


def test_feasible_deterministic():
    target = SceneObject(cylinder_mesh(0.35, 1.0), np.array([3.0, 5.0, 2.0]), IDENTITY_Q, 1, "cylinder")
    scene = _room_scene([target])
    a = feasible_coverage(scene, 1, 1.0, 0.2)
    b = feasible_coverage(scene, 1, 1.0, 0.2)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


def test_orbit_policy_searches_without_mask():
    policy = OrbitPolicy(seed=0)
    a = policy(_obs())
    assert a[3] > 0.0  # nonzero yaw rate while searching
    assert np.all(np.abs(a) <= 1.0)


def test_orbit_policy_tracks_centered_target():
    # target blob centered at exactly d_ref: near-zero radial, strong strafe
    depth = np.zeros((54, 96))
    depth[24:30, 45:51] = 1.0
    policy = OrbitPolicy(seed=0, d_ref=1.0)
    a = policy(_obs(masked_depth=depth))
    assert abs(a[0]) < 0.15  # radial
    assert abs(a[1]) > 0.4  # tangential strafe
    assert abs(a[3]) < 0.1  # already centered


def test_orbit_policy_backs_off_close_target():
    depth = np.zeros((54, 96))
    depth[24:30, 45:51] = 0.4  # well inside d_ref
    a = OrbitPolicy(seed=0, d_ref=1.0)(_obs(masked_depth=depth))
    assert a[0] < -0.3


def test_orbit_policy_avoids_nearby_occupancy():
    # occupied cells directly ahead within the avoidance radius push backwards
    occ = np.full((21, 21, 21), FREE, dtype=np.int8)
    occ[12:14, 9:12, 10] = OCCUPIED  # 0.2-0.3 m ahead (+x)
    policy = OrbitPolicy(seed=0)
    policy.drift = np.zeros(2)
    a = policy(_obs(local_occ=occ))
    assert a[0] < 0.0


def test_make_policy():
    ep = EpisodeConfig()
    assert isinstance(make_policy("random", 0, ep), RandomPolicy)
    assert isinstance(make_policy("orbit", 0, ep), OrbitPolicy)
    with pytest.raises(ValueError):
        make_policy("nope", 0, ep)


def _tiny_batch(policy="random", seed=0):
    episode = EpisodeConfig(
        episode_length=2.0,
        room=RoomSpec(length=5.0, width=5.0, height=2.5, obstacle_count=0),
        noise=NoiseParams.zero(),
    )
    return BatchConfig(
        env_count=2,
        episodes_per_env=2,
        obstacle_counts=(0,),
        policy=policy,
        output="",
        master_seed=seed,
        episode=episode,
    )


def test_run_batch_accounting_and_determinism():
    batch = _tiny_batch()
    reports_a, csv_a = run_batch(batch)
    reports_b, csv_b = run_batch(batch)
    assert csv_a == csv_b  # identical master seed, identical CSV bytes
    rep = reports_a[0]
    assert rep.episodes == 4
    assert rep.crash_pct + rep.timeout_pct == pytest.approx(100.0, abs=1e-9)
    assert rep.bin_times[0] == 1.0
    assert np.all(rep.p05_coverage <= rep.mean_coverage + 1e-12)
    assert np.all(rep.mean_coverage <= rep.p95_coverage + 1e-12)


def test_run_batch_csv_schema():
    _, text = run_batch(_tiny_batch())
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["obstacles", "env_id", "episode", "t", "coverage", "f", "v", "p", "terminated"]
    assert all(len(r) == 9 for r in rows[1:])
    # coverage non-decreasing within each episode
    by_ep = {}
    for r in rows[1:]:
        by_ep.setdefault((r[1], r[2]), []).append(float(r[4]))
    for covs in by_ep.values():
        assert all(b >= a - 1e-12 for a, b in zip(covs, covs[1:]))


def test_run_batch_writes_csv(tmp_path):
    out = str(tmp_path / "metrics.csv")
    batch = replace(_tiny_batch(), output=out)
    _, text = run_batch(batch)
    assert open(out).read() == text


def test_bench_zero_steps():
    report = bench(2, 0, _tiny_batch().episode)
    assert report.total_steps == 0
    assert report.steps_per_sec_single == 0.0
    report.summary()  # must not divide by zero


def test_bench_reports_stage_timing():
    report = bench(2, 5, _tiny_batch().episode)
    assert report.total_steps == 20
    assert report.steps_per_sec_single > 0
    assert report.steps_per_sec_parallel > 0
    for stage in ("dynamics", "map", "render", "reward"):
        assert stage in report.stage_seconds
    assert "render" in report.summary()
