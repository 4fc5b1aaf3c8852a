import math
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

# Add project root to sys.path
sys.path.append(str(Path(__file__).resolve().parent))

from src.core.errors import ParseError, DataError
from src.core.types import RawTrack
from src.core.models import DataConfig, RunConfig
from src.modules.data.cache import WindowCache
from src.modules.data.datasets import data_hash, dataset_root, load_windows, split_windows
from src.modules.data.parsers import (
    parse_ethucy, parse_sdd, infer_frame_step, load_ethucy, load_sdd, sdd_key, Recording
)
from src.modules.data.splits import (
    leave_one_out_split, sdd_split, validation_split, windows_by_scene, recording_label, scene_of
)
from src.modules.data.synthetic import synthetic_windows
from src.modules.data.windows import build_windows, build_scene, augment_rotation, rotation_matrix
from src.modules.social.graph import edge_geometry

import torch


def track(agent_id, frames, positions, unit="meters"):
    return RawTrack(agent_id=agent_id, frames=np.asarray(frames, dtype=np.int64),
                    positions=np.asarray(positions, dtype=np.float64), unit=unit)


def straight_track(agent_id, start_frame, n, start_xy, step_xy, frame_step=10):
    frames = start_frame + frame_step * np.arange(n)
    positions = np.asarray(start_xy) + np.arange(n)[:, None] * np.asarray(step_xy)
    return track(agent_id, frames, positions)


# --- parse_ethucy ---------------------------------------------------------

def test_parse_ethucy_two_rows():
    tracks = parse_ethucy("0 1 1.0 2.0\n10 1 1.5 2.0")
    assert len(tracks) == 1
    t = tracks[0]
    assert t.agent_id == 1 and t.unit == "meters"
    assert t.frames.tolist() == [0, 10]
    np.testing.assert_allclose(t.positions, [[1.0, 2.0], [1.5, 2.0]])


def test_parse_ethucy_empty_text():
    assert parse_ethucy("") == []
    assert parse_ethucy("\n  \n") == []


def test_parse_ethucy_matches_row_grouping():
    rng = np.random.default_rng(3)
    rows = []
    for frame in range(0, 100, 10):
        for agent in rng.choice(np.arange(1, 9), size=5, replace=False):
            rows.append((frame, int(agent), round(float(rng.uniform(-5, 5)), 3), round(float(rng.uniform(0, 9)), 3)))
    rng.shuffle(rows)
    text = "\n".join(f"{f}.0\t{a}.0\t{x}\t{y}" for f, a, x, y in rows)

    expected = defaultdict(list)
    for line in text.splitlines():
        f, a, x, y = line.split()
        expected[int(float(a))].append((int(float(f)), float(x), float(y)))

    tracks = parse_ethucy(text)
    assert len(rows) == 50
    assert [t.agent_id for t in tracks] == sorted(expected)
    for t in tracks:
        ordered = sorted(expected[t.agent_id])
        assert t.frames.tolist() == [f for f, _, _ in ordered]
        np.testing.assert_array_equal(t.positions, [[x, y] for _, x, y in ordered])


def test_parse_ethucy_errors_carry_line_numbers():
    with pytest.raises(ParseError, match="line 2"):
        parse_ethucy("0 1 1.0 2.0\n10 1 1.5")
    with pytest.raises(ParseError, match="line 1"):
        parse_ethucy("zero 1 1.0 2.0")
    with pytest.raises(ParseError, match="duplicate"):
        parse_ethucy("0 1 1.0 2.0\n0 1 1.5 2.0")


# --- parse_sdd -------------------------------------------------------------

def test_parse_sdd_box_center():
    tracks = parse_sdd('5 10 20 30 40 0 0 0 0 "Pedestrian"')
    assert len(tracks) == 1
    t = tracks[0]
    assert t.agent_id == 5 and t.unit == "pixels" and t.label == "Pedestrian"
    assert t.frames.tolist() == [0]
    np.testing.assert_allclose(t.positions, [[20.0, 30.0]])


def test_parse_sdd_stride_twelve():
    text = "\n".join(f'1 0 0 2 2 {f} 0 0 0 "Biker"' for f in range(25))
    assert parse_sdd(text)[0].frames.tolist() == [0, 12, 24]


def test_parse_sdd_matches_filter_then_stride():
    rng = np.random.default_rng(11)
    lines = []
    for i in range(100):
        tid = int(rng.integers(0, 4))
        frame = int(rng.integers(0, 120))
        xmin, ymin = rng.integers(0, 500, size=2)
        w, h = rng.integers(1, 40, size=2)
        lost = int(rng.random() < 0.2)
        lines.append(f'{tid} {xmin} {ymin} {xmin + w} {ymin + h} {frame} {lost} 0 0 "Pedestrian"')
    # drop duplicate (track, frame) pairs, which the parser rejects
    seen, unique = set(), []
    for line in lines:
        tokens = line.split()
        key = (tokens[0], tokens[5])
        if key not in seen:
            seen.add(key)
            unique.append(line)
    text = "\n".join(unique)

    oracle = defaultdict(dict)
    for line in unique:
        tokens = line.split()
        if tokens[6] == "1" or int(tokens[5]) % 12 != 0:
            continue
        x = (float(tokens[1]) + float(tokens[3])) / 2
        y = (float(tokens[2]) + float(tokens[4])) / 2
        oracle[int(tokens[0])][int(tokens[5])] = (x, y)

    tracks = parse_sdd(text)
    assert {t.agent_id for t in tracks} == set(oracle)
    for t in tracks:
        frames = sorted(oracle[t.agent_id])
        assert t.frames.tolist() == frames
        np.testing.assert_allclose(t.positions, [oracle[t.agent_id][f] for f in frames])


def test_parse_sdd_errors():
    with pytest.raises(ParseError, match="not an integer"):
        parse_sdd('1 0 0 2 2 3.5 0 0 0 "Biker"')
    with pytest.raises(ParseError, match="inverted"):
        parse_sdd('1 10 0 2 2 0 0 0 0 "Biker"')


def test_infer_frame_step():
    tracks = [straight_track(1, 0, 5, (0, 0), (1, 0), frame_step=6)]
    assert infer_frame_step(tracks) == 6
    assert infer_frame_step([]) == 1


# --- build_windows --------------------------------------------------------

def test_two_agents_one_meter_apart():
    a = straight_track(1, 0, 20, (0.0, 0.0), (0.1, 0.0))
    b = straight_track(2, 0, 20, (0.0, 1.0), (0.1, 0.0))
    windows = build_windows([a, b], max_dist=10.0)
    assert len(windows) == 2
    assert [w.neighbor_ids for w in windows] == [[2], [1]]


def test_two_agents_fifteen_meters_apart():
    a = straight_track(1, 0, 20, (0.0, 0.0), (0.1, 0.0))
    b = straight_track(2, 0, 20, (0.0, 15.0), (0.1, 0.0))
    windows = build_windows([a, b], max_dist=10.0)
    assert len(windows) == 2
    assert all(w.num_neighbors == 0 for w in windows)


def test_normalization_and_velocity():
    a = straight_track(1, 0, 22, (3.0, -2.0), (0.3, 0.1))
    for w in build_windows([a]):
        assert np.linalg.norm(w.history[-1]) == 0.0
        np.testing.assert_allclose(w.velocity, w.history[-1] - w.history[-2])
        np.testing.assert_allclose(w.velocity, [0.3, 0.1], atol=1e-12)
        assert w.history.shape == (8, 2) and w.future.shape == (12, 2)


def _staggered_scene(seed=5):
    rng = np.random.default_rng(seed)
    tracks = []
    for agent in range(1, 6):
        start = int(rng.integers(0, 6)) * 10
        n = int(rng.integers(18, 30))
        positions = rng.uniform(-6, 6, size=2) + np.cumsum(rng.normal(0, 0.3, size=(n, 2)), axis=0)
        tracks.append(track(agent, start + 10 * np.arange(n), positions))
    # one agent with a gap in its track
    gap = tracks[0]
    keep = np.ones(len(gap), dtype=bool)
    keep[len(gap) // 2] = False
    tracks[0] = track(gap.agent_id, gap.frames[keep], gap.positions[keep])
    return tracks


def test_build_windows_matches_exhaustive_enumeration():
    tracks = _staggered_scene()
    max_dist = 4.0
    lookup = {t.agent_id: dict(zip(t.frames.tolist(), map(tuple, t.positions))) for t in tracks}
    first = min(int(t.frames[0]) for t in tracks)
    last = max(int(t.frames[-1]) for t in tracks)

    expected = []
    for anchor in range(first, last + 1, 10):
        obs = [anchor - 10 * s for s in range(7, -1, -1)]
        fut = [anchor + 10 * s for s in range(1, 13)]
        for agent in sorted(lookup):
            frames = lookup[agent]
            if not all(f in frames for f in obs + fut):
                continue
            p0 = np.asarray(frames[anchor])
            neighbors = []
            for other in sorted(lookup):
                if other == agent or not all(f in lookup[other] for f in obs):
                    continue
                if np.linalg.norm(np.asarray(lookup[other][anchor]) - p0) <= max_dist:
                    neighbors.append(other)
            expected.append((anchor, agent, neighbors))

    windows = build_windows(tracks, max_dist=max_dist, frame_step=10)
    assert expected, "scene should produce at least one window"
    assert [(w.anchor_frame, w.agent_id, w.neighbor_ids) for w in windows] == expected


def test_neighbor_candidacy_is_symmetric():
    tracks = _staggered_scene(seed=9)
    windows = build_windows(tracks, max_dist=5.0, frame_step=10)
    by_key = {(w.anchor_frame, w.agent_id): w for w in windows}
    for (anchor, agent), w in by_key.items():
        for other in w.neighbor_ids:
            if (anchor, other) in by_key:
                assert agent in by_key[(anchor, other)].neighbor_ids


def test_neighbor_histories_in_own_frame():
    a = straight_track(1, 0, 20, (0.0, 0.0), (0.1, 0.0))
    b = straight_track(2, 0, 20, (2.0, 1.0), (0.0, 0.2))
    w = build_windows([a, b])[0]
    np.testing.assert_allclose(w.neighbor_histories[0, -1], [0.0, 0.0])
    np.testing.assert_allclose(w.neighbor_offsets[0], [2.0, 1.0 + 7 * 0.2] - w.origin)


def test_build_scene_restricts_to_grid():
    tracks = _staggered_scene()
    scene = build_scene(tracks, anchor_frame=100, frame_step=10)
    assert len(scene.frame_grid) == 20
    assert scene.frame_grid[7] == 100
    for t in scene.agent_tracks:
        assert set(t.frames.tolist()) <= set(scene.frame_grid.tolist())
    primaries = [t.agent_id for t in scene.agent_tracks if len(t) == len(scene.frame_grid)]
    windows = [w for w in build_windows(tracks, frame_step=10) if w.anchor_frame == 100]
    assert sorted(primaries) == sorted(w.agent_id for w in windows)


# --- augment_rotation -----------------------------------------------------

def test_rotation_identity_and_half_turn():
    w = synthetic_windows(1, seed=2, max_neighbors=2)[0]
    same = augment_rotation(w, 0.0)
    np.testing.assert_allclose(same.history, w.history, atol=1e-15)
    np.testing.assert_allclose(rotation_matrix(np.pi) @ np.array([1.0, 0.0]), [-1.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("angle, seed", [(0.3, 0), (-2.1, 7), (3.14159, 21), (9.7, 123), (-7.25, 999)])
def test_rotation_preserves_distances_and_edge_geometry(angle, seed):
    w = next(w for w in synthetic_windows(20, seed=seed, max_neighbors=3) if w.num_neighbors)
    r = augment_rotation(w, angle)

    def world_histories(x):
        own = x.history[None]
        others = x.neighbor_histories + x.neighbor_offsets[:, None, :]
        return np.concatenate([own, others])

    before, after = world_histories(w), world_histories(r)
    for t in range(before.shape[1]):
        d0 = np.linalg.norm(before[:, None, t] - before[None, :, t], axis=-1)
        d1 = np.linalg.norm(after[:, None, t] - after[None, :, t], axis=-1)
        np.testing.assert_allclose(d1, d0, atol=1e-9)

    def geometry(x):
        n = x.num_neighbors
        p_i = torch.zeros(n, 2, dtype=torch.float64)
        p_j = torch.as_tensor(x.neighbor_offsets)
        v_i = torch.as_tensor(np.repeat(x.velocity[None], n, axis=0))
        return edge_geometry(p_i, p_j, v_i).numpy()

    np.testing.assert_allclose(geometry(r), geometry(w), atol=1e-9)


# --- splits ---------------------------------------------------------------

def _fake_ethucy():
    return {scene: synthetic_windows(3 + i, seed=i, scene=scene)
            for i, scene in enumerate(["eth", "hotel", "univ", "zara1", "zara2"])}


def test_leave_one_out_zara1():
    dataset = _fake_ethucy()
    train, test = leave_one_out_split(dataset, "Zara1")
    assert {w.scene for w in train} == {"eth", "hotel", "univ", "zara2"}
    assert {w.scene for w in test} == {"zara1"}


@pytest.mark.parametrize("held_out", ["eth", "hotel", "univ", "zara1", "zara2"])
def test_leave_one_out_partition(held_out):
    dataset = _fake_ethucy()
    train, test = leave_one_out_split(dataset, held_out)
    train_scenes = {w.scene for w in train}
    test_scenes = {w.scene for w in test}
    assert train_scenes | test_scenes == set(dataset)
    assert not train_scenes & test_scenes
    assert len(train_scenes) == 4
    assert len(test) == len(dataset[held_out])
    assert len(train) == sum(len(v) for k, v in dataset.items() if k != held_out)


def test_leave_one_out_unknown_scene():
    with pytest.raises(DataError, match="Unknown scene"):
        leave_one_out_split(_fake_ethucy(), "atlantis")


def test_windows_by_scene_matches_per_recording_counts():
    tracks = _staggered_scene()
    dataset = {
        "univ": [Recording("univ", "students001", tracks, 10), Recording("univ", "students003", tracks, 10)],
        "hotel": [Recording("hotel", "hotel", tracks, 10)],
    }
    out = windows_by_scene(dataset, max_dist=4.0)
    per_recording = len(build_windows(tracks, max_dist=4.0, frame_step=10))
    assert len(out["univ"]) == 2 * per_recording
    assert len(out["hotel"]) == per_recording
    assert {w.scene for w in out["univ"]} == {"univ/students001", "univ/students003"}
    assert {w.scene for w in out["hotel"]} == {"hotel"}
    assert scene_of("univ/students001") == "univ"
    assert recording_label(dataset["hotel"][0]) == "hotel"


def test_sdd_split_requires_listed_videos():
    dataset = {"coupa_0": synthetic_windows(2, scene="coupa_0"), "bookstore_0": synthetic_windows(3, scene="bookstore_0")}
    train, test = sdd_split(dataset, ["coupa_0"])
    assert len(train) == 3 and len(test) == 2
    with pytest.raises(DataError, match="missing"):
        sdd_split(dataset, ["coupa_0", "quad_3"])


def test_validation_split_takes_latest_anchors():
    windows = synthetic_windows(20, seed=1, scene="zara2")
    train, val = validation_split(windows, 0.1)
    assert len(val) == math.ceil(20 * 0.1)
    assert min(w.anchor_frame for w in val) > max(w.anchor_frame for w in train)
    all_train, no_val = validation_split(windows, 0.0)
    assert len(all_train) == 20 and no_val == []


# --- files, cache, determinism ---------------------------------------------

def test_load_ethucy_and_sdd_layouts(tmp_path):
    eth = tmp_path / "ethucy"
    for scene in ["eth", "hotel"]:
        (eth / scene).mkdir(parents=True)
        (eth / scene / f"{scene}.txt").write_text("0 1 1.0 2.0\n6 1 1.5 2.0\n", encoding="utf-8")
    loaded = load_ethucy(eth, ["eth", "hotel"])
    assert set(loaded) == {"eth", "hotel"}
    assert loaded["eth"][0].frame_step == 6
    with pytest.raises(DataError):
        load_ethucy(eth, ["univ"])
    with pytest.raises(FileNotFoundError):
        load_ethucy(tmp_path / "nowhere")

    ann = tmp_path / "sdd" / "annotations" / "coupa" / "video3"
    ann.mkdir(parents=True)
    (ann / "annotations.txt").write_text('5 10 20 30 40 0 0 0 0 "Pedestrian"\n', encoding="utf-8")
    assert sdd_key(ann / "annotations.txt") == "coupa_3"
    assert list(load_sdd(tmp_path / "sdd")) == ["coupa_3"]


def test_dataset_settings_come_from_the_run_config(tmp_path):
    eth = tmp_path / "elsewhere"
    for scene in ["eth", "hotel", "univ"]:
        (eth / scene).mkdir(parents=True)
        (eth / scene / f"{scene}.txt").write_text("0 1 1.0 2.0\n10 1 1.5 2.0\n", encoding="utf-8")
    run_config = RunConfig(command="prepare", dataset="ethucy",
                           data=DataConfig(root=str(eth), scenes=["eth", "hotel"]))
    assert dataset_root(run_config) == eth
    loaded = load_windows(run_config, WindowCache(tmp_path / "cache"))
    assert sorted(loaded) == ["eth", "hotel"]

    videos = {"coupa_0": synthetic_windows(2, scene="coupa_0"), "bookstore_0": synthetic_windows(3, scene="bookstore_0")}
    sdd = RunConfig(command="eval", dataset="sdd", data=DataConfig(test_videos=["bookstore_0"]))
    train, test = split_windows(sdd, videos)
    assert len(train) == 2 and len(test) == 3

    small = RunConfig(command="prepare", dataset="synthetic", data=DataConfig(synthetic_windows=40))
    assert len(load_windows(small)["synthetic"]) == 40
    assert data_hash(small) != data_hash(RunConfig(command="prepare", dataset="synthetic"))


def test_window_cache_reuses_and_invalidates(tmp_path):
    cache = WindowCache(tmp_path)
    windows = synthetic_windows(5, seed=4, max_neighbors=2)
    calls = []

    def builder():
        calls.append(1)
        return windows

    params = {"obs_len": 8, "max_distance": 10.0}
    first = cache.load_or_build("synthetic", params, builder)
    second = cache.load_or_build("synthetic", params, builder)
    assert len(calls) == 1
    assert [w.key for w in second] == [w.key for w in first]
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.history, b.history)
        np.testing.assert_array_equal(a.neighbor_histories, b.neighbor_histories)

    cache.load_or_build("synthetic", {**params, "max_distance": 5.0}, builder)
    assert len(calls) == 2


def test_window_stream_is_byte_identical(tmp_path):
    tracks = _staggered_scene()
    a = WindowCache(tmp_path / "a")
    b = WindowCache(tmp_path / "b")
    a.save(a.path_for("scene"), build_windows(tracks, frame_step=10), {"seed": 0})
    b.save(b.path_for("scene"), build_windows(tracks, frame_step=10), {"seed": 0})
    assert a.path_for("scene").read_bytes() == b.path_for("scene").read_bytes()


def test_synthetic_windows_are_seeded():
    a = synthetic_windows(10, seed=7)
    b = synthetic_windows(10, seed=7)
    c = synthetic_windows(10, seed=8)
    assert all(np.array_equal(x.future, y.future) for x, y in zip(a, b))
    assert not all(np.array_equal(x.future, y.future) for x, y in zip(a, c))
    with pytest.raises(ValueError):
        synthetic_windows(1, kinds=("teleport",))
