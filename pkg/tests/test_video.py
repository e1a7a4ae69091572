import numpy as np
import pytest

from tpseg.cca import segment
from tpseg.image import ImageBuffer, save_ppm
from tpseg.measures import MeasureSpec
from tpseg.synth import water_clip
from tpseg.video import FrameError, FrameSequence, segment_sequence, temporal_drift

EUCLID = MeasureSpec("euclid", {"th": 15})


def test_identical_frames_identical_output():
    frame = water_clip(1)[0]
    res = segment_sequence([frame, frame], EUCLID)
    assert res[0].result.label_map == res[1].result.label_map
    assert res[0].render() == res[1].render()
    assert temporal_drift(res) == [(0, 1, 0.0)]


def test_stateless_across_frames():
    frames = water_clip(4)
    seq = segment_sequence(frames, EUCLID, jobs=3)
    for k, fr in enumerate(seq):
        alone = segment(frames[k], EUCLID.build(frames[k]), stats=False)
        assert fr.index == k
        assert fr.result.label_map == alone.label_map
        assert set(fr.timings) == {"decode", "segment", "render"}


def test_inverted_frame_drift():
    rng = np.random.default_rng(0)
    data = rng.integers(0, 256, size=(6, 8, 3), dtype=np.uint8)
    frames = [ImageBuffer(data), ImageBuffer(255 - data)]
    res = segment_sequence(frames, MeasureSpec("always-true"))
    mean = data.reshape(-1, 3).mean(axis=0)
    want = np.mean(np.abs(np.floor(mean + 0.5) - np.floor(255 - mean + 0.5)))
    (a, b, drift), = temporal_drift(res)
    assert drift == pytest.approx(want)
    (_, _, back), = temporal_drift(res[::-1])
    assert back == drift


def test_water_is_large_segment():
    frames = water_clip(4)
    spec = MeasureSpec("channel", {"target": (0, 0, 220), "channels": (2,), "th": 72})
    for fr in segment_sequence(frames, spec):
        areas = np.bincount(fr.result.labels.ravel())
        assert areas.max() / fr.image.size > 0.30


def test_top_segment_colours_stable():
    frames = water_clip(4)
    res = segment_sequence(frames, EUCLID)
    tops = []
    for fr in res:
        st_ = fr.result.label_map.with_stats(fr.image).stats
        order = np.argsort(st_.area[1:])[::-1][:5] + 1
        tops.append(st_.mean_color[order])
    for a, b in zip(tops, tops[1:]):
        assert np.abs(a - b).max() < 10


def test_drift_needs_two_frames():
    res = segment_sequence(water_clip(1), EUCLID)
    with pytest.raises(FrameError):
        temporal_drift(res)


def test_frame_sequence_files(tmp_path):
    frames = water_clip(3, 20, 30)
    for k, f in zip((10, 20, 30), frames):
        save_ppm(f, tmp_path / f"frame{k:06d}.ppm")
    seq = FrameSequence(str(tmp_path / "frame%06d.ppm"), 10, 30, 10)
    assert list(seq.indices) == [10, 20, 30] and len(seq) == 3
    res = segment_sequence(seq, EUCLID, render=False)
    assert [r.index for r in res] == [10, 20, 30]
    assert res[0].rendered is None and res[0].render().shape == (20, 30)
    with pytest.raises(FrameError, match="missing"):
        segment_sequence(FrameSequence(str(tmp_path / "frame%06d.ppm"), 10, 11), EUCLID)


def test_dimension_drift(tmp_path):
    save_ppm(ImageBuffer(np.zeros((4, 4, 3), np.uint8)), tmp_path / "f0.ppm")
    save_ppm(ImageBuffer(np.zeros((4, 5, 3), np.uint8)), tmp_path / "f1.ppm")
    with pytest.raises(FrameError, match="shape"):
        segment_sequence(FrameSequence(str(tmp_path / "f%d.ppm"), 0, 1), EUCLID)


def test_frame_sequence_validation():
    with pytest.raises(ValueError):
        FrameSequence("f%d.ppm", 5, 1)
    with pytest.raises(ValueError):
        FrameSequence("frames.ppm", 0, 1)
    with pytest.raises(ValueError):
        FrameSequence("f%d.ppm", 0, 1, 0)
