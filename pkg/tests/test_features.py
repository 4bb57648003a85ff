import struct

import numpy as np
import pytest

from motionguide import (BoundingBox, FeatureVolume, MotionCategory, SceneLayout,
                         SyntheticSceneSpec, Track, default_signatures,
                         load_volume, save_volume, synthesize_features)
from motionguide.errors import BadMagic, DimOverflow, TruncatedPayload

from conftest import single_track_layout


def random_volume(seed=0, shape=(3, 4, 5, 2)):
    rng = np.random.default_rng(seed)
    return FeatureVolume(rng.standard_normal(shape).astype(np.float32))


def test_roundtrip_bit_exact(tmp_path):
    volume = random_volume()
    path = tmp_path / "vol.fvol"
    save_volume(volume, path)
    again = load_volume(path)
    assert again.data.shape == volume.data.shape
    assert np.array_equal(
        again.data.view(np.uint32), volume.data.view(np.uint32))


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.fvol"
    path.write_bytes(b"NOPE" + b"\x00" * 30)
    with pytest.raises(BadMagic):
        load_volume(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "short.fvol"
    header = b"FVOL" + struct.pack("<HIIII", 1, 2, 2, 2, 2)
    path.write_bytes(header + b"\x00" * 10)  # needs 64 payload bytes
    with pytest.raises(TruncatedPayload):
        load_volume(path)


def test_dim_overflow(tmp_path):
    path = tmp_path / "huge.fvol"
    header = b"FVOL" + struct.pack("<HIIII", 1, 4096, 4096, 4096, 64)
    path.write_bytes(header)
    with pytest.raises(DimOverflow):
        load_volume(path)


# -- synthesis ----------------------------------------------------------------

def static_spec(noise=0.0, seed=42):
    layout = single_track_layout(BoundingBox(0.25, 0.25, 0.75, 0.75), frames=4)
    return SyntheticSceneSpec(layout=layout, seed=seed, noise_scale=noise,
                              signatures=default_signatures(layout, 3))


def test_zero_noise_static_frames_identical():
    volume = synthesize_features(static_spec(), 8, 8)
    for f in range(1, volume.frames):
        assert np.array_equal(volume.data[f], volume.data[0])


def test_zero_noise_shift_is_translation():
    frames, h, w = 3, 8, 8
    boxes = [BoundingBox(0.0 + f / w, 0.25, 0.5 + f / w, 0.75) for f in range(frames)]
    layout = SceneLayout(frames=frames, tracks=[
        Track(instance_id=0, category=MotionCategory.RIGID, boxes=boxes)])
    spec = SyntheticSceneSpec(layout=layout, seed=1, noise_scale=0.0,
                              signatures=default_signatures(layout, 2))
    volume = synthesize_features(spec, h, w)
    for f in range(frames - 1):
        assert np.array_equal(volume.data[f + 1, :, 1:], volume.data[f, :, :-1])


def test_synthesis_deterministic():
    a = synthesize_features(static_spec(noise=0.05), 8, 8)
    b = synthesize_features(static_spec(noise=0.05), 8, 8)
    assert np.array_equal(a.data, b.data)


def test_signature_separation_enforced():
    layout = SceneLayout(frames=2, tracks=[
        Track(instance_id=i, category=MotionCategory.MOTIONLESS,
              boxes=[BoundingBox(0.1 * i + 0.05, 0.1, 0.1 * i + 0.14, 0.3)] * 2)
        for i in range(2)])
    close = {0: np.array([1.0, 0.0]), 1: np.array([1.0, 0.05])}
    with pytest.raises(ValueError, match="not separated"):
        SyntheticSceneSpec(layout=layout, seed=0, noise_scale=0.1, signatures=close)


def test_overlap_reported():
    layout = SceneLayout(frames=1, tracks=[
        Track(instance_id=0, category=MotionCategory.MOTIONLESS,
              boxes=[BoundingBox(0.1, 0.1, 0.6, 0.6)]),
        Track(instance_id=1, category=MotionCategory.MOTIONLESS,
              boxes=[BoundingBox(0.4, 0.4, 0.9, 0.9)]),
    ])
    spec = SyntheticSceneSpec(layout=layout, seed=0, noise_scale=0.0,
                              signatures=default_signatures(layout, 2))
    with pytest.warns(UserWarning, match="overlapping"):
        synthesize_features(spec, 8, 8)
