import numpy as np
import pytest

from motionguide import (BoundingBox, FeatureVolume, MotionCategory, SceneLayout,
                         Track, default_lexicon)


@pytest.fixture(scope="session")
def lexicon():
    return default_lexicon()


def make_volume(data) -> FeatureVolume:
    return FeatureVolume(np.asarray(data, dtype=np.float32))


def single_track_layout(box: BoundingBox, frames: int,
                        category=MotionCategory.MOTIONLESS,
                        instance_id: int = 0) -> SceneLayout:
    return SceneLayout(frames=frames, tracks=[
        Track(instance_id=instance_id, category=category, boxes=[box] * frames)])


def stamped_volume(frames: int, height: int, width: int, channels: int,
                   stamps: list[tuple[int, tuple[int, int, int, int], np.ndarray]],
                   noise: float = 0.0, seed: int = 0) -> FeatureVolume:
    """Hand-built volume: stamps are (frame, (x0, y0, x1, y1), signature)."""
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((frames, height, width, channels)).astype(np.float32) * noise
    for f, (x0, y0, x1, y1), sig in stamps:
        data[f, y0:y1, x0:x1, :] += np.asarray(sig, dtype=np.float32)
    return FeatureVolume(data)
