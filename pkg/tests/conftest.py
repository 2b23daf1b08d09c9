import numpy as np
import pytest

from maskbeam.simharness import SceneConfig, simulate_scene, speech_like_source
from maskbeam.stft import AudioBuffer, StftConfig, analyze


@pytest.fixture(scope="session")
def stft_cfg():
    return StftConfig()


@pytest.fixture(scope="session")
def small_scene():
    """2 s, 4-channel reverberant-noisy scene used by several test modules."""
    src = AudioBuffer(speech_like_source(32000, seed=100)[None, :], 16000)
    cfg = SceneConfig(seed=0, snr_db=10.0, decay_t60=0.3, tail_onset_s=0.024)
    return simulate_scene(src, cfg)


@pytest.fixture(scope="session")
def small_scene_spec(small_scene, stft_cfg):
    return analyze(small_scene.mixed, stft_cfg)
