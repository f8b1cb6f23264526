import numpy as np
import pytest

from timbrelab import bank, synth


@pytest.fixture(scope="session")
def bank_patches():
    return bank.default_bank()


@pytest.fixture(scope="session")
def rendered_bank(bank_patches):
    """id -> AudioBuffer for every default-bank stimulus (rendered once)."""
    return {p.id: synth.render_patch(p) for p in bank_patches}


@pytest.fixture(scope="session")
def sine_440():
    t = np.arange(synth.SAMPLE_RATE) / synth.SAMPLE_RATE
    return synth.AudioBuffer(synth.SAMPLE_RATE, np.sin(2 * np.pi * 440.0 * t))
