"""
WAV file I/O (RIFF PCM, mono, 16-bit)
"""
from pathlib import Path
from typing import Union
import logging

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError
from .modem import AudioBuffer

logger = logging.getLogger(__name__)

PCM_SCALE = 32767


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Float samples to int16 (s_int = round(s * 32767)); out-of-range samples are clipped"""
    samples = np.asarray(samples, dtype=np.float64)
    clipped = np.clip(samples, -1.0, 1.0)
    if np.any(clipped != samples):
        logger.debug("clipped %d samples to [-1, 1]", int(np.count_nonzero(clipped != samples)))
    return np.round(clipped * PCM_SCALE).astype(np.int16)


def from_pcm(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float64) / PCM_SCALE
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483647
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 127.0
    return data.astype(np.float64)


def write_wav(audio: AudioBuffer, filepath: Union[str, Path]) -> None:
    wavfile.write(str(filepath), audio.sample_rate, to_pcm16(audio.samples))


def read_wav(filepath: Union[str, Path]) -> AudioBuffer:
    """
    Read a mono WAV file

    Raises:
        ConfigError: file has more than one channel
    """
    rate, data = wavfile.read(str(filepath))
    if data.ndim != 1:
        raise ConfigError(f"{filepath}: expected mono audio, got {data.shape[1]} channels")
    return AudioBuffer(from_pcm(data), int(rate))
