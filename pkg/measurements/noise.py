"""
Seeded Gaussian noise on the data voltages U.

The standard deviation is RMS(U over the frame's valid records) · 10^(-snr/20),
so the realised signal-to-noise ratio is snr_db on average. V is never touched.
"""
import logging
from typing import Optional

import numpy as np

from errors import EmptyInputError, ParameterError
from measurements.frames import MeasurementFrame

logger = logging.getLogger(__name__)


def noise_sigma(U: np.ndarray, snr_db: float) -> float:
    rms = float(np.sqrt(np.mean(np.square(U))))
    return rms * 10.0 ** (-snr_db / 20.0)


def add_noise(frame: MeasurementFrame, snr_db: float, seed: Optional[int]) -> MeasurementFrame:
    """
    Args:
        frame: noiseless frame
        snr_db: signal-to-noise ratio in dB; +inf returns the frame unchanged
        seed: RNG seed (required for a finite snr_db)

    Returns:
        new frame with U' = U + ε on the valid records only; invalid records are
        left untouched and stay invalid. The provenance records snr_db, seed and σ.
    """
    if np.isposinf(snr_db):
        return frame
    if not np.isfinite(snr_db):
        raise ParameterError("SNR must be finite or +inf", {"snr_db": snr_db})
    if seed is None:
        raise ParameterError("A seed is required when adding noise")
    valid = frame.valid
    if not valid.any():
        raise EmptyInputError("Frame has no valid records to add noise to", {"n": frame.n})
    U = frame.U
    sigma = noise_sigma(U[valid], snr_db)
    rng = np.random.default_rng(seed)
    noisy = U.copy()
    noisy[valid] = U[valid] + rng.normal(0.0, sigma, size=int(valid.sum()))
    logger.debug(f"Frame n={frame.n}: noise σ={sigma:.4e} at {snr_db:g} dB (seed {seed})")
    return frame.with_voltages(noisy, noise={"snr_db": float(snr_db), "seed": int(seed), "sigma": sigma})


def empirical_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    signal = np.sqrt(np.mean(np.square(clean)))
    noise = np.sqrt(np.mean(np.square(noisy - clean)))
    return float(20.0 * np.log10(signal / noise))


def frame_noise_sigma(frame: MeasurementFrame) -> Optional[float]:
    """
    Noise deviation recorded on a frame; None for noiseless frames.

    Frames that only carry snr_db get σ back from the noisy RMS, which holds
    signal and noise power together.
    """
    noise = frame.provenance.get("noise")
    if not noise:
        return None
    if noise.get("sigma") is not None:
        return float(noise["sigma"])
    snr_db = float(noise["snr_db"])
    U = frame.U[frame.valid]
    if len(U) == 0:
        return None
    ratio = 10.0 ** (-snr_db / 20.0)
    return noise_sigma(U, snr_db) / np.sqrt(1.0 + ratio ** 2)
