"""Simulated raters.

The study's human ratings are not published, so end-to-end runs use
synthetic participants: each rates pairs by a linear map from a latent
distance to the 0-9 scale, plus Gaussian noise, quantized to the 0.5
grid. Identical pairs are rated 0 plus noise truncated at zero. The
model is declared, not claimed to match human behavior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .ratings import RATING_MAX, RATING_STEP, RatingRecord, pair_schedule

SIM_TIMESTAMP = "1970-01-01T00:00:00Z"  # fixed: artifacts must be byte-reproducible


@dataclass(frozen=True)
class SimulatedRaterSpec:
    participants: int
    noise_sigma: float

    def validate(self) -> None:
        if self.participants < 1:
            raise ConfigurationError("need at least 1 simulated participant")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise sigma must be >= 0")


def latent_distances(coords: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances of planted coordinates."""
    coords = np.asarray(coords, dtype=np.float64)
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def feature_space_distances(columns: dict[str, np.ndarray]) -> np.ndarray:
    """Euclidean distances in the z-scored descriptor space."""
    stacked = np.column_stack([np.asarray(v, dtype=np.float64) for v in columns.values()])
    std = stacked.std(axis=0)
    std[std == 0] = 1.0
    z = (stacked - stacked.mean(axis=0)) / std
    return latent_distances(z)


def quantize_rating(value: float) -> float:
    snapped = round(value / RATING_STEP) * RATING_STEP
    return min(max(snapped, 0.0), RATING_MAX)


def participant_seed(seed: int, participant: int) -> int:
    return seed * 100003 + participant


def simulate_ratings(spec: SimulatedRaterSpec, distances: np.ndarray,
                     stimulus_ids: list[str], seed: int) -> list[RatingRecord]:
    """Rating records for every simulated participant, schedule included."""
    spec.validate()
    distances = np.asarray(distances, dtype=np.float64)
    n = len(stimulus_ids)
    if distances.shape != (n, n):
        raise ConfigurationError("distance matrix does not match stimulus count")
    d_max = distances.max()
    if d_max <= 0:
        raise ConfigurationError("latent distances are all zero")
    scale = RATING_MAX / d_max
    records: list[RatingRecord] = []
    for p in range(spec.participants):
        pid = f"sim{p:03d}"
        schedule = pair_schedule(n, participant_seed(seed, p))
        rng = np.random.default_rng((seed, p))
        for trial_index, (a, b) in enumerate(schedule):
            noise = rng.normal(0.0, spec.noise_sigma) if spec.noise_sigma > 0 else 0.0
            if a == b:
                value = max(0.0, noise)
            else:
                value = scale * distances[a, b] + noise
            records.append(RatingRecord(
                participant_id=pid,
                session_id=pid,
                trial_index=trial_index,
                stim_a=stimulus_ids[a],
                stim_b=stimulus_ids[b],
                rating=quantize_rating(value),
                submitted_at=SIM_TIMESTAMP,
            ))
    return records
