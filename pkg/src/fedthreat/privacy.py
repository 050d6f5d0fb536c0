"""Update clipping and Gaussian perturbation for client uploads.

Each client clips its update delta to L2 norm ``clip_norm`` and adds
``N(0, sigma^2)`` noise to every coordinate before transmission. The noise
generator is seeded per (run seed, client, round) so perturbation is
reproducible and clients never share a stream.

Privacy accounting uses the classical Gaussian-mechanism bound

    epsilon = C * sqrt(2 ln(1.25 / delta)) / sigma

per round, composed linearly over rounds. Linear composition is loose; a
moments/RDP accountant would give much smaller totals.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

# Stream tag separating noise draws from other seeded streams.
NOISE_STREAM = 0x6E6F


@dataclass(frozen=True)
class DpConfig:
    sigma: float = 0.0
    clip_norm: float = 1.0
    delta: float = 1e-5
    enabled: bool = False

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def active(self) -> bool:
        """True when uploads are actually clipped and noised."""
        return self.enabled and self.sigma > 0

    def to_dict(self) -> dict:
        return asdict(self)


def clip(theta, C: float) -> np.ndarray:
    """Scale ``theta`` onto the L2 ball of radius ``C`` if it lies outside."""
    if not C > 0:
        raise ValueError("clip norm must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    norm = float(np.linalg.norm(theta))
    if norm <= C:
        return theta.copy()
    return theta * (C / norm)


def noise_rng(seed: int, client_id: int, round_: int) -> np.random.Generator:
    return np.random.default_rng([seed, NOISE_STREAM, client_id, round_])


def perturb(theta, cfg: DpConfig, rng: np.random.Generator | int) -> np.ndarray:
    """Add i.i.d. ``N(0, sigma^2)`` noise to each coordinate.

    ``rng`` is a generator or an integer seed. With ``sigma == 0`` the input
    is returned unchanged (as a copy) and no randomness is consumed.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if cfg.sigma == 0:
        return theta.copy()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return theta + rng.normal(0.0, cfg.sigma, size=theta.shape)


def privatize(delta, cfg: DpConfig, seed: int, client_id: int, round_: int) -> np.ndarray:
    """Clip then perturb an update delta; identity unless ``cfg.active``."""
    delta = np.asarray(delta, dtype=np.float64)
    if not cfg.active:
        return delta
    return perturb(clip(delta, cfg.clip_norm), cfg, noise_rng(seed, client_id, round_))


def epsilon_report(cfg: DpConfig) -> float:
    """Per-round epsilon of the Gaussian mechanism with sensitivity ``clip_norm``."""
    if cfg.sigma == 0:
        raise ValueError("epsilon is unbounded when sigma is 0")
    return cfg.clip_norm * math.sqrt(2.0 * math.log(1.25 / cfg.delta)) / cfg.sigma


def composed_epsilon(cfg: DpConfig, rounds: int) -> float:
    """Simple (linear) composition over ``rounds``; ``inf`` when DP is inactive."""
    if not cfg.active:
        return math.inf
    return rounds * epsilon_report(cfg)
