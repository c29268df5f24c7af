"""Synthetic latent-factor series for offline benchmarking and tests.

The generator produces an M-channel table whose channels are noisy linear
mixtures of a few smooth latent factors, with the target a clean function
of the same latents. PCA at P = n_latents should therefore keep nearly
all channel variance, and a forecaster fed the P scores sees the same
predictive content as one fed all M channels.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .dataset import SeriesTable
from .errors import ContractError
from .rng import SeededRng


def latent_rank_dataset(t: int = 5000, n_channels: int = 10, n_latents: int = 2,
                        seed: int = 0, noise: float = 0.05,
                        target_noise: float = 0.0) -> SeriesTable:
    """Quasi-periodic latent factors mixed into n_channels noisy channels.

    Each latent is a sum of two incommensurate sinusoids, so the series is
    smooth and forecastable. Channel noise is i.i.d. Gaussian with the
    given standard deviation; the target is a combination of the latents,
    noise-free by default. With target_noise > 0 the target carries its own
    observation noise, so its clean component is easier to recover from the
    channel ensemble than from the target's own history.
    """
    if t < 4:
        raise ContractError(f"t must be at least 4, got {t}")
    if n_latents < 1 or n_channels < n_latents:
        raise ContractError(
            f"need 1 <= n_latents <= n_channels, got {n_latents} and {n_channels}")
    if noise < 0:
        raise ContractError(f"noise must be non-negative, got {noise}")
    if target_noise < 0:
        raise ContractError(f"target_noise must be non-negative, got {target_noise}")
    rng = SeededRng(seed)
    grid = np.arange(t, dtype=np.float64)
    latents = np.empty((t, n_latents))
    for j in range(n_latents):
        p_slow = rng.uniform(60.0, 180.0, ())
        p_fast = rng.uniform(12.0, 45.0, ())
        ph1 = rng.uniform(0.0, 2.0 * np.pi, ())
        ph2 = rng.uniform(0.0, 2.0 * np.pi, ())
        latents[:, j] = (np.sin(2.0 * np.pi * grid / p_slow + ph1)
                         + 0.4 * np.sin(2.0 * np.pi * grid / p_fast + ph2))
    mixing = rng.normal((n_latents, n_channels))
    channels = latents @ mixing
    if noise > 0:
        channels = channels + noise * rng.normal((t, n_channels))
    weights = rng.normal((n_latents,))
    weights = weights / np.sqrt(np.sum(weights * weights))
    target = latents @ weights
    if target_noise > 0:
        # drawn last so target_noise=0 leaves the stream, and therefore
        # every other array, unchanged
        target = target + target_noise * rng.normal((t,))
    names = [f"c{i}" for i in range(n_channels)]
    return SeriesTable(channels=channels, target=target,
                       channel_names=names, target_name="y")


def write_csv(table: SeriesTable, path: str) -> None:
    """Write a SeriesTable as a load_csv-compatible file.

    Floats are emitted with repr so a load round trip is bit-exact. A
    synthetic hourly date column is included to exercise the timestamp
    path.
    """
    if table.target_in_channels:
        raise ContractError("write_csv expects the raw layout, target kept separate")
    stamps = pd.date_range("2016-01-01", periods=table.n_rows, freq="h")
    header = ["date"] + list(table.channel_names) + [table.target_name]
    lines = [",".join(header)]
    for i in range(table.n_rows):
        cells = [stamps[i].strftime("%Y-%m-%d %H:%M:%S")]
        cells += [repr(float(v)) for v in table.channels[i]]
        cells.append(repr(float(table.target[i])))
        lines.append(",".join(cells))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
