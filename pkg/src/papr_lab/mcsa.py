"""
Randomized pilot-sign search for PAPR reduction.

Each pilot subcarrier carries ``+sqrt(E)`` or ``-sqrt(E)``, where ``E`` is the
mean energy of the symbol's data subcarriers. Candidate sign vectors are drawn
uniformly at random (with replacement) until one brings the PAPR to or below
the target, or the trial budget runs out; in the latter case the lowest-PAPR
candidate seen is kept. The first trial is always the all-plus vector, so the
result never loses to the fixed-pilot baseline.

``exhaustive_search`` enumerates all ``2**N_p`` sign vectors through the plain
``insert_pilots -> idft -> papr_db`` path and serves as an oracle.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, DomainError
from .seeding import random_bits
from .signal import SpectrumSymbol, idft, idft_batch, mean_energy, papr_db, papr_db_batch

EXHAUSTIVE_MAX_PILOTS = 20

_ROW_CHUNK = 2048
_MAX_BLOCK = 64
_MEMO_MAX_PILOTS = 12


class PilotMagnitudeMode(str, enum.Enum):
    DATA_MEAN_ENERGY = "DATA_MEAN_ENERGY"


@dataclass(frozen=True)
class McsaConfig:
    target_papr_db: float
    max_trials: int = 256
    pilot_magnitude_mode: PilotMagnitudeMode = PilotMagnitudeMode.DATA_MEAN_ENERGY
    oversampling: int = 1

    def __post_init__(self):
        if int(self.max_trials) < 1:
            raise DomainError("max_trials must be >= 1")
        if int(self.oversampling) < 1:
            raise DomainError("oversampling must be >= 1")
        object.__setattr__(self, "max_trials", int(self.max_trials))
        object.__setattr__(self, "oversampling", int(self.oversampling))
        object.__setattr__(self, "target_papr_db", float(self.target_papr_db))
        object.__setattr__(
            self, "pilot_magnitude_mode", PilotMagnitudeMode(self.pilot_magnitude_mode)
        )


@dataclass(frozen=True)
class PilotConfig:
    signs: tuple[int, ...]
    magnitude: float

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if any(s not in (1, -1) for s in signs):
            raise DomainError(f"pilot signs must be +1 or -1, got {signs}")
        if not self.magnitude > 0:
            raise DomainError("pilot magnitude must be positive")
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "magnitude", float(self.magnitude))

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.signs, dtype=np.float64) * self.magnitude


@dataclass(frozen=True)
class McsaResult:
    pilots: PilotConfig
    papr_db: float
    trials_used: int
    met_target: bool


def default_pilot_indices(k: int, n_pilots: int) -> tuple[int, ...]:
    """Evenly spaced pilot positions ``i * (k // n_pilots)``."""
    if n_pilots < 0 or n_pilots >= k:
        raise DomainError(f"cannot place {n_pilots} pilots among {k} subcarriers")
    if n_pilots == 0:
        return ()
    step = k // n_pilots
    return tuple(i * step for i in range(n_pilots))


def pilot_magnitude(symbol: SpectrumSymbol) -> float:
    return float(np.sqrt(mean_energy(symbol.data)))


def insert_pilots(symbol: SpectrumSymbol, pilots: PilotConfig) -> SpectrumSymbol:
    if len(pilots.signs) != symbol.num_pilots:
        raise DomainError(
            f"{len(pilots.signs)} pilot values for {symbol.num_pilots} pilot positions"
        )
    if not symbol.num_pilots:
        return symbol
    values = symbol.values.copy()
    values[list(symbol.pilot_indices)] = pilots.values
    return SpectrumSymbol(values, symbol.pilot_indices, symbol.modulation)


def draw_signs(seed: int, max_trials: int, n_pilots: int) -> np.ndarray:
    """Candidate sign matrix ``(max_trials, n_pilots)``; row 0 is all +1.

    Later rows consume the seeded bit stream in order (bit 1 -> -1), so the
    first ``t`` rows do not depend on ``max_trials``.
    """
    signs = np.ones((max_trials, n_pilots), dtype=np.int8)
    bits = random_bits(seed, (max_trials - 1) * n_pilots)
    signs[1:] -= 2 * bits.reshape(max_trials - 1, n_pilots).astype(np.int8)
    return signs


def search_batch(spectra, pilot_indices, magnitudes, config: McsaConfig, seeds):
    """Run the search independently on every row of ``spectra``.

    Parameters
    ----------
    spectra : (R, K) complex array
        Symbols with data in place; pilot slots are overwritten.
    pilot_indices : sequence of int
    magnitudes : (R,) array
        Pilot magnitude ``sqrt(E)`` per row.
    config : McsaConfig
    seeds : sequence of R ints

    Returns
    -------
    signs : (R, N_p) int8
    papr : (R,) float
    trials : (R,) int
    met : (R,) bool
    """
    spectra = np.asarray(spectra, dtype=np.complex128)
    pilot_indices = list(pilot_indices)
    if not pilot_indices:
        raise DomainError("no pilot subcarriers to search over")
    magnitudes = np.asarray(magnitudes, dtype=np.float64)
    n_rows, n_pilots = spectra.shape[0], len(pilot_indices)
    if len(seeds) != n_rows or magnitudes.shape != (n_rows,):
        raise DomainError("seeds and magnitudes must have one entry per row")

    signs_out = np.empty((n_rows, n_pilots), dtype=np.int8)
    papr_out = np.empty(n_rows)
    trials_out = np.empty(n_rows, dtype=np.int64)
    met_out = np.zeros(n_rows, dtype=bool)
    for lo in range(0, n_rows, _ROW_CHUNK):
        hi = min(n_rows, lo + _ROW_CHUNK)
        cand_signs = np.stack(
            [draw_signs(s, config.max_trials, n_pilots) for s in seeds[lo:hi]]
        )
        best_idx, best, trials, met = _search_chunk(
            spectra[lo:hi], pilot_indices, magnitudes[lo:hi], config, cand_signs
        )
        signs_out[lo:hi] = cand_signs[np.arange(hi - lo), best_idx]
        papr_out[lo:hi] = best
        trials_out[lo:hi] = trials
        met_out[lo:hi] = met
    return signs_out, papr_out, trials_out, met_out


def _candidate_papr(spectra, pilot_indices, magnitudes, signs, oversampling):
    """PAPR of every candidate ``signs[r, t]`` applied to ``spectra[r]``."""
    cand = np.repeat(spectra[:, None, :], signs.shape[1], axis=1)
    cand[:, :, pilot_indices] = signs * magnitudes[:, None, None]
    return papr_db_batch(idft_batch(cand, oversampling))


def _trial_blocks(spectra, pilot_indices, magnitudes, config, cand_signs, active):
    """Yield ``(start, stop, rows, papr)`` for growing blocks of trials.

    When the budget exceeds the number of distinct sign vectors, each distinct
    vector is evaluated once per row and trials look their PAPR up; otherwise
    only rows still searching are evaluated, block by block.
    """
    n_trials, n_pilots = cand_signs.shape[1:]
    if n_pilots <= _MEMO_MAX_PILOTS and 2**n_pilots < n_trials:
        patterns = np.array(list(itertools.product((1, -1), repeat=n_pilots)), dtype=np.int8)
        table = _candidate_papr(
            spectra,
            pilot_indices,
            magnitudes,
            np.broadcast_to(patterns, (spectra.shape[0],) + patterns.shape),
            config.oversampling,
        )
        weights = 1 << np.arange(n_pilots - 1, -1, -1)
        codes = ((cand_signs < 0) * weights).sum(axis=-1)
        rows = np.arange(spectra.shape[0])
        yield 0, n_trials, rows, np.take_along_axis(table, codes, axis=1)
        return
    start, block = 0, 1
    while start < n_trials and active.any():
        stop = min(n_trials, start + block)
        rows = np.flatnonzero(active)
        p = _candidate_papr(
            spectra[rows], pilot_indices, magnitudes[rows], cand_signs[rows, start:stop],
            config.oversampling,
        )
        yield start, stop, rows, p
        start = stop
        block = min(2 * block, _MAX_BLOCK)


def _search_chunk(spectra, pilot_indices, magnitudes, config, cand_signs):
    n_rows = spectra.shape[0]
    best = np.full(n_rows, np.inf)
    best_idx = np.zeros(n_rows, dtype=np.int64)
    trials = np.full(n_rows, config.max_trials, dtype=np.int64)
    met = np.zeros(n_rows, dtype=bool)
    active = np.ones(n_rows, dtype=bool)

    # each block is resolved exactly as a one-trial-at-a-time loop would be
    blocks = _trial_blocks(spectra, pilot_indices, magnitudes, config, cand_signs, active)
    for start, _, rows, p in blocks:
        ar = np.arange(rows.size)
        low = np.argmin(p, axis=1)
        improved = p[ar, low] < best[rows]
        best[rows[improved]] = p[ar, low][improved]
        best_idx[rows[improved]] = start + low[improved]

        hit = p <= config.target_papr_db
        done = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        r_done = rows[done]
        best[r_done] = p[ar, first][done]
        best_idx[r_done] = start + first[done]
        trials[r_done] = start + first[done] + 1
        met[r_done] = True
        active[r_done] = False
    return best_idx, best, trials, met


def mcsa_search(symbol: SpectrumSymbol, config: McsaConfig, rng_seed: int) -> McsaResult:
    if symbol.num_pilots == 0:
        raise DomainError("symbol has no pilot subcarriers to search over")
    mag = pilot_magnitude(symbol)
    signs, papr, trials, met = search_batch(
        symbol.values[None, :], symbol.pilot_indices, np.array([mag]), config, [rng_seed]
    )
    return McsaResult(PilotConfig(signs[0], mag), float(papr[0]), int(trials[0]), bool(met[0]))


def exhaustive_search(symbol: SpectrumSymbol, oversampling: int = 1) -> McsaResult:
    """Global minimum over all sign vectors; ties go to the first in
    lexicographic order with +1 before -1."""
    n_p = symbol.num_pilots
    if n_p == 0:
        raise DomainError("symbol has no pilot subcarriers to search over")
    if n_p > EXHAUSTIVE_MAX_PILOTS:
        raise BudgetError(f"2**{n_p} candidates exceeds the exhaustive-search guard")
    mag = pilot_magnitude(symbol)
    best, best_signs, count = np.inf, None, 0
    for signs in itertools.product((1, -1), repeat=n_p):
        pilots = PilotConfig(signs, mag)
        p = papr_db(idft(insert_pilots(symbol, pilots), oversampling))
        count += 1
        if p < best:
            best, best_signs = p, pilots
    return McsaResult(best_signs, float(best), count, True)
