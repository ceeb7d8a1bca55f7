"""
Complex baseband primitives.

Constellation mappers (Gray QPSK and 16-QAM, unit average energy), an
arbitrary-length inverse DFT built on a mixed-radix Cooley-Tukey recursion,
and the energy / PAPR measurements used everywhere else in the package.

The batch helpers (``idft_batch``, ``papr_db_batch``) operate on the last axis
of an array and use only element-wise arithmetic, so a row's result is
bit-identical whether it is computed alone or inside a larger batch.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError

INV_SQRT2 = 1.0 / np.sqrt(2.0)
INV_SQRT10 = 1.0 / np.sqrt(10.0)


class Modulation(str, enum.Enum):
    QPSK = "QPSK"
    QAM16 = "QAM16"

    @property
    def bits_per_symbol(self) -> int:
        return 2 if self is Modulation.QPSK else 4

    @property
    def order(self) -> int:
        return 1 << self.bits_per_symbol


def _as_bits(bits, multiple: int) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise DomainError(f"bit vector must be 1-D, got shape {arr.shape}")
    if arr.size % multiple:
        raise DomainError(f"bit vector length {arr.size} is not a multiple of {multiple}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise DomainError("bit vector may only contain 0 and 1")
    return arr.astype(np.int8)


def map_qpsk(bits) -> np.ndarray:
    """Gray-map bit pairs ``(b0, b1)`` to ``((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)``."""
    b = _as_bits(bits, 2).reshape(-1, 2)
    return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) * INV_SQRT2


def _gray_level(sign_bit: np.ndarray, amp_bit: np.ndarray) -> np.ndarray:
    # 00 -> +1, 01 -> +3, 10 -> -1, 11 -> -3
    return (1 - 2 * sign_bit) * (1 + 2 * amp_bit)


def map_qam16(bits) -> np.ndarray:
    """Gray-map nibbles ``(i_sign, i_amp, q_sign, q_amp)`` onto 16-QAM.

    Each axis takes a level in ``{-3, -1, +1, +3} / sqrt(10)``; the sign bit
    selects the half-plane and the amplitude bit selects inner (0) or outer (1),
    so horizontally or vertically adjacent points differ in exactly one bit.
    """
    b = _as_bits(bits, 4).reshape(-1, 4)
    re = _gray_level(b[:, 0], b[:, 1])
    im = _gray_level(b[:, 2], b[:, 3])
    return (re + 1j * im) * INV_SQRT10


def map_bits(bits, modulation: Modulation) -> np.ndarray:
    modulation = Modulation(modulation)
    if modulation is Modulation.QPSK:
        return map_qpsk(bits)
    return map_qam16(bits)


@lru_cache(maxsize=None)
def constellation(modulation: Modulation) -> np.ndarray:
    """All points of ``modulation`` in natural bit-label order."""
    modulation = Modulation(modulation)
    m = modulation.bits_per_symbol
    labels = np.arange(modulation.order)
    bits = ((labels[:, None] >> np.arange(m - 1, -1, -1)) & 1).ravel()
    points = map_bits(bits, modulation)
    points.setflags(write=False)
    return points


@dataclass(frozen=True)
class SpectrumSymbol:
    """One frequency-domain OFDM symbol.

    ``values[k]`` for ``k`` in ``pilot_indices`` holds the pilot; every other
    entry must be a point of ``modulation``.
    """

    values: np.ndarray
    pilot_indices: tuple[int, ...] = ()
    modulation: Modulation = Modulation.QPSK

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.ndim != 1:
            raise DomainError("spectrum must be a 1-D vector")
        k = values.size
        if k < 2:
            raise DomainError(f"need at least 2 subcarriers, got {k}")
        pilots = tuple(int(i) for i in self.pilot_indices)
        if len(pilots) >= k:
            raise DomainError(f"{len(pilots)} pilots leave no data subcarriers in K={k}")
        if any(b <= a for a, b in zip(pilots, pilots[1:])):
            raise DomainError("pilot indices must be strictly increasing")
        if pilots and (pilots[0] < 0 or pilots[-1] >= k):
            raise DomainError(f"pilot indices must lie in [0, {k})")
        if not np.isfinite(values).all():
            raise DomainError("spectrum contains non-finite values")
        modulation = Modulation(self.modulation)
        data = values[data_indices(k, pilots)]
        dist = np.abs(data[:, None] - constellation(modulation)[None, :]).min(axis=1)
        if data.size and dist.max() > 1e-9:
            raise DomainError(f"data subcarriers are not {modulation.value} constellation points")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "pilot_indices", pilots)
        object.__setattr__(self, "modulation", modulation)

    @property
    def K(self) -> int:
        return self.values.size

    @property
    def num_pilots(self) -> int:
        return len(self.pilot_indices)

    @property
    def data_indices(self) -> np.ndarray:
        return data_indices(self.K, self.pilot_indices)

    @property
    def data(self) -> np.ndarray:
        return self.values[self.data_indices]


def data_indices(k: int, pilot_indices) -> np.ndarray:
    mask = np.ones(k, dtype=bool)
    mask[list(pilot_indices)] = False
    return np.flatnonzero(mask)


@dataclass(frozen=True)
class TimeSignal:
    samples: np.ndarray
    oversampling: int = 1
    K: int = field(default=0)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if self.oversampling < 1:
            raise DomainError("oversampling must be >= 1")
        k = self.K or samples.size // self.oversampling
        if samples.size != k * self.oversampling:
            raise DomainError(
                f"{samples.size} samples is not oversampling {self.oversampling} x K={k}"
            )
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "K", k)

    def __len__(self):
        return self.samples.size

    def __array__(self, dtype=None, copy=None):
        return self.samples if dtype is None else self.samples.astype(dtype)


# ---------------------------------------------------------------------------
# mixed-radix DFT


@lru_cache(maxsize=None)
def _smallest_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=None)
def _roots(n: int, sign: int) -> np.ndarray:
    """``exp(sign * 2j*pi*m/n)`` for ``m = 0..n-1``."""
    m = np.arange(n)
    w = np.exp(sign * 2j * np.pi * m / n)
    w.setflags(write=False)
    return w


def _direct(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-1]
    w = _roots(n, sign)
    k = np.arange(n)
    out = np.broadcast_to(x[..., :1], x.shape).astype(np.complex128)
    for m in range(1, n):
        out = out + x[..., m : m + 1] * w[(m * k) % n]
    return out


def _transform(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x.astype(np.complex128)
    p = _smallest_factor(n)
    if p == n:
        return _direct(x, sign)
    m = n // p
    lead = x.shape[:-1]
    # decimate in time: sub-sequence r holds x[r], x[r + p], x[r + 2p], ...
    subs = np.swapaxes(x.reshape(*lead, m, p), -1, -2)
    y = _transform(subs, sign)
    wn = _roots(n, sign)
    kk = np.arange(m)
    for r in range(1, p):
        y[..., r, :] *= wn[(r * kk) % n]
    wp = _roots(p, sign)
    out = np.empty(lead + (p, m), dtype=np.complex128)
    for q in range(p):
        acc = y[..., 0, :]
        for r in range(1, p):
            acc = acc + wp[(r * q) % p] * y[..., r, :]
        out[..., q, :] = acc
    return out.reshape(*lead, n)


def dft(x, sign: int = -1) -> np.ndarray:
    """Unnormalized DFT along the last axis: ``X[k] = sum_n x[n] exp(sign*2j*pi*n*k/N)``.

    Any length is accepted; composite lengths recurse on their smallest prime
    factor and prime lengths fall back to direct summation.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DomainError("cannot transform an empty vector")
    return _transform(x, 1 if sign > 0 else -1)


def idft_batch(values, oversampling: int = 1) -> np.ndarray:
    """Unitary-scaled inverse DFT of each row, zero-padded to ``oversampling * K`` points.

    ``x[n] = K**-0.5 * sum_k s[k] exp(2j*pi*k*n / (L*K))``
    """
    s = np.asarray(values, dtype=np.complex128)
    if s.ndim == 0 or s.shape[-1] == 0:
        raise DomainError("cannot transform an empty spectrum")
    if oversampling < 1:
        raise DomainError("oversampling must be >= 1")
    k = s.shape[-1]
    if oversampling > 1:
        pad = [(0, 0)] * (s.ndim - 1) + [(0, (oversampling - 1) * k)]
        s = np.pad(s, pad)
    return _transform(s, 1) * (1.0 / np.sqrt(k))


def idft(spectrum, oversampling: int = 1) -> TimeSignal:
    values = spectrum.values if isinstance(spectrum, SpectrumSymbol) else np.asarray(spectrum)
    if values.ndim != 1:
        raise DomainError("idft takes a single symbol; use idft_batch for stacks")
    x = idft_batch(values, oversampling)
    return TimeSignal(x, oversampling, values.size)


def mean_energy(values) -> float:
    v = np.asarray(values, dtype=np.complex128).ravel()
    if v.size == 0:
        raise DomainError("mean energy of an empty vector is undefined")
    return float(np.mean(v.real**2 + v.imag**2))


def papr_db_batch(x) -> np.ndarray:
    """PAPR in dB of each row (last axis) of ``x``."""
    x = np.asarray(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DomainError("PAPR of an empty signal is undefined")
    power = x.real**2 + x.imag**2
    mean = power.mean(axis=-1)
    if np.any(mean == 0):
        raise DomainError("PAPR of an all-zero signal is undefined")
    return 10.0 * np.log10(power.max(axis=-1) / mean)


def papr_db(signal) -> float:
    """``10 log10(max |x|^2 / mean |x|^2)`` of one time-domain symbol."""
    x = signal.samples if isinstance(signal, TimeSignal) else np.asarray(signal)
    if x.ndim != 1:
        raise DomainError("papr_db takes a single signal; use papr_db_batch for stacks")
    return float(papr_db_batch(x))
