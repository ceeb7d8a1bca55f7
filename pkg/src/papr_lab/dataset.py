"""
Reproducible PAPR datasets.

Every row is a random OFDM symbol (features: interleaved re/im of the data
subcarriers, pilots excluded) together with the pilot values chosen for it by
the randomized sign search (labels). Row ``r`` depends only on the master seed
and ``r``, so any row can be regenerated in isolation and generation order
never changes the bytes.

Rows below ``split_index`` form the training partition, the rest the test
partition. Test rows whose features duplicate a training row are redrawn from
a replacement seed; the replacement attempt is stored with the dataset.

On disk a dataset ``<stem>`` is ``<stem>.meta.json`` plus either the CSV pair
``<stem>.features.csv`` / ``<stem>.labels.csv`` or the packed ``<stem>.bin``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError, DomainError
from .mcsa import McsaConfig, default_pilot_indices, search_batch
from .seeding import GENERATOR_NAME, LABEL_SALT, derive, random_bits, row_seed
from .signal import Modulation, constellation, map_bits, mean_energy

SCHEMA_VERSION = 1
BIN_MAGIC = b"PAPRDS1"
MAX_REPLACEMENT_ATTEMPTS = 64

# label-generation targets per subcarrier count (QPSK, 2 pilots, 256 trials),
# as produced by ``practical_target_db``
_DEFAULT_TARGETS_DB = {15: 5.0, 30: 6.5}

TARGET_GRID_STEP_DB = 0.5
TARGET_HIT_RATE = 0.83


def practical_target_db(
    K: int,
    N_p: int = 2,
    *,
    modulation=Modulation.QPSK,
    max_trials: int = 256,
    symbols: int = 10_000,
    seed: int = 0x7A56E7,
) -> float:
    """Lowest target on a 0.5 dB grid that the search reaches for at least
    ``TARGET_HIT_RATE`` of random symbols within ``max_trials`` trials."""
    meta = DatasetMeta(
        K, N_p, default_pilot_indices(K, N_p), modulation, symbols, 0.5, seed,
        -math.inf, max_trials, 1.0,
    )
    n_bits = (K - N_p) * meta.modulation.bits_per_symbol
    seeds = [row_seed(seed, r) for r in range(symbols)]
    bits = np.concatenate([random_bits(s, n_bits) for s in seeds])
    features = data_to_features(map_bits(bits, meta.modulation).reshape(symbols, K - N_p))
    spectra = assemble_spectra(meta, features)
    mags = row_magnitudes(features)
    search_seeds = [derive(s, LABEL_SALT) for s in seeds]
    target = TARGET_GRID_STEP_DB
    ceiling = 10 * math.log10(K)
    while target < ceiling:
        config = McsaConfig(target, max_trials)
        _, _, _, met = search_batch(spectra, meta.pilot_indices, mags, config, search_seeds)
        if met.mean() >= TARGET_HIT_RATE:
            return target
        target += TARGET_GRID_STEP_DB
    return round(ceiling, 1)


def default_target_db(K: int, N_p: int = 2, modulation=Modulation.QPSK) -> float:
    if N_p == 2 and Modulation(modulation) is Modulation.QPSK and K in _DEFAULT_TARGETS_DB:
        return _DEFAULT_TARGETS_DB[K]
    return practical_target_db(K, N_p, modulation=modulation)


@dataclass(frozen=True)
class DatasetMeta:
    K: int
    N_p: int
    pilot_indices: tuple[int, ...]
    modulation: Modulation
    num_samples: int
    split_fraction: float
    master_seed: int
    mcsa_target_db: float
    mcsa_max_trials: int
    pilot_magnitude: float
    oversampling: int = 1
    generator: str = GENERATOR_NAME

    def __post_init__(self):
        object.__setattr__(self, "pilot_indices", tuple(int(i) for i in self.pilot_indices))
        object.__setattr__(self, "modulation", Modulation(self.modulation))
        for name in ("K", "N_p", "num_samples", "master_seed", "mcsa_max_trials", "oversampling"):
            object.__setattr__(self, name, int(getattr(self, name)))
        for name in ("split_fraction", "mcsa_target_db", "pilot_magnitude"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def validate(self) -> None:
        if self.K < 2:
            raise DomainError(f"K={self.K}: need at least 2 subcarriers")
        if not 1 <= self.N_p < self.K:
            raise DomainError(f"N_p={self.N_p} must satisfy 1 <= N_p < K={self.K}")
        if len(self.pilot_indices) != self.N_p:
            raise DomainError("pilot_indices length differs from N_p")
        p = self.pilot_indices
        if any(b <= a for a, b in zip(p, p[1:])) or p[0] < 0 or p[-1] >= self.K:
            raise DomainError(f"pilot_indices {p} not strictly increasing in [0, K)")
        if self.num_samples < 10:
            raise DomainError("num_samples must be >= 10")
        if not 0.0 < self.split_fraction < 1.0:
            raise DomainError("split_fraction must lie in (0, 1)")
        if self.mcsa_max_trials < 1:
            raise DomainError("mcsa_max_trials must be >= 1")
        if not self.pilot_magnitude > 0:
            raise DomainError("pilot_magnitude must be positive")

    @property
    def split_index(self) -> int:
        return int(math.floor(self.split_fraction * self.num_samples + 0.5))

    @property
    def data_indices(self) -> np.ndarray:
        mask = np.ones(self.K, dtype=bool)
        mask[list(self.pilot_indices)] = False
        return np.flatnonzero(mask)

    @property
    def feature_width(self) -> int:
        return 2 * (self.K - self.N_p)

    @property
    def mcsa_config(self) -> McsaConfig:
        return McsaConfig(self.mcsa_target_db, self.mcsa_max_trials, oversampling=self.oversampling)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pilot_indices"] = list(self.pilot_indices)
        d["modulation"] = self.modulation.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetMeta":
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def make_meta(
    K: int = 15,
    N_p: int = 2,
    num_samples: int = 200_000,
    master_seed: int = 0,
    *,
    modulation: Modulation | str = Modulation.QPSK,
    split_fraction: float = 0.70,
    pilot_indices=None,
    mcsa_target_db: float | None = None,
    mcsa_max_trials: int = 256,
    oversampling: int = 1,
) -> DatasetMeta:
    """Build a :class:`DatasetMeta`, filling unspecified fields with defaults."""
    modulation = Modulation(modulation)
    if pilot_indices is None:
        pilot_indices = default_pilot_indices(K, N_p)
    if mcsa_target_db is None:
        mcsa_target_db = default_target_db(K, N_p, modulation)
    magnitude = math.sqrt(mean_energy(constellation(modulation)))
    meta = DatasetMeta(
        K=K,
        N_p=N_p,
        pilot_indices=tuple(pilot_indices),
        modulation=modulation,
        num_samples=num_samples,
        split_fraction=split_fraction,
        master_seed=master_seed,
        mcsa_target_db=mcsa_target_db,
        mcsa_max_trials=mcsa_max_trials,
        pilot_magnitude=magnitude,
        oversampling=oversampling,
    )
    meta.validate()
    return meta


@dataclass(eq=False)
class PaprDataset:
    meta: DatasetMeta
    features: np.ndarray
    labels: np.ndarray
    split_index: int
    attempts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.attempts is None:
            self.attempts = np.zeros(self.features.shape[0], dtype=np.int64)

    def __len__(self):
        return self.features.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PaprDataset):
            return NotImplemented
        return (
            self.meta == other.meta
            and self.split_index == other.split_index
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.attempts, other.attempts)
        )

    @property
    def train_features(self) -> np.ndarray:
        return self.features[: self.split_index]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[: self.split_index]

    @property
    def test_features(self) -> np.ndarray:
        return self.features[self.split_index :]

    @property
    def test_labels(self) -> np.ndarray:
        return self.labels[self.split_index :]

    def spectra(self, rows=slice(None)) -> np.ndarray:
        """Rebuild the frequency-domain symbols with their labelled pilots."""
        return assemble_spectra(self.meta, self.features[rows], self.labels[rows])


# ---------------------------------------------------------------------------
# generation


def features_to_data(features: np.ndarray) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    return f[..., 0::2] + 1j * f[..., 1::2]


def data_to_features(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data)
    out = np.empty(data.shape[:-1] + (2 * data.shape[-1],))
    out[..., 0::2] = data.real
    out[..., 1::2] = data.imag
    return out


def assemble_spectra(meta: DatasetMeta, features, pilot_values=None) -> np.ndarray:
    data = features_to_data(features)
    spectra = np.zeros(data.shape[:-1] + (meta.K,), dtype=np.complex128)
    spectra[..., meta.data_indices] = data
    if pilot_values is not None:
        spectra[..., list(meta.pilot_indices)] = pilot_values
    return spectra


def row_magnitudes(features) -> np.ndarray:
    """``sqrt(E)`` of each row, E being the mean data-subcarrier energy."""
    data = features_to_data(features)
    return np.sqrt(np.mean(data.real**2 + data.imag**2, axis=-1))


def _draw_rows(meta: DatasetMeta, rows, attempts):
    n_data = meta.K - meta.N_p
    n_bits = n_data * meta.modulation.bits_per_symbol
    seeds = [row_seed(meta.master_seed, r, a) for r, a in zip(rows, attempts)]
    bits = np.concatenate([random_bits(s, n_bits) for s in seeds])
    data = map_bits(bits, meta.modulation).reshape(len(seeds), n_data)
    features = data_to_features(data)
    mags = row_magnitudes(features)
    label_seeds = [derive(s, LABEL_SALT) for s in seeds]
    signs, _, _, _ = search_batch(
        assemble_spectra(meta, features), meta.pilot_indices, mags, meta.mcsa_config, label_seeds
    )
    labels = signs * mags[:, None]
    return features, labels


def generate_rows(meta: DatasetMeta, rows, attempts=None):
    """Features and labels of the given rows, exactly as ``generate`` makes them."""
    rows = [int(r) for r in rows]
    if attempts is None:
        attempts = [0] * len(rows)
    return _draw_rows(meta, rows, [int(a) for a in attempts])


def _row_hashes(features: np.ndarray) -> list[bytes]:
    f = np.ascontiguousarray(features, dtype="<f8")
    return [hashlib.sha1(row.tobytes()).digest() for row in f]


def generate(meta: DatasetMeta, *, threads: int = 1, chunk: int = 4096) -> PaprDataset:
    """Generate the full corpus described by ``meta``."""
    meta.validate()
    n = meta.num_samples
    bounds = [(lo, min(n, lo + chunk)) for lo in range(0, n, chunk)]

    def work(b):
        lo, hi = b
        return _draw_rows(meta, range(lo, hi), [0] * (hi - lo))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    features = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    attempts = np.zeros(n, dtype=np.int64)

    split = meta.split_index
    train_hashes = set(_row_hashes(features[:split]))
    for offset, h in enumerate(_row_hashes(features[split:])):
        if h not in train_hashes:
            continue
        r = split + offset
        for attempt in range(1, MAX_REPLACEMENT_ATTEMPTS + 1):
            f, lab = _draw_rows(meta, [r], [attempt])
            if _row_hashes(f)[0] not in train_hashes:
                break
        else:
            raise DomainError(
                f"row {r}: no test symbol disjoint from the training set after "
                f"{MAX_REPLACEMENT_ATTEMPTS} redraws; the sample space is too small"
            )
        features[r], labels[r], attempts[r] = f[0], lab[0], attempt
    return PaprDataset(meta, features, labels, split, attempts)


def check_disjoint(dataset: PaprDataset) -> bool:
    """True when no feature row occurs in both partitions."""
    train = set(_row_hashes(dataset.train_features))
    return not any(h in train for h in _row_hashes(dataset.test_features))


# ---------------------------------------------------------------------------
# sample-space arithmetic


def constellation_space(order: int, exponent: int) -> int:
    if order < 1 or exponent < 0:
        raise DomainError("order must be >= 1 and exponent >= 0")
    return int(order) ** int(exponent)


def sample_space_size(meta: DatasetMeta) -> int:
    """Number of distinct data payloads: ``order ** (K - N_p)``."""
    return constellation_space(meta.modulation.order, meta.K - meta.N_p)


def coverage_fraction(train_rows: int, space: int) -> float:
    if space < 1:
        raise DomainError("sample space must contain at least one point")
    if train_rows < 0:
        raise DomainError("row count cannot be negative")
    return train_rows / space


# ---------------------------------------------------------------------------
# persistence


def _paths(stem) -> dict[str, Path]:
    stem = Path(stem)
    return {
        "meta": stem.with_name(stem.name + ".meta.json"),
        "features": stem.with_name(stem.name + ".features.csv"),
        "labels": stem.with_name(stem.name + ".labels.csv"),
        "bin": stem.with_name(stem.name + ".bin"),
    }


def _feature_header(meta: DatasetMeta) -> list[str]:
    cols = []
    for k in meta.data_indices:
        cols += [f"sc{k}_re", f"sc{k}_im"]
    return cols


def _label_header(meta: DatasetMeta) -> list[str]:
    return [f"pilot{k}" for k in meta.pilot_indices]


def _write_csv(path: Path, header: list[str], matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in matrix:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def _read_csv(path: Path, header: list[str], n_rows: int, name: str) -> np.ndarray:
    out = np.empty((n_rows, len(header)))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != header:
            raise DatasetFormatError(f"{path.name}: unexpected header", field=name)
        count = 0
        for i, row in enumerate(reader):
            if i >= n_rows:
                raise DatasetFormatError(f"{path.name}: more rows than num_samples", field=name, row=i)
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"{path.name}: expected {len(header)} columns, found {len(row)}",
                    field=name,
                    row=i,
                )
            for j, cell in enumerate(row):
                try:
                    out[i, j] = float(cell)
                except ValueError:
                    raise DatasetFormatError(
                        f"{path.name}: cannot parse {cell!r}", field=header[j], row=i
                    ) from None
            count += 1
    if count != n_rows:
        raise DatasetFormatError(
            f"{path.name}: truncated, {count} of {n_rows} rows present", field=name, row=count
        )
    return out


def save(dataset: PaprDataset, stem, *, binary: bool = False, csv_files: bool = True) -> dict[str, Path]:
    """Write ``dataset`` under ``stem``; returns the paths written."""
    paths = _paths(stem)
    paths["meta"].parent.mkdir(parents=True, exist_ok=True)
    meta = dataset.meta
    doc = {
        "schema_version": SCHEMA_VERSION,
        "meta": meta.to_dict(),
        "meta_digest": meta.digest(),
        "split_index": dataset.split_index,
        "feature_width": meta.feature_width,
        "label_width": meta.N_p,
        "row_attempts": {str(r): int(a) for r, a in enumerate(dataset.attempts) if a},
        "numpy_version": np.__version__,
    }
    paths["meta"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    written = {"meta": paths["meta"]}
    if csv_files:
        _write_csv(paths["features"], _feature_header(meta), dataset.features)
        _write_csv(paths["labels"], _label_header(meta), dataset.labels)
        written["features"], written["labels"] = paths["features"], paths["labels"]
    if binary:
        with open(paths["bin"], "wb") as fh:
            fh.write(BIN_MAGIC)
            fh.write(np.ascontiguousarray(dataset.features, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(dataset.labels, dtype="<f8").tobytes())
        written["bin"] = paths["bin"]
    return written


def load_meta(stem) -> tuple[DatasetMeta, dict]:
    path = _paths(stem)["meta"]
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path.name}: invalid JSON ({exc.msg})") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DatasetFormatError(
            f"{path.name}: unsupported schema version {doc.get('schema_version')!r}",
            field="schema_version",
        )
    try:
        meta = DatasetMeta.from_dict(doc["meta"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{path.name}: bad meta block ({exc})", field="meta") from None
    try:
        meta.validate()
    except DomainError as exc:
        raise DatasetFormatError(f"{path.name}: {exc}", field="meta") from None
    return meta, doc


def load(stem, *, prefer: str = "csv") -> PaprDataset:
    paths = _paths(stem)
    meta, doc = load_meta(stem)
    n = meta.num_samples
    use_bin = paths["bin"].exists() and (prefer == "bin" or not paths["features"].exists())
    if use_bin:
        features, labels = _read_bin(paths["bin"], n, meta.feature_width, meta.N_p)
    else:
        features = _read_csv(paths["features"], _feature_header(meta), n, "features")
        labels = _read_csv(paths["labels"], _label_header(meta), n, "labels")

    split = doc.get("split_index")
    if split != meta.split_index:
        raise DatasetFormatError(f"split_index {split!r} disagrees with meta", field="split_index")
    attempts = np.zeros(n, dtype=np.int64)
    for r, a in doc.get("row_attempts", {}).items():
        attempts[int(r)] = int(a)
    _validate_rows(meta, features, labels)
    return PaprDataset(meta, features, labels, split, attempts)


def _read_bin(path: Path, n: int, width: int, n_labels: int):
    raw = path.read_bytes()
    if not raw.startswith(BIN_MAGIC):
        raise DatasetFormatError(f"{path.name}: bad magic", field="magic")
    body = raw[len(BIN_MAGIC) :]
    expected = 8 * n * (width + n_labels)
    if len(body) != expected:
        row = min(len(body) // (8 * width), n) if len(body) < 8 * n * width else None
        raise DatasetFormatError(
            f"{path.name}: {len(body)} payload bytes, expected {expected}", field="payload", row=row
        )
    values = np.frombuffer(body, dtype="<f8")
    features = values[: n * width].reshape(n, width).astype(np.float64)
    labels = values[n * width :].reshape(n, n_labels).astype(np.float64)
    return features, labels


def _validate_rows(meta: DatasetMeta, features: np.ndarray, labels: np.ndarray) -> None:
    if not np.isfinite(features).all():
        r = int(np.flatnonzero(~np.isfinite(features).all(axis=1))[0])
        raise DatasetFormatError("non-finite feature value", field="features", row=r)
    pts = constellation(meta.modulation)
    data = features_to_data(features)
    off = np.abs(data[..., None] - pts).min(axis=-1) > 1e-9
    if off.any():
        r = int(np.flatnonzero(off.any(axis=1))[0])
        raise DatasetFormatError(
            f"feature is not a {meta.modulation.value} constellation point", field="features", row=r
        )
    mags = row_magnitudes(features)
    bad = ~np.isclose(np.abs(labels), mags[:, None], rtol=1e-12, atol=0.0)
    if bad.any():
        r, c = (int(v) for v in np.argwhere(bad)[0])
        raise DatasetFormatError(
            f"label {labels[r, c]!r} is not +/-sqrt(E) = +/-{mags[r]!r}",
            field=f"pilot{meta.pilot_indices[c]}",
            row=r,
        )
