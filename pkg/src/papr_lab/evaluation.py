"""
CCDF estimation, method comparison and operation-count bookkeeping.

``compare_methods`` evaluates three transmit strategies on the test partition
of a dataset:

* ``original`` -- every pilot fixed at ``+sqrt(E)``, no optimization;
* ``mcsa``     -- a fresh randomized sign search, seeded independently of the
  searches that produced the training labels;
* ``nn``       -- the network's sign-quantized pilots, one IDFT per symbol.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import PaprDataset, assemble_spectra, row_magnitudes
from .errors import DomainError
from .mcsa import McsaConfig, McsaResult, search_batch
from .neural import MlpModel, predict_signs
from .seeding import EVAL_SALT, derive, row_seed
from .signal import idft_batch, papr_db_batch

METHODS = ("original", "mcsa", "nn")
DEFAULT_OPERATING_POINT = 1e-3
GRID_STEP_DB = 0.05


@dataclass(frozen=True)
class CcdfCurve:
    thresholds_db: np.ndarray
    probabilities: np.ndarray
    sample_count: int

    def __post_init__(self):
        t = np.asarray(self.thresholds_db, dtype=np.float64)
        p = np.asarray(self.probabilities, dtype=np.float64)
        if t.shape != p.shape or t.ndim != 1:
            raise DomainError("thresholds and probabilities must be equal-length vectors")
        if np.any(np.diff(t) < 0):
            raise DomainError("thresholds must be ascending")
        if np.any(np.diff(p) > 0) or np.any((p < 0) | (p > 1)):
            raise DomainError("probabilities must be non-increasing and within [0, 1]")
        object.__setattr__(self, "thresholds_db", t)
        object.__setattr__(self, "probabilities", p)


def threshold_grid(k: int, oversampling: int = 1, step: float = GRID_STEP_DB) -> np.ndarray:
    """``0, step, ...`` up to the PAPR ceiling ``10 log10(L K)`` plus 1 dB."""
    top = 10.0 * math.log10(k * oversampling) + 1.0
    n = int(math.floor(top / step + 1e-9)) + 1
    return np.round(np.arange(n) * step, 10)


def ccdf(papr_samples_db, thresholds_db) -> CcdfCurve:
    """Empirical ``Pr(PAPR > threshold)`` at each threshold."""
    samples = np.sort(np.asarray(papr_samples_db, dtype=np.float64).ravel())
    if samples.size == 0:
        raise DomainError("CCDF of an empty sample is undefined")
    thresholds = np.asarray(thresholds_db, dtype=np.float64)
    above = samples.size - np.searchsorted(samples, thresholds, side="right")
    return CcdfCurve(thresholds, above / samples.size, samples.size)


def papr_at_ccdf(papr_samples_db, probability):
    """Smallest sample value ``g`` with ``Pr(PAPR > g) <= probability``.

    ``probability`` may be a scalar or an array of levels.
    """
    a = np.sort(np.asarray(papr_samples_db, dtype=np.float64).ravel())
    if a.size == 0:
        raise DomainError("empty sample")
    p = np.asarray(probability, dtype=np.float64)
    if not np.all((p > 0.0) & (p <= 1.0)):
        raise DomainError("probability must lie in (0, 1]")
    # above[i] = #{samples > a[i]}, non-increasing in i
    above = a.size - np.searchsorted(a, a, side="right")
    idx = np.searchsorted(-above, -p * a.size, side="left")
    out = a[idx]
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# complexity


class Method(str, enum.Enum):
    NN = "NN"
    MCSA = "MCSA"


@dataclass(frozen=True)
class ComplexityReport:
    method: Method
    K: int
    mean_trials_v: float | None
    op_count: float


def complexity_report(method, K: int, mean_trials_v: float | None = None) -> ComplexityReport:
    """Leading-order operation counts: ``K^2 + K log2 K`` for one network
    inference plus IDFT, ``v K^2 log2 K`` for a search averaging ``v`` trials."""
    method = Method(method)
    if K < 2:
        raise DomainError("K must be >= 2")
    log2k = math.log2(K)
    if method is Method.NN:
        return ComplexityReport(method, K, None, float(K * K + K * log2k))
    if mean_trials_v is None or not mean_trials_v >= 1:
        raise DomainError(f"mean trial count must be >= 1, got {mean_trials_v!r}")
    v = float(mean_trials_v)
    return ComplexityReport(method, K, v, v * K * K * log2k)


def mean_trials(results) -> float:
    """Arithmetic mean of ``trials_used`` over search results (or raw counts)."""
    counts = [r.trials_used if isinstance(r, McsaResult) else r for r in results]
    if not counts:
        raise DomainError("mean of an empty set of results")
    return float(np.mean(np.asarray(counts, dtype=np.float64)))


# ---------------------------------------------------------------------------
# method comparison


@dataclass
class MethodComparison:
    K: int
    papr: dict[str, np.ndarray]
    curves: dict[str, CcdfCurve]
    mcsa_trials: np.ndarray
    mcsa_config: McsaConfig
    notes: dict = field(default_factory=dict)

    def reduction_db(self, method: str, probability: float = DEFAULT_OPERATING_POINT) -> float:
        """PAPR gain of ``method`` over the fixed-pilot baseline at a CCDF level."""
        return papr_at_ccdf(self.papr["original"], probability) - papr_at_ccdf(
            self.papr[method], probability
        )

    def summary(self, operating_points=(DEFAULT_OPERATING_POINT,)) -> dict:
        v = float(self.mcsa_trials.mean())
        points = {}
        for p in operating_points:
            points[f"{p:g}"] = {
                "papr_db": {m: papr_at_ccdf(self.papr[m], p) for m in self.papr},
                "reduction_db": {m: self.reduction_db(m, p) for m in self.papr if m != "original"},
            }
        nn = complexity_report(Method.NN, self.K)
        mcsa = complexity_report(Method.MCSA, self.K, max(v, 1.0))
        return {
            "K": self.K,
            "test_symbols": int(self.mcsa_trials.size),
            "baseline": "all pilots fixed at +sqrt(E)",
            "mcsa_config": {
                "target_papr_db": self.mcsa_config.target_papr_db,
                "max_trials": self.mcsa_config.max_trials,
                "oversampling": self.mcsa_config.oversampling,
            },
            "mean_trials_v": v,
            "op_count": {"NN": nn.op_count, "MCSA": mcsa.op_count},
            "operating_points": points,
            **self.notes,
        }


def evaluation_seeds(dataset: PaprDataset, rows) -> list[int]:
    """Search seeds for evaluation; disjoint from the label-generation seeds."""
    m = dataset.meta
    return [derive(row_seed(m.master_seed, r, int(dataset.attempts[r])), EVAL_SALT) for r in rows]


def compare_methods(
    dataset: PaprDataset,
    model: MlpModel,
    mcsa_config: McsaConfig | None = None,
    thresholds_db=None,
) -> MethodComparison:
    """Score original / search / network pilots on the test partition only."""
    meta = dataset.meta
    if model.inputs != meta.feature_width or model.outputs != meta.N_p:
        raise DomainError(
            f"model maps {model.inputs}->{model.outputs} but the dataset needs "
            f"{meta.feature_width}->{meta.N_p}"
        )
    config = mcsa_config or meta.mcsa_config
    rows = range(dataset.split_index, len(dataset))
    if not len(rows):
        raise DomainError("dataset has an empty test partition")
    x = dataset.test_features
    mags = row_magnitudes(x)
    bare = assemble_spectra(meta, x)
    ones = np.ones((x.shape[0], meta.N_p))

    def papr_with(signs):
        spectra = bare.copy()
        spectra[:, list(meta.pilot_indices)] = signs * mags[:, None]
        return papr_db_batch(idft_batch(spectra, config.oversampling))

    _, mcsa_papr, trials, _ = search_batch(
        bare, meta.pilot_indices, mags, config, evaluation_seeds(dataset, rows)
    )
    papr = {
        "original": papr_with(ones),
        "mcsa": mcsa_papr,
        "nn": papr_with(predict_signs(model, x)),
    }
    if thresholds_db is None:
        thresholds_db = threshold_grid(meta.K, config.oversampling)
    curves = {m: ccdf(papr[m], thresholds_db) for m in METHODS}
    return MethodComparison(meta.K, papr, curves, trials, config)


# ---------------------------------------------------------------------------
# reports


def write_ccdf_csv(path, curves: dict[str, CcdfCurve]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "threshold_db", "probability"])
        for name, curve in curves.items():
            for t, p in zip(curve.thresholds_db, curve.probabilities):
                w.writerow([name, f"{t:.2f}", repr(float(p))])
    return path


def write_summary(path, summary: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return path


def target_sweep(spectra, pilot_indices, magnitudes, targets_db, seeds, *, max_trials=256, oversampling=1):
    """Mean trial count, hit rate and mean PAPR of the search for each target."""
    rows = []
    for target in targets_db:
        cfg = McsaConfig(target, max_trials, oversampling=oversampling)
        _, papr, trials, met = search_batch(spectra, pilot_indices, magnitudes, cfg, seeds)
        rows.append(
            {
                "target_db": float(target),
                "mean_trials_v": float(trials.mean()),
                "met_fraction": float(met.mean()),
                "mean_papr_db": float(papr.mean()),
                "op_count_mcsa": complexity_report(Method.MCSA, len(spectra[0]), trials.mean()).op_count,
            }
        )
    return rows
