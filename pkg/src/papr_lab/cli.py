"""papr-lab command line: gen, train, eval, trace, sweep.

Every option can also come from a ``key = value`` config file given with
``--config``; explicit flags win over the file, the file wins over defaults.
The effective configuration of each run is written to
``<out>/config.<cmd>.txt`` (a given config file is also copied verbatim to
``<out>/config.<cmd>.input.txt``), so ``papr-lab <cmd> --config
<out>/config.<cmd>.txt`` repeats the run.
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evaluation as ev
from . import neural as nn
from .errors import DatasetFormatError, DomainError, IntegrityError
from .mcsa import McsaConfig, default_pilot_indices
from .seeding import EVAL_SALT, derive, random_bits, row_seed
from .signal import Modulation, SpectrumSymbol, idft, map_bits, papr_db

PROG = "papr-lab"
TRAIN_SALT = 0x7124_1A7E_0000_0001
TRACE_SALT = 0x7124_1A7E_0000_0002
EVAL_POINTS = "1e-3,1e-2"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Opt:
    name: str
    type: type
    default: object
    help: str


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _target(text):
    return None if str(text).lower() in ("", "auto", "none") else float(text)


COMMON = [
    Opt("out", str, "papr_out", "output directory"),
    Opt("seed", int, 0, "master seed; every other seed is derived from it"),
]
DATA_OPTS = [
    Opt("k", int, 15, "subcarriers K"),
    Opt("pilots", int, 2, "pilot subcarriers N_p"),
    Opt("modulation", str, "QPSK", "QPSK or QAM16"),
    Opt("samples", int, 200_000, "dataset rows"),
    Opt("split", float, 0.70, "training fraction"),
    Opt("target_db", _target, None, "search target PAPR in dB (auto: per-K default)"),
    Opt("max_trials", int, 256, "search trial budget N_t"),
    Opt("oversampling", int, 1, "PAPR oversampling factor L"),
]
TRAIN_OPTS = [
    Opt("epochs", int, 500, "training epochs"),
    Opt("batch_size", int, 64, "mini-batch size"),
    Opt("lr", float, 1e-3, "initial learning rate"),
    Opt("lr_final_fraction", float, 0.01, "learning rate at the last epoch, as a fraction of lr"),
    Opt("weight_decay", float, 0.3, "decoupled weight decay"),
    Opt("hidden", int, 500, "hidden units"),
    Opt("optimizer", str, "ADAM", "ADAM or SGD_MOMENTUM"),
    Opt("validation_fraction", float, 0.1, "tail of the training partition held out"),
]

COMMANDS = {
    "gen": (
        "generate a labelled dataset",
        COMMON
        + DATA_OPTS
        + [
            Opt("name", str, "dataset", "file stem inside --out"),
            Opt("binary", _bool, False, "also write the packed .bin file"),
            Opt("threads", int, 1, "worker threads for row generation"),
        ],
    ),
    "train": (
        "train the network on a dataset's training partition",
        COMMON + [Opt("data", str, None, "dataset stem (path without extension)")] + TRAIN_OPTS,
    ),
    "eval": (
        "CCDF comparison of original / search / network on the test partition",
        COMMON
        + [
            Opt("data", str, None, "dataset stem"),
            Opt("model", str, None, "model file written by train"),
            Opt("target_db", _target, None, "override the search target (default: dataset's)"),
            Opt("max_trials", int, None, "override the search budget (default: dataset's)"),
            Opt("points", _floats, _floats(EVAL_POINTS), "CCDF operating points"),
        ],
    ),
    "trace": (
        "time-domain power trace of one random symbol",
        COMMON
        + [
            Opt("k", int, 32, "subcarriers K"),
            Opt("modulation", str, "QAM16", "QPSK or QAM16"),
            Opt("oversampling", int, 1, "oversampling factor L"),
            Opt("all_ones", _bool, False, "use an all-ones spectrum instead of random data"),
        ],
    ),
    "sweep": (
        "mean trial count versus target PAPR",
        COMMON
        + [o for o in DATA_OPTS if o.name not in ("split", "target_db", "samples")]
        + [
            Opt("samples", int, 10_000, "symbols per target"),
            Opt("targets", str, "3:8:0.5", "start:stop:step (inclusive) or a comma list, in dB"),
        ],
    ),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="OFDM PAPR reduction lab")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (help_text, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value config file")
        for o in opts:
            flag = "--" + o.name.replace("_", "-")
            if o.type is _bool:
                p.add_argument(flag, nargs="?", const=True, default=None, type=_bool, help=o.help)
            else:
                p.add_argument(flag, type=o.type, default=None, help=o.help)
    return parser


def read_config(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags into the effective config."""
    opts = {o.name: o for o in COMMANDS[command][1]}
    cfg = {name: o.default for name, o in opts.items()}
    if args.config:
        for key, raw in read_config(args.config).items():
            if key not in opts:
                raise UsageError(f"unknown config key {key!r} for {command}")
            try:
                cfg[key] = opts[key].type(raw)
            except ValueError as exc:
                raise UsageError(f"config key {key}: {exc}") from None
    for name in opts:
        value = getattr(args, name)
        if value is not None:
            cfg[name] = value
    return cfg


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    return str(value)


def echo_config(out: Path, command: str, cfg: dict, config_path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"# {PROG} {command}"]
    lines += [f"{k} = {_format_value(cfg[k])}" for k in sorted(cfg) if cfg[k] is not None]
    (out / f"config.{command}.txt").write_text("\n".join(lines) + "\n")
    if config_path:
        shutil.copyfile(config_path, out / f"config.{command}.input.txt")


def _require(cfg: dict, *names: str) -> None:
    for n in names:
        if cfg.get(n) in (None, ""):
            raise UsageError(f"--{n.replace('_', '-')} is required")


def _meta_from(cfg: dict, samples: int | None = None) -> ds.DatasetMeta:
    try:
        return ds.make_meta(
            cfg["k"],
            cfg["pilots"],
            cfg["samples"] if samples is None else samples,
            cfg["seed"],
            modulation=cfg["modulation"].upper(),
            split_fraction=cfg.get("split", 0.7),
            mcsa_target_db=cfg.get("target_db"),
            mcsa_max_trials=cfg["max_trials"],
            oversampling=cfg["oversampling"],
        )
    except (DomainError, ValueError) as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def cmd_gen(cfg: dict, out: Path) -> int:
    meta = _meta_from(cfg)
    data = ds.generate(meta, threads=max(1, cfg["threads"]))
    paths = ds.save(data, out / cfg["name"], binary=cfg["binary"])
    space = ds.sample_space_size(meta)
    all_carriers = ds.constellation_space(meta.modulation.order, meta.K)
    cover = ds.coverage_fraction(data.split_index, space)
    m = meta.modulation.order
    print(f"dataset: {len(data)} rows, {data.split_index} train / {len(data) - data.split_index} test")
    print(f"target_db: {meta.mcsa_target_db:g}  max_trials: {meta.mcsa_max_trials}")
    print(f"sample space (data subcarriers): {m}^{meta.K - meta.N_p} = {space}")
    print(f"sample space (all subcarriers): {m}^{meta.K} = {all_carriers}")
    print(f"training coverage: {cover:.4e} = {100 * cover:.3g}% of the data sample space")
    for kind, path in paths.items():
        print(f"wrote {kind}: {path}")
    return 0


def cmd_train(cfg: dict, out: Path) -> int:
    _require(cfg, "data")
    data = ds.load(cfg["data"])
    try:
        tcfg = nn.TrainConfig(
            epochs=cfg["epochs"],
            batch_size=cfg["batch_size"],
            learning_rate=cfg["lr"],
            validation_fraction=cfg["validation_fraction"],
            seed=derive(cfg["seed"], TRAIN_SALT),
            optimizer=cfg["optimizer"].upper(),
            hidden=cfg["hidden"],
            lr_final_fraction=cfg["lr_final_fraction"],
            weight_decay=cfg["weight_decay"],
        )
    except (DomainError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    def progress(epoch, tl, vl):
        if (epoch + 1) % 50 == 0 or epoch + 1 == tcfg.epochs:
            print(f"epoch {epoch + 1:4d}  train {tl:.6f}  val {vl:.6f}", flush=True)

    model, trace = nn.train(data, tcfg, progress=progress)
    model_path = nn.save_model(
        out / "model.bin",
        model,
        seed=tcfg.seed,
        train_config=trace.config,
        dataset_meta=data.meta.to_dict(),
        dataset_meta_digest=data.meta.digest(),
    )
    trace_path = out / "loss_trace.csv"
    with open(trace_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for i, (tl, vl) in enumerate(zip(trace.train_loss, trace.val_loss), 1):
            w.writerow([i, repr(float(tl)), repr(float(vl))])
    print(f"wrote model: {model_path}")
    print(f"wrote loss trace: {trace_path}")
    return 0


def cmd_eval(cfg: dict, out: Path) -> int:
    _require(cfg, "data", "model")
    data = ds.load(cfg["data"])
    model, head = nn.load_model(cfg["model"])
    if head.get("dataset_meta_digest") != data.meta.digest():
        raise IntegrityError(
            "model was trained on a dataset whose metadata differs from " + str(cfg["data"])
        )
    base = data.meta.mcsa_config
    try:
        mcfg = McsaConfig(
            base.target_papr_db if cfg["target_db"] is None else cfg["target_db"],
            base.max_trials if cfg["max_trials"] is None else cfg["max_trials"],
            oversampling=base.oversampling,
        )
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    result = ev.compare_methods(data, model, mcfg)
    summary = result.summary(cfg["points"])
    ccdf_path = ev.write_ccdf_csv(out / "ccdf.csv", result.curves)
    summary_path = ev.write_summary(out / "summary.json", summary)
    for p, block in summary["operating_points"].items():
        red = block["reduction_db"]
        print(f"CCDF {p}: reduction vs original  mcsa {red['mcsa']:.3f} dB  nn {red['nn']:.3f} dB")
    print(f"mean search trials v = {summary['mean_trials_v']:.3f}")
    print(f"op count  NN {summary['op_count']['NN']:.1f}  MCSA {summary['op_count']['MCSA']:.1f}")
    print(f"wrote ccdf: {ccdf_path}")
    print(f"wrote summary: {summary_path}")
    return 0


def cmd_trace(cfg: dict, out: Path) -> int:
    k = cfg["k"]
    if k < 2:
        raise UsageError("--k must be >= 2")
    try:
        modulation = Modulation(cfg["modulation"].upper())
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if cfg["all_ones"]:
        values = np.ones(k, dtype=complex)
        symbol = None
    else:
        bits = random_bits(derive(cfg["seed"], TRACE_SALT), k * modulation.bits_per_symbol)
        symbol = SpectrumSymbol(map_bits(bits, modulation), (), modulation)
        values = symbol.values
    signal = idft(values, cfg["oversampling"])
    value = papr_db(signal)
    power = signal.samples.real**2 + signal.samples.imag**2
    path = out / "trace.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "power"])
        for n, pw in enumerate(power):
            w.writerow([n, repr(float(pw))])
    (out / "trace.json").write_text(
        json.dumps({"K": k, "modulation": modulation.value, "papr_db": value}, indent=2) + "\n"
    )
    print(f"papr_db = {value:.4f}")
    print(f"wrote trace: {path}")
    return 0


def _parse_targets(text: str) -> list[float]:
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError("step must be positive")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 10) for i in range(n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--targets: {exc}") from None


def cmd_sweep(cfg: dict, out: Path) -> int:
    targets = _parse_targets(cfg["targets"])
    meta = _meta_from({**cfg, "target_db": float("inf")})
    rows = range(meta.num_samples)
    feats, _ = ds.generate_rows(meta, rows)
    seeds = [derive(row_seed(meta.master_seed, r), EVAL_SALT) for r in rows]
    table = ev.target_sweep(
        ds.assemble_spectra(meta, feats),
        meta.pilot_indices,
        ds.row_magnitudes(feats),
        targets,
        seeds,
        max_trials=meta.mcsa_max_trials,
        oversampling=meta.oversampling,
    )
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(table[0]))
        w.writeheader()
        w.writerows(table)
    for row in table:
        print(
            f"target {row['target_db']:5.2f} dB  v {row['mean_trials_v']:8.3f}  "
            f"met {row['met_fraction']:.4f}  mean papr {row['mean_papr_db']:.3f} dB"
        )
    print(f"wrote sweep: {path}")
    return 0


HANDLERS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "trace": cmd_trace, "sweep": cmd_sweep}


def _fail(kind: str, message: str, code: int) -> int:
    text = " ".join(str(message).split())
    print(f"{PROG}: error[{kind}]: {text}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args.command, args)
        out = Path(cfg["out"])
        echo_config(out, args.command, cfg, args.config)
        return HANDLERS[args.command](cfg, out)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    except IntegrityError as exc:
        return _fail("integrity", exc, 3)
    except DatasetFormatError as exc:
        return _fail("format", exc, 4)
    except DomainError as exc:
        return _fail("domain", exc, 5)
    except OSError as exc:
        return _fail("io", exc, 6)


if __name__ == "__main__":
    sys.exit(main())
