"""Command-line driver: dataset generation, training, evaluation, sweeps.

Experiment presets mirror the hyper-parameter table of the study:

===========  ======  =====================================================
preset       system  model
===========  ======  =====================================================
adqc-1d-mu   1d      circuit, d=3, 8 sites, 4 layers, tuned pre-processing
adqc-2d-mu   2d      circuit, d=3, 8 sites (2M, M=4), 4 layers, tuned
lstm-1d-raw  1d      LSTM d_in=1, L_SQ=8, D_h=8 on raw scalars
lstm-1d-mu   1d      LSTM d_in=3, L_SQ=8, D_h=8 on encoded vectors
lstm-2d-raw  2d      LSTM d_in=2, L_SQ=4, D_h=8 on raw state pairs
lstm-2d-mu   2d      LSTM d_in=3, L_SQ=8, D_h=8 on encoded vectors
===========  ======  =====================================================

Raw circuit presets are deliberately absent: the circuit is only defined on
encoded inputs, and the raw-input baseline is the LSTM ablation.

Exit codes: 0 success; 1 numeric failure (bad loss, undefined fit, domain
violations); 2 usage or IO errors.  Every command is deterministic given
its full flag set including --seed.
"""

import argparse
import csv
import dataclasses
import json
import os
import subprocess
import sys
from pathlib import Path

from . import __version__, dataset, evaluation, training
from .adqc import AdqcModel, CircuitLayout
from .errors import (ChaosReplicaError, DomainError, SchemaError,
                     TrainingError, UndefinedFitError)
from .lstm import LstmConfig, LstmModel
from .models import (ModelCheckpoint, load_checkpoint, make_checkpoint,
                     oracle_checkpoint, save_checkpoint)
from .utils import THREADS_ENV_VAR, thread_cap

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_USAGE = 2

PRESETS = ("adqc-1d-mu", "adqc-2d-mu",
           "lstm-1d-raw", "lstm-1d-mu", "lstm-2d-raw", "lstm-2d-mu")


def preset_system(name: str) -> str:
    return "2d" if "-2d-" in name else "1d"


def build_preset_model(name: str, seed: int, d_h: int = None, n_layers: int = None):
    """Model object for a preset; d_h / n_layers override the sweep axis."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    system = preset_system(name)
    if name.startswith("adqc"):
        layout = CircuitLayout(n_sites=8, d=3, n_layers=n_layers or 4)
        return AdqcModel.initial(layout, n_outputs=2 if system == "2d" else 1,
                                 seed=seed)
    mu_tuned = name.endswith("-mu")
    if system == "1d":
        cfg = LstmConfig(d_in=3 if mu_tuned else 1, d_out=1, seq_len=8,
                         d_h=d_h or 8)
    else:
        cfg = LstmConfig(d_in=3 if mu_tuned else 2, d_out=2,
                         seq_len=8 if mu_tuned else 4, d_h=d_h or 8)
    return LstmModel.initial(cfg, mu_tuned=mu_tuned, seed=seed)


def _git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10)
        return out.stdout.strip() or None
    except OSError:
        return None


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace):
    payload = {"command": command,
               "args": {k: v for k, v in vars(args).items() if k != "func"},
               "version": __version__,
               "git": _git_describe()}
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(payload, fh, indent=1)


def _data_paths(data_dir: Path, system: str):
    return (data_dir / f"{system}-train.jsonl", data_dir / f"{system}-test.jsonl")


def _load_ckpt(path: str) -> ModelCheckpoint:
    if path in ("oracle:1d", "oracle:2d"):
        return oracle_checkpoint(path.split(":")[1])
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


# -- subcommands -----------------------------------------------------------

def cmd_gen_data(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = (dataset.MuGrid.preset_1d() if args.system == "1d"
            else dataset.MuGrid.preset_2d())
    train_ds, test_ds = dataset.generate(
        args.system, grid, n_train=args.n_train, n_test=args.n_test,
        seed=args.seed, beta=args.beta)
    train_path, test_path = _data_paths(out_dir, args.system)
    dataset.save(train_ds, train_path)
    dataset.save(test_ds, test_path)
    _write_manifest(out_dir, "gen-data", args)
    print(f"wrote {train_path} ({len(train_ds.features)} samples) and "
          f"{test_path} ({len(test_ds.features)} samples)")
    return EXIT_OK


def cmd_train(args) -> int:
    system = preset_system(args.preset)
    train_path, test_path = _data_paths(Path(args.data), system)
    train_ds = dataset.load(train_path)
    test_ds = dataset.load(test_path)
    model = build_preset_model(args.preset, args.seed,
                               d_h=args.d_h, n_layers=args.n_layers)
    config = training.TrainConfig(
        eta=args.eta, optimizer=args.optimizer, epochs=args.epochs,
        batch_size=args.batch_size, seed=args.seed, patience=args.patience,
        n_train_used=args.n_train_used)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def _meta(lg):
        return {"preset": args.preset, "seed": args.seed,
                "epochs_run": len(lg.epochs), "best_epoch": lg.best_epoch,
                "l_test": lg.best_l_test,
                "config": dataclasses.asdict(config)}

    def _on_epoch(lg):
        lg.to_csv(out_dir / "trainlog.csv")
        # at an improving epoch the live params are the best snapshot, so a
        # kill mid-run still leaves the best checkpoint on disk
        if lg.best_epoch == lg.epochs[-1]:
            interim = make_checkpoint(model, system, mu_grid=train_ds.grid.values,
                                      meta=_meta(lg), beta=train_ds.beta)
            save_checkpoint(interim, out_dir / "checkpoint.json")

    log = training.train(model, train_ds, test_ds, config, on_epoch=_on_epoch)
    ckpt = make_checkpoint(model, system, mu_grid=train_ds.grid.values,
                           meta=_meta(log), beta=train_ds.beta)
    save_checkpoint(ckpt, out_dir / "checkpoint.json")
    log.to_csv(out_dir / "trainlog.csv")
    _write_manifest(out_dir, "train", args)
    print(f"best test L = {log.best_l_test:.6g} at epoch {log.best_epoch} "
          f"({len(log.epochs)} epochs run); checkpoint in {out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ckpt = _load_ckpt(args.ckpt)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = evaluation.default_grid(ckpt.system)
    wants = {"bifurcation", "lyapunov", "rollout"} if args.what == "all" \
        else {args.what}

    report = evaluation.build_report(
        ckpt, grid, seed=args.seed, with_psnr=False,
        with_eta="rollout" in wants)
    if "bifurcation" in wants:
        img_model = evaluation.bifurcation(ckpt, grid, seed=args.seed)
        img_true = evaluation.bifurcation(
            oracle_checkpoint(ckpt.system, ckpt.beta), grid, seed=args.seed)
        evaluation.write_pgm(img_model.pixels, out_dir / "bifurcation-model.pgm")
        evaluation.write_pgm(img_true.pixels, out_dir / "bifurcation-true.pgm")
        report.psnr = evaluation.psnr(img_model.pixels, img_true.pixels)
    if "rollout" in wants and report.eta is not None:
        with open(out_dir / "eta-fits.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mu", "eta"])
            for row in report.eta:
                writer.writerow([f"{row['mu']:.6g}",
                                 "" if row["eta"] is None else f"{row['eta']:.6g}"])
    report.to_json(out_dir / "report.json")
    report.to_csv(out_dir / "lyapunov.csv")
    _write_manifest(out_dir, "evaluate", args)
    print(f"L_LE = {report.l_le:.6g}; sign agreement "
          f"{100 * report.sign_fraction:.1f}%"
          + (f"; PSNR = {report.psnr:.2f} dB" if report.psnr is not None else ""))
    return EXIT_OK


def cmd_sweep(args) -> int:
    system = preset_system(args.preset)
    if args.axis == "nl" and not args.preset.startswith("adqc"):
        print("error: axis 'nl' sweeps circuit layers; use an adqc preset",
              file=sys.stderr)
        return EXIT_USAGE
    if args.axis == "dh" and not args.preset.startswith("lstm"):
        print("error: axis 'dh' sweeps LSTM width; use an lstm preset",
              file=sys.stderr)
        return EXIT_USAGE
    train_path, test_path = _data_paths(Path(args.data), system)
    train_ds = dataset.load(train_path)
    test_ds = dataset.load(test_path)
    values = [int(v) for v in args.values.split(",")]
    seeds = list(range(args.seeds))
    config = training.TrainConfig(
        eta=args.eta, optimizer=args.optimizer, epochs=args.epochs,
        batch_size=args.batch_size, patience=args.patience,
        n_train_used=args.n_train_used)

    grid = evaluation.default_grid(system)
    true_les = evaluation.true_lyapunov_grid(system, grid, seed=args.seed,
                                             beta=train_ds.beta)

    def factory(value, seed):
        kwargs = {"n_layers": value} if args.axis == "nl" else {"d_h": value}
        return build_preset_model(args.preset, seed, **kwargs)

    def metric(model):
        ckpt = make_checkpoint(model, system, mu_grid=train_ds.grid.values,
                               beta=train_ds.beta)
        les = evaluation.model_lyapunov(ckpt, grid, seed=args.seed)
        return evaluation.l_le(les, true_les)

    rows, aggregates = training.sweep(factory, values, seeds, train_ds,
                                      test_ds, config, metric_fn=metric)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["value", "seed", "l_test",
                                                "metric", "epochs_run"])
        writer.writeheader()
        writer.writerows(rows)
    with open(out_dir / "sweep-agg.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["value", "n_seeds",
                                                "l_test_mean", "l_test_std",
                                                "metric_mean", "metric_std"])
        writer.writeheader()
        writer.writerows(aggregates)
    _write_manifest(out_dir, "sweep", args)
    for agg in aggregates:
        print(f"value={agg['value']}: L={agg['l_test_mean']:.6g}"
              f"±{agg['l_test_std']:.3g} "
              f"L_LE={agg['metric_mean']:.6g}±{agg['metric_std']:.3g}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaos-replica",
        description="Train and score chaotic-map predictors (circuit and LSTM).")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker cap (default: {THREADS_ENV_VAR} or cpu count)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate train/test datasets")
    p.add_argument("--system", choices=("1d", "2d"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=dataset.N_TRAIN_CANDIDATES)
    p.add_argument("--n-test", type=int, default=dataset.N_TEST)
    p.add_argument("--beta", type=float, default=0.1)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a preset model")
    p.add_argument("--preset", choices=PRESETS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", required=True, help="directory from gen-data")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--batch-size", type=int, default=500)
    p.add_argument("--eta", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--n-train-used", type=int, default=dataset.N_TRAIN_USED)
    p.add_argument("--d-h", type=int, default=None, help="LSTM width override")
    p.add_argument("--n-layers", type=int, default=None,
                   help="circuit layer override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint against the truth")
    p.add_argument("--ckpt", required=True,
                   help="checkpoint path, or oracle:1d / oracle:2d")
    p.add_argument("--what", choices=("bifurcation", "lyapunov", "rollout", "all"),
                   default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="axis sweep with seed averaging")
    p.add_argument("--preset", choices=PRESETS, required=True)
    p.add_argument("--axis", choices=("dh", "nl"), required=True)
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0,
                   help="evaluation seed (training seeds run 0..seeds-1)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--batch-size", type=int, default=500)
    p.add_argument("--eta", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--n-train-used", type=int, default=dataset.N_TRAIN_USED)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    # the entry shim already exported the cap before numpy loaded; this is
    # just the resolved value for the manifest/debugging
    args.resolved_threads = thread_cap(args.threads)
    try:
        return args.func(args)
    except (SchemaError, FileNotFoundError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, DomainError, UndefinedFitError, ValueError,
            ChaosReplicaError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
