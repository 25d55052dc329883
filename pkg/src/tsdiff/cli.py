"""Command-line entry point.

Every subcommand resolves its configuration as defaults < config file <
flags, derives all randomness from one seed (flag, else config, else the
TSDF_SEED environment variable), and writes a run manifest recording the
resolved config, the seed, and a hash of every artifact it produced.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import augbench, diffusion, gradcheck, nn, pretrain
from .config import RunConfig, resolve_config
from .data import (Cohort, MANIFEST_NAME, Subject, ToyGenConfig,
                   generate_toy_cohort, load_cohort, preprocess, save_cohort,
                   whole_cohort_slice)
from .denoiser import DenoiserConfig
from .errors import TsdiffError, UsageError
from .fc import fc_csv, fisher_z, pearson_fc, upper_triangle_features
from .fidelity import fidelity_csv, fidelity_report, pca_project, projection_csv
from .rng import resolve_seed
from .schedule import cosine_schedule, schedule_csv

_FLOAT_FMT = "%.9g"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _hash_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(out: str, rel: str, text: str) -> str:
    full = os.path.join(out, rel)
    os.makedirs(os.path.dirname(full) or ".", exist_ok=True)
    with open(full, "w", newline="\n") as fh:
        fh.write(text)
    return full


def _write_manifest(out: str, command: str, rc: RunConfig, seed: int) -> None:
    """Hash every artifact under the output directory. Wall-clock training
    logs (*_log.csv) are listed but not hashed."""
    artifacts = {}
    logs = []
    for root, dirs, files in os.walk(out):
        dirs.sort()
        for name in sorted(files):
            rel = os.path.relpath(os.path.join(root, name), out).replace(os.sep, "/")
            if rel == "run_manifest.json":
                continue
            if name.endswith("_log.csv"):
                logs.append(rel)
            else:
                artifacts[rel] = _hash_file(os.path.join(root, name))
    manifest = {
        "command": command,
        "config": rc.dump_dict(),
        "config_hash": rc.config_hash(),
        "seed": seed,
        "artifacts": artifacts,
        "logs": sorted(logs),
    }
    _write_text(out, "run_manifest.json",
                json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _prologue(args) -> tuple:
    rc = resolve_config(args.config, args.set)
    if args.seed is not None:
        seed = int(args.seed)
    elif rc.origin("seed") != "default":
        seed = rc.get("seed")
    else:
        seed = resolve_seed(None, rc.get("seed"))
    os.makedirs(args.out, exist_ok=True)
    return rc, seed


def _load_cohort_arg(path: str) -> Cohort:
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    return load_cohort(path)


def _denoiser_config(rc: RunConfig, cohort: Cohort) -> DenoiserConfig:
    return DenoiserConfig(
        input_dim=cohort.rois, seq_len=cohort.length,
        n_layers=rc.get("denoiser.n_layers"), d_model=rc.get("denoiser.d_model"),
        n_heads=rc.get("denoiser.n_heads"), d_ff=rc.get("denoiser.d_ff"),
        dropout=rc.get("denoiser.dropout"))


def _toy_config(rc: RunConfig, seed: int) -> ToyGenConfig:
    return ToyGenConfig(
        n_per_class=rc.get("toy.n_per_class"), rois=rc.get("toy.rois"),
        length=rc.get("toy.length"),
        innovation_scale=rc.get("toy.innovation_scale"),
        burn_in=rc.get("toy.burn_in"), seed=seed)


# -- subcommand handlers -------------------------------------------------------

def _cmd_gen_toy(args) -> int:
    rc, seed = _prologue(args)
    save_cohort(generate_toy_cohort(_toy_config(rc, seed)), args.out)
    _write_manifest(args.out, "gen-toy", rc, seed)
    return 0


def _cmd_pretrain(args) -> int:
    rc, seed = _prologue(args)
    cohort = _load_cohort_arg(args.data)
    grid = tuple(pretrain.GridPoint(lr, wd, epochs, dropout)
                 for lr in rc.get("pretrain.lr_grid")
                 for wd in rc.get("pretrain.weight_decay_grid")
                 for epochs in rc.get("pretrain.epochs_grid")
                 for dropout in rc.get("pretrain.dropout_grid"))
    pcfg = pretrain.PretrainConfig(grid=grid,
                                   inner_folds=rc.get("pretrain.inner_folds"),
                                   batch_size=rc.get("pretrain.batch_size"),
                                   seed=seed)
    result = pretrain.pretrain_classifier(whole_cohort_slice(cohort),
                                          _denoiser_config(rc, cohort), pcfg)
    nn.save_checkpoint(os.path.join(args.out, "encoder.tsdf"), result.encoder_arrays())
    _write_text(args.out, "cv_report.csv", pretrain.cv_report_csv(result))
    _write_manifest(args.out, "pretrain", rc, seed)
    print(f"selected grid point {result.grid_index} "
          f"(lr={result.selected.lr:g}, weight_decay={result.selected.weight_decay:g}, "
          f"epochs={result.selected.epochs}, dropout={result.selected.dropout:g}), "
          f"mean inner-CV accuracy {result.mean_val_acc:.4f}")
    return 0


def _cmd_train_diffusion(args) -> int:
    rc, seed = _prologue(args)
    cohort = _load_cohort_arg(args.data)
    dcfg = _denoiser_config(rc, cohort)
    init_params = None
    init_mode = "random"
    if args.init is not None:
        arrays = nn.load_checkpoint(args.init)
        init_params, report = pretrain.transfer_weights(arrays, dcfg, seed=seed)
        init_mode = "pretrained"
        print(f"transferred {report.transferred} tensors, "
              f"{report.fresh} freshly initialized")
    tcfg = diffusion.TrainConfig(
        epochs=rc.get("diffusion.epochs"), batch_size=rc.get("diffusion.batch_size"),
        lr=rc.get("diffusion.lr"), weight_decay=rc.get("diffusion.weight_decay"),
        T=rc.get("diffusion.T"), seed=seed, init_mode=init_mode)
    cohort_slice = whole_cohort_slice(cohort).only_class(args.label)
    model = diffusion.train(cohort_slice, dcfg, tcfg, init=init_params,
                            log_path=os.path.join(args.out, "train_log.csv"))
    diffusion.save_model(model, os.path.join(args.out, "model.tsdf"))
    _write_manifest(args.out, "train-diffusion", rc, seed)
    print(f"final epoch mean loss {model.loss_history[-1]:.6f}")
    return 0


def _cmd_sample(args) -> int:
    rc, seed = _prologue(args)
    model = diffusion.load_model(args.model)
    variance = args.variance or rc.get("sample.variance")
    batch = diffusion.sample_batch(model, args.n, seed, variance=variance)
    subjects = tuple(
        Subject(f"syn{batch.class_label}_{i:04d}", batch.class_label, arr)
        for i, arr in enumerate(batch.samples))
    save_cohort(Cohort(subjects), args.out)
    folds = "|".join(str(f) for f in (batch.train_fold_ids or ()))
    lines = ["subject_id,class,checkpoint_hash,train_fold_ids"]
    for s in subjects:
        lines.append(f"{s.subject_id},{batch.class_label},{batch.checkpoint_hash},{folds}")
    _write_text(args.out, "provenance.csv", "\n".join(lines) + "\n")
    _write_manifest(args.out, "sample", rc, seed)
    return 0


def _cmd_fc(args) -> int:
    rc, seed = _prologue(args)
    cohort = _load_cohort_arg(args.data)
    names = cohort.roi_names
    i, j = np.triu_indices(cohort.rois, k=1)
    header = ["subject_id", "label"] + [f"{names[a]}__{names[b]}" for a, b in zip(i, j)]
    rows = [",".join(header)]
    for s in cohort.subjects:
        m = pearson_fc(preprocess(s.series), names)
        _write_text(args.out, f"fc/{s.subject_id}_fc.csv", fc_csv(m))
        feats = upper_triangle_features(m)
        if args.fisher:
            feats = fisher_z(feats)
        rows.append(",".join([s.subject_id, str(s.label)]
                             + [_FLOAT_FMT % v for v in feats]))
    _write_text(args.out, "features.csv", "\n".join(rows) + "\n")
    _write_manifest(args.out, "fc", rc, seed)
    return 0


def _cmd_fidelity(args) -> int:
    rc, seed = _prologue(args)
    report = fidelity_report(_load_cohort_arg(args.real), _load_cohort_arg(args.synth),
                             bins=rc.get("fidelity.bins"), eps=rc.get("fidelity.eps"))
    _write_text(args.out, "fidelity_report.csv", fidelity_csv(report))
    _write_manifest(args.out, "fidelity", rc, seed)
    for label in sorted(report.per_class):
        m = report.per_class[label]
        print(f"class {label}: kl={m.kl:.6f} wd={m.wd:.6f} ks={m.ks:.6f}")
    return 0


def _cmd_project(args) -> int:
    rc, seed = _prologue(args)
    proj = pca_project(_load_cohort_arg(args.real), _load_cohort_arg(args.synth))
    _write_text(args.out, "projection.csv", projection_csv(proj))
    _write_manifest(args.out, "project", rc, seed)
    return 0


def _bench_config(rc: RunConfig, seed: int) -> augbench.BenchmarkConfig:
    return augbench.BenchmarkConfig(
        k=rc.get("bench.k"), seeds=rc.get("bench.seeds"),
        augment_ratio=rc.get("bench.augment_ratio"),
        ablation=rc.get("bench.ablation"), seed=seed,
        train=diffusion.TrainConfig(
            epochs=rc.get("bench.train_epochs"),
            batch_size=rc.get("bench.train_batch_size"),
            lr=rc.get("bench.train_lr"),
            weight_decay=rc.get("bench.train_weight_decay"),
            T=rc.get("bench.train_T")),
        pretrain=pretrain.PretrainConfig(
            grid=(pretrain.GridPoint(rc.get("bench.pretrain_lr"),
                                     rc.get("bench.pretrain_weight_decay"),
                                     rc.get("bench.pretrain_epochs"),
                                     rc.get("bench.pretrain_dropout")),),
            inner_folds=rc.get("bench.pretrain_inner_folds"),
            batch_size=rc.get("pretrain.batch_size")),
        downstream=augbench.DownstreamConfig(
            hidden=rc.get("downstream.hidden"), dropout=rc.get("downstream.dropout"),
            epochs=rc.get("downstream.epochs"), lr=rc.get("downstream.lr"),
            weight_decay=rc.get("downstream.weight_decay"),
            batch_size=rc.get("downstream.batch_size")),
        denoiser=augbench.DenoiserShape(
            n_layers=rc.get("bench.denoiser_layers"),
            d_model=rc.get("bench.denoiser_d_model"),
            n_heads=rc.get("bench.denoiser_heads"),
            d_ff=rc.get("bench.denoiser_d_ff")))


def _write_bench_outputs(out: str, report: augbench.BenchmarkReport) -> None:
    _write_text(out, "report.csv", augbench.report_csv(report))
    _write_text(out, "summary.csv", augbench.summary_csv(report))
    _write_text(out, "deltas.csv", augbench.deltas_csv(report))
    _write_text(out, "provenance.csv", augbench.provenance_csv(report))
    _write_text(out, "split_hash.txt", report.split_hash + "\n")


def _cmd_bench(args) -> int:
    rc, seed = _prologue(args)
    jobs = args.jobs if args.jobs is not None else rc.get("jobs")
    bcfg = _bench_config(rc, seed)
    sites = rc.get("bench.sites")
    if sites > 0:
        reports = augbench.run_multisite(_toy_config(rc, seed), bcfg, sites,
                                         perturb=rc.get("bench.site_perturb"),
                                         jobs=jobs)
        for site, report in sorted(reports.items()):
            _write_bench_outputs(os.path.join(args.out, f"site{site}"), report)
            print(f"site {site}: mean paired acc delta {report.mean_delta():+.4f}")
    else:
        cohort = (_load_cohort_arg(args.data) if args.data is not None
                  else generate_toy_cohort(_toy_config(rc, seed)))
        report = augbench.run_benchmark(cohort, bcfg, jobs=jobs)
        _write_bench_outputs(args.out, report)
        print(f"mean paired acc delta {report.mean_delta():+.4f} over "
              f"{len(report.paired_deltas())} cells")
    _write_manifest(args.out, "bench", rc, seed)
    return 0


def _cmd_schedule_dump(args) -> int:
    rc, seed = _prologue(args)
    T = args.steps if args.steps is not None else rc.get("diffusion.T")
    _write_text(args.out, "schedule.csv", schedule_csv(cosine_schedule(T)))
    _write_manifest(args.out, "schedule-dump", rc, seed)
    return 0


def _cmd_gradcheck(args) -> int:
    rc, seed = _prologue(args)
    dtype = np.float64 if args.dtype == "float64" else np.float32
    _, tol = gradcheck.tolerances(dtype)
    results = gradcheck.run_all(dtype)
    lines = ["kernel,max_rel_err,n_elements,passed"]
    failed = []
    for r in results:
        ok = r.passed(tol)
        lines.append(f"{r.name},{r.max_rel_err:.3e},{r.n_elements},{int(ok)}")
        print(f"{'PASS' if ok else 'FAIL'} {r.name:24s} max rel err {r.max_rel_err:.3e}")
        if not ok:
            failed.append(r.name)
    _write_text(args.out, "gradcheck.csv", "\n".join(lines) + "\n")
    _write_manifest(args.out, "gradcheck", rc, seed)
    if failed:
        raise TsdiffError(f"gradient check failed for: {', '.join(failed)}")
    return 0


# -- parser --------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, default=None,
                   help="global seed (default: config, then TSDF_SEED, then 0)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="tsdiff",
                     description="Train diffusion models on ROI time series, "
                                 "synthesize cohorts, and benchmark augmentation.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-toy", help="generate the class-conditional toy cohort")
    _add_common(p)
    p.set_defaults(handler=_cmd_gen_toy)

    p = sub.add_parser("pretrain", help="grid-search pretrain the encoder classifier")
    _add_common(p)
    p.add_argument("--data", required=True, help="cohort directory or manifest")
    p.set_defaults(handler=_cmd_pretrain)

    p = sub.add_parser("train-diffusion", help="train one per-class diffusion model")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--label", type=int, required=True, help="class to model (0 or 1)")
    p.add_argument("--init", default=None, help="pretrained encoder checkpoint")
    p.set_defaults(handler=_cmd_train_diffusion)

    p = sub.add_parser("sample", help="draw synthetic subjects from a trained model")
    _add_common(p)
    p.add_argument("--model", required=True, help="model checkpoint path")
    p.add_argument("--n", type=int, required=True, help="number of subjects")
    p.add_argument("--variance", choices=list(diffusion.VARIANCE_MODES), default=None)
    p.set_defaults(handler=_cmd_sample)

    p = sub.add_parser("fc", help="functional connectivity matrices and features")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--fisher", action="store_true", help="arctanh-transform features")
    p.set_defaults(handler=_cmd_fc)

    p = sub.add_parser("fidelity", help="distribution metrics real vs. synthetic")
    _add_common(p)
    p.add_argument("--real", required=True)
    p.add_argument("--synth", required=True)
    p.set_defaults(handler=_cmd_fidelity)

    p = sub.add_parser("project", help="2-D PCA projection of both clouds")
    _add_common(p)
    p.add_argument("--real", required=True)
    p.add_argument("--synth", required=True)
    p.set_defaults(handler=_cmd_project)

    p = sub.add_parser("bench", help="augmentation benchmark over folds and seeds")
    _add_common(p)
    p.add_argument("--data", default=None,
                   help="cohort to benchmark (default: generate the toy cohort)")
    p.add_argument("--jobs", type=int, default=None, help="max concurrent cells")
    p.set_defaults(handler=_cmd_bench)

    p = sub.add_parser("schedule-dump", help="emit the cosine schedule as CSV")
    _add_common(p)
    p.add_argument("--steps", type=int, default=None, help="step count T")
    p.set_defaults(handler=_cmd_schedule_dump)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    _add_common(p)
    p.add_argument("--dtype", choices=["float64", "float32"], default="float64")
    p.set_defaults(handler=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n\n{parser.format_usage()}")
        return 1
    except SystemExit as exc:       # argparse --help
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        sys.stderr.write(parser.format_help())
        return 1
    try:
        return args.handler(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 1
    except TsdiffError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except Exception as exc:        # keep scripted pipelines well-behaved
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
