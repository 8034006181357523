"""Command-line entry point for reproducible batch experiments.

Every subcommand writes its outputs under one run directory together with a
manifest echoing the fully resolved configuration. Values come from flags
first, then an optional key=value config file, then the defaults. All
randomness flows from --seed through named derived streams, and --threads
only caps workers; results do not depend on it.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    load_dataset,
    load_raw_sessions,
    save_dataset,
    save_raw_session,
)
from .detach import kernel_survival, run_sfd, save_trace
from .errors import ConfigError, FixrocketError, UsageError
from .harness import (
    ExperimentConfig,
    SplitPlan,
    SubjectTable,
    compute_metrics,
    cutoff_sweep,
    grid_search,
    load_plan,
    make_split,
    save_plan,
)
from .preprocess import FilterSpec, preprocess_pipeline
from .ridge import (
    balance_weights,
    decision_scores,
    fit_ridge,
    load_model,
    probability,
    save_model,
)
from .rocket import (
    apply_normalizer,
    fit_normalizer,
    generate_kernels,
    save_bank,
    transform,
)
from .seeding import derived_seed

OUT_ROOT_ENV = "FIXROCKET_OUT_ROOT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_help()}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


# name -> (converter, default, help); converters also parse config-file strings
_COMMON = {
    "seed": (int, 0, "global seed for all derived streams"),
    "threads": (int, 0, "worker cap (0 = library default)"),
}

_PARAMS: dict[str, dict] = {
    "generate": {
        **_COMMON,
        "subjects": (int, 30, "subjects per class"),
        "sessions": (int, 2, "sessions per subject"),
        "trials": (int, 12, "trials per session"),
        "tremor-amp": (float, 0.05, "tremor amplitude, degrees"),
        "signature-multiplier": (float, 4.0, "PD band-noise power multiplier"),
        "signature-lo": (float, 25.0, "signature band low edge, Hz"),
        "signature-hi": (float, 60.0, "signature band high edge, Hz"),
        "idiosyncrasy": (float, 0.1, "per-subject gain spread"),
    },
    "preprocess": {
        **_COMMON,
        "raw": (str, None, "cohort directory of raw session CSVs"),
        "cutoff": (float, 20.0, "high-pass cutoff, Hz (0 = no filter)"),
        "order": (int, 8, "filter order"),
        "passes": (str, "forward_backward", "single or forward_backward"),
    },
    "transform": {
        **_COMMON,
        "dataset": (str, None, "trial dataset file"),
        "kernels": (int, 10_000, "number of random kernels"),
        "save-bank": (int, 0, "also write the kernel bank text file (1/0)"),
    },
    "train": {
        **_COMMON,
        "features": (str, None, "features stem from the transform step"),
        "alpha": (float, 1e4, "ridge parameter"),
        "balance": (int, 1, "class-balance sample weights (1/0)"),
        "ratios": (_floats, (0.556, 0.167, 0.278), "train,val,test trial ratios"),
    },
    "evaluate": {
        **_COMMON,
        "features": (str, None, "features stem from the transform step"),
        "model": (str, None, "model file"),
        "split": (str, None, "split plan file"),
        "subset": (str, "test", "which split to score"),
        "threshold": (float, 0.5, "subject vote threshold"),
    },
    "detach": {
        **_COMMON,
        "features": (str, None, "features stem from the transform step"),
        "split": (str, None, "split plan file"),
        "alpha": (float, 1e4, "ridge parameter"),
        "balance": (int, 1, "class-balance sample weights (1/0)"),
        "drop-per-step": (float, 0.05, "fraction of active features dropped per step"),
        "tradeoff-c": (float, 0.1, "size-performance tradeoff"),
        "refit-with-val": (int, 0, "refit the selected mask on train+val (1/0)"),
    },
    "grid-search": {
        **_COMMON,
        "dataset": (str, None, "trial dataset file"),
        "folds": (int, 5, "cross-validation folds"),
        "kernels": (_ints, (100, 1000, 10_000), "kernel counts, comma separated"),
        "alphas": (_floats, (1e-2, 1e-3, 1e-4), "ridge parameters, comma separated"),
    },
    "sweep-cutoff": {
        **_COMMON,
        "raw": (str, None, "cohort directory of raw session CSVs"),
        "cutoffs": (_floats, tuple(2.5 * i for i in range(0, 21)),
                    "cutoffs in Hz, comma separated (0 = unfiltered)"),
        "kernels": (int, 1000, "kernels per sweep point"),
        "alpha": (float, 1e4, "ridge parameter"),
        "seeds": (_ints, (0,), "run seeds per sweep point"),
    },
    "report": {
        "run": (str, None, "run directory to summarize"),
    },
}

_REQUIRED = {
    "preprocess": ("raw",),
    "transform": ("dataset",),
    "train": ("features",),
    "evaluate": ("features", "model", "split"),
    "detach": ("features", "split"),
    "grid-search": ("dataset",),
    "sweep-cutoff": ("raw",),
    "report": ("run",),
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="fixrocket", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for command, params in _PARAMS.items():
        p = sub.add_parser(command, help=f"{command} step")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--config", default=None, help="key=value config file")
        for name, (_conv, default, help_text) in params.items():
            p.add_argument(
                f"--{name}", default=None,
                help=f"{help_text} (default: {default})",
            )
    return parser


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line without '=': {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _resolve(command: str, args: argparse.Namespace) -> dict:
    file_values = _read_config_file(args.config) if args.config else {}
    resolved = {}
    for name, (conv, default, _help) in _PARAMS[command].items():
        attr = name.replace("-", "_")
        flag = getattr(args, attr)
        if flag is not None:
            resolved[name] = conv(flag)
        elif name in file_values:
            resolved[name] = conv(file_values[name])
        else:
            resolved[name] = default
    for name in _REQUIRED.get(command, ()):
        if resolved[name] is None:
            raise UsageError(f"fixrocket {command}: --{name} is required")
    return resolved


def _out_dir(args: argparse.Namespace) -> Path:
    out = args.out or "."
    root = os.environ.get(OUT_ROOT_ENV)
    path = Path(out)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, command: str, resolved: dict) -> None:
    lines = [f"command={command}", f"version={__version__}"]
    for key in sorted(resolved):
        lines.append(f"{key}={resolved[key]!r}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _set_threads(resolved: dict) -> None:
    threads = resolved.get("threads") or 0
    if threads > 0:
        import numba

        numba.set_num_threads(threads)


def _write_kv(path: Path, values: dict) -> None:
    lines = [f"{k}={values[k]!r}" for k in sorted(values)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_long(path: Path, rows: list[tuple]) -> None:
    lines = ["experiment,parameter,level,metric,value"]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Feature-file pair (binary matrix + text row metadata)

def save_features(stem: Path, features) -> None:
    np.save(str(stem) + ".npy", features.values)
    lines = [
        "#features-meta v1",
        f"bank_seed={features.bank_seed}",
        f"n_rows={features.n_rows}",
        f"n_features={features.n_features}",
    ]
    for i in range(features.n_rows):
        lines.append(
            f"{features.subject_ids[i]},{features.conditions[i]},"
            f"{features.tasks[i]},{features.session_ids[i]},{features.trial_indices[i]}"
        )
    Path(str(stem) + ".meta").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_features(stem: Path):
    from .rocket import FeatureMatrix

    values = np.load(str(stem) + ".npy")
    text = Path(str(stem) + ".meta").read_text(encoding="utf-8").splitlines()
    if not text or text[0] != "#features-meta v1":
        raise ConfigError(f"{stem}.meta is not a features metadata file")
    header = dict(line.split("=", 1) for line in text[1:4])
    rows = [line.split(",") for line in text[4:] if line]
    if len(rows) != values.shape[0]:
        raise ConfigError("feature metadata row count does not match the matrix")
    return FeatureMatrix(
        values=values,
        subject_ids=tuple(r[0] for r in rows),
        conditions=tuple(r[1] for r in rows),
        tasks=tuple(r[2] for r in rows),
        session_ids=tuple(r[3] for r in rows),
        trial_indices=tuple(int(r[4]) for r in rows),
        bank_seed=int(header["bank_seed"]),
    )


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_generate(out: Path, cfg: dict) -> int:
    from .synth import CohortSpec, cohort_manifest, generate_cohort

    spec = CohortSpec(
        subjects_per_class=cfg["subjects"],
        sessions_per_subject=cfg["sessions"],
        trials_per_session=cfg["trials"],
        tremor_amp_deg=cfg["tremor-amp"],
        signature_multiplier=cfg["signature-multiplier"],
        signature_band=(cfg["signature-lo"], cfg["signature-hi"]),
        idiosyncrasy=cfg["idiosyncrasy"],
        seed=cfg["seed"],
    )
    raw_dir = out / "raw"
    raw_dir.mkdir(parents=True, exist_ok=True)
    sessions = generate_cohort(spec)
    for session in sessions:
        save_raw_session(session, raw_dir / f"{session.session_id}.csv")
    (out / "cohort_manifest.txt").write_text(cohort_manifest(spec), encoding="utf-8")
    print(f"wrote {len(sessions)} sessions to {raw_dir}")
    return 0


def _cmd_preprocess(out: Path, cfg: dict) -> int:
    sessions = load_raw_sessions(cfg["raw"])
    spec = None if cfg["cutoff"] == 0 else FilterSpec(
        order=cfg["order"], cutoff_hz=cfg["cutoff"], passes=cfg["passes"]
    )
    dataset, report = preprocess_pipeline(sessions, spec)
    save_dataset(dataset, out / "dataset.txt")
    (out / "preprocess_report.txt").write_text(report.format(), encoding="utf-8")
    print(report.format(), end="")
    return 0


def _cmd_transform(out: Path, cfg: dict) -> int:
    dataset = load_dataset(cfg["dataset"])
    bank_seed = derived_seed(cfg["seed"], "kernels")
    bank = generate_kernels(cfg["kernels"], seed=bank_seed)
    features = transform(dataset, bank)
    save_features(out / "features", features)
    if cfg["save-bank"]:
        save_bank(bank, out / "bank.txt")
    print(f"features: {features.n_rows} x {features.n_features} (bank seed {bank_seed})")
    return 0


def _split_rows(features, plan: SplitPlan, split: str) -> np.ndarray:
    wanted = set(plan.subjects(split))
    return np.array(
        [i for i, s in enumerate(features.subject_ids) if s in wanted],
        dtype=np.int64,
    )


def _subject_table(features) -> SubjectTable:
    from .data import condition_label

    index: dict[str, list[int]] = {}
    labels: dict[str, str] = {}
    for i, s in enumerate(features.subject_ids):
        index.setdefault(s, []).append(i)
        labels[s] = condition_label(features.conditions[i])
    return SubjectTable(
        subject_index={k: tuple(v) for k, v in index.items()}, labels=labels
    )


def _cmd_train(out: Path, cfg: dict) -> int:
    features = load_features(Path(cfg["features"]))
    plan = make_split(
        _subject_table(features),
        ratios=cfg["ratios"],
        seed=derived_seed(cfg["seed"], "split"),
    )
    save_plan(plan, out / "split.txt")
    rows = {name: _split_rows(features, plan, name) for name in ("train", "val")}
    y = features.labels()
    norm = fit_normalizer(features.values[rows["train"]])
    values_n = apply_normalizer(norm, features.values)
    weights = balance_weights(y[rows["train"]]) if cfg["balance"] else None
    model = fit_ridge(
        values_n[rows["train"]], y[rows["train"]],
        alpha=cfg["alpha"], sample_weights=weights,
        normalizer=norm, bank_seed=features.bank_seed,
    )
    save_model(model, out / "model.txt")

    metrics = {}
    for name, idx in rows.items():
        d = decision_scores(model, values_n[idx])
        m = compute_metrics(np.where(d > 0, 1.0, -1.0), y[idx])
        metrics[f"{name}_accuracy"] = m.accuracy
        metrics[f"{name}_uf1"] = m.uf1
        metrics[f"{name}_n"] = m.n
    _write_kv(out / "metrics_train.txt", metrics)
    print(f"trained alpha={cfg['alpha']:g} train_acc={metrics['train_accuracy']:.4f}")
    return 0


def _cmd_detach(out: Path, cfg: dict) -> int:
    features = load_features(Path(cfg["features"]))
    plan = load_plan(cfg["split"])
    rows = {name: _split_rows(features, plan, name) for name in ("train", "val")}
    y = features.labels()
    norm = fit_normalizer(features.values[rows["train"]])
    values_n = apply_normalizer(norm, features.values)
    weights = balance_weights(y[rows["train"]]) if cfg["balance"] else None
    trace, model = run_sfd(
        values_n[rows["train"]], y[rows["train"]],
        values_n[rows["val"]], y[rows["val"]],
        alpha=cfg["alpha"],
        drop_per_step=cfg["drop-per-step"],
        tradeoff_c=cfg["tradeoff-c"],
        sample_weights=weights,
        refit_with_val=bool(cfg["refit-with-val"]),
    )
    from dataclasses import replace

    model = replace(model, normalizer=norm, bank_seed=features.bank_seed)
    save_trace(trace, out / "trace.txt")
    save_model(model, out / "model_detached.txt")
    selected = trace.selected
    _write_kv(out / "metrics_detach.txt", {
        "selected_step": trace.selected_index,
        "retained_count": selected.retained_count,
        "retained_fraction": selected.retained_fraction,
        "kernels_retained": kernel_survival(selected.mask),
        "val_accuracy": selected.val_accuracy,
    })
    print(
        f"detached to {selected.retained_count} features "
        f"({100 * selected.retained_fraction:.2f}%), "
        f"{kernel_survival(selected.mask)} kernels survive"
    )
    return 0


def _cmd_evaluate(out: Path, cfg: dict) -> int:
    from .harness import aggregate_subjects

    features = load_features(Path(cfg["features"]))
    model = load_model(cfg["model"])
    plan = load_plan(cfg["split"])
    rows = _split_rows(features, plan, cfg["subset"])
    if rows.size == 0:
        raise ConfigError(f"split {cfg['subset']!r} selects no rows")
    y = features.labels()
    values_n = apply_normalizer(model.normalizer, features.values)
    d = decision_scores(model, values_n[rows])
    probs = probability(d)
    preds = np.where(d > 0, 1.0, -1.0)
    trial_m = compute_metrics(preds, y[rows])

    by_subject: dict[str, list[float]] = {}
    subject_labels: dict[str, float] = {}
    pred_lines = ["subject,session,trial_index,task,condition,label,prob,pred"]
    for j, row in enumerate(rows):
        sid = features.subject_ids[row]
        by_subject.setdefault(sid, []).append(float(probs[j]))
        subject_labels[sid] = float(y[row])
        pred_lines.append(
            f"{sid},{features.session_ids[row]},{features.trial_indices[row]},"
            f"{features.tasks[row]},{features.conditions[row]},"
            f"{y[row]:+.0f},{probs[j]:.17g},{preds[j]:+.0f}"
        )
    votes = aggregate_subjects(by_subject, threshold=cfg["threshold"])
    subjects = sorted(votes)
    subject_m = compute_metrics(
        np.array([votes[s][1] for s in subjects]),
        np.array([subject_labels[s] for s in subjects]),
    )
    (out / "predictions.csv").write_text("\n".join(pred_lines) + "\n", encoding="utf-8")
    _write_kv(out / "metrics.txt", {
        "subset": cfg["subset"],
        "trial_accuracy": trial_m.accuracy,
        "trial_uf1": trial_m.uf1,
        "trial_n": trial_m.n,
        "subject_accuracy": subject_m.accuracy,
        "subject_uf1": subject_m.uf1,
        "subject_n": subject_m.n,
    })
    print(
        f"{cfg['subset']}: trial acc {trial_m.accuracy:.4f} uF1 {trial_m.uf1:.4f} | "
        f"subject acc {subject_m.accuracy:.4f} uF1 {subject_m.uf1:.4f}"
    )
    return 0


def _cmd_grid_search(out: Path, cfg: dict) -> int:
    dataset = load_dataset(cfg["dataset"])
    result = grid_search(
        dataset,
        k_folds=cfg["folds"],
        kernel_counts=cfg["kernels"],
        alphas=cfg["alphas"],
        seed=cfg["seed"],
    )
    lines = ["kernels\t" + "\t".join(f"alpha={a:g}" for a in result.alphas)]
    long_rows = []
    for i, count in enumerate(result.kernel_counts):
        cells = "\t".join(f"{result.mean_uf1[i, j]:.6f}" for j in range(len(result.alphas)))
        lines.append(f"{count}\t{cells}")
        for j, alpha in enumerate(result.alphas):
            long_rows.append(
                ("grid_search", f"kernels={count};alpha={alpha:g}", "val",
                 "uf1", f"{result.mean_uf1[i, j]:.17g}")
            )
    (out / "grid.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_long(out / "grid_long.csv", long_rows)
    best_k, best_a = result.best()
    print(f"best cell: kernels={best_k} alpha={best_a:g}")
    return 0


def _cmd_sweep_cutoff(out: Path, cfg: dict) -> int:
    sessions = load_raw_sessions(cfg["raw"])
    config = ExperimentConfig(
        num_kernels=cfg["kernels"], alpha=cfg["alpha"], seeds=cfg["seeds"]
    )
    points = cutoff_sweep(sessions, cfg["cutoffs"], config)
    lines = ["cutoff_hz\ttrial_uf1\tsubject_uf1\tbaseline_trial_uf1\tbaseline_subject_uf1"]
    long_rows = []
    for p in points:
        lines.append(
            f"{p.cutoff_hz:g}\t{p.trial_uf1:.6f}\t{p.subject_uf1:.6f}\t"
            f"{p.baseline_trial_uf1:.6f}\t{p.baseline_subject_uf1:.6f}"
        )
        for level, value in (("trial", p.trial_uf1), ("subject", p.subject_uf1)):
            long_rows.append(
                ("cutoff_sweep", f"cutoff={p.cutoff_hz:g}", level, "uf1",
                 f"{value:.17g}")
            )
    (out / "sweep.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_long(out / "sweep_long.csv", long_rows)
    print(f"swept {len(points)} cutoffs")
    return 0


def _cmd_report(out: Path, cfg: dict) -> int:
    run_dir = Path(cfg["run"])
    if not run_dir.is_dir():
        raise ConfigError(f"{run_dir} is not a directory")
    sections = []
    for path in sorted(run_dir.glob("metrics*.txt")):
        sections.append(f"[{path.name}]")
        sections.append(path.read_text(encoding="utf-8").rstrip("\n"))
    for path in sorted(run_dir.glob("*.tsv")):
        sections.append(f"[{path.name}]")
        sections.append(path.read_text(encoding="utf-8").rstrip("\n"))
    if not sections:
        raise ConfigError(f"no metrics or table files under {run_dir}")
    summary = "\n".join(sections) + "\n"
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return 0


_HANDLERS = {
    "generate": _cmd_generate,
    "preprocess": _cmd_preprocess,
    "transform": _cmd_transform,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "detach": _cmd_detach,
    "grid-search": _cmd_grid_search,
    "sweep-cutoff": _cmd_sweep_cutoff,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        resolved = _resolve(args.command, args)
        _set_threads(resolved)
        out = _out_dir(args)
        _write_manifest(out, args.command, resolved)
        return _HANDLERS[args.command](out, resolved)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except FixrocketError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
