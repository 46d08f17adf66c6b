"""Single executable exposing the pipeline and verification studies.

Subcommands: ``train``, ``eval``, ``grad-check``, ``theorem``,
``ablate``, ``compare-losses``. Every run resolves its configuration as
preset defaults < optional ``key = value`` config file < explicit
command-line flags, echoes the resolved configuration into the output
directory, and writes deterministic CSV (and SVG) artifacts there.
Exit code 0 means the subcommand's internal assertions passed.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import fields as dataclass_fields

import numpy as np

from .datasets import LabeledFeatureSet
from .embedding import TEACHER_STREAM, TrainConfig, train_encoder
from .encoder import MlpEncoder
from .exceptions import ConfigurationError, SaclError
from .fewshot import (
    GFSL_STREAM_BASE,
    GfslReport,
    evaluate,
    gfsl_evaluate,
    joint_prototypes,
)
from .numerics import RngStream
from .presets import Preset, get_preset
from .svgplot import bar_plot, line_plot
from .teacher import LinearSoftmaxClassifier, train_teacher
from .theory import convergence_study
from .verification import gradient_check

_PRESET_FIELDS = {f.name: f for f in dataclass_fields(Preset) if f.name != "name"}

#: extra (non-preset) config keys per subcommand, with their parsers
_EXTRAS: dict[str, dict[str, type]] = {
    "train": {"seed": int, "threads": int},
    "eval": {"seed": int, "threads": int, "mode": str, "encoder": str,
             "gfsl": bool, "gfsl_shot": int, "gfsl_test_per_class": int,
             "gfsl_fixture": str},
    "grad-check": {"seed": int, "reps": int, "step": float, "tolerance": float},
    "theorem": {"seed": int, "threads": int, "sizes": str, "reps": int, "tau": float,
                "mixture_classes": int, "mixture_dim": int, "concentration": float},
    "ablate": {"seed": int, "threads": int, "grid": str},
    "compare-losses": {"seed": int, "threads": int, "trend_every": int,
                       "trend_episodes": int},
}

_EXTRA_DEFAULTS = {
    "seed": None,  # falls back to SACL_SEED, then 0
    "threads": 1,
    "mode": "both",
    "encoder": "encoder.bin",
    "gfsl": False,
    "gfsl_shot": None,
    "gfsl_test_per_class": 50,
    "gfsl_fixture": None,
    "reps": 5,
    "step": 1e-6,
    "tolerance": 1e-6,
    "sizes": "200,2000,20000",
    "tau": 0.5,
    "mixture_classes": 5,
    "mixture_dim": 16,
    "concentration": 4.0,
    "grid": "temperature",
    "trend_every": 100,
    "trend_episodes": 100,
}


def _parse_preset_value(name: str, raw: str):
    if name == "hidden_dims":
        return tuple(int(v) for v in str(raw).split(",") if v.strip() != "")
    if name == "lam":
        return raw if raw == "adaptive" else float(raw)
    default = _PRESET_FIELDS[name].default
    if isinstance(default, bool):
        return _parse_bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return str(raw)


def _parse_bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise ConfigurationError(f"cannot parse boolean from {raw!r}")


def _parse_extra_value(command: str, name: str, raw):
    kind = _EXTRAS[command][name]
    if kind is bool:
        return _parse_bool(raw)
    return kind(raw)


def read_config_file(path: str) -> dict[str, str]:
    """Line-oriented ``key = value`` pairs; '#' starts a comment line."""
    pairs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigurationError(f"{path}: line {lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            pairs[key.strip()] = value.strip()
    return pairs


def resolve_config(command: str, args: argparse.Namespace) -> tuple[Preset, dict]:
    """Preset defaults, then config-file pairs, then explicit CLI flags."""
    preset = get_preset(args.preset)
    extras = {k: _EXTRA_DEFAULTS[k] for k in _EXTRAS[command]}

    if args.config is not None:
        for key, raw in read_config_file(args.config).items():
            if key in _PRESET_FIELDS:
                preset = preset.with_overrides(**{key: _parse_preset_value(key, raw)})
            elif key in _EXTRAS[command]:
                extras[key] = _parse_extra_value(command, key, raw)
            else:
                raise ConfigurationError(f"unknown config key {key!r} for {command}")

    for key in _PRESET_FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            preset = preset.with_overrides(
                **{key: _parse_preset_value(key, value) if isinstance(value, str) else value}
            )
    for key in _EXTRAS[command]:
        value = getattr(args, key, None)
        if value is not None:
            extras[key] = _parse_extra_value(command, key, value)

    if extras.get("seed") is None:
        extras["seed"] = int(os.environ.get("SACL_SEED", "0"))
    return preset, extras


def echo_config(path, preset: Preset, extras: dict, out: str,
                comments: dict | None = None) -> None:
    lines = []
    for key in sorted(_PRESET_FIELDS):
        value = getattr(preset, key)
        if key == "hidden_dims":
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    for key in sorted(extras):
        value = extras[key]
        if value is None:
            continue
        lines.append(f"{key} = {value}")
    lines.append(f"# out = {out}")
    for key in sorted(comments or {}):
        lines.append(f"# {key} = {(comments or {})[key]}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _train_config(preset: Preset, seed: int) -> TrainConfig:
    return TrainConfig(
        hidden_dims=preset.hidden_dims,
        embed_dim=preset.embed_dim,
        loss=preset.loss,
        iterations=preset.iterations,
        batch_size=preset.batch_size,
        learning_rate=preset.learning_rate,
        tau_hot=preset.tau_hot,
        tau_cold=preset.tau_cold,
        lam=preset.lam,
        noise_sigma=preset.noise_sigma,
        scale_range=(preset.scale_lo, preset.scale_hi),
        seed=seed,
    )


def _fit_teacher(preset: Preset, base: LabeledFeatureSet, seed: int) -> LinearSoftmaxClassifier:
    return train_teacher(
        base,
        epochs=preset.teacher_epochs,
        learning_rate=preset.teacher_learning_rate,
        rng=RngStream(seed, TEACHER_STREAM),
        batch_size=preset.teacher_batch_size,
    )


def cmd_train(preset: Preset, extras: dict, out: str) -> int:
    seed = extras["seed"]
    base, _ = preset.build_world()
    teacher = _fit_teacher(preset, base, seed)
    teacher_acc = float(np.mean(teacher.predict(base.features) == base.labels))
    encoder, log = train_encoder(base, teacher, _train_config(preset, seed))

    teacher.save(os.path.join(out, "teacher.bin"))
    encoder.save(os.path.join(out, "encoder.bin"))
    log.write_csv(os.path.join(out, "train_log.csv"))
    echo_config(os.path.join(out, "config.txt"), preset, extras, out,
                comments={"teacher_train_accuracy": repr(teacher_acc)})
    print(f"trained {preset.loss} encoder: {preset.iterations} iterations, "
          f"final loss {log.loss[-1]:.4f}, teacher train accuracy {teacher_acc:.4f}")
    return 0


def cmd_eval(preset: Preset, extras: dict, out: str) -> int:
    seed = extras["seed"]

    if extras["gfsl_fixture"]:
        acc_b, acc_n, n_base_cls, n_novel_cls = extras["gfsl_fixture"].split(",")
        report = GfslReport.from_accuracies(
            float(acc_b), float(acc_n),
            base_samples=int(n_base_cls), novel_samples=int(n_novel_cls),
            base_class_count=int(n_base_cls), novel_class_count=int(n_novel_cls),
        )
        _write_gfsl_csv(os.path.join(out, "gfsl_fixture.csv"), report)
        echo_config(os.path.join(out, "eval_config.txt"), preset, extras, out)
        print(f"gfsl fixture: joint={report.acc_joint:.4f} harmonic={report.acc_harmonic:.4f}")
        return 0

    encoder_path = os.path.join(out, extras["encoder"])
    if not os.path.exists(encoder_path):
        raise ConfigurationError(f"encoder checkpoint not found: {encoder_path}")
    encoder = MlpEncoder.load(encoder_path)
    base, novel = preset.build_world()

    results = evaluate(
        encoder, novel,
        way=preset.way, shot=preset.shot, query=preset.query,
        episodes=preset.episodes, mode=extras["mode"],
        rng=RngStream(seed), threads=extras["threads"],
    )
    by_mode = {r.mode: r for r in results}
    episode_rows = []
    for i in range(preset.episodes):
        episode_rows.append((
            i,
            float(by_mode["inductive"].episode_accuracies[i]) if "inductive" in by_mode else None,
            float(by_mode["transductive"].episode_accuracies[i]) if "transductive" in by_mode else None,
        ))
    _write_csv(os.path.join(out, "episodes.csv"),
               "episode,acc_inductive,acc_transductive", episode_rows)
    _write_csv(
        os.path.join(out, "summary.csv"),
        "mode,mean,ci95,episodes,way,shot,query",
        [(r.mode, r.mean_accuracy, r.ci95, preset.episodes, preset.way,
          preset.shot, preset.query) for r in results],
    )
    for r in results:
        print(f"{r.mode}: {r.mean_accuracy:.4f} +/- {r.ci95:.4f} "
              f"({preset.episodes} episodes, {preset.way}-way {preset.shot}-shot)")

    if extras["gfsl"]:
        shot = extras["gfsl_shot"] or preset.shot
        protos, support_idx = joint_prototypes(
            encoder, base, novel, shot=shot, rng=RngStream(seed, GFSL_STREAM_BASE)
        )
        mask = np.ones(len(novel), dtype=bool)
        mask[support_idx] = False
        novel_test = LabeledFeatureSet(
            features=novel.features[mask], labels=novel.labels[mask],
            class_ids=novel.class_ids,
        )
        base_test, _ = preset.fresh_test_world(extras["gfsl_test_per_class"])
        report = gfsl_evaluate(encoder, base_test, novel_test, protos)
        _write_gfsl_csv(os.path.join(out, "gfsl.csv"), report)
        print(f"gfsl: base={report.acc_base:.4f} novel={report.acc_novel:.4f} "
              f"joint={report.acc_joint:.4f} harmonic={report.acc_harmonic:.4f}")

    echo_config(os.path.join(out, "eval_config.txt"), preset, extras, out)
    return 0


def _write_gfsl_csv(path, report: GfslReport) -> None:
    _write_csv(
        path,
        "acc_base,acc_novel,acc_joint,acc_harmonic,base_classes,novel_classes",
        [(report.acc_base, report.acc_novel, report.acc_joint,
          report.acc_harmonic, report.base_class_count, report.novel_class_count)],
    )


def cmd_grad_check(preset: Preset, extras: dict, out: str) -> int:
    result = gradient_check(reps=extras["reps"], step=extras["step"],
                            seed=extras["seed"])
    _write_csv(
        os.path.join(out, "grad_check.csv"),
        "config,views,dim,lambda,tau_cold,level,rel_error",
        [(r.config_id, r.views, r.dim, r.lam, r.tau_cold, r.level, r.rel_error)
         for r in result.rows],
    )
    echo_config(os.path.join(out, "grad_check_config.txt"), preset, extras, out)
    tolerance = extras["tolerance"]
    print(f"gradient check: {result.config_count} configurations, "
          f"max relative error {result.max_rel_error:.3e} (tolerance {tolerance:g})")
    return 0 if result.max_rel_error < tolerance else 1


def cmd_theorem(preset: Preset, extras: dict, out: str) -> int:
    sizes = [int(v) for v in str(extras["sizes"]).split(",")]
    study = convergence_study(
        sizes, reps=extras["reps"], tau=extras["tau"],
        class_count=extras["mixture_classes"], dim=extras["mixture_dim"],
        concentration=extras["concentration"], rng=RngStream(extras["seed"]),
        threads=extras["threads"],
    )
    _write_csv(
        os.path.join(out, "theorem.csv"),
        "n,rep,error,alignment,uniformity,lhs",
        [(r.size, r.rep, r.estimate.error, r.estimate.alignment,
          r.estimate.uniformity, r.estimate.lhs) for r in study.records],
    )
    _write_csv(
        os.path.join(out, "theorem_summary.csv"),
        "n,median_error,iqr",
        list(zip(study.sizes, study.median_errors, study.iqrs)),
    )
    line_plot(
        {"median error": [(math.log10(n), math.log10(e))
                          for n, e in zip(study.sizes, study.median_errors)]},
        "decomposition error vs sample size",
        "log10(n)", "log10(median error)",
        os.path.join(out, "theorem_error.svg"),
    )
    echo_config(os.path.join(out, "theorem_config.txt"), preset, extras, out)
    print(f"decomposition error medians over n={study.sizes}: "
          + ", ".join(f"{e:.3e}" for e in study.median_errors)
          + f"; log-error slope {study.log_error_slope:.3e}")
    return 0 if study.monotone_decreasing else 1


def _train_and_score(preset: Preset, base, novel, teacher, seed: int,
                     threads: int, mode: str = "inductive"):
    encoder, log = train_encoder(base, teacher, _train_config(preset, seed))
    results = evaluate(encoder, novel, way=preset.way, shot=preset.shot,
                       query=preset.query, episodes=preset.episodes,
                       mode=mode, rng=RngStream(seed), threads=threads)
    return encoder, log, results


def cmd_ablate(preset: Preset, extras: dict, out: str) -> int:
    seed, threads = extras["seed"], extras["threads"]
    base, novel = preset.build_world()
    teacher = _fit_teacher(preset, base, seed)
    grid = extras["grid"]
    if grid == "temperature":
        cold_grid, hot_grid = (0.05, 0.10, 0.50), (2.5, 5.0, 7.5)
        matrix = []
        for cold in cold_grid:
            row = []
            for hot in hot_grid:
                variant = preset.with_overrides(tau_cold=cold, tau_hot=hot)
                _, _, results = _train_and_score(variant, base, novel, teacher,
                                                 seed, threads)
                row.append(results[0].mean_accuracy)
            matrix.append(row)
        _write_csv(
            os.path.join(out, "temperature_grid.csv"),
            "tau_cold," + ",".join(str(h) for h in hot_grid),
            [(cold, *row) for cold, row in zip(cold_grid, matrix)],
        )
        line_plot(
            {f"tau_cold={c}": list(zip(hot_grid, row))
             for c, row in zip(cold_grid, matrix)},
            f"{preset.way}-way {preset.shot}-shot accuracy over temperatures",
            "tau_hot", "accuracy",
            os.path.join(out, "temperature_grid.svg"),
        )
        flat = [v for row in matrix for v in row]
        print("temperature grid accuracies: "
              + "; ".join(f"cold={c}: " + ",".join(f"{v:.4f}" for v in row)
                          for c, row in zip(cold_grid, matrix)))
    elif grid == "batch":
        batch_grid = (64, 128, 256, 512, 1024)
        rows = []
        for batch in batch_grid:
            variant = preset.with_overrides(batch_size=batch)
            _, _, results = _train_and_score(variant, base, novel, teacher,
                                             seed, threads)
            rows.append((batch, results[0].mean_accuracy, results[0].ci95))
        _write_csv(os.path.join(out, "batch_grid.csv"),
                   "batch_size,accuracy,ci95", rows)
        bar_plot([str(b) for b, _, _ in rows], [a for _, a, _ in rows],
                 f"{preset.way}-way {preset.shot}-shot accuracy over batch size",
                 "accuracy", os.path.join(out, "batch_grid.svg"))
        flat = [a for _, a, _ in rows]
        print("batch grid accuracies: "
              + ", ".join(f"{b}: {a:.4f}" for b, a, _ in rows))
    else:
        raise ConfigurationError(f"unknown grid {grid!r} (temperature or batch)")
    echo_config(os.path.join(out, "ablate_config.txt"), preset, extras, out)
    return 0 if all(math.isfinite(v) for v in flat) else 1


def cmd_compare_losses(preset: Preset, extras: dict, out: str) -> int:
    seed, threads = extras["seed"], extras["threads"]
    every, probe_episodes = extras["trend_every"], extras["trend_episodes"]
    base, novel = preset.build_world()
    teacher = _fit_teacher(preset, base, seed)

    summary_rows, trend = [], {}
    for loss in ("cl", "scl", "sacl"):
        variant = preset.with_overrides(loss=loss)
        points = []

        def probe(it, encoder, points=points):
            if it % every == 0 or it == variant.iterations:
                r = evaluate(encoder, novel, way=preset.way, shot=preset.shot,
                             query=preset.query, episodes=probe_episodes,
                             mode="inductive", rng=RngStream(seed), threads=1)
                points.append((it, r[0].mean_accuracy))

        encoder, _ = train_encoder(base, teacher, _train_config(variant, seed),
                                   callback=probe)
        results = evaluate(encoder, novel, way=preset.way, shot=preset.shot,
                           query=preset.query, episodes=preset.episodes,
                           mode="both", rng=RngStream(seed), threads=threads)
        for r in results:
            summary_rows.append((loss, r.mode, r.mean_accuracy, r.ci95,
                                 preset.episodes))
        trend[loss] = points
        print(f"{loss}: inductive {results[0].mean_accuracy:.4f} +/- {results[0].ci95:.4f}, "
              f"transductive {results[1].mean_accuracy:.4f} +/- {results[1].ci95:.4f}")

    _write_csv(os.path.join(out, "loss_compare.csv"),
               "loss,mode,mean,ci95,episodes", summary_rows)
    iterations = [it for it, _ in trend["cl"]]
    _write_csv(
        os.path.join(out, "accuracy_trend.csv"),
        "iteration,cl,scl,sacl",
        [(it, trend["cl"][k][1], trend["scl"][k][1], trend["sacl"][k][1])
         for k, it in enumerate(iterations)],
    )
    line_plot(trend,
              f"{preset.way}-way {preset.shot}-shot accuracy during training",
              "iteration", "accuracy",
              os.path.join(out, "accuracy_trend.svg"))
    echo_config(os.path.join(out, "compare_losses_config.txt"), preset, extras, out)
    return 0 if all(math.isfinite(v) for _, _, v, _, _ in summary_rows) else 1


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "grad-check": cmd_grad_check,
    "theorem": cmd_theorem,
    "ablate": cmd_ablate,
    "compare-losses": cmd_compare_losses,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sacl",
        description="Structure-aware contrastive embedding laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in _COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--out", default="sacl_out",
                       help="output directory for all artifacts")
        p.add_argument("--preset", default="synthetic-default",
                       help="bundled configuration to start from")
        p.add_argument("--config", default=None,
                       help="optional key = value config file")
        for name in _PRESET_FIELDS:
            p.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None)
        for name, kind in _EXTRAS[command].items():
            flag = f"--{name.replace('_', '-')}"
            if kind is bool:
                p.add_argument(flag, dest=name, action="store_const", const="true",
                               default=None)
            else:
                p.add_argument(flag, dest=name, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        preset, extras = resolve_config(args.command, args)
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command](preset, extras, args.out)
    except (SaclError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
