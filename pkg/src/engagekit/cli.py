"""Command line interface.

Subcommands cover the full workflow: ingest a corpus, assemble tracklets
from raw detections, train and evaluate classifiers, compare fusion
strategies, run or serve active-learning personalization, and pretty-print
saved reports.  Exit codes: 0 success, 2 bad usage or config, 3 data errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .classifiers import ClassifierSpec, save_model, train_classifier
from .config import Config, load_config
from .errors import ConfigError, DataError, EngageKitError
from .evaluation import (
    FEATURE_CHOICES,
    loso_evaluate,
    render_confusion,
    render_report_table,
    report_to_dict,
    save_report,
    training_arrays,
)
from .ingest import (
    EngagementLevel,
    ingest_dataset,
    level_fractions,
    load_dataset,
    load_detection_table,
    load_gallery,
    load_manifest,
    save_dataset,
    save_sequences,
)
from .personalization import (
    SimulatedOracle,
    UnlabeledPool,
    export_curve,
    run_personalization,
    start_personalization,
)
from .service import SessionManager, build_student_resources, create_app
from .synthetic import export_corpus, generate_synthetic_dataset
from .tracklets import sequences_from_detections

FAMILY_CHOICES = ("svm_linear", "svm_rbf", "random_forest", "mlp", "lstm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="engagekit",
        description="per-second engagement classification and personalization",
    )
    parser.add_argument("--config", type=Path, help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="load a corpus into one dataset file")
    group = p_ingest.add_mutually_exclusive_group(required=True)
    group.add_argument("--manifest", type=Path, help="dataset manifest (JSON)")
    group.add_argument(
        "--demo",
        type=Path,
        metavar="DIR",
        help="write a small synthetic corpus into DIR and ingest it",
    )
    p_ingest.add_argument("--out", type=Path, required=True)

    p_track = sub.add_parser(
        "tracklets", help="assign identities to detections and cut sequences"
    )
    p_track.add_argument("--manifest", type=Path, required=True)
    p_track.add_argument("--out", type=Path, required=True)

    p_train = sub.add_parser("train", help="fit one classifier on a dataset")
    p_train.add_argument("--dataset", type=Path, required=True)
    p_train.add_argument("--out", type=Path, required=True)
    p_train.add_argument("--family", choices=FAMILY_CHOICES)
    p_train.add_argument(
        "--features", choices=("attention", "affect", "feature_fusion")
    )

    p_eval = sub.add_parser("evaluate", help="leave-one-subject-out evaluation")
    p_eval.add_argument("--dataset", type=Path, required=True)
    p_eval.add_argument("--out", type=Path, required=True)
    p_eval.add_argument("--family", choices=FAMILY_CHOICES)
    p_eval.add_argument("--features", choices=FEATURE_CHOICES)
    p_eval.add_argument(
        "--students", help="comma-separated roster (default: all students)"
    )

    p_fuse = sub.add_parser(
        "fuse", help="compare single modalities against both fusion routes"
    )
    p_fuse.add_argument("--dataset", type=Path, required=True)
    p_fuse.add_argument("--out", type=Path, required=True)
    p_fuse.add_argument("--family", choices=FAMILY_CHOICES)

    p_pers = sub.add_parser(
        "personalize", help="active-learning personalization for one student"
    )
    p_pers.add_argument("--dataset", type=Path, required=True)
    mode = p_pers.add_mutually_exclusive_group(required=True)
    mode.add_argument(
        "--simulated",
        action="store_true",
        help="replay ground-truth labels as the oracle",
    )
    mode.add_argument(
        "--serve",
        action="store_true",
        help="start the HTTP labeling service",
    )
    p_pers.add_argument("--student", help="student to personalize (simulated mode)")
    p_pers.add_argument("--family", choices=FAMILY_CHOICES)
    p_pers.add_argument(
        "--features", choices=("attention", "affect", "feature_fusion")
    )
    p_pers.add_argument("--episodes", type=int)
    p_pers.add_argument("--batch-size", type=int)
    p_pers.add_argument("--eval-fraction", type=float)
    p_pers.add_argument("--out", type=Path, help="curve CSV (simulated mode)")
    p_pers.add_argument(
        "--compare-random",
        action="store_true",
        help="also run a random-sampling baseline",
    )
    p_pers.add_argument("--state-dir", type=Path, help="session persistence dir")
    p_pers.add_argument("--host")
    p_pers.add_argument("--port", type=int)

    p_report = sub.add_parser("report", help="pretty-print saved reports")
    p_report.add_argument(
        "--in",
        dest="inputs",
        type=Path,
        action="append",
        required=True,
        help="report JSON (repeatable)",
    )
    p_report.add_argument(
        "--confusion",
        action="store_true",
        help="also print fold-pooled confusion matrices",
    )
    return parser


def _spec_from(cfg: Config, family: str | None) -> ClassifierSpec:
    return ClassifierSpec(
        family=family or cfg.family,
        seed=cfg.seed,
        c=cfg.c,
        gamma=cfg.gamma,
        pca_target=cfg.pca_target,
        trees=cfg.trees,
    )


def _cmd_ingest(args, cfg: Config) -> int:
    if args.demo is not None:
        synthetic = generate_synthetic_dataset(
            students=3, seconds_per_student=12, separation=3.0, seed=cfg.seed
        )
        manifest_path = export_corpus(args.demo, synthetic)
        print(f"demo corpus written to {args.demo}")
    else:
        manifest_path = args.manifest
    manifest = load_manifest(manifest_path)
    dataset, report = ingest_dataset(manifest)
    save_dataset(args.out, dataset)
    fractions = level_fractions(dataset)
    print(
        f"ingested {report.kept} labeled sequences "
        f"({report.dropped} dropped of {report.total})"
    )
    for level in EngagementLevel:
        print(f"  {level.label:<8} {fractions[int(level)]:.3f}")
    print(f"dataset written to {args.out}")
    return 0


def _cmd_tracklets(args, cfg: Config) -> int:
    manifest = load_manifest(args.manifest)
    if manifest.gallery_path is None or manifest.identity_dim is None:
        raise DataError("tracklets needs a manifest with gallery and identity_dim")
    gallery = load_gallery(manifest.gallery_path, manifest.identity_dim)
    sequences = []
    for session in manifest.sessions:
        detections = []
        for path in session.detections.values():
            detections.extend(load_detection_table(path, manifest))
        if not detections:
            print(f"session {session.session_id}: no detection tables, skipped")
            continue
        extracted = sequences_from_detections(
            detections,
            gallery,
            session.session_id,
            manifest.identity_threshold,
        )
        sequences.extend(extracted)
        per_student: dict[str, int] = {}
        for seq in extracted:
            per_student[seq.student_id] = per_student.get(seq.student_id, 0) + 1
        summary = ", ".join(f"{k}: {v}" for k, v in sorted(per_student.items()))
        print(f"session {session.session_id}: {summary}")
    save_sequences(args.out, sequences)
    print(f"{len(sequences)} sequences written to {args.out}")
    return 0


def _cmd_train(args, cfg: Config) -> int:
    dataset = load_dataset(args.dataset)
    spec = _spec_from(cfg, args.family)
    features = args.features or cfg.features
    if features == "score_fusion":
        raise ConfigError(
            "train writes a single model; use `fuse` for score fusion"
        )
    x, y = training_arrays(
        dataset, features, sequence_mode=spec.input_mode == "full_sequence"
    )
    model = train_classifier(spec, x, y)
    save_model(args.out, model)
    print(
        f"trained {spec.family} on {len(y)} seconds "
        f"({features}); model written to {args.out}"
    )
    return 0


def _cmd_evaluate(args, cfg: Config) -> int:
    dataset = load_dataset(args.dataset)
    spec = _spec_from(cfg, args.family)
    features = args.features or cfg.features
    students = None
    if args.students:
        students = [s.strip() for s in args.students.split(",") if s.strip()]
    elif cfg.students:
        students = cfg.students
    report = loso_evaluate(dataset, spec, features=features, students=students)
    save_report(args.out, report)
    print(render_report_table([report]))
    for fold in report.folds:
        print(f"  fold {fold.student_id}: auroc {fold.auroc:.3f} (n={fold.n_test})")
    print(f"report written to {args.out}")
    return 0


def _cmd_fuse(args, cfg: Config) -> int:
    dataset = load_dataset(args.dataset)
    spec = _spec_from(cfg, args.family)
    reports = []
    for features in FEATURE_CHOICES:
        reports.append(loso_evaluate(dataset, spec, features=features))
    print(render_report_table(reports))
    payload = [report_to_dict(r) for r in reports]
    Path(args.out).write_text(json.dumps(payload, indent=2))
    print(f"reports written to {args.out}")
    return 0


def _cmd_personalize(args, cfg: Config) -> int:
    dataset = load_dataset(args.dataset)
    family = args.family or cfg.family
    features = args.features or cfg.features
    if features == "score_fusion":
        raise ConfigError("personalization needs a single trainable model")
    spec = _spec_from(cfg, family)
    episodes = args.episodes or cfg.episodes
    batch_size = args.batch_size or cfg.batch_size
    eval_fraction = args.eval_fraction or cfg.eval_fraction

    if args.serve:
        registry = {}
        for student in dataset.students():
            resources, _truth = build_student_resources(
                dataset,
                student,
                spec,
                features=features,
                eval_fraction=eval_fraction,
                seed=cfg.seed,
            )
            registry[student] = resources
        manager = SessionManager(
            registry,
            state_dir=args.state_dir,
            episodes=episodes,
            batch_size=batch_size,
        )
        if args.state_dir is not None:
            restored = manager.restore_sessions()
            if restored:
                print(f"restored sessions: {', '.join(restored)}")
        import uvicorn

        app = create_app(manager)
        uvicorn.run(app, host=args.host or cfg.host, port=args.port or cfg.port)
        return 0

    if not args.student:
        raise ConfigError("--simulated needs --student")
    resources, truth = build_student_resources(
        dataset,
        args.student,
        spec,
        features=features,
        eval_fraction=eval_fraction,
        seed=cfg.seed,
    )
    pool = resources.pool_template.copy()
    session = start_personalization(
        token="cli",
        student_id=args.student,
        bundle=resources.bundle,
        eval_items=resources.eval_items,
        eval_levels=resources.eval_levels,
        base_model=resources.model(),
    )
    curve = run_personalization(
        session, pool, SimulatedOracle(truth), episodes, batch_size
    )
    for episode, auroc in enumerate(curve):
        print(
            f"episode {episode}: labels {episode * batch_size:>3}  "
            f"auroc {auroc:.3f}"
        )
    print(f"gain over baseline: {curve[-1] - curve[0]:+.3f}")
    if args.compare_random:
        rng = np.random.default_rng(cfg.seed)
        random_session = start_personalization(
            token="cli-random",
            student_id=args.student,
            bundle=resources.bundle,
            eval_items=resources.eval_items,
            eval_levels=resources.eval_levels,
            base_model=resources.model(),
        )
        random_curve = run_personalization(
            random_session,
            resources.pool_template.copy(),
            SimulatedOracle(truth),
            episodes,
            batch_size,
            selector="random",
            rng=rng,
        )
        for episode, auroc in enumerate(random_curve):
            print(
                f"random episode {episode}: labels {episode * batch_size:>3}  "
                f"auroc {auroc:.3f}"
            )
        print(
            "margin sampling ends "
            f"{curve[-1] - random_curve[-1]:+.3f} over random"
        )
    if args.out:
        export_curve(args.out, curve, batch_size)
        print(f"curve written to {args.out}")
    return 0


def _cmd_report(args, cfg: Config) -> int:
    from .evaluation import ConfusionMatrix, EvaluationReport, FoldResult

    reports = []
    for path in args.inputs:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc
        items = raw if isinstance(raw, list) else [raw]
        for item in items:
            try:
                folds = [
                    FoldResult(
                        student_id=f["student_id"],
                        auroc=float(f["auroc"]),
                        confusion=ConfusionMatrix(
                            counts=np.asarray(f["confusion_counts"]),
                            rows=np.asarray(f["confusion_rows"]),
                            priors=np.asarray(f["priors"]),
                        ),
                        n_test=int(f["n_test"]),
                        training_ids_hash=f["training_ids_hash"],
                    )
                    for f in item["folds"]
                ]
                reports.append(
                    EvaluationReport(
                        family=item["family"],
                        features=item["features"],
                        folds=folds,
                        mean_auroc=float(item["mean_auroc"]),
                        std_auroc=float(item["std_auroc"]),
                        fingerprint=item.get("fingerprint", {}),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: not a report file ({exc})") from exc
    print(render_report_table(reports))
    if args.confusion:
        from .evaluation import confusion_matrix

        for report in reports:
            counts = sum(f.confusion.counts for f in report.folds)
            pooled_pred = []
            pooled_actual = []
            for i in range(3):
                for j in range(3):
                    pooled_pred.extend([j] * counts[i][j])
                    pooled_actual.extend([i] * counts[i][j])
            print(f"\n{report.family} / {report.features}")
            print(render_confusion(confusion_matrix(pooled_pred, pooled_actual)))
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "tracklets": _cmd_tracklets,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "fuse": _cmd_fuse,
    "personalize": _cmd_personalize,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EngageKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
