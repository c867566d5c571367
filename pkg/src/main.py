"""CLI entry point for ability diagnosis"""

import argparse
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.config import LOG_LEVEL, TrainConfig, config_hash
from src.diagnostic_net import load_checkpoint, predict_proba, save_checkpoint, score_unseen
from src.errors import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, DataValidationError, DiagnosisError, PlanError
from src.matrices import Dataset, align, coverage_stats, describe_dataset, load_q_matrix, load_response_matrix
from src.protocols import load_dataset, load_plan, run_consistency, run_cross, run_within
from src.report import RunInfo, build_report, summary_lines, write_report
from src.synthgen import SynthSpec, generate, load_template, write_synthetic
from src.taxonomy import builtin_taxonomy, check_taxonomy, load_taxonomy
from src.tools.validation import criterion_validity
from src.trainer import train

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse with the usage-error exit code"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"Error: {message}\n")


def _load_dataset(responses, qmatrix) -> Dataset:
    dataset = align(load_response_matrix(responses), load_q_matrix(qmatrix))
    print(
        f"✓ Loaded {dataset.n_models:,} models × {dataset.n_items:,} items × "
        f"{dataset.n_abilities} abilities"
    )
    return dataset


def _train_config(args) -> TrainConfig:
    overrides = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise PlanError(f"file not found: {path}")
        try:
            overrides.update(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise PlanError(f"{path}: invalid JSON ({e})") from e
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "max_epochs", None) is not None:
        overrides["max_epochs"] = args.max_epochs
    try:
        return TrainConfig.model_validate(overrides)
    except ValidationError as e:
        raise PlanError(f"invalid training configuration: {e}") from e


def _load_taxonomy(value: str):
    path = Path(value)
    return load_taxonomy(path) if path.suffix == ".json" or path.is_file() else builtin_taxonomy(value)


def _in_model_order(dataset: Dataset, model_ids: tuple[str, ...]) -> Dataset:
    if set(dataset.model_ids) != set(model_ids):
        raise DataValidationError("responses list different models than the checkpoint")
    position = {m: i for i, m in enumerate(dataset.model_ids)}
    return dataset.take_models([position[m] for m in model_ids])


def cmd_train(args) -> int:
    dataset = _load_dataset(args.responses, args.qmatrix)
    if args.taxonomy:
        check_taxonomy(dataset.q, _load_taxonomy(args.taxonomy))
    config = _train_config(args)
    result = train(dataset, config, log_path=args.log)
    digest = save_checkpoint(result.model, args.out)
    print(f"✓ Trained {len(result.history)} epochs, final loss {result.history[-1].loss:.6f}")
    print(f"✓ Checkpoint written to {args.out} (sha256 {digest[:16]})")
    return EXIT_OK


def _evaluate_plan(args):
    plan = load_plan(args.plan)
    source = load_dataset(plan.source)
    digests = {plan.source.name: source.digest()}
    coverage = {plan.source.name: source.q}
    validity, consistency_table, result = [], None, None

    if plan.kind == "within":
        result = run_within(source, plan)
        full = train(source, plan.train.with_seed(plan.seeds[0])).model
        validity.append(criterion_validity(full, source, plan.source.name, plan.alpha))
    else:
        target = load_dataset(plan.target)
        digests[plan.target.name] = target.digest()
        coverage[plan.target.name] = target.q
        if plan.kind == "cross":
            result = run_cross(source, target, plan)
            validity.append(criterion_validity(result.full_fit, source, plan.source.name, plan.alpha))
        else:
            outcome = run_consistency(source, target, plan)
            consistency_table = outcome.table
            validity.append(criterion_validity(outcome.model_a, source, plan.source.name, plan.alpha))
            target_in_order = _in_model_order(target, outcome.model_b.model_ids)
            validity.append(
                criterion_validity(outcome.model_b, target_in_order, plan.target.name, plan.alpha)
            )

    run = RunInfo(
        kind=plan.kind,
        seeds=list(plan.seeds),
        config_hash=config_hash(plan.train),
        plan_hash=config_hash(plan.model_dump(mode="json", exclude={"source", "target"})),
        dataset_digests=digests,
        degenerate_pair=bool(result is not None and result.degenerate_pair),
    )
    return build_report(run, result, validity, consistency_table, coverage)


def _evaluate_checkpoint(args):
    if not (args.responses and args.qmatrix):
        raise PlanError("--checkpoint needs --responses and --qmatrix")
    model = load_checkpoint(args.checkpoint)
    dataset = _in_model_order(_load_dataset(args.responses, args.qmatrix), model.model_ids)
    name = Path(args.responses).stem
    validity = criterion_validity(model, dataset, name)
    run = RunInfo(
        kind="checkpoint",
        seeds=[],
        config_hash=config_hash({"checkpoint": Path(args.checkpoint).name}),
        dataset_digests={name: dataset.digest()},
        checkpoint_digest=_file_digest(args.checkpoint),
    )
    return build_report(run, validity=[validity], coverage={name: dataset.q})


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_evaluate(args) -> int:
    if bool(args.plan) == bool(args.checkpoint):
        raise PlanError("give exactly one of --plan or --checkpoint")
    started_at = datetime.now(timezone.utc)
    report = _evaluate_plan(args) if args.plan else _evaluate_checkpoint(args)
    paths = write_report(report, args.out, args.emit_plot_data, started_at)
    print("\n".join(summary_lines(report)))
    print(f"✓ Report written to {paths['report']}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    q = load_q_matrix(args.qmatrix)
    if q.ability_ids != model.ability_ids:
        raise DataValidationError("Q-matrix ability dimensions differ from the checkpoint's")

    known = {item: i for i, item in enumerate(model.item_ids)}
    m, n = model.n_models, q.n_items
    scores = np.empty((m, n), dtype=np.float64)
    users = np.arange(m)
    for col, item in enumerate(q.item_ids):
        rows = np.repeat(q.entries[col][None, :], m, axis=0)
        if item in known and not args.neutral:
            scores[:, col] = predict_proba(model, users, np.full(m, known[item]), rows)
        else:
            scores[:, col] = score_unseen(model, users, rows)

    n_known = sum(item in known for item in q.item_ids)
    df = pd.DataFrame(scores, index=pd.Index(model.model_ids, name="model_id"), columns=list(q.item_ids))
    df.to_csv(args.out, float_format="%.10f", lineterminator="\n")
    mode = "neutral item parameters" if args.neutral else f"{n_known} trained / {n - n_known} neutral"
    print(f"✓ Scored {m:,} models × {n:,} items ({mode}) → {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.template:
        q = load_template(args.template, args.seed)
        spec = SynthSpec(
            n_models=args.models,
            n_items=q.n_items,
            n_abilities=q.n_abilities,
            beta=args.beta,
            seed=args.seed,
        )
    else:
        q = None
        spec = SynthSpec(
            n_models=args.models,
            n_items=args.items,
            n_abilities=args.dims,
            min_abilities=args.min_abilities,
            max_abilities=args.max_abilities,
            beta=args.beta,
            seed=args.seed,
        )
    paths = write_synthetic(generate(spec, q), args.out)
    for kind, path in paths.items():
        print(f"✓ Wrote {kind}: {path}")
    return EXIT_OK


def cmd_coverage(args) -> int:
    q = load_q_matrix(args.qmatrix)
    stats = coverage_stats(q)
    if args.out:
        stats.to_csv(args.out, index=False, float_format="%.4f", lineterminator="\n")
        print(f"✓ Coverage for {q.n_abilities} abilities written to {args.out}")
    else:
        print(stats.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return EXIT_OK


def cmd_validate(args) -> int:
    dataset = _load_dataset(args.responses, args.qmatrix)
    print(describe_dataset(dataset))
    if args.taxonomy:
        taxonomy = _load_taxonomy(args.taxonomy)
        check_taxonomy(dataset.q, taxonomy)
        print(f"✓ All {dataset.n_abilities} abilities resolve in taxonomy '{taxonomy.domain}'")
    print("✓ Valid")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ability-diagnosis", description="Fine-grained ability diagnosis")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit the diagnostic network and write a checkpoint")
    p.add_argument("--responses", required=True)
    p.add_argument("--qmatrix", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--config", help="JSON file of training-config overrides")
    p.add_argument("--taxonomy", help="built-in domain name or taxonomy JSON path")
    p.add_argument("--log", help="CSV file for the per-epoch log")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run a plan (or score a checkpoint) and write a report")
    p.add_argument("--plan")
    p.add_argument("--checkpoint")
    p.add_argument("--responses")
    p.add_argument("--qmatrix")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--emit-plot-data", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="score every model on every item of a Q-matrix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--qmatrix", required=True)
    p.add_argument("--neutral", action="store_true", help="neutral item parameters for every item")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth dataset")
    p.add_argument("--models", type=int, default=50)
    p.add_argument("--items", type=int, default=600)
    p.add_argument("--dims", type=int, default=10)
    p.add_argument("--min-abilities", type=int, default=1)
    p.add_argument("--max-abilities", type=int, default=4)
    p.add_argument("--beta", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--template", help="coverage template name, e.g. mmlu-math")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("coverage", help="per-ability item counts and ratios")
    p.add_argument("--qmatrix", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("validate", help="check matrices (and optionally a taxonomy)")
    p.add_argument("--responses", required=True)
    p.add_argument("--qmatrix", required=True)
    p.add_argument("--taxonomy")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(message)s", stream=sys.stdout)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"Error: {e}")
        return DataValidationError.exit_code
    except DiagnosisError as e:
        print(f"Error: {e}")
        return e.exit_code
    except OSError as e:
        print(f"Error: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
