"""Command-line front end: ``damper-twin <command> ...``.

Exit codes: 0 success, 2 usage error, 3 missing file, 4 invalid config or
data, 5 runtime failure (e.g. diverged training).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .dataset import (
    DatasetError, PreparedDataset, ScalingState, apply_scaling, fit_scaling, load_csv, save_csv,
)
from .experiment import ConfigError, RunConfig, run_ablation
from .metrics import CSV_HEADER, evaluate
from .mlp import MlpConfig, ModelFileError, init_model, load_model, save_model, train
from .pipeline import STAGES, PipelineError, run_pipeline, write_stage_log
from .plant import generate_program

EXIT_USAGE, EXIT_MISSING, EXIT_INVALID, EXIT_RUNTIME = 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path) -> RunConfig:
    return RunConfig.load(path) if path else RunConfig.default()


def _parse_stages(text: str) -> list[str]:
    if text.strip().lower() in ("", "none"):
        return []
    if text.strip().lower() == "all":
        return list(STAGES)
    stages = [s.strip() for s in text.split(",") if s.strip()]
    bad = set(stages) - set(STAGES)
    if bad:
        raise argparse.ArgumentTypeError(
            f"unknown stage(s) {sorted(bad)}; choose from {', '.join(STAGES)}"
        )
    return stages


def cmd_generate(args) -> None:
    cfg = _load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    data = generate_program(list(cfg.program), cfg.plant, seed)
    save_csv(data, args.out)
    print(f"wrote {len(data)} rows, {len(data.run_ids)} runs to {args.out}")


def cmd_preprocess(args) -> None:
    cfg = _load_config(args.config)
    raw = load_csv(args.input)
    scaling = ScalingState.load(args.scaling) if args.scaling else fit_scaling(raw)
    prepared, stage_log = run_pipeline(raw, args.stages, cfg.ablation.pipeline, scaling)
    prepared.save_csv(args.out)
    scaling_out = args.scaling_out or str(Path(args.out).with_suffix(".scaling.json"))
    scaling.save(scaling_out)
    if args.log:
        write_stage_log(stage_log, args.log)
    for entry in stage_log:
        print(f"{entry.stage},{entry.rows_in},{entry.rows_out}")


def cmd_train(args) -> None:
    cfg = _load_config(args.config).ablation.mlp
    if args.epochs is not None:
        cfg = MlpConfig.from_dict({**cfg.__dict__, "epochs": args.epochs})
    data = PreparedDataset.load_csv(args.input)
    model, history = train(init_model(cfg), data, cfg)
    if args.scaling:
        model.metadata["scaling"] = json.loads(ScalingState.load(args.scaling).to_json())
    save_model(model, args.model_out)
    print(f"trained {len(history)} epochs, final train loss {history[-1]:.6g}" if history
          else "trained 0 epochs")


def cmd_evaluate(args) -> None:
    model = load_model(args.model)
    if args.scaling:
        scaling = ScalingState.load(args.scaling)
    elif "scaling" in model.metadata:
        scaling = ScalingState.from_json(json.dumps(model.metadata["scaling"]))
    else:
        raise ConfigError("no scaling state: pass --scaling or train with --scaling")
    test = apply_scaling(load_csv(args.test), scaling)
    report = evaluate(test.y, model.predict(test.X))
    print(CSV_HEADER)
    print(report.csv_row(Path(args.model).stem))


def cmd_ablate(args) -> None:
    cfg = _load_config(args.config)
    report = run_ablation(cfg.ablation, cfg.generate(), out_dir=args.out_dir)
    report.write_csv(args.report)
    sys.stdout.write(report.to_csv())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="damper-twin", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate the test program to a raw CSV")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("preprocess", help="scale and prepare a raw CSV for training")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--stages", type=_parse_stages, default=list(STAGES),
                   help="comma-separated subset of: " + ", ".join(STAGES) + " (or all/none)")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--scaling", help="reuse a fitted scaling state instead of fitting one")
    p.add_argument("--scaling-out")
    p.add_argument("--log", help="write the stage audit log CSV here")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a regressor on a prepared CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--config")
    p.add_argument("--scaling", help="scaling state to embed in the model file")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model on a raw test CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--scaling")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the preparation-stage ablation study")
    p.add_argument("--config")
    p.add_argument("--report", required=True)
    p.add_argument("--out-dir", help="directory for prediction dumps and stage logs")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except FileNotFoundError as exc:
        print(f"damper-twin: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, DatasetError, PipelineError, ModelFileError, ValueError, KeyError) as exc:
        print(f"damper-twin: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, RuntimeError) as exc:
        print(f"damper-twin: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
