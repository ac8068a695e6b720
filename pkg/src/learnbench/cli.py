"""Command-line driver: parse a config, run the selected rows, write outputs.

Exit codes: 0 on success, 2 for config errors (nothing is written), 3 for
runtime failures (completed trials are flushed and the manifest is marked
partial).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, ConfigRow, parse_config, select_rows
from .harness import ExperimentConfig, HarnessError, run_experiment
from .reporting import sanitize_name, write_outputs

OUT_ENV_VAR = "MOLTE_OUT"


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="learnbench",
        description="Compare sequential learning policies on stochastic test problems.",
    )
    parser.add_argument("--config", required=True, help="experiment config (.toml or .csv)")
    parser.add_argument(
        "--out",
        default=None,
        help=f"output directory (falls back to ${OUT_ENV_VAR})",
    )
    parser.add_argument("--seed", type=int, default=0, help="master seed (u64)")
    parser.add_argument(
        "--workers", type=int, default=1, help="parallel trial workers; 0 uses all cores"
    )
    parser.add_argument("--num-p", type=int, default=100, help="trials per row")
    parser.add_argument("--num-truth", type=int, default=10, help="truths per trial")
    parser.add_argument(
        "--tune-num-p", type=int, default=100, help="tuning replications per grid point"
    )
    parser.add_argument(
        "--row", default=None, help="row subset selector, e.g. 1 or 1,3 or 2-4"
    )
    parser.add_argument(
        "--emit-svg", type=_parse_bool, default=False, metavar="BOOL",
        help="also render histogram SVGs",
    )
    return parser


def _fail(code: int, message: str) -> int:
    print(json.dumps({"error": message, "exit": code}), file=sys.stderr)
    return code


def row_config(row: ConfigRow, args) -> ExperimentConfig:
    return ExperimentConfig(
        problem=row.problem,
        prior=row.prior,
        budget_ratio=row.budget_ratio,
        belief_mode=row.belief,
        objective=row.objective,
        policies=row.policies,
        num_p=args.num_p,
        num_truth=args.num_truth,
        master_seed=args.seed,
        tune_num_p=args.tune_num_p,
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    out_dir = args.out or os.environ.get(OUT_ENV_VAR)
    if not out_dir:
        return _fail(2, f"no output directory: pass --out or set ${OUT_ENV_VAR}")
    if args.workers < 0:
        return _fail(2, "--workers must be >= 0")

    # Validate the whole config before touching the filesystem.
    try:
        rows = parse_config(args.config)
        selected = select_rows(rows, args.row)
        configs = [(idx, row_config(row, args)) for idx, row in selected]
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(2, str(exc))

    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)

    used_names: set[str] = set()
    for idx, config in configs:
        name = sanitize_name(config.problem.token())
        if name in used_names:
            name = f"{name}_row{idx}"
        used_names.add(name)

        def progress(i, _idx=idx, _name=config.problem.name, _total=config.num_p):
            print(f"row {_idx} [{_name}] trial {i + 1}/{_total} completed", file=sys.stderr)

        try:
            results = run_experiment(config, workers=args.workers, progress=progress)
        except HarnessError as exc:
            try:
                write_outputs(
                    exc.partial, out_path, config,
                    emit_svg=args.emit_svg, partial=True, dir_name=name,
                )
            except OSError:
                pass
            return _fail(3, f"row {idx} failed: {exc}")
        except Exception as exc:  # config passed validation; treat as runtime
            return _fail(3, f"row {idx} failed: {exc}")
        try:
            write_outputs(results, out_path, config, emit_svg=args.emit_svg, dir_name=name)
        except OSError as exc:
            marker = out_path / name / "_PARTIAL"
            try:
                marker.parent.mkdir(parents=True, exist_ok=True)
                marker.write_text(str(exc), encoding="utf-8")
            except OSError:
                pass
            return _fail(3, f"row {idx} write failed: {exc}")
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
