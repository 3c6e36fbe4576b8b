"""
Deptrail Command-Line Interface

Subcommands:
    ingest   convert MSR .bin / UTD .mat files (or validate .dseq files)
    synth    write a synthetic dataset as canonical files
    mtm      dump the six motion trail templates of one sequence as PGM
    run      run one evaluation protocol and write the report files
    tune     5-fold grid search over D, delta_r, spatial bins and mu
    report   print a finished run directory, or the run ledger history
    serve    start the recognition API

Exit codes: 0 success, 1 runtime failure or missing input, 2 usage error
or a corrupt file during ingest.

Example:
    python cli.py run --config runs/synth.cfg --set mu=0.001
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from database import Base, make_engine, make_session_factory
from depth_io import DepthSequence, ingest_directory, load_dataset, load_manifest, load_sequence
from errors import ConfigError, DeptrailError, EmptyInput
from evaluation import EvalReport, TuneResult, fit_recognizer, make_split, run_experiment, tune_grid
from glac import descriptor_to_frame
from models import ExperimentRun, recent_runs
from mtm import compute_mtm, write_history_pgm
from representation import extract_segments
from schemas import RunConfig
from synth import generate, write_dataset

logger = logging.getLogger(__name__)

BANNER = "=" * 70


# ============================================================================
# Argument Helpers
# ============================================================================

def parse_overrides(items: Optional[Sequence[str]]) -> Dict[str, str]:
    """Turn repeated `--set key=value` flags into a dict."""
    overrides: Dict[str, str] = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        overrides[key] = value
    return overrides


def parse_grid(items: Optional[Sequence[str]]) -> Dict[str, List[str]]:
    """Turn repeated `--grid key=v1,v2` flags into {key: [v1, v2]}."""
    grid: Dict[str, List[str]] = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"grid axis {item!r} must look like key=v1,v2")
        key, values = (part.strip() for part in item.split("=", 1))
        grid[key] = [value.strip() for value in values.split(",") if value.strip()]
    return grid


def load_config(args) -> RunConfig:
    return RunConfig.from_file(getattr(args, "config", None), parse_overrides(getattr(args, "overrides", None)))


# ============================================================================
# Commands
# ============================================================================

def cmd_ingest(
    src_dir: Path,
    fmt: str,
    out_dir: Path,
    manifest: Optional[Path] = None,
) -> Tuple[int, List[str]]:
    """Convert a dataset directory into canonical files; returns (count, failed files)."""
    overrides = load_manifest(manifest) if manifest else None
    return ingest_directory(Path(src_dir), fmt, Path(out_dir), overrides)


def cmd_synth(config: RunConfig, out_dir: Path) -> List[Path]:
    return write_dataset(generate(config.to_synth_spec()), Path(out_dir))


def cmd_mtm(seq_file: Path, out_dir: Path, config: RunConfig, descriptors: bool = False) -> List[Path]:
    """
    Write the six MHI/SHI templates of one sequence as PGM files.

    With descriptors=True also write "<seq_id>_glac.csv", the labeled GLAC
    entries of every template.
    """
    seq = load_sequence(Path(seq_file))
    settings = config.to_settings()
    output = compute_mtm(seq, settings.mtm)
    paths = write_history_pgm(output, Path(out_dir), seq.seq_id)
    if descriptors:
        segments = extract_segments(output, settings.glac, settings.template)
        frames = [
            descriptor_to_frame(vector, settings.glac).assign(segment=name)
            for name, vector in segments.items()
        ]
        path = Path(out_dir) / f"{seq.seq_id}_glac.csv"
        pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.10g")
        paths.append(path)
    return paths


def load_run_dataset(config: RunConfig) -> List[DepthSequence]:
    """The synthetic dataset, or the canonical files under data_dir."""
    if config.dataset == "synth":
        return generate(config.to_synth_spec())
    if not config.data_dir:
        raise FileNotFoundError("no dataset: set data_dir in the config or DEPTRAIL_DATA")
    dataset = load_dataset(Path(config.data_dir))
    if not dataset:
        raise EmptyInput(f"no canonical sequences found under {config.data_dir}")
    return dataset


def record_run(report: EvalReport, config: RunConfig) -> None:
    engine = make_engine(config.database_url)
    Base.metadata.create_all(bind=engine)
    session = make_session_factory(engine)()
    try:
        session.add(ExperimentRun.from_report(config.run_name, report, config.manifest_lines()))
        session.commit()
    finally:
        session.close()
    logger.info("Recorded run %s in the ledger", config.run_name)


def cmd_run(config: RunConfig) -> EvalReport:
    """
    Run the configured protocol and write report.csv, confusion.csv,
    predictions.csv and manifest.txt into out_dir.
    """
    dataset = load_run_dataset(config)
    protocol = config.to_protocol()
    report = run_experiment(dataset, protocol)
    own = {line.split(" = ", 1)[0] for line in report.config}
    extra = [line for line in config.manifest_lines() if line.split(" = ", 1)[0] not in own]
    report.config = sorted(report.config + extra)
    report.write(Path(config.out_dir))

    if config.save_model:
        train_ids, _ = make_split(dataset, protocol)
        fit_recognizer(dataset, train_ids, protocol.params).save(Path(config.out_dir) / "model")
    if config.database_url:
        record_run(report, config)
    return report


def cmd_tune(config: RunConfig, grid: Dict[str, List[str]]) -> TuneResult:
    """Grid search on the training split; writes tune.csv and best.txt into out_dir."""
    if not grid:
        raise ConfigError("the tuning grid is empty; pass at least one --grid key=v1,v2")
    result = tune_grid(load_run_dataset(config), config.to_protocol(), grid)
    result.write(Path(config.out_dir))
    return result


def cmd_report(run_dir: Path) -> str:
    """Render report.csv and confusion.csv of a finished run as text."""
    run_dir = Path(run_dir)
    summary = pd.read_csv(run_dir / "report.csv", dtype=str, keep_default_na=False)
    confusion = pd.read_csv(run_dir / "confusion.csv", index_col=0)
    lines = [BANNER, f"RUN REPORT: {run_dir}", BANNER]
    lines += [f"   {row.metric}: {row.value}" for row in summary.itertuples(index=False)]
    lines += ["", "Confusion matrix (rows = actual, columns = predicted):", confusion.to_string(), BANNER]
    return "\n".join(lines)


def cmd_history(database_url: Optional[str], protocol: Optional[str] = None, limit: int = 20) -> pd.DataFrame:
    engine = make_engine(database_url)
    Base.metadata.create_all(bind=engine)
    session = make_session_factory(engine)()
    try:
        return pd.DataFrame([run.to_dict() for run in recent_runs(session, protocol=protocol, limit=limit)])
    finally:
        session.close()


# ============================================================================
# Subcommand Handlers (argparse namespace -> exit code)
# ============================================================================

def _handle_ingest(args) -> int:
    count, failures = cmd_ingest(args.src_dir, args.format, args.out, args.manifest)
    print(f"Ingested {count} sequences into {args.out}")
    if failures:
        print(f"Failed: {', '.join(failures)}")
        return 2
    return 0


def _handle_synth(args) -> int:
    paths = cmd_synth(load_config(args), args.out)
    print(f"Wrote {len(paths)} synthetic sequences to {args.out}")
    return 0


def _handle_mtm(args) -> int:
    paths = cmd_mtm(args.seq_file, args.out, load_config(args), args.descriptors)
    for path in paths:
        print(path)
    return 0


def _handle_run(args) -> int:
    config = load_config(args)
    report = cmd_run(config)
    print(BANNER)
    print(f"PROTOCOL {report.protocol}" + (f" ({report.subset})" if report.subset else ""))
    print(BANNER)
    print(f"   Feature set: {report.feature_set}")
    print(f"   Train / test: {report.n_train} / {report.n_test}")
    print(f"   Dimension: {report.input_dim} -> {report.reduced_dim}")
    print(f"   Average accuracy: {report.average_accuracy:.4f}")
    print(f"   Class-mean accuracy: {report.class_mean_accuracy:.4f}")
    print(f"   Reports: {config.out_dir}")
    print(BANNER)
    return 0


def _handle_tune(args) -> int:
    config = load_config(args)
    result = cmd_tune(config, parse_grid(args.grid))
    print(result.table.to_string(index=False))
    print("Best: " + ", ".join(f"{key}={value}" for key, value in result.best.items()))
    return 0


def _handle_report(args) -> int:
    if args.history:
        history = cmd_history(args.database_url, args.protocol)
        print(history.to_string(index=False) if not history.empty else "No runs recorded")
        return 0
    if args.run_dir is None:
        raise ConfigError("report needs a run directory or --history")
    print(cmd_report(args.run_dir))
    return 0


def _handle_serve(args) -> int:
    import uvicorn

    if args.model_dir:
        os.environ["DEPTRAIL_MODEL_DIR"] = str(args.model_dir)
    uvicorn.run("main:app", host=args.host, port=args.port)
    return 0


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deptrail", description="Depth-video action recognition")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser("ingest", help="convert a dataset directory to canonical files")
    ingest.add_argument("src_dir", type=Path)
    ingest.add_argument("--format", required=True, choices=["msr_bin", "canonical", "utd_mat"])
    ingest.add_argument("--out", required=True, type=Path)
    ingest.add_argument("--manifest", type=Path, help="CSV with file, subject, action, trial columns")
    ingest.set_defaults(handler=_handle_ingest)

    synth = commands.add_parser("synth", help="write a synthetic dataset")
    synth.add_argument("--out", required=True, type=Path)
    _add_config_flags(synth)
    synth.set_defaults(handler=_handle_synth)

    mtm = commands.add_parser("mtm", help="dump the motion trail templates of one sequence")
    mtm.add_argument("seq_file", type=Path)
    mtm.add_argument("--out", required=True, type=Path)
    mtm.add_argument("--descriptors", action="store_true", help="also write the GLAC entries as CSV")
    _add_config_flags(mtm)
    mtm.set_defaults(handler=_handle_mtm)

    run = commands.add_parser("run", help="run one evaluation protocol")
    _add_config_flags(run)
    run.set_defaults(handler=_handle_run)

    tune = commands.add_parser("tune", help="cross-validated grid search on the training split")
    _add_config_flags(tune)
    tune.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="grid axis (repeatable)")
    tune.set_defaults(handler=_handle_tune)

    report = commands.add_parser("report", help="print a run directory or the ledger history")
    report.add_argument("run_dir", type=Path, nargs="?")
    report.add_argument("--history", action="store_true")
    report.add_argument("--database-url", default=None)
    report.add_argument("--protocol", default=None)
    report.set_defaults(handler=_handle_report)

    serve = commands.add_parser("serve", help="start the recognition API")
    serve.add_argument("--model-dir", type=Path)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(handler=_handle_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except ConfigError as exc:
        logger.error("Configuration error: %s", exc)
        return 2
    except (FileNotFoundError, DeptrailError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
