"""Command-line experiment runner.

    cuspwave run <config.yaml | preset> [--out DIR] [--threads N] [--force] [--format csv|json|both]
    cuspwave presets [NAME]

Exit codes: 0 success, 2 configuration error, 3 eigensolver did not converge
(partial results written, rows flagged), 4 resource guard tripped.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import yaml

from . import __version__
from .analysis import CorrectionConstants
from .config import PRESETS, ExperimentConfig, resolve
from .errors import ConfigError, ConvergenceError, ResourceGuardError
from .records import _jsonable, emit_table
from .study import cancellation_study, check_resources, convergence_study, tail_law_study

log = logging.getLogger("cuspwave")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_RESOURCE = 0, 2, 3, 4


def _formats(fmt: str):
    return ("csv", "json") if fmt == "both" else (fmt,)


def _write(rows, stem: Path, formats, metadata) -> list[Path]:
    return [emit_table(rows, f, stem.with_suffix("." + f), metadata) for f in formats]


def _study_kwargs(cfg: ExperimentConfig, threads, allow_unconverged=True):
    return dict(
        shape=cfg.shape,
        smooth=cfg.smooth_potential(),
        options=cfg.solver,
        policy=cfg.reference.policy,
        M_ref=cfg.M_ref if cfg.reference.policy != "richardson" else None,
        min_cutoff=cfg.min_cutoff,
        threads=threads,
        allow_unconverged=allow_unconverged,
    )


def _study_converged(res) -> bool:
    ref = res.reference.solved
    return res.all_converged and (ref is None or ref.converged)


def _required_cutoffs(cfg: ExperimentConfig):
    if cfg.experiment == "tail_law":
        return [cfg.tail_cutoff]
    cut = list(cfg.cutoffs)
    if cfg.reference.policy != "richardson":
        cut.append(cfg.M_ref)
    return cut


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1, force: bool = False,
                   fmt: str = "both") -> int:
    """Run one experiment and write its tables; returns the process exit code."""
    check_resources(_required_cutoffs(cfg), cfg.shape, force=force)
    out = Path(out_dir)
    formats = _formats(fmt)
    meta = {"config": cfg.echo(), "version": __version__, "experiment": cfg.experiment}
    summary = dict(meta)
    converged = True
    written = []

    if cfg.experiment in ("convergence", "correction_efficiency"):
        res = convergence_study(cfg.charge_config(), cfg.cutoffs, **_study_kwargs(cfg, threads))
        converged = _study_converged(res)
        summary.update(res.summary())
        meta_t = {**meta, **res.summary()}
        out.mkdir(parents=True, exist_ok=True)
        written += _write(res.records, out / f"{cfg.name}_records", formats, meta_t)
        if cfg.experiment == "correction_efficiency":
            rows = [{"M": r.M, "raw_error": r.raw_error, "corrected_error": abs(r.corrected_error),
                     "gain": r.raw_error / abs(r.corrected_error) if r.corrected_error else float("inf")}
                    for r in res.records]
            written += _write(rows, out / f"{cfg.name}_efficiency", formats, meta_t)
    elif cfg.experiment == "cancellation":
        res = cancellation_study(cfg.charge_config(), cfg.charge_config(second=True), cfg.cutoffs,
                                 **_study_kwargs(cfg, threads))
        converged = _study_converged(res.study1) and _study_converged(res.study2)
        summary.update({
            "slopes": {"D_M": res.slope_D, "S_M": res.slope_S},
            "config1": res.study1.summary(),
            "config2": res.study2.summary(),
            "constants": res.study1.constants.as_dict(),
        })
        meta_t = {**meta, "slopes": summary["slopes"], "constants": summary["constants"]}
        out.mkdir(parents=True, exist_ok=True)
        written += _write(res.study1.records, out / f"{cfg.name}_config1_records", formats, meta_t)
        written += _write(res.study2.records, out / f"{cfg.name}_config2_records", formats, meta_t)
        rows = [{"M": r.M, "D_M": r.D_M, "S_M": r.S_M, "ratio": r.ratio} for r in res.rows]
        written += _write(rows, out / f"{cfg.name}_cancellation", formats, meta_t)
    elif cfg.experiment == "tail_law":
        res = tail_law_study(cfg.charge_config(), cfg.tail_cutoff, cfg.shells, cfg.shape,
                             cfg.smooth_potential(), cfg.solver)
        rows = [{"r_lo": lo, "r_hi": hi, "residual": a, "residual_galerkin": b}
                for (lo, hi), a, b in zip(res.shells, res.residuals, res.residuals_galerkin)]
        summary.update({
            "M": res.M,
            "energy": res.energy,
            "psi_at_nuclei": list(res.psi_at_nuclei),
            "monotone": all(b < a for a, b in zip(res.residuals, res.residuals[1:])),
            "constants": CorrectionConstants.for_shape(cfg.shape, cfg.L).as_dict(),
        })
        out.mkdir(parents=True, exist_ok=True)
        written += _write(rows, out / f"{cfg.name}_tail", formats, {**meta, **summary})
    else:  # pragma: no cover - parse_config_dict rejects unknown kinds
        raise ConfigError(f"unknown experiment {cfg.experiment!r}", "experiment")

    summary["converged"] = converged
    summary["timestamp"] = datetime.now(timezone.utc).isoformat()
    summary["files"] = [p.name for p in written]
    spath = out / f"{cfg.name}_summary.json"
    spath.write_text(json.dumps(_jsonable(summary), indent=2) + "\n", encoding="utf-8")
    for p in written + [spath]:
        log.info("wrote %s", p)
    if not converged:
        log.error("some solves did not reach the residual tolerance; rows are flagged converged=false")
        return EXIT_CONVERGENCE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cuspwave", description="Plane-wave cutoff convergence experiments.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a YAML config or a preset name")
    run.add_argument("config", help="path to a YAML config, or one of: " + ", ".join(sorted(PRESETS)))
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--threads", type=int, default=1, help="concurrent per-cutoff solves")
    run.add_argument("--force", action="store_true", help="skip the basis-size resource guard")
    run.add_argument("--format", choices=("csv", "json", "both"), default="both")
    run.add_argument("-v", "--verbose", action="count", default=0)
    run.add_argument("-q", "--quiet", action="store_true")

    pre = sub.add_parser("presets", help="list presets or print one as YAML")
    pre.add_argument("name", nargs="?")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        if args.name is None:
            print("\n".join(sorted(PRESETS)))
            return EXIT_OK
        if args.name not in PRESETS:
            print(f"error: unknown preset {args.name!r}", file=sys.stderr)
            return EXIT_CONFIG
        print(yaml.safe_dump(PRESETS[args.name], sort_keys=False), end="")
        return EXIT_OK

    level = logging.ERROR if args.quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = resolve(args.config)
        return run_experiment(cfg, args.out, threads=args.threads, force=args.force, fmt=args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceGuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
