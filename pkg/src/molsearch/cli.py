"""Command-line entry point: fit-prior, calibrate, run, report, validate.

Exit codes: 0 success, 1 domain failure (invalid input, calibration), 2 usage
or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .chem import canonical_form, is_valid, parse_smiles, read_smiles_file
from .config import ConfigError
from .engine import atomic_write, read_results, run, write_run
from .policy import FULL_VOCABULARY, SequencePolicy, fit, smiles_tokens
from .reward import (
    CalibrationError,
    Panel,
    Scorer,
    SurrogateOracle,
    calibrate_thresholds,
    check_disjoint,
    load_panel,
    load_profiles,
)

MIN_CORPUS_LINES = 100
REPORT_FIELDS = (
    "run",
    "mean_reward",
    "mean_y_t",
    "mean_y_z",
    "mean_y_z_verify",
    "uniqueness",
    "novelty",
    "verification_panel",
)


class DomainError(RuntimeError):
    pass


def _read_lines(path) -> list[str]:
    try:
        return read_smiles_file(path)
    except OSError as e:
        raise DomainError(f"cannot read {path}: {e.strerror}") from e


def _load_policy(cfg: dict) -> SequencePolicy:
    prior_path = cfg["paths"]["prior"]
    if prior_path:
        try:
            return SequencePolicy.load(prior_path)
        except OSError as e:
            raise DomainError(f"cannot read policy {prior_path}: {e.strerror}") from e
    policy, _, _ = fit_corpus(cfg["paths"]["corpus"], cfg["policy"]["order"], cfg["policy"]["k"],
                              cfg["policy"]["vocabulary"])
    return policy


def fit_corpus(path, order: int, k: float, vocabulary: str = "full"):
    """(policy, used, skipped) for a SMILES file; invalid lines are skipped."""
    lines = _read_lines(path)
    good = [s for s in lines if is_valid(s).valid]
    if len(good) < MIN_CORPUS_LINES:
        raise DomainError(f"too few valid lines: {len(good)} (need at least {MIN_CORPUS_LINES})")
    if vocabulary not in ("full", "corpus"):
        raise ConfigError("policy.vocabulary must be 'full' or 'corpus'")
    vocab = FULL_VOCABULARY if vocabulary == "full" else None
    try:
        policy = fit([smiles_tokens(s) for s in good], order=order, k=k, vocabulary=vocab)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return policy, len(good), len(lines) - len(good)


def _target(cfg: dict):
    wanted = cfg["target"]["id"]
    for p in load_profiles(cfg["paths"]["targets"]):
        if p.id == wanted:
            return p
    raise ConfigError(f"target {wanted!r} not found in {cfg['paths']['targets']}")


def _panels(cfg: dict) -> tuple[Panel, Panel]:
    training = load_panel(cfg["paths"]["panel_training"], "training")
    verification = load_panel(cfg["paths"]["panel_verification"], "verification")
    check_disjoint(training, verification)
    return training, verification


def _calibrate(cfg: dict, prior: SequencePolicy, target, panel: Panel, oracle):
    r = cfg["reward"]
    return calibrate_thresholds(
        prior,
        target,
        panel,
        oracle,
        rng_seed=r["calibration_seed"],
        n_samples=r["calibration_samples"],
        alpha=r["alpha"],
        beta=r["beta"],
        theta_t=r["theta_t"],
    )


# ------------------------------------------------------------------ commands


def cmd_fit_prior(args) -> int:
    policy, used, skipped = fit_corpus(args.corpus, args.order, args.k, args.vocabulary)
    policy.save(args.out)
    print(f"{used} sequences used, {skipped} invalid lines skipped, vocabulary {len(policy.vocabulary)} tokens")
    print(f"wrote {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = config_mod.load(args.config, args.set)
    if args.policy:
        cfg["paths"]["prior"] = str(Path(args.policy).resolve())
    if args.target:
        cfg["target"]["id"] = args.target
    if args.panel:
        cfg["paths"]["panel_training"] = str(Path(args.panel).resolve())
    if args.seed is not None:
        cfg["reward"]["calibration_seed"] = args.seed
    if args.bias is not None:
        cfg["oracle"]["bias"] = args.bias
    prior = _load_policy(cfg)
    panel = load_panel(cfg["paths"]["panel_training"], "training")
    cal = _calibrate(cfg, prior, _target(cfg), panel, SurrogateOracle(cfg["oracle"]["bias"]))
    diag = {
        "wr": cal.wr,
        "rr": cal.rr,
        "n_samples": cal.n_samples,
        "seed": cfg["reward"]["calibration_seed"],
        "target": cfg["target"]["id"],
        "panel": panel.tag,
    }
    atomic_write(args.out, config_mod.reward_file_text(cal.config, diag))
    print(f"theta_t={cal.config.theta_t} theta_z={cal.config.theta_z:.6g} WR={cal.wr:.4f} RR={cal.rr:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_run(args) -> int:
    overrides = list(args.set)
    if args.ablation is not None:
        overrides.append(f"run.ablation={json.dumps([a for a in args.ablation.split(',') if a])}")
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.budget is not None:
        overrides.append(f"run.budget={args.budget}")
    if args.threads is not None:
        overrides.append(f"run.threads={args.threads}")
    cfg = config_mod.load(args.config, overrides)
    if args.out:
        cfg["paths"]["out_dir"] = str(Path(args.out).resolve())
    out_dir = Path(cfg["paths"]["out_dir"])
    run_cfg = config_mod.run_config(cfg)

    prior = _load_policy(cfg)
    target = _target(cfg)
    training, verification = _panels(cfg)
    oracle = SurrogateOracle(cfg["oracle"]["bias"])
    if cfg["paths"]["reward_config"]:
        reward_cfg, _ = config_mod.read_reward_file(cfg["paths"]["reward_config"])
    elif cfg["reward"]["calibrate"]:
        cal = _calibrate(cfg, prior, target, training, oracle)
        reward_cfg = cal.config
        print(f"calibrated theta_z={reward_cfg.theta_z:.6g} (prior WR {cal.wr:.4f}, RR {cal.rr:.4f})")
    else:
        reward_cfg = config_mod.reward_config(cfg)
    # echo the thresholds actually used so the echoed config reruns identically
    cfg["reward"].update(
        alpha=reward_cfg.alpha, beta=reward_cfg.beta, theta_t=reward_cfg.theta_t, theta_z=reward_cfg.theta_z,
        calibrate=False,
    )
    cfg["paths"]["reward_config"] = ""

    scorer = Scorer(target, training, oracle, reward_cfg, verification)

    def progress(m):
        if not args.quiet and m.iteration % 10 == 0:
            print(f"iter {m.iteration}: valid {m.n_valid} WR {m.wr:.3f} RR {m.rr:.3f} best {m.best_reward:.4f}",
                  file=sys.stderr)

    result = run(run_cfg, prior, scorer, on_iteration=progress)
    write_run(result, out_dir)
    atomic_write(out_dir / "config.toml", config_mod.dumps(cfg))
    top1 = result.top[0].reward if result.top else float("nan")
    print(f"top-1 reward {top1:.6f}, total valid samplings {result.total_valid}, iterations {len(result.metrics)}")
    return 0


def report_row(run_dir, corpus_keys: set[str] | None = None, top: int = 10) -> dict:
    run_dir = Path(run_dir)
    rows = read_results(run_dir / "results.jsonl")
    summary = json.loads((run_dir / "summary.json").read_text(encoding="utf-8"))
    if corpus_keys is None:
        corpus_keys = corpus_canonicals(_run_corpus(run_dir))
    best = rows[:top]

    def mean(key):
        vals = [r[key] for r in best if r[key] is not None]
        return float(np.mean(vals)) if vals else float("nan")

    tag = summary.get("verification_panel") or ""
    if not tag.startswith("verification:"):
        raise DomainError(f"{run_dir}: results carry no verification-panel scores")
    total = summary["total_valid"]
    return {
        "run": run_dir.name,
        "mean_reward": mean("reward"),
        "mean_y_t": mean("y_t"),
        "mean_y_z": mean("y_z"),
        "mean_y_z_verify": mean("y_z_verify"),
        "uniqueness": summary["distinct_valid"] / total if total else 0.0,
        "novelty": sum(r["canonical"] not in corpus_keys for r in rows) / len(rows) if rows else 0.0,
        "verification_panel": tag,
    }


def _run_corpus(run_dir: Path) -> str:
    echo = run_dir / "config.toml"
    if echo.exists():
        return config_mod.load(echo)["paths"]["corpus"]
    return str(config_mod.data_path(config_mod.DATA_FILES["corpus"]))


def corpus_canonicals(path) -> set[str]:
    return {canonical_form(parse_smiles(s)) for s in _read_lines(path) if is_valid(s).valid}


def cmd_report(args) -> int:
    cache: dict[str, set[str]] = {}
    rows = []
    for d in args.runs:
        d = Path(d)
        if not (d / "results.jsonl").exists():
            raise DomainError(f"{d}: no results.jsonl")
        corpus = args.corpus or _run_corpus(d)
        if corpus not in cache:
            cache[corpus] = corpus_canonicals(corpus)
        rows.append(report_row(d, cache[corpus], args.top))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if args.out:
        atomic_write(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_validate(args) -> int:
    lines = _read_lines(args.smiles)
    ok = True
    for s in lines:
        rep = is_valid(s)
        ok &= rep.valid
        print(str(rep) if args.quiet else f"{s}\t{rep}")
    return 0 if ok else 1


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="molsearch", description="Profile-specific molecule search.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-prior", help="fit the n-gram prior on a SMILES corpus")
    p.add_argument("corpus", nargs="?", default=str(config_mod.data_path("corpus.smi")))
    p.add_argument("--order", type=int, default=6)
    p.add_argument("--k", type=float, default=0.05, help="additive smoothing")
    p.add_argument("--vocabulary", choices=("full", "corpus"), default="full")
    p.add_argument("--out", required=True, help="policy JSON to write")
    p.set_defaults(func=cmd_fit_prior)

    p = sub.add_parser("calibrate", help="choose reward thresholds from prior samples")
    p.add_argument("--config", help="TOML run config supplying defaults")
    p.add_argument("--policy", help="prior policy JSON (default: fit on the corpus)")
    p.add_argument("--target", help="target profile id")
    p.add_argument("--panel", help="training panel JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--bias", type=float, help="surrogate oracle offset")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--out", required=True, help="reward TOML to write")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", help="run the search")
    p.add_argument("--config", help="TOML run config")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--ablation", help="comma list of no-ga, no-self-train, no-mcts")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--threads", type=int, help="fan-out cap (the loop currently runs sequentially)")
    p.add_argument("--out", help="output directory (overrides paths.out_dir)")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="comparison table over run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--corpus", help="corpus for novelty (default: each run's configured corpus)")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out", help="CSV to write (default: stdout)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="check each line of a SMILES file")
    p.add_argument("smiles")
    p.add_argument("-q", "--quiet", action="store_true", help="print only the verdicts")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DomainError, CalibrationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
