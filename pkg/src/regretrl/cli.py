"""Command-line entry point: ``regretrl <command> [--config FILE] [--seed N] [--out DIR]``.

Exit status is 0 on success, 1 when a verification check fails and 2 on a
configuration error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

from . import harness
from .adversary import attack_table
from .errors import ConfigurationError
from .harness import ExperimentConfig

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("regretrl")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _write_json(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))
    return path


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_train(cfg: ExperimentConfig, fmt: str) -> int:
    mdp = cfg.build_mdp()
    victims = harness.train_victims(cfg, mdp)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, v in victims.items():
        model = {"learner": name, "seed": v.seed, "environment": cfg.environment,
                 "policy": v.policy.action_table(mdp.n_states).tolist(),
                 "stores": {k: st.to_dict() for k, st in v.result.stores.items()}}
        _write_json(out / f"{name}_model.json", model)
        if fmt == "json":
            _write_json(out / f"{name}_curve.json",
                        [{"episode": e, "return": r, "mean_loss": l} for e, r, l in v.result.curve])
        else:
            (out / f"{name}_curve.csv").write_text(v.result.curve_csv())
        print(f"{name}: seed {v.seed} policy {model['policy']}")
    return EXIT_OK


def cmd_attack_train(cfg: ExperimentConfig, fmt: str) -> int:
    mdp = cfg.build_mdp()
    victims = harness.train_victims(cfg, mdp)
    actors = harness.train_actors(cfg, mdp, victims)
    out = Path(cfg.out)
    doc, rows = {}, []
    for name, spec in actors.items():
        shown = attack_table(spec, mdp, victims[name].policy).tolist()
        doc[name] = {"inflation": spec.inflation, "shown": shown, "store": spec.actor.to_dict()}
        rows.extend((name, s, m) for s, m in enumerate(shown))
        print(f"actor[{name}]: shown {shown}")
    if fmt == "json":
        _write_json(out / "actors.json", doc)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / "actors.csv").write_text(_rows_csv(["victim", "state", "shown"], rows))
    return EXIT_OK


def _report(report: harness.EvalReport, cfg: ExperimentConfig, fmt: str) -> int:
    report.write(cfg.out, fmt)
    sys.stdout.write(report.summary_csv())
    failed = [c for c in report.ordered() if c.error]
    for c in failed:
        log.error("cell %s vs %s failed: %s", c.victim, c.adversary, c.error)
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, fmt: str) -> int:
    return _report(harness.run_matrix(cfg, cross=False), cfg, fmt)


def cmd_matrix(cfg: ExperimentConfig, fmt: str) -> int:
    return _report(harness.run_matrix(cfg), cfg, fmt)


def cmd_sweep(cfg: ExperimentConfig, fmt: str) -> int:
    rows = harness.neighborhood_sweep(cfg)
    out = Path(cfg.out)
    if fmt == "json":
        _write_json(out / "sweep.json", [dict(dataclasses.asdict(r), relative_drop=r.relative_drop)
                                         for r in rows])
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(harness.sweep_csv(rows))
    sys.stdout.write(harness.sweep_csv(rows))
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, fmt: str) -> int:
    cert = harness.verify(cfg)
    out = Path(cfg.out)
    if fmt == "json":
        _write_json(out / "certificate.json", cert)
    else:
        rows = [("bound", r["instance"], r["holds"], r.get("margin", ""), r.get("error", ""))
                for r in cert["bound"]]
        rows += [("chain", r["instance"], r["holds"], r["regret_vs_gap"], "") for r in cert["chain"]]
        rows += [("substructure", r["instance"], r["holds"], "", r.get("error", ""))
                 for r in cert["substructure"]]
        out.mkdir(parents=True, exist_ok=True)
        (out / "certificate.csv").write_text(
            _rows_csv(["check", "instance", "holds", "margin", "error"], rows))
    s = cert["summary"]
    print(f"bound {s['bound_pass']}/{s['bound_total']}  chain {s['chain_pass']}/{s['chain_total']}  "
          f"substructure {s['substructure_pass']}/{s['substructure_total']}")
    return EXIT_OK if cert["passed"] else EXIT_CHECK_FAILED


COMMANDS = {
    "train": (cmd_train, "train every configured learner and save models and curves"),
    "attack-train": (cmd_attack_train, "train one actor adversary per victim"),
    "eval": (cmd_eval, "evaluate each victim against its own adversaries"),
    "matrix": (cmd_matrix, "full victim x adversary matrix with cross-attacks"),
    "sweep": (cmd_sweep, "myopic attack at growing attack neighborhoods"),
    "verify": (cmd_verify, "check the regret bound and substructure on random MDPs"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regretrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config (.toml or .json)")
        p.add_argument("--seed", type=int, help="train this single seed instead of 1..K")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command][0](cfg, args.format)
    except (ConfigurationError, OSError) as exc:
        print(f"regretrl: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
