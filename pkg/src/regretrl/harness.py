"""Experiment configuration, evaluation protocol and reporting."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, oracle
from .adversary import AdversarySpec, actor_train, attack_table
from .errors import ArgumentError, CapacityError, ConfigurationError
from .fixtures import build_environment, build_random_mdp
from .learning import LEARNERS, LearnerConfig, PolicyHandle, TrainResult, train
from .mdp import TabularMdp

log = logging.getLogger(__name__)

EPISODE_COLUMNS = ["victim", "adversary", "t_adv", "inflation", "seed", "episode", "return"]
SUMMARY_COLUMNS = ["victim", "adversary", "mean", "variance"]


@dataclass
class ExperimentConfig:
    environment: str = "twolane"
    env_params: dict = field(default_factory=dict)
    learners: list = field(default_factory=lambda: list(LEARNERS))
    adversaries: list = field(default_factory=lambda: ["none", "myopic", "actor"])
    train_seeds: int = 10      # K
    eval_seeds: int = 50       # N
    episodes: int = 100        # M
    t_adv: list = field(default_factory=lambda: [2])
    inflation: float = 0.2
    epsilon: float = 1.0
    inflations: list = field(default_factory=lambda: [0.0, 0.1, 0.2])
    learner: dict = field(default_factory=dict)
    actor: dict = field(default_factory=dict)
    selection_seeds: int = 3
    selection_episodes: int = 10
    verify_seeds: int = 200
    substructure_instances: int = 50
    out: str = "out"
    seed: int | None = None    # train this one seed instead of 1..K

    def __post_init__(self):
        if min(self.train_seeds, self.eval_seeds, self.episodes) < 1:
            raise ConfigurationError("train_seeds, eval_seeds and episodes must be >= 1")
        if isinstance(self.t_adv, int):
            self.t_adv = [self.t_adv]
        if not self.t_adv or min(self.t_adv) < 1:
            raise ConfigurationError("t_adv values must be >= 1")
        for kind in self.learners:
            if kind not in LEARNERS:
                raise ConfigurationError(f"unknown learner {kind!r}")
        for kind in self.adversaries:
            if kind not in ("none", "myopic", "actor", "fgsm"):
                raise ConfigurationError(f"unknown adversary {kind!r}")
        if list(self.inflations) != sorted(self.inflations):
            raise ConfigurationError("inflations must be sorted ascending")
        self.learner_config(1)
        self.actor_config(1)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text()
        try:
            if path.suffix == ".toml":
                try:
                    import tomllib
                except ModuleNotFoundError:  # python < 3.11
                    import tomli as tomllib
                doc = tomllib.loads(text)
            else:
                doc = json.loads(text)
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from None
        return cls.from_dict(doc)

    def training_seeds(self) -> list[int]:
        return [self.seed] if self.seed is not None else list(range(1, self.train_seeds + 1))

    def learner_config(self, seed: int) -> LearnerConfig:
        try:
            return LearnerConfig(**{**self.learner, "seed": seed})
        except TypeError as exc:
            raise ConfigurationError(f"bad learner settings: {exc}") from None

    def actor_config(self, seed: int) -> LearnerConfig:
        try:
            return LearnerConfig(**{**self.learner, **self.actor, "seed": seed})
        except TypeError as exc:
            raise ConfigurationError(f"bad actor settings: {exc}") from None

    def build_mdp(self) -> TabularMdp:
        try:
            return build_environment(self.environment, **self.env_params)
        except (TypeError, ArgumentError) as exc:
            raise ConfigurationError(f"bad environment parameters: {exc}") from None


@dataclass
class EvalCell:
    victim: str
    adversary: str
    t_adv: int
    inflation: float
    seeds: list
    returns: np.ndarray            # (N, M)
    fire_counts: np.ndarray        # (N, M)
    fire_masks: np.ndarray | None = None
    error: str | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.returns)) if self.returns.size else float("nan")

    @property
    def variance(self) -> float:
        # mean squared deviation from the mean
        return float(np.mean((self.returns - self.mean) ** 2)) if self.returns.size else float("nan")


@dataclass
class EvalReport:
    cells: dict = field(default_factory=dict)    # (victim, adversary) -> EvalCell
    training: list = field(default_factory=list)

    def add(self, cell: EvalCell) -> None:
        self.cells[(cell.victim, cell.adversary)] = cell

    def __getitem__(self, key) -> EvalCell:
        return self.cells[key]

    def ordered(self):
        return [self.cells[k] for k in sorted(self.cells)]

    def episodes_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EPISODE_COLUMNS)
        for c in self.ordered():
            for i, seed in enumerate(c.seeds):
                for ep, ret in enumerate(c.returns[i]):
                    w.writerow([c.victim, c.adversary, c.t_adv, repr(float(c.inflation)), seed, ep,
                                repr(float(ret))])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for c in self.ordered():
            w.writerow([c.victim, c.adversary, repr(c.mean), repr(c.variance)])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "cells": [
                {"victim": c.victim, "adversary": c.adversary, "t_adv": c.t_adv,
                 "inflation": c.inflation, "mean": c.mean, "variance": c.variance,
                 "seeds": list(c.seeds), "returns": c.returns.tolist(),
                 "fire_counts": c.fire_counts.tolist(), "error": c.error}
                for c in self.ordered()
            ],
            "training": self.training,
        }

    def write(self, out, fmt: str = "csv") -> list[Path]:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            path = out / "report.json"
            path.write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))
            return [path]
        (out / "episodes.csv").write_text(self.episodes_csv())
        (out / "summary.csv").write_text(self.summary_csv())
        return [out / "episodes.csv", out / "summary.csv"]


# -- evaluation --------------------------------------------------------------

def evaluate(mdp: TabularMdp, victim: PolicyHandle, spec: AdversarySpec, cfg: ExperimentConfig,
             shown=None, victim_name: str = "victim", keep_traces: bool = False) -> EvalCell:
    """Run M episodes for each of N ordered seeds (1..N).

    The firing window starts at ``spec.window_offset`` and shifts by one each
    episode, cycling through all offsets.  ``shown`` is the attack table;
    it is required unless the adversary kind is ``none``.
    """
    n_s = mdp.n_states
    policy = victim.action_table(n_s)
    if spec.kind == "none":
        shown = np.arange(n_s, dtype=np.int64)
        t_adv = 0
    else:
        if shown is None:
            raise ConfigurationError("an attack table is required for a firing adversary")
        shown = np.asarray(shown, dtype=np.int64)
        t_adv = spec.t_adv
    M = cfg.episodes
    offsets = (spec.window_offset + np.arange(M)) % spec.t_adv
    seeds = list(range(1, cfg.eval_seeds + 1))
    returns = np.zeros((len(seeds), M))
    fires = np.zeros((len(seeds), M), dtype=np.int64)
    masks = np.zeros((len(seeds), M, mdp.horizon), dtype=np.bool_) if keep_traces else None
    for i, seed in enumerate(seeds):
        u = np.random.default_rng(seed).random((M, mdp.horizon, 2))
        ret, lengths, fired = kernels.rollout(
            mdp.cumulative_transition, mdp.reward, mdp.terminal_mask, mdp.start, policy, shown,
            t_adv, offsets, mdp.horizon, u)
        returns[i] = ret
        fires[i] = fired.sum(axis=1)
        if keep_traces:
            masks[i] = fired
    return EvalCell(victim_name, spec.name, spec.t_adv if spec.kind != "none" else 0,
                    spec.inflation if spec.kind != "none" else 0.0, seeds, returns, fires, masks)


@dataclass
class Victim:
    name: str
    result: TrainResult
    policy: PolicyHandle        # frozen table
    seed: int


def train_victims(cfg: ExperimentConfig, mdp: TabularMdp, kinds=None, report: EvalReport | None = None):
    """Train K seeds per learner and keep the best unperturbed run."""
    kinds = cfg.learners if kinds is None else kinds
    probe = dataclasses.replace(cfg, eval_seeds=cfg.selection_seeds, episodes=cfg.selection_episodes)
    victims = {}
    for kind in kinds:
        best = None
        for seed in cfg.training_seeds():
            res = train(mdp, cfg.learner_config(seed), kind)
            frozen = res.policy.freeze(mdp.n_states)
            score = evaluate(mdp, frozen, AdversarySpec("none"), probe, victim_name=kind).mean
            if report is not None:
                report.training.append({"learner": kind, "seed": seed, "unperturbed": score})
            if best is None or score > best[0]:
                best = (score, Victim(kind, res, frozen, seed))
        victims[kind] = best[1]
    return victims


def _victim_net(v: Victim):
    q = v.result.stores.get("q")
    return q if getattr(q, "kind", None) == "mlp" else None


def _label(kind: str, t_adv: int, owner: str | None = None) -> str:
    base = f"actor[{owner}]" if owner else kind
    return base if kind == "none" else f"{base}@t{t_adv}"


def train_actors(cfg: ExperimentConfig, mdp: TabularMdp, victims: dict) -> dict:
    """One actor adversary per frozen victim."""
    seed = cfg.seed if cfg.seed is not None else 1
    return {name: actor_train(mdp, v.policy, cfg.actor_config(seed), cfg.inflation,
                              label=f"actor[{name}]")
            for name, v in victims.items()}


def run_matrix(cfg: ExperimentConfig, mdp: TabularMdp | None = None, victims=None,
               cross: bool = True) -> EvalReport:
    """Victims x adversaries cross product, including cross-attacks by every actor.

    With ``cross=False`` each victim only meets the actor trained against it.
    """
    mdp = cfg.build_mdp() if mdp is None else mdp
    report = EvalReport()
    victims = train_victims(cfg, mdp, report=report) if victims is None else victims
    qstar = oracle.optimal_q(mdp)
    actors = train_actors(cfg, mdp, victims) if "actor" in cfg.adversaries else {}
    for name, v in victims.items():
        if "none" in cfg.adversaries or not cfg.adversaries:
            report.add(evaluate(mdp, v.policy, AdversarySpec("none"), cfg, victim_name=name))
        for t_adv in cfg.t_adv:
            specs = []
            if "myopic" in cfg.adversaries:
                specs.append(AdversarySpec("myopic", t_adv, 0, cfg.inflation, label=_label("myopic", t_adv)))
            for owner, actor in actors.items():
                if not cross and owner != name:
                    continue
                specs.append(dataclasses.replace(actor, t_adv=t_adv, label=_label("actor", t_adv, owner)))
            if "fgsm" in cfg.adversaries and _victim_net(v) is not None:
                specs.append(AdversarySpec("fgsm", t_adv, 0, cfg.inflation, cfg.epsilon,
                                           label=_label("fgsm", t_adv)))
            for spec in specs:
                try:
                    shown = attack_table(spec, mdp, v.policy, qstar, _victim_net(v))
                    report.add(evaluate(mdp, v.policy, spec, cfg, shown, victim_name=name))
                except Exception as exc:  # keep the matrix going
                    log.warning("cell %s vs %s failed: %s", name, spec.name, exc)
                    report.add(EvalCell(name, spec.name, t_adv, spec.inflation, [],
                                        np.zeros((0, 0)), np.zeros((0, 0), dtype=np.int64),
                                        error=str(exc)))
    return report


@dataclass
class SweepRow:
    victim: str
    inflation: float
    mean: float
    variance: float
    unperturbed: float

    @property
    def relative_drop(self) -> float:
        base = abs(self.unperturbed)
        drop = self.unperturbed - self.mean
        return drop / base if base > 0 else drop


def neighborhood_sweep(cfg: ExperimentConfig, inflations=None, mdp: TabularMdp | None = None,
                       victims=None) -> list[SweepRow]:
    """Myopic attack on the value and regret learners at growing attack neighborhoods."""
    inflations = list(cfg.inflations if inflations is None else inflations)
    if inflations != sorted(inflations):
        raise ConfigurationError("inflations must be sorted ascending")
    mdp = cfg.build_mdp() if mdp is None else mdp
    victims = train_victims(cfg, mdp, ["dqn", "drn"]) if victims is None else victims
    qstar = oracle.optimal_q(mdp)
    rows = []
    t_adv = cfg.t_adv[0]
    for name in ("dqn", "drn"):
        v = victims[name]
        base = evaluate(mdp, v.policy, AdversarySpec("none"), cfg, victim_name=name).mean
        for infl in inflations:
            spec = AdversarySpec("myopic", t_adv, 0, infl, label=_label("myopic", t_adv))
            cell = evaluate(mdp, v.policy, spec, cfg, attack_table(spec, mdp, v.policy, qstar),
                            victim_name=name)
            rows.append(SweepRow(name, float(infl), cell.mean, cell.variance, base))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["victim", "inflation", "mean", "variance", "unperturbed", "relative_drop"])
    for r in rows:
        w.writerow([r.victim, repr(r.inflation), repr(r.mean), repr(r.variance),
                    repr(r.unperturbed), repr(r.relative_drop)])
    return buf.getvalue()


# -- verification --------------------------------------------------------------

def random_policy(mdp: TabularMdp, seed: int) -> np.ndarray:
    return np.random.default_rng(seed + 10_000).integers(mdp.n_actions, size=mdp.n_states)


def verify(cfg: ExperimentConfig, corpus=None, substructure_corpus=None, corrupt: float = 0.0) -> dict:
    """Check the regret bound and optimal substructure on random MDP corpora.

    ``corpus`` / ``substructure_corpus`` default to seeds ``0..verify_seeds-1``
    (up to 6 states) and ``substructure_instances`` 3-state/2-action MDPs with
    horizon 3.  ``corrupt`` is subtracted from the regret table before the
    bound check (negative testing).
    """
    if corpus is None:
        corpus = [build_random_mdp(seed) for seed in range(cfg.verify_seeds)]
    if substructure_corpus is None:
        substructure_corpus = [build_random_mdp(seed, 3, 2, horizon=3)
                               for seed in range(cfg.substructure_instances)]
    bound, chain, sub = [], [], []
    for i, mdp in enumerate(corpus):
        pi = random_policy(mdp, i)
        try:
            ccer = oracle.exact_ccer(mdp, pi) - corrupt
            b = oracle.check_prop1(mdp, pi, ccer_values=ccer)
            c = oracle.check_bound_chain(mdp, pi)
            bound.append({"instance": mdp.name, "margin": b.margin, "holds": b.holds,
                          "max_regret": b.max_regret, "ccer": b.ccer_at_shown, "mu": b.mu})
            chain.append({"instance": mdp.name, "regret_vs_gap": c.regret_vs_gap,
                          "gap_vs_ccer": c.gap_vs_ccer, "holds": c.holds})
        except CapacityError as exc:
            bound.append({"instance": mdp.name, "holds": False, "error": str(exc)})
    for mdp in substructure_corpus:
        try:
            sub.append({"instance": mdp.name, "holds": oracle.check_prop2(mdp)})
        except CapacityError as exc:
            sub.append({"instance": mdp.name, "holds": False, "error": str(exc)})
    summary = {
        "bound_pass": sum(r["holds"] for r in bound), "bound_total": len(bound),
        "chain_pass": sum(r["holds"] for r in chain), "chain_total": len(chain),
        "substructure_pass": sum(r["holds"] for r in sub), "substructure_total": len(sub),
    }
    ok = all(r["holds"] for r in bound) and all(r["holds"] for r in sub) and all(r["holds"] for r in chain)
    return {"passed": ok, "summary": summary, "bound": bound, "chain": chain, "substructure": sub}
