"""Experiment configuration, execution and reporting."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .belief import action_matrices
from .errors import ConfigError, EpsilonTooLarge
from .evaluation import RegretOracle
from .features import build_estimated, check_admissible, exact_engine, raw_estimated
from .generators import from_generator
from .learner import LearnerConfig, OptimizerSettings, cyclic_schedule, fixed_schedule, run_learning
from .model import LinearAtstMdp, load_model
from .offpolicy import (beta_error_bound, empirical_beta, ridge_action_matrices,
                        ridge_error_bound, sample_dataset, second_moment, uniform_dist)
from .sim import SeededRng, write_transcripts_csv

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    model: dict
    episodes: int
    seeds: list = field(default_factory=lambda: [0])
    p: float = 0.05
    schedule: dict = field(default_factory=lambda: {"fixed": 0})
    learner: dict = field(default_factory=dict)
    engine: dict = field(default_factory=lambda: {"mode": "exact"})
    output_dir: str = "results"
    write_transcripts: bool = False

    def __post_init__(self):
        if int(self.episodes) < 1:
            raise ConfigError("episodes must be >= 1", cell="episodes")
        if not 0 < self.p < 1:
            raise ConfigError("p must lie in (0, 1)", cell="p")
        if not self.seeds:
            raise ConfigError("at least one seed is required", cell="seeds")
        if self.engine.get("mode", "exact") not in ("exact", "estimated"):
            raise ConfigError(f"unknown engine mode {self.engine.get('mode')!r}", cell="engine.mode")

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path):
        text = Path(path).read_text()
        if str(path).endswith((".yaml", ".yml")):
            import yaml
            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text)
        cfg = cls.from_dict(doc)
        src = cfg.model.get("file")
        if src and not Path(src).is_absolute():
            cfg.model = {**cfg.model, "file": str(Path(path).parent / src)}
        return cfg


def build_model(conf: dict) -> LinearAtstMdp:
    if "file" in conf:
        return load_model(conf["file"])
    if "generator" in conf:
        return from_generator(conf["generator"], conf.get("seed", 0), **conf.get("params", {}))
    raise ConfigError("model needs 'file' or 'generator'", cell="model")


def build_schedule(conf: dict, mdp: LinearAtstMdp):
    def idx(s):
        return s if isinstance(s, int) else mdp.state_index(s)
    if "fixed" in conf:
        return fixed_schedule(idx(conf["fixed"]))
    if "cyclic" in conf:
        return cyclic_schedule([idx(s) for s in conf["cyclic"]])
    raise ConfigError("schedule needs 'fixed' or 'cyclic'", cell="schedule")


def build_learner_config(conf: dict, K, gamma, d, p) -> LearnerConfig:
    conf = dict(conf)
    opt = OptimizerSettings(**{k: conf.pop(k) for k in list(conf)
                               if k in OptimizerSettings.__dataclass_fields__})
    rho = conf.pop("rho", None)
    c_rho = conf.pop("c_rho", 0.1)
    H = conf.pop("H", None)
    lam = conf.pop("lam", 1.0)
    cfg = LearnerConfig.from_theory(K, gamma, d, p=p, c_rho=c_rho, H=H, lam=lam,
                                    optimizer=opt, **conf)
    if rho is not None:
        cfg = LearnerConfig(cfg.H, float(rho), cfg.lam, opt, cfg.incremental_gram,
                            cfg.check_weights)
    return cfg


def estimated_engine(mdp: LinearAtstMdp, conf: dict, K, p, rng):
    """Estimate the action-matrices off-policy and wrap them in a feature map.

    Returns the engine and a certificate dict.  When the certified ``eps``
    violates the normalization precondition the unnormalized plug-in map is
    used and the certificate says so.
    """
    dist = uniform_dist(mdp.S, mdp.A)
    N = int(conf.get("N", 100_000))
    ds = sample_dataset(mdp, dist, N, rng)
    sigma_min = float(np.linalg.eigvalsh(second_moment(mdp.phi, dist))[0])
    M_hat = ridge_action_matrices(ds, mdp.phi, conf.get("lam", 1.0))
    if conf.get("beta_known", False):
        beta_hat, eps_beta = mdp.beta, 0.0
    else:
        beta_hat = empirical_beta(ds, mdp.A).values
        eps_beta = beta_error_bound(mdp.A, N, dist.sum(axis=0).min(), p)
    eps = ridge_error_bound(mdp.d, mdp.A, N, max(sigma_min, 1e-300), p)
    eps_target = math.sqrt((1 - mdp.gamma) / K)
    cert = {"N": N, "eps": eps, "eps_beta": eps_beta, "eps_target": eps_target,
            "sigma_min": sigma_min,
            "empirical_max_matrix_error": float(np.linalg.norm(
                M_hat - action_matrices(mdp).matrices, ord=2, axis=(1, 2)).max())}
    try:
        eng = build_estimated(M_hat, np.clip(beta_hat, 0, 1), eps, min(eps_beta, 1.0), mdp.gamma,
                              mdp.d, mdp.phi, states=mdp.states, actions=mdp.actions)
        cert["normalized"] = True
    except EpsilonTooLarge as exc:
        log.warning("certificate too loose for normalization (%s); using the plug-in map", exc)
        eng = raw_estimated(M_hat, np.clip(beta_hat, 0, 1), mdp.gamma, mdp.phi,
                            states=mdp.states, actions=mdp.actions)
        cert["normalized"] = False
    return eng, cert


# --- summaries -----------------------------------------------------------------

def sqrt_fit(cum):
    """Least squares ``cum_k ~ a sqrt(k)`` over the second half of episodes."""
    k = np.arange(1, cum.shape[0] + 1)
    h = cum.shape[0] // 2
    x, y = np.sqrt(k[h:]), cum[h:]
    a = float(x @ y / (x @ x)) if x.size else float("nan")
    resid = float(np.sqrt(np.mean((y - a * x) ** 2))) if x.size else float("nan")
    return a, resid


def seed_summary(regrets, window_frac=0.2, ratio=0.5):
    K = regrets.shape[0]
    w = max(1, int(round(window_frac * K)))
    cum = np.cumsum(regrets)
    h = K // 2
    early = float(regrets[:w].mean())
    late = float(regrets[-w:].mean())
    first_slope = float(cum[h - 1] / h) if h else float("nan")
    second_slope = float((cum[-1] - cum[h - 1]) / (K - h)) if h else float("nan")
    a, resid = sqrt_fit(cum)
    return {
        "episodes": K,
        "cumulative_regret": float(cum[-1]),
        "early_mean_regret": early,
        "late_mean_regret": late,
        "window": w,
        "late_over_early": late / early if early > 0 else float("nan"),
        "first_half_slope": first_slope,
        "second_half_slope": second_slope,
        "sqrt_fit_coef": a,
        "sqrt_fit_rmse": resid,
        "passed": bool(late <= ratio * early and second_slope < first_slope),
    }


def sublinearity_verdict(per_seed, min_frac=0.8):
    passed = sum(s["passed"] for s in per_seed)
    need = math.ceil(min_frac * len(per_seed))
    return {"seeds_passed": passed, "seeds_needed": need, "sublinear": passed >= need}


def write_plot(curves, path, title="cumulative regret"):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, cum in curves.items():
        ax.plot(np.arange(1, cum.shape[0] + 1), cum, lw=1, label=label)
    ax.set_xlabel("episode")
    ax.set_ylabel("cumulative regret")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def run_experiment(cfg: ExperimentConfig, plot=True) -> dict:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    mdp = build_model(cfg.model)
    ams = action_matrices(mdp)
    K = int(cfg.episodes)
    oracle = RegretOracle(mdp, ams)
    schedule = build_schedule(cfg.schedule, mdp)
    lcfg = build_learner_config(cfg.learner, K, mdp.gamma, mdp.d, cfg.p)
    summary = {"episodes": K, "H": lcfg.H, "rho": lcfg.rho, "lam": lcfg.lam,
               "oracle_slack": oracle.slack, "engine_mode": cfg.engine.get("mode", "exact"),
               "seeds": {}}
    curves = {}
    for seed in cfg.seeds:
        root = SeededRng(int(seed))
        if cfg.engine.get("mode", "exact") == "exact":
            eng = exact_engine(mdp, ams)
        else:
            eng, cert = estimated_engine(mdp, cfg.engine, K, cfg.p, root.child(0).generator())
            report = check_admissible(eng, exact_engine(mdp, ams), cert["eps_target"],
                                      rng=root.child(1).generator())
            cert["admissibility"] = report.to_dict()
            summary.setdefault("certificates", {})[str(seed)] = cert
        transcripts = [] if cfg.write_transcripts else None
        lg = run_learning(mdp, eng, K, schedule, lcfg, root.child(2), oracle, transcripts)
        lg.write_csv(out / f"regret_seed{seed}.csv")
        if transcripts is not None:
            write_transcripts_csv(mdp, transcripts, out / f"transcripts_seed{seed}.csv")
        regrets = lg.regrets()
        curves[f"seed {seed}"] = np.cumsum(regrets)
        summary["seeds"][str(seed)] = seed_summary(regrets)
        log.info("seed %s: cumulative regret %.3f", seed, curves[f"seed {seed}"][-1])
    summary["verdict"] = sublinearity_verdict(list(summary["seeds"].values()))
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    if plot:
        write_plot(curves, out / "regret.svg")
    return summary
