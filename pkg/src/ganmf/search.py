"""Random hyperparameter search optimizing MAP@5 on the validation set.

Each trial trains on the subtrain set with early stopping on the
early-stopping set, then scores the validation set. Trials draw their seeds
from the base seed by index, so results do not depend on execution order or
on the worker count, and a recorded trial replays exactly.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SplitBundle
from .evaluation import evaluate
from .seeding import substream
from .training import GANMF, DivergenceError, TrainConfig

__all__ = [
    "Domain",
    "SearchSpace",
    "TrialRecord",
    "SearchFailure",
    "sample_config",
    "random_search",
]


class SearchFailure(RuntimeError):
    pass


@dataclass
class Domain:
    """One hyperparameter's prior: int / real / logreal / categorical / fixed."""

    kind: str
    lo: float | None = None
    hi: float | None = None
    choices: list | None = None
    value: object | None = None

    def __post_init__(self):
        if self.kind in ("int", "real", "logreal"):
            if self.lo is None or self.hi is None or self.lo > self.hi:
                raise ValueError(f"{self.kind} domain needs lo <= hi, got [{self.lo}, {self.hi}]")
            if self.kind == "logreal" and self.lo <= 0:
                raise ValueError("logreal domain needs lo > 0")
        elif self.kind == "categorical":
            if not self.choices:
                raise ValueError("categorical domain needs at least one choice")
        elif self.kind == "fixed":
            pass
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    def sample(self, rng: np.random.Generator):
        if self.kind == "int":
            return int(rng.integers(int(self.lo), int(self.hi) + 1))
        if self.kind == "real":
            return float(rng.uniform(self.lo, self.hi))
        if self.kind == "logreal":
            return float(np.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))
        if self.kind == "categorical":
            return self.choices[int(rng.integers(0, len(self.choices)))]
        return self.value

    def midpoint(self):
        if self.kind == "int":
            return int((int(self.lo) + int(self.hi)) // 2)
        if self.kind == "real":
            return float((self.lo + self.hi) / 2)
        if self.kind == "logreal":
            return float(math.exp((math.log(self.lo) + math.log(self.hi)) / 2))
        if self.kind == "categorical":
            return self.choices[len(self.choices) // 2]
        return self.value


_CONFIG_FIELDS = (
    "epochs_max",
    "k",
    "coding_dim",
    "batch_size",
    "margin",
    "alpha",
    "lr_d",
    "lr_g",
    "lambda_d",
    "lambda_g",
    "mode",
    "disc_type",
    "eval_every",
    "patience",
)


@dataclass
class SearchSpace:
    """Per-hyperparameter domains; the default matches the tuning protocol."""

    domains: dict[str, Domain] = field(default_factory=dict)

    @classmethod
    def default(cls, mode: str = "user", disc_type: str = "autoencoder") -> "SearchSpace":
        return cls(
            domains={
                "epochs_max": Domain("int", 1, 300),
                "k": Domain("int", 1, 250),
                "coding_dim": Domain("int", 4, 1024),
                "batch_size": Domain("categorical", choices=[64, 128, 256, 512, 1024]),
                "margin": Domain("int", 1, 10),
                "alpha": Domain("real", 0.01, 0.5),
                "lr_d": Domain("logreal", 1e-4, 1e-2),
                "lr_g": Domain("logreal", 1e-4, 1e-2),
                "lambda_d": Domain("logreal", 1e-6, 1e-4),
                "lambda_g": Domain("fixed", value=0.0),
                "mode": Domain("fixed", value=mode),
                "disc_type": Domain("fixed", value=disc_type),
                "eval_every": Domain("fixed", value=5),
                "patience": Domain("fixed", value=5),
            }
        )

    @classmethod
    def from_dict(cls, raw: dict) -> "SearchSpace":
        space = cls.default()
        for name, desc in raw.items():
            if name not in space.domains:
                raise ValueError(f"unknown hyperparameter {name!r}")
            space.domains[name] = Domain(**desc)
        return space

    def midpoint_params(self) -> dict:
        return {name: d.midpoint() for name, d in self.domains.items()}


def sample_config(space: SearchSpace, rng: np.random.Generator, seed: int = 0) -> TrainConfig:
    """Draw every hyperparameter independently from its prior."""
    params = {name: space.domains[name].sample(rng) for name in _CONFIG_FIELDS}
    return TrainConfig(seed=seed, **params)


@dataclass
class TrialRecord:
    index: int
    params: dict
    seed: int
    objective: float
    status: str  # "ok" | "diverged"
    best_epoch: int
    duration_s: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "trial": self.index,
                "params": self.params,
                "seed": self.seed,
                "objective": None if math.isinf(self.objective) else self.objective,
                "status": self.status,
                "best_epoch": self.best_epoch,
                "duration_s": round(self.duration_s, 3),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        obj = json.loads(line)
        return cls(
            index=obj["trial"],
            params=obj["params"],
            seed=obj["seed"],
            objective=float("-inf") if obj["objective"] is None else obj["objective"],
            status=obj["status"],
            best_epoch=obj["best_epoch"],
            duration_s=obj["duration_s"],
        )


def _config_params(config: TrainConfig) -> dict:
    return {name: getattr(config, name) for name in _CONFIG_FIELDS}


def _default_objective(config: TrainConfig, data: SplitBundle) -> tuple[float, int]:
    """Train on subtrain, early stop on earlystop, score MAP@5 on validation."""
    est = GANMF(
        n_factors=config.k,
        coding_dim=config.coding_dim,
        batch_size=config.batch_size,
        margin=config.margin,
        alpha=config.alpha,
        lr_d=config.lr_d,
        lr_g=config.lr_g,
        reg_d=config.lambda_d,
        reg_g=config.lambda_g,
        epochs=config.epochs_max,
        mode=config.mode,
        discriminator=config.disc_type,
        eval_every=config.eval_every,
        patience=config.patience,
        random_state=config.seed,
    )
    est.fit(data.subtrain, earlystop=data.earlystop)
    report = evaluate(est, data.subtrain, data.validation, cutoffs=(5,))
    evals = est.history_.evals
    best_epoch = max(evals, key=lambda e: e.value).epoch if evals else config.epochs_max
    return report.map[5], best_epoch


def _run_trial(index: int, space: SearchSpace, data: SplitBundle, base_seed: int, objective) -> TrialRecord:
    rng = substream(base_seed, f"trial-{index}")
    trial_seed = int(rng.integers(0, 2**31 - 1))
    config = sample_config(space, rng, seed=trial_seed)
    t0 = time.perf_counter()
    try:
        if objective is None:
            value, best_epoch = _default_objective(config, data)
        else:
            value, best_epoch = float(objective(config, data)), config.epochs_max
        status = "ok"
    except DivergenceError:
        value, best_epoch, status = float("-inf"), 0, "diverged"
    return TrialRecord(
        index=index,
        params=_config_params(config),
        seed=trial_seed,
        objective=value,
        status=status,
        best_epoch=best_epoch,
        duration_s=time.perf_counter() - t0,
    )


def random_search(
    space: SearchSpace,
    budget: int,
    data: SplitBundle,
    base_seed: int = 0,
    log_path: str | Path | None = None,
    workers: int = 1,
    objective=None,
    retrain: bool = True,
) -> tuple[TrialRecord, list[TrialRecord], GANMF | None]:
    """Run ``budget`` trials and return (best trial, all trials, final model).

    The trial log is JSON-lines, append-only and resumable: indices already
    present in ``log_path`` are not re-run. The final model retrains on the
    full train set with the winning parameters, for the winning trial's best
    early-stopping epoch, with early stopping then disabled.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    done: dict[int, TrialRecord] = {}
    if log_path is not None and Path(log_path).exists():
        for line in Path(log_path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = TrialRecord.from_json(line)
                done[rec.index] = rec
    todo = [i for i in range(budget) if i not in done]

    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fresh = list(pool.map(lambda i: _run_trial(i, space, data, base_seed, objective), todo))
    else:
        fresh = [_run_trial(i, space, data, base_seed, objective) for i in todo]

    if log_path is not None and fresh:
        with open(log_path, "a", encoding="utf-8") as fh:
            for rec in sorted(fresh, key=lambda r: r.index):
                fh.write(rec.to_json() + "\n")
    records = sorted(list(done.values()) + fresh, key=lambda r: r.index)

    ok = [r for r in records if r.status == "ok" and math.isfinite(r.objective)]
    if not ok:
        where = log_path if log_path is not None else "(no log file)"
        raise SearchFailure(f"all {budget} trials diverged; see {where}")
    best = max(ok, key=lambda r: (r.objective, -r.index))

    final = None
    if retrain:
        params = dict(best.params)
        params["epochs_max"] = max(1, int(best.best_epoch))
        params["eval_every"] = 0
        config = TrainConfig(seed=best.seed, **params)
        final = GANMF(
            n_factors=config.k,
            coding_dim=config.coding_dim,
            batch_size=config.batch_size,
            margin=config.margin,
            alpha=config.alpha,
            lr_d=config.lr_d,
            lr_g=config.lr_g,
            reg_d=config.lambda_d,
            reg_g=config.lambda_g,
            epochs=config.epochs_max,
            mode=config.mode,
            discriminator=config.disc_type,
            eval_every=0,
            patience=config.patience,
            random_state=config.seed,
        )
        final.fit(data.train)
    return best, records, final
