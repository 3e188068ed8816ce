"""Command-line entry point wiring ingestion, splits, training and evaluation.

Every command is deterministic given its arguments and config file (all
randomness flows from explicit seeds), and the fully resolved configuration
is always written next to the outputs. Exit codes: 0 success, 1 runtime
failure such as divergence, 2 usage or IO errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines as B
from . import data as D
from . import evaluation as E
from . import model as M
from .search import SearchSpace, random_search
from .training import GANMF, DivergenceError, TrainConfig

MODEL_NAMES = ("ganmf-u", "ganmf-i", "binganmf-u", "binganmf-i")
BASELINE_NAMES = ("toppop", "puresvd", "itemknn", "p3alpha")

_MODEL_MODES = {
    "ganmf-u": ("user", "autoencoder"),
    "ganmf-i": ("item", "autoencoder"),
    "binganmf-u": ("user", "binary"),
    "binganmf-i": ("item", "binary"),
}


class UsageError(Exception):
    pass


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _load_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc


def _apply_overrides(config: dict, sets: list[str]) -> dict:
    for item in sets or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return config


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _estimator_from_config(config: dict) -> GANMF:
    model = config.get("model", "ganmf-u")
    if model not in MODEL_NAMES:
        raise UsageError(f"model must be one of {MODEL_NAMES}, got {model!r}")
    mode, disc_type = _MODEL_MODES[model]
    params = dict(config.get("train", {}))
    params["mode"] = mode
    params["disc_type"] = disc_type
    try:
        tc = TrainConfig(**params)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad train config: {exc}") from exc
    return GANMF(
        n_factors=tc.k,
        coding_dim=tc.coding_dim,
        batch_size=tc.batch_size,
        margin=tc.margin,
        alpha=tc.alpha,
        lr_d=tc.lr_d,
        lr_g=tc.lr_g,
        reg_d=tc.lambda_d,
        reg_g=tc.lambda_g,
        epochs=tc.epochs_max,
        mode=tc.mode,
        discriminator=tc.disc_type,
        eval_every=tc.eval_every,
        patience=tc.patience,
        random_state=tc.seed,
    )


def cmd_ingest(args) -> int:
    if args.dataset not in D.PARSERS:
        raise UsageError(f"unknown dataset {args.dataset!r}, expected one of {sorted(D.PARSERS)}")
    log = D.PARSERS[args.dataset](args.input)
    urm = D.build_urm(log, min_interactions=args.min_interactions)
    D.save_urm(urm, args.out)
    print(D.stats(urm).format())
    return 0


def cmd_split(args) -> int:
    urm = D.load_urm(args.urm)
    bundle = D.split(urm, test_ratio=args.test_ratio, seed=args.seed)
    out = _out_dir(args.out)
    D.save_split(bundle, out)
    _write_json(out / "config.json", {"command": "split", "urm": str(args.urm), "seed": args.seed, "test_ratio": args.test_ratio})
    for name in ("train", "test", "subtrain", "validation", "earlystop"):
        print(f"{name}: {D.stats(getattr(bundle, name)).format()}")
    return 0


def _fit_on_bundle(est: GANMF, bundle, fit_on: str) -> None:
    # The early-stopping set is carved out of train, so it is a valid holdout
    # only when fitting on subtrain; on the full train set those items would
    # be excluded from ranking and the metric would be identically zero.
    if fit_on == "subtrain" and est.eval_every:
        est.fit(bundle.subtrain, earlystop=bundle.earlystop)
        return
    if est.eval_every:
        print(
            "note: early stopping is disabled when fitting on the full train set",
            file=sys.stderr,
        )
    est.fit(getattr(bundle, fit_on))


def cmd_train(args) -> int:
    config = _apply_overrides(_load_config(args.config), args.set)
    out = _out_dir(args.out or config.get("out", "train-out"))
    split_dir = config.get("split_dir")
    if split_dir is None:
        raise UsageError("train config needs a 'split_dir' entry")
    bundle = D.load_split(split_dir)
    fit_on = config.get("fit_on", "train")
    if fit_on not in ("train", "subtrain"):
        raise UsageError(f"fit_on must be 'train' or 'subtrain', got {fit_on!r}")
    est = _estimator_from_config(config)
    _fit_on_bundle(est, bundle, fit_on)
    est.save(out / "checkpoint.bin")
    (out / "history.jsonl").write_text(
        "\n".join(est.history_.log_lines()) + "\n", encoding="utf-8"
    )
    _write_json(out / "config.json", _resolved_train_config(config, fit_on))
    print(f"trained {config.get('model', 'ganmf-u')} for {len(est.history_.epochs)} epochs -> {out / 'checkpoint.bin'}")
    return 0


def _resolved_train_config(config: dict, fit_on: str) -> dict:
    resolved = dict(config)
    model = config.get("model", "ganmf-u")
    mode, disc_type = _MODEL_MODES[model]
    params = dict(config.get("train", {}))
    params["mode"] = mode
    params["disc_type"] = disc_type
    tc = TrainConfig(**params)
    resolved["model"] = model
    resolved["fit_on"] = fit_on
    resolved["train"] = {k: getattr(tc, k) for k in tc.__dataclass_fields__}
    return resolved


def _fit_baseline(name: str, params: dict, urm: D.Urm):
    classes = {
        "toppop": B.TopPopular,
        "puresvd": B.PureSVD,
        "itemknn": B.ItemKNNCosine,
        "p3alpha": B.P3Alpha,
    }
    if name not in classes:
        raise UsageError(f"baseline must be one of {BASELINE_NAMES}, got {name!r}")
    try:
        est = classes[name](**params)
    except TypeError as exc:
        raise UsageError(f"bad baseline params for {name}: {exc}") from exc
    return est.fit(urm)


def cmd_evaluate(args) -> int:
    if bool(args.checkpoint) == bool(args.baseline):
        raise UsageError("exactly one of --checkpoint or --baseline is required")
    bundle = D.load_split(args.split)
    holdout = getattr(bundle, args.holdout)
    exclude = bundle.subtrain if args.holdout in ("validation", "earlystop") else bundle.train
    cutoffs = tuple(int(c) for c in args.cutoffs.split(","))
    params = json.loads(args.params) if args.params else {}
    if args.checkpoint:
        model = GANMF.load(args.checkpoint, exclude)
        label = args.label or Path(args.checkpoint).stem
    else:
        model = _fit_baseline(args.baseline, params, exclude)
        label = args.label or args.baseline
    out = _out_dir(args.out)
    if args.buckets:
        edges = tuple(float(e) for e in args.buckets.split(","))
        report = E.evaluate_by_profile_length(model, exclude, holdout, bucket_edges=edges, cutoffs=cutoffs)
    else:
        report = E.evaluate(model, exclude, holdout, cutoffs=cutoffs)
    _write_json(out / "report.json", {"algorithm": label, **E.report_to_dict(report)})
    csv_lines = ["algorithm,cutoff,metric,value"] + E.report_to_csv_rows(report, label)
    (out / "report.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    _write_json(
        out / "config.json",
        {
            "command": "evaluate",
            "checkpoint": args.checkpoint,
            "baseline": args.baseline,
            "params": params,
            "split": str(args.split),
            "holdout": args.holdout,
            "cutoffs": list(cutoffs),
            "buckets": args.buckets,
            "label": label,
        },
    )
    for k in cutoffs:
        print(f"{label} NDCG@{k}={report.ndcg[k]:.4f} MAP@{k}={report.map[k]:.4f}")
    return 0


def cmd_search(args) -> int:
    bundle = D.load_split(args.split)
    space = SearchSpace.from_dict(_load_config(args.space)) if args.space else SearchSpace.default(
        mode=args.mode, disc_type="autoencoder"
    )
    out = _out_dir(args.out)
    best, records, final = random_search(
        space,
        budget=args.budget,
        data=bundle,
        base_seed=args.seed,
        log_path=out / "trials.jsonl",
        workers=args.workers,
    )
    _write_json(
        out / "best.json",
        {
            "trial": best.index,
            "params": best.params,
            "seed": best.seed,
            "objective": best.objective,
            "best_epoch": best.best_epoch,
        },
    )
    # Trained on subtrain exactly as the trial ran; evaluating it on the
    # validation set reproduces the recorded objective.
    replay = _estimator_from_search_params(best.params, best.seed)
    replay.fit(bundle.subtrain, earlystop=bundle.earlystop)
    replay.save(out / "best_trial_checkpoint.bin")
    if final is not None:
        final.save(out / "final_checkpoint.bin")
    _write_json(
        out / "config.json",
        {"command": "search", "split": str(args.split), "budget": args.budget, "seed": args.seed, "workers": args.workers, "mode": args.mode, "space": args.space},
    )
    print(f"best trial {best.index}: MAP@5={best.objective:.4f} ({len(records)} trials)")
    return 0


def _estimator_from_search_params(params: dict, seed: int) -> GANMF:
    tc = TrainConfig(seed=seed, **params)
    return GANMF(
        n_factors=tc.k,
        coding_dim=tc.coding_dim,
        batch_size=tc.batch_size,
        margin=tc.margin,
        alpha=tc.alpha,
        lr_d=tc.lr_d,
        lr_g=tc.lr_g,
        reg_d=tc.lambda_d,
        reg_g=tc.lambda_g,
        epochs=tc.epochs_max,
        mode=tc.mode,
        discriminator=tc.disc_type,
        eval_every=tc.eval_every,
        patience=tc.patience,
        random_state=tc.seed,
    )


FM_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def cmd_ablate(args) -> int:
    config = _apply_overrides(_load_config(args.config), args.set)
    split_dir = config.get("split_dir")
    if split_dir is None:
        raise UsageError("ablate config needs a 'split_dir' entry")
    bundle = D.load_split(split_dir)
    out = _out_dir(args.out)
    cutoffs = (5, 20)
    if args.which == "fm-sweep":
        rows = ["alpha,ndcg@5,map@5,ndcg@20,map@20"]
        results = []
        for alpha in FM_GRID:
            cfg = json.loads(json.dumps(config))
            cfg.setdefault("train", {})["alpha"] = alpha
            est = _estimator_from_config(cfg)
            _fit_on_bundle(est, bundle, config.get("fit_on", "train"))
            report = E.evaluate(est, bundle.train, bundle.test, cutoffs=cutoffs)
            rows.append(
                f"{alpha},{report.ndcg[5]:.6f},{report.map[5]:.6f},{report.ndcg[20]:.6f},{report.map[20]:.6f}"
            )
            results.append({"alpha": alpha, **E.report_to_dict(report)})
        (out / "fm_sweep.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        _write_json(out / "fm_sweep.json", results)
        print(f"feature-matching sweep over {len(FM_GRID)} alphas -> {out / 'fm_sweep.csv'}")
    elif args.which == "bin-disc":
        rows = ["algorithm,cutoff,metric,value"]
        results = {}
        base_model = config.get("model", "ganmf-u")
        suffix = base_model.rsplit("-", 1)[-1]
        for model in (f"ganmf-{suffix}", f"binganmf-{suffix}"):
            cfg = json.loads(json.dumps(config))
            cfg["model"] = model
            est = _estimator_from_config(cfg)
            _fit_on_bundle(est, bundle, config.get("fit_on", "train"))
            report = E.evaluate(est, bundle.train, bundle.test, cutoffs=cutoffs)
            rows.extend(E.report_to_csv_rows(report, model))
            results[model] = E.report_to_dict(report)
        (out / "ablation.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        _write_json(out / "ablation.json", results)
        print(f"discriminator ablation -> {out / 'ablation.csv'}")
    else:
        raise UsageError(f"--which must be fm-sweep or bin-disc, got {args.which!r}")
    _write_json(out / "config.json", {"command": "ablate", "which": args.which, **_resolved_train_config(config, config.get("fit_on", "train"))})
    return 0


def cmd_simstats(args) -> int:
    ckpt = M.load_checkpoint(args.checkpoint)
    n_profiles = ckpt.generator.sigma.shape[0]
    profiles = ckpt.generator.sigma @ ckpt.generator.v.T
    stats = E.similarity_stats(profiles, sample=args.sample, seed=args.seed)
    out = _out_dir(args.out)
    _write_json(
        out / "simstats.json",
        {
            "mean": stats.mean,
            "std": stats.std,
            "n_pairs": stats.n_pairs,
            "n_profiles": n_profiles,
            "mode": ckpt.mode,
        },
    )
    rng = np.random.default_rng(args.seed)
    keep = min(n_profiles, args.matrix_users)
    chosen = np.sort(rng.choice(n_profiles, size=keep, replace=False))
    sub = profiles[chosen]
    norms = np.linalg.norm(sub, axis=1)
    unit = sub / np.where(norms > 0, norms, 1.0)[:, None]
    gram = unit @ unit.T
    lines = [",".join(str(int(c)) for c in chosen)]
    lines += [",".join(f"{v:.6f}" for v in row) for row in gram]
    (out / "similarity.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_json(
        out / "config.json",
        {"command": "simstats", "checkpoint": str(args.checkpoint), "sample": args.sample, "seed": args.seed, "matrix_users": args.matrix_users},
    )
    print(f"similarity mean={stats.mean:.4f} std={stats.std:.4f} over {stats.n_pairs} pairs")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ganmf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a raw dataset into a URM cache")
    p.add_argument("--dataset", required=True, help="ml1m, hetrec or lastfm")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-interactions", type=int, default=2, dest="min_interactions")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="split a URM cache into train/test and inner sets")
    p.add_argument("--urm", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-ratio", type=float, default=0.2, dest="test_ratio")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append", default=[], help="override config values, e.g. --set train.alpha=0.1")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint or baseline on a split")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--baseline", default=None, help=" | ".join(BASELINE_NAMES))
    p.add_argument("--params", default=None, help="JSON dict of baseline parameters")
    p.add_argument("--split", required=True)
    p.add_argument("--holdout", default="test", choices=("test", "validation", "earlystop"))
    p.add_argument("--cutoffs", default="5,20")
    p.add_argument("--buckets", default=None, help="profile-length bucket edges, e.g. 2,25,100,500")
    p.add_argument("--label", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="random hyperparameter search on a split")
    p.add_argument("--split", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--space", default=None, help="JSON file narrowing the search space")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", default="user", choices=("user", "item"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("ablate", help="feature-matching sweep or discriminator ablation")
    p.add_argument("--which", required=True, choices=("fm-sweep", "bin-disc"))
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("simstats", help="pairwise similarity of generated profiles")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--matrix-users", type=int, default=1000, dest="matrix_users")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simstats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, D.ParseError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
