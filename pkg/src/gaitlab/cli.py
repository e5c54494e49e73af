"""Command-line entry point.

Subcommands cover the full pipeline: grasp-cache building, training,
evaluation, robustness sweeps, transfer grids, ablations, plotting, and
config validation. Every command that consumes randomness requires an
explicit --seed, and every output file is recorded in the manifest of the
directory it lands in.

Exit codes: 0 success, 1 domain error (missing file, failed run), 2 usage
or config error.
"""

import argparse
import csv
import json
import os
import sys

import jsonschema
import numpy as np

from . import manifest as mf
from .envs import AXES, OBS_MASKS
from .ppo import TRAIN_SCHEMA, TrainConfig, Trainer, load_policy_bundle
from .scene import SCENE_SCHEMA, SceneConfig
from .sgs import GraspSampleConfig, build_cache

USAGE_ERROR = 2
DOMAIN_ERROR = 1


class ConfigError(Exception):
    """Invalid configuration content (maps to exit 2)."""


def runs_root() -> str:
    return os.environ.get("GAITLAB_RUNS_DIR", "runs")


def _slug(s: str) -> str:
    return s.replace("+", "p").replace("-", "m")


def _validation_error_path(err: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "(top level)"


def load_config(path) -> dict:
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config error in {path}: not valid JSON "
                              f"({e})") from e


def validate_config_dict(cfg: dict) -> str:
    """Validate a config dict against its declared kind.

    Returns the kind. Raises ConfigError naming the offending key.
    """
    kind = cfg.get("kind")
    schemas = {"scene": SCENE_SCHEMA, "train": TRAIN_SCHEMA}
    if kind not in schemas:
        raise ConfigError("config error at kind: expected one of "
                          f"{sorted(schemas)}, got {kind!r}")
    try:
        jsonschema.validate(cfg, schemas[kind])
    except jsonschema.ValidationError as e:
        raise ConfigError(
            f"config error at {_validation_error_path(e)}: {e.message}")
    if kind == "scene":
        try:
            SceneConfig.from_dict(cfg)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"config error: {e}")
    else:
        _check_train_cross_fields(cfg)
    return kind


def _check_train_cross_fields(cfg: dict):
    tc = dict(cfg)
    tc.pop("kind", None)
    scene = tc.pop("scene", None)
    try:
        train = TrainConfig(**{**tc, "scene_overrides": scene})
    except TypeError as e:
        raise ConfigError(f"config error: {e}")
    batch = train.n_envs * train.rollout_len
    if train.minibatch > batch:
        raise ConfigError(
            "config error at minibatch: exceeds rollout batch "
            f"({train.minibatch} > {train.n_envs}*{train.rollout_len})")
    if train.total_steps < batch:
        raise ConfigError(
            "config error at total_steps: smaller than one rollout "
            f"({train.total_steps} < {batch})")
    if scene is not None:
        scene_full = {"kind": "scene", "shape": train.shape, **scene}
        try:
            jsonschema.validate(scene_full, SCENE_SCHEMA)
            SceneConfig.from_dict(scene_full)
        except jsonschema.ValidationError as e:
            raise ConfigError(
                f"config error at scene/{_validation_error_path(e)}: "
                f"{e.message}")
        except (TypeError, ValueError) as e:
            raise ConfigError(f"config error at scene: {e}")
    try:
        SceneConfig(shape=train.shape)
    except ValueError as e:
        raise ConfigError(f"config error at shape: {e}")
    if train.axis not in AXES:
        raise ConfigError(f"config error at axis: unknown axis {train.axis!r}")
    if train.obs_mask not in OBS_MASKS:
        raise ConfigError(
            f"config error at obs_mask: unknown mask {train.obs_mask!r}")


def write_rows_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v
                        for v in row])


# ---- subcommand implementations ----------------------------------------

def cmd_sample_grasps(args) -> int:
    scene = SceneConfig(shape=args.shape)
    if args.scene:
        cfg = load_config(args.scene)
        validate_config_dict(cfg)
        cfg["shape"] = args.shape
        scene = SceneConfig.from_dict(cfg)
    sgs_cfg = GraspSampleConfig()
    header = build_cache(args.out, scene, count=args.count, seed=args.seed,
                         cfg=sgs_cfg, workers=args.workers)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    mf.append_entry(out_dir, "sample-grasps", seed=args.seed,
                    config=scene.to_dict(),
                    artifacts={"grasp_cache": args.out},
                    extra={"count": args.count,
                           "candidates_tried": header["candidates_tried"]})
    print(json.dumps({"cache": args.out, "count": args.count,
                      "candidates_tried": header["candidates_tried"]}))
    return 0


def _train_config_from_file(path) -> TrainConfig:
    cfg = load_config(path)
    if validate_config_dict(cfg) != "train":
        raise ConfigError("config error at kind: train command needs a "
                          "train config")
    return TrainConfig.from_dict(cfg)


def cmd_train(args) -> int:
    train_cfg = _train_config_from_file(args.config)
    if train_cfg.initial_state_source != "canonical" and \
            not os.path.exists(train_cfg.initial_state_source):
        raise FileNotFoundError(
            "initial_state_source "
            f"{train_cfg.initial_state_source!r} does not exist; build it "
            "with sample-grasps first")
    run_dir = args.run_dir or os.path.join(
        runs_root(),
        f"{train_cfg.shape}_{_slug(train_cfg.axis)}_"
        f"{train_cfg.obs_mask}_s{args.seed}")
    trainer = Trainer(train_cfg, seed=args.seed, run_dir=run_dir)
    latest = trainer.checkpoint_path()
    if args.resume and os.path.exists(latest):
        trainer.load_checkpoint(latest)
    metrics = trainer.train(log=None if args.quiet else
                            (lambda m: print(m, flush=True)))
    final = trainer.checkpoint_path("final")
    mf.append_entry(run_dir, "train", seed=args.seed,
                    config=train_cfg.to_dict(),
                    artifacts={"checkpoint": final, "metrics": metrics},
                    extra={"global_step": trainer.global_step})
    print(json.dumps({"run_dir": run_dir, "checkpoint": final,
                      "steps": trainer.global_step}))
    return 0


EVAL_FIELDS = ("seed", "ret", "length", "cum_rotation", "dropped",
               "termination", "mean_contacts", "contact_switches")


def _write_eval_csv(path, summary):
    rows = [[getattr(e, f) for f in EVAL_FIELDS] for e in summary.episodes]
    write_rows_csv(path, EVAL_FIELDS, rows)


def cmd_evaluate(args) -> int:
    from .evalsuite import evaluate_checkpoint
    if not os.path.exists(args.checkpoint):
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    summary = evaluate_checkpoint(args.checkpoint, n_episodes=args.episodes,
                                  seed=args.seed,
                                  initial_states=args.initial_states)
    out = args.out or os.path.join(os.path.dirname(args.checkpoint),
                                   f"eval_s{args.seed}.csv")
    _write_eval_csv(out, summary)
    agg = {k: v for k, v in summary.to_dict().items() if k != "episodes"}
    mf.append_entry(os.path.dirname(os.path.abspath(out)), "evaluate",
                    seed=args.seed, artifacts={"episodes": out},
                    extra={"checkpoint": args.checkpoint,
                           "checkpoint_sha256": mf.file_digest(args.checkpoint),
                           "summary": agg})
    print(json.dumps(agg))
    return 0


def cmd_sweep(args) -> int:
    from .evalsuite import (DEFAULT_SWEEP_GRIDS, SweepSpec, robustness_sweep)
    if not os.path.exists(args.checkpoint):
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    mags = (tuple(args.magnitudes) if args.magnitudes
            else DEFAULT_SWEEP_GRIDS[args.dimension])
    try:
        spec = SweepSpec(args.dimension, mags, episodes=args.episodes,
                         seed=args.seed)
    except ValueError as e:
        raise ConfigError(f"config error at magnitudes: {e}")
    rows = robustness_sweep(args.checkpoint, spec,
                            initial_states=args.initial_states)
    out = args.out or os.path.join(
        os.path.dirname(args.checkpoint),
        f"sweep_{args.dimension}_s{args.seed}.csv")
    write_rows_csv(out, ("magnitude", "mean_return", "stderr",
                         "mean_cum_rotation", "drop_rate"),
                   [(m, s.mean_return, se, s.mean_cum_rotation, s.drop_rate)
                    for m, s, se in rows])
    mf.append_entry(os.path.dirname(os.path.abspath(out)), "sweep",
                    seed=args.seed, artifacts={"table": out},
                    extra={"checkpoint": args.checkpoint,
                           "dimension": args.dimension,
                           "magnitudes": list(spec.magnitudes)})
    print(json.dumps({"table": out,
                      "baseline": rows[0][1].mean_return,
                      "final": rows[-1][1].mean_return}))
    return 0


def _parse_shape_map(pairs, flag) -> dict:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise ConfigError(
                f"config error at {flag}: expected shape=path, got {p!r}")
        shape, path = p.split("=", 1)
        out[shape] = path
    return out


def cmd_transfer(args) -> int:
    from .evalsuite import transfer_matrix
    checkpoints = _parse_shape_map(args.checkpoints, "--checkpoints")
    caches = _parse_shape_map(args.caches or [], "--caches")
    shapes = args.shapes or sorted(checkpoints)
    for s in shapes:
        if s not in checkpoints:
            raise ConfigError(
                f"config error at --checkpoints: no checkpoint for {s!r}")
        if not os.path.exists(checkpoints[s]):
            raise FileNotFoundError(
                f"checkpoint not found: {checkpoints[s]}")
    result = transfer_matrix(checkpoints, shapes, caches=caches or None,
                             n_episodes=args.episodes, seed=args.seed)
    out = args.out
    rows = []
    for i, src in enumerate(shapes):
        for j, dst in enumerate(shapes):
            rows.append((src, dst, float(result.raw[i, j]),
                         float(result.normalized[i, j])))
    write_rows_csv(out, ("trained_on", "evaluated_on", "mean_return",
                         "normalized"), rows)
    mf.append_entry(os.path.dirname(os.path.abspath(out)), "transfer",
                    seed=args.seed, artifacts={"table": out},
                    extra={"checkpoints": checkpoints,
                           "undefined_rows": result.undefined_rows})
    print(json.dumps(result.to_dict()))
    return 0


def cmd_ablate(args) -> int:
    from .evalsuite import ablation_suite
    base = _train_config_from_file(args.config)
    if base.initial_state_source != "canonical" and \
            not os.path.exists(base.initial_state_source):
        raise FileNotFoundError(
            "initial_state_source "
            f"{base.initial_state_source!r} does not exist; build it with "
            "sample-grasps first")
    run_root = args.run_dir or os.path.join(
        runs_root(), f"ablation_{base.shape}_{_slug(base.axis)}")
    seeds = tuple(args.seeds)
    try:
        results = ablation_suite(base, run_root, masks=args.masks,
                                 seeds=seeds,
                                 n_eval_episodes=args.episodes,
                                 eval_seed=args.eval_seed,
                                 log=None)
    except ValueError as e:
        raise ConfigError(f"config error at --masks: {e}")
    out = args.out or os.path.join(run_root, "ablation.json")
    with open(out, "w") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
    artifacts = {"summary": out}
    for mask in results:
        for seed in seeds:
            d = os.path.join(run_root, f"ablate_{mask}_s{seed}")
            artifacts[f"metrics_{mask}_s{seed}"] = os.path.join(
                d, "metrics.csv")
            artifacts[f"checkpoint_{mask}_s{seed}"] = os.path.join(
                d, "checkpoint_final.pt")
    mf.append_entry(run_root, "ablate", seed=seeds[0],
                    config=base.to_dict(), artifacts=artifacts,
                    extra={"seeds": list(seeds)})
    print(json.dumps({m: {"mean_return": r["mean_return"],
                          "fraction_of_full": r["fraction_of_full"]}
                      for m, r in results.items()}))
    return 0


def cmd_plot(args) -> int:
    from . import plotting
    if args.kind == "learning":
        curves = {}
        for item in args.inputs:
            label, _, path = item.partition("=")
            curves[label if path else os.path.basename(item)] = path or item
        for p in curves.values():
            if not os.path.exists(p):
                raise FileNotFoundError(f"metrics file not found: {p}")
        plotting.learning_curves(curves, args.out, y=args.metric)
    elif args.kind == "robustness":
        path = args.inputs[0]
        if not os.path.exists(path):
            raise FileNotFoundError(f"sweep table not found: {path}")
        with open(path) as fh:
            rows = [(float(r["magnitude"]), float(r["mean_return"]),
                     float(r["stderr"])) for r in csv.DictReader(fh)]
        plotting.robustness_curve(rows, args.out,
                                  dimension=args.dimension or "magnitude")
    elif args.kind == "transfer":
        path = args.inputs[0]
        if not os.path.exists(path):
            raise FileNotFoundError(f"transfer table not found: {path}")
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        shapes = sorted({r["trained_on"] for r in rows})
        n = len(shapes)
        mat = np.full((n, n), np.nan)
        for r in rows:
            i = shapes.index(r["trained_on"])
            j = shapes.index(r["evaluated_on"])
            mat[i, j] = float(r["normalized"])
        plotting.transfer_heatmap(shapes, mat, args.out)
    else:  # ablation
        path = args.inputs[0]
        if not os.path.exists(path):
            raise FileNotFoundError(f"ablation summary not found: {path}")
        with open(path) as fh:
            results = json.load(fh)
        plotting.ablation_bars(results, args.out)
    mf.append_entry(os.path.dirname(os.path.abspath(args.out)), "plot",
                    artifacts={"figure": args.out},
                    extra={"plot_kind": args.kind,
                           "inputs": list(args.inputs)})
    print(json.dumps({"figure": args.out}))
    return 0


def cmd_validate_config(args) -> int:
    cfg = load_config(args.config)
    kind = validate_config_dict(cfg)
    print(json.dumps({"config": args.config, "kind": kind, "valid": True}))
    return 0


# ---- parser -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gaitlab",
        description="Finger-gaiting in-hand re-orientation: simulation, "
                    "training, and evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    sg = sub.add_parser("sample-grasps",
                        help="build a stable-grasp cache for one shape")
    sg.add_argument("--shape", required=True)
    sg.add_argument("--count", type=int, required=True)
    sg.add_argument("--seed", type=int, required=True)
    sg.add_argument("--out", required=True)
    sg.add_argument("--workers", type=int, default=1)
    sg.add_argument("--scene", help="scene config JSON (kind=scene)")
    sg.set_defaults(func=cmd_sample_grasps)

    tr = sub.add_parser("train", help="train one re-orientation policy")
    tr.add_argument("--config", required=True,
                    help="train config JSON (kind=train)")
    tr.add_argument("--seed", type=int, required=True)
    tr.add_argument("--run-dir")
    tr.add_argument("--resume", action="store_true",
                    help="continue from the latest checkpoint if present")
    tr.add_argument("--quiet", action="store_true")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="run a fixed-seed episode battery")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--seed", type=int, required=True)
    ev.add_argument("--episodes", type=int, default=50)
    ev.add_argument("--out")
    ev.add_argument("--initial-states",
                    help="grasp cache path or 'canonical' (default: the "
                         "checkpoint's own source)")
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="robustness sweep along one noise "
                                      "dimension")
    sw.add_argument("--checkpoint", required=True)
    sw.add_argument("--dimension", required=True,
                    choices=["joint_position", "contact_position",
                             "contact_force", "perturbation_force"])
    sw.add_argument("--seed", type=int, required=True)
    sw.add_argument("--magnitudes", type=float, nargs="+")
    sw.add_argument("--episodes", type=int, default=50)
    sw.add_argument("--out")
    sw.add_argument("--initial-states")
    sw.set_defaults(func=cmd_sweep)

    tf = sub.add_parser("transfer", help="cross-shape transfer grid")
    tf.add_argument("--checkpoints", nargs="+", required=True,
                    metavar="SHAPE=PATH")
    tf.add_argument("--shapes", nargs="+")
    tf.add_argument("--caches", nargs="+", metavar="SHAPE=PATH")
    tf.add_argument("--seed", type=int, required=True)
    tf.add_argument("--episodes", type=int, default=50)
    tf.add_argument("--out", required=True)
    tf.set_defaults(func=cmd_transfer)

    ab = sub.add_parser("ablate", help="train+evaluate per observation mask")
    ab.add_argument("--config", required=True)
    ab.add_argument("--seeds", type=int, nargs="+", required=True)
    ab.add_argument("--masks", nargs="+")
    ab.add_argument("--episodes", type=int, default=50)
    ab.add_argument("--eval-seed", type=int, default=0)
    ab.add_argument("--run-dir")
    ab.add_argument("--out")
    ab.set_defaults(func=cmd_ablate)

    pl = sub.add_parser("plot", help="render figures from result tables")
    pl.add_argument("--kind", required=True,
                    choices=["learning", "robustness", "transfer",
                             "ablation"])
    pl.add_argument("--inputs", nargs="+", required=True,
                    help="CSV/JSON inputs; learning curves accept "
                         "label=path pairs")
    pl.add_argument("--out", required=True)
    pl.add_argument("--metric", default="mean_return")
    pl.add_argument("--dimension")
    pl.set_defaults(func=cmd_plot)

    vc = sub.add_parser("validate-config",
                        help="check a config file without running")
    vc.add_argument("config")
    vc.set_defaults(func=cmd_validate_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return USAGE_ERROR
    except (FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return DOMAIN_ERROR


if __name__ == "__main__":
    sys.exit(main())
