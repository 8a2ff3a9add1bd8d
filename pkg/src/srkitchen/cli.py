"""Command-line entry point: ``srkitchen <command> [options]``.

Commands: plan, gen-data, train, eval, transfer, affordance. Every flag can
also come from an environment variable named ``SRK_<FLAG>`` (upper case,
dashes as underscores, e.g. ``SRK_SCENE``, ``SRK_FREEZE_W_ONLY=1``); an
explicit flag wins over the environment.

Exit codes: 0 success, 1 domain failure (unsolvable task, failed run),
2 usage or configuration error, 3 numeric abort (non-finite loss).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import CatalogError, _scene_dir, load_catalog_scene, load_task, task_from_problem
from .config import TrainConfig
from .domain import SceneError, TaskLevel
from .env import KitchenEnv
from .evaluation import (
    PlannerAgent,
    RandomAgent,
    RandomValidAgent,
    SRAgent,
    affordance_auc,
    affordance_samples,
    affordance_train,
    evaluate,
    export_features,
)
from .planner import PlanError, Unsolvable, plan
from .seeding import derive_seed
from .sr_model import SRNetwork
from .strips import kitchen_domain, parse_problem
from .strips.sexpr import StripsSyntaxError
from .training import ILDataset, generate_il_dataset, il_train, rl_train
from .transfer import frozen_parameters_equal, learning_curve, transfer_w, write_curves

log = logging.getLogger("srkitchen")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
ENV_PREFIX = "SRK_"

PLAN_FILE = "plan.txt"
METRICS_FILE = "metrics.csv"
EVAL_FILE = "eval.csv"
CKPT_FILE = "ckpt.bin"
DATA_FILE = "dataset.npz"
FEATURES_FILE = "features.csv"

METRICS_HEADER = "phase,index,loss_r,loss_q,loss_sr,return,length,success,epsilon"
IL_LOG_EVERY = 100
RL_CKPT_EVERY = 50


class UsageFailure(Exception):
    """Bad flags, paths or configuration (exit 2)."""


# --------------------------------------------------------------------------
# argument handling


def _flag(name: str, default=None, kind=str):
    """Default taken from ``SRK_<NAME>`` when set."""
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return default
    if kind is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    try:
        return kind(raw)
    except ValueError:
        raise UsageFailure(f"{ENV_PREFIX}{name.upper()}={raw!r} is not a valid value") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srkitchen", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="srk-out"):
        sp.add_argument("--scene", default=_flag("scene"),
                        help="scene directory, scene.json path, or catalog name (s1..s10)")
        sp.add_argument("--task", default=_flag("task"),
                        help="task id (easy-microwave), level name, or problem file")
        sp.add_argument("--level", default=_flag("level"), choices=[lv.value for lv in TaskLevel])
        sp.add_argument("--seed", type=int, default=_flag("seed", 0, int))
        sp.add_argument("--config", default=_flag("config"), help="training config (JSON)")
        sp.add_argument("--out", default=_flag("out", out_default), help="output directory")
        sp.add_argument("--episodes", type=int, default=_flag("episodes", None, int))

    sp = sub.add_parser("plan", help="print an optimal plan for a sampled instance")
    common(sp, out_default=None)

    sp = sub.add_parser("gen-data", help="generate imitation data")
    common(sp)

    sp = sub.add_parser("train", help="imitation and/or reinforcement learning")
    common(sp)
    sp.add_argument("--mode", default=_flag("mode", "il"), choices=["il", "rl", "il+rl"])
    sp.add_argument("--init", default=_flag("init"), help="checkpoint to start from")
    sp.add_argument("--data", default=_flag("data"), help="imitation dataset (.npz)")

    sp = sub.add_parser("eval", help="evaluate a checkpoint or a baseline agent")
    common(sp)
    sp.add_argument("--init", default=_flag("init"), help="checkpoint to evaluate")
    sp.add_argument("--agent", default=_flag("agent", "sr"),
                    choices=["sr", "planner", "random", "random-valid"])

    sp = sub.add_parser("transfer", help="retrain only w on a new task")
    common(sp)
    sp.add_argument("--init", default=_flag("init"), help="source checkpoint")
    sp.add_argument("--freeze-w-only", action="store_true",
                    default=_flag("freeze-w-only", False, bool),
                    help="required: acknowledge that only w is trained")
    sp.add_argument("--item", default=_flag("item"), help="new target item for a hard task")
    sp.add_argument("--budgets", default=_flag("budgets"),
                    help="comma-separated episode budgets for a learning curve")

    sp = sub.add_parser("affordance", help="train and score action-success prediction")
    common(sp)
    sp.add_argument("--init", default=_flag("init"), help="checkpoint to start from")
    return p


# --------------------------------------------------------------------------
# resolution helpers


def _scene(args):
    if not args.scene:
        raise UsageFailure("--scene is required")
    try:
        return load_catalog_scene(args.scene)
    except CatalogError:
        raise UsageFailure(f"scene not found: {args.scene}") from None
    except (SceneError, ValueError, OSError) as e:
        raise UsageFailure(f"cannot read scene {args.scene}: {e}") from None


def _task(args, scene):
    ref = args.task or args.level
    if not ref:
        raise UsageFailure("--task or --level is required")
    path = Path(ref)
    if path.suffix == ".strips" or path.is_file():
        if not path.is_file():
            raise UsageFailure(f"problem file not found: {ref}")
        try:
            prob = parse_problem(path.read_text(encoding="utf-8"), kitchen_domain())
            task = task_from_problem(prob, path.stem)
        except (StripsSyntaxError, ValueError) as e:
            raise UsageFailure(f"bad problem file {ref}: {e}") from None
    else:
        try:
            task = load_task(_scene_dir(args.scene), ref)
        except CatalogError as e:
            raise UsageFailure(str(e)) from None
    if args.level and task.level.value != args.level:
        raise UsageFailure(f"task {task.id} is {task.level.value}, not {args.level}")
    for g in task.goal:
        for obj in g[1:]:
            if obj not in scene.receptacle_index and obj not in scene.item_index:
                raise UsageFailure(f"task {task.id} names {obj!r}, which is not in {scene.name}")
    return task


def _config(args) -> TrainConfig:
    if not args.config:
        cfg = TrainConfig()
    else:
        try:
            cfg = TrainConfig.load(args.config)
        except FileNotFoundError:
            raise UsageFailure(f"config not found: {args.config}") from None
        except (ValueError, TypeError) as e:
            raise UsageFailure(f"bad config {args.config}: {e}") from None
    cfg.seed = args.seed
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageFailure(f"cannot create output directory {out}: {e}") from None
    return out


def _env(scene, task, cfg: TrainConfig, max_steps: int | None = None) -> KitchenEnv:
    return KitchenEnv(scene, task, rewards=cfg.rewards,
                      max_steps=max_steps if max_steps is not None else cfg.eval_max_steps)


def _new_net(env: KitchenEnv, cfg: TrainConfig) -> SRNetwork:
    model = cfg.model
    if model.seed != derive_seed(cfg.seed, "model/init"):
        from dataclasses import replace

        model = replace(model, seed=derive_seed(cfg.seed, "model/init"))
    return SRNetwork(4 * env.frame_dim, env.encoder.internal_dim, env.action_features.shape[1], model)


def _load_net(path: str | None, env: KitchenEnv) -> tuple[SRNetwork, dict]:
    if not path:
        raise UsageFailure("--init checkpoint is required")
    if not Path(path).is_file():
        raise UsageFailure(f"checkpoint not found: {path}")
    try:
        net, _, meta = SRNetwork.load(path)
    except (ValueError, KeyError, OSError) as e:
        raise UsageFailure(f"cannot read checkpoint {path}: {e}") from None
    want = (4 * env.frame_dim, env.encoder.internal_dim, env.action_features.shape[1])
    have = (net.frame_in, net.internal_in, net.action_in)
    if want != have:
        raise UsageFailure(
            "checkpoint/scene dimension mismatch: checkpoint expects frame={}, internal={}, "
            "action={}; scene provides frame={}, internal={}, action={}".format(*have, *want))
    return net, meta


def _save(net: SRNetwork, path: Path, **meta) -> None:
    net.save(path, extra_meta=meta)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


class MetricsWriter:
    def __init__(self, path: Path):
        self.fh = open(path, "w", encoding="utf-8", newline="")
        self.fh.write(METRICS_HEADER + "\n")

    def row(self, phase, index, loss_r=None, loss_q=None, loss_sr=None, ret=None, length=None,
            success=None, epsilon=None):
        vals = [phase, _fmt(index), _fmt(loss_r), _fmt(loss_q), _fmt(loss_sr), _fmt(ret),
                _fmt(length), _fmt(success), _fmt(epsilon)]
        self.fh.write(",".join(vals) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


# --------------------------------------------------------------------------
# commands


def cmd_plan(args) -> int:
    scene = _scene(args)
    task = _task(args, scene)
    env = KitchenEnv(scene, task)
    env.reset(args.seed)
    try:
        p = plan(scene, env.state, env.task)
    except Unsolvable as e:
        print(f"unsolvable: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except PlanError as e:
        print(f"planning failed: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    text = p.to_text()
    sys.stdout.write(text)
    print(f"cost {p.cost}")
    if args.out:
        (_out(args) / PLAN_FILE).write_text(text, encoding="utf-8")
    return EXIT_OK


def _dataset(args, env, cfg, episodes=None) -> ILDataset:
    n = cfg.il_episodes if episodes is None else episodes
    return generate_il_dataset(env, n, cfg.p_random, seed=derive_seed(cfg.seed, "il/data"),
                               gamma=cfg.gamma, random_pool=cfg.random_pool,
                               max_steps=cfg.il_max_steps, q_targets=cfg.q_targets)


def cmd_gen_data(args) -> int:
    scene = _scene(args)
    task = _task(args, scene)
    cfg = _config(args)
    out = _out(args)
    env = _env(scene, task, cfg)
    data = _dataset(args, env, cfg, args.episodes)
    data.save(out / DATA_FILE)
    s = data.summary
    print(f"gen-data {task.id}: {len(data)} samples from {s['episodes']} episodes "
          f"(skipped {s['skipped']}) -> {out / DATA_FILE}")
    return EXIT_OK


def cmd_train(args) -> int:
    scene = _scene(args)
    task = _task(args, scene)
    cfg = _config(args)
    out = _out(args)
    env = _env(scene, task, cfg)
    net = _load_net(args.init, env)[0] if args.init else _new_net(env, cfg)
    ckpt = out / CKPT_FILE
    meta = {"scene": scene.name, "task": task.id, "mode": args.mode, "seed": cfg.seed}
    _save(net, ckpt, **meta, stage="init")
    metrics = MetricsWriter(out / METRICS_FILE)
    summary = []
    try:
        if args.mode in ("il", "il+rl"):
            if args.data:
                if not Path(args.data).is_file():
                    raise UsageFailure(f"dataset not found: {args.data}")
                data = ILDataset.load(args.data)
                if data.obs.shape[1] != env.obs_dim:
                    raise UsageFailure(f"dataset observations have {data.obs.shape[1]} features; "
                                       f"scene provides {env.obs_dim}")
            else:
                data = _dataset(args, env, cfg, args.episodes if args.mode == "il" else None)
            updates = cfg.il_updates if len(data) else 0
            if updates:
                good = net.copy()

                def on_update(k, losses):
                    if (k + 1) % IL_LOG_EVERY == 0 or k + 1 == updates:
                        metrics.row("il", k + 1, *losses)
                        if (k + 1) % (IL_LOG_EVERY * 10) == 0:
                            good.load_params(net.params)

                try:
                    il_train(net, data, cfg, env.action_features, updates=updates,
                             callback=on_update)
                except FloatingPointError:
                    _save(good, ckpt, **meta, stage="il-last-good")
                    raise
            _save(net, ckpt, **meta, stage="il")
            summary.append(f"il: {updates} updates on {len(data)} samples")
        if args.mode in ("rl", "il+rl"):
            episodes = cfg.rl_episodes
            if args.mode == "rl" and args.episodes is not None:
                episodes = args.episodes
            rl_env = _env(scene, task, cfg, max_steps=cfg.rl_max_steps)
            good = net.copy()
            wins = 0

            def on_episode(m):
                nonlocal wins
                wins += int(m.success)
                metrics.row("rl", m.episode, ret=m.ret, length=m.length, success=m.success,
                            epsilon=m.epsilon)
                if (m.episode + 1) % RL_CKPT_EVERY == 0:
                    good.load_params(net.params)

            try:
                rl_train(net, rl_env, cfg, episodes=episodes,
                         seed=derive_seed(cfg.seed, "rl"), on_episode=on_episode)
            except FloatingPointError:
                _save(good, ckpt, **meta, stage="rl-last-good")
                raise
            _save(net, ckpt, **meta, stage="rl")
            summary.append(f"rl: {episodes} episodes, {wins} successful")
    finally:
        metrics.close()
    print(f"train {args.mode} {task.id}: " + "; ".join(summary or ["nothing to do"])
          + f" -> {ckpt}")
    return EXIT_OK


def _write_eval(path: Path, rep) -> None:
    path.write_text(rep.HEADER + "\n" + rep.csv_row() + "\n", encoding="utf-8")


def cmd_eval(args) -> int:
    scene = _scene(args)
    task = _task(args, scene)
    cfg = _config(args)
    env = _env(scene, task, cfg)
    if args.agent == "sr":
        net, _ = _load_net(args.init, env)
        agent = SRAgent(net, cfg.eval_epsilon, cfg.applicable_only)
    elif args.agent == "planner":
        agent = PlannerAgent()
    elif args.agent == "random":
        agent = RandomAgent()
    else:
        agent = RandomValidAgent()
    out = _out(args)
    n = cfg.eval_episodes if args.episodes is None else args.episodes
    rep = evaluate(agent, env, n, seed=derive_seed(cfg.seed, "eval"))
    _write_eval(out / EVAL_FILE, rep)
    print(rep.table(f"{args.agent} {task.id}"))
    print(f"success_rate {rep.success_rate:.2f}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    if not args.freeze_w_only:
        raise UsageFailure("transfer retrains only w; pass --freeze-w-only to confirm "
                           "(full fine-tuning is not offered here)")
    scene = _scene(args)
    task = _task(args, scene)
    if args.item:
        from .catalog import retarget

        try:
            task = retarget(task, args.item, scene)
        except CatalogError as e:
            raise UsageFailure(str(e)) from None
    cfg = _config(args)
    env = _env(scene, task, cfg)
    source, _ = _load_net(args.init, env)
    out = _out(args)
    data = _dataset(args, env, cfg, args.episodes)
    net = transfer_w(source, data, cfg, env.action_features, seed=cfg.seed)
    if not frozen_parameters_equal(source, net):  # pragma: no cover - guarded by construction
        print("internal error: frozen parameters changed", file=sys.stderr)
        return EXIT_DOMAIN
    _save(net, out / CKPT_FILE, scene=scene.name, task=task.id, mode="transfer-w", seed=cfg.seed)
    if args.budgets:
        try:
            budgets = sorted({int(b) for b in args.budgets.split(",") if b.strip()})
        except ValueError:
            raise UsageFailure(f"bad --budgets {args.budgets!r}") from None
        pts = learning_curve("w", env, cfg, budgets, source=source, data=data,
                             updates=cfg.il_updates, eval_episodes=cfg.eval_episodes,
                             seed=cfg.seed)
        write_curves(out / METRICS_FILE, pts)
    rep = evaluate(SRAgent(net, cfg.eval_epsilon, cfg.applicable_only), env, cfg.eval_episodes,
                   seed=derive_seed(cfg.seed, "eval"))
    _write_eval(out / EVAL_FILE, rep)
    print(rep.table(f"transfer {task.id}"))
    return EXIT_OK


def cmd_affordance(args) -> int:
    scene = _scene(args)
    task = _task(args, scene)
    cfg = _config(args)
    env = _env(scene, task, cfg, max_steps=cfg.affordance_steps)
    net = _load_net(args.init, env)[0] if args.init else _new_net(env, cfg)
    out = _out(args)
    episodes = cfg.affordance_episodes if args.episodes is None else args.episodes
    affordance_train(net, env, cfg, episodes=episodes, seed=derive_seed(cfg.seed, "affordance"))
    held_out = affordance_samples(env, max(10, episodes // 10), cfg.affordance_steps,
                                  seed=derive_seed(cfg.seed, "affordance/held-out"))
    auc = affordance_auc(net, held_out, env.action_features)
    _save(net, out / CKPT_FILE, scene=scene.name, task=task.id, mode="affordance", seed=cfg.seed)
    export_features(net, held_out, out / FEATURES_FILE, env.action_features)
    (out / EVAL_FILE).write_text(f"roc_auc,samples\n{auc:.6f},{len(held_out)}\n", encoding="utf-8")
    print(f"affordance {scene.name}: ROC-AUC {auc:.3f} on {len(held_out)} held-out pairs")
    return EXIT_OK


COMMANDS = {
    "plan": cmd_plan,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "transfer": cmd_transfer,
    "affordance": cmd_affordance,
}


def main(argv: list[str] | None = None) -> int:
    try:
        parser = build_parser()
    except UsageFailure as e:
        print(f"srkitchen: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageFailure as e:
        print(f"srkitchen {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as e:
        print(f"srkitchen {args.command}: numeric abort ({e}); last good checkpoint kept",
              file=sys.stderr)
        return EXIT_NUMERIC
    except PlanError as e:
        print(f"srkitchen {args.command}: {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
