import argparse
import sys
from typing import Callable, List, Optional

from hoil.utils.core import eval_logic, scene_logic, simulate_logic, train_logic
from hoil.utils.core.errors import HoilError
from hoil.utils.core.logging import set_debug_logging, set_verbose_logging

DATA_EXIT = 2


def _dispatch(handler: Callable[[], tuple]) -> int:
    try:
        message, exit_code = handler()
    except HoilError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return DATA_EXIT
    except ValueError as e:
        # ShapeError / ContractError raised from bad input data.
        print(f"Error: {e}", file=sys.stderr)
        return DATA_EXIT
    print(message)
    return exit_code


def simulate(args) -> int:
    return _dispatch(lambda: simulate_logic.handle_simulate(args.config, args.frames, args.out, args.workers))


def pretrain(args) -> int:
    return _dispatch(lambda: train_logic.handle_train(
        "pretrain", args.config, args.data, args.out, args.ckpt, args.reinit_queries, args.resume, args.steps,
        args.plots))


def finetune(args) -> int:
    return _dispatch(lambda: train_logic.handle_train(
        "finetune", args.config, args.data, args.out, args.ckpt, args.reinit_queries, args.resume, args.steps,
        args.plots))


def evaluate(args) -> int:
    return _dispatch(lambda: eval_logic.handle_eval(args.ckpt, args.data, args.report, args.plots, args.workers))


def refine(args) -> int:
    return _dispatch(lambda: eval_logic.handle_refine(
        args.method, args.ckpt, args.data, args.report, args.config, args.refiner, args.oracle_contact, args.plots,
        args.workers))


def ctrefine_train(args) -> int:
    return _dispatch(lambda: eval_logic.handle_ctrefine_train(
        args.config, args.out, args.samples, args.frames, args.steps))


def export_scene(args) -> int:
    hand_gap = None if args.no_object else args.hand_gap
    return _dispatch(lambda: scene_logic.handle_export_scene(args.out, args.pose, hand_gap, args.seed))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoil", description="HOI-aware LiDAR 3D pose estimation at desk scale")
    parser.add_argument("--verbose", action="store_true", default=None, help="print progress messages")
    parser.add_argument("--quiet", action="store_true", help="suppress progress messages")
    parser.add_argument("--debug", action="store_true", help="print debug messages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a labeled synthetic sequence")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=simulate)

    for name, func in (("pretrain", pretrain), ("finetune", finetune)):
        p = sub.add_parser(name, help=f"{name} the pose network")
        p.add_argument("--config", help="run config JSON")
        p.add_argument("--data", action="append", required=True, help="sequence directory (repeatable)")
        p.add_argument("--out", required=True, help="checkpoint path")
        p.add_argument("--ckpt", help="initial checkpoint" if name == "pretrain" else "pretrained checkpoint")
        p.add_argument("--reinit-queries", action="store_true", help="re-initialize keypoint queries on N_k mismatch")
        p.add_argument("--resume", action="store_true", help="continue from the checkpoint at --out")
        p.add_argument("--steps", type=int, help="override the epoch-derived step count")
        p.add_argument("--plots", action="store_true", help="write the loss curve as SVG")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="score a checkpoint on a sequence")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="report CSV path")
    p.add_argument("--plots", action="store_true", help="also write SVG plots next to the report")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=evaluate)

    p = sub.add_parser("refine", help="temporal refinement of predicted trajectories")
    p.add_argument("--method", required=True, choices=eval_logic.REFINE_METHODS)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--config", help="run config JSON for filter settings (default: the checkpoint's)")
    p.add_argument("--refiner", help="CTRefine checkpoint")
    p.add_argument("--oracle-contact", action="store_true", help="feed ground-truth contact to CTRefine")
    p.add_argument("--plots", action="store_true")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=refine)

    p = sub.add_parser("ctrefine-train", help="train CTRefine on simulated noisy trajectories")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--out", required=True, help="refiner checkpoint path")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--frames", type=int, default=32)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=ctrefine_train)

    p = sub.add_parser("export-scene", help="write the procedural test scene as OBJ files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pose", default="tpose", choices=scene_logic.SCENE_POSES)
    p.add_argument("--hand-gap", type=float, default=0.02)
    p.add_argument("--no-object", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=export_scene)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.quiet:
        set_verbose_logging(False)
    elif args.verbose:
        set_verbose_logging(True)
    if args.debug:
        set_debug_logging(True)
    return args.func(args)
