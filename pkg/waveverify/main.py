"""
waveverify/main.py

Command-line entry point.

    waveverify embed    --in x.wav --model m.ckpt --out wm.wav [--message HEX]
    waveverify detect   --in wm.wav --model m.ckpt --out bits.json [--mask mask.json]
    waveverify locate   --in wm.wav --model m.ckpt --out mask.json
    waveverify attack   --in wm.wav --out att.wav --effect speed --param speed_factor=0.9 [--effect ...]
    waveverify train    --config run.cfg [--resume latest.ckpt]
    waveverify evaluate --model m.ckpt (--clips DIR | --toy N | --config run.cfg) [--effects a,b] --out report.json
    waveverify scheduler-report runs/x/scheduler_state.json

Exit codes: 0 success, 1 runtime failure (message on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import torch

from .config import settings
from .core.audio_io import load_mask_json, load_wav, message_from_hex, save_mask_json, save_wav
from .core.masks import mask_full, pool_mask_to_frames
from .core.models import AudioClip, MessageBits, RandomSource
from .effects.registry import EffectStep, apply_chain
from .errors import WaveVerifyError
from .evaluation.harness import attacks_for, default_attacks, evaluate, removal_sweep
from .networks.detector import aggregate_bits, detect
from .networks.generator import embed
from .networks.locator import locate
from .scheduler.scheduler import load_scheduler_state, scheduler_report
from .training.checkpoint import load_checkpoint
from .training.config import load_training_config
from .training.corpus import toy_clips
from .training.trainer import Trainer, corpus_for, models_from_checkpoint

logger = logging.getLogger("waveverify.main")


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------

class _EffectAction(argparse.Action):
    """--effect NAME starts a new chain step; later --param k=v attach to it."""

    def __call__(self, parser, namespace, values, option_string=None):
        steps = list(getattr(namespace, "steps", None) or [])
        steps.append((values, {}))
        namespace.steps = steps


class _ParamAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        steps = getattr(namespace, "steps", None)
        if not steps:
            parser.error("--param must follow an --effect")
        key, sep, raw = values.partition("=")
        if not sep or not key:
            parser.error(f"--param expects key=value, got {values!r}")
        try:
            value = float(raw)
        except ValueError:
            parser.error(f"--param {key}: {raw!r} is not a number")
        steps[-1][1][key.strip()] = value


def _names(text: str) -> list[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    if not names:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of effect names: {text!r}")
    return names


def _fractions(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise argparse.ArgumentTypeError(f"fractions must lie in [0, 1]: {text!r}")
    return values


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0, or the config's seed)")
    common.add_argument(
        "--log-level", default=settings.LOG_LEVEL.upper(),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )

    parser = argparse.ArgumentParser(prog="waveverify", description="Neural speech watermarking")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", parents=[common], help="embed a message into a WAV file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--message", "--bits", dest="message", help="hex payload (random from --seed when omitted)")
    p.add_argument("--residual-out", help="also write the watermark residual")

    p = sub.add_parser("detect", parents=[common], help="decode the message from a WAV file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask", help="mask JSON restricting the frames used for decoding")

    p = sub.add_parser("locate", parents=[common], help="write the per-sample presence mask")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("attack", parents=[common], help="apply an effect chain to a WAV file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--effect", action=_EffectAction, metavar="NAME")
    p.add_argument("--param", action=_ParamAction, metavar="KEY=VALUE")
    p.add_argument("--mask-in", help="mask JSON paired with the input (default all ones)")
    p.add_argument("--mask-out", help="write the transformed mask")

    p = sub.add_parser("train", parents=[common], help="run training from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--run-dir")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("evaluate", parents=[common], help="robustness report for a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--config", help="training config file; its held-out clips, effects, rate and seed are the defaults")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--clips", help="directory of WAV files")
    source.add_argument("--toy", type=int, help="number of synthetic clips")
    p.add_argument("--clip-seconds", type=float, help="toy clip length (default 1.0, or the config's)")
    p.add_argument("--effects", type=_names, help="comma-separated effect names to evaluate (default: every attack row)")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--removal", type=_fractions, help="comma-separated segment-removal fractions")

    p = sub.add_parser("scheduler-report", parents=[common], help="dump a scheduler state file")
    p.add_argument("state")

    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _load_clip(path: str) -> AudioClip:
    return load_wav(path, settings.SAMPLE_RATE)


def _seed(args: argparse.Namespace, default: int = 0) -> int:
    return args.seed if args.seed is not None else default


def _cmd_embed(args: argparse.Namespace) -> int:
    bundle = models_from_checkpoint(args.model, settings.DEVICE)
    clip = _load_clip(args.input)
    n_bits = bundle.n_bits
    message = (
        message_from_hex(args.message, n_bits) if args.message
        else MessageBits.random(n_bits, RandomSource(_seed(args)))
    )
    watermarked, residual = embed(bundle.generator, clip, message)
    save_wav(watermarked, args.out)
    if args.residual_out:
        save_wav(residual, args.residual_out)
    print(json.dumps({"message": message.to_hex(), "bits": list(message.bits), "out": args.out}))
    return 0


def _cmd_detect(args: argparse.Namespace) -> int:
    bundle = models_from_checkpoint(args.model, settings.DEVICE)
    clip = _load_clip(args.input)
    mask = load_mask_json(args.mask) if args.mask else None
    probs, message = detect(bundle.detector, clip, mask)

    batched = torch.from_numpy(probs).unsqueeze(0)
    frame_mask = None
    if mask is not None:
        frame_mask = pool_mask_to_frames(mask.binarize().to_tensor().unsqueeze(0), probs.shape[-1])
    mean = aggregate_bits(batched, frame_mask)[0]
    confidence = [round(float(abs(2.0 * p - 1.0)), 6) for p in mean]

    payload = {"bits": list(message.bits), "hex": message.to_hex(), "per_bit_confidence": confidence}
    Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    print(json.dumps(payload))
    return 0


def _cmd_locate(args: argparse.Namespace) -> int:
    bundle = models_from_checkpoint(args.model, settings.DEVICE)
    clip = _load_clip(args.input)
    mask = locate(bundle.locator, clip)
    save_mask_json(mask, args.out)
    logger.info("Located watermark in %.1f%% of %d samples", 100 * float(mask.binarize().values.mean()), len(mask))
    return 0


def _cmd_attack(args: argparse.Namespace) -> int:
    steps = getattr(args, "steps", None) or []
    if not steps:
        raise WaveVerifyError("attack needs at least one --effect")
    clip = _load_clip(args.input)
    mask = load_mask_json(args.mask_in) if args.mask_in else mask_full(clip.num_samples, 1)
    chain = [EffectStep(name, params) for name, params in steps]
    attacked, out_mask = apply_chain(clip, mask, chain, RandomSource(_seed(args)), [clip.to_tensor()])
    save_wav(attacked, args.out)
    if args.mask_out:
        save_mask_json(out_mask, args.mask_out)
    logger.info("Applied %s → %s", " → ".join(step.label() for step in chain), args.out)
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    overrides = {"seed": args.seed} if args.seed is not None else {}
    config = load_training_config(args.config, **overrides)
    corpus = corpus_for(config)
    if args.resume:
        trainer = Trainer.from_checkpoint(load_checkpoint(args.resume), corpus, args.run_dir)
    else:
        trainer = Trainer(config, corpus, args.run_dir)
    best = trainer.train()
    print(json.dumps({"iteration": best.iteration, "best": best.best, "run_dir": str(trainer.run_dir)}))
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_training_config(args.config) if args.config else None
    seed = _seed(args, config.seed if config else 0)
    sr = config.sample_rate if config else settings.SAMPLE_RATE
    bundle = models_from_checkpoint(args.model, config.device if config else settings.DEVICE)

    if args.toy:
        seconds = args.clip_seconds or (config.clip_seconds if config else 1.0)
        length = int(round(seconds * sr))
        clips = [AudioClip.from_tensor(t, sr) for t in toy_clips(args.toy, length, sr, seed)]
    elif args.clips:
        paths = sorted(Path(args.clips).glob("*.wav"))
        clips = [load_wav(p, sr, resample=True, downmix=True) for p in paths]
    else:
        clips = [AudioClip.from_tensor(t, sr) for t in corpus_for(config).validation_batch()]

    names = args.effects or (list(config.effects) if config else [])
    attacks = attacks_for(names) if names else default_attacks()
    report = evaluate(bundle, clips, attacks, RandomSource(seed), model_id=bundle.model_id)
    print(report.render_table())
    output = report.model_dump()
    if args.removal:
        sweep = removal_sweep(bundle, clips, args.removal, RandomSource(seed))
        output["removal"] = {f"{k:g}": v for k, v in sweep.items()}
        for fraction, score in sweep.items():
            print(f"removal {fraction:>4.0%}  MIoU {score:.3f}")
    if args.out:
        Path(args.out).write_text(json.dumps(output, indent=2), encoding="utf-8")
    return 0



def _cmd_scheduler_report(args: argparse.Namespace) -> int:
    print(json.dumps(scheduler_report(load_scheduler_state(args.state)), indent=2))
    return 0


_COMMANDS = {
    "embed": _cmd_embed,
    "detect": _cmd_detect,
    "locate": _cmd_locate,
    "attack": _cmd_attack,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "scheduler-report": _cmd_scheduler_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and not (args.clips or args.toy or args.config):
        parser.error("evaluate needs --clips, --toy or --config")
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )
    if settings.NUM_THREADS:
        torch.set_num_threads(settings.NUM_THREADS)
    try:
        return _COMMANDS[args.command](args)
    except (WaveVerifyError, OSError) as exc:
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"waveverify {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
