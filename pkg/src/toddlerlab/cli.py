"""
Command-line entry point: ``toddlerlab <command> [options]``.

Exit codes: 0 on success, 1 for usage and configuration errors, 2 when
training aborts on a NaN or Inf.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence, Type, TypeVar

import numpy as np

from .agent import AgentNetwork
from .checkpoint import atomic_write_bytes
from .config import RunConfig, apply_overrides, load_config
from .dataset import class_counts, draw_scene, generate_dataset, read_dataset, write_dataset
from .environment import Playpen, evaluate_policy
from .exceptions import (
    ConfigurationException,
    NumericalException,
    ToddlerLabException,
    ValidationException,
)
from .models import Eye, ObjectClass, Regime, Task
from .provenance import write_run_metadata
from .renderer import draw_bbox, mask_to_bbox, render, save_png, silhouette_mask, to_image
from .report import RESULTS_MD, parse_results_csv, results_markdown, write_report
from .sac import MetricsRow, greedy_policy, train
from .transfer import run_matrix, train_autoencoder

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

DATASET_FILE = "dataset.tdsv"
AGENT_CHECKPOINT = "agent.ckpt"
AUTOENCODER_CHECKPOINT = "autoencoder.ckpt"
METRICS_FILE = "metrics.csv"

E = TypeVar("E", Regime, Task)


class UsageError(ToddlerLabException):
    """Bad command-line usage."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _parse_enum_list(raw: Optional[str], enum: Type[E], flag: str) -> Optional[List[E]]:
    if raw is None:
        return None
    values = []
    for item in (part.strip() for part in raw.split(",")):
        try:
            values.append(enum(item))
        except ValueError:
            choices = ", ".join(member.value for member in enum)
            raise UsageError(f"{flag}: unknown value '{item}' (choose from {choices})") from None
    return values


def _parse_seeds(raw: Optional[str]) -> Optional[List[int]]:
    if raw is None:
        return None
    try:
        return [int(part) for part in raw.split(",")]
    except ValueError:
        raise UsageError(f"--seeds: expected comma-separated integers, got '{raw}'") from None


def _effective_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    overrides: Dict[str, Any] = {"seed": args.seed}
    if getattr(args, "frames", None) is not None:
        overrides["sac.total_frames"] = args.frames
    if getattr(args, "jobs", None) is not None:
        overrides["transfer.jobs"] = args.jobs
    return apply_overrides(config, overrides)


def _run_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    if args.out is not None:
        out = Path(args.out)
    else:
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        out = Path("runs") / f"{stamp}-{config.seed}"
    out.mkdir(parents=True, exist_ok=True)
    write_run_metadata(out, config)
    return out


# --------------------------------------------------------------
# Commands
# --------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    out = _run_dir(args, config)
    dataset = generate_dataset(config.seed, args.size, config.render, config.transfer)
    path = write_dataset(out / DATASET_FILE, dataset)
    print(f"train: {len(dataset.train)}  test: {len(dataset.test)}")
    for split, samples in (("train", dataset.train), ("test", dataset.test)):
        counts = class_counts(samples)
        summary = "  ".join(f"{cls.name.lower()}={counts[cls]}" for cls in ObjectClass)
        print(f"{split} classes: {summary}")
    print(f"wrote {path}")
    return EXIT_OK


def _print_progress(row: MetricsRow) -> None:
    print(
        f"frame {row.frame}: mean_return={row.mean_return:.3f}"
        f" success_rate={row.success_rate:.2f} alpha={row.alpha:.4f}",
        flush=True,
    )


def _evaluate(network: AgentNetwork, config: RunConfig, episodes: int, seed: int) -> None:
    playpen = Playpen(config.env, config.render)
    result = evaluate_policy(playpen, greedy_policy(network), episodes, seed)
    print(
        f"eval: episodes={result.episodes} success_rate={result.success_rate:.2f}"
        f" mean_return={result.mean_return:.3f}"
    )


def _train_rl(config: RunConfig, out: Path) -> Path:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 7]))
    network = AgentNetwork.build(config.agent, config.render.resolution, rng)
    env = Playpen(config.env, config.render)
    result = train(
        env,
        network,
        config.sac,
        config.seed,
        checkpoint_path=out / AGENT_CHECKPOINT,
        metrics_path=out / METRICS_FILE,
        progress=_print_progress,
    )
    assert result.checkpoint is not None
    return result.checkpoint


def cmd_train_rl(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    out = _run_dir(args, config)
    checkpoint = _train_rl(config, out)
    print(f"wrote {checkpoint}")
    if not args.skip_eval:
        network = AgentNetwork.build(
            config.agent, config.render.resolution, np.random.default_rng(0)
        ).load(checkpoint)
        _evaluate(network, config, config.sac.eval_episodes, config.seed + 1_000_000)
    return EXIT_OK


def _train_autoencoder(config: RunConfig, out: Path) -> Path:
    result = train_autoencoder(config, config.seed, out / AUTOENCODER_CHECKPOINT)
    print(f"held-out mse: {result.initial_mse:.6f} -> {result.final_mse:.6f}")
    assert result.checkpoint is not None
    return result.checkpoint


def cmd_train_autoencoder(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    out = _run_dir(args, config)
    print(f"wrote {_train_autoencoder(config, out)}")
    return EXIT_OK


def cmd_transfer(args: argparse.Namespace) -> int:
    regimes = _parse_enum_list(args.regimes, Regime, "--regimes")
    tasks = _parse_enum_list(args.tasks, Task, "--tasks")
    seeds = _parse_seeds(args.seeds)
    config = _effective_config(args)
    out = _run_dir(args, config)
    dataset = read_dataset(args.dataset)
    on_demand = args.train_on_demand or config.transfer.train_on_demand

    checkpoints: Dict[Regime, Path] = {}
    for regime, given, trainer in (
        (Regime.PROPOSED, args.rl_checkpoint, _train_rl),
        (Regime.AUTOENCODER, args.ae_checkpoint, _train_autoencoder),
    ):
        if regime not in (regimes or config.transfer.regimes):
            continue
        if given is not None:
            checkpoints[regime] = Path(given)
        elif on_demand:
            logger.info("No %s checkpoint given; training one", regime.value)
            checkpoints[regime] = trainer(config, out)

    results = run_matrix(config, dataset, checkpoints, regimes, tasks, seeds, config.transfer.jobs)
    rows = write_report(out, results, config.report)
    print((out / RESULTS_MD).read_text(encoding="utf-8"), end="")
    print(f"{len(rows)} result rows written to {out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    network = AgentNetwork.build(
        config.agent, config.render.resolution, np.random.default_rng(0)
    ).load(args.checkpoint)
    _evaluate(network, config, args.episodes or config.sac.eval_episodes, config.seed)
    return EXIT_OK


def cmd_render_sample(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    out = _run_dir(args, config)
    camera = config.render.camera()
    rng = np.random.default_rng(config.seed)
    if args.empty_scene:
        observation = render(config.render.empty_scene(), camera)
        images = {eye: to_image(observation, eye) for eye in Eye}
        print("empty scene")
    else:
        object_class = (
            ObjectClass.coerce(args.object)
            if args.object is not None
            else ObjectClass(int(rng.integers(len(ObjectClass))))
        )
        scene, sample = draw_scene(object_class, rng, config.render, config.transfer)
        observation = render(scene, camera)
        images = {}
        for eye in Eye:
            bbox = mask_to_bbox(silhouette_mask(scene, camera, scene.objects[0].id, eye))
            image = to_image(observation, eye)
            images[eye] = draw_bbox(image, bbox) if bbox is not None else image
        cx, cy, w, h = sample.bbox.as_tuple()
        print(f"class: {sample.object_class.name.lower()}")
        print(f"distance: {sample.distance:.4f}")
        print(f"bbox: cx={cx:.4f} cy={cy:.4f} w={w:.4f} h={h:.4f}")
    for eye, image in images.items():
        print(f"wrote {save_png(image, out / f'sample_{config.seed}_{eye.value}.png')}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    source = Path(args.results)
    if not source.is_file():
        raise ValidationException(f"Results file not found: {source}")
    rows = parse_results_csv(source.read_text(encoding="utf-8"))
    markdown = results_markdown(rows, config.report)
    target = Path(args.out) / RESULTS_MD if args.out is not None else source.with_suffix(".md")
    atomic_write_bytes(target, markdown.encode("utf-8"))
    print(markdown, end="")
    return EXIT_OK


# --------------------------------------------------------------
# Parser
# --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toddlerlab", description="Interaction-driven representation learning")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(
        name: str, handler: Callable[[argparse.Namespace], int], summary: str
    ) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=summary)
        p.add_argument("--config", help="TOML run config")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help="output directory (default runs/<timestamp>-<seed>)")
        p.set_defaults(handler=handler)
        return p

    gen = command("gen-data", cmd_gen_data, "generate the labeled transfer dataset")
    gen.add_argument("--size", type=int, help="number of samples (default transfer.dataset_size)")

    rl = command("train-rl", cmd_train_rl, "train the agent with soft actor-critic")
    rl.add_argument("--frames", type=int, help="overrides sac.total_frames")
    rl.add_argument("--skip-eval", action="store_true", help="no greedy evaluation afterwards")

    command("train-autoencoder", cmd_train_autoencoder, "train the autoencoder baseline")

    tr = command("transfer", cmd_transfer, "run the transfer matrix and write the report")
    tr.add_argument("--dataset", required=True, help="dataset file from gen-data")
    tr.add_argument("--rl-checkpoint", help="checkpoint from train-rl")
    tr.add_argument("--ae-checkpoint", help="checkpoint from train-autoencoder")
    tr.add_argument("--regimes", help="comma-separated subset of regimes")
    tr.add_argument("--tasks", help="comma-separated subset of tasks")
    tr.add_argument("--seeds", help="comma-separated seeds")
    tr.add_argument("--jobs", type=int, help="parallel worker processes")
    tr.add_argument("--frames", type=int, help="sac.total_frames for on-demand training")
    tr.add_argument(
        "--train-on-demand", action="store_true", help="train missing checkpoints first"
    )

    ev = command("eval", cmd_eval, "evaluate a trained agent greedily")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--episodes", type=int, help="default sac.eval_episodes")

    rs = command("render-sample", cmd_render_sample, "render one labeled sample to PNG")
    rs.add_argument("--object", choices=[cls.name.lower() for cls in ObjectClass])
    rs.add_argument("--empty-scene", action="store_true", help="no object, no overlay")

    rp = command("report", cmd_report, "render results.csv as a markdown table")
    rp.add_argument("--results", required=True, help="results.csv from transfer")
    return parser


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args.verbose)
        return int(args.handler(args))
    except NumericalException as e:
        logger.error("Training aborted: %s", e)
        return EXIT_NUMERICAL
    except ConfigurationException as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ToddlerLabException, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
