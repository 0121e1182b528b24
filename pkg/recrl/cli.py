"""
Command-line entry point: preprocess -> train -> evaluate -> report, plus a synthetic-log generator.

Settings come from RunConfig defaults, then an optional flat YAML file (--config), then flags;
every RunConfig field has a kebab-case flag.
"""
import argparse
import logging
import os
import sys
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import pandas as pd
import yaml

from recrl.data.cache import PreprocessedDataset, read_cache, write_cache
from recrl.data.dataset import CLICK_REWARD, PURCHASE_REWARD, WINDOW, filter_and_split
from recrl.data.events import Behavior, DatasetPreset, FormatSpec, read_events_frame
from recrl.data.synthetic import SyntheticConfig, write_synthetic
from recrl.evaluation.evaluate import EvalConfig, evaluate
from recrl.evaluation.metrics import DEFAULT_KS, MetricsReport, aggregate_reports
from recrl.evaluation.report import report_stem, write_report
from recrl.exceptions import (
    CheckpointError,
    ConfigError,
    ConfigMismatchError,
    DataFormatError,
    IndexLookupError,
    NegativeSamplingError,
    NumericError,
)
from recrl.learning.config import TrainConfig
from recrl.learning.trainer import CHECKPOINT_DIR, FINAL_CHECKPOINT, MCRLTrainer
from recrl.models.encoders import EncoderKind
from recrl.models.networks import MCRLNetworks, load_checkpoint
from recrl.utils import ListEnum, config_digest, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

OUTPUT_ROOT_ENV = "RECRL_OUTPUT_ROOT"
CONFIG_FILE = "config.yaml"
EVAL_SPLITS = ("validation", "test")


class Command(str, ListEnum):
    PREPROCESS = "preprocess"
    TRAIN = "train"
    EVALUATE = "evaluate"
    REPORT = "report"
    SYNTH = "synth"


def default_output_root() -> str:
    return os.environ.get(OUTPUT_ROOT_ENV, "runs")


DATA_FIELDS = (
    "preset",
    "delimiter",
    "has_header",
    "behavior_map",
    "min_item_freq",
    "min_session_len",
    "split_ratios",
    "sample_sessions",
    "data_seed",
    "window",
    "click_reward",
    "purchase_reward",
)
MODEL_FIELDS = (
    "encoder",
    "layer_norm",
    "gamma",
    "expectile",
    "temperature",
    "alpha",
    "num_negatives",
    "batch_size",
    "learning_rate",
    "polyak",
    "total_steps",
    "no_reward_model",
    "no_transition_model",
    "no_contrastive",
    "reward_reweight",
    "clamp_weight",
    "grad_through_zprime",
    "supervised",
)


@dataclass
class RunConfig:
    """Every setting of an experiment, from the raw log to the evaluation protocol."""

    # data
    raw_path: Optional[str] = None
    preset: str = DatasetPreset.GENERIC.value
    delimiter: Optional[str] = None
    has_header: Optional[bool] = None
    behavior_map: Optional[Dict[str, str]] = None
    cache_path: Optional[str] = None
    min_item_freq: int = 3
    min_session_len: int = 3
    split_ratios: List[int] = field(default_factory=lambda: [8, 1, 1])
    sample_sessions: Optional[int] = None
    data_seed: int = 0
    window: int = WINDOW
    click_reward: float = CLICK_REWARD
    purchase_reward: float = PURCHASE_REWARD
    # model and learning
    encoder: str = EncoderKind.GRU.value
    layer_norm: bool = True
    gamma: float = 0.5
    expectile: float = 0.7
    temperature: float = 1.0
    alpha: float = 1.0
    num_negatives: int = 30
    batch_size: int = 256
    learning_rate: float = 0.005
    polyak: float = 0.005
    total_steps: int = 2000
    # ablations
    no_reward_model: bool = False
    no_transition_model: bool = False
    no_contrastive: bool = False
    reward_reweight: bool = False
    clamp_weight: bool = False
    grad_through_zprime: bool = False
    supervised: bool = False
    # evaluation
    ks: List[int] = field(default_factory=lambda: list(DEFAULT_KS))
    eval_split: str = "test"
    eval_batch_size: int = 512
    exclude_seen_at_eval: bool = False
    # run
    output_dir: str = field(default_factory=default_output_root)
    seeds: List[int] = field(default_factory=lambda: [0])
    checkpoint_every: int = 0
    log_every: int = 100

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown config key(s): {', '.join(unknown)}.")
        return cls(**dict(values))

    @classmethod
    def load(
        cls, path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None
    ) -> "RunConfig":
        """Defaults, then the YAML file, then the non-None overrides."""
        values: Dict[str, Any] = {}
        if path is not None:
            with open(path, "r", encoding="utf-8") as handle:
                loaded = yaml.safe_load(handle) or {}
            if not isinstance(loaded, dict):
                raise ConfigError(f"{path}: expected a flat key-value mapping.")
            values.update(loaded)
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        config = cls.from_mapping(values)
        config.validate()
        return config

    def validate(self) -> None:
        if self.preset not in DatasetPreset.list():
            raise ConfigError(f"preset must be one of {DatasetPreset.list()}, got {self.preset!r}.")
        if self.encoder not in EncoderKind.list():
            raise ConfigError(f"encoder must be one of {EncoderKind.list()}, got {self.encoder!r}.")
        if len(self.split_ratios) != 3 or sum(self.split_ratios) != 10 or min(self.split_ratios) < 0:
            raise ConfigError(f"split_ratios must be three ints summing to 10, got {self.split_ratios}.")
        if self.min_item_freq < 1 or self.min_session_len < 1:
            raise ConfigError("min_item_freq and min_session_len must be positive.")
        if self.window < 1:
            raise ConfigError(f"window must be positive, got {self.window}.")
        if self.eval_split not in EVAL_SPLITS:
            raise ConfigError(f"eval_split must be one of {EVAL_SPLITS}, got {self.eval_split!r}.")
        if not self.seeds:
            raise ConfigError("seeds must name at least one seed.")
        if self.behavior_map is not None and not set(self.behavior_map.values()) <= set(
            Behavior.list()
        ):
            raise ConfigError(f"behavior_map values must be in {Behavior.list()}.")
        self.train_config(self.seeds[0]).validate()
        self.eval_config().validate()

    def format_spec(self) -> FormatSpec:
        base = FormatSpec.preset(self.preset)
        return FormatSpec(
            delimiter=self.delimiter if self.delimiter is not None else base.delimiter,
            has_header=self.has_header if self.has_header is not None else base.has_header,
            columns=base.columns,
            behavior_tokens=(
                {token: Behavior(b) for token, b in self.behavior_map.items()}
                if self.behavior_map is not None
                else base.behavior_tokens
            ),
            ignored_tokens=base.ignored_tokens,
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma,
            expectile=self.expectile,
            temperature=self.temperature,
            alpha=self.alpha,
            num_negatives=self.num_negatives,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            polyak=self.polyak,
            total_steps=self.total_steps,
            seed=seed,
            use_reward_model=not self.no_reward_model,
            use_transition_model=not self.no_transition_model,
            contrastive=not self.no_contrastive,
            reward_reweight=self.reward_reweight,
            clamp_weight=self.clamp_weight,
            grad_through_next_state=self.grad_through_zprime,
            supervised=self.supervised,
        )

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            ks=tuple(self.ks),
            batch_size=self.eval_batch_size,
            exclude_seen=self.exclude_seen_at_eval,
            click_reward=self.click_reward,
            purchase_reward=self.purchase_reward,
        )

    def data_digest(self) -> str:
        values = asdict(self)
        return config_digest({name: values[name] for name in DATA_FIELDS})

    def model_digest(self, seed: int) -> str:
        values = asdict(self)
        payload = {name: values[name] for name in DATA_FIELDS + MODEL_FIELDS}
        payload["seed"] = seed
        return config_digest(payload)

    def resolved_cache_path(self) -> Path:
        if self.cache_path is not None:
            return Path(self.cache_path)
        return Path(self.output_dir) / "dataset.srlf"

    def run_dir(self, seed: int) -> Path:
        return Path(self.output_dir) / f"seed_{seed}"

    def save(self, path: Path, **extra: Any) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            yaml.safe_dump({**asdict(self), **extra}, handle, sort_keys=True)


class RecRLArgumentParser(argparse.ArgumentParser):
    """Exit with the usage code on bad arguments."""

    def error(self, message: str) -> typing.NoReturn:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_mapping(text: str) -> Dict[str, str]:
    """"view=click,addtocart=purchase" -> {"view": "click", "addtocart": "purchase"}."""
    pairs = [item.split("=", 1) for item in text.split(",") if item]
    if any(len(pair) != 2 for pair in pairs):
        raise argparse.ArgumentTypeError(f"Expected token=behavior pairs, got {text!r}.")
    return {key.strip(): value.strip() for key, value in pairs}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Flat YAML file of RunConfig fields.")
    hints = typing.get_type_hints(RunConfig)
    for config_field in fields(RunConfig):
        flag = "--" + config_field.name.replace("_", "-")
        hint = hints[config_field.name]
        if typing.get_origin(hint) is typing.Union:
            hint = next(arg for arg in typing.get_args(hint) if arg is not type(None))
        origin = typing.get_origin(hint)
        if hint is bool:
            parser.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        elif origin is list:
            parser.add_argument(flag, nargs="+", type=typing.get_args(hint)[0], default=None)
        elif origin is dict:
            parser.add_argument(flag, type=_parse_mapping, default=None, metavar="TOKEN=BEHAVIOR,...")
        else:
            parser.add_argument(flag, type=hint, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = RecRLArgumentParser(add_help=False)
    common.add_argument("--log-level", default="INFO")
    common.add_argument("--quiet", action="store_true", help="Hide the progress bar.")

    parser = RecRLArgumentParser(
        prog="recrl", description="Offline RL for sequential recommendation."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    preprocess = commands.add_parser(
        Command.PREPROCESS.value, parents=[common], help="Parse, filter and split a raw event log."
    )
    _add_run_flags(preprocess)
    train = commands.add_parser(
        Command.TRAIN.value, parents=[common], help="Train one model per seed."
    )
    _add_run_flags(train)
    evaluation = commands.add_parser(
        Command.EVALUATE.value, parents=[common], help="Rank held-out events with trained models."
    )
    _add_run_flags(evaluation)
    evaluation.add_argument("--checkpoint", help="Evaluate this checkpoint instead of the seed runs.")
    evaluation.add_argument(
        "--every-checkpoint",
        action="store_true",
        help="Also evaluate the intermediate checkpoints of every seed run.",
    )

    report = commands.add_parser(
        Command.REPORT.value, parents=[common], help="Compare runs and export learning curves."
    )
    report.add_argument("run_dirs", nargs="+")
    report.add_argument("--out", default=None, help="Output directory (default <root>/report).")
    report.add_argument("--split", default="test", choices=EVAL_SPLITS)
    report.add_argument("--baseline", default=None, help="Run name to compute deltas against.")

    synth = commands.add_parser(
        Command.SYNTH.value, parents=[common], help="Write a planted-structure synthetic log."
    )
    synth.add_argument("--out", required=True)
    defaults = SyntheticConfig()
    for name in ("n_items", "n_sessions", "min_length", "max_length"):
        synth.add_argument("--" + name.replace("_", "-"), type=int, default=getattr(defaults, name))
    for name in ("purchase_rate", "follow_prob", "premium_share", "premium_lift"):
        synth.add_argument("--" + name.replace("_", "-"), type=float, default=getattr(defaults, name))
    synth.add_argument("--synth-seed", type=int, default=defaults.seed)
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    return RunConfig.load(args.config, overrides)


def _load_cache(config: RunConfig) -> PreprocessedDataset:
    dataset = read_cache(config.resolved_cache_path())
    if dataset.config_digest != config.data_digest():
        raise ConfigMismatchError(
            f"{config.resolved_cache_path()} was preprocessed with different data settings "
            f"(cache {dataset.config_digest[:12]}, config {config.data_digest()[:12]}); "
            "rerun preprocess or pass the matching config."
        )
    return dataset


def cmd_preprocess(config: RunConfig) -> PreprocessedDataset:
    """Parse the raw log, filter, split, build transitions and write the cache."""
    if config.raw_path is None:
        raise ConfigError("preprocess needs raw_path.")
    fmt = config.format_spec()
    frame = read_events_frame(config.raw_path, fmt)
    split = filter_and_split(
        frame,
        min_item_freq=config.min_item_freq,
        min_session_len=config.min_session_len,
        ratios=tuple(config.split_ratios),  # type: ignore[arg-type]
        seed=config.data_seed,
        sample_sessions=config.sample_sessions,
    )
    dataset = PreprocessedDataset.from_split(
        split,
        window=config.window,
        click_reward=config.click_reward,
        purchase_reward=config.purchase_reward,
        config_digest=config.data_digest(),
    )
    path = config.resolved_cache_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    write_cache(path, dataset, extra_meta={"format": fmt.to_dict()})
    print(pd.Series(dataset.statistics, name="count").to_string())
    print(f"cache: {path}")
    return dataset


def cmd_train(config: RunConfig, progress: bool = True) -> List[Path]:
    """Train one model per seed; returns the run directories."""
    dataset = _load_cache(config)
    run_dirs = []
    for seed in config.seeds:
        digest = config.model_digest(seed)
        run_dir = config.run_dir(seed)
        config.save(run_dir / CONFIG_FILE, seed=seed, config_digest=digest)
        nets = MCRLNetworks.initialize(
            dataset.item_count,
            kind=config.encoder,
            seed=seed,
            window=config.window,
            layer_norm=config.layer_norm,
        )
        trainer = MCRLTrainer(
            nets,
            dataset,
            config.train_config(seed),
            run_dir=run_dir,
            config_digest=digest,
            progress=progress,
            log_every=config.log_every,
            checkpoint_every=config.checkpoint_every,
        )
        reports = trainer.fit()
        if reports:
            print(f"seed {seed}: " + ", ".join(f"{k}={v:.4f}" for k, v in reports[-1].losses().items()))
        run_dirs.append(run_dir)
    return run_dirs


def _evaluate_checkpoint(
    path: Path, config: RunConfig, dataset: PreprocessedDataset
) -> MetricsReport:
    nets, meta = load_checkpoint(path)
    seed = int(meta.get("seed", 0))
    expected = config.model_digest(seed)
    if meta.get("config_digest") != expected:
        raise ConfigMismatchError(
            f"{path} was trained under config {str(meta.get('config_digest'))[:12]}, "
            f"the given config resolves to {expected[:12]} for seed {seed}; "
            "evaluate with the config the model was trained with."
        )
    if nets.item_count != dataset.item_count:
        raise CheckpointError(
            f"{path} scores {nets.item_count} items, the cache holds {dataset.item_count}."
        )
    step = meta.get("step")
    report = evaluate(
        nets,
        dataset.table(config.eval_split),
        config.eval_config(),
        split=config.eval_split,
        seed=seed,
        config_digest=expected,
        step=None if step is None else int(step),
    )
    stem = report_stem(path, config.eval_split)
    report.save(path.parent / f"{stem}.json")
    metrics_csv = path.parent / f"{stem.replace('report', 'metrics', 1)}.csv"
    report.to_frame().to_csv(metrics_csv, index=False)
    return report


def cmd_evaluate(
    config: RunConfig, checkpoint: Optional[str] = None, every_checkpoint: bool = False
) -> MetricsReport:
    """Evaluate one checkpoint, or every seed run, and aggregate across seeds.

    With ``every_checkpoint`` the intermediate checkpoints of each seed run are evaluated too;
    their reports feed the metric curves of ``recrl report``.
    """
    dataset = _load_cache(config)
    if checkpoint is not None:
        paths = [Path(checkpoint)]
    else:
        paths = [config.run_dir(seed) / FINAL_CHECKPOINT for seed in config.seeds]
        if every_checkpoint:
            for seed in config.seeds:
                for path in sorted((config.run_dir(seed) / CHECKPOINT_DIR).glob("step_*.srlc")):
                    _evaluate_checkpoint(path, config, dataset)
    reports = [_evaluate_checkpoint(path, config, dataset) for path in paths]
    if len(reports) == 1:
        result = reports[0]
    else:
        result = aggregate_reports(reports)
        out_dir = Path(config.output_dir)
        result.save(out_dir / f"report_{config.eval_split}_mean.json")
        result.to_frame().to_csv(out_dir / f"metrics_{config.eval_split}_mean.csv", index=False)
    print(result.to_frame().to_string(index=False))
    return result


def cmd_report(
    run_dirs: Sequence[str],
    out: Optional[str] = None,
    split: str = "test",
    baseline: Optional[str] = None,
) -> Dict[str, Path]:
    """Comparison table and learning curves of the given runs."""
    out_dir = out if out is not None else str(Path(default_output_root()) / "report")
    written = write_report(run_dirs, out_dir, split=split, baseline=baseline)
    print(written["comparison_txt"].read_text(encoding="utf-8"))
    return written


def cmd_synth(args: argparse.Namespace) -> Path:
    cfg = SyntheticConfig(
        n_items=args.n_items,
        n_sessions=args.n_sessions,
        purchase_rate=args.purchase_rate,
        follow_prob=args.follow_prob,
        premium_share=args.premium_share,
        premium_lift=args.premium_lift,
        min_length=args.min_length,
        max_length=args.max_length,
        seed=args.synth_seed,
    )
    try:
        cfg.validate()
    except ValueError as err:
        raise ConfigError(str(err)) from err
    frame = write_synthetic(args.out, cfg)
    print(f"{len(frame)} events written to {args.out}")
    return Path(args.out)


def _dispatch(args: argparse.Namespace) -> None:
    command = Command(args.command)
    if command is Command.SYNTH:
        cmd_synth(args)
    elif command is Command.REPORT:
        cmd_report(args.run_dirs, out=args.out, split=args.split, baseline=args.baseline)
    else:
        config = _run_config(args)
        if command is Command.PREPROCESS:
            cmd_preprocess(config)
        elif command is Command.TRAIN:
            cmd_train(config, progress=not args.quiet)
        else:
            cmd_evaluate(config, checkpoint=args.checkpoint, every_checkpoint=args.every_checkpoint)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run a command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        # argparse exits 2 on bad usage, which collides with EXIT_DATA
        return EXIT_OK if not exit_.code else EXIT_USAGE
    setup_logging(args.log_level)
    try:
        _dispatch(args)
    except ConfigError as err:
        logger.error("%s", err)
        return EXIT_USAGE
    except NumericError as err:
        logger.error("Numeric abort: %s", err)
        return EXIT_NUMERIC
    except (
        DataFormatError,
        IndexLookupError,
        NegativeSamplingError,
        CheckpointError,
        OSError,
    ) as err:
        logger.error("%s", err)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
