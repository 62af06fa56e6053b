"""
Command-line entry point

Every subcommand works inside one workspace directory (--out):

    corpus/                       synthetic corpus (manifest, sequences, metadata)
    checkpoints/predictor.sgck    predictor weights, optimizer state and EMA shadow
    checkpoints/backtranslator.sgck
    training.log                  one tab-delimited line per epoch
    reports/metrics.txt           last evaluation report
    generated/                    generated sequence files
    frames/                       rendered SVG frames and PDF strips
"""

import sys
from contextlib import nullcontext
from dataclasses import dataclass, fields
from pathlib import Path

import click
from pydantic import ValidationError

from src.config import Config, get_config, load_config
from src.exceptions import ContractError, SignflowError
from src.factory import Pipeline, create_pipeline
from src.models.corpus import CorpusSample
from src.models.sequence import Modality, SignSequence, TextTokens
from src.models.settings import GenerationConfig
from src.services.checkpoint_service import describe_checkpoint, load_checkpoint, read_checkpoint, save_checkpoint
from src.services.corpus_service import CorpusService, SyntheticCorpus, synthesize_sample
from src.services.experiment_service import ExperimentService, format_rows
from src.services.sequence_io import deserialize_sequence, serialize_sequence
from src.utils.logging_config import get_logger, init_cli_logging

logger = get_logger(__name__)

EXPERIMENTS = ("steps", "ecl", "unpaired", "modality", "averaging", "alignment")


@dataclass
class Workspace:
    root: Path

    @property
    def corpus_dir(self) -> Path:
        return self.root / "corpus"

    @property
    def predictor_path(self) -> Path:
        return self.root / "checkpoints" / "predictor.sgck"

    @property
    def backtranslator_path(self) -> Path:
        return self.root / "checkpoints" / "backtranslator.sgck"

    @property
    def training_log(self) -> Path:
        return self.root / "training.log"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def generated_dir(self) -> Path:
        return self.root / "generated"

    @property
    def frames_dir(self) -> Path:
        return self.root / "frames"


@dataclass
class RunOptions:
    """Flags shared by every subcommand"""

    config_path: str | None
    preset: str | None
    seed: int | None
    epochs: int | None
    steps: int | None
    no_ecl: bool
    averaged: int | None
    out: Path

    @property
    def workspace(self) -> Workspace:
        return Workspace(self.out)

    def overrides(self) -> dict:
        values = {
            "seed": self.seed,
            "epochs": self.epochs,
            "diffusion_steps": self.steps,
            "num_averaged": self.averaged,
        }
        if self.no_ecl:
            values["lambda_ecl"] = 0.0
        return {key: value for key, value in values.items() if value is not None}

    def resolve(self, base: Config | None = None) -> Config:
        """
        Flags win over the --config file, which wins over the stored or preset configuration

        A stored configuration still takes threads and logging from the current environment.
        """
        if base is None or self.config_path is not None:
            config = load_config(self.config_path, self.overrides(), self.preset)
        else:
            config = base.with_env()
            config = config.with_overrides(**self.overrides()) if self.overrides() else config
        init_cli_logging(config, enable_file=config.log_dir is not None)
        return config


def run_options(func):
    """Attach the shared flags to a subcommand"""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="key=value configuration file"),
        click.option("--preset", type=click.Choice(["default", "fidelity", "testing"]), help="Configuration preset"),
        click.option("--seed", type=click.IntRange(min=0), help="Master seed"),
        click.option("--epochs", type=click.IntRange(min=0), help="Training epochs"),
        click.option("--steps", type=click.IntRange(min=0), help="Diffusion refinement steps H"),
        click.option("--no-ecl", is_flag=True, help="Disable the consistency loss (lambda_ecl = 0)"),
        click.option("--averaged", type=click.IntRange(min=1), help="Generations averaged per sample"),
        click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=Path("signflow_run")),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _options(kwargs: dict) -> RunOptions:
    return RunOptions(**{key: kwargs.pop(key) for key in [f.name for f in fields(RunOptions)]})


def _load_corpus(ws: Workspace, preset: str | None) -> SyntheticCorpus:
    return CorpusService(get_config(preset)).load_corpus(ws.corpus_dir)


def _load_pipeline(opts: RunOptions, require_backtranslator: bool = False) -> tuple[Pipeline, SyntheticCorpus, bool]:
    """
    Rebuild the pipeline stored in the workspace

    Returns:
        (pipeline, corpus, whether predictor weights were restored with an EMA flag)
    """
    ws = opts.workspace
    corpus = _load_corpus(ws, opts.preset)
    base = corpus.config
    if ws.predictor_path.is_file():
        manifest, _ = read_checkpoint(ws.predictor_path)
        base = Config.from_snapshot(manifest.config)
    config = opts.resolve(base)
    pipeline = create_pipeline(config, corpus)

    use_ema = False
    if ws.predictor_path.is_file():
        manifest = load_checkpoint(
            ws.predictor_path, pipeline.model, pipeline.trainer.optimizer, pipeline.trainer.ema, use_ema=False
        )
        pipeline.trainer.epoch = manifest.epoch
        use_ema = manifest.ema
    else:
        logger.warning("No predictor checkpoint found; using untrained weights")

    if ws.backtranslator_path.is_file():
        load_checkpoint(ws.backtranslator_path, pipeline.backtranslation.translator, use_ema=False)
        pipeline.backtranslation.trained = True
    elif require_backtranslator:
        logger.warning("No back-translator checkpoint found")
    return pipeline, corpus, use_ema


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """signflow: multimodal spoken-to-sign generation on a synthetic corpus"""


@cli.command()
@run_options
def synth(**kwargs):
    """Generate the synthetic corpus"""
    opts = _options(kwargs)
    config = opts.resolve()
    corpus = CorpusService(config).build_corpus()
    path = CorpusService(config).save_corpus(corpus, opts.workspace.corpus_dir)
    split = corpus.split
    click.echo(
        f"synthesized {len(corpus.samples)} samples "
        f"(train={len(split.train)} dev={len(split.dev)} test={len(split.test)}, "
        f"audio missing={len(corpus.audio_missing)}) -> {path}"
    )


@cli.command()
@run_options
def train(**kwargs):
    """Train the predictor with the full objective"""
    opts = _options(kwargs)
    ws = opts.workspace
    corpus = _load_corpus(ws, opts.preset)
    config = opts.resolve(corpus.config)
    pipeline = create_pipeline(config, corpus)
    reports = pipeline.fit(corpus, config.epochs, ws.training_log)
    save_checkpoint(
        ws.predictor_path,
        pipeline.model,
        config,
        pipeline.trainer.optimizer,
        pipeline.trainer.ema,
        epoch=pipeline.trainer.epoch,
    )
    if reports:
        last = reports[-1]
        click.echo(f"epoch={last.epoch} l_d={last.l_d:.6f} l_ecl={last.l_ecl:.6f} l_nce={last.l_nce:.6f} total={last.total:.6f}")
    click.echo(f"checkpoint -> {ws.predictor_path}")


@cli.command("train-bt")
@run_options
def train_bt(**kwargs):
    """Train the back-translator on clean sequences"""
    opts = _options(kwargs)
    ws = opts.workspace
    corpus = _load_corpus(ws, opts.preset)
    config = opts.resolve(corpus.config)
    pipeline = create_pipeline(config, corpus)
    pipeline.fit_backtranslator(corpus)
    save_checkpoint(
        ws.backtranslator_path, pipeline.backtranslation.translator, config, model_name="backtranslator"
    )
    accuracy = pipeline.evaluator.backtranslator_accuracy(corpus, "test")
    click.echo(f"bt_accuracy={accuracy:.6f}")
    click.echo(f"checkpoint -> {ws.backtranslator_path}")


def _sample_for(pipeline: Pipeline, corpus: SyntheticCorpus, sample_id: str | None, tokens: str | None) -> CorpusSample:
    config = pipeline.config
    if tokens is not None:
        try:
            text = TextTokens(ids=tuple(int(t) for t in tokens.replace(",", " ").split()), vocab_size=config.vocab_size)
        except (ValueError, ValidationError) as err:
            raise ContractError(f"invalid token list '{tokens}' for a vocabulary of {config.vocab_size}") from err
        return synthesize_sample(
            text, corpus.table, config.seed, with_audio=True, features=pipeline.features, sample_id="tokens"
        )
    if sample_id is None:
        sample_id = corpus.split.test[0] if corpus.split.test else next(iter(corpus.samples))
    if sample_id not in corpus.samples:
        raise ContractError(f"unknown sample id '{sample_id}'")
    return corpus.samples[sample_id]


@cli.command()
@run_options
@click.option("--modality", type=click.Choice([m.value for m in Modality]), default=Modality.TEXT.value)
@click.option("--sample", "sample_id", help="Corpus sample id (defaults to the first test sample)")
@click.option("--tokens", help="Comma-separated token ids to condition on instead of a corpus sample")
@click.option("--svg", is_flag=True, help="Render one SVG per frame")
@click.option("--pdf", is_flag=True, help="Render a PDF strip")
def generate(modality, sample_id, tokens, svg, pdf, **kwargs):
    """Generate a sign sequence from a text or audio condition"""
    opts = _options(kwargs)
    ws = opts.workspace
    pipeline, corpus, use_ema = _load_pipeline(opts)
    sample = _sample_for(pipeline, corpus, sample_id, tokens)
    gen = GenerationConfig.from_config(pipeline.config)
    evaluator = pipeline.evaluator
    condition = evaluator.condition(sample, Modality(modality))

    scope = pipeline.trainer.ema.applied() if use_ema else nullcontext()
    with scope:
        normalized = pipeline.diffusion.generate_averaged(condition.embedding, gen, modality=condition.length_modality)
    frames = corpus.normalizer.invert(normalized.frames)
    sequence = SignSequence(frames=frames, frame_rate=pipeline.config.frame_rate)
    path = serialize_sequence(sequence, ws.generated_dir / f"{sample.sample_id}_{modality}.sgsq")

    click.echo(f"sample={sample.sample_id}")
    click.echo(f"route={condition.route}")
    click.echo(f"frames={sequence.num_frames}")
    click.echo(f"path={path}")
    if svg:
        files = pipeline.renderer.render_svg_frames(normalized, ws.frames_dir / f"{sample.sample_id}_{modality}")
        click.echo(f"svg_frames={len(files)}")
    if pdf:
        strip = pipeline.renderer.render_pdf_strip(
            normalized, ws.frames_dir / f"{sample.sample_id}_{modality}.pdf", title=" ".join(sample.tokens.words)
        )
        click.echo(f"pdf={strip}")


@cli.command("eval")
@run_options
@click.option("--modality", type=click.Choice([m.value for m in Modality]), default=Modality.TEXT.value)
@click.option("--split", type=click.Choice(["train", "dev", "test"]), default="test")
@click.option("--repeats", type=click.IntRange(min=1), help="Repeated evaluations with derived seeds")
@click.option("--baseline", is_flag=True, help="Append mean-sequence and shuffled-motif baselines")
def evaluate(modality, split, repeats, baseline, **kwargs):
    """Evaluate generation on a split and write reports/metrics.txt"""
    opts = _options(kwargs)
    ws = opts.workspace
    pipeline, corpus, use_ema = _load_pipeline(opts, require_backtranslator=True)
    report = pipeline.evaluator.evaluate_run(
        corpus, split, modality=Modality(modality), repeats=repeats, use_ema=use_ema
    )
    text = report.to_lines()
    if baseline:
        text += "".join(f"baseline_{line}\n" for line in pipeline.evaluator.baseline_report(corpus, split).to_lines().splitlines())
    ws.reports_dir.mkdir(parents=True, exist_ok=True)
    (ws.reports_dir / "metrics.txt").write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


@cli.command()
@run_options
@click.argument("target", required=False, type=click.Path(path_type=Path))
def inspect(target, **kwargs):
    """Summarize a checkpoint, corpus or sequence file (defaults to the workspace)"""
    opts = _options(kwargs)
    opts.resolve(get_config(opts.preset))
    ws = opts.workspace
    targets = [target] if target is not None else [ws.predictor_path, ws.backtranslator_path, ws.corpus_dir]
    found = False
    for path in targets:
        if not path.exists():
            continue
        found = True
        click.echo(f"[{path}]")
        if path.is_dir():
            corpus = CorpusService(get_config(opts.preset)).load_corpus(path)
            split = corpus.split
            click.echo(f"samples={len(corpus.samples)}")
            click.echo(f"train={len(split.train)}\ndev={len(split.dev)}\ntest={len(split.test)}")
            click.echo(f"audio_missing={len(corpus.audio_missing)}")
            click.echo(f"vocab_size={corpus.table.vocab_size}\nseed={corpus.config.seed}")
        elif path.suffix == ".sgsq":
            sequence = deserialize_sequence(path)
            click.echo(f"frames={sequence.num_frames}\njoints={sequence.num_joints}\ncoords={sequence.num_coords}")
            click.echo(f"frame_rate={sequence.frame_rate:g}")
        else:
            click.echo(describe_checkpoint(path), nl=False)
    if not found:
        raise ContractError(f"nothing to inspect under {target or ws.root}")


@cli.command()
@run_options
@click.option("--experiment", type=click.Choice(EXPERIMENTS), required=True)
@click.option("--seeds", default="0", help="Comma-separated seeds")
@click.option("--bt-epochs", type=click.IntRange(min=0), help="Back-translator epochs per corpus")
def ablate(experiment, seeds, bt_epochs, **kwargs):
    """Run an ablation study and write reports/ablation_<experiment>.txt"""
    opts = _options(kwargs)
    config = opts.resolve()
    try:
        seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    except ValueError as err:
        raise click.BadParameter(f"seeds must be integers, got '{seeds}'", param_hint="--seeds") from err
    runner = ExperimentService(config, bt_epochs=bt_epochs)
    if experiment == "steps":
        rows = runner.run_step_ablation(seeds=seed_list)
    elif experiment == "ecl":
        rows = runner.run_ecl_ablation(seeds=seed_list)
    elif experiment == "unpaired":
        rows = runner.run_unpaired_sweep(seeds=seed_list)
    elif experiment == "modality":
        rows = [row for seed in seed_list for row in runner.run_modality_ablation(seed)]
    elif experiment == "alignment":
        rows = runner.run_emergent_alignment(seeds=seed_list)
    else:
        rows = [row for seed in seed_list for row in runner.run_averaging_study(seed=seed)]
    text = format_rows(rows)
    reports = opts.workspace.reports_dir
    reports.mkdir(parents=True, exist_ok=True)
    (reports / f"ablation_{experiment}.txt").write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


def cli_main(argv: list[str] | None = None) -> int:
    """
    Run the CLI and return its exit code

    Returns:
        0 on success, 1 on a pipeline error (one-line diagnostic on stderr), 2 on usage errors
    """
    try:
        result = cli.main(args=argv, prog_name="signflow", standalone_mode=False)
    except click.UsageError as err:
        err.show()
        return 2
    except click.ClickException as err:
        err.show()
        return err.exit_code
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except SignflowError as err:
        click.echo(f"error: {err}", err=True)
        return 1
    except ValidationError as err:
        click.echo(f"error: {err.errors()[0]['msg']}", err=True)
        return 1
    except OSError as err:
        click.echo(f"error: {err}", err=True)
        return 1
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(cli_main())
