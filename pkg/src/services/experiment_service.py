"""
Ablation runners: diffusion steps, consistency loss, unpaired data, modalities, averaging, alignment
"""

from collections.abc import Sequence
from typing import Any

import numpy as np

from src.config import Config
from src.exceptions import ContractError
from src.factory import Pipeline, create_pipeline
from src.models.reports import MetricReport
from src.models.sequence import Modality
from src.models.settings import GenerationConfig
from src.services.binding_service import emergent_alignment_score
from src.services.corpus_service import CorpusService, SyntheticCorpus, derive_seed
from src.services.encoding_service import EncodingService
from src.services.evaluation_service import repeat_seed
from src.services.metrics_service import keypoint_mse
from src.utils.logging_config import PerformanceLogger, get_logger

logger = get_logger(__name__)

Row = dict[str, Any]
ROW_METRICS = ("bleu1", "bleu4", "rouge_l_f1", "keypoint_mse", "dtw", "bt_accuracy")


def format_rows(rows: Sequence[Row]) -> str:
    """One line per row of space-separated key=value pairs"""
    lines = []
    for row in rows:
        parts = []
        for key, value in row.items():
            parts.append(f"{key}={value:.6f}" if isinstance(value, float) else f"{key}={value}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def _row(experiment: str, seed: int, report: MetricReport, **labels: Any) -> Row:
    row: Row = {"experiment": experiment, "seed": seed, **labels}
    for key in ROW_METRICS:
        value = getattr(report, key)
        if value is not None:
            row[key] = float(value)
    return row


class ExperimentService:
    """Trains fresh pipelines per variant and evaluates them on the test split"""

    def __init__(self, config: Config, epochs: int | None = None, bt_epochs: int | None = None):
        self.config = config
        self.epochs = config.epochs if epochs is None else epochs
        self.bt_epochs = config.bt_epochs if bt_epochs is None else bt_epochs
        self._corpora: dict[tuple, SyntheticCorpus] = {}
        self._translators: dict[tuple, dict[str, np.ndarray]] = {}

    def _corpus(self, config: Config) -> SyntheticCorpus:
        key = (config.seed, config.audio_missing_fraction, config.corpus_size)
        if key not in self._corpora:
            self._corpora[key] = CorpusService(config).build_corpus()
        return self._corpora[key]

    def train_variant(self, config: Config) -> tuple[Pipeline, SyntheticCorpus]:
        """Build the corpus, train the predictor and the back-translator of one variant"""
        corpus = self._corpus(config)
        pipeline = create_pipeline(config, corpus)
        with PerformanceLogger(logger, f"variant seed={config.seed} H={config.diffusion_steps}", 600_000):
            pipeline.fit(corpus, self.epochs)
        # The back-translator only depends on the corpus, so variants sharing one reuse it
        key = (config.seed, config.audio_missing_fraction, config.corpus_size)
        if key in self._translators:
            pipeline.backtranslation.translator.load_state_dict(self._translators[key])
            pipeline.backtranslation.trained = True
        else:
            pipeline.fit_backtranslator(corpus, self.bt_epochs)
            self._translators[key] = pipeline.backtranslation.translator.state_dict()
        return pipeline, corpus

    def _evaluate(self, config: Config, **kwargs) -> MetricReport:
        pipeline, corpus = self.train_variant(config)
        return pipeline.evaluator.evaluate_run(corpus, "test", **kwargs)

    def run_step_ablation(self, steps: Sequence[int] = (0, 5, 10, 20), seeds: Sequence[int] = (0,)) -> list[Row]:
        """Held-out metrics per refinement-step count; 0 is direct regression"""
        rows = []
        for seed in seeds:
            for h in steps:
                config = self.config.with_overrides(seed=seed, diffusion_steps=h)
                rows.append(_row("steps", seed, self._evaluate(config), steps=h))
                logger.info(f"Step ablation seed={seed} H={h}: bleu1={rows[-1]['bleu1']:.4f}")
        return rows

    def run_ecl_ablation(self, seeds: Sequence[int] = (0,)) -> list[Row]:
        """Full objective against the same run with the consistency weight set to zero"""
        rows = []
        for seed in seeds:
            for label, lam in (("full", self.config.lambda_ecl), ("no_ecl", 0.0)):
                config = self.config.with_overrides(seed=seed, lambda_ecl=lam)
                rows.append(_row("ecl", seed, self._evaluate(config), variant=label))
        return rows

    def run_unpaired_sweep(self, fractions: Sequence[float] = (0.0, 0.3, 0.6), seeds: Sequence[int] = (0,)) -> list[Row]:
        """Held-out metrics as the share of audio-missing samples grows"""
        rows = []
        for seed in seeds:
            for fraction in fractions:
                config = self.config.with_overrides(seed=seed, audio_missing_fraction=fraction)
                report = self._evaluate(config, modality=Modality.AUDIO)
                rows.append(_row("unpaired", seed, report, audio_missing=float(fraction)))
        return rows

    def run_modality_ablation(self, seed: int | None = None) -> list[Row]:
        """Text, audio and mapped-text conditioning of one trained model"""
        seed = self.config.seed if seed is None else seed
        pipeline, corpus = self.train_variant(self.config.with_overrides(seed=seed))
        evaluator = pipeline.evaluator
        return [
            _row("modality", seed, evaluator.evaluate_run(corpus, "test", modality=Modality.TEXT), route="text"),
            _row("modality", seed, evaluator.evaluate_run(corpus, "test", modality=Modality.AUDIO), route="audio"),
            _row("modality", seed, evaluator.evaluate_run(corpus, "test", via_mapping=True), route="mapped"),
        ]

    def run_averaging_study(self, meta_seeds: Sequence[int] = tuple(range(30)), seed: int | None = None) -> list[Row]:
        """
        Variance across meta-seeds of the held-out keypoint MSE, for single samples and
        for `num_averaged`-sample means, from one trained model
        """
        seed = self.config.seed if seed is None else seed
        pipeline, corpus = self.train_variant(self.config.with_overrides(seed=seed))
        evaluator = pipeline.evaluator
        samples = corpus.subset("test")
        results = {}
        with pipeline.trainer.ema.applied():
            for label, count in (("single", 1), ("averaged", self.config.num_averaged)):
                scores = []
                for meta in meta_seeds:
                    base = repeat_seed(seed, meta + 1)
                    errors = []
                    for index, sample in enumerate(samples):
                        gen = GenerationConfig.from_config(
                            self.config, num_averaged=count, seed=derive_seed(base, index)
                        )
                        prediction = evaluator.generate(sample, Modality.TEXT, gen)
                        errors.append(keypoint_mse(prediction, corpus.normalized(sample)))
                    scores.append(float(np.mean(errors)))
                results[label] = scores
        return [
            {
                "experiment": "averaging",
                "seed": seed,
                "variant": label,
                "samples": count,
                "mse_mean": float(np.mean(results[label])),
                "mse_var": float(np.var(results[label])),
            }
            for label, count in (("single", 1), ("averaged", self.config.num_averaged))
        ]

    def alignment_embeddings(
        self, pipeline: Pipeline, corpus: SyntheticCorpus, split: str
    ) -> tuple[np.ndarray, np.ndarray]:
        """Unit-norm (text, audio) embedding rows of the split's samples that carry audio"""
        encoder = EncodingService(pipeline.model)
        text_rows, audio_rows = [], []
        for sample in corpus.subset(split):
            if sample.audio is None:
                continue
            text_rows.append(encoder.encode_text(pipeline.features.text(sample.tokens)).unit().values)
            audio_rows.append(encoder.encode_audio(sample.audio).unit().values)
        if len(text_rows) < 2:
            raise ContractError(f"split '{split}' holds fewer than two samples with audio")
        return np.stack(text_rows), np.stack(audio_rows)

    def run_emergent_alignment(
        self, pairs: Sequence[str] = ("TS", "AS"), seeds: Sequence[int] = (0,), split: str = "test"
    ) -> list[Row]:
        """
        Held-out text-audio alignment before and after training with only `pairs` bound

        The consistency weight is zeroed so text and audio meet only through the sign
        embeddings they are both bound to.
        """
        rows = []
        for seed in seeds:
            config = self.config.with_overrides(seed=seed, active_pairs=list(pairs), lambda_ecl=0.0)
            corpus = self._corpus(config)
            pipeline = create_pipeline(config, corpus)
            before = emergent_alignment_score(*self.alignment_embeddings(pipeline, corpus, split))
            with PerformanceLogger(logger, f"alignment seed={seed}", 600_000):
                pipeline.fit(corpus, self.epochs)
            after = emergent_alignment_score(*self.alignment_embeddings(pipeline, corpus, split))
            rows.append(
                {
                    "experiment": "alignment",
                    "seed": seed,
                    "pairs": "+".join(pairs),
                    "score_init": before,
                    "score_trained": after,
                    "gain": after - before,
                }
            )
            logger.info(f"Emergent alignment seed={seed}: {before:.4f} -> {after:.4f}")
        return rows
