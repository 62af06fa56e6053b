"""
Evaluation harness: generation, keypoint metrics and back-translation scores
"""

from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np

from src.autograd.ema import ExponentialMovingAverage
from src.autograd.tensor import Tensor, no_grad
from src.config import Config
from src.exceptions import EvaluationError
from src.models.corpus import CorpusSample
from src.models.reports import METRIC_KEYS, BaselineReport, MetricReport
from src.models.sequence import Embedding, Modality, SignSequence
from src.models.settings import GenerationConfig
from src.services.backtranslation_service import BackTranslationService, back_translate
from src.services.corpus_service import SyntheticCorpus, derive_seed, render_tokens
from src.services.diffusion_service import DiffusionService
from src.services.encoding_service import EncodingService
from src.services.feature_service import FeatureService
from src.services.metrics_service import dtw_distance, keypoint_mse, sentence_scores
from src.services.training_service import prepare_samples
from src.utils.logging_config import PerformanceLogger, get_logger

logger = get_logger(__name__)

# Generation routes
ROUTE_TEXT = "text"
ROUTE_AUDIO = "audio"
ROUTE_MAPPED = "mapped"


@dataclass
class Condition:
    """Conditioning embedding of one sample and the path that produced it"""

    embedding: Embedding
    length_modality: Modality
    route: str


def repeat_seed(seed: int, repeat: int) -> int:
    return seed if repeat == 0 else int(np.random.SeedSequence([seed, repeat]).generate_state(1)[0])


def mean_sequence(frames: list[np.ndarray]) -> np.ndarray:
    """Framewise mean over the sequences that reach each frame index"""
    length = max(f.shape[0] for f in frames)
    total = np.zeros((length, *frames[0].shape[1:]))
    count = np.zeros(length)
    for f in frames:
        total[: f.shape[0]] += f
        count[: f.shape[0]] += 1
    return total / count[:, None, None]


def _summarize(rows: list[dict[str, float]]) -> dict[str, float]:
    return {key: float(np.mean([row[key] for row in rows])) for key in METRIC_KEYS}


class EvaluationService:
    """Scores generated sequences against held-out ground truth"""

    def __init__(
        self,
        diffusion: DiffusionService,
        features: FeatureService,
        config: Config,
        backtranslation: BackTranslationService | None = None,
        ema: ExponentialMovingAverage | None = None,
    ):
        self.diffusion = diffusion
        self.model = diffusion.model
        self.encoding = EncodingService(diffusion.model)
        self.features = features
        self.config = config
        self.backtranslation = backtranslation
        self.ema = ema

    # ------------------------------------------------------------ conditioning
    def map_to_audio(self, text_embedding: Embedding) -> Embedding:
        with no_grad():
            out = self.model.mapping(Tensor(text_embedding.values[None], dtype=self.model.dtype))
        return Embedding(values=out.data[0])

    def condition(self, sample: CorpusSample, modality: Modality, via_mapping: bool = False) -> Condition:
        """
        Conditioning embedding for `sample`

        Audio conditioning of a sample without audio goes through the mapping network
        applied to its text embedding; `via_mapping` forces that route for every sample.
        """
        if via_mapping:
            text = self.encoding.encode_text(self.features.text(sample.tokens))
            return Condition(self.map_to_audio(text), Modality.AUDIO, ROUTE_MAPPED)
        if modality == Modality.TEXT:
            return Condition(self.encoding.encode_text(self.features.text(sample.tokens)), Modality.TEXT, ROUTE_TEXT)
        if sample.audio is not None:
            return Condition(self.encoding.encode_audio(sample.audio), Modality.AUDIO, ROUTE_AUDIO)
        logger.debug(f"Sample {sample.sample_id} has no audio; using the mapped text embedding")
        text = self.encoding.encode_text(self.features.text(sample.tokens))
        return Condition(self.map_to_audio(text), Modality.AUDIO, ROUTE_MAPPED)

    def generate(
        self, sample: CorpusSample, modality: Modality, gen: GenerationConfig, via_mapping: bool = False
    ) -> SignSequence:
        """Averaged generation for one sample (normalized coordinates)"""
        condition = self.condition(sample, modality, via_mapping)
        return self.diffusion.generate_averaged(condition.embedding, gen, modality=condition.length_modality)

    # ----------------------------------------------------------------- scoring
    def _require_backtranslator(self) -> BackTranslationService:
        if self.backtranslation is None or not self.backtranslation.trained:
            raise EvaluationError("no trained back-translator available; run `signflow train-bt` first")
        return self.backtranslation

    def score(self, prediction: SignSequence, reference: np.ndarray, tokens: list[int]) -> dict[str, float]:
        """Keypoint and back-translation metrics of one normalized prediction"""
        translator = self._require_backtranslator().translator
        hypothesis = back_translate(prediction, translator)
        row = sentence_scores(list(hypothesis.ids), tokens)
        row["keypoint_mse"] = keypoint_mse(prediction, reference)
        row["dtw"] = dtw_distance(prediction, reference)
        return row

    def _run_parallel(self, fn, items: list) -> list:
        workers = max(1, min(self.config.threads, len(items)))
        if workers == 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    def _samples(self, corpus: SyntheticCorpus, split: str) -> list[CorpusSample]:
        samples = corpus.subset(split)
        if not samples:
            raise EvaluationError(f"split '{split}' holds no samples")
        return samples

    def evaluate_run(
        self,
        corpus: SyntheticCorpus,
        split: str = "test",
        gen: GenerationConfig | None = None,
        modality: Modality = Modality.TEXT,
        repeats: int | None = None,
        use_ema: bool = True,
        via_mapping: bool = False,
    ) -> MetricReport:
        """
        Generate every sample of a split and report metric means

        Args:
            corpus: Corpus holding the split
            split: "train", "dev" or "test"
            gen: Sampling options (defaults from the configuration)
            modality: Conditioning modality
            repeats: Repeated evaluations with derived seeds; the report holds their mean
                and, for more than one repeat, their standard deviation
            use_ema: Swap in the EMA shadow weights while generating
            via_mapping: Condition every sample on its mapped text embedding

        Returns:
            MetricReport with back-translator accuracy and ground-truth ceiling attached

        Raises:
            EvaluationError: if no trained back-translator is available
        """
        self._require_backtranslator()
        gen = gen or GenerationConfig.from_config(self.config)
        repeats = repeats or self.config.eval_repeats
        samples = self._samples(corpus, split)
        scope = self.ema.applied() if (use_ema and self.ema is not None) else nullcontext()

        runs = []
        with scope, PerformanceLogger(logger, f"evaluate {len(samples)} {split} samples x{repeats}", 60_000):
            for repeat in range(repeats):
                base = repeat_seed(gen.seed, repeat)

                def evaluate_one(indexed: tuple[int, CorpusSample], base: int = base) -> dict[str, float]:
                    index, sample = indexed
                    sample_gen = gen.model_copy(update={"seed": derive_seed(base, index)})
                    prediction = self.generate(sample, modality, sample_gen, via_mapping)
                    return self.score(prediction, corpus.normalized(sample), list(sample.tokens.ids))

                rows = self._run_parallel(evaluate_one, list(enumerate(samples)))
                runs.append(_summarize(rows))

        means = {key: float(np.mean([run[key] for run in runs])) for key in METRIC_KEYS}
        spread = {key: float(np.std([run[key] for run in runs])) for key in METRIC_KEYS} if repeats > 1 else {}
        ceiling = self.ground_truth_scores(corpus, split)
        report = MetricReport(
            **means,
            count=len(samples),
            modality=ROUTE_MAPPED if via_mapping else modality.value,
            repeats=repeats,
            spread=spread,
            bt_accuracy=self.backtranslator_accuracy(corpus, split),
            bt_ceiling_bleu1=ceiling.bleu1,
            bt_ceiling_rouge_l=ceiling.rouge_l_f1,
        )
        logger.info(f"Evaluated {split} split ({modality}): bleu1={report.bleu1:.4f} mse={report.keypoint_mse:.4f}")
        return report

    def ground_truth_scores(self, corpus: SyntheticCorpus, split: str = "test") -> MetricReport:
        """Metrics of the clean sequences scored as if they were predictions"""
        samples = self._samples(corpus, split)

        def evaluate_one(sample: CorpusSample) -> dict[str, float]:
            clean = corpus.normalized(sample)
            return self.score(SignSequence(frames=clean), clean, list(sample.tokens.ids))

        rows = self._run_parallel(evaluate_one, samples)
        return MetricReport(**_summarize(rows), count=len(samples), modality="ground_truth")

    def backtranslator_accuracy(self, corpus: SyntheticCorpus, split: str = "test") -> float:
        service = self._require_backtranslator()
        ids = corpus.split.ids(split)
        return service.accuracy(prepare_samples(corpus, ids, self.features))

    def baseline_report(self, corpus: SyntheticCorpus, split: str = "test") -> BaselineReport:
        """
        Generation-free references: the train-set mean sequence for keypoint metrics and
        back-translated random-motif sequences of the right length for token metrics
        """
        samples = self._samples(corpus, split)
        train = [corpus.normalized(s) for s in corpus.subset("train")]
        mean = mean_sequence(train)
        translator = self._require_backtranslator().translator

        mse, dtw, bleu1, bleu4, rouge = [], [], [], [], []
        for index, sample in enumerate(samples):
            reference = corpus.normalized(sample)
            guess = mean[: reference.shape[0]] if mean.shape[0] >= reference.shape[0] else mean
            mse.append(keypoint_mse(guess, reference))
            dtw.append(dtw_distance(guess, reference))

            rng = np.random.default_rng([self.config.seed, 3, index])
            shuffled = rng.integers(0, corpus.table.vocab_size, size=len(sample.tokens)).tolist()
            frames = corpus.normalizer.apply(render_tokens(shuffled, corpus.table))
            hypothesis = list(back_translate(frames, translator).ids)
            scores = sentence_scores(hypothesis, list(sample.tokens.ids))
            bleu1.append(scores["bleu1"])
            bleu4.append(scores["bleu4"])
            rouge.append(scores["rouge_l_f1"])

        return BaselineReport(
            mean_sequence_mse=float(np.mean(mse)),
            mean_sequence_dtw=float(np.mean(dtw)),
            shuffled_bleu1=float(np.mean(bleu1)),
            shuffled_bleu4=float(np.mean(bleu4)),
            shuffled_rouge_l=float(np.mean(rouge)),
            count=len(samples),
        )
