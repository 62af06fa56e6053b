"""
Pipeline factory: assembles the service container for one configuration
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.config import Config, get_config
from src.models.reports import LossReport
from src.models.settings import BindingConfig, EclConfig
from src.networks.backtranslator import BackTranslator
from src.networks.model import PredictorModel
from src.services.backtranslation_service import BackTranslationService
from src.services.binding_service import BindingService
from src.services.corpus_service import CorpusService, SyntheticCorpus
from src.services.diffusion_service import DiffusionService
from src.services.ecl_service import EclService
from src.services.evaluation_service import EvaluationService
from src.services.feature_service import FeatureService
from src.services.render_service import RenderService
from src.services.training_service import TrainingService, prepare_samples
from src.utils.logging_config import get_logger

logger = get_logger(__name__)


@dataclass
class Pipeline:
    """Every service of one run, wired to a shared model"""

    config: Config
    features: FeatureService
    corpus_service: CorpusService
    model: PredictorModel
    diffusion: DiffusionService
    binding: BindingService
    ecl: EclService
    trainer: TrainingService
    backtranslation: BackTranslationService
    evaluator: EvaluationService
    renderer: RenderService

    def fit(self, corpus: SyntheticCorpus, epochs: int | None = None, log_path: Path | None = None) -> list[LossReport]:
        """Train the predictor on the corpus' train split"""
        samples = prepare_samples(corpus, corpus.split.train, self.features)
        epochs = self.config.epochs if epochs is None else epochs
        return self.trainer.train(samples, epochs, log_path)

    def fit_backtranslator(self, corpus: SyntheticCorpus, epochs: int | None = None) -> list[float]:
        """Train the back-translator on clean train-split sequences"""
        samples = prepare_samples(corpus, corpus.split.train, self.features)
        return self.backtranslation.train(samples, epochs)


def create_pipeline(config: Config | str | None = None, corpus: SyntheticCorpus | None = None) -> Pipeline:
    """
    Pipeline factory

    Args:
        config: Configuration object or preset name ('default', 'fidelity', 'testing')
        corpus: Corpus whose mean first pose and normalizer the pipeline adopts

    Returns:
        Assembled pipeline with freshly initialized networks
    """
    if not isinstance(config, Config):
        config = get_config(config)

    features = FeatureService.from_config(config)
    corpus_service = CorpusService(config, features)
    mean_first_pose = corpus.mean_first_pose if corpus is not None else None
    normalizer = corpus.normalizer if corpus is not None else None

    model = PredictorModel(config, np.random.default_rng(config.seed))
    diffusion = DiffusionService(model, config, mean_first_pose)
    binding = BindingService(BindingConfig.from_config(config))
    ecl = EclService(model, diffusion, EclConfig.from_config(config))
    trainer = TrainingService(model, diffusion, binding, ecl, config)
    backtranslation = BackTranslationService(BackTranslator(config), config)
    evaluator = EvaluationService(diffusion, features, config, backtranslation, trainer.ema)
    renderer = RenderService.from_config(config, normalizer)

    logger.info(
        f"Pipeline ready: {model.num_parameters()} predictor parameters, "
        f"H={config.diffusion_steps}, dtype={config.dtype}"
    )
    return Pipeline(
        config=config,
        features=features,
        corpus_service=corpus_service,
        model=model,
        diffusion=diffusion,
        binding=binding,
        ecl=ecl,
        trainer=trainer,
        backtranslation=backtranslation,
        evaluator=evaluator,
        renderer=renderer,
    )
