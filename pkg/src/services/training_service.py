"""
Joint training loop: diffusion, binding and consistency objectives
"""

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.autograd.ema import ExponentialMovingAverage
from src.autograd.optim import Adam
from src.autograd.tensor import Tensor
from src.config import Config
from src.exceptions import ContractError
from src.models.reports import LossReport
from src.models.settings import EclConfig
from src.networks.model import PredictorModel
from src.services.binding_service import BindingService
from src.services.corpus_service import SyntheticCorpus, batch_pad
from src.services.diffusion_service import DiffusionService
from src.services.ecl_service import EclService, total_loss
from src.services.feature_service import FeatureService
from src.utils.logging_config import PerformanceLogger, attach_training_log, get_logger, log_training_event

logger = get_logger(__name__)


@dataclass
class PreparedSample:
    """Model-ready arrays of one corpus sample"""

    sample_id: str
    tokens: list[int]
    text: np.ndarray
    audio: np.ndarray | None
    sign: np.ndarray

    @property
    def length(self) -> int:
        return self.sign.shape[0]


def prepare_samples(corpus: SyntheticCorpus, ids: list[str], features: FeatureService) -> list[PreparedSample]:
    prepared = []
    for sample_id in ids:
        sample = corpus.samples[sample_id]
        normalized = corpus.normalized(sample)
        prepared.append(
            PreparedSample(
                sample_id=sample_id,
                tokens=list(sample.tokens.ids),
                text=features.text(sample.tokens),
                audio=sample.audio.frames if sample.audio is not None else None,
                sign=normalized.reshape(normalized.shape[0], -1),
            )
        )
    return prepared


@dataclass
class Minibatch:
    text: np.ndarray
    text_valid: np.ndarray
    audio: np.ndarray | None
    audio_valid: np.ndarray | None
    audio_rows: np.ndarray
    sign: np.ndarray
    sign_valid: np.ndarray
    lengths: np.ndarray


def collate(samples: list[PreparedSample], max_len: int) -> Minibatch:
    ids = [s.sample_id for s in samples]
    text, text_valid = batch_pad([s.text for s in samples], max_len=None, ids=ids)
    sign, sign_valid = batch_pad([s.sign for s in samples], max_len=max_len, ids=ids)
    audio_rows = np.array([i for i, s in enumerate(samples) if s.audio is not None], dtype=np.int64)
    audio, audio_valid = None, None
    if audio_rows.size:
        audio, audio_valid = batch_pad([samples[i].audio for i in audio_rows], max_len=None)
    return Minibatch(
        text=text,
        text_valid=text_valid,
        audio=audio,
        audio_valid=audio_valid,
        audio_rows=audio_rows,
        sign=sign,
        sign_valid=sign_valid,
        lengths=np.array([s.length for s in samples]),
    )


class TrainingService:
    """Owns the optimizer and EMA of one model and runs training epochs"""

    def __init__(
        self,
        model: PredictorModel,
        diffusion: DiffusionService,
        binding: BindingService,
        ecl: EclService,
        config: Config,
    ):
        self.model = model
        self.diffusion = diffusion
        self.binding = binding
        self.ecl = ecl
        self.config = config
        self.ecl_cfg: EclConfig = ecl.cfg
        self.params = model.parameters()
        self.optimizer = Adam(self.params, learning_rate=config.learning_rate)
        self.ema = ExponentialMovingAverage(self.params, decay=config.ema_decay)
        self.epoch = 0
        self.last_objective: float | None = None

    @property
    def dtype(self):
        return self.model.dtype

    def _tensor(self, array: np.ndarray) -> Tensor:
        return Tensor(array, dtype=self.dtype)

    def step(self, samples: list[PreparedSample], rng: np.random.Generator, seed: int) -> LossReport:
        """One optimizer step on a minibatch"""
        if len(samples) < 2:
            raise ContractError("a training minibatch needs at least two samples")
        batch = collate(samples, self.config.max_len)
        encoders = self.model.encoders
        cfg = self.ecl_cfg

        e_t = encoders.text(self._tensor(batch.text), batch.text_valid)
        e_s = encoders.sign(self._tensor(batch.sign), batch.sign_valid)
        e_a = encoders.audio(self._tensor(batch.audio), batch.audio_valid) if batch.audio is not None else None
        rows = batch.audio_rows
        text_rows = np.setdiff1d(np.arange(len(samples)), rows)

        # Diffusion streams
        streams = [self.diffusion.diffusion_loss(e_t, batch.sign, batch.sign_valid, rng)]
        length_terms = [self.diffusion.length_loss(self.model.text_length, e_t.detach(), batch.lengths)]
        if e_a is not None:
            streams.append(self.diffusion.diffusion_loss(e_a, batch.sign[rows], batch.sign_valid[rows], rng))
            length_terms.append(self.diffusion.length_loss(self.model.audio_length, e_a.detach(), batch.lengths[rows]))
        if self.ecl.active(self.epoch) and text_rows.size:
            with self.model.mapping.frozen():
                pseudo = self.model.mapping(e_t[text_rows])
            streams.append(
                self.diffusion.diffusion_loss(pseudo, batch.sign[text_rows], batch.sign_valid[text_rows], rng)
            )
        l_d = streams[0]
        for term in streams[1:]:
            l_d = l_d + term
        l_d = l_d * (1.0 / len(streams))
        l_len = length_terms[0]
        for term in length_terms[1:]:
            l_len = l_len + term
        l_len = l_len * (self.config.length_loss_weight / len(length_terms))

        # Binding
        l_nce, pairs = self.binding.loss(e_t, e_s, e_a, rows)

        # Consistency
        if cfg.lambda_ecl > 0:
            l_ecl = self.ecl.ecl_total(
                self.epoch, e_t, e_a, rows, batch.sign.shape[1], batch.sign_valid, seed
            )
        else:
            l_ecl = Tensor(0.0, dtype=self.dtype)
        l_map = self.ecl.mapping_loss(e_t[rows], e_a) if e_a is not None else Tensor(0.0, dtype=self.dtype)

        ecl_on = cfg.lambda_ecl > 0 and self.ecl.active(self.epoch)
        report = total_loss(
            l_d.item(),
            l_ecl.item(),
            l_nce.item(),
            cfg,
            l_len=l_len.item(),
            l_map=l_map.item(),
            ecl_active=ecl_on,
            pairs=pairs,
        )

        objective = (l_d + l_len) * cfg.lambda_diffusion + l_nce * cfg.lambda_nce + l_map * cfg.mapping_aux_weight
        if ecl_on:
            objective = objective + l_ecl * cfg.lambda_ecl
        self.last_objective = objective.item()

        self.optimizer.zero_grad()
        objective.backward()
        self.optimizer.step()
        self.ema.update()
        return report

    def training_epoch(self, samples: list[PreparedSample]) -> LossReport:
        """
        Shuffle, step over every minibatch, and return the epoch-mean loss report

        Args:
            samples: Prepared training samples

        Returns:
            LossReport whose components are epoch means
        """
        if len(samples) < 2:
            raise ContractError("training needs at least two samples")
        rng = np.random.default_rng([self.config.seed, self.epoch])
        order = rng.permutation(len(samples))
        size = self.config.batch_size
        batches = [order[i : i + size] for i in range(0, len(order), size)]
        if len(batches) > 1 and len(batches[-1]) < 2:
            batches[-2] = np.concatenate([batches[-2], batches[-1]])
            batches.pop()

        reports = []
        for index, rows in enumerate(batches):
            seed = int(np.random.SeedSequence([self.config.seed, self.epoch, index]).generate_state(1)[0])
            reports.append(self.step([samples[i] for i in rows], rng, seed))

        weights = np.array([len(rows) for rows in batches], dtype=np.float64)
        weights /= weights.sum()

        def mean(name: str) -> float:
            return float(sum(w * getattr(r, name) for w, r in zip(weights, reports, strict=True)))

        pair_names = sorted({name for r in reports for name in r.pairs})
        pairs = {
            name: float(sum(w * r.pairs.get(name, 0.0) for w, r in zip(weights, reports, strict=True)))
            for name in pair_names
        }
        summary = total_loss(
            mean("l_d"),
            mean("l_ecl"),
            mean("l_nce"),
            self.ecl_cfg,
            l_len=mean("l_len"),
            l_map=mean("l_map"),
            ecl_active=self.ecl_cfg.lambda_ecl > 0 and self.ecl.active(self.epoch),
            pairs=pairs,
            epoch=self.epoch,
        )
        self.epoch += 1
        return summary

    def train(self, samples: list[PreparedSample], epochs: int, log_path: Path | None = None) -> list[LossReport]:
        """Run `epochs` epochs, appending one line per epoch to the training log"""
        handler = attach_training_log(logger, log_path) if log_path is not None else None
        reports = []
        try:
            for _ in range(epochs):
                started = time.perf_counter()
                with PerformanceLogger(logger, f"epoch {self.epoch}", threshold_ms=60_000):
                    report = self.training_epoch(samples)
                log_training_event(
                    logger,
                    "Epoch complete",
                    epoch=report.epoch,
                    l_d=report.l_d,
                    l_ecl=report.l_ecl,
                    l_nce=report.l_nce,
                    total=report.total,
                    wall_time=time.perf_counter() - started,
                )
                reports.append(report)
        finally:
            if handler is not None:
                logger.removeHandler(handler)
                handler.close()
        return reports
