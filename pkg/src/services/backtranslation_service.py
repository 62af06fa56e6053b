"""
Training and inference for the sign-to-token back-translator
"""

from collections.abc import Sequence

import numpy as np

from src.autograd.functional import cross_entropy
from src.autograd.optim import Adam
from src.autograd.tensor import Tensor
from src.config import Config
from src.exceptions import ContractError
from src.models.sequence import SignSequence, TextTokens
from src.networks.backtranslator import BackTranslator
from src.services.corpus_service import batch_pad
from src.services.training_service import PreparedSample
from src.utils.logging_config import PerformanceLogger, get_logger

logger = get_logger(__name__)


def teacher_forcing(token_lists: Sequence[Sequence[int]], bos: int, eos: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Decoder inputs [BOS, t1..tn], targets [t1..tn, EOS] and the target mask, right-padded

    Returns:
        (inputs (B, Lt), targets (B, Lt), mask (B, Lt))
    """
    width = max(len(t) for t in token_lists) + 1
    inputs = np.full((len(token_lists), width), eos, dtype=np.int64)
    targets = np.full((len(token_lists), width), eos, dtype=np.int64)
    mask = np.zeros((len(token_lists), width), dtype=bool)
    for row, tokens in enumerate(token_lists):
        n = len(tokens)
        inputs[row, 0] = bos
        inputs[row, 1 : n + 1] = tokens
        targets[row, :n] = tokens
        targets[row, n] = eos
        mask[row, : n + 1] = True
    return inputs, targets, mask


def _flatten(sequence: SignSequence | np.ndarray) -> np.ndarray:
    frames = sequence.frames if isinstance(sequence, SignSequence) else np.asarray(sequence)
    return frames.reshape(frames.shape[0], -1) if frames.ndim == 3 else frames


def back_translate(sequence: SignSequence | np.ndarray, translator: BackTranslator) -> TextTokens:
    """Greedy-decode one normalized sign sequence into tokens"""
    frames = _flatten(sequence)
    ids = translator.greedy_decode(frames[None], np.ones((1, frames.shape[0]), dtype=bool))[0]
    return TextTokens(ids=tuple(ids), vocab_size=translator.vocab_size)


class BackTranslationService:
    """Owns a back-translator, its optimizer and its held-out accuracy"""

    def __init__(self, translator: BackTranslator, config: Config):
        self.translator = translator
        self.config = config
        self.optimizer = Adam(translator.parameters(), learning_rate=config.learning_rate)
        self.epoch = 0
        self.trained = False

    def loss(self, samples: Sequence[PreparedSample]) -> Tensor:
        frames, valid = batch_pad([s.sign for s in samples])
        inputs, targets, mask = teacher_forcing([s.tokens for s in samples], self.translator.bos, self.translator.eos)
        logits = self.translator(Tensor(frames, dtype=self.translator.dtype), valid, inputs)
        return cross_entropy(logits, targets, mask)

    def train(self, samples: Sequence[PreparedSample], epochs: int | None = None) -> list[float]:
        """
        Teacher-forced cross-entropy training on clean normalized sequences

        Returns:
            Mean loss of each epoch
        """
        if not samples:
            raise ContractError("back-translator training needs at least one sample")
        epochs = self.config.bt_epochs if epochs is None else epochs
        size = self.config.batch_size
        history = []
        with PerformanceLogger(logger, f"back-translator training ({epochs} epochs)", threshold_ms=60_000):
            for _ in range(epochs):
                rng = np.random.default_rng([self.config.seed, 1, self.epoch])
                order = rng.permutation(len(samples))
                losses, weights = [], []
                for start in range(0, len(order), size):
                    batch = [samples[i] for i in order[start : start + size]]
                    loss = self.loss(batch)
                    self.optimizer.zero_grad()
                    loss.backward()
                    self.optimizer.step()
                    losses.append(loss.item())
                    weights.append(len(batch))
                history.append(float(np.average(losses, weights=weights)))
                logger.debug(f"Back-translator epoch {self.epoch}: loss={history[-1]:.4f}")
                self.epoch += 1
        self.trained = True
        if history:
            logger.info(f"Back-translator trained for {epochs} epochs, final loss {history[-1]:.4f}")
        return history

    def translate(self, sequences: Sequence[SignSequence | np.ndarray]) -> list[list[int]]:
        """Batched greedy decoding of normalized sequences"""
        flat = [_flatten(s) for s in sequences]
        outputs: list[list[int]] = []
        size = self.config.batch_size
        for start in range(0, len(flat), size):
            frames, valid = batch_pad(flat[start : start + size])
            outputs.extend(self.translator.greedy_decode(frames, valid))
        return outputs

    def accuracy(self, samples: Sequence[PreparedSample]) -> float:
        """Fraction of samples whose clean sequence decodes to exactly its tokens"""
        if not samples:
            return 0.0
        decoded = self.translate([s.sign for s in samples])
        hits = sum(list(d) == list(s.tokens) for d, s in zip(decoded, samples, strict=True))
        return hits / len(samples)
