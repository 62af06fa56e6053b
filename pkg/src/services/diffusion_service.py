"""
Iterative-refinement diffusion over keypoint sequences
"""

import math

import numpy as np

from src.autograd.functional import masked_mse
from src.autograd.tensor import Tensor, no_grad
from src.config import Config
from src.exceptions import ContractError, GenerationError
from src.models.sequence import Embedding, Modality, SignSequence
from src.models.settings import DiffusionSchedule, GenerationConfig
from src.networks.model import PredictorModel
from src.networks.producer import LengthPredictor
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

ArrayOrTensor = np.ndarray | Tensor


def build_schedule(steps: int) -> DiffusionSchedule:
    """
    delta_h = min(1, 1 / ln(h + 1)) for h = 1..H+1 and alpha_h = delta_h - delta_{h+1}

    Args:
        steps: Number of refinement steps H (>= 1)

    Returns:
        DiffusionSchedule
    """
    if steps < 1:
        raise ContractError(f"schedule needs at least one step, got {steps}")
    h = np.arange(1, steps + 2, dtype=np.float64)
    delta = np.minimum(1.0, 1.0 / np.log(h + 1.0))
    return DiffusionSchedule(steps=steps, delta=delta, alpha=delta[:-1] - delta[1:])


def contraction(schedule: DiffusionSchedule) -> np.ndarray:
    """c_h = prod_{k <= h} (1 - alpha_k) for h = 0..H (c_0 = 1)"""
    return np.concatenate([[1.0], np.cumprod(1.0 - schedule.alpha)])


def strided_schedule(schedule: DiffusionSchedule, num_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Pick `num_steps` evenly spaced steps of a schedule; each picked step absorbs the
    contraction of the steps skipped before it so the total contraction is unchanged.

    Returns:
        (step indices, merged alphas)
    """
    if num_steps >= schedule.steps:
        return np.arange(1, schedule.steps + 1), schedule.alpha.copy()
    picked = np.unique(np.round(np.linspace(schedule.steps / num_steps, schedule.steps, num_steps)).astype(np.int64))
    c = contraction(schedule)
    bounds = np.concatenate([[0], picked])
    alphas = 1.0 - c[bounds[1:]] / c[bounds[:-1]]
    return picked, alphas


def _check_pair(a: ArrayOrTensor, b: ArrayOrTensor, label: str) -> None:
    if tuple(a.shape) != tuple(b.shape):
        raise ContractError(f"{label}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


def refine_step(p_h: ArrayOrTensor, prev: ArrayOrTensor, alpha: float | np.ndarray) -> ArrayOrTensor:
    """ŝ_h = alpha * p_h + (1 - alpha) * ŝ_{h-1}"""
    _check_pair(p_h, prev, "refine_step")
    if np.any(np.asarray(alpha) < 0) or np.any(np.asarray(alpha) > 1):
        raise ContractError(f"refinement weight must lie in [0, 1], got {alpha}")
    if isinstance(p_h, Tensor) or isinstance(prev, Tensor):
        return p_h * alpha + prev * (1.0 - np.asarray(alpha))
    return alpha * p_h + (1.0 - alpha) * prev


def training_target(s0: np.ndarray, s_next: np.ndarray, alpha: float | np.ndarray) -> np.ndarray:
    """Regression target alpha * s0 + (1 - alpha) * s_{h+1}"""
    _check_pair(s0, s_next, "training_target")
    return alpha * s0 + (1.0 - alpha) * s_next


def inject_noise(s: np.ndarray, sigma: float, seed: int | np.random.Generator) -> np.ndarray:
    """Add i.i.d. Gaussian noise of std `sigma`"""
    if sigma < 0:
        raise ContractError(f"noise std must be non-negative, got {sigma}")
    if sigma == 0:
        return np.array(s, copy=True)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return s + rng.normal(0.0, sigma, size=np.shape(s)).astype(np.asarray(s).dtype)


def predict_length(condition: Embedding | np.ndarray, lp: LengthPredictor, max_len: int) -> int:
    """round(exp(lp(condition))) clamped to [1, max_len]"""
    values = condition.values if isinstance(condition, Embedding) else np.asarray(condition)
    with no_grad():
        dtype = lp.mlp.fc1.weight.dtype
        raw = float(lp(Tensor(values.reshape(1, -1), dtype=dtype)).data[0])
    return length_from_log(raw, max_len)


def length_from_log(raw: float, max_len: int) -> int:
    if math.isnan(raw):
        raise GenerationError("length predictor returned a non-finite value")
    with np.errstate(over="ignore"):
        frames = float(np.exp(raw))
    if not math.isfinite(frames):
        return max_len
    return int(min(max(round(frames), 1), max_len))


class DiffusionService:
    """Training loss and sampling for the sign predictor"""

    def __init__(self, model: PredictorModel, config: Config, mean_first_pose: np.ndarray | None = None):
        self.model = model
        self.config = config
        self.steps = config.diffusion_steps
        self.schedule = build_schedule(self.steps) if self.steps >= 1 else None
        self.noise_std = config.noise_injection_std
        self.frame_shape = (config.num_joints, config.num_coords)
        if mean_first_pose is None:
            mean_first_pose = np.zeros(self.frame_shape)
        self.mean_first_pose = np.asarray(mean_first_pose, dtype=np.float64).reshape(self.frame_shape)

    @property
    def dtype(self):
        return self.model.dtype

    # ----------------------------------------------------------------- helpers
    def initial_noise(self, length: int, rng: np.random.Generator, std: float | None = None) -> np.ndarray:
        """Corpus-mean first pose tiled to `length` frames plus Gaussian perturbation (L x J*C)"""
        std = self.config.init_noise_std if std is None else std
        tiled = np.tile(self.mean_first_pose.reshape(1, -1), (length, 1))
        if std > 0:
            tiled = tiled + rng.normal(0.0, std, size=tiled.shape)
        return tiled.astype(self.dtype)

    def _step_sigma(self, h: int) -> float:
        """Noise std applied when leaving step h-1: sigma * (1 - delta_h)"""
        if self.schedule is None or h < 1:
            return 0.0
        return self.noise_std * (1.0 - float(self.schedule.delta[h - 1]))

    def predict_frames(self, condition: Tensor, steps: np.ndarray, noise_emb: Tensor, frames: Tensor) -> Tensor:
        """Producer output p_h for a batch (B, L, J*C)"""
        if frames.shape[1] > self.config.max_len:
            raise ContractError(f"target length {frames.shape[1]} exceeds max_len {self.config.max_len}")
        step_emb = self.model.encoders.step(steps)
        return self.model.producer(condition, step_emb, noise_emb, frames)

    def encode_noise(self, z: np.ndarray, valid: np.ndarray | None) -> Tensor:
        return self.model.encoders.noise(Tensor(z, dtype=self.dtype), valid)

    # ---------------------------------------------------------------- training
    def diffusion_loss(
        self,
        condition: Tensor,
        s0: np.ndarray,
        valid: np.ndarray,
        rng: np.random.Generator,
        z: np.ndarray | None = None,
    ) -> Tensor:
        """
        Masked MSE between p_h and the blended target at a uniformly drawn step per sample

        The step input is the trajectory a perfect predictor would follow from z,
        s0 + c_{h-1} (z - s0), noised as the sampler noises it. With H = 0 the producer
        regresses s0 directly from z.

        Args:
            condition: (B, d) conditioning embeddings
            s0: (B, L, J*C) normalized ground truth (zero padded)
            valid: (B, L) frame mask
            rng: Source of step indices and noise
            z: Optional (B, L, J*C) initial noise; drawn when omitted
        """
        batch, length, _ = s0.shape
        mask3 = valid[..., None]
        if z is None:
            z = np.stack([self.initial_noise(length, rng) for _ in range(batch)])
        z = np.where(mask3, z, 0.0)
        noise_emb = self.encode_noise(z, valid)

        if self.schedule is None:
            pred = self.predict_frames(condition, np.zeros(batch, dtype=np.int64), noise_emb, Tensor(z, dtype=self.dtype))
            return masked_mse(pred, s0.astype(self.dtype), valid)

        c = contraction(self.schedule)
        steps = rng.integers(1, self.steps + 1, size=batch)
        c_prev = c[steps - 1][:, None, None]
        c_now = c[steps][:, None, None]
        alpha = self.schedule.alpha[steps - 1][:, None, None]
        sigma_in = np.array([self._step_sigma(h) if h > 1 else 0.0 for h in steps])[:, None, None]
        sigma_next = np.array([self._step_sigma(h + 1) for h in steps])[:, None, None]

        x_in = s0 + c_prev * (z - s0) + sigma_in * rng.normal(size=s0.shape)
        ideal = s0 + c_now * (z - s0)
        s_next = ideal + sigma_next * rng.normal(size=s0.shape)
        target = training_target(s0, s_next, alpha)

        x_in = np.where(mask3, x_in, 0.0).astype(self.dtype)
        target = np.where(mask3, target, 0.0).astype(self.dtype)
        pred = self.predict_frames(condition, steps, noise_emb, Tensor(x_in, dtype=self.dtype))
        return masked_mse(pred, target, valid)

    def length_loss(self, predictor: LengthPredictor, condition: Tensor, lengths: np.ndarray) -> Tensor:
        """MSE between predicted and true log frame counts"""
        target = np.log(np.asarray(lengths, dtype=np.float64)).astype(self.dtype)
        diff = predictor(condition) - target
        return (diff * diff).mean()

    # ---------------------------------------------------------------- sampling
    def sample_differentiable(
        self,
        condition: Tensor,
        length: int,
        seed: int,
        num_steps: int | None = None,
        valid: np.ndarray | None = None,
    ) -> Tensor:
        """
        Strided sampler that keeps the graph, used inside consistency losses

        Every stream sampled with the same seed shares its initial noise and injected noise.
        Rows shorter than `length` are described by `valid`; causal attention keeps their
        frames independent of the padded tail.
        """
        batch = condition.shape[0]
        rng = np.random.default_rng(seed)
        z = np.stack([self.initial_noise(length, rng) for _ in range(batch)])
        noise_emb = self.encode_noise(z, valid)
        x = Tensor(z, dtype=self.dtype)
        if self.schedule is None:
            return self.predict_frames(condition, np.zeros(batch, dtype=np.int64), noise_emb, x)
        picked, alphas = strided_schedule(self.schedule, num_steps or self.config.ecl_sampler_steps)
        for index, (h, alpha) in enumerate(zip(picked, alphas, strict=True)):
            p = self.predict_frames(condition, np.full(batch, h), noise_emb, x)
            x = refine_step(p, x, float(alpha))
            if index < len(picked) - 1:
                sigma = self._step_sigma(int(picked[index + 1]))
                if sigma > 0:
                    x = x + rng.normal(0.0, sigma, size=x.shape).astype(self.dtype)
        return x

    def sample_batch(
        self,
        conditions: np.ndarray,
        length: int,
        seeds: list[int],
        training: bool = False,
        inference_noise: bool | None = None,
        alpha_override: np.ndarray | None = None,
        init_noise_std: float | None = None,
    ) -> np.ndarray:
        """
        Run the full refinement loop for a batch of conditions sharing one length

        Args:
            conditions: (B, d) raw conditioning embeddings
            length: Frame count
            seeds: One seed per batch row
            training: Inject noise after every step, including the last
            inference_noise: Inject noise after non-final steps (defaults to config)
            alpha_override: Replace the schedule's alphas (length H)
            init_noise_std: Override the initial perturbation

        Returns:
            (B, length, J*C) refined frames
        """
        if length < 1 or length > self.config.max_len:
            raise ContractError(f"target length {length} outside 1..{self.config.max_len}")
        batch = conditions.shape[0]
        if len(seeds) != batch:
            raise ContractError("one seed is needed per condition")
        inference_noise = self.config.inference_noise if inference_noise is None else inference_noise
        rngs = [np.random.default_rng(s) for s in seeds]
        z = np.stack([self.initial_noise(length, rng, init_noise_std) for rng in rngs])

        with no_grad():
            cond = Tensor(conditions, dtype=self.dtype)
            noise_emb = self.encode_noise(z, None)
            x = z
            if self.schedule is None:
                return self.predict_frames(cond, np.zeros(batch, dtype=np.int64), noise_emb, Tensor(x)).data
            alphas = self.schedule.alpha if alpha_override is None else np.asarray(alpha_override, dtype=np.float64)
            for h in range(1, self.steps + 1):
                p = self.predict_frames(cond, np.full(batch, h), noise_emb, Tensor(x, dtype=self.dtype)).data
                x = refine_step(p, x, float(alphas[h - 1])).astype(self.dtype)
                last = h == self.steps
                if training or (inference_noise and not last):
                    sigma = self._step_sigma(h + 1)
                    x = np.stack([inject_noise(x[b], sigma, rngs[b]) for b in range(batch)])
        return x

    def condition_length(self, condition: Embedding, modality: Modality) -> int:
        predictor = self.model.audio_length if modality == Modality.AUDIO else self.model.text_length
        return predict_length(condition, predictor, self.config.max_len)

    def sample_sequence(
        self,
        condition: Embedding,
        gen: GenerationConfig,
        len_override: int | None = None,
        modality: Modality = Modality.TEXT,
        training: bool = False,
    ) -> SignSequence:
        """Generate one normalized sequence from a conditioning embedding"""
        length = len_override if len_override is not None else self.condition_length(condition, modality)
        frames = self.sample_batch(
            condition.values[None],
            length,
            [gen.seed],
            training=training,
            inference_noise=gen.inference_noise,
            init_noise_std=gen.init_noise_std,
        )
        return self._to_sequence(frames[0])

    def generate_averaged(
        self,
        condition: Embedding,
        gen: GenerationConfig,
        len_override: int | None = None,
        modality: Modality = Modality.TEXT,
    ) -> SignSequence:
        """Framewise mean of `num_averaged` samples drawn with derived seeds at one length"""
        length = len_override if len_override is not None else self.condition_length(condition, modality)
        seeds = averaged_seeds(gen.seed, gen.num_averaged)
        frames = self.sample_batch(
            np.repeat(condition.values[None], gen.num_averaged, axis=0),
            length,
            seeds,
            inference_noise=gen.inference_noise,
            init_noise_std=gen.init_noise_std,
        )
        return self._to_sequence(frames.mean(axis=0))

    def _to_sequence(self, flat: np.ndarray) -> SignSequence:
        frames = np.asarray(flat).reshape(flat.shape[0], *self.frame_shape)
        if not np.all(np.isfinite(frames)):
            raise GenerationError("sampler produced non-finite coordinates")
        return SignSequence(frames=frames, frame_rate=self.config.frame_rate)

    def predict_p(
        self, condition: Embedding, e_h: Embedding, e_n: Embedding, noisy: SignSequence | np.ndarray
    ) -> SignSequence:
        """One producer pass from explicit embeddings and a noisy sequence"""
        frames = noisy.frames if isinstance(noisy, SignSequence) else np.asarray(noisy)
        length = frames.shape[0]
        if length < 1 or length > self.config.max_len:
            raise ContractError(f"target length {length} outside 1..{self.config.max_len}")
        for emb in (condition, e_h, e_n):
            if emb.dim != self.model.d_model:
                raise ContractError(f"embedding width {emb.dim} differs from model width {self.model.d_model}")
        with no_grad():
            out = self.model.producer(
                Tensor(condition.values[None], dtype=self.dtype),
                Tensor(e_h.values[None], dtype=self.dtype),
                Tensor(e_n.values[None], dtype=self.dtype),
                Tensor(frames.reshape(1, length, -1), dtype=self.dtype),
            )
        return self._to_sequence(out.data[0])


def averaged_seeds(seed: int, count: int) -> list[int]:
    """The base seed followed by `count - 1` derived seeds"""
    derived = np.random.SeedSequence(seed).generate_state(max(count - 1, 0)).tolist() if count > 1 else []
    return [seed, *[int(s) for s in derived]]
