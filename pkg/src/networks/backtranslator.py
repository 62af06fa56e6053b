"""
Sign-to-token decoder used for back-translation scoring
"""

import numpy as np

from src.autograd.layers import AttentionBlock, LayerNorm, Linear, Module, key_padding_mask
from src.autograd.tensor import Parameter, Tensor, concat, no_grad
from src.config import Config
from src.exceptions import ContractError
from src.networks.encoders import positional_encoding
from src.networks.model import model_dtype


class BackTranslator(Module):
    """
    Sign encoder (attention blocks over frames) followed by a prefix decoder: token
    positions attend to every valid sign position and causally to earlier tokens.

    Output classes are the vocabulary plus the end marker (id = vocab_size); the start
    marker (id = vocab_size + 1) is input-only.
    """

    def __init__(self, config: Config, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(config.seed + 1)
        dtype = model_dtype(config)
        d = config.d_model
        self.frame_proj = Linear(config.frame_width, d, rng, dtype)
        self.encoder_blocks = [
            AttentionBlock(d, config.num_heads, config.mlp_hidden, rng, dtype) for _ in range(config.encoder_blocks)
        ]
        self.token_table = Parameter(rng.normal(0.0, 1.0, size=(config.vocab_size + 2, d)), dtype=dtype)
        self.decoder_blocks = [
            AttentionBlock(d, config.num_heads, config.mlp_hidden, rng, dtype) for _ in range(config.encoder_blocks)
        ]
        self.norm = LayerNorm(d, dtype)
        self.out = Linear(d, config.vocab_size + 1, rng, dtype)
        self.vocab_size = config.vocab_size
        self.frame_width = config.frame_width
        self.max_len = config.bt_max_len
        self.d_model = d
        self.dtype = dtype

    @property
    def eos(self) -> int:
        return self.vocab_size

    @property
    def bos(self) -> int:
        return self.vocab_size + 1

    def encode(self, frames: Tensor, valid: np.ndarray) -> Tensor:
        batch, length, width = frames.shape
        if width != self.frame_width:
            raise ContractError(f"back-translator expects frames of width {self.frame_width}, got {width}")
        h = self.frame_proj(frames) + positional_encoding(length, self.d_model).astype(self.dtype)
        mask = key_padding_mask(valid)
        for block in self.encoder_blocks:
            h = block(h, mask)
        return h

    def decode_logits(self, memory: Tensor, valid: np.ndarray, token_inputs: np.ndarray) -> Tensor:
        """
        Args:
            memory: (B, Ls, d) encoded sign frames
            valid: (B, Ls) frame validity
            token_inputs: (B, Lt) ids starting with the start marker

        Returns:
            (B, Lt, vocab_size + 1) next-token logits
        """
        batch, sign_len, _ = memory.shape
        token_len = token_inputs.shape[1]
        tokens = self.token_table[token_inputs] + positional_encoding(token_len, self.d_model).astype(self.dtype)
        h = concat([memory, tokens], axis=1)
        mask = _prefix_mask(valid, token_len)
        for block in self.decoder_blocks:
            h = block(h, mask)
        return self.out(self.norm(h[:, sign_len:]))

    def forward(self, frames: Tensor, valid: np.ndarray, token_inputs: np.ndarray) -> Tensor:
        return self.decode_logits(self.encode(frames, valid), valid, token_inputs)

    def greedy_decode(self, frames: np.ndarray, valid: np.ndarray) -> list[list[int]]:
        """
        Greedy decoding until the end marker or `max_len` tokens; the end marker is
        never chosen first, so every output holds at least one token.
        """
        batch = frames.shape[0]
        with no_grad():
            memory = self.encode(Tensor(frames, dtype=self.dtype), valid)
            inputs = np.full((batch, 1), self.bos, dtype=np.int64)
            outputs: list[list[int]] = [[] for _ in range(batch)]
            finished = np.zeros(batch, dtype=bool)
            for position in range(self.max_len):
                logits = self.decode_logits(memory, valid, inputs).data[:, -1]
                if position == 0:
                    logits = logits.copy()
                    logits[:, self.eos] = -np.inf
                choice = np.argmax(logits, axis=-1)
                for b in range(batch):
                    if finished[b]:
                        continue
                    if choice[b] == self.eos:
                        finished[b] = True
                    else:
                        outputs[b].append(int(choice[b]))
                if finished.all():
                    break
                inputs = np.concatenate([inputs, choice[:, None]], axis=1)
        return outputs


def _prefix_mask(valid: np.ndarray, token_len: int) -> np.ndarray:
    """(B, 1, Ls+Lt, Ls+Lt) mask: sign keys by validity, token keys causally from token queries"""
    valid = np.asarray(valid, dtype=bool)
    batch, sign_len = valid.shape
    total = sign_len + token_len
    mask = np.zeros((batch, 1, total, total), dtype=bool)
    mask[:, 0, :, :sign_len] = valid[:, None, :]
    mask[:, 0, sign_len:, sign_len:] = np.tril(np.ones((token_len, token_len), dtype=bool))
    return mask
