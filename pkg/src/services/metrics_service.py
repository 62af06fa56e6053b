"""
Sequence and token metrics: keypoint MSE, DTW, BLEU-n and ROUGE-L
"""

import math
from collections import Counter
from collections.abc import Hashable, Sequence

import numpy as np

from src.exceptions import ContractError
from src.models.sequence import SignSequence, TextTokens

Tokens = TextTokens | Sequence[Hashable] | str


def _frames(sequence: SignSequence | np.ndarray) -> np.ndarray:
    frames = sequence.frames if isinstance(sequence, SignSequence) else np.asarray(sequence)
    if frames.ndim != 3:
        raise ContractError(f"expected frames of shape (T, J, C), got {frames.shape}")
    return frames.astype(np.float64)


def _tokens(tokens: Tokens) -> list:
    if isinstance(tokens, TextTokens):
        return list(tokens.ids)
    if isinstance(tokens, str):
        return tokens.split()
    return list(tokens)


def resample(frames: np.ndarray, length: int) -> np.ndarray:
    """Nearest-center temporal resampling: output frame i reads floor((i + 0.5) * T / length)"""
    source = frames.shape[0]
    idx = np.floor((np.arange(length) + 0.5) * source / length).astype(np.int64)
    return frames[np.clip(idx, 0, source - 1)]


def keypoint_mse(pred: SignSequence | np.ndarray, gt: SignSequence | np.ndarray) -> float:
    """
    Mean squared coordinate error after resampling the prediction to the reference length

    Raises:
        ContractError: if joint or coordinate counts differ
    """
    p, g = _frames(pred), _frames(gt)
    if p.shape[1:] != g.shape[1:]:
        raise ContractError(f"joint layout differs: {p.shape[1:]} vs {g.shape[1:]}")
    if p.shape[0] == 0 or g.shape[0] == 0:
        raise ContractError("cannot compare an empty sequence")
    if p.shape[0] != g.shape[0]:
        p = resample(p, g.shape[0])
    return float(np.mean((p - g) ** 2))


def dtw_distance(a: SignSequence | np.ndarray, b: SignSequence | np.ndarray) -> float:
    """
    Dynamic time warping with Euclidean frame cost, normalized by the warping path length

    Among equal-cost predecessors the shorter path wins, so the result is symmetric
    in its arguments.
    """
    x, y = _frames(a), _frames(b)
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ContractError("cannot align an empty sequence")
    if x.shape[1:] != y.shape[1:]:
        raise ContractError(f"joint layout differs: {x.shape[1:]} vs {y.shape[1:]}")
    flat_x = x.reshape(x.shape[0], -1)
    flat_y = y.reshape(y.shape[0], -1)
    cost = np.sqrt(((flat_x[:, None, :] - flat_y[None, :, :]) ** 2).sum(axis=-1))

    n, m = cost.shape
    total = np.full((n + 1, m + 1), np.inf)
    steps = np.zeros((n + 1, m + 1), dtype=np.int64)
    total[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best = min(
                (total[i - 1, j - 1], steps[i - 1, j - 1]),
                (total[i - 1, j], steps[i - 1, j]),
                (total[i, j - 1], steps[i, j - 1]),
            )
            total[i, j] = cost[i - 1, j - 1] + best[0]
            steps[i, j] = best[1] + 1
    return float(total[n, m] / steps[n, m])


def _ngrams(tokens: list, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(hypothesis: Tokens, reference: Tokens, n: int = 4) -> float:
    """
    Cumulative BLEU-n: geometric mean of clipped 1..n-gram precisions times the brevity
    penalty exp(1 - r/c) when the hypothesis is shorter than the reference

    Orders longer than the hypothesis have no n-grams and are left out of the mean.
    An empty hypothesis scores 0.
    """
    if n < 1:
        raise ContractError(f"BLEU order must be at least 1, got {n}")
    hyp, ref = _tokens(hypothesis), _tokens(reference)
    if not hyp:
        return 0.0
    log_precision = 0.0
    orders = min(n, len(hyp))
    for k in range(1, orders + 1):
        hyp_counts = _ngrams(hyp, k)
        ref_counts = _ngrams(ref, k)
        matched = sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
        if matched == 0:
            return 0.0
        log_precision += math.log(matched / sum(hyp_counts.values()))
    penalty = 1.0 if len(hyp) >= len(ref) else math.exp(1.0 - len(ref) / len(hyp))
    return float(penalty * math.exp(log_precision / orders))


def lcs_length(a: list, b: list) -> int:
    table = np.zeros((len(a) + 1, len(b) + 1), dtype=np.int64)
    for i, left in enumerate(a, start=1):
        for j, right in enumerate(b, start=1):
            if left == right:
                table[i, j] = table[i - 1, j - 1] + 1
            else:
                table[i, j] = max(table[i - 1, j], table[i, j - 1])
    return int(table[len(a), len(b)])


def rouge_l_f1(hypothesis: Tokens, reference: Tokens) -> float:
    """
    LCS-based F1 (beta = 1)

    Raises:
        ContractError: if the reference is empty
    """
    hyp, ref = _tokens(hypothesis), _tokens(reference)
    if not ref:
        raise ContractError("ROUGE-L needs a non-empty reference")
    if not hyp:
        return 0.0
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(hyp)
    recall = lcs / len(ref)
    return float(2 * precision * recall / (precision + recall))


def sentence_scores(hypothesis: Tokens, reference: Tokens) -> dict[str, float]:
    """BLEU-1..4 and ROUGE-L of one hypothesis"""
    scores = {f"bleu{n}": bleu_n(hypothesis, reference, n) for n in range(1, 5)}
    scores["rouge_l_f1"] = rouge_l_f1(hypothesis, reference)
    return scores
