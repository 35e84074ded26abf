"""Class-balanced token weighting, the weighted cross-entropy loss and top-k pruning."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from .ras import SupervisionMask, ras_class_masks
from .scene import ClassDistribution, GridSpec, Scene


@dataclass(frozen=True, eq=False)
class SalienceGrid:
    """Per-token class logits over a grid, shape (rows, cols, C)."""

    grid: GridSpec
    logits: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=float)
        if logits.ndim != 3 or logits.shape[:2] != self.grid.shape:
            raise ValueError(f"logits shape {logits.shape} does not match grid {self.grid.shape} x C")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        object.__setattr__(self, "logits", logits)

    @property
    def flat(self) -> np.ndarray:
        return self.logits.reshape(-1, self.logits.shape[-1])

    @property
    def n_tokens(self) -> int:
        return self.grid.n_tokens

    @property
    def n_classes(self) -> int:
        return self.logits.shape[-1]

    def max_logit(self):
        """(P, I): max logit per token and its class; ties pick the lower class."""
        flat = self.flat
        return flat.max(axis=1), flat.argmax(axis=1)


@dataclass(frozen=True)
class CbsConfig:
    lam: float = 1.5
    rho: float = 1.0
    omega1: float = 1.5  # weight of the CBS term in the full detector loss
    weight_mode: str = "multiply"  # or "assign": selected tokens get exactly lam
    distribution_source: str = "predicted"  # or "gt"

    def __post_init__(self):
        if not self.lam >= 1.0:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")
        check_ratio(self.rho)
        if self.weight_mode not in ("multiply", "assign"):
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        if self.distribution_source not in ("predicted", "gt"):
            raise ValueError(f"unknown distribution_source {self.distribution_source!r}")


@dataclass(frozen=True, eq=False)
class TokenWeights:
    weights: np.ndarray  # (N,)
    selected: np.ndarray  # sorted token indices of D
    bag: np.ndarray  # per-class top-k sizes used

    def selected_mask(self) -> np.ndarray:
        out = np.zeros(len(self.weights), dtype=bool)
        out[self.selected] = True
        return out


@dataclass(frozen=True, eq=False)
class TokenSet:
    kept: np.ndarray  # sorted token indices
    ratio: float
    grid: GridSpec
    scores: np.ndarray  # ranking score of every token

    def __len__(self):
        return len(self.kept)


def check_ratio(rho: float) -> None:
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"keeping ratio must be in (0, 1], got {rho}")


def keep_count(rho: float, n: int) -> int:
    """round(rho * n), halves rounded up."""
    return int(math.floor(rho * n + 0.5))


def token_weights(
    sal: SalienceGrid,
    cfg: CbsConfig = CbsConfig(),
    distribution: Optional[ClassDistribution] = None,
) -> TokenWeights:
    """Class-balanced token weights.

    Every token starts at ``sigmoid(P_n)`` where ``P_n`` is its max logit.
    For each class ``c`` with ``bag[c] > 0``, the ``bag[c]`` tokens of
    highest ``P_n`` among those predicted as ``c`` form part of the
    selected set D and are scaled by ``lam`` (or set to ``lam`` in
    ``assign`` mode). ``bag`` is the predicted class histogram, or the
    ground-truth ``distribution`` when ``cfg.distribution_source == "gt"``.
    Ties in ``P_n`` go to the lower token index.
    """
    p, cls = sal.max_logit()
    if cfg.distribution_source == "gt":
        if distribution is None:
            raise ValueError("distribution_source='gt' needs a ClassDistribution")
        bag = distribution.as_array()
        if len(bag) != sal.n_classes:
            raise ValueError("distribution length does not match the logit class count")
    else:
        bag = np.bincount(cls, minlength=sal.n_classes)

    w = expit(p)
    chosen = []
    for c in range(sal.n_classes):
        k = int(bag[c])
        if k <= 0:
            continue
        members = np.flatnonzero(cls == c)
        order = members[np.lexsort((members, -p[members]))]
        chosen.append(order[:k])
    selected = np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=np.int64)
    if cfg.weight_mode == "multiply":
        w[selected] = w[selected] * cfg.lam
    else:
        w[selected] = cfg.lam
    return TokenWeights(w, selected, bag.astype(np.int64))


def cbs_loss(sal: SalienceGrid, labels, w: TokenWeights) -> float:
    """Mean of ``-W_n * log softmax(logits_n)[y_n]`` over tokens."""
    flat = sal.flat
    y = np.asarray(labels, dtype=np.int64).ravel()
    if y.shape != (len(flat),):
        raise ValueError("need one label per token")
    if np.any((y < 0) | (y >= sal.n_classes)):
        raise ValueError("labels out of class range")
    nll = logsumexp(flat, axis=1) - flat[np.arange(len(flat)), y]
    return float(np.mean(w.weights * nll))


def combined_cbs_loss(cam_losses: Sequence[float], bev_loss: float) -> float:
    """Camera losses averaged over rigs, plus the BEV loss."""
    cam = float(np.mean(cam_losses)) if len(cam_losses) else 0.0
    return cam + float(bev_loss)


def select_by_score(scores: np.ndarray, rho: float, grid: GridSpec) -> TokenSet:
    """Keep the round(rho * N) highest scores; ties by lower index."""
    check_ratio(rho)
    scores = np.asarray(scores, dtype=float)
    idx = np.arange(len(scores))
    order = np.lexsort((idx, -scores))
    kept = np.sort(order[: keep_count(rho, len(scores))])
    return TokenSet(kept, float(rho), grid, scores)


def select_tokens(sal: SalienceGrid, w: TokenWeights, rho: float) -> TokenSet:
    """Prune to the tokens with the largest reweighted salience ``W_n * sigmoid(P_n)``."""
    p, _ = sal.max_logit()
    return select_by_score(w.weights * expit(p), rho, sal.grid)


def plain_topk(sal: SalienceGrid, rho: float) -> TokenSet:
    """Baseline pruning by max logit alone."""
    p, _ = sal.max_logit()
    return select_by_score(p, rho, sal.grid)


def foreground_recall(tok: TokenSet, mask: SupervisionMask) -> float:
    if tok.grid != mask.grid:
        raise ValueError("token grid does not match mask grid")
    positive = mask.values.ravel().astype(bool)
    if not positive.any():
        return float("nan")
    kept = np.zeros_like(positive)
    kept[tok.kept] = True
    return float((kept & positive).sum() / positive.sum())


def perclass_recall(tok: TokenSet, mask: SupervisionMask, scene: Scene) -> np.ndarray:
    """Fraction of each class's positive cells that were kept; NaN for absent classes."""
    if tok.grid != mask.grid:
        raise ValueError("token grid does not match mask grid")
    per_class = ras_class_masks(scene, mask.grid).reshape(scene.n_classes, -1)
    per_class &= mask.values.ravel().astype(bool)
    kept = np.zeros(mask.grid.n_tokens, dtype=bool)
    kept[tok.kept] = True
    totals = per_class.sum(axis=1)
    hits = (per_class & kept).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, hits / np.maximum(totals, 1), np.nan)


def write_tokens_csv(tok: TokenSet, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["index", "row", "col", "score"])
        for n in tok.kept:
            i, j = divmod(int(n), tok.grid.cols)
            out.writerow([int(n), i, j, repr(float(tok.scores[n]))])


def write_weights_csv(w: TokenWeights, path) -> None:
    sel = w.selected_mask()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["index", "weight", "selected"])
        for n, (weight, s) in enumerate(zip(w.weights, sel)):
            out.writerow([n, repr(float(weight)), int(s)])


def read_token_indices(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([int(r["index"]) for r in rows], dtype=np.int64)
