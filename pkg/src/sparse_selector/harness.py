"""Synthetic scorers and the keeping-ratio evaluation used by the CLI."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .cbs import (
    CbsConfig,
    SalienceGrid,
    foreground_recall,
    perclass_recall,
    plain_topk,
    select_tokens,
    token_weights,
)
from .ras import SupervisionMask, ras_mask, ras_owner_map
from .scene import GridSpec, Scene, gt_distribution

PERFECT_MARGIN = 10.0


def perfect_logits(scene: Scene, grid: GridSpec, margin: float = PERFECT_MARGIN) -> SalienceGrid:
    """Logits that are ``margin`` on the nearest covering box's class and 0 elsewhere."""
    owner = ras_owner_map(scene, grid).ravel()
    logits = np.zeros((grid.n_tokens, scene.n_classes))
    pos = np.flatnonzero(owner >= 0)
    classes = np.array([scene.boxes[b].class_id for b in owner[pos]], dtype=np.int64)
    logits[pos, classes] = margin
    return SalienceGrid(grid, logits.reshape(grid.shape + (scene.n_classes,)))


def noisy_logits(scene: Scene, grid: GridSpec, sigma: float, seed: int = 0) -> SalienceGrid:
    """Perfect logits plus class-correlated gaussian noise.

    Each class column receives one shared offset ``N(0, sigma^2)`` and every
    (token, class) entry an independent ``N(0, sigma^2)`` term. The class
    offsets are drawn first.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    base = perfect_logits(scene, grid).logits
    rng = np.random.default_rng(seed)
    offsets = rng.normal(0.0, sigma, size=scene.n_classes)
    noise = rng.normal(0.0, sigma, size=base.shape)
    return SalienceGrid(grid, base + offsets + noise)


def resolve_logits(source: str, scene: Scene, grid: GridSpec, seed: int = 0) -> SalienceGrid:
    """Build logits from ``perfect``, ``noisy:<sigma>`` or a ``.npy`` file path."""
    if source == "perfect":
        return perfect_logits(scene, grid)
    if source.startswith("noisy:"):
        try:
            sigma = float(source.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad noise level in {source!r}") from None
        return noisy_logits(scene, grid, sigma, seed)
    return SalienceGrid(grid, np.load(source))


@dataclass(frozen=True)
class EvalRow:
    rho: float
    tokens_kept: int
    foreground_recall: float
    per_class_recall: tuple
    flop_proxy: float


def evaluate_ratios(
    scene: Scene,
    sal: SalienceGrid,
    rhos: Sequence[float],
    cfg: CbsConfig = CbsConfig(),
    mask: Optional[SupervisionMask] = None,
) -> List[EvalRow]:
    """One row per keeping ratio: tokens kept, recalls and the token-count cost proxy."""
    mask = mask if mask is not None else ras_mask(scene, sal.grid)
    w = token_weights(sal, cfg, gt_distribution(scene))
    n = sal.n_tokens
    rows = []
    for rho in rhos:
        tok = select_tokens(sal, w, rho)
        rows.append(
            EvalRow(
                rho=float(rho),
                tokens_kept=len(tok),
                foreground_recall=foreground_recall(tok, mask),
                per_class_recall=tuple(float(r) for r in perclass_recall(tok, mask, scene)),
                flop_proxy=len(tok) / n,
            )
        )
    return rows


def write_eval_csv(rows: Sequence[EvalRow], class_names: Sequence[str], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["rho", "tokens_kept", "foreground_recall"] + [f"recall_{c}" for c in class_names] + ["flop_proxy"])
        for r in rows:
            out.writerow(
                [repr(r.rho), r.tokens_kept, repr(r.foreground_recall)]
                + [repr(v) for v in r.per_class_recall]
                + [repr(r.flop_proxy)]
            )


def rare_class_comparison(
    scene: Scene,
    sal: SalienceGrid,
    rare_class: int,
    rho: float,
    lam: float = 1.5,
    mask: Optional[SupervisionMask] = None,
):
    """Recall of ``rare_class`` under CBS-reweighted selection and under plain max-logit top-k.

    CBS here draws its per-class budget from the ground-truth box counts.
    """
    mask = mask if mask is not None else ras_mask(scene, sal.grid)
    cfg = CbsConfig(lam=lam, distribution_source="gt")
    w = token_weights(sal, cfg, gt_distribution(scene))
    cbs = perclass_recall(select_tokens(sal, w, rho), mask, scene)[rare_class]
    plain = perclass_recall(plain_topk(sal, rho), mask, scene)[rare_class]
    return float(cbs), float(plain)

