"""Temperature-free InfoNCE with dot-product similarity.

The positive for anchor b is candidate b; the denominator runs over the whole
candidate row (including the positive) plus, when given, one per-anchor hard
negative.  `torch.nn.functional.cross_entropy` supplies the log-sum-exp
stabilization (max subtraction).
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


def _check(name, t):
    if t.ndim < 2 or t.shape[0] == 0:
        raise ValueError(f"{name}: need a non-empty batch of embeddings")
    if not torch.isfinite(t).all():
        raise ValueError(f"{name}: non-finite embeddings")


def info_nce(anchors: torch.Tensor, positives: torch.Tensor,
             hard_negatives: torch.Tensor | None = None,
             reduction: str = "mean") -> tuple[torch.Tensor, dict]:
    """Anchors (B, D) vs aligned positives (B, D); optional hard negatives (B, D).

    Returns (loss, diagnostics) with contrastive accuracy over the B (or B+1)
    candidates of each row.
    """
    _check("anchors", anchors)
    _check("positives", positives)
    if anchors.shape != positives.shape:
        raise ValueError("anchors and positives must share a shape")
    logits = anchors @ positives.t()
    if hard_negatives is not None:
        _check("hard_negatives", hard_negatives)
        own = (anchors * hard_negatives).sum(dim=1, keepdim=True)
        logits = torch.cat([logits, own], dim=1)
    labels = torch.arange(anchors.shape[0], device=anchors.device)
    loss = F.cross_entropy(logits, labels, reduction=reduction)
    with torch.no_grad():
        acc = (logits.argmax(dim=1) == labels).float().mean().item()
    return loss, {"contrastive_accuracy": acc, "n_candidates": logits.shape[1]}


def grid_info_nce(anchors: torch.Tensor, candidates: torch.Tensor,
                  reduction: str = "mean") -> tuple[torch.Tensor, dict]:
    """Sequence contrast: anchors and candidates (B, K, D).

    Anchor (b, k) is positive with candidate (b, k); its denominator sums over
    every (b', k') pair, so each row has B*K candidates.  The mean reduction
    divides by B*K.
    """
    if anchors.ndim != 3 or anchors.shape != candidates.shape:
        raise ValueError("anchors/candidates must both be (B, K, D)")
    b, k, d = anchors.shape
    return info_nce(anchors.reshape(b * k, d), candidates.reshape(b * k, d),
                    reduction=reduction)
