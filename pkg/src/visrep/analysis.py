"""Activation heatmaps from a convolutional feature map's first principal
component (the Eigen-CAM construction): no gradients, no class labels, just
the dominant spatial pattern of the representation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class CamHeatmap:
    """H x W array in [0, 1]; constant inputs map to all-zero."""

    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def eigen_cam(feature_map, out_size: int = 84) -> CamHeatmap:
    """Project each spatial position's feature vector onto the map's first
    singular direction, then upsample to `out_size` and min-max normalize.

    Accepts (D, H, W) or a singleton batch (1, D, H, W), torch or numpy.
    The sign is fixed so the projected pattern has non-negative mean, making
    the output independent of the SVD's sign convention.  Normalization
    happens after the bilinear resize so the returned array attains 0 and 1
    exactly.
    """
    z = feature_map.detach().cpu().numpy() if torch.is_tensor(feature_map) \
        else np.asarray(feature_map)
    if z.ndim == 4:
        if z.shape[0] != 1:
            raise ValueError("pass one feature map at a time")
        z = z[0]
    if z.ndim != 3:
        raise ValueError(f"expected (D, H, W), got shape {z.shape}")
    if not np.isfinite(z).all():
        raise ValueError("feature map contains non-finite values")
    d, h, w = z.shape
    flat = z.reshape(d, h * w).astype(np.float64)
    if not flat.any():
        return CamHeatmap(np.zeros((out_size, out_size)))
    # cam_j = u1 . column_j = s1 * v1_j: the first right-singular vector
    # carries the spatial pattern
    u, s, vt = np.linalg.svd(flat, full_matrices=False)
    cam = s[0] * vt[0]
    if cam.mean() < 0:
        cam = -cam
    cam = cam.reshape(h, w)
    up = F.interpolate(torch.from_numpy(cam)[None, None],
                       size=(out_size, out_size), mode="bilinear",
                       align_corners=False)[0, 0].numpy()
    lo, hi = up.min(), up.max()
    if hi - lo < 1e-12:  # constant pattern carries no spatial signal
        return CamHeatmap(np.zeros((out_size, out_size)))
    return CamHeatmap((up - lo) / (hi - lo))


def cam_from_stack(stack, obs, stage: int = -1, out_size: int = 84) -> CamHeatmap:
    """Heatmap of `stack`'s backbone activations for one observation stack.

    `obs` is (4, 84, 84) uint8 or unit-float; `stage` indexes the backbone's
    residual stages (default: last).
    """
    x = np.asarray(obs)
    if x.dtype == np.uint8:
        x = x.astype(np.float32) / 255.0
    with torch.no_grad():
        maps = stack.backbone.stage_maps(torch.from_numpy(x)[None].float())
    return eigen_cam(maps[stage], out_size=out_size)
