"""Convolutional backbones: game-agnostic spatial feature extractors.

All presets map a (4, 84, 84) stack to a (D_z, H_z, W_z) feature map. The
residual presets replace batch norm with group norm (16 channels per group,
one group when a layer is narrower than that) so statistics do not leak
across the pre-train / fine-tune boundary.

    r50like  bottleneck stages [3,4,6,3], widths 64..512 (x4)  -> (2048, 6, 6)
    r18like  basic stages [2,2,2,2], half the usual widths     -> (256, 6, 6)
    cnn3     the classic three-conv control architecture       -> (64, 7, 7)
    tiny     stem + two basic blocks at base width 8           -> (16, 6, 6)
"""

from __future__ import annotations

import torch
from torch import nn


def group_norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(max(1, channels // 16), channels)


class BasicBlock(nn.Module):
    def __init__(self, c_in, c_out, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.gn1 = group_norm(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1, bias=False)
        self.gn2 = group_norm(c_out)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or c_in != c_out:
            self.skip = nn.Sequential(nn.Conv2d(c_in, c_out, 1, stride=stride, bias=False),
                                      group_norm(c_out))
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        out = self.relu(self.gn1(self.conv1(x)))
        out = self.gn2(self.conv2(out))
        return self.relu(out + self.skip(x))


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, c_in, width, stride=1):
        super().__init__()
        c_out = width * self.expansion
        self.conv1 = nn.Conv2d(c_in, width, 1, bias=False)
        self.gn1 = group_norm(width)
        self.conv2 = nn.Conv2d(width, width, 3, stride=stride, padding=1, bias=False)
        self.gn2 = group_norm(width)
        self.conv3 = nn.Conv2d(width, c_out, 1, bias=False)
        self.gn3 = group_norm(c_out)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or c_in != c_out:
            self.skip = nn.Sequential(nn.Conv2d(c_in, c_out, 1, stride=stride, bias=False),
                                      group_norm(c_out))
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        out = self.relu(self.gn1(self.conv1(x)))
        out = self.relu(self.gn2(self.conv2(out)))
        out = self.gn3(self.conv3(out))
        return self.relu(out + self.skip(x))


def _residual_stage(block, c_in, width, depth, stride):
    layers = [block(c_in, width, stride)]
    c = width * getattr(block, "expansion", 1)
    for _ in range(depth - 1):
        layers.append(block(c, width, 1))
    return nn.Sequential(*layers), c


class Backbone(nn.Module):
    """Stem + stages; exposes per-stage maps for feature visualization."""

    def __init__(self, stem, stages, out_shape):
        super().__init__()
        self.stem = stem
        self.stages = nn.ModuleList(stages)
        self.out_shape = out_shape  # (D_z, H_z, W_z)

    def forward(self, x):
        if not torch.isfinite(x).all():
            raise ValueError("backbone input contains non-finite values")
        x = self.stem(x)
        for stage in self.stages:
            x = stage(x)
        return x

    def stage_maps(self, x):
        """Feature maps after the stem and after each stage."""
        maps = []
        x = self.stem(x)
        maps.append(x)
        for stage in self.stages:
            x = stage(x)
            maps.append(x)
        return maps


def _resnet(block, depths, widths, stem_width):
    stem = nn.Sequential(
        nn.Conv2d(4, stem_width, 7, stride=2, padding=3, bias=False),
        group_norm(stem_width),
        nn.ReLU(inplace=True),
    )
    stages = []
    c = stem_width
    for i, (d, w) in enumerate(zip(depths, widths)):
        stage, c = _residual_stage(block, c, w, d, stride=1 if i == 0 else 2)
        stages.append(stage)
    return stem, stages, c


def make_backbone(preset: str) -> Backbone:
    if preset == "r50like":
        stem, stages, c = _resnet(Bottleneck, (3, 4, 6, 3), (64, 128, 256, 512), 64)
        return Backbone(stem, stages, (c, 6, 6))
    if preset == "r18like":
        stem, stages, c = _resnet(BasicBlock, (2, 2, 2, 2), (32, 64, 128, 256), 32)
        return Backbone(stem, stages, (c, 6, 6))
    if preset == "cnn3":
        stem = nn.Sequential(nn.Conv2d(4, 32, 8, stride=4), nn.ReLU(inplace=True))
        stages = [
            nn.Sequential(nn.Conv2d(32, 64, 4, stride=2), nn.ReLU(inplace=True)),
            nn.Sequential(nn.Conv2d(64, 64, 3, stride=1), nn.ReLU(inplace=True)),
        ]
        return Backbone(stem, stages, (64, 7, 7))
    if preset == "tiny":
        stem = nn.Sequential(
            nn.Conv2d(4, 8, 7, stride=7),
            group_norm(8),
            nn.ReLU(inplace=True),
        )
        stages = [BasicBlock(8, 8, stride=2), BasicBlock(8, 16, stride=1)]
        return Backbone(stem, stages, (16, 6, 6))
    raise ValueError(f"unknown backbone preset {preset!r}")


PRESETS = ("r50like", "r18like", "cnn3", "tiny")
