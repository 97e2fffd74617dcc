"""Categorical projection of a shifted value distribution onto fixed atoms.

Used by the distributional objectives: the Bellman-shifted support
r + gamma * z is re-expressed on the original atom grid by splitting each
atom's probability mass linearly between the two neighbouring grid points.
"""

from __future__ import annotations

import torch


def atom_support(v_min: float = -10.0, v_max: float = 10.0, n_atoms: int = 51,
                 dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Evenly spaced atom grid.  Built in float64 by default so on-grid
    targets project exactly instead of leaking mass to a neighbour."""
    if n_atoms < 2:
        raise ValueError("need at least two atoms")
    return torch.linspace(v_min, v_max, n_atoms, dtype=dtype)


def categorical_projection(next_dist: torch.Tensor, rewards: torch.Tensor,
                           discounts: torch.Tensor, support: torch.Tensor) -> torch.Tensor:
    """Project sum_j p_j * delta(r + d * z_j) onto `support`.

    next_dist: (B, N) probabilities, rewards/discounts: (B,) with the
    terminal mask already folded into `discounts` (0 at episode end).
    Returns (B, N) probabilities summing to one per row.
    """
    b_sz, n = next_dist.shape
    if support.shape != (n,):
        raise ValueError("support length must match distribution atoms")
    out_dtype = next_dist.dtype
    dist = next_dist.double()
    z = support.double()
    v_min = z[0]
    dz = z[1] - z[0]
    tz = rewards.double().unsqueeze(1) + discounts.double().unsqueeze(1) * z.unsqueeze(0)
    tz = tz.clamp(z[0], z[-1])
    pos = ((tz - v_min) / dz).clamp(0.0, float(n - 1))
    lower = pos.floor()
    upper = pos.ceil()
    same = lower == upper  # landed exactly on an atom: all mass goes there
    w_lower = torch.where(same, torch.ones_like(pos), upper - pos)
    w_upper = pos - lower
    proj = torch.zeros_like(dist)
    proj.scatter_add_(1, lower.long(), dist * w_lower)
    proj.scatter_add_(1, upper.long(), dist * w_upper)
    return proj.to(out_dtype)
