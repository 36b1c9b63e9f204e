"""Adversarial and reconstruction objectives, the generated-pair
buffer and the learning-rate schedule.
"""

# Standard library imports
import random
from typing import List, Optional, Tuple

# Third-party imports
import torch
import torch.nn.functional as F
from torch import nn

# Application imports
from oxymap.errors import DimensionMismatchError

Pair = Tuple[torch.Tensor, torch.Tensor]


def _bce(logits: torch.Tensor, target: float) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(
        logits, torch.full_like(logits, target)
    )


def _check_pair_shapes(
    x: torch.Tensor, y: torch.Tensor, y_hat: torch.Tensor
) -> None:
    if y.shape != y_hat.shape or x.shape[-2:] != y.shape[-2:]:
        raise DimensionMismatchError(
            f"Inconsistent shapes: x {tuple(x.shape)}, y {tuple(y.shape)}, "
            f"y_hat {tuple(y_hat.shape)}."
        )


def discriminator_loss(
    discriminator: nn.Module,
    x: torch.Tensor,
    y: torch.Tensor,
    y_hat: torch.Tensor,
    real_label: float = 0.9,
    pooled: Optional[Pair] = None,
) -> torch.Tensor:
    """The discriminator loss `-E[t log D(x, y)] - E[(1 - t) log(1 -
    D(x, y))]` on the true pair with the smoothed target
    `t = real_label`, plus `-E[log(1 - D(x, y_hat))]` on the current
    generated pair. When `pooled` is given, a further
    `-E[log(1 - D(x', y'))]` term on the buffered pair is added.
    Generated saturation is detached so only the discriminator learns.

    Raises:
        `DimensionMismatchError` if the target and prediction differ.

    Args:
        discriminator (`nn.Module`): Maps `(x, y)` to patch logits.

        x (`torch.Tensor`): The input batch.

        y (`torch.Tensor`): The true saturation in `[-1, 1]`.

        y_hat (`torch.Tensor`): The generated saturation.

        real_label (`float`): The discriminator's real target.

        pooled (`tuple` of `torch.Tensor`): A buffered generated pair.

    Returns:
        (`torch.Tensor`): The scalar loss.
    """
    _check_pair_shapes(x, y, y_hat)
    loss = _bce(discriminator(x, y), real_label)
    loss = loss + _bce(discriminator(x, y_hat.detach()), 0.0)
    if pooled is not None:
        pooled_x, pooled_y = pooled
        loss = loss + _bce(discriminator(pooled_x, pooled_y.detach()), 0.0)
    return loss


def generator_adversarial_loss(
    discriminator: nn.Module, x: torch.Tensor, y_hat: torch.Tensor
) -> torch.Tensor:
    """The non-saturating generator loss `-E[log D(x, y_hat)]`. Label
    smoothing never enters it.
    """
    logits = discriminator(x, y_hat)
    return _bce(logits, 1.0)


def l1_loss(y: torch.Tensor, y_hat: torch.Tensor) -> torch.Tensor:
    """The mean absolute difference.

    Raises:
        `DimensionMismatchError` if the shapes differ.
    """
    if y.shape != y_hat.shape:
        raise DimensionMismatchError(
            f"Cannot compare {tuple(y.shape)} with {tuple(y_hat.shape)}."
        )
    return torch.mean(torch.abs(y - y_hat))


def generator_objective(
    loss_g_adv: torch.Tensor, loss_l1: torch.Tensor, lambda_l1: float
) -> torch.Tensor:
    """The full generator objective: adversarial term plus weighted L1."""
    return loss_g_adv + lambda_l1 * loss_l1


class ImagePool:
    """A fixed-size history of generated pairs. Until the buffer fills,
    every pair is stored and returned. Afterwards each query returns,
    with even odds, either the new pair or a stored pair that the new
    one then replaces.
    """

    def __init__(self, size: int, seed: int = 0) -> None:
        """Initializes a new instance of an `ImagePool`.

        Raises:
            `ValueError` if the size is not positive.

        Args:
            size (`int`): The capacity.

            seed (`int`): Seeds the replacement draws.

        Returns:
            `None`
        """
        if size < 1:
            raise ValueError("The buffer size must be at least one.")
        self.size = size
        self.items: List[Pair] = []
        self._rng = random.Random(seed)

    def __len__(self) -> int:
        return len(self.items)

    def query(self, x: torch.Tensor, y_hat: torch.Tensor) -> Pair:
        """Stores a generated pair and returns the pair to train on."""
        pair = (x.detach().clone(), y_hat.detach().clone())
        if len(self.items) < self.size:
            self.items.append(pair)
            return pair
        if self._rng.random() < 0.5:
            k = self._rng.randrange(self.size)
            stored, self.items[k] = self.items[k], pair
            return stored
        return pair


def lr_factor(epoch: int, epochs: int) -> float:
    """The learning-rate multiplier: one for the first half of training,
    then decreasing linearly to zero at the end.
    """
    half = epochs // 2
    if epoch < half:
        return 1.0
    return max(0.0, 1.0 - (epoch - half) / float(epochs - half))
