"""Scores saturation maps from several methods against one ground truth.
"""

# Standard library imports
from typing import Dict, Optional, Tuple

# Third-party imports
from pydantic import BaseModel

# Application imports
from common.geometry import PixelBox
from oxymap.core.raster import Mask, StO2Map, nmae

BASELINE_METHOD = "ssop"


class MethodComparison(BaseModel):
    """Per-method NMAE on a shared test set."""

    pixels: int
    nmae: Dict[str, float]
    improvement_over_baseline: Dict[str, float]
    """The relative NMAE reduction `(baseline - method) / baseline` of
    each method other than the baseline. Empty when the baseline was
    not scored.
    """

    baseline: str = BASELINE_METHOD


def crop_to_common(
    preds: Dict[str, StO2Map], gt: StO2Map, mask: Optional[Mask] = None
) -> Tuple[Dict[str, StO2Map], StO2Map, Optional[Mask]]:
    """Crops every map to the top-left extent they all share. Generator
    outputs are cropped this way to a multiple of the network's size
    granularity, so the crop aligns them with the full-frame maps.
    """
    shapes = [gt.shape] + [p.shape for p in preds.values()]
    box = PixelBox.full(min(s[0] for s in shapes), min(s[1] for s in shapes))

    def crop(m: StO2Map) -> StO2Map:
        return StO2Map(plane=m.plane.with_data(box.crop(m.data)))

    return (
        {k: crop(p) for k, p in preds.items()},
        crop(gt),
        None if mask is None else Mask(bits=box.crop(mask.bits)),
    )


def compare_methods(
    preds: Dict[str, StO2Map],
    gt: StO2Map,
    mask: Optional[Mask] = None,
    baseline: str = BASELINE_METHOD,
) -> MethodComparison:
    """Computes the NMAE of every prediction over the same pixels. The
    common mask keeps only pixels that are valid in every prediction,
    so methods that lose their borders do not gain an easier test set.

    Raises:
        `ValueError` if no prediction is given.

        `DimensionMismatchError` if the maps differ in shape.

        `EmptyMaskError` if no pixel is shared.

    Args:
        preds (`dict` of `str`, `StO2Map`): Predictions keyed by method.

        gt (`StO2Map`): The ground truth.

        mask (`Mask`): Pixels to score. Defaults to every pixel.

        baseline (`str`): The method the others are measured against.

    Returns:
        (`MethodComparison`): The scores.
    """
    if not preds:
        raise ValueError("At least one prediction is required.")
    common = mask if mask is not None else Mask.full(*gt.shape)
    for pred in preds.values():
        common = common & Mask.from_plane(pred.plane)

    scores = {
        method: nmae(pred, gt, common)
        for method, pred in sorted(preds.items())
    }
    improvement = {}
    if baseline in scores and scores[baseline] > 0:
        improvement = {
            method: (scores[baseline] - score) / scores[baseline]
            for method, score in scores.items()
            if method != baseline
        }
    return MethodComparison(
        pixels=common.count,
        nmae=scores,
        improvement_over_baseline=improvement,
        baseline=baseline,
    )
