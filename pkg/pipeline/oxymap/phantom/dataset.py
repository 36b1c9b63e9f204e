"""Assembles paired training patches from synthetic scenes and records
them in a JSON-lines manifest.
"""

# Standard library imports
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np
import pandas as pd
from django.conf import settings
from tqdm import tqdm

# Application imports
from common.geometry import PixelBox
from common.logger import LoggerFactory
from common.storage import IDataStore, IDataStoreFactory
from oxymap.core.io import read_plane, read_stack, write_plane, write_stack
from oxymap.core.raster import StO2Map
from oxymap.errors import DimensionMismatchError, ManifestError
from oxymap.phantom.render import make_reference, render_structured
from oxymap.phantom.scene import Scene
from oxymap.phantom.tensor import (
    InputTensor,
    build_input_tensor,
    in_phase_crop,
)
from oxymap.photon.forward import IForwardModel

PathLike = Union[Path, str]

MANIFEST_NAME = "manifest.jsonl"

MANIFEST_COLUMNS = [
    "scene",
    "patch",
    "row",
    "col",
    "size",
    "stride",
    "flip_h",
    "flip_v",
    "input_path",
    "target_path",
]

logger = LoggerFactory.get("OXYMAP.DATASET")


@dataclass(frozen=True)
class DatasetSample:
    """One scene's network input and its ground-truth saturation."""

    name: str
    tensor: InputTensor
    target: StO2Map

    def __post_init__(self) -> None:
        if self.target.shape[0] < self.tensor.shape[0] or (
            self.target.shape[1] < self.tensor.shape[1]
        ):
            raise DimensionMismatchError(
                f"The target {self.target.shape} does not cover the input "
                f"{self.tensor.shape}."
            )


def make_sample(
    scene: Scene,
    name: str,
    noise_sigma: float = 0.0,
    fx: Optional[float] = None,
    wavelengths_nm: Optional[Sequence[float]] = None,
    model: Optional[IForwardModel] = None,
) -> DatasetSample:
    """Renders the two single-phase snapshots of a scene, encodes them
    with matching reference measurements and pairs the result with the
    scene's saturation.

    Args:
        scene (`Scene`): The scene.

        name (`str`): The sample identifier.

        noise_sigma (`float`): The relative noise level. Defaults to 0.

        fx (`float`): The illumination frequency. Defaults to `FX_AC`.

        wavelengths_nm (`list` of `float`): The two snapshot
            wavelengths. Defaults to `SNAPSHOT_WAVELENGTHS_NM`.

        model (`IForwardModel`): The forward model.

    Returns:
        (`DatasetSample`): The sample.
    """
    fx = settings.FX_AC if fx is None else fx
    first, second = wavelengths_nm or settings.SNAPSHOT_WAVELENGTHS_NM
    rng = np.random.default_rng(scene.seed)
    images, refs = [], []
    for wavelength in (first, second):
        images.append(
            render_structured(
                scene, wavelength, fx, 0.0, noise_sigma, rng, model
            )
        )
        refs.append(
            make_reference(
                scene.shape, scene.pitch_mm, wavelength, fx, model=model
            )
        )
    tensor = build_input_tensor(images[0], images[1], refs[0], refs[1])
    return DatasetSample(name=name, tensor=tensor, target=scene.sto2)


def patch_boxes(
    shape: Tuple[int, int], patch_size: int, stride: int
) -> List[PixelBox]:
    """Places square patches over a raster at a fixed stride.

    Raises:
        `DimensionMismatchError` if the raster is smaller than a patch.
    """
    height, width = shape
    if height < patch_size or width < patch_size:
        raise DimensionMismatchError(
            f"A {height}x{width} scene is smaller than the {patch_size} "
            "pixel patch size."
        )
    return PixelBox.full(height, width).tile(patch_size, stride, stride)


def make_dataset(
    samples: Sequence[DatasetSample],
    out_dir: PathLike,
    patch_size: Optional[int] = None,
    stride_range: Optional[Tuple[int, int]] = None,
    flip_prob: Optional[float] = None,
    augment: bool = True,
    seed: int = 0,
    store: Optional[IDataStore] = None,
) -> pd.DataFrame:
    """Segments every sample into paired input and target patches at a
    stride drawn once per sample, optionally mirroring each pair, and
    writes the patches and a manifest to the output directory.

    Raises:
        `DimensionMismatchError` if a sample is smaller than a patch.

    Args:
        samples (`list` of `DatasetSample`): The samples.

        out_dir (`pathlib.Path` | `str`): The output directory.

        patch_size (`int`): The patch side. Defaults to
            `DATASET_PATCH_SIZE`.

        stride_range (`tuple` of `int`): The inclusive stride range.
            Defaults to `DATASET_STRIDE_RANGE`.

        flip_prob (`float`): The chance of each mirror axis. Defaults
            to `DATASET_FLIP_PROB`.

        augment (`bool`): Whether to mirror patches. Defaults to `True`.

        seed (`int`): Seeds the stride and flip draws.

        store (`IDataStore`): The data store.

    Returns:
        (`pd.DataFrame`): The manifest, one row per patch.
    """
    # Resolve defaults
    patch_size = patch_size or settings.DATASET_PATCH_SIZE
    lo, hi = stride_range or settings.DATASET_STRIDE_RANGE
    flip_prob = settings.DATASET_FLIP_PROB if flip_prob is None else flip_prob
    store = store or IDataStoreFactory.get()
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)

    # Check every sample before writing anything
    plans = []
    for sample in samples:
        stride = int(rng.integers(lo, hi + 1))
        boxes = patch_boxes(sample.tensor.shape, patch_size, stride)
        plans.append((sample, stride, boxes))

    # Cut and write patches
    records = []
    for sample, stride, boxes in tqdm(plans, desc="Writing patches"):
        for k, box in enumerate(boxes):
            flip_h = bool(augment and rng.random() < flip_prob)
            flip_v = bool(augment and rng.random() < flip_prob)
            # Keep the mirrored patch in checkerboard phase
            row, col, flip_h, flip_v = in_phase_crop(
                sample.tensor.shape,
                patch_size,
                box.row,
                box.col,
                flip_h,
                flip_v,
            )
            box = PixelBox(
                row=row, col=col, height=patch_size, width=patch_size
            )
            tensor = sample.tensor.crop(box).flip(flip_h, flip_v)
            target = box.crop(sample.target.data)
            if flip_h:
                target = target[:, ::-1]
            if flip_v:
                target = target[::-1, :]

            stem = f"{sample.name}_{k:03d}"
            input_path = f"inputs/{stem}.f32"
            target_path = f"targets/{stem}.f32"
            write_stack(
                tensor.data,
                out_dir / input_path,
                pitch_mm=tensor.pitch_mm,
                semantic="input",
                store=store,
            )
            write_plane(
                sample.target.plane.with_data(target),
                out_dir / target_path,
                store=store,
            )
            records.append(
                {
                    "scene": sample.name,
                    "patch": k,
                    "row": box.row,
                    "col": box.col,
                    "size": patch_size,
                    "stride": stride,
                    "flip_h": flip_h,
                    "flip_v": flip_v,
                    "input_path": input_path,
                    "target_path": target_path,
                }
            )

    # Write manifest
    manifest = pd.DataFrame.from_records(records, columns=MANIFEST_COLUMNS)
    logger.info(
        f"Bulk writing {len(manifest)} patch record(s) for "
        f"{len(samples)} scene(s)."
    )
    with store.open_file(out_dir / MANIFEST_NAME, "w") as f:
        manifest.to_json(f, orient="records", lines=True)
    return manifest


def read_manifest(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> pd.DataFrame:
    """Reads a dataset manifest.

    Raises:
        `ManifestError` if required columns are missing.

    Args:
        fpath (`pathlib.Path` | `str`): The manifest, or the dataset
            directory holding it.

        store (`IDataStore`): The data store.

    Returns:
        (`pd.DataFrame`): The manifest.
    """
    store = store or IDataStoreFactory.get()
    fpath = Path(fpath)
    if fpath.suffix != ".jsonl":
        fpath = fpath / MANIFEST_NAME
    with store.open_file(fpath, "r") as f:
        manifest = pd.read_json(f, orient="records", lines=True)
    missing = set(MANIFEST_COLUMNS) - set(manifest.columns)
    if missing:
        raise ManifestError(
            f'The dataset manifest "{fpath}" lacks the column(s) '
            f"{sorted(missing)}."
        )
    return manifest


def load_patch(
    record: pd.Series, root: PathLike, store: Optional[IDataStore] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Reads one manifest record's input `(3, S, S)` and target `(S, S)`
    arrays.
    """
    root = Path(root)
    tensor, _ = read_stack(root / record["input_path"], store)
    target = read_plane(root / record["target_path"], store)
    return tensor, target.data
