"""Reads and writes rasters in the pipeline's interchange format: a raw
little-endian sample file (`.f32` for planes, `.u8` for masks) paired
with a JSON sidecar of the same stem.
"""

# Standard library imports
import json
from pathlib import Path
from typing import Optional, Tuple, Union

# Third-party imports
import numpy as np
from pydantic import BaseModel, Field

# Application imports
from common.storage import IDataStore, IDataStoreFactory
from oxymap.core.raster import ImagePlane, Mask
from oxymap.errors import ContainerFormatError, DimensionMismatchError

PathLike = Union[Path, str]

_SAMPLE_SUFFIXES = (".f32", ".u8")


class RasterSidecar(BaseModel):
    """Metadata stored next to every raster file."""

    width: int = Field(ge=1)
    height: int = Field(ge=1)
    channels: int = Field(default=1, ge=1)
    pitch_mm: float = Field(default=1.0, gt=0)
    semantic: str = ""


def _stem(fpath: PathLike) -> Path:
    """Strips a known sample suffix so that "a", "a.f32" and "a.json"
    all name the same raster.
    """
    fpath = Path(fpath)
    if fpath.suffix in _SAMPLE_SUFFIXES + (".json",):
        return fpath.with_suffix("")
    return fpath


def _sample_path(fpath: PathLike, suffix: str) -> Path:
    stem = _stem(fpath)
    return stem.with_name(stem.name + suffix)


def _sidecar_path(fpath: PathLike) -> Path:
    stem = _stem(fpath)
    return stem.with_name(stem.name + ".json")


def _write_sidecar(
    store: IDataStore, fpath: PathLike, sidecar: RasterSidecar
) -> None:
    with store.open_file(_sidecar_path(fpath), "w") as f:
        json.dump(sidecar.model_dump(), f, indent=2)


def read_sidecar(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> RasterSidecar:
    """Reads the JSON sidecar belonging to a raster.

    Args:
        fpath (`pathlib.Path` | `str`): The raster path, with or
            without its sample suffix.

        store (`IDataStore`): The data store. Defaults to the
            store configured for the current environment.

    Returns:
        (`RasterSidecar`): The metadata.
    """
    store = store or IDataStoreFactory.get()
    with store.open_file(_sidecar_path(fpath), "r") as f:
        return RasterSidecar(**json.load(f))


def write_stack(
    data: np.ndarray,
    fpath: PathLike,
    pitch_mm: float = 1.0,
    semantic: str = "",
    store: Optional[IDataStore] = None,
) -> Path:
    """Writes a single- or multi-channel raster as float32 samples with
    the channel axis outermost.

    Args:
        data (`np.ndarray`): An array shaped `(H, W)` or `(C, H, W)`.

        fpath (`pathlib.Path` | `str`): The destination path.

        pitch_mm (`float`): The pixel pitch. Defaults to 1.

        semantic (`str`): A description of the quantity stored.

        store (`IDataStore`): The data store. Defaults to the
            store configured for the current environment.

    Returns:
        (`pathlib.Path`): The path of the sample file.
    """
    # Normalize shape to (C, H, W)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data[np.newaxis]
    if data.ndim != 3:
        raise DimensionMismatchError(
            "Expected a raster of two or three dimensions, received "
            f"{data.ndim}."
        )

    # Write samples and sidecar
    store = store or IDataStoreFactory.get()
    out = _sample_path(fpath, ".f32")
    with store.open_file(out, "wb") as f:
        f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    _write_sidecar(
        store,
        fpath,
        RasterSidecar(
            width=data.shape[2],
            height=data.shape[1],
            channels=data.shape[0],
            pitch_mm=pitch_mm,
            semantic=semantic,
        ),
    )
    return store.resolve(out)


def read_stack(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> Tuple[np.ndarray, RasterSidecar]:
    """Reads a float32 raster written by `write_stack`.

    Raises:
        `ContainerFormatError` if the sample count disagrees with
            the sidecar.

    Args:
        fpath (`pathlib.Path` | `str`): The raster path.

        store (`IDataStore`): The data store. Defaults to the
            store configured for the current environment.

    Returns:
        ((`np.ndarray`, `RasterSidecar`)): The float64 samples shaped
            `(C, H, W)` and their metadata.
    """
    store = store or IDataStoreFactory.get()
    sidecar = read_sidecar(fpath, store)
    with store.open_file(_sample_path(fpath, ".f32"), "rb") as f:
        raw = np.frombuffer(f.read(), dtype="<f4")
    expected = sidecar.channels * sidecar.height * sidecar.width
    if raw.size != expected:
        raise ContainerFormatError(
            f'Raster "{fpath}" holds {raw.size} sample(s) but its sidecar '
            f"declares {expected}."
        )
    data = raw.astype(np.float64).reshape(
        sidecar.channels, sidecar.height, sidecar.width
    )
    return data, sidecar


def write_plane(
    plane: ImagePlane, fpath: PathLike, store: Optional[IDataStore] = None
) -> Path:
    """Writes an image plane. Invalid pixels are stored as NaN."""
    return write_stack(
        plane.data, fpath, plane.pitch_mm, plane.semantic, store=store
    )


def read_plane(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> ImagePlane:
    """Reads a single-channel image plane.

    Raises:
        `DimensionMismatchError` if the raster has several channels.
    """
    data, sidecar = read_stack(fpath, store)
    if sidecar.channels != 1:
        raise DimensionMismatchError(
            f'Expected a single-channel raster at "{fpath}", found '
            f"{sidecar.channels} channels."
        )
    return ImagePlane(
        data=data[0], pitch_mm=sidecar.pitch_mm, semantic=sidecar.semantic
    )


def write_mask(
    mask: Mask,
    fpath: PathLike,
    pitch_mm: float = 1.0,
    store: Optional[IDataStore] = None,
) -> Path:
    """Writes a mask as 0/1 bytes with a sidecar."""
    store = store or IDataStoreFactory.get()
    out = _sample_path(fpath, ".u8")
    with store.open_file(out, "wb") as f:
        f.write(mask.bits.astype(np.uint8).tobytes())
    height, width = mask.shape
    _write_sidecar(
        store,
        fpath,
        RasterSidecar(
            width=width, height=height, pitch_mm=pitch_mm, semantic="mask"
        ),
    )
    return store.resolve(out)


def read_mask(fpath: PathLike, store: Optional[IDataStore] = None) -> Mask:
    """Reads a mask. Byte masks (`.u8`) are read directly; float
    rasters (`.f32`) select their finite, nonzero pixels.

    Raises:
        `ContainerFormatError` if the byte count disagrees with the
            sidecar.
    """
    store = store or IDataStoreFactory.get()
    if Path(fpath).suffix == ".f32":
        data, _ = read_stack(fpath, store)
        return Mask(bits=np.isfinite(data[0]) & (data[0] != 0))

    sidecar = read_sidecar(fpath, store)
    with store.open_file(_sample_path(fpath, ".u8"), "rb") as f:
        raw = np.frombuffer(f.read(), dtype=np.uint8)
    if raw.size != sidecar.height * sidecar.width:
        raise ContainerFormatError(
            f'Mask "{fpath}" holds {raw.size} byte(s) but its sidecar '
            f"declares {sidecar.height * sidecar.width}."
        )
    return Mask(bits=raw.reshape(sidecar.height, sidecar.width) != 0)
