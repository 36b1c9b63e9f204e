"""Region-of-interest saturation trends over alternating-wavelength
frame sequences.
"""

# Standard library imports
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

# Third-party imports
import numpy as np
import pandas as pd
from django.conf import settings
from matplotlib.figure import Figure

# Application imports
from common.geometry import PixelBox
from common.logger import LoggerFactory
from common.storage import IDataStore, IDataStoreFactory
from oxymap.chromophore.basis import ChromophoreBasis
from oxymap.core.io import read_plane
from oxymap.core.raster import ImagePlane, StO2Map, plane_statistics
from oxymap.errors import (
    DimensionMismatchError,
    ManifestError,
    WavelengthMismatchError,
)
from oxymap.neural.engine import GeneratorWeights, forward_generator
from oxymap.phantom.tensor import build_input_tensor
from oxymap.photon.lut import ReflectanceLut
from oxymap.sfdi.calibration import ReferenceMeasurement, reference_at
from oxymap.ssop.pipeline import ssop_sto2

PathLike = Union[Path, str]

FRAME_COLUMNS = ["t_seconds", "wavelength_nm", "path"]

SERIES_COLUMNS = ["t", "mean_sto2", "std_sto2", "method"]

METHODS = ("ssop", "oxygan")

PAIRINGS = ("adjacent", "sliding")

logger = LoggerFactory.get("OXYMAP.TIMESERIES")


@dataclass(frozen=True)
class FramePair:
    """Two frames at different wavelengths treated as one snapshot,
    stamped with the later frame's time.
    """

    t_seconds: float
    short: pd.Series
    long: pd.Series


def read_frame_manifest(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> pd.DataFrame:
    """Reads a JSON-lines frame manifest.

    Raises:
        `ManifestError` if a column is missing or the frames are not
            ordered in time.
    """
    store = store or IDataStoreFactory.get()
    with store.open_file(fpath, "r") as f:
        frames = pd.read_json(f, lines=True)
    missing = set(FRAME_COLUMNS) - set(frames.columns)
    if missing:
        raise ManifestError(
            f'The frame manifest "{fpath}" lacks column(s) {sorted(missing)}.'
        )
    if not frames["t_seconds"].is_monotonic_increasing:
        raise ManifestError(f'The frames in "{fpath}" are not time-ordered.')
    return frames


def pair_frames(
    frames: pd.DataFrame, pairing: str = "adjacent"
) -> List[FramePair]:
    """Groups frames into two-wavelength snapshots. Adjacent pairing
    takes disjoint consecutive pairs, so `2N + 1` frames give `N`
    snapshots and the unpaired trailing frame is dropped with a warning.
    Sliding pairing joins every frame to its preceding partner and
    gives one snapshot per frame after the first.

    Raises:
        `ValueError` if the pairing is unknown.

        `WavelengthMismatchError` if two paired frames share a
            wavelength.

    Args:
        frames (`pd.DataFrame`): The time-ordered frame manifest.

        pairing (`str`): "adjacent" or "sliding".

    Returns:
        (`list` of `FramePair`): The snapshots in time order.
    """
    if pairing not in PAIRINGS:
        raise ValueError(
            f'Unknown pairing "{pairing}". Expected one of {PAIRINGS}.'
        )
    rows = [row for _, row in frames.iterrows()]
    if pairing == "adjacent":
        starts = range(0, len(rows) - 1, 2)
        if len(rows) % 2:
            logger.warning(
                f"Dropping the unpaired trailing frame at "
                f"t = {rows[-1]['t_seconds']} s."
            )
    else:
        starts = range(0, len(rows) - 1)

    pairs = []
    for k in starts:
        a, b = rows[k], rows[k + 1]
        if np.isclose(a["wavelength_nm"], b["wavelength_nm"]):
            raise WavelengthMismatchError(
                f"Frames at t = {a['t_seconds']} s and t = {b['t_seconds']}"
                f" s share the wavelength {a['wavelength_nm']} nm."
            )
        short, long = a, b
        if b["wavelength_nm"] < a["wavelength_nm"]:
            short, long = b, a
        pairs.append(
            FramePair(t_seconds=float(b["t_seconds"]), short=short, long=long)
        )
    return pairs


def snapshot_sto2(
    img_short: ImagePlane,
    img_long: ImagePlane,
    method: str,
    refs: Dict[float, ReferenceMeasurement],
    wavelengths_nm: Tuple[float, float],
    lut: Optional[ReflectanceLut] = None,
    basis: Optional[ChromophoreBasis] = None,
    weights: Optional[GeneratorWeights] = None,
) -> StO2Map:
    """Estimates saturation from one two-wavelength snapshot with
    either the Fourier-filtering method or the generator.

    Raises:
        `ValueError` if the method is unknown or lacks its inputs.
    """
    ref_short = reference_at(refs, wavelengths_nm[0])
    ref_long = reference_at(refs, wavelengths_nm[1])
    if method == "ssop":
        if lut is None or basis is None:
            raise ValueError("The ssop method needs a lookup table and basis.")
        return ssop_sto2(
            {wavelengths_nm[0]: img_short, wavelengths_nm[1]: img_long},
            {wavelengths_nm[0]: ref_short, wavelengths_nm[1]: ref_long},
            lut,
            basis.select(wavelengths_nm),
            workers=1,
        )
    if method == "oxygan":
        if weights is None:
            raise ValueError("The oxygan method needs generator weights.")
        tensor = build_input_tensor(
            img_short,
            img_long,
            ref_short,
            ref_long,
            weights.manifest.size_multiple,
        )
        return forward_generator(tensor, weights, threads=1)
    raise ValueError(f'Unknown method "{method}". Expected one of {METHODS}.')


def roi_timeseries(
    manifest_fpath: PathLike,
    roi: PixelBox,
    method: str,
    refs: Dict[float, ReferenceMeasurement],
    lut: Optional[ReflectanceLut] = None,
    basis: Optional[ChromophoreBasis] = None,
    weights: Optional[GeneratorWeights] = None,
    pairing: str = "adjacent",
    workers: Optional[int] = None,
    store: Optional[IDataStore] = None,
) -> pd.DataFrame:
    """Computes the mean and standard deviation of the saturation
    inside a region of interest for every snapshot of a frame
    sequence. Snapshots are processed in parallel and reported in
    time order.

    Raises:
        `DimensionMismatchError` if the region leaves the image, or the
            area the generator sees when the method is "oxygan".

        `EmptyMaskError` if the region holds no valid saturation.

        `ManifestError` if the manifest is malformed.

    Args:
        manifest_fpath (`pathlib.Path` | `str`): The frame manifest.
            Frame paths are relative to its directory.

        roi (`PixelBox`): The region of interest.

        method (`str`): "ssop" or "oxygan".

        refs (`dict` of `float`, `ReferenceMeasurement`): References
            keyed by wavelength.

        lut (`ReflectanceLut`): The lookup table (ssop).

        basis (`ChromophoreBasis`): The extinction basis (ssop).

        weights (`GeneratorWeights`): The generator (oxygan).

        pairing (`str`): "adjacent" or "sliding".

        workers (`int`): Worker threads. Defaults to `WORKERS`.

        store (`IDataStore`): The data store.

    Returns:
        (`pd.DataFrame`): Columns `t`, `mean_sto2`, `std_sto2` and
            `method`, one row per snapshot.
    """
    if method not in METHODS:
        raise ValueError(
            f'Unknown method "{method}". Expected one of {METHODS}.'
        )
    store = store or IDataStoreFactory.get()
    root = Path(manifest_fpath).parent
    workers = workers or settings.WORKERS

    # Pair frames
    frames = read_frame_manifest(manifest_fpath, store)
    pairs = pair_frames(frames, pairing)
    if not pairs:
        return pd.DataFrame(columns=SERIES_COLUMNS)

    # Check the region against the image and the generator's input area
    height, width = read_plane(root / pairs[0].short["path"], store).shape
    if not roi.fits_within(height, width):
        raise DimensionMismatchError(
            f"The region {roi} lies outside the {height}x{width} frames."
        )
    if method == "oxygan" and weights is not None:
        m = weights.manifest.size_multiple
        if not roi.fits_within(height // m * m, width // m * m):
            raise DimensionMismatchError(
                f"The region {roi} lies outside the "
                f"{height // m * m}x{width // m * m} generator input area."
            )

    def measure(pair: FramePair) -> Tuple[float, float]:
        sto2 = snapshot_sto2(
            read_plane(root / pair.short["path"], store),
            read_plane(root / pair.long["path"], store),
            method,
            refs,
            (
                float(pair.short["wavelength_nm"]),
                float(pair.long["wavelength_nm"]),
            ),
            lut,
            basis,
            weights,
        )
        stats = plane_statistics(sto2.plane.with_data(roi.crop(sto2.data)))
        return stats.mean, stats.std

    # Measure every snapshot
    logger.info(
        f"Measuring {len(pairs)} snapshot(s) with {method} on "
        f"{workers} worker(s)."
    )
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(measure, pairs))

    return pd.DataFrame(
        {
            "t": [p.t_seconds for p in pairs],
            "mean_sto2": [r[0] for r in results],
            "std_sto2": [r[1] for r in results],
            "method": method,
        },
        columns=SERIES_COLUMNS,
    )


def read_checkpoints(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> pd.DataFrame:
    """Reads sparse reference saturations (columns `t`, `sto2`)."""
    store = store or IDataStoreFactory.get()
    with store.open_file(fpath, "r") as f:
        checkpoints = pd.read_csv(f)
    missing = {"t", "sto2"} - set(checkpoints.columns)
    if missing:
        raise ManifestError(
            f'The checkpoints "{fpath}" lack column(s) {sorted(missing)}.'
        )
    return checkpoints


def write_timeseries(
    series: pd.DataFrame, fpath: PathLike, store: Optional[IDataStore] = None
) -> Path:
    """Writes a series as CSV with the fixed column order."""
    store = store or IDataStoreFactory.get()
    with store.open_file(fpath, "w") as f:
        series[SERIES_COLUMNS].to_csv(f, index=False)
    return store.resolve(fpath)


def plot_timeseries(
    series: pd.DataFrame,
    fpath: PathLike,
    checkpoints: Optional[pd.DataFrame] = None,
    store: Optional[IDataStore] = None,
) -> Path:
    """Draws each method's mean saturation with a one standard
    deviation band and overlays the checkpoints as markers. Written
    as SVG.
    """
    store = store or IDataStoreFactory.get()
    fig = Figure(figsize=(10, 4))
    ax = fig.add_subplot()
    for method, group in series.groupby("method", sort=True):
        ax.plot(group["t"], group["mean_sto2"], label=method, linewidth=1.2)
        ax.fill_between(
            group["t"],
            group["mean_sto2"] - group["std_sto2"],
            group["mean_sto2"] + group["std_sto2"],
            alpha=0.2,
        )
    if checkpoints is not None and not checkpoints.empty:
        ax.plot(
            checkpoints["t"],
            checkpoints["sto2"],
            linestyle="none",
            marker="o",
            color="black",
            label="sfdi",
        )
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("StO2")
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="lower right")
    fig.tight_layout()
    with store.open_file(fpath, "wb") as f:
        fig.savefig(f, format="svg")
    return store.resolve(fpath)
