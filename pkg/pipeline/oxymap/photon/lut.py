"""Builds, persists and inverts reflectance lookup tables that map a
pair of calibrated reflectances (DC and AC) back to absorption and
reduced scattering coefficients.

Inversion walks the forward table itself: every grid cell of the
(mua x musp) table is split into two triangles whose vertices are the
cell's reflectance pairs. A query is located in that mesh and its
barycentric weights are applied to the vertices' grid indices, which
are then mapped back to coefficients along the log-spaced grids. Nodes
therefore round-trip exactly, and a query that lands in no triangle is
out of gamut.
"""

# Standard library imports
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np
from django.conf import settings
from matplotlib.tri import Triangulation, TrapezoidMapTriFinder

# Application imports
from common.logger import LoggerFactory
from common.storage import IDataStore, IDataStoreFactory
from oxymap.core.raster import ImagePlane, Mask
from oxymap.errors import (
    ContainerFormatError,
    DimensionMismatchError,
    OutOfGamutError,
)
from oxymap.photon.forward import ForwardModelFactory, IForwardModel
from oxymap.photon.properties import OpticalPropertyMap

PathLike = Union[Path, str]

LUT_MAGIC = b"OXYLUT01"
LUT_VERSION = 1

logger = LoggerFactory.get("OXYMAP.LUT")


@dataclass(frozen=True)
class ReflectanceLut:
    """A regular grid of forward-model reflectances over absorption and
    reduced scattering, with the provenance needed to reproduce it.
    Tables are indexed `[mua, musp]`.
    """

    fx_dc: float
    fx_ac: float
    mua_grid: np.ndarray
    musp_grid: np.ndarray
    rd_dc: np.ndarray
    rd_ac: np.ndarray
    refractive_index: float
    model_id: str = "diffusion"
    version: int = LUT_VERSION

    def __post_init__(self) -> None:
        # Freeze arrays
        for name in ("mua_grid", "musp_grid", "rd_dc", "rd_ac"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

        # Validate frequencies
        if self.fx_dc != 0:
            raise ValueError(
                "The DC spatial frequency must be zero, received "
                f"{self.fx_dc}."
            )
        if not self.fx_ac > 0:
            raise ValueError(
                "The AC spatial frequency must be positive, received "
                f"{self.fx_ac}."
            )

        # Validate grids
        for name, grid in (("mua", self.mua_grid), ("musp", self.musp_grid)):
            if grid.ndim != 1 or grid.size < 2:
                raise ValueError(
                    f"The {name} grid must hold at least two samples."
                )
            if not np.all(np.diff(grid) > 0) or grid[0] <= 0:
                raise ValueError(
                    f"The {name} grid must be positive and strictly increasing."
                )

        # Validate tables
        expected = (self.mua_grid.size, self.musp_grid.size)
        for name, table in (("DC", self.rd_dc), ("AC", self.rd_ac)):
            if table.shape != expected:
                raise DimensionMismatchError(
                    f"The {name} table has shape {table.shape}; the grids "
                    f"require {expected}."
                )
            if not (np.all(table > 0) and np.all(table <= 1)):
                raise ValueError(
                    f"Every {name} reflectance must lie in (0, 1]."
                )
        if not np.all(np.diff(self.rd_dc, axis=0) < 0):
            raise ValueError(
                "DC reflectance must decrease strictly with absorption."
            )

    @property
    def shape(self) -> Tuple[int, int]:
        """The `(n_mua, n_musp)` grid size."""
        return self.rd_dc.shape

    @property
    def forward_model(self) -> IForwardModel:
        """The forward model that produced the table."""
        return ForwardModelFactory.create(self.model_id, self.refractive_index)

    @cached_property
    def inverter(self) -> "_MeshInverter":
        """The triangulated inverse, built on first use."""
        return _MeshInverter(self)

    def header(self) -> Dict:
        """Describes the table for persistence."""
        return {
            "version": self.version,
            "model_id": self.model_id,
            "refractive_index": self.refractive_index,
            "fx_dc": self.fx_dc,
            "fx_ac": self.fx_ac,
            "mua_grid": self.mua_grid.tolist(),
            "musp_grid": self.musp_grid.tolist(),
            "dtype": "<f4",
        }


class _MeshInverter:
    """Locates reflectance pairs inside the triangulated forward table."""

    def __init__(self, lut: ReflectanceLut) -> None:
        """Initializes a new instance of a `_MeshInverter`.

        Args:
            lut (`ReflectanceLut`): The table to invert.

        Returns:
            `None`
        """
        # Split each grid cell into two triangles
        n_mua, n_musp = lut.shape
        k = np.arange(n_mua * n_musp).reshape(n_mua, n_musp)[:-1, :-1].ravel()
        lower = np.stack([k, k + n_musp, k + 1], axis=1)
        upper = np.stack([k + 1, k + n_musp, k + n_musp + 1], axis=1)

        # Build mesh and point locator
        self._x = lut.rd_dc.ravel()
        self._y = lut.rd_ac.ravel()
        self._tri = Triangulation(
            self._x, self._y, np.concatenate([lower, upper])
        )
        self._finder = TrapezoidMapTriFinder(self._tri)

        # Record grid indices of each node
        node_i, node_j = np.divmod(np.arange(n_mua * n_musp), n_musp)
        self._node_ij = np.stack([node_i, node_j], axis=1).astype(np.float64)
        self._mua_grid = lut.mua_grid
        self._musp_grid = lut.musp_grid

        # Keep the table perimeter for diagnostics and exact edge hits
        edge = np.zeros((n_mua, n_musp), dtype=bool)
        edge[[0, -1], :] = True
        edge[:, [0, -1]] = True
        self._boundary = np.flatnonzero(edge.ravel())
        self._boundary_lookup = {
            (self._x[b], self._y[b]): b for b in self._boundary
        }

    def invert(
        self, rd_dc: np.ndarray, rd_ac: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Inverts flat arrays of reflectance pairs.

        Args:
            rd_dc (`np.ndarray`): DC reflectances.

            rd_ac (`np.ndarray`): AC reflectances.

        Returns:
            ((`np.ndarray`, `np.ndarray`, `np.ndarray`)): The absorption
                and scattering coefficients (NaN where unresolved) and a
                boolean array flagging out-of-gamut queries.
        """
        # Reject pairs outside the physical range outright
        x = np.asarray(rd_dc, dtype=np.float64)
        y = np.asarray(rd_ac, dtype=np.float64)
        feasible = (x > 0) & (x <= 1) & (y > 0) & (y <= 1)

        # Locate containing triangles
        tri_index = np.full(x.shape, -1, dtype=np.int64)
        if feasible.any():
            tri_index[feasible] = self._finder(x[feasible], y[feasible])

        # Compute grid-index coordinates by barycentric interpolation
        ij = np.full(x.shape + (2,), np.nan)
        found = tri_index >= 0
        if found.any():
            verts = self._tri.triangles[tri_index[found]]
            x0, y0 = self._x[verts[:, 0]], self._y[verts[:, 0]]
            c1x, c1y = self._x[verts[:, 1]] - x0, self._y[verts[:, 1]] - y0
            c2x, c2y = self._x[verts[:, 2]] - x0, self._y[verts[:, 2]] - y0
            bx, by = x[found] - x0, y[found] - y0
            det = c1x * c2y - c1y * c2x
            w1 = (bx * c2y - by * c2x) / det
            w2 = (c1x * by - c1y * bx) / det
            w0 = 1.0 - w1 - w2
            ij[found] = (
                w0[:, None] * self._node_ij[verts[:, 0]]
                + w1[:, None] * self._node_ij[verts[:, 1]]
                + w2[:, None] * self._node_ij[verts[:, 2]]
            )

        # Resolve perimeter nodes the locator may leave unassigned
        for q in np.flatnonzero(feasible & ~found):
            node = self._boundary_lookup.get((x[q], y[q]))
            if node is not None:
                ij[q] = self._node_ij[node]
                found[q] = True

        # Map grid-index coordinates to coefficients
        mua = _index_to_value(ij[..., 0], self._mua_grid)
        musp = _index_to_value(ij[..., 1], self._musp_grid)
        out_of_gamut = ~found
        return mua, musp, out_of_gamut

    def nearest_boundary(self, rd_dc: float, rd_ac: float) -> Dict:
        """Finds the table perimeter node closest to a reflectance pair.

        Args:
            rd_dc (`float`): The DC reflectance.

            rd_ac (`float`): The AC reflectance.

        Returns:
            (`dict`): The node's reflectances, coefficients and its
                Euclidean distance from the query.
        """
        dist = np.hypot(
            self._x[self._boundary] - rd_dc, self._y[self._boundary] - rd_ac
        )
        best = int(np.argmin(dist))
        node = self._boundary[best]
        i, j = (int(v) for v in self._node_ij[node])
        return {
            "rd_dc": float(self._x[node]),
            "rd_ac": float(self._y[node]),
            "mua": float(self._mua_grid[i]),
            "musp": float(self._musp_grid[j]),
            "distance": float(dist[best]),
        }


def _index_to_value(index: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Maps fractional grid indices to coefficients, interpolating
    geometrically between neighbouring samples. Integer indices return
    grid samples exactly.
    """
    out = np.full(index.shape, np.nan)
    ok = np.isfinite(index)
    if not ok.any():
        return out
    idx = np.clip(index[ok], 0, grid.size - 1)
    lo = np.minimum(np.floor(idx).astype(np.int64), grid.size - 2)
    frac = idx - lo
    lower, upper = grid[lo], grid[lo + 1]
    value = lower * (upper / lower) ** frac
    value = np.where(frac == 0, lower, value)
    value = np.where(frac == 1, upper, value)
    out[ok] = value
    return out


def build_lut(
    mua_range: Optional[Sequence[float]] = None,
    musp_range: Optional[Sequence[float]] = None,
    grid_sizes: Optional[Sequence[int]] = None,
    fx_dc: Optional[float] = None,
    fx_ac: Optional[float] = None,
    n: Optional[float] = None,
    model_id: Optional[str] = None,
) -> ReflectanceLut:
    """Evaluates a forward model at every node of a log-spaced
    (mua x musp) grid for the DC and AC spatial frequencies.

    Raises:
        `ValueError` if a range is not positive and increasing, a grid
            has fewer than two samples, or the frequencies are invalid.

    Args:
        mua_range (`tuple` of `float`): Absorption bounds in mm^-1.
            Defaults to `LUT_MUA_RANGE` from the settings.

        musp_range (`tuple` of `float`): Scattering bounds in mm^-1.
            Defaults to `LUT_MUSP_RANGE` from the settings.

        grid_sizes (`tuple` of `int`): Samples along each axis.
            Defaults to `LUT_GRID_SIZES` from the settings.

        fx_dc (`float`): The DC frequency, which must be zero.

        fx_ac (`float`): The AC frequency in mm^-1.

        n (`float`): The refractive index.

        model_id (`str`): The registered forward model.

    Returns:
        (`ReflectanceLut`): The table.
    """
    # Apply defaults
    mua_range = tuple(mua_range or settings.LUT_MUA_RANGE)
    musp_range = tuple(musp_range or settings.LUT_MUSP_RANGE)
    grid_sizes = tuple(grid_sizes or settings.LUT_GRID_SIZES)
    fx_dc = settings.FX_DC if fx_dc is None else fx_dc
    fx_ac = settings.FX_AC if fx_ac is None else fx_ac
    n = settings.REFRACTIVE_INDEX if n is None else n
    model_id = model_id or settings.FORWARD_MODEL

    # Validate ranges
    for name, (lo, hi) in (("mua", mua_range), ("musp", musp_range)):
        if not 0 < lo < hi:
            raise ValueError(
                f"Invalid {name} range ({lo}, {hi}). Expected positive, "
                "increasing bounds."
            )
    if len(grid_sizes) != 2 or min(grid_sizes) < 2:
        raise ValueError(
            f"Expected two grid sizes of at least 2, received {grid_sizes}."
        )
    if fx_dc != 0:
        raise ValueError(f"The DC frequency must be zero, received {fx_dc}.")

    # Evaluate forward model at every node
    model = ForwardModelFactory.create(model_id, n)
    mua_grid = np.geomspace(mua_range[0], mua_range[1], grid_sizes[0])
    musp_grid = np.geomspace(musp_range[0], musp_range[1], grid_sizes[1])
    mua, musp = np.meshgrid(mua_grid, musp_grid, indexing="ij")
    return ReflectanceLut(
        fx_dc=float(fx_dc),
        fx_ac=float(fx_ac),
        mua_grid=mua_grid,
        musp_grid=musp_grid,
        rd_dc=model.reflectance(mua, musp, fx_dc),
        rd_ac=model.reflectance(mua, musp, fx_ac),
        refractive_index=float(n),
        model_id=model.model_id,
    )


def lut_invert(
    rd_dc: float, rd_ac: float, lut: ReflectanceLut
) -> Tuple[float, float]:
    """Recovers the optical properties whose forward reflectances match
    a single (DC, AC) pair.

    Raises:
        `OutOfGamutError` if the pair lies outside the table's
            reachable set. The error carries the nearest perimeter
            node of the table as a diagnostic.

    Args:
        rd_dc (`float`): The calibrated DC reflectance.

        rd_ac (`float`): The calibrated AC reflectance.

        lut (`ReflectanceLut`): The table.

    Returns:
        ((`float`, `float`)): The absorption and reduced scattering
            coefficients in mm^-1.
    """
    mua, musp, out = lut.inverter.invert(
        np.array([rd_dc], dtype=np.float64), np.array([rd_ac], dtype=np.float64)
    )
    if out[0]:
        diagnostic = lut.inverter.nearest_boundary(rd_dc, rd_ac)
        raise OutOfGamutError(
            f"The reflectance pair ({rd_dc}, {rd_ac}) is out of gamut. "
            f"Nearest table boundary node: {diagnostic}.",
            diagnostic,
        )
    return float(mua[0]), float(musp[0])


def lut_invert_map(
    rd_dc: ImagePlane,
    rd_ac: ImagePlane,
    lut: ReflectanceLut,
    mask: Optional[Mask] = None,
    wavelength_nm: Optional[float] = None,
    workers: Optional[int] = None,
) -> OpticalPropertyMap:
    """Inverts every selected pixel of a pair of reflectance planes.
    Out-of-gamut pixels are marked invalid and counted rather than
    raising. Pixels that are invalid on input or excluded by the mask
    stay invalid and are not counted.

    Raises:
        `DimensionMismatchError` if the planes or mask differ in shape.

    Args:
        rd_dc (`ImagePlane`): DC reflectance.

        rd_ac (`ImagePlane`): AC reflectance.

        lut (`ReflectanceLut`): The table.

        mask (`Mask`): Pixels to invert. Defaults to every pixel.

        wavelength_nm (`float`): The wavelength recorded on the result.

        workers (`int`): Threads used across row bands. Defaults to
            `WORKERS` from the settings.

    Returns:
        (`OpticalPropertyMap`): The recovered coefficients.
    """
    # Validate shapes
    if rd_dc.shape != rd_ac.shape:
        raise DimensionMismatchError(
            f"Reflectance planes differ in shape: {rd_dc.shape} and "
            f"{rd_ac.shape}."
        )
    if mask is not None and mask.shape != rd_dc.shape:
        raise DimensionMismatchError(
            f"The mask shape {mask.shape} does not match the planes "
            f"{rd_dc.shape}."
        )

    # Select pixels to evaluate
    selected = rd_dc.valid & rd_ac.valid
    if mask is not None:
        selected &= mask.bits

    # Build the inverse once, before fanning out
    inverter = lut.inverter
    height, width = rd_dc.shape
    mua = np.full((height, width), np.nan)
    musp = np.full((height, width), np.nan)
    outside = np.zeros((height, width), dtype=bool)

    def invert_band(start: int) -> None:
        rows = slice(start, min(start + settings.ENGINE_BAND_ROWS, height))
        sel = selected[rows]
        if not sel.any():
            return
        a, s, out = inverter.invert(
            rd_dc.data[rows][sel], rd_ac.data[rows][sel]
        )
        mua[rows][sel] = a
        musp[rows][sel] = s
        outside[rows][sel] = out

    # Invert row bands in parallel
    workers = workers or settings.WORKERS
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(invert_band, range(0, height, settings.ENGINE_BAND_ROWS)))

    # Report out-of-gamut pixels
    evaluated = int(selected.sum())
    n_out = int(outside.sum())
    if n_out:
        logger.warning(
            f"{n_out} of {evaluated} pixel(s) fell outside the lookup "
            "table and were marked invalid."
        )

    return OpticalPropertyMap(
        mua=ImagePlane(mua, rd_dc.pitch_mm, "mua"),
        musp=ImagePlane(musp, rd_dc.pitch_mm, "musp"),
        wavelength_nm=wavelength_nm,
        out_of_gamut=n_out,
        evaluated=evaluated,
    )


def save_lut(
    lut: ReflectanceLut, fpath: PathLike, store: Optional[IDataStore] = None
) -> Path:
    """Writes a table as an 8-byte magic, a little-endian 32-bit header
    length, a UTF-8 JSON header and the DC then AC tables as
    little-endian float32 in `[mua, musp]` order.

    Args:
        lut (`ReflectanceLut`): The table.

        fpath (`pathlib.Path` | `str`): The destination.

        store (`IDataStore`): The data store. Defaults to the store
            configured for the current environment.

    Returns:
        (`pathlib.Path`): The resolved destination.
    """
    store = store or IDataStoreFactory.get()
    header = json.dumps(lut.header()).encode("utf-8")
    with store.open_file(fpath, "wb") as f:
        f.write(LUT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(np.ascontiguousarray(lut.rd_dc, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(lut.rd_ac, dtype="<f4").tobytes())
    return store.resolve(fpath)


def load_lut(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> ReflectanceLut:
    """Reads a table written by `save_lut`.

    Raises:
        `ContainerFormatError` if the file is not a lookup table or
            is truncated.

    Args:
        fpath (`pathlib.Path` | `str`): The source.

        store (`IDataStore`): The data store. Defaults to the store
            configured for the current environment.

    Returns:
        (`ReflectanceLut`): The table.
    """
    # Read raw bytes
    store = store or IDataStoreFactory.get()
    with store.open_file(fpath, "rb") as f:
        raw = f.read()

    # Parse header
    if raw[:8] != LUT_MAGIC:
        raise ContainerFormatError(
            f'"{fpath}" is not a reflectance lookup table.'
        )
    try:
        (header_len,) = struct.unpack("<I", raw[8:12])
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerFormatError(
            f'Unable to parse the lookup table header of "{fpath}". {e}'
        ) from None

    # Parse tables
    shape = (len(header["mua_grid"]), len(header["musp_grid"]))
    count = shape[0] * shape[1]
    tables = np.frombuffer(raw[12 + header_len :], dtype="<f4")
    if tables.size != 2 * count:
        raise ContainerFormatError(
            f'The lookup table "{fpath}" holds {tables.size} value(s); its '
            f"header requires {2 * count}."
        )

    return ReflectanceLut(
        fx_dc=header["fx_dc"],
        fx_ac=header["fx_ac"],
        mua_grid=np.array(header["mua_grid"]),
        musp_grid=np.array(header["musp_grid"]),
        rd_dc=tables[:count].astype(np.float64).reshape(shape),
        rd_ac=tables[count:].astype(np.float64).reshape(shape),
        refractive_index=header["refractive_index"],
        model_id=header["model_id"],
        version=header["version"],
    )
