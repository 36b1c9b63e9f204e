"""Synthetic cuff-occlusion recordings: a time-ordered sequence of
single-phase frames alternating between the two snapshot wavelengths
while the scene's saturation follows a baseline, occlusion and release
protocol.
"""

# Standard library imports
from pathlib import Path
from typing import Optional, Tuple, Union

# Third-party imports
import numpy as np
import pandas as pd
from django.conf import settings
from pydantic import BaseModel, Field, model_validator
from tqdm import tqdm

# Application imports
from common.logger import LoggerFactory
from common.storage import IDataStore, IDataStoreFactory
from oxymap.core.io import write_plane
from oxymap.phantom.render import make_reference, render_structured
from oxymap.phantom.scene import Scene
from oxymap.photon.forward import IForwardModel
from oxymap.sfdi.calibration import save_reference_bundle

PathLike = Union[Path, str]

FRAME_MANIFEST_NAME = "frames.jsonl"
CHECKPOINTS_NAME = "checkpoints.csv"
REFERENCE_NAME = "reference.json"

logger = LoggerFactory.get("OXYMAP.OCCLUSION")


class OcclusionProtocol(BaseModel):
    """Timing and saturation levels of an occlusion recording."""

    baseline_s: float = Field(default=60.0, ge=0)
    occlusion_s: float = Field(default=180.0, ge=0)
    release_s: float = Field(default=150.0, ge=0)
    dt_s: float = Field(default=0.73, gt=0)
    """The interval between consecutive frames.
    """

    checkpoint_every_s: float = Field(default=25.0, gt=0)
    """The interval between conventional SFDI checkpoints.
    """

    sto2_rest: float = Field(default=0.8, ge=0, le=1)
    sto2_occluded: float = Field(default=0.4, ge=0, le=1)
    wavelengths_nm: Tuple[float, float] = Field(
        default_factory=lambda: tuple(settings.SNAPSHOT_WAVELENGTHS_NM)
    )

    @model_validator(mode="after")
    def validate_duration(self) -> "OcclusionProtocol":
        """Validates that the recording holds at least one frame pair."""
        if self.duration_s < 2 * self.dt_s:
            raise ValueError(
                f"A {self.duration_s} s protocol cannot hold two frames "
                f"{self.dt_s} s apart."
            )
        return self

    @property
    def duration_s(self) -> float:
        """The total recording length."""
        return self.baseline_s + self.occlusion_s + self.release_s

    def sto2_at(self, t_seconds: np.ndarray) -> np.ndarray:
        """The scene saturation at the given times (a step profile)."""
        t = np.asarray(t_seconds, dtype=np.float64)
        occluded = (t >= self.baseline_s) & (
            t < self.baseline_s + self.occlusion_s
        )
        return np.where(occluded, self.sto2_occluded, self.sto2_rest)

    def frame_times(self) -> np.ndarray:
        """The acquisition time of every frame."""
        count = int(np.floor(self.duration_s / self.dt_s + 1e-9))
        return np.arange(count) * self.dt_s

    def checkpoint_times(self) -> np.ndarray:
        """The times of the conventional SFDI checkpoints."""
        count = int(np.floor(self.duration_s / self.checkpoint_every_s))
        return np.arange(count + 1) * self.checkpoint_every_s


def render_occlusion_sequence(
    scene: Scene,
    protocol: OcclusionProtocol,
    out_dir: PathLike,
    noise_sigma: float = 0.0,
    fx: Optional[float] = None,
    model: Optional[IForwardModel] = None,
    store: Optional[IDataStore] = None,
) -> pd.DataFrame:
    """Renders every frame of a protocol and writes the frames, a frame
    manifest (`t_seconds`, `wavelength_nm`, `path`), the reference
    bundle for both wavelengths and the checkpoint saturations.

    The scene keeps its hemoglobin total and scattering; its saturation
    is replaced by the protocol level at each frame time. Checkpoints
    report the exact scene saturation at their times.

    Args:
        scene (`Scene`): The scene whose total hemoglobin and scattering
            are reused.

        protocol (`OcclusionProtocol`): The protocol.

        out_dir (`pathlib.Path` | `str`): The output directory.

        noise_sigma (`float`): The relative noise level.

        fx (`float`): The illumination frequency. Defaults to `FX_AC`.

        model (`IForwardModel`): The forward model.

        store (`IDataStore`): The data store.

    Returns:
        (`pd.DataFrame`): The frame manifest.
    """
    fx = settings.FX_AC if fx is None else fx
    store = store or IDataStoreFactory.get()
    out_dir = Path(out_dir)
    rng = np.random.default_rng(scene.seed)

    # Write the references
    refs = {
        float(w): make_reference(
            scene.shape, scene.pitch_mm, w, fx, model=model
        )
        for w in protocol.wavelengths_nm
    }
    save_reference_bundle(refs, out_dir / REFERENCE_NAME, store)

    # Render frames
    times = protocol.frame_times()
    levels = protocol.sto2_at(times)
    records = []
    for k, (t, level) in enumerate(
        tqdm(zip(times, levels), total=len(times), desc="Rendering frames")
    ):
        wavelength = protocol.wavelengths_nm[k % 2]
        frame_scene = scene.with_sto2(np.full(scene.shape, level))
        frame = render_structured(
            frame_scene, wavelength, fx, 0.0, noise_sigma, rng, model
        )
        path = f"frames/frame_{k:05d}.f32"
        write_plane(frame, out_dir / path, store)
        records.append(
            {
                "t_seconds": round(float(t), 6),
                "wavelength_nm": float(wavelength),
                "path": path,
            }
        )
    manifest = pd.DataFrame.from_records(
        records, columns=["t_seconds", "wavelength_nm", "path"]
    )
    with store.open_file(out_dir / FRAME_MANIFEST_NAME, "w") as f:
        manifest.to_json(f, orient="records", lines=True)

    # Write the checkpoints
    checkpoint_t = protocol.checkpoint_times()
    checkpoints = pd.DataFrame(
        {"t": checkpoint_t, "sto2": protocol.sto2_at(checkpoint_t)}
    )
    with store.open_file(out_dir / CHECKPOINTS_NAME, "w") as f:
        checkpoints.to_csv(f, index=False)

    logger.info(
        f"Rendered {len(manifest)} frame(s) and {len(checkpoints)} "
        f"checkpoint(s) to {out_dir}."
    )
    return manifest
