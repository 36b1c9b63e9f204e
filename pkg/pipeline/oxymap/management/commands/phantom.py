"""Renders synthetic phantoms: conventional and single-phase images,
reference measurements, ground truth and, optionally, a training
dataset and an occlusion frame sequence.
"""

# Standard library imports
import json
from pathlib import Path

# Third-party imports
import numpy as np
import yaml
from django.conf import settings
from django.core.management.base import CommandParser

# Application imports
from oxymap.core.io import write_plane
from oxymap.management.base import (
    SFDI_BANDS,
    PipelineCommand,
    sfdi_image_name,
    snapshot_image_name,
)
from oxymap.phantom.dataset import make_dataset, make_sample
from oxymap.phantom.occlusion import (
    OcclusionProtocol,
    render_occlusion_sequence,
)
from oxymap.phantom.render import (
    make_reference,
    render_sfdi_stack,
    render_structured,
)
from oxymap.phantom.scene import (
    PhantomConfig,
    generate_scene,
    load_phantom_config,
)
from oxymap.sfdi.calibration import save_reference_bundle


class Command(PipelineCommand):
    """Draws one or more scenes and writes, per scene, the 24-image
    conventional acquisition, the two single-phase snapshots, the
    references for every wavelength and the true saturation,
    absorption and scattering. With `--dataset` the snapshots are
    also cut into training patches; with `--occlusion` the first
    scene is replayed through an occlusion protocol.
    """

    help = "Generates synthetic phantom scenes and derived artifacts."
    name = "Phantom"

    def add_arguments(self, parser: CommandParser) -> None:
        """Requires the subcommand `gen` and the output directory
        `--out`. Optional flags select the scene config, the seed, the
        number of scenes, the relative noise level and the extra
        artifacts.

        Args:
            parser (`CommandParser`)

        Returns:
            `None`
        """
        parser.add_argument("action", choices=["gen"])
        parser.add_argument("--out", required=True)
        parser.add_argument("--config")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--count", type=int, default=1)
        parser.add_argument("--noise", type=float, default=0.0)
        parser.add_argument("--dataset", action="store_true")
        parser.add_argument("--occlusion", action="store_true")
        parser.add_argument("--protocol")

    def handle(self, *args, **options) -> None:
        """Executes the command.

        Args:
            `None`

        Returns:
            `None`
        """
        out_dir = Path(options["out"])
        noise = options["noise"]

        # Load the scene description
        with self.stage("Loading phantom config"):
            config = (
                load_phantom_config(options["config"], self.store)
                if options["config"]
                else PhantomConfig()
            )
            if options["count"] < 1:
                raise ValueError("The scene count must be at least one.")

        # Render each scene
        scenes, samples, summary_scenes = [], [], []
        for k in range(options["count"]):
            seed = options["seed"] + k
            scene_dir = out_dir / f"scene_{k:03d}"
            with self.stage(f"Rendering scene {k} (seed {seed})"):
                scene = generate_scene(config, seed)
                rng = np.random.default_rng(seed)
                stack = render_sfdi_stack(
                    scene, config.wavelengths_nm, noise_sigma=noise, rng=rng
                )
                refs = {}
                for wavelength, triplets in stack.items():
                    for band, triplet in zip(SFDI_BANDS, triplets):
                        for phase, img in enumerate(
                            (triplet.i0, triplet.i1, triplet.i2)
                        ):
                            write_plane(
                                img,
                                scene_dir
                                / sfdi_image_name(wavelength, band, phase),
                                self.store,
                            )
                    refs[wavelength] = make_reference(
                        scene.shape, scene.pitch_mm, wavelength
                    )
                    truth = scene.sto2.plane
                    write_plane(
                        truth.with_data(scene.mua(wavelength), "mua"),
                        scene_dir / f"mua_{wavelength:g}.f32",
                        self.store,
                    )
                    write_plane(
                        truth.with_data(scene.musp(wavelength), "musp"),
                        scene_dir / f"musp_{wavelength:g}.f32",
                        self.store,
                    )
                for wavelength in settings.SNAPSHOT_WAVELENGTHS_NM:
                    write_plane(
                        render_structured(
                            scene, wavelength, settings.FX_AC, 0.0, noise, rng
                        ),
                        scene_dir / snapshot_image_name(wavelength),
                        self.store,
                    )
                save_reference_bundle(
                    refs, scene_dir / "reference.json", self.store
                )
                write_plane(
                    scene.sto2.plane, scene_dir / "sto2.f32", self.store
                )
                scenes.append(scene)
                summary_scenes.append(
                    {"seed": seed, "dir": str(self.resolve(scene_dir))}
                )
                if options["dataset"]:
                    samples.append(
                        make_sample(scene, f"scene_{k:03d}", noise_sigma=noise)
                    )

        summary = {
            "stage": "phantom",
            "shape": list(scenes[0].shape),
            "pitch_mm": scenes[0].pitch_mm,
            "noise_sigma": noise,
            "scenes": summary_scenes,
        }

        # Cut training patches
        if options["dataset"]:
            with self.stage("Writing training patches"):
                records = make_dataset(
                    samples,
                    out_dir / "dataset",
                    seed=options["seed"],
                    store=self.store,
                )
            summary["dataset"] = {
                "dir": str(self.resolve(out_dir / "dataset")),
                "patches": len(records),
            }

        # Replay the first scene through an occlusion protocol
        if options["occlusion"]:
            with self.stage("Rendering occlusion sequence"):
                protocol = OcclusionProtocol()
                if options["protocol"]:
                    with self.store.open_file(options["protocol"], "r") as f:
                        doc = (
                            json.load(f)
                            if options["protocol"].endswith(".json")
                            else yaml.safe_load(f)
                        )
                    protocol = OcclusionProtocol(**(doc or {}))
                frames = render_occlusion_sequence(
                    scenes[0],
                    protocol,
                    out_dir / "occlusion",
                    noise_sigma=noise,
                    store=self.store,
                )
            summary["occlusion"] = {
                "dir": str(self.resolve(out_dir / "occlusion")),
                "frames": len(frames),
                "duration_s": protocol.duration_s,
            }

        self.emit(summary)
