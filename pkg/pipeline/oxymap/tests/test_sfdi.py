"""Tests for three-phase demodulation, calibration and the conventional
SFDI pipeline.
"""

# Third-party imports
import numpy as np
import pytest

# Application imports
from oxymap.core.raster import ImagePlane
from oxymap.errors import (
    DimensionMismatchError,
    FrequencyMismatchError,
    WavelengthMismatchError,
    ZeroDenominatorError,
)
from oxymap.phantom.render import make_reference, render_sfdi_stack
from oxymap.photon.forward import DiffusionForwardModel
from oxymap.sfdi.calibration import (
    calibrate,
    load_reference_bundle,
    reference_at,
    save_reference_bundle,
)
from oxymap.sfdi.demodulation import PHASES_RAD, PhaseTriplet, demodulate
from oxymap.sfdi.pipeline import sfdi_optical_properties


def _triplet(dc, ac, fx=0.2, wavelength_nm=None):
    images = [ImagePlane(dc + ac * np.sin(p)) for p in PHASES_RAD]
    return PhaseTriplet(*images, fx=fx, wavelength_nm=wavelength_nm)


def test_demodulation_recovers_offset_and_amplitude():
    rng = np.random.default_rng(0)
    dc = rng.uniform(0.2, 0.8, size=(5, 7))
    ac = rng.uniform(0.0, 0.2, size=(5, 7))
    m_dc, m_ac = demodulate(_triplet(dc, ac, wavelength_nm=659))
    assert np.allclose(m_dc.data, dc, atol=1e-9)
    assert np.allclose(m_ac.data, ac, atol=1e-9)
    assert m_dc.semantic == "m_dc@659"


def test_phase_triplet_requires_matching_images():
    with pytest.raises(DimensionMismatchError):
        PhaseTriplet(
            ImagePlane(np.ones((2, 2))),
            ImagePlane(np.ones((2, 2))),
            ImagePlane(np.ones((2, 3))),
            fx=0.2,
        )
    with pytest.raises(ValueError):
        _triplet(np.ones((2, 2)), np.zeros((2, 2)), fx=-0.1)


def test_calibration_scales_by_predicted_reference_reflectance():
    model = DiffusionForwardModel(1.4)
    ref = make_reference((4, 6), 0.3125, 659, 0.2, 0.01, 1.0, model)
    rd_pred = model.reflectance(0.01, 1.0, 0.2)
    m_samp = ref.m_ac_ref.with_data(ref.m_ac_ref.data * 0.5)
    rd = calibrate(m_samp, ref, model, 0.2)
    assert np.allclose(rd.data, 0.5 * rd_pred)


def test_calibration_flags_unphysical_values_instead_of_clamping():
    model = DiffusionForwardModel(1.4)
    ref = make_reference((2, 2), 0.3125, 659, 0.2, model=model)
    data = ref.m_dc_ref.data.copy()
    data[0, 0] *= 100.0
    rd = calibrate(ref.m_dc_ref.with_data(data), ref, model, 0.0)
    assert np.isnan(rd.data[0, 0])
    assert rd.valid.sum() == 3


def test_calibration_failures():
    model = DiffusionForwardModel(1.4)
    ref = make_reference((2, 2), 0.3125, 659, 0.2, model=model)
    with pytest.raises(FrequencyMismatchError):
        calibrate(ref.m_ac_ref, ref, model, 0.3)
    with pytest.raises(DimensionMismatchError):
        calibrate(ImagePlane(np.ones((3, 3))), ref, model, 0.0)

    zeroed = ref.m_dc_ref.with_data(np.zeros((2, 2)))
    broken = type(ref)(
        m_dc_ref=zeroed,
        m_ac_ref=ref.m_ac_ref,
        known_mua=ref.known_mua,
        known_musp=ref.known_musp,
        wavelength_nm=ref.wavelength_nm,
        fx_ac=ref.fx_ac,
    )
    with pytest.raises(ZeroDenominatorError):
        calibrate(ref.m_dc_ref, broken, model, 0.0)


def test_sfdi_recovers_phantom_optical_properties(flat_scene, lut):
    stack = render_sfdi_stack(flat_scene, (659, 851))
    for wavelength, (triplet_dc, triplet_ac) in stack.items():
        ref = make_reference(flat_scene.shape, flat_scene.pitch_mm, wavelength)
        op_map = sfdi_optical_properties(
            triplet_dc, triplet_ac, ref, lut, workers=2
        )
        assert op_map.out_of_gamut == 0
        assert op_map.wavelength_nm == wavelength
        assert np.allclose(
            op_map.mua.data, flat_scene.mua(wavelength), rtol=0.01
        )
        assert np.allclose(
            op_map.musp.data, flat_scene.musp(wavelength), rtol=0.01
        )


def test_sfdi_rejects_mismatched_acquisitions(flat_scene, lut):
    triplet_dc, triplet_ac = render_sfdi_stack(flat_scene, (659,))[659.0]
    ref = make_reference(flat_scene.shape, flat_scene.pitch_mm, 851)
    with pytest.raises(WavelengthMismatchError):
        sfdi_optical_properties(triplet_dc, triplet_ac, ref, lut)

    ref = make_reference(flat_scene.shape, flat_scene.pitch_mm, 659, 0.1)
    with pytest.raises(FrequencyMismatchError):
        sfdi_optical_properties(triplet_dc, triplet_ac, ref, lut)


def test_reference_bundle_persistence(tmp_path):
    refs = {w: make_reference((3, 4), 0.5, w) for w in (659, 851)}
    save_reference_bundle(refs, tmp_path / "reference.json")
    assert (tmp_path / "reference_659_dc.f32").exists()

    loaded = load_reference_bundle(tmp_path / "reference.json")
    assert sorted(loaded) == [659.0, 851.0]
    for wavelength, ref in refs.items():
        got = loaded[wavelength]
        assert got.known_mua == ref.known_mua
        assert got.fx_ac == ref.fx_ac
        assert np.allclose(got.ratio, ref.ratio, rtol=1e-6)


def test_reference_lookup_by_wavelength():
    refs = {659.0: make_reference((2, 2), 0.5, 659)}
    assert reference_at(refs, 659).wavelength_nm == 659
    with pytest.raises(WavelengthMismatchError):
        reference_at(refs, 851)
