"""Tests for extinction bases, non-negative chromophore fitting and
oxygen saturation.
"""

# Third-party imports
import numpy as np
import pytest
from django.conf import settings

# Application imports
from oxymap.chromophore.basis import (
    DEOXY,
    OXY,
    ChromophoreBasis,
    load_basis,
)
from oxymap.chromophore.fitting import (
    ConcentrationMap,
    fit_chromophores,
    sto2,
    sto2_from_mua,
)
from oxymap.core.raster import ImagePlane, Mask
from oxymap.errors import (
    DimensionMismatchError,
    MissingChromophoreError,
    SingularBasisError,
    WavelengthMismatchError,
)
from oxymap.photon.properties import OpticalPropertyMap


def _mua_stack(basis, c_oxy, c_deoxy):
    mua = basis.absorption(np.stack([c_oxy, c_deoxy]))
    return {
        float(w): ImagePlane(mua[k])
        for k, w in enumerate(basis.wavelengths_nm)
    }


def test_shipped_basis_converts_to_millimolar_units(basis):
    assert basis.names == (OXY, DEOXY)
    row = basis.select([660, 850]).epsilon[0]
    assert row[0] == pytest.approx(319.6 * np.log(10) * 1e-4)
    assert row[1] == pytest.approx(3226.56 * np.log(10) * 1e-4)


def test_select_uses_nearest_row_within_tolerance(basis):
    sub = basis.select([659, 851])
    assert sub.wavelengths_nm.tolist() == [659.0, 851.0]
    assert np.array_equal(sub.epsilon, basis.select([660, 850]).epsilon)
    with pytest.raises(WavelengthMismatchError):
        basis.select([659, 1000])
    with pytest.raises(WavelengthMismatchError):
        basis.select([655], tolerance_nm=1.0)


def test_basis_rejects_degenerate_matrices():
    with pytest.raises(SingularBasisError):
        ChromophoreBasis([660, 850], (OXY, DEOXY), [[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularBasisError):
        ChromophoreBasis([660], (OXY, DEOXY), [[1.0, 2.0]])
    with pytest.raises(ValueError):
        ChromophoreBasis([660, 850], (OXY, DEOXY), [[1.0, -2.0], [2.0, 1.0]])


def test_load_basis_selects_wavelengths(tmp_path):
    doc = (
        '{"names": ["HbO2", "HHb"], "units": "mm^-1 mM^-1",'
        ' "wavelengths_nm": [660, 850], "epsilon_rows": [[1, 3], [2, 1]]}'
    )
    (tmp_path / "basis.json").write_text(doc)
    basis = load_basis(tmp_path / "basis.json", wavelengths_nm=[850, 660])
    assert basis.epsilon.tolist() == [[2.0, 1.0], [1.0, 3.0]]


@pytest.mark.parametrize("wavelengths", [(659, 851), (659, 691, 731, 851)])
def test_fit_is_exact_on_noise_free_absorption(basis, wavelengths):
    rng = np.random.default_rng(11)
    sub = basis.select(wavelengths)
    thb = rng.uniform(0.03, 0.08, size=(6, 8))
    truth = rng.uniform(0.0, 1.0, size=(6, 8))
    stack = _mua_stack(sub, truth * thb, (1.0 - truth) * thb)

    conc = fit_chromophores(stack, sub)
    assert np.allclose(conc.channel(OXY).data, truth * thb, atol=1e-9)
    assert np.allclose(sto2(conc).data, truth, atol=1e-6)


def test_fit_is_independent_of_worker_count(basis, monkeypatch):
    monkeypatch.setattr(settings, "FIT_BAND_PIXELS", 7)
    rng = np.random.default_rng(12)
    sub = basis.select([659, 691, 731, 851])
    thb = rng.uniform(0.03, 0.08, size=(9, 11))
    truth = rng.uniform(0.0, 1.0, size=(9, 11))
    stack = _mua_stack(sub, truth * thb, (1.0 - truth) * thb)
    stack[691.0] = stack[691.0].with_data(
        stack[691.0].data * rng.uniform(0.9, 1.1, size=(9, 11))
    )
    mask = Mask(rng.uniform(size=(9, 11)) > 0.2)

    single = fit_chromophores(stack, sub, mask, workers=1)
    for workers in (2, 5):
        banded = fit_chromophores(stack, sub, mask, workers=workers)
        assert np.array_equal(banded.data, single.data, equal_nan=True)
    assert np.array_equal(
        sto2_from_mua(stack, sub, mask, workers=3).data,
        sto2(single).data,
        equal_nan=True,
    )


def test_fit_projects_onto_the_non_negative_orthant():
    basis = ChromophoreBasis([660, 850], (OXY, DEOXY), np.eye(2))
    stack = {660.0: ImagePlane([[-1.0]]), 850.0: ImagePlane([[2.0]])}
    conc = fit_chromophores(stack, basis)
    assert conc.data[:, 0, 0].tolist() == [0.0, 2.0]
    assert sto2(conc).data[0, 0] == 0.0


def test_fit_leaves_unresolved_pixels_invalid(basis):
    sub = basis.select([659, 851])
    stack = _mua_stack(sub, np.full((2, 2), 0.03), np.full((2, 2), 0.02))
    data = stack[659.0].data.copy()
    data[0, 0] = np.nan
    stack[659.0] = ImagePlane(data)
    bits = np.ones((2, 2), dtype=bool)
    bits[1, 1] = False

    result = sto2_from_mua(stack, sub, Mask(bits=bits))
    assert result.plane.valid.tolist() == [[False, True], [True, False]]
    assert np.allclose(result.data[0, 1], 0.6)


def test_fit_accepts_optical_property_maps(basis):
    sub = basis.select([659, 851])
    stack = _mua_stack(sub, np.full((2, 3), 0.04), np.full((2, 3), 0.01))
    maps = [
        OpticalPropertyMap.constant(
            plane.data[0, 0], 1.0, 2, 3, wavelength_nm=w
        )
        for w, plane in stack.items()
    ]
    assert np.allclose(sto2_from_mua(maps, sub).data, 0.8)


def test_fit_failures(basis):
    sub = basis.select([659, 851])
    stack = _mua_stack(sub, np.full((2, 2), 0.03), np.full((2, 2), 0.02))
    with pytest.raises(WavelengthMismatchError):
        fit_chromophores({659.0: stack[659.0]}, sub)
    with pytest.raises(WavelengthMismatchError):
        fit_chromophores(stack, basis.select([659, 691]))
    stack[851.0] = ImagePlane(np.ones((3, 3)))
    with pytest.raises(DimensionMismatchError):
        fit_chromophores(stack, sub)


def test_saturation_needs_both_hemoglobins():
    conc = ConcentrationMap(("HbO2", "Water"), np.ones((2, 1, 1)))
    with pytest.raises(MissingChromophoreError):
        sto2(conc)


def test_empty_hemoglobin_is_invalid():
    conc = ConcentrationMap((OXY, DEOXY), np.zeros((2, 1, 2)))
    assert not sto2(conc).plane.valid.any()
