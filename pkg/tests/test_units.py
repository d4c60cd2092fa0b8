import json

import pytest

from qrtrap.errors import InvalidParameterError, SpeciesLookupError
from qrtrap.units import (
    ELECTRON_MASSES_PER_AMU,
    energy_to_nanokelvin,
    get_species,
    initial_kinetic_energy_physical,
    load_species,
    radial_gamma,
    radial_gamma_uncertainty,
    scaled_packet_kinetic_energy,
    scaled_params,
    scaled_sigma,
    scaled_time_to_seconds,
    seconds_per_tau,
    species_table,
)

L_TRAP = 4.47e5


def test_sodium_mass_in_electron_masses():
    na = get_species("Na")
    assert na.mass == pytest.approx(41907.8, rel=1e-5)


def test_species_table_matches_published_scaling():
    rows = {r["name"]: r for r in species_table(L_TRAP)}
    assert rows["Li"]["sigma"] == pytest.approx(54.25, abs=0.01)
    assert rows["Na"]["sigma"] == pytest.approx(30.0, abs=0.1)
    assert rows["Rb"]["sigma"] == pytest.approx(11.0, abs=0.1)

    assert rows["Li"]["gamma"] == pytest.approx(-9.66e-3, rel=1e-3)
    assert rows["Na"]["gamma"] == pytest.approx(2.92e-4, rel=2e-3)
    assert rows["Rb"]["gamma"] == pytest.approx(0.01, abs=1e-3)


def test_rb_uncertainty_is_asymmetric():
    rb = get_species("rb")
    lo, hi = radial_gamma_uncertainty(rb.a_int_uncertainty, L_TRAP)
    assert lo == pytest.approx(2 * 350.0 / L_TRAP)
    assert hi == pytest.approx(2 * 600.0 / L_TRAP)
    assert radial_gamma_uncertainty(None, L_TRAP) is None


def test_lookup_by_isotope_and_unknown_species():
    assert get_species("23na").name == "Na"
    with pytest.raises(SpeciesLookupError) as exc:
        get_species("Cs")
    assert "Li" in exc.value.message and "Rb" in exc.value.message


def test_explicit_values():
    assert scaled_sigma(1234.5, 1234.5) == 1.0
    assert radial_gamma(-10.0, 1000.0) == pytest.approx(-0.02)
    params = scaled_params(get_species("Na"), L_TRAP)
    assert params.trap_radius_L == L_TRAP
    with pytest.raises(InvalidParameterError):
        scaled_sigma(0.0, 10.0)


def test_time_scale_for_sodium():
    na = get_species("Na")
    assert seconds_per_tau(na.mass, L_TRAP) == pytest.approx(0.405, rel=2e-3)
    assert scaled_time_to_seconds(2.0, na.mass, L_TRAP) == pytest.approx(2 * seconds_per_tau(na.mass, L_TRAP))


def test_packet_kinetic_energy():
    # a^2 for the untruncated packet
    assert scaled_packet_kinetic_energy(5.0) == pytest.approx(25.0, rel=2e-3)
    assert scaled_packet_kinetic_energy(10.0) == pytest.approx(100.0, rel=1e-5)


def test_initial_kinetic_energy_is_nanokelvin_scale():
    na = get_species("Na")
    energy = initial_kinetic_energy_physical(5.0, na.mass, 4.5e5)
    assert energy == pytest.approx(1.47e-15, rel=0.01)
    assert 0.1 < energy_to_nanokelvin(energy) < 2.0


def test_species_file_from_env(monkeypatch, tmp_path):
    path = tmp_path / "species.json"
    path.write_text(
        json.dumps(
            {
                "schema": "qrtrap.species",
                "version": 1,
                "species": [
                    {"name": "K", "isotope": "39K", "mass_amu": 38.96, "beta4_au": 20000.0, "a_int_au": -33.0}
                ],
            }
        ),
        encoding="utf-8",
    )
    monkeypatch.setenv("QRTRAP_SPECIES_FILE", str(path))
    entries = load_species()
    assert [sp.name for sp in entries] == ["K"]
    assert entries[0].mass == pytest.approx(38.96 * ELECTRON_MASSES_PER_AMU)
    assert entries[0].a_int_uncertainty is None


def test_species_file_rejects_unknown_fields(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(
        json.dumps({"schema": "qrtrap.species", "version": 1, "species": [{"name": "X", "colour": "red"}]}),
        encoding="utf-8",
    )
    with pytest.raises(ValueError):
        load_species(str(path))
