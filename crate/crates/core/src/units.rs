//! Unit system and physical constants.
//!
//! Energies are in meV, masses in amu, lengths in Å and mass-weighted
//! lengths in amu^{1/2}·Å. With these units the kinetic operator in
//! mass-weighted coordinates is `-(HBAR2 / 2) ∇²`.

/// Reduced Planck constant, J·s (CODATA 2018).
pub const HBAR_J_S: f64 = 1.054_571_817e-34;
/// Planck constant, J·s (exact).
pub const PLANCK_J_S: f64 = 6.626_070_15e-34;
/// Atomic mass constant, kg (CODATA 2018).
pub const AMU_KG: f64 = 1.660_539_066_60e-27;
/// Elementary charge, C (exact); also J per eV.
pub const EV_J: f64 = 1.602_176_634e-19;
pub const ANGSTROM_M: f64 = 1e-10;

pub const MEV_PER_EV: f64 = 1e3;
const MEV_J: f64 = EV_J / MEV_PER_EV;

/// ħ² in meV·amu·Å² (≈ 4.1801).
pub const HBAR2: f64 = HBAR_J_S * HBAR_J_S / (AMU_KG * ANGSTROM_M * ANGSTROM_M * MEV_J);

/// Energy of a 1 GHz photon in meV (≈ 4.1357e-3).
pub const MEV_PER_GHZ: f64 = PLANCK_J_S * 1e9 / MEV_J;

/// Atomic masses (amu) used by fixtures and mass sweeps.
pub mod mass {
    pub const H: f64 = 1.008;
    pub const D: f64 = 2.014;
    pub const O: f64 = 15.999;
    pub const TI: f64 = 47.867;
    pub const V: f64 = 50.942;
    pub const ZR: f64 = 91.224;
    pub const NB: f64 = 92.906;
    pub const TA: f64 = 180.948;
}

pub fn mev_to_ghz(e: f64) -> f64 {
    e / MEV_PER_GHZ
}

pub fn ghz_to_mev(f: f64) -> f64 {
    f * MEV_PER_GHZ
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hbar_squared_matches_reference_value() {
        // (1.054571817e-34)^2 / (1.66053906660e-27 * 1e-20) J, divided by 1.602176634e-22 J/meV
        assert!((HBAR2 - 4.1801).abs() < 1e-4, "HBAR2 = {HBAR2}");
    }

    #[test]
    fn ghz_conversion() {
        assert!((MEV_PER_GHZ - 4.1357e-3).abs() < 1e-7);
        assert!((mev_to_ghz(ghz_to_mev(5.0)) - 5.0).abs() < 1e-12);
    }
}
