//! Circular (Morgan-style) bit fingerprints and Tanimoto similarity.
//!
//! Atom identifiers start from (element, charge, degree, H count, ring flag,
//! aromatic flag) and are re-hashed with the sorted (bond, neighbour id)
//! multiset once per radius step. Every identifier from radius 0 up to the
//! requested radius sets one bit. Hashing uses the splitmix64 finaliser, so
//! bits are stable across platforms but do not match other toolkits.

use thiserror::Error;

use crate::molgraph::Molecule;

pub const DEFAULT_WIDTH: usize = 2048;
pub const DEFAULT_RADIUS: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FingerprintError {
    #[error("fingerprint width {0} is not a positive power of two")]
    InvalidWidth(usize),
    #[error("fingerprint parameters differ: width {0} vs {1}, radius {2} vs {3}")]
    ParameterMismatch(usize, usize, u32, u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    width: usize,
    radius: u32,
}

impl Fingerprint {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    /// Indices of set bits, ascending.
    pub fn on_bits(&self) -> Vec<usize> {
        (0..self.width).filter(|&b| self.get(b)).collect()
    }

    fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    /// Fingerprint with exactly `bits` set.
    pub fn from_on_bits(width: usize, radius: u32, bits: &[usize]) -> Result<Fingerprint, FingerprintError> {
        check_width(width)?;
        let mut fp = Fingerprint { words: vec![0; width.div_ceil(64)], width, radius };
        for &b in bits {
            if b >= width {
                return Err(FingerprintError::InvalidWidth(width));
            }
            fp.set(b);
        }
        Ok(fp)
    }

    /// Folds the fingerprint onto `width` bits by OR-ing blocks together.
    pub fn fold(&self, width: usize) -> Result<Fingerprint, FingerprintError> {
        check_width(width)?;
        if width > self.width {
            return Err(FingerprintError::InvalidWidth(width));
        }
        let mut out = Fingerprint { words: vec![0; width.div_ceil(64)], width, radius: self.radius };
        for b in self.on_bits() {
            out.set(b % width);
        }
        Ok(out)
    }
}

fn check_width(width: usize) -> Result<(), FingerprintError> {
    if width == 0 || !width.is_power_of_two() {
        return Err(FingerprintError::InvalidWidth(width));
    }
    Ok(())
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn combine(seed: u64, value: u64) -> u64 {
    splitmix64(seed ^ splitmix64(value))
}

/// Radius-0 identifier of atom `i`.
pub fn atom_invariant(m: &Molecule, i: usize) -> u64 {
    let a = m.atom(i);
    [
        a.element.atomic_number() as u64,
        (a.charge as i64 + 128) as u64,
        m.degree(i) as u64,
        a.h_count as u64,
        a.in_ring as u64,
        a.aromatic as u64,
    ]
    .into_iter()
    .fold(0, combine)
}

pub fn morgan_fingerprint(m: &Molecule, radius: u32, width: usize) -> Result<Fingerprint, FingerprintError> {
    check_width(width)?;
    let mut fp = Fingerprint { words: vec![0; width.div_ceil(64)], width, radius };
    let mut ids: Vec<u64> = (0..m.atom_count()).map(|i| atom_invariant(m, i)).collect();
    for &id in &ids {
        fp.set((id % width as u64) as usize);
    }
    for step in 1..=radius {
        ids = (0..m.atom_count())
            .map(|i| {
                let mut env: Vec<(u8, u64)> =
                    m.neighbors(i).iter().map(|&(nb, bi)| (m.bonds()[bi].order.code(), ids[nb])).collect();
                env.sort_unstable();
                env.into_iter().fold(combine(step as u64, ids[i]), |h, (b, id)| combine(combine(h, b as u64), id))
            })
            .collect();
        for &id in &ids {
            fp.set((id % width as u64) as usize);
        }
    }
    Ok(fp)
}

/// Default 2048-bit, radius-2 fingerprint.
pub fn ecfp4(m: &Molecule) -> Fingerprint {
    morgan_fingerprint(m, DEFAULT_RADIUS, DEFAULT_WIDTH).expect("default width is valid")
}

/// |a AND b| / |a OR b|; 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.width != b.width || a.radius != b.radius {
        return Err(FingerprintError::ParameterMismatch(a.width, b.width, a.radius, b.radius));
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    Ok(if either == 0 { 1.0 } else { both as f64 / either as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn fp(s: &str) -> Fingerprint {
        ecfp4(&parse_smiles(s).unwrap())
    }

    fn from_bits(bits: &[usize]) -> Fingerprint {
        let mut f = Fingerprint { words: vec![0; 32], width: 2048, radius: 2 };
        for &b in bits {
            f.set(b);
        }
        f
    }

    #[test]
    fn atom_order_does_not_matter() {
        assert_eq!(fp("OCC(=O)N"), fp("NC(=O)CO"));
        assert_eq!(fp("c1ccncc1C"), fp("Cc1cccnc1"));
    }

    #[test]
    fn radius_zero_sets_atom_invariant_bits() {
        let m = parse_smiles("CO").unwrap();
        let f = morgan_fingerprint(&m, 0, 2048).unwrap();
        let mut want: Vec<usize> = (0..2).map(|i| (atom_invariant(&m, i) % 2048) as usize).collect();
        want.sort_unstable();
        want.dedup();
        assert_eq!(f.on_bits(), want);
        assert_eq!(f.count_ones(), 2);
    }

    #[test]
    fn ethanol_and_ethylamine_partially_similar() {
        let s = tanimoto(&fp("CCO"), &fp("CCN")).unwrap();
        assert!(s > 0.0 && s < 1.0, "{s}");
    }

    #[test]
    fn tanimoto_arithmetic() {
        let a = from_bits(&[1, 2, 3, 4, 5, 6, 7]);
        let b = from_bits(&[5, 6, 7, 8, 9, 10, 11, 12]);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.25);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        assert_eq!(tanimoto(&from_bits(&[1]), &from_bits(&[2])).unwrap(), 0.0);
        assert_eq!(tanimoto(&from_bits(&[]), &from_bits(&[])).unwrap(), 1.0);
    }

    #[test]
    fn mismatched_parameters_are_rejected() {
        let m = parse_smiles("CCO").unwrap();
        let a = morgan_fingerprint(&m, 2, 2048).unwrap();
        let b = morgan_fingerprint(&m, 1, 2048).unwrap();
        let c = morgan_fingerprint(&m, 2, 1024).unwrap();
        assert!(matches!(tanimoto(&a, &b), Err(FingerprintError::ParameterMismatch(..))));
        assert!(matches!(tanimoto(&a, &c), Err(FingerprintError::ParameterMismatch(..))));
        assert!(matches!(morgan_fingerprint(&m, 2, 1000), Err(FingerprintError::InvalidWidth(1000))));
    }

    #[test]
    fn fold_preserves_bits_modulo_width() {
        let a = fp("CC(=O)Nc1ccccc1");
        let f = a.fold(64).unwrap();
        assert!(a.on_bits().iter().all(|&b| f.get(b % 64)));
        assert!(f.count_ones() <= a.count_ones());
    }
}
