use std::fmt;

/// Chemical element, identified by atomic number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element(u8);

struct ElementData {
    number: u8,
    symbol: &'static str,
    mass: f64,
    valences: &'static [u8],
    metal: bool,
}

// Standard atomic weights (IUPAC abridged).
static TABLE: &[ElementData] = &[
    ElementData { number: 1, symbol: "H", mass: 1.008, valences: &[1], metal: false },
    ElementData { number: 3, symbol: "Li", mass: 6.94, valences: &[1], metal: true },
    ElementData { number: 5, symbol: "B", mass: 10.81, valences: &[3], metal: false },
    ElementData { number: 6, symbol: "C", mass: 12.011, valences: &[4], metal: false },
    ElementData { number: 7, symbol: "N", mass: 14.007, valences: &[3], metal: false },
    ElementData { number: 8, symbol: "O", mass: 15.999, valences: &[2], metal: false },
    ElementData { number: 9, symbol: "F", mass: 18.998, valences: &[1], metal: false },
    ElementData { number: 11, symbol: "Na", mass: 22.990, valences: &[1], metal: true },
    ElementData { number: 12, symbol: "Mg", mass: 24.305, valences: &[2], metal: true },
    ElementData { number: 14, symbol: "Si", mass: 28.085, valences: &[4], metal: false },
    ElementData { number: 15, symbol: "P", mass: 30.974, valences: &[3, 5], metal: false },
    ElementData { number: 16, symbol: "S", mass: 32.06, valences: &[2, 4, 6], metal: false },
    ElementData { number: 17, symbol: "Cl", mass: 35.45, valences: &[1], metal: false },
    ElementData { number: 19, symbol: "K", mass: 39.098, valences: &[1], metal: true },
    ElementData { number: 20, symbol: "Ca", mass: 40.078, valences: &[2], metal: true },
    ElementData { number: 26, symbol: "Fe", mass: 55.845, valences: &[2, 3], metal: true },
    ElementData { number: 29, symbol: "Cu", mass: 63.546, valences: &[1, 2], metal: true },
    ElementData { number: 30, symbol: "Zn", mass: 65.38, valences: &[2], metal: true },
    ElementData { number: 34, symbol: "Se", mass: 78.971, valences: &[2, 4, 6], metal: false },
    ElementData { number: 35, symbol: "Br", mass: 79.904, valences: &[1], metal: false },
    ElementData { number: 53, symbol: "I", mass: 126.904, valences: &[1, 3, 5], metal: false },
];

impl Element {
    pub const H: Element = Element(1);
    pub const B: Element = Element(5);
    pub const C: Element = Element(6);
    pub const N: Element = Element(7);
    pub const O: Element = Element(8);
    pub const F: Element = Element(9);
    pub const P: Element = Element(15);
    pub const S: Element = Element(16);
    pub const CL: Element = Element(17);
    pub const BR: Element = Element(35);
    pub const I: Element = Element(53);

    pub fn from_number(number: u8) -> Option<Element> {
        TABLE.iter().find(|e| e.number == number).map(|e| Element(e.number))
    }

    /// Case-sensitive lookup by symbol ("Cl", not "cl").
    pub fn from_symbol(symbol: &str) -> Option<Element> {
        TABLE.iter().find(|e| e.symbol == symbol).map(|e| Element(e.number))
    }

    fn data(self) -> &'static ElementData {
        TABLE.iter().find(|e| e.number == self.0).expect("Element values are only constructed from the table")
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        self.data().symbol
    }

    pub fn mass(self) -> f64 {
        self.data().mass
    }

    pub fn is_metal(self) -> bool {
        self.data().metal
    }

    pub fn is_carbon(self) -> bool {
        self.0 == 6
    }

    /// Members of the SMILES organic subset may be written without brackets.
    pub fn in_organic_subset(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 9 | 15 | 16 | 17 | 35 | 53)
    }

    /// Elements that have a lowercase aromatic spelling.
    pub fn can_be_aromatic(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 15 | 16 | 34)
    }

    /// Allowed valences for this element carrying `charge`.
    ///
    /// Charged main-group atoms take the valences of the isoelectronic
    /// neighbour (N+ behaves like C, O- like F); metals lose one bond per unit
    /// of charge.
    pub fn allowed_valences(self, charge: i8) -> Vec<u8> {
        if charge == 0 {
            return self.data().valences.to_vec();
        }
        if self.is_metal() {
            let base = *self.data().valences.iter().max().unwrap_or(&0) as i16;
            return vec![(base - charge.unsigned_abs() as i16).max(0) as u8];
        }
        let shifted = self.0 as i16 - charge as i16;
        match shifted {
            5 => vec![3],
            6 => vec![4],
            7 => vec![3],
            8 => vec![2],
            9 => vec![1],
            10 => vec![0],
            13 => vec![3],
            14 => vec![4],
            15 => vec![3, 5],
            16 => vec![2, 4, 6],
            17 => vec![1],
            18 => vec![0],
            32 => vec![4],
            33 => vec![3, 5],
            34 => vec![2, 4, 6],
            35 => vec![1],
            36 => vec![0],
            52 => vec![2, 4, 6],
            53 => vec![1, 3, 5],
            54 => vec![0],
            _ => vec![0],
        }
    }

    pub fn max_valence(self, charge: i8) -> u8 {
        self.allowed_valences(charge).into_iter().max().unwrap_or(0)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
