//! Published reference data for Werner states: the measured correlation
//! matrices of the singlet and of white noise, and the printed measure
//! tables. Values are kept exactly as printed (three decimals).

use crate::matcore::SymMatrix3;
use crate::measures::CorrMatrixR;

/// Measured R of the singlet source.
pub const R_BELL: SymMatrix3 = SymMatrix3 {
    xx: 0.971,
    xy: 0.073,
    xz: 0.010,
    yy: 0.966,
    yz: -0.009,
    zz: 0.941,
};

/// Measured R of the maximally mixed state.
pub const R_NOISE: SymMatrix3 = SymMatrix3 {
    xx: 0.017,
    xy: 0.006,
    xz: -0.007,
    yy: 0.013,
    yz: 0.016,
    zz: 0.006,
};

pub fn r_bell() -> CorrMatrixR {
    CorrMatrixR::new(R_BELL)
}

pub fn r_noise() -> CorrMatrixR {
    CorrMatrixR::new(R_NOISE)
}

/// One printed row: mixing parameter, closed-form value, measured value and
/// its asymmetric (plus, minus) bars when printed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub p: f64,
    pub theory: f64,
    pub experiment: f64,
    pub bars: Option<(f64, f64)>,
}

const fn row(p: f64, theory: f64, experiment: f64, bars: Option<(f64, f64)>) -> TableRow {
    TableRow {
        p,
        theory,
        experiment,
        bars,
    }
}

/// All rows of one measure; `measure` uses the `MeasureSet` field names.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableColumn {
    pub measure: &'static str,
    pub rows: [TableRow; 8],
}

pub const TABLE1: [TableColumn; 3] = [
    TableColumn {
        measure: "bell_B",
        rows: [
            row(0.3, 0.000, 0.000, None),
            row(0.4, 0.000, 0.000, None),
            row(0.5, 0.000, 0.000, None),
            row(0.6, 0.000, 0.000, None),
            row(0.7, 0.000, 0.000, Some((0.145, 0.000))),
            row(0.8, 0.529, 0.528, Some((0.068, 0.098))),
            row(0.9, 0.787, 0.783, Some((0.064, 0.057))),
            row(1.0, 1.000, 0.993, Some((0.007, 0.133))),
        ],
    },
    TableColumn {
        measure: "steering_S",
        rows: [
            row(0.3, 0.000, 0.000, None),
            row(0.4, 0.000, 0.000, None),
            row(0.5, 0.000, 0.000, None),
            row(0.6, 0.200, 0.172, Some((0.078, 0.168))),
            row(0.7, 0.485, 0.463, Some((0.046, 0.064))),
            row(0.8, 0.678, 0.654, Some((0.047, 0.043))),
            row(0.9, 0.846, 0.818, Some((0.045, 0.041))),
            row(1.0, 1.000, 0.969, Some((0.030, 0.092))),
        ],
    },
    TableColumn {
        measure: "fef",
        rows: [
            row(0.3, 0.000, 0.000, None),
            row(0.4, 0.100, 0.106, Some((0.031, 0.030))),
            row(0.5, 0.250, 0.248, Some((0.034, 0.022))),
            row(0.6, 0.400, 0.391, Some((0.027, 0.028))),
            row(0.7, 0.550, 0.534, Some((0.032, 0.041))),
            row(0.8, 0.700, 0.679, Some((0.038, 0.038))),
            row(0.9, 0.850, 0.824, Some((0.042, 0.038))),
            row(1.0, 1.000, 0.969, Some((0.031, 0.098))),
        ],
    },
];

pub const TABLE2: [TableColumn; 2] = [
    TableColumn {
        measure: "steering_S2",
        rows: [
            row(0.3, 0.000, 0.000, None),
            row(0.4, 0.000, 0.000, None),
            row(0.5, 0.000, 0.000, None),
            row(0.6, 0.000, 0.000, None),
            row(0.7, 0.000, 0.000, None),
            row(0.8, 0.317, 0.316, Some((0.086, 0.112))),
            row(0.9, 0.659, 0.652, Some((0.101, 0.085))),
            row(1.0, 1.000, 0.989, Some((0.011, 0.233))),
        ],
    },
    TableColumn {
        measure: "steering_S3",
        rows: [
            row(0.3, 0.000, 0.000, None),
            row(0.4, 0.000, 0.000, None),
            row(0.5, 0.000, 0.000, None),
            row(0.6, 0.054, 0.040, Some((0.044, 0.040))),
            row(0.7, 0.290, 0.267, Some((0.050, 0.064))),
            row(0.8, 0.527, 0.494, Some((0.062, 0.055))),
            row(0.9, 0.763, 0.723, Some((0.066, 0.058))),
            row(1.0, 1.000, 0.952, Some((0.048, 0.141))),
        ],
    },
];
