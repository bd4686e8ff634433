//! Sampled aggregate time series shared by the agent-based model and the
//! macro description.

use alloc::vec::Vec;

/// One row of aggregate observables.
///
/// Capital aggregates are named sector first, cohort second: `kcd` is the
/// clean-sector capital held by dirty investors. `n_c` is the fraction of
/// clean investors; `cc`, `dd`, `cd` are link counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sample {
    pub t: f64,
    pub n_c: f64,
    pub k_c: f64,
    pub k_d: f64,
    pub kcc: f64,
    pub kcd: f64,
    pub kdc: f64,
    pub kdd: f64,
    pub c: f64,
    pub g: f64,
    pub w: f64,
    pub r_c: f64,
    pub r_d: f64,
    pub y_c: f64,
    pub y_d: f64,
    pub cc: f64,
    pub dd: f64,
    pub cd: f64,
}

impl Sample {
    /// Column names, in the order of [`Sample::values`].
    pub const COLUMNS: [&'static str; 18] = [
        "t", "n_c", "K_c", "K_d", "Kcc", "Kcd", "Kdc", "Kdd", "C", "G", "w", "r_c", "r_d", "Y_c",
        "Y_d", "cc", "dd", "cd",
    ];

    pub fn values(&self) -> [f64; 18] {
        [
            self.t, self.n_c, self.k_c, self.k_d, self.kcc, self.kcd, self.kdc, self.kdd, self.c,
            self.g, self.w, self.r_c, self.r_d, self.y_c, self.y_d, self.cc, self.dd, self.cd,
        ]
    }

    pub fn from_values(v: &[f64; 18]) -> Self {
        Sample {
            t: v[0],
            n_c: v[1],
            k_c: v[2],
            k_d: v[3],
            kcc: v[4],
            kcd: v[5],
            kdc: v[6],
            kdd: v[7],
            c: v[8],
            g: v[9],
            w: v[10],
            r_c: v[11],
            r_d: v[12],
            y_c: v[13],
            y_d: v[14],
            cc: v[15],
            dd: v[16],
            cd: v[17],
        }
    }

    /// Index of a column name.
    pub fn column_index(name: &str) -> Option<usize> {
        Self::COLUMNS.iter().position(|c| *c == name)
    }

    /// Fraction of discordant links.
    pub fn cd_fraction(&self) -> f64 {
        let m = self.cc + self.dd + self.cd;
        if m > 0.0 {
            self.cd / m
        } else {
            0.0
        }
    }
}

/// Time-ordered samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Values of one column; `None` for an unknown name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = Sample::column_index(name)?;
        Some(self.samples.iter().map(|s| s.values()[k]).collect())
    }
}

/// Sample grid `0, dt, 2 dt, ...` up to and including `t_end` (within
/// rounding).
pub fn sample_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = libm::floor(t_end / dt + 1e-9) as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip() {
        let mut v = [0.0; 18];
        for (k, x) in v.iter_mut().enumerate() {
            *x = k as f64 * 1.5;
        }
        assert_eq!(Sample::from_values(&v).values(), v);
        assert_eq!(Sample::column_index("Kdc"), Some(6));
        assert_eq!(Sample::column_index("nope"), None);
    }

    #[test]
    fn grid_includes_end() {
        assert_eq!(sample_grid(3.0, 1.0), [0.0, 1.0, 2.0, 3.0]);
        assert_eq!(sample_grid(0.3, 0.1).len(), 4);
    }
}
