//! Text tables of Lévy densities.
//!
//! A table is a CSV body with columns `xi,rho,rho_prime`, preceded by
//! `# key = value` header lines. Other `#` lines are free comments.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `delta` | radius of the region where the density is used | largest `|xi|` |
//! | `rho_index` | small-jump index; also the power law used below the first row | required |
//! | `symmetric` | `true` mirrors positive rows onto the negative axis | `true` |
//! | `large_jump_mass` | `m{|ξ| ≥ R}` with `R` the largest tabulated `|xi|` | `0` |
//! | `large_jump_index` | Pareto index of jumps beyond `R` | `rho_index` |
//! | `large_jump_positive_fraction` | probability that a large jump is positive | `0.5` |
//! | `compensator_drift` | drift added to asymmetric noise | none |
//!
//! Between rows the density is interpolated as a power law and `ξρ'/ρ`
//! linearly in `ln|ξ|`, both exact for a pure power law. Tail masses are
//! integrated in closed form.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::levy_model::{LargeJumpLaw, LevyCoordinateModel, LevyMeasure, TabulatedMeasure};

/// One half-axis of the table, sorted by increasing `r = |ξ|`.
#[derive(Debug, Clone)]
struct HalfAxis {
    r: Vec<f64>,
    rho: Vec<f64>,
    /// `r ρ'(r)/ρ(r)` along the half-axis direction.
    elasticity: Vec<f64>,
    /// Power-law exponent on `[r_i, r_{i+1}]`.
    power: Vec<f64>,
    /// `∫_{r_i}^{R} ρ`.
    upper_mass: Vec<f64>,
    small_power: f64,
}

fn power_integral(rho0: f64, r0: f64, p: f64, a: f64, b: f64) -> f64 {
    if (p + 1.0).abs() < 1e-12 {
        rho0 * r0 * (b / a).ln()
    } else {
        rho0 * r0 * ((b / r0).powf(p + 1.0) - (a / r0).powf(p + 1.0)) / (p + 1.0)
    }
}

impl HalfAxis {
    fn new(mut rows: Vec<(f64, f64, f64)>, rho_index: f64) -> Result<Self> {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.len() < 2 {
            return Err(Error::Table("each half-axis needs at least two rows".into()));
        }
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Table(format!("duplicate abscissa {}", w[0].0)));
            }
        }
        if let Some(row) = rows.iter().find(|row| !(row.1 > 0.0 && row.1.is_finite() && row.2.is_finite())) {
            return Err(Error::Table(format!("density must be positive and finite, got rho = {} at |xi| = {}", row.1, row.0)));
        }
        let r: Vec<f64> = rows.iter().map(|x| x.0).collect();
        let rho: Vec<f64> = rows.iter().map(|x| x.1).collect();
        let elasticity: Vec<f64> = rows.iter().map(|x| x.0 * x.2 / x.1).collect();
        let n = r.len();
        let power: Vec<f64> = (0..n - 1).map(|i| (rho[i + 1] / rho[i]).ln() / (r[i + 1] / r[i]).ln()).collect();
        let mut upper_mass = vec![0.0; n];
        for i in (0..n - 1).rev() {
            upper_mass[i] = upper_mass[i + 1] + power_integral(rho[i], r[i], power[i], r[i], r[i + 1]);
        }
        Ok(HalfAxis { r, rho, elasticity, power, upper_mass, small_power: -1.0 - rho_index })
    }

    fn radius(&self) -> f64 {
        *self.r.last().unwrap()
    }

    /// Index `i` with `r_i ≤ x < r_{i+1}`, or `None` below the first row.
    fn segment(&self, x: f64) -> Option<usize> {
        if x < self.r[0] {
            return None;
        }
        let i = self.r.partition_point(|&v| v <= x);
        Some((i - 1).min(self.r.len() - 2))
    }

    fn density(&self, x: f64) -> f64 {
        if x >= self.radius() {
            return 0.0;
        }
        match self.segment(x) {
            None => self.rho[0] * (x / self.r[0]).powf(self.small_power),
            Some(i) => self.rho[i] * (x / self.r[i]).powf(self.power[i]),
        }
    }

    /// `ρ'(x)/ρ(x)` for the density `r ↦ ρ(r)` on this half-axis.
    fn log_deriv(&self, x: f64) -> f64 {
        match self.segment(x) {
            None => self.small_power / x,
            Some(i) => {
                let w = (x / self.r[i]).ln() / (self.r[i + 1] / self.r[i]).ln();
                ((1.0 - w) * self.elasticity[i] + w * self.elasticity[i + 1]) / x
            }
        }
    }

    /// `∫_{x}^{R} ρ`.
    fn mass_above(&self, x: f64) -> f64 {
        if x >= self.radius() {
            return 0.0;
        }
        match self.segment(x) {
            None => self.upper_mass[0] + power_integral(self.rho[0], self.r[0], self.small_power, x, self.r[0]),
            Some(i) => self.upper_mass[i + 1] + power_integral(self.rho[i], self.r[i], self.power[i], x, self.r[i + 1]),
        }
    }
}

/// A parsed table, ready to be turned into a model.
#[derive(Debug, Clone)]
pub struct MeasureTable {
    pub delta: f64,
    pub rho_index: f64,
    pub symmetric: bool,
    pub large_jump_mass: f64,
    pub large_jump_index: f64,
    pub large_jump_positive_fraction: f64,
    pub compensator_drift: Option<f64>,
    positive: HalfAxis,
    negative: HalfAxis,
}

const KNOWN_KEYS: [&str; 7] = [
    "delta",
    "rho_index",
    "symmetric",
    "large_jump_mass",
    "large_jump_index",
    "large_jump_positive_fraction",
    "compensator_drift",
];

fn number(header: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    header
        .get(key)
        .map(|v| v.parse::<f64>().map_err(|_| Error::Table(format!("`{key}` must be a number, got `{v}`"))))
        .transpose()
}

impl MeasureTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut header = BTreeMap::new();
        for line in text.lines() {
            let Some(rest) = line.trim().strip_prefix('#') else { continue };
            let Some((k, v)) = rest.split_once('=') else { continue };
            let key = k.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                continue;
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Table(format!("unknown header key `{key}`")));
            }
            header.insert(key.to_string(), v.trim().to_string());
        }

        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let columns = reader.headers().map_err(|e| Error::Table(e.to_string()))?.clone();
        if columns.iter().collect::<Vec<_>>() != ["xi", "rho", "rho_prime"] {
            return Err(Error::Table(format!("expected columns xi,rho,rho_prime, got {:?}", columns)));
        }
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Table(e.to_string()))?;
            let field = |i: usize| -> Result<f64> {
                record[i].parse::<f64>().map_err(|_| Error::Table(format!("row {}: `{}` is not a number", line + 1, &record[i])))
            };
            let (xi, rho, rho_prime) = (field(0)?, field(1)?, field(2)?);
            if xi > 0.0 {
                pos.push((xi, rho, rho_prime));
            } else if xi < 0.0 {
                // on the negative axis, d/dr ρ(−r) = −ρ'(ξ)
                neg.push((-xi, rho, -rho_prime));
            } else {
                return Err(Error::Table("xi = 0 is not allowed".into()));
            }
        }

        let rho_index = number(&header, "rho_index")?.ok_or_else(|| Error::Table("missing header key `rho_index`".into()))?;
        if !(rho_index > 0.0 && rho_index < 2.0) {
            return Err(Error::Table(format!("rho_index must lie in (0, 2), got {rho_index}")));
        }
        let symmetric = match header.get("symmetric").map(String::as_str) {
            None | Some("true") => true,
            Some("false") => false,
            Some(v) => return Err(Error::Table(format!("`symmetric` must be true or false, got `{v}`"))),
        };
        if symmetric && neg.is_empty() {
            neg = pos.clone();
        }
        let positive = HalfAxis::new(pos, rho_index)?;
        let negative = HalfAxis::new(neg, rho_index)?;
        if positive.radius() != negative.radius() {
            return Err(Error::Table("both half-axes must end at the same |xi|".into()));
        }
        let large_jump_mass = number(&header, "large_jump_mass")?.unwrap_or(0.0);
        if !(large_jump_mass >= 0.0 && large_jump_mass.is_finite()) {
            return Err(Error::Table(format!("large_jump_mass must be finite and nonnegative, got {large_jump_mass}")));
        }
        let delta = number(&header, "delta")?.unwrap_or(positive.radius());
        Ok(MeasureTable {
            delta,
            rho_index,
            symmetric,
            large_jump_mass,
            large_jump_index: number(&header, "large_jump_index")?.unwrap_or(rho_index),
            large_jump_positive_fraction: number(&header, "large_jump_positive_fraction")?.unwrap_or(0.5),
            compensator_drift: number(&header, "compensator_drift")?,
            positive,
            negative,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Largest tabulated `|ξ|`.
    pub fn radius(&self) -> f64 {
        self.positive.radius()
    }

    pub fn to_measure(&self) -> Result<TabulatedMeasure> {
        let (p1, n1) = (Arc::new(self.positive.clone()), Arc::new(self.negative.clone()));
        let (p2, n2) = (p1.clone(), n1.clone());
        let (p3, n3) = (p1.clone(), n1.clone());
        let big = self.large_jump_mass;
        let large_jumps = if big > 0.0 {
            LargeJumpLaw::Pareto { index: self.large_jump_index, positive_fraction: self.large_jump_positive_fraction }
        } else {
            LargeJumpLaw::None
        };
        TabulatedMeasure::new(
            self.radius(),
            Arc::new(move |x: f64| if x >= 0.0 { p1.density(x) } else { n1.density(-x) }),
            Arc::new(move |x: f64| if x >= 0.0 { p2.log_deriv(x) } else { -n2.log_deriv(-x) }),
            Arc::new(move |e: f64| p3.mass_above(e) + n3.mass_above(e) + big),
            large_jumps,
            self.symmetric,
            self.rho_index,
            self.compensator_drift,
        )
    }

    pub fn to_model(&self) -> Result<LevyCoordinateModel> {
        LevyCoordinateModel::new(LevyMeasure::Tabulated(self.to_measure()?), self.delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;
    use std::fmt::Write as _;

    fn stable_table(alpha: f64, rows: usize, symmetric: bool) -> String {
        let mut s = format!(
            "# rho_index = {alpha}\n# delta = 0.5\n# symmetric = {symmetric}\n# large_jump_mass = {}\nxi,rho,rho_prime\n",
            2.0 * 0.5f64.powf(-alpha) / alpha
        );
        let signs: &[f64] = if symmetric { &[1.0] } else { &[1.0, -1.0] };
        for &sgn in signs {
            for i in 0..rows {
                let r = 0.5 * 2f64.powf(-12.0 * i as f64 / (rows - 1) as f64);
                let xi = sgn * r;
                let rho = r.powf(-1.0 - alpha);
                writeln!(s, "{xi:e},{rho:e},{:e}", -(1.0 + alpha) * rho / xi).unwrap();
            }
        }
        s
    }

    #[test]
    fn stable_table_reproduces_power_law() {
        let alpha = 0.8;
        let t = MeasureTable::parse(&stable_table(alpha, 40, true)).unwrap();
        let m = t.to_model().unwrap();
        for i in 0..100 {
            let r = 1e-4 + (0.5 - 2e-4) * i as f64 / 99.0;
            for xi in [r, -r] {
                assert_relative_eq!(m.log_density_derivative(xi).unwrap(), -(1.0 + alpha) / xi, max_relative = 1e-10);
                assert_relative_eq!(m.density(xi).unwrap(), r.powf(-1.0 - alpha), max_relative = 1e-10);
            }
        }
        assert_relative_eq!(m.tail_mass(0.01).unwrap(), 2.0 * 0.01f64.powf(-alpha) / alpha, max_relative = 1e-10);
    }

    #[test]
    fn tail_difference_matches_quadrature() {
        let text = "# rho_index = 1.2\n# symmetric = false\n# compensator_drift = 0.1\nxi,rho,rho_prime\n\
                    0.01,300,-9e4\n0.05,40,-1500\n0.2,6,-50\n0.6,1,-2\n\
                    -0.01,200,5e4\n-0.07,20,600\n-0.6,0.5,1\n";
        let t = MeasureTable::parse(text).unwrap();
        let m = t.to_model().unwrap();
        for eps in [0.003, 0.02, 0.04, 0.1, 0.25] {
            let d = |x: f64| m.density(x).unwrap();
            let quad = integrate(d, eps, 2.0 * eps, 0.0, 1e-12).unwrap().value
                + integrate(|x| d(-x), eps, 2.0 * eps, 0.0, 1e-12).unwrap().value;
            let diff = m.tail_mass(eps).unwrap() - m.tail_mass(2.0 * eps).unwrap();
            assert_relative_eq!(diff, quad, max_relative = 1e-8);
        }
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(MeasureTable::parse("xi,rho,rho_prime\n0.1,1,1\n0.2,1,1\n").is_err());
        assert!(MeasureTable::parse("# rho_index = 1\n# colour = red\nxi,rho,rho_prime\n0.1,1,1\n0.2,1,1\n").is_err());
        assert!(MeasureTable::parse("# density for |xi| <= 1/2\n# rho_index = 1\nxi,rho,rho_prime\n0.1,1,1\n0.2,1,1\n").is_ok());
        assert!(MeasureTable::parse("# rho_index = 1\nxi,rho\n0.1,1\n0.2,1\n").is_err());
        assert!(MeasureTable::parse("# rho_index = 1\nxi,rho,rho_prime\n0.1,-1,1\n0.2,1,1\n").is_err());
        assert!(MeasureTable::parse("# rho_index = 1\nxi,rho,rho_prime\n0.1,1,1\n").is_err());
    }
}
