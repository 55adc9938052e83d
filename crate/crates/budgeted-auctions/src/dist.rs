//! Value distributions on `[0, h]`: piecewise-constant densities and discrete atoms.

use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A single-bidder value distribution.
///
/// `Continuous` holds a piecewise-constant density: `densities[i]` applies on
/// `[breaks[i], breaks[i+1])`, with `breaks[0] == 0`. `Discrete` holds atoms at
/// strictly increasing values with masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    Continuous {
        breaks: Vec<f64>,
        densities: Vec<f64>,
        /// cumulative mass at each breakpoint; `cum[0] = 0`, `cum.last() = 1`
        cum: Vec<f64>,
    },
    Discrete {
        values: Vec<f64>,
        masses: Vec<f64>,
        /// cumulative mass after each atom; `cum.last() = 1`
        cum: Vec<f64>,
    },
}

/// Serialization schema for distributions, used by the CLI and config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistSpec {
    Uniform { lo: f64, hi: f64 },
    Piecewise { breaks: Vec<f64>, densities: Vec<f64> },
    Discrete { values: Vec<f64>, masses: Vec<f64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub welfare_regular: bool,
    pub revenue_regular: bool,
    /// location and description of the first violated condition, if any
    pub witness: Option<(f64, String)>,
}

impl Dist {
    pub fn uniform(hi: f64) -> Result<Dist> {
        Dist::piecewise(vec![0.0, hi], vec![1.0 / hi])
    }

    pub fn piecewise(breaks: Vec<f64>, densities: Vec<f64>) -> Result<Dist> {
        if breaks.len() < 2 || densities.len() + 1 != breaks.len() {
            return Err(Error::Domain("need k+1 breakpoints for k densities".into()));
        }
        if breaks[0] != 0.0 {
            return Err(Error::Domain("support must start at 0".into()));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("breakpoints must be strictly increasing".into()));
        }
        if densities.iter().any(|&f| f < 0.0 || !f.is_finite()) {
            return Err(Error::Domain("densities must be nonnegative and finite".into()));
        }
        let mut cum = vec![0.0];
        for (i, f) in densities.iter().enumerate() {
            cum.push(cum[i] + f * (breaks[i + 1] - breaks[i]));
        }
        let total = *cum.last().unwrap();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("total mass is {total}, expected 1")));
        }
        // renormalize away the last-bit rounding so cdf(h) is exactly 1
        let mut densities = densities;
        for f in &mut densities {
            *f /= total;
        }
        for c in &mut cum {
            *c /= total;
        }
        Ok(Dist::Continuous { breaks, densities, cum })
    }

    pub fn discrete(values: Vec<f64>, masses: Vec<f64>) -> Result<Dist> {
        if values.is_empty() || values.len() != masses.len() {
            return Err(Error::Domain("values/masses length mismatch".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("atom values must be strictly increasing".into()));
        }
        if values[0] <= 0.0 {
            return Err(Error::Domain("atom values must be positive".into()));
        }
        if masses.iter().any(|&m| m <= 0.0) {
            return Err(Error::Domain("atom masses must be positive".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("total mass is {total}, expected 1")));
        }
        let masses: Vec<f64> = masses.iter().map(|m| m / total).collect();
        let mut cum = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in &masses {
            acc += m;
            cum.push(acc);
        }
        Ok(Dist::Discrete { values, masses, cum })
    }

    pub fn from_spec(spec: &DistSpec) -> Result<Dist> {
        match spec {
            DistSpec::Uniform { lo, hi } => {
                if *lo != 0.0 {
                    return Err(Error::Domain("uniform support must start at 0".into()));
                }
                Dist::uniform(*hi)
            }
            DistSpec::Piecewise { breaks, densities } => {
                Dist::piecewise(breaks.clone(), densities.clone())
            }
            DistSpec::Discrete { values, masses } => Dist::discrete(values.clone(), masses.clone()),
        }
    }

    /// Highest value in the support.
    pub fn hbar(&self) -> f64 {
        match self {
            Dist::Continuous { breaks, .. } => *breaks.last().unwrap(),
            Dist::Discrete { values, .. } => *values.last().unwrap(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Dist::Discrete { .. })
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match self {
            Dist::Continuous { breaks, densities, cum } => {
                if v <= 0.0 {
                    return 0.0;
                }
                if v >= *breaks.last().unwrap() {
                    return 1.0;
                }
                let i = piece_index(breaks, v);
                cum[i] + densities[i] * (v - breaks[i])
            }
            Dist::Discrete { values, cum, .. } => {
                // right-continuous step: mass at v counts
                match values.iter().rposition(|&x| x <= v) {
                    Some(i) => cum[i],
                    None => 0.0,
                }
            }
        }
    }

    pub fn pdf(&self, v: f64) -> f64 {
        match self {
            Dist::Continuous { breaks, densities, .. } => {
                if v < 0.0 || v > *breaks.last().unwrap() {
                    0.0
                } else {
                    densities[piece_index(breaks, v.min(breaks[breaks.len() - 1] * (1.0 - 1e-15)))]
                }
            }
            Dist::Discrete { .. } => 0.0,
        }
    }

    /// Inverse tail quantile: the value `v` with `1 - F(v) = q`.
    pub fn quantile_value(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!("quantile {q} outside [0,1]")));
        }
        let p = 1.0 - q;
        match self {
            Dist::Continuous { breaks, densities, cum } => {
                if p <= 0.0 {
                    // lowest value with positive tail mass
                    return Ok(breaks[0]);
                }
                if p >= 1.0 {
                    return Ok(*breaks.last().unwrap());
                }
                let i = cum.windows(2).position(|w| p <= w[1]).unwrap();
                if densities[i] == 0.0 {
                    return Ok(breaks[i + 1]);
                }
                Ok(breaks[i] + (p - cum[i]) / densities[i])
            }
            Dist::Discrete { values, cum, .. } => {
                let i = cum.iter().position(|&c| c >= p - 1e-12).unwrap();
                Ok(values[i])
            }
        }
    }

    /// Myerson virtual value. Continuous: `v - (1-F(v))/f(v)`; discrete at atom
    /// `v_i`: `v_i - (1 - F(v_i)) (v_{i+1} - v_i) / m_i`.
    pub fn virtual_value(&self, v: f64) -> Result<f64> {
        match self {
            Dist::Continuous { .. } => {
                let f = self.pdf(v);
                if f <= 0.0 {
                    return Err(Error::Domain(format!("zero density at {v}")));
                }
                Ok(v - (1.0 - self.cdf(v)) / f)
            }
            Dist::Discrete { values, masses, cum } => {
                let i = values
                    .iter()
                    .position(|&x| (x - v).abs() <= 1e-12)
                    .ok_or_else(|| Error::Domain(format!("{v} is not an atom")))?;
                if i + 1 == values.len() {
                    return Ok(v);
                }
                Ok(v - (1.0 - cum[i]) * (values[i + 1] - values[i]) / masses[i])
            }
        }
    }

    /// Welfare regularity is concavity of `F` (nonincreasing density);
    /// revenue regularity additionally requires a nondecreasing virtual value.
    pub fn check_regularity(&self) -> RegularityReport {
        match self {
            Dist::Continuous { breaks, densities, .. } => {
                let mut witness = None;
                let mut welfare = true;
                for i in 1..densities.len() {
                    if densities[i] > densities[i - 1] + 1e-12 {
                        welfare = false;
                        witness = Some((breaks[i], format!(
                            "density rises from {} to {} at {}",
                            densities[i - 1], densities[i], breaks[i]
                        )));
                        break;
                    }
                }
                let mut revenue = welfare;
                if revenue {
                    // virtual value is affine within a piece with slope 1 + f'/..;
                    // with constant density it is increasing inside pieces, so only
                    // the boundary jumps can break monotonicity
                    let mut last = f64::NEG_INFINITY;
                    let grid = 512;
                    let h = self.hbar();
                    for g in 0..=grid {
                        let v = h * g as f64 / grid as f64;
                        if self.pdf(v) == 0.0 {
                            continue;
                        }
                        let phi = v - (1.0 - self.cdf(v)) / self.pdf(v);
                        if phi < last - 1e-9 {
                            revenue = false;
                            if witness.is_none() {
                                witness =
                                    Some((v, format!("virtual value falls to {phi} at {v}")));
                            }
                            break;
                        }
                        last = phi;
                    }
                }
                RegularityReport { welfare_regular: welfare, revenue_regular: revenue, witness }
            }
            Dist::Discrete { values, masses, .. } => {
                let mut witness = None;
                let mut welfare = true;
                // implied step densities over the gaps must be nonincreasing
                let mut last_density = f64::INFINITY;
                for i in 0..values.len() {
                    let lo = if i == 0 { 0.0 } else { values[i - 1] };
                    let d = masses[i] / (values[i] - lo);
                    if d > last_density + 1e-12 {
                        welfare = false;
                        witness = Some((values[i], format!(
                            "atom density {d} at {} exceeds previous {last_density}",
                            values[i]
                        )));
                        break;
                    }
                    last_density = d;
                }
                let mut revenue = welfare;
                if revenue {
                    let mut last = f64::NEG_INFINITY;
                    for &v in values {
                        let phi = self.virtual_value(v).unwrap();
                        if phi < last - 1e-9 {
                            revenue = false;
                            if witness.is_none() {
                                witness =
                                    Some((v, format!("virtual value falls to {phi} at {v}")));
                            }
                            break;
                        }
                        last = phi;
                    }
                }
                RegularityReport { welfare_regular: welfare, revenue_regular: revenue, witness }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        match self {
            Dist::Continuous { breaks, densities, cum } => {
                let i = cum.windows(2).position(|w| u <= w[1]).unwrap_or(densities.len() - 1);
                if densities[i] == 0.0 {
                    breaks[i + 1]
                } else {
                    breaks[i] + (u - cum[i]) / densities[i]
                }
            }
            Dist::Discrete { values, cum, .. } => {
                let i = cum.iter().position(|&c| u <= c).unwrap_or(values.len() - 1);
                values[i]
            }
        }
    }

    /// Expected value of the distribution.
    pub fn mean(&self) -> f64 {
        match self {
            Dist::Continuous { breaks, densities, .. } => densities
                .iter()
                .enumerate()
                .map(|(i, f)| f * (breaks[i + 1].powi(2) - breaks[i].powi(2)) / 2.0)
                .sum(),
            Dist::Discrete { values, masses, .. } => {
                values.iter().zip(masses).map(|(v, m)| v * m).sum()
            }
        }
    }
}

/// Index of the density piece containing `v`, treating pieces as `[b_i, b_{i+1})`.
pub(crate) fn piece_index(breaks: &[f64], v: f64) -> usize {
    debug_assert!(v >= breaks[0]);
    match breaks.windows(2).position(|w| v < w[1]) {
        Some(i) => i,
        None => breaks.len() - 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp_instance(n: usize) -> Dist {
        // decreasing two-piece density used by the first-price gap experiment
        let nf = n as f64;
        Dist::piecewise(vec![0.0, 1.0 / nf, 1.0], vec![nf - 1.0, 1.0 / (nf - 1.0)]).unwrap()
    }

    #[test]
    fn cdf_matches_hand_integration() {
        let d = fp_instance(10);
        assert!((d.cdf(0.05) - 0.45).abs() < 1e-12);
        assert!((d.cdf(0.1) - 0.9).abs() < 1e-12);
        assert!((d.cdf(0.55) - (0.9 + 0.45 / 9.0)).abs() < 1e-12);
        assert_eq!(d.cdf(1.0), 1.0);
        assert_eq!(d.cdf(-0.1), 0.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = fp_instance(10);
        assert!((d.quantile_value(0.1).unwrap() - 0.1).abs() < 1e-12);
        for q in [0.0, 0.01, 0.3, 0.77, 0.999] {
            let v = d.quantile_value(q).unwrap();
            assert!((d.cdf(v) - (1.0 - q)).abs() < 1e-9, "q={q}");
        }
    }

    #[test]
    fn virtual_value_uniform() {
        let d = Dist::uniform(4.04).unwrap();
        // phi(v) = 2v - h for uniform [0,h]
        assert!((d.virtual_value(2.0).unwrap() - (-0.04)).abs() < 1e-12);
        let rep = d.check_regularity();
        assert!(rep.welfare_regular && rep.revenue_regular);
    }

    #[test]
    fn fp_instance_is_welfare_but_not_revenue_regular() {
        let d = fp_instance(10);
        let rep = d.check_regularity();
        assert!(rep.welfare_regular);
        assert!(!rep.revenue_regular);
        assert!(rep.witness.is_some());
    }

    #[test]
    fn discrete_basics() {
        let d = Dist::discrete(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(d.cdf(1.0), 0.5);
        assert_eq!(d.cdf(1.5), 0.5);
        assert_eq!(d.cdf(2.0), 1.0);
        assert_eq!(d.quantile_value(0.25).unwrap(), 2.0);
        assert_eq!(d.quantile_value(0.75).unwrap(), 1.0);
        // top atom has virtual value equal to its value
        assert_eq!(d.virtual_value(2.0).unwrap(), 2.0);
        // v1 - (1-F1)(v2-v1)/m1 = 1 - 0.5/0.5 = 0
        assert_eq!(d.virtual_value(1.0).unwrap(), 0.0);
    }

    #[test]
    fn spec_roundtrip() {
        let s: DistSpec =
            serde_json::from_str(r#"{"kind":"uniform","lo":0.0,"hi":4.04}"#).unwrap();
        let d = Dist::from_spec(&s).unwrap();
        assert_eq!(d.hbar(), 4.04);
        let s2: DistSpec = serde_json::from_str(
            r#"{"kind":"discrete","values":[1.0,3.0],"masses":[0.25,0.75]}"#,
        )
        .unwrap();
        assert!(Dist::from_spec(&s2).unwrap().is_discrete());
    }

    #[test]
    fn sampling_tracks_cdf() {
        use rand::SeedableRng;
        let d = fp_instance(4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut below = 0usize;
        for _ in 0..n {
            if d.sample(&mut rng) <= 0.25 {
                below += 1;
            }
        }
        let p = below as f64 / n as f64;
        assert!((p - d.cdf(0.25)).abs() < 0.005, "p={p}");
    }
}
