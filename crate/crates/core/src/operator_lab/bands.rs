//! Band/gap layouts `Δ_k = [α_{2k-1}, α_{2k}]`, `Λ_k = (α_{2k}, α_{2k+1})`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// `|x|^p` with the continuous convention `0^p = 0` for `p > 0` and `0^0 = 1`.
pub fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        x.abs().powf(p)
    }
}

/// Right-hand side of the gap condition: `2^{1-p} b1 |α_{2k+1} + α_{2k}|^p`.
pub fn required_gap(lo: f64, hi: f64, b1: f64, p: f64) -> f64 {
    2f64.powf(1.0 - p) * b1 * abs_pow(hi + lo, p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub index: i64,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub index: i64,
    pub lo: f64,
    pub hi: f64,
    /// Gap outside the outermost band; its far endpoint is virtual.
    pub outer: bool,
}

impl Gap {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo < t && t < self.hi
    }
}

/// Band layout. `alphas` lists band endpoints pairwise; band `first_band + i`
/// is `[alphas[2i], alphas[2i+1]]` and gap `k` separates bands `k` and `k+1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub alphas: Vec<f64>,
    pub first_band: i64,
    pub two_sided: bool,
    /// Endpoint `α` just below the first band (closes the leading outer gap).
    pub lead_alpha: Option<f64>,
    /// Endpoint `α` just above the last band (closes the trailing outer gap).
    pub tail_alpha: Option<f64>,
    /// First positive-side gap index from which consecutive midpoints satisfy
    /// `r_{n+1}^{1-p} - r_n^{1-p} > b1 (1-p)`.
    pub separation_n0: Option<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "schema")]
enum BandSpecDocument {
    #[serde(rename = "bandspec.v1")]
    V1(BandSpec),
}

impl BandSpec {
    pub fn from_bands(bands: &[(f64, f64)]) -> Result<Self> {
        let spec = BandSpec {
            alphas: bands.iter().flat_map(|&(a, b)| [a, b]).collect(),
            first_band: 1,
            two_sided: false,
            lead_alpha: None,
            tail_alpha: None,
            separation_n0: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.alphas.len() % 2 != 0 {
            return Err(LabError::InvalidParameter(
                "band spec needs a nonempty, even number of endpoints".into(),
            ));
        }
        if self.alphas.iter().any(|a| !a.is_finite()) {
            return Err(LabError::InvalidParameter("band endpoints must be finite".into()));
        }
        for w in self.alphas.chunks(2) {
            if w[0] >= w[1] {
                return Err(LabError::InvalidParameter(format!(
                    "band [{}, {}] is empty or reversed",
                    w[0], w[1]
                )));
            }
        }
        for pair in self.alphas.windows(2).skip(1).step_by(2) {
            if pair[0] >= pair[1] {
                return Err(LabError::InvalidParameter(format!(
                    "gap ({}, {}) is empty",
                    pair[0], pair[1]
                )));
            }
        }
        if let Some(lead) = self.lead_alpha {
            if lead >= self.alphas[0] {
                return Err(LabError::InvalidParameter("leading outer gap is empty".into()));
            }
        }
        if let Some(tail) = self.tail_alpha {
            if tail <= *self.alphas.last().unwrap() {
                return Err(LabError::InvalidParameter("trailing outer gap is empty".into()));
            }
        }
        Ok(())
    }

    pub fn band_count(&self) -> usize {
        self.alphas.len() / 2
    }

    pub fn last_band(&self) -> i64 {
        self.first_band + self.band_count() as i64 - 1
    }

    pub fn bands(&self) -> Vec<Band> {
        self.alphas
            .chunks(2)
            .enumerate()
            .map(|(i, w)| Band {
                index: self.first_band + i as i64,
                lo: w[0],
                hi: w[1],
            })
            .collect()
    }

    pub fn band(&self, index: i64) -> Option<Band> {
        let i = index - self.first_band;
        if i < 0 || i as usize >= self.band_count() {
            return None;
        }
        let i = i as usize;
        Some(Band {
            index,
            lo: self.alphas[2 * i],
            hi: self.alphas[2 * i + 1],
        })
    }

    /// All gaps in increasing order, outer gaps included when their endpoints are known.
    pub fn gaps(&self) -> Vec<Gap> {
        let mut out = Vec::new();
        if let Some(lead) = self.lead_alpha {
            out.push(Gap {
                index: self.first_band - 1,
                lo: lead,
                hi: self.alphas[0],
                outer: true,
            });
        }
        let bands = self.bands();
        for w in bands.windows(2) {
            out.push(Gap {
                index: w[0].index,
                lo: w[0].hi,
                hi: w[1].lo,
                outer: false,
            });
        }
        if let Some(tail) = self.tail_alpha {
            out.push(Gap {
                index: self.last_band(),
                lo: *self.alphas.last().unwrap(),
                hi: tail,
                outer: true,
            });
        }
        out
    }

    pub fn gap(&self, index: i64) -> Option<Gap> {
        self.gaps().into_iter().find(|g| g.index == index)
    }

    /// Band containing `t` (closed intervals).
    pub fn band_of(&self, t: f64) -> Option<i64> {
        self.bands().into_iter().find(|b| b.contains(t)).map(|b| b.index)
    }

    /// Gap strictly containing `t`.
    pub fn gap_of(&self, t: f64) -> Option<i64> {
        self.gaps().into_iter().find(|g| g.contains(t)).map(|g| g.index)
    }

    /// Fills missing outer gaps with the tight gap-condition construction.
    pub fn with_outer_gaps(mut self, b1: f64, p: f64) -> Result<Self> {
        if self.lead_alpha.is_none() {
            self.lead_alpha = Some(tight_gap_below(self.alphas[0], b1, p)?);
        }
        if self.tail_alpha.is_none() {
            let top = *self.alphas.last().unwrap();
            self.tail_alpha = Some(top + tight_gap_above(top, b1, p)?);
        }
        Ok(self)
    }

    /// Largest |α| in the layout, used as a scale for relative tolerances.
    pub fn scale(&self) -> f64 {
        self.alphas
            .iter()
            .chain(self.lead_alpha.iter())
            .chain(self.tail_alpha.iter())
            .fold(1.0f64, |acc, a| acc.max(a.abs()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&BandSpecDocument::V1(self.clone()))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let BandSpecDocument::V1(spec) = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Gap coefficient data. `b_prime` is the subordination infimum (in practice
/// the certified lower bound `b_est`), `delta` the strip half-width coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapParams {
    pub p: f64,
    pub b1: f64,
    pub b_prime: f64,
    pub delta: f64,
}

impl GapParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p) {
            return Err(LabError::InvalidParameter(format!("p = {} outside [0, 1)", self.p)));
        }
        if self.b1 <= 0.0 || self.b_prime < 0.0 {
            return Err(LabError::InvalidParameter("need b1 > 0 and b' >= 0".into()));
        }
        if self.b1 <= self.b_prime {
            return Err(LabError::InvalidParameter(format!(
                "b1 = {} must exceed b' = {}",
                self.b1, self.b_prime
            )));
        }
        if !(self.delta > 0.0 && self.delta < self.b1 - self.b_prime) {
            return Err(LabError::InvalidParameter(format!(
                "δ = {} violates δ ∈ (0, b_1 - b') = (0, {})",
                self.delta,
                self.b1 - self.b_prime
            )));
        }
        Ok(())
    }
}

/// Smallest `g > 0` with `g = 2^{1-p} b1 (2a + g)^p`: the tight gap above endpoint `a > 0`.
fn tight_gap_above(a: f64, b1: f64, p: f64) -> Result<f64> {
    let coef = 2f64.powf(1.0 - p) * b1;
    if p == 0.0 {
        return Ok(coef);
    }
    if a <= 0.0 {
        return Err(LabError::InvalidParameter(format!(
            "tight gap above nonpositive endpoint {a} is not defined for p > 0"
        )));
    }
    let f = |g: f64| g - coef * (2.0 * a + g).powf(p);
    let mut hi = coef.max(1.0);
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    Ok(bisect(f, 0.0, hi))
}

/// `α` below the endpoint `o > 0` making the gap `(α, o)` tight.
fn tight_gap_below(o: f64, b1: f64, p: f64) -> Result<f64> {
    let coef = 2f64.powf(1.0 - p) * b1;
    if p == 0.0 {
        return Ok(o - coef);
    }
    if o <= 0.0 {
        return Err(LabError::InvalidParameter(format!(
            "tight gap below nonpositive endpoint {o} is not defined for p > 0"
        )));
    }
    // On (0, 2o) the residual is increasing, negative at 0 and positive at 2o.
    let f = |g: f64| g - coef * (2.0 * o - g).abs().powf(p);
    Ok(o - bisect(f, 0.0, 2.0 * o))
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Band layout whose gaps satisfy the gap condition with equality.
///
/// One-sided layouts start at `α_1 = origin` and are indexed `1..=count`; the
/// two-sided variant mirrors them across zero (bands `1-count..=count`, central
/// gap `Λ_0 = (-origin, origin)`). Outer gaps are closed tightly as well.
pub fn make_power_gap_bands(
    p: f64,
    b1: f64,
    band_length: f64,
    count: usize,
    origin: f64,
    two_sided: bool,
) -> Result<BandSpec> {
    if !(0.0..1.0).contains(&p) {
        return Err(LabError::InvalidParameter(format!("p = {p} outside [0, 1)")));
    }
    if !(b1 > 0.0) || !(band_length > 0.0) {
        return Err(LabError::InvalidParameter(
            "b1 and band_length must be positive".into(),
        ));
    }
    if count == 0 {
        return Err(LabError::InvalidParameter("count must be at least 1".into()));
    }
    if !(origin > 0.0) {
        return Err(LabError::InvalidParameter("origin must be positive".into()));
    }
    if two_sided && 2.0 * origin < required_gap(-origin, origin, b1, p) {
        return Err(LabError::InvalidParameter(format!(
            "central gap (-{origin}, {origin}) is narrower than 2^(1-p) b1 |0|^p"
        )));
    }

    let mut positive = Vec::with_capacity(2 * count);
    let mut start = origin;
    for k in 0..count {
        let end = start + band_length;
        positive.push(start);
        positive.push(end);
        if k + 1 < count {
            start = end + tight_gap_above(end, b1, p)?;
        }
    }
    let top = *positive.last().unwrap();
    let tail = top + tight_gap_above(top, b1, p)?;

    let spec = if two_sided {
        let mut alphas: Vec<f64> = positive.iter().rev().map(|a| -a).collect();
        alphas.extend_from_slice(&positive);
        BandSpec {
            alphas,
            first_band: 1 - count as i64,
            two_sided: true,
            lead_alpha: Some(-tail),
            tail_alpha: Some(tail),
            separation_n0: None,
        }
    } else {
        BandSpec {
            alphas: positive,
            first_band: 1,
            two_sided: false,
            lead_alpha: Some(tight_gap_below(origin, b1, p)?),
            tail_alpha: Some(tail),
            separation_n0: None,
        }
    };
    spec.validate()?;
    let n0 = midpoint_separation_index(&spec, b1, p);
    Ok(BandSpec {
        separation_n0: n0,
        ..spec
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapMargin {
    pub gap: i64,
    pub margin: f64,
}

/// `margin_k = (α_{2k+1} - α_{2k}) - 2^{1-p} b1 |α_{2k+1} + α_{2k}|^p` for every known gap.
pub fn check_gap_condition(bands: &BandSpec, b1: f64, p: f64) -> Vec<GapMargin> {
    bands
        .gaps()
        .iter()
        .map(|g| GapMargin {
            gap: g.index,
            margin: (g.hi - g.lo) - required_gap(g.lo, g.hi, b1, p),
        })
        .collect()
}

pub fn gap_condition_holds(margins: &[GapMargin], tolerance: f64) -> bool {
    margins.iter().all(|m| m.margin >= -tolerance)
}

/// First positive-side gap index `n0` with `r_{n+1}^{1-p} - r_n^{1-p} > b1 (1-p)` for all `n >= n0`.
pub fn midpoint_separation_index(bands: &BandSpec, b1: f64, p: f64) -> Option<i64> {
    let mids: Vec<(i64, f64)> = bands
        .gaps()
        .iter()
        .filter(|g| g.midpoint() > 0.0)
        .map(|g| (g.index, g.midpoint()))
        .collect();
    if mids.len() < 2 {
        return None;
    }
    let c = b1 * (1.0 - p);
    let mut n0 = None;
    for w in mids.windows(2).rev() {
        if w[1].1.powf(1.0 - p) - w[0].1.powf(1.0 - p) > c {
            n0 = Some(w[0].0);
        } else {
            break;
        }
    }
    n0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_zero_layout_has_constant_gaps() {
        let spec = make_power_gap_bands(0.0, 1.0, 1.0, 3, 1.0, false).unwrap();
        assert_eq!(spec.alphas, vec![1.0, 2.0, 4.0, 5.0, 7.0, 8.0]);
        for g in spec.gaps() {
            assert_eq!(g.hi - g.lo, 2.0);
        }
    }

    #[test]
    fn half_power_layout_is_tight() {
        let spec = make_power_gap_bands(0.5, 1.0, 1.0, 5, 1.0, false).unwrap();
        for g in spec.gaps() {
            let lhs = g.hi - g.lo;
            let rhs = 2f64.sqrt() * (g.hi + g.lo).abs().sqrt();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs, "gap {}: {lhs} vs {rhs}", g.index);
        }
        // second band starts after the gap of length 4 above [1,2]
        assert!((spec.alphas[2] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn two_sided_layout_is_mirrored_and_valid() {
        let spec = make_power_gap_bands(0.5, 1.0, 1.0, 2, 1.0, true).unwrap();
        assert_eq!(spec.band_count(), 4);
        let central = spec.gap(0).unwrap();
        assert!(central.lo <= 0.0 && central.hi > 0.0);
        assert_eq!(central.midpoint(), 0.0);
        let margins = check_gap_condition(&spec, 1.0, 0.5);
        assert!(gap_condition_holds(&margins, 1e-12 * spec.scale()));
        for (a, b) in spec.alphas.iter().zip(spec.alphas.iter().rev()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn two_sided_p_zero_needs_wide_centre() {
        assert!(make_power_gap_bands(0.0, 1.0, 1.0, 2, 0.5, true).is_err());
        assert!(make_power_gap_bands(0.0, 1.0, 1.0, 2, 1.0, true).is_ok());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_power_gap_bands(1.0, 1.0, 1.0, 3, 1.0, false).is_err());
        assert!(make_power_gap_bands(-0.1, 1.0, 1.0, 3, 1.0, false).is_err());
        assert!(make_power_gap_bands(0.5, 0.0, 1.0, 3, 1.0, false).is_err());
        assert!(make_power_gap_bands(0.5, 1.0, -1.0, 3, 1.0, false).is_err());
    }

    #[test]
    fn gap_margins_for_hand_layouts() {
        let ok = BandSpec::from_bands(&[(1.0, 2.0), (4.0, 5.0)]).unwrap();
        let m = check_gap_condition(&ok, 1.0, 0.0);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].margin, 0.0);

        let narrow = BandSpec::from_bands(&[(1.0, 2.0), (3.5, 4.5)]).unwrap();
        let m = check_gap_condition(&narrow, 1.0, 0.0);
        assert_eq!(m[0].margin, -0.5);
        assert!(!gap_condition_holds(&m, 0.0));

        for g in [1.0, 5.0, 10.0, 20.0] {
            let spec = BandSpec::from_bands(&[(1.0, 2.0), (4.0, 16.0), (16.0 + g, 17.0 + g)]).unwrap();
            let m = check_gap_condition(&spec, 1.0, 0.5);
            let expected = g - 2f64.sqrt() * (32.0 + g).sqrt();
            assert!((m[1].margin - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn midpoint_separation_holds_beyond_n0() {
        for &p in &[0.0, 0.25, 0.5, 0.75] {
            let spec = make_power_gap_bands(p, 1.0, 1.0, 12, 1.0, false).unwrap();
            let n0 = spec.separation_n0.expect("n0 recorded");
            let c = 1.0 - p;
            let mids: Vec<(i64, f64)> = spec
                .gaps()
                .iter()
                .filter(|g| g.index >= n0 && g.midpoint() > 0.0)
                .map(|g| (g.index, g.midpoint()))
                .collect();
            for w in mids.windows(2) {
                assert!(w[1].1.powf(1.0 - p) - w[0].1.powf(1.0 - p) > c);
            }
            // pairwise form |r_j - r_n| >= c max(r_j^p, r_n^p) |j - n|
            for &(j, rj) in &mids {
                for &(n, rn) in &mids {
                    let lhs = (rj - rn).abs();
                    let rhs = c * rj.powf(p).max(rn.powf(p)) * (j - n).abs() as f64;
                    assert!(lhs >= rhs - 1e-12 * rj.max(rn), "p={p} j={j} n={n}");
                }
            }
        }
    }

    #[test]
    fn json_document_round_trip() {
        let spec = make_power_gap_bands(0.5, 1.0, 1.0, 3, 1.0, false).unwrap();
        let text = spec.to_json().unwrap();
        assert!(text.contains("\"schema\": \"bandspec.v1\""));
        assert_eq!(BandSpec::from_json(&text).unwrap(), spec);
    }

    #[test]
    fn gap_params_guard_delta() {
        let ok = GapParams { p: 0.5, b1: 1.0, b_prime: 0.4, delta: 0.3 };
        assert!(ok.validate().is_ok());
        let bad = GapParams { delta: 0.6, ..ok };
        assert!(bad.validate().unwrap_err().to_string().contains("δ ∈ (0, b_1 - b')"));
    }
}
