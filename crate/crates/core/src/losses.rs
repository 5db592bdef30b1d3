//! Reference evaluations of the translation-network objective: the density
//! multiplier, density-weighted cycle and extended-cycle losses, the
//! hallucination penalty, a least-squares adversarial term and the weighted
//! quadrant/centre composition.
//!
//! All sums run over every voxel in `f64`. Batched variants take the mean of
//! the per-sample values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume3D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Foreground threshold applied inside the density multiplier.
    pub fg_threshold: f32,
    /// Hallucination weight on the old-domain term.
    pub lambda_o: f64,
    /// Hallucination weight on the young-domain term.
    pub lambda_y: f64,
    /// Cycle weight (old domain).
    #[serde(alias = "Lambda_O")]
    pub cycle_weight_o: f64,
    /// Extended-cycle weight (young domain).
    #[serde(alias = "Lambda_Y")]
    pub cycle_weight_y: f64,
    /// Weight of each of the four quadrant losses.
    pub w1: f64,
    /// Weight of the centre loss.
    pub w2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            fg_threshold: 0.1,
            lambda_o: 10.0,
            lambda_y: 10.0,
            cycle_weight_o: 10.0,
            cycle_weight_y: 10.0,
            w1: 0.25,
            w2: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.lambda_o,
            self.lambda_y,
            self.cycle_weight_o,
            self.cycle_weight_y,
            self.w1,
            self.w2,
        ];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

fn pair<'a>(a: &'a Volume3D, b: &'a Volume3D) -> Result<(&'a [f32], &'a [f32])> {
    a.same_dims(b)?;
    Ok((a.data(), b.data()))
}

/// Number of voxels that are background in both volumes.
pub fn shared_background(a: &Volume3D, a_rec: &Volume3D, threshold: f32) -> Result<usize> {
    let (x, y) = pair(a, a_rec)?;
    Ok(x.iter().zip(y).filter(|(p, q)| **p <= threshold && **q <= threshold).count())
}

/// `1 / max(1, total - shared_background)`. Symmetric, in `(0, 1]`.
pub fn density_multiplier(a: &Volume3D, a_rec: &Volume3D, cfg: &LossConfig) -> Result<f64> {
    let shared = shared_background(a, a_rec, cfg.fg_threshold)?;
    let active = a.len() - shared;
    Ok(1.0 / active.max(1) as f64)
}

fn l1(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (*p as f64 - *q as f64).abs()).sum()
}

/// Density-weighted L1 between a sample and its reconstruction.
pub fn cycle_loss(a: &Volume3D, a_rec: &Volume3D, cfg: &LossConfig) -> Result<f64> {
    let (x, y) = pair(a, a_rec)?;
    Ok(density_multiplier(a, a_rec, cfg)? * l1(y, x))
}

/// Density-weighted L1 between `G(y)` and `G(F(G(y)))`.
pub fn extended_cycle_loss(v_gy: &Volume3D, v_gprime_y: &Volume3D, cfg: &LossConfig) -> Result<f64> {
    let (x, y) = pair(v_gy, v_gprime_y)?;
    Ok(density_multiplier(v_gy, v_gprime_y, cfg)? * l1(y, x))
}

/// Sum of `min(max(over - under, 0), 1)`.
fn excess(over: &[f32], under: &[f32]) -> f64 {
    over.iter()
        .zip(under)
        .map(|(o, u)| (*o as f64 - *u as f64).clamp(0.0, 1.0))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HallucinationTerms {
    /// Old structure missing from the young reconstruction `F(O)`.
    pub old_term: f64,
    /// Predicted old structure `G(Y)` absent from the young input.
    pub young_term: f64,
}

impl HallucinationTerms {
    pub fn total(&self) -> f64 {
        self.old_term + self.young_term
    }
}

/// Both hallucination terms. The old-domain multiplier is taken between
/// `F(O)` and `O`, the pair its difference term is computed on.
pub fn hallucination_terms(
    v_o: &Volume3D,
    v_fo: &Volume3D,
    v_y: &Volume3D,
    v_gy: &Volume3D,
    cfg: &LossConfig,
) -> Result<HallucinationTerms> {
    let (o, fo) = pair(v_o, v_fo)?;
    let (y, gy) = pair(v_y, v_gy)?;
    let young_term = cfg.lambda_y * density_multiplier(v_gy, v_y, cfg)? * excess(gy, y);
    let old_term = cfg.lambda_o * density_multiplier(v_fo, v_o, cfg)? * excess(o, fo);
    Ok(HallucinationTerms { old_term, young_term })
}

pub fn hallucination_loss(
    v_o: &Volume3D,
    v_fo: &Volume3D,
    v_y: &Volume3D,
    v_gy: &Volume3D,
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(hallucination_terms(v_o, v_fo, v_y, v_gy, cfg)?.total())
}

/// Least-squares adversarial losses `(discriminator, generator)`.
pub fn adversarial_loss(scores_real: &[f64], scores_fake: &[f64]) -> Result<(f64, f64)> {
    if scores_real.is_empty() || scores_fake.is_empty() {
        return Err(Error::Empty("adversarial scores"));
    }
    let mean = |xs: &[f64], f: &dyn Fn(f64) -> f64| xs.iter().map(|&x| f(x)).sum::<f64>() / xs.len() as f64;
    let loss_d = mean(scores_real, &|s| (s - 1.0).powi(2)) + mean(scores_fake, &|s| s * s);
    let loss_g = mean(scores_fake, &|s| (s - 1.0).powi(2));
    Ok((loss_d, loss_g))
}

/// Mean of `f` over a batch of pairs.
pub fn batch_mean<F>(pairs: &[(&Volume3D, &Volume3D)], cfg: &LossConfig, f: F) -> Result<f64>
where
    F: Fn(&Volume3D, &Volume3D, &LossConfig) -> Result<f64>,
{
    if pairs.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let mut sum = 0.0;
    for (a, b) in pairs {
        sum += f(a, b, cfg)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Per-tile loss parts and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileLossBreakdown {
    pub gan_o: f64,
    pub gan_y: f64,
    pub cyc_o: f64,
    pub xcyc_y: f64,
    pub hallucination: f64,
    pub total: f64,
}

impl TileLossBreakdown {
    /// `gan_o + gan_y + cycle_weight_o * cyc_o + hallucination + cycle_weight_y * xcyc_y`.
    pub fn compose(gan_o: f64, gan_y: f64, cyc_o: f64, xcyc_y: f64, hallucination: f64, cfg: &LossConfig) -> Self {
        let total = gan_o + gan_y + cfg.cycle_weight_o * cyc_o + hallucination + cfg.cycle_weight_y * xcyc_y;
        TileLossBreakdown {
            gan_o,
            gan_y,
            cyc_o,
            xcyc_y,
            hallucination,
            total,
        }
    }

    /// Recomputes `total` from the parts under `cfg`.
    pub fn recomposed(&self, cfg: &LossConfig) -> Self {
        Self::compose(self.gan_o, self.gan_y, self.cyc_o, self.xcyc_y, self.hallucination, cfg)
    }
}

/// Losses of the four quadrants and the centre of one input tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileLosses {
    pub top_left: TileLossBreakdown,
    pub top_right: TileLossBreakdown,
    pub bottom_left: TileLossBreakdown,
    pub bottom_right: TileLossBreakdown,
    pub center: TileLossBreakdown,
}

/// `w1 * (tl + tr + bl + br) + w2 * center`, each tile total recomposed from
/// its parts.
pub fn tile_objective(parts: &TileLosses, cfg: &LossConfig) -> f64 {
    let t = |b: &TileLossBreakdown| b.recomposed(cfg).total;
    cfg.w1 * (t(&parts.top_left) + t(&parts.top_right) + t(&parts.bottom_left) + t(&parts.bottom_right))
        + cfg.w2 * t(&parts.center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Kind, Provenance};

    fn vol(data: &[f32]) -> Volume3D {
        Volume3D::new([data.len(), 1, 1], [1.0; 3], data.to_vec(), Kind::Normalized, Provenance::Real).unwrap()
    }

    #[test]
    fn multiplier_examples() {
        let cfg = LossConfig::default();
        let ones = vol(&[1.0; 8]);
        assert_eq!(density_multiplier(&ones, &ones, &cfg).unwrap(), 1.0 / 8.0);

        let mut a = [0.0; 8];
        let mut b = [0.0; 8];
        a[0] = 0.9;
        a[1] = 0.9;
        b[0] = 0.9;
        b[2] = 0.9;
        assert_eq!(density_multiplier(&vol(&a), &vol(&b), &cfg).unwrap(), 1.0 / 3.0);

        let zeros = vol(&[0.0; 8]);
        assert_eq!(density_multiplier(&zeros, &zeros, &cfg).unwrap(), 1.0);
        assert_eq!(cycle_loss(&zeros, &zeros, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn cycle_example() {
        let cfg = LossConfig::default();
        let l = cycle_loss(&vol(&[0.8, 0.0]), &vol(&[0.6, 0.0]), &cfg).unwrap();
        assert!((l - 0.2).abs() < 1e-6);
        let a = vol(&[0.3, 0.7, 0.0]);
        assert_eq!(cycle_loss(&a, &a, &cfg).unwrap(), 0.0);
        assert!(cycle_loss(&a, &vol(&[0.0]), &cfg).is_err());
    }

    #[test]
    fn hallucination_example() {
        let cfg = LossConfig::default();
        let zero = vol(&[0.0, 0.0]);
        let l = hallucination_loss(&zero, &zero, &vol(&[0.8, 0.0]), &vol(&[0.9, 0.6]), &cfg).unwrap();
        assert!((l - 3.5).abs() < 1e-6, "{l}");
    }

    #[test]
    fn extended_cycle_scales_linearly() {
        let cfg = LossConfig::default();
        let gy = vol(&[0.5, 0.5, 0.0]);
        let once = extended_cycle_loss(&gy, &vol(&[0.6, 0.4, 0.0]), &cfg).unwrap();
        let twice = extended_cycle_loss(&gy, &vol(&[0.7, 0.3, 0.0]), &cfg).unwrap();
        assert!((twice - 2.0 * once).abs() < 1e-6);
        assert_eq!(extended_cycle_loss(&gy, &gy, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn adversarial_examples() {
        assert_eq!(adversarial_loss(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), (0.0, 1.0));
        assert_eq!(adversarial_loss(&[0.5], &[1.0]).unwrap().1, 0.0);
        assert!(adversarial_loss(&[], &[1.0]).is_err());
    }

    #[test]
    fn objective_examples() {
        let cfg = LossConfig::default();
        let one = TileLossBreakdown::compose(1.0, 0.0, 0.0, 0.0, 0.0, &cfg);
        let zero = TileLossBreakdown::compose(0.0, 0.0, 0.0, 0.0, 0.0, &cfg);
        let all = TileLosses {
            top_left: one,
            top_right: one,
            bottom_left: one,
            bottom_right: one,
            center: one,
        };
        assert!((tile_objective(&all, &cfg) - 1.5).abs() < 1e-12);
        let center = TileLossBreakdown::compose(0.0, 0.0, 0.3, 0.0, 0.0, &cfg);
        let only = TileLosses {
            top_left: zero,
            top_right: zero,
            bottom_left: zero,
            bottom_right: zero,
            center,
        };
        assert!((tile_objective(&only, &cfg) - 0.5 * 3.0).abs() < 1e-12);
    }
}
