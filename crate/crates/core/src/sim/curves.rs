//! Ground-truth dose-response curve families.
//!
//! Curves are built in logit space as a top level minus cumulative
//! nonnegative drops, so monotonicity holds by construction. The drop profile
//! across dose gaps is what distinguishes the families:
//! - `Sigmoid`: drops follow a logistic-density bump around a midpoint.
//! - `Step`: the whole drop lands on one gap.
//! - `Shoulder`: flat until an onset gap, then evenly spread.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::stats::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFamily {
    Sigmoid,
    Step,
    Shoulder,
    Mixed,
}

/// Per-drug curve tendencies; experiments jitter around them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrugProfile {
    pub family: CurveFamily,
    pub midpoint: f64,
    pub log_total_drop: f64,
    pub width: f64,
}

pub fn draw_drug_profile(rng: &mut ChaCha8Rng, family: CurveFamily, n_doses: usize) -> DrugProfile {
    let resolved = match family {
        CurveFamily::Mixed => match rng.gen_range(0..3u8) {
            0 => CurveFamily::Sigmoid,
            1 => CurveFamily::Step,
            _ => CurveFamily::Shoulder,
        },
        f => f,
    };
    let d = n_doses as f64;
    DrugProfile {
        family: resolved,
        midpoint: rng.gen_range(1.2..(d - 1.2).max(1.3)),
        log_total_drop: 5.0f64.ln() + 0.35 * standard_normal(rng),
        width: rng.gen_range(0.7..1.5),
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

/// Drop-weight profile over the D-1 dose gaps; nonnegative, sums to one.
fn gap_weights(profile: &DrugProfile, midpoint: f64, n_doses: usize) -> Vec<f64> {
    let gaps = n_doses - 1;
    let mut w = vec![0.0; gaps];
    match profile.family {
        CurveFamily::Sigmoid | CurveFamily::Mixed => {
            for (k, wk) in w.iter_mut().enumerate() {
                let z = (k as f64 + 1.0 - midpoint) / profile.width;
                let s = sigmoid(z);
                *wk = s * (1.0 - s);
            }
        }
        CurveFamily::Step => {
            let k = (midpoint.round() as usize).clamp(1, gaps) - 1;
            w[k] = 1.0;
        }
        CurveFamily::Shoulder => {
            let onset = (midpoint.round() as usize).clamp(1, gaps) - 1;
            for wk in w.iter_mut().skip(onset) {
                *wk = 1.0;
            }
        }
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        let n = w.len() as f64;
        for wk in &mut w {
            *wk = 1.0 / n;
        }
    } else {
        for wk in &mut w {
            *wk /= total;
        }
    }
    w
}

/// One experiment's survival curve in [0,1]^D, nonincreasing in dose.
/// `line_shift` moves the whole curve down in logit space (sensitivity).
pub fn draw_curve(
    rng: &mut ChaCha8Rng,
    profile: &DrugProfile,
    line_shift: f64,
    n_doses: usize,
) -> Vec<f64> {
    let top = 2.5 + 0.3 * standard_normal(rng);
    let total_drop = (profile.log_total_drop + 0.25 * standard_normal(rng)).exp();
    let midpoint = (profile.midpoint + 0.4 * standard_normal(rng))
        .clamp(1.0, (n_doses - 1) as f64);
    let w = gap_weights(profile, midpoint, n_doses);
    let mut beta = Vec::with_capacity(n_doses);
    let mut b = top - line_shift;
    beta.push(b);
    for wk in &w {
        b -= total_drop * wk;
        beta.push(b);
    }
    beta.into_iter().map(sigmoid).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn curves_are_monotone_for_every_family() {
        for (fi, fam) in [
            CurveFamily::Sigmoid,
            CurveFamily::Step,
            CurveFamily::Shoulder,
            CurveFamily::Mixed,
        ]
        .iter()
        .enumerate()
        {
            for k in 0..200u64 {
                let mut rng = stream(42, "curves.test", &[fi as u64, k]);
                let profile = draw_drug_profile(&mut rng, *fam, 9);
                let tau = draw_curve(&mut rng, &profile, 0.0, 9);
                assert_eq!(tau.len(), 9);
                for t in 0..8 {
                    assert!(
                        tau[t] >= tau[t + 1],
                        "{fam:?} curve not monotone: {tau:?}"
                    );
                }
                assert!(tau.iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }
    }

    #[test]
    fn line_shift_moves_curve_down() {
        let mut rng_a = stream(1, "curves.shift", &[0]);
        let mut rng_b = stream(1, "curves.shift", &[0]);
        let profile = DrugProfile {
            family: CurveFamily::Sigmoid,
            midpoint: 4.0,
            log_total_drop: 5.0f64.ln(),
            width: 1.0,
        };
        let base = draw_curve(&mut rng_a, &profile, 0.0, 9);
        let shifted = draw_curve(&mut rng_b, &profile, 2.0, 9);
        for t in 0..9 {
            assert!(shifted[t] < base[t]);
        }
    }

    #[test]
    fn step_concentrates_the_drop() {
        let profile = DrugProfile {
            family: CurveFamily::Step,
            midpoint: 4.0,
            log_total_drop: 6.0f64.ln(),
            width: 1.0,
        };
        let w = gap_weights(&profile, 4.0, 9);
        assert_eq!(w.iter().filter(|&&x| x > 0.0).count(), 1);
    }
}
