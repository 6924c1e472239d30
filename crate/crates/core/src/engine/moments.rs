use serde::{Deserialize, Serialize};

use crate::error::{HerdingError, Result};

use super::features::{dot, FeatureMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    DataAverage,
    Analytic,
    OracleEstimate,
}

/// Target moments `phi_bar` that the herding dynamics must reproduce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    values: Vec<f64>,
    provenance: Provenance,
}

impl MomentVector {
    /// Validates the dimension against `fmap` and, for enumerable spaces
    /// with non-oracle provenance, that the moments are attainable (inside
    /// the convex hull of the feature vectors).
    pub fn new<F: FeatureMap + ?Sized>(values: Vec<f64>, provenance: Provenance, fmap: &F) -> Result<Self> {
        if values.len() != fmap.dim() {
            return Err(HerdingError::DimensionMismatch { expected: fmap.dim(), got: values.len() });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(HerdingError::InvalidConfig("non-finite moment".into()));
        }
        if provenance != Provenance::OracleEstimate && fmap.space().is_enumerable() {
            if let HullCheck::Outside { separation } = hull_check(fmap, &values)? {
                return Err(HerdingError::MomentsOutsideHull { separation });
            }
        }
        Ok(MomentVector { values, provenance })
    }

    /// Skips the hull check. Use for moments that are averages of feature
    /// vectors by construction.
    pub fn from_values(values: Vec<f64>, provenance: Provenance) -> Self {
        MomentVector { values, provenance }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Herding weights. Entries are kept finite; the engine errors out the
/// moment one is not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(k: usize) -> Self {
        WeightVector(vec![0.0; k])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm_l2(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        WeightVector(self.0.iter().map(|x| x * factor).collect())
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|x| !x.is_finite())
    }
}

impl From<&MomentVector> for WeightVector {
    fn from(m: &MomentVector) -> Self {
        WeightVector(m.values.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HullCheck {
    /// Within `distance` of the hull (below tolerance).
    Inside { distance: f64 },
    /// A hyperplane separates the target from every feature vector by at
    /// least `separation`.
    Outside { separation: f64 },
}

/// Decides whether `target` lies in the convex hull of `{phi(x)}` using
/// away-step Frank-Wolfe on `min ||sum_d lambda_d phi_d - target||^2`.
///
/// Outside points are certified by a separating direction (the residual);
/// inside points by driving the residual below `1e-9 * (1 + max ||phi||)`.
pub fn hull_check<F: FeatureMap + ?Sized>(fmap: &F, target: &[f64]) -> Result<HullCheck> {
    let k = fmap.dim();
    let mut points: Vec<Vec<f64>> = Vec::new();
    fmap.space().for_each_state(|_, s| points.push(fmap.eval(s)))?;
    let scale = points.iter().map(|p| dot(p, p).sqrt()).fold(0.0, f64::max);
    let tol = 1e-9 * (1.0 + scale);
    let sq_dist = |p: &[f64]| p.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();

    let start = (0..points.len())
        .min_by(|&a, &b| sq_dist(&points[a]).total_cmp(&sq_dist(&points[b])))
        .expect("non-empty space");
    let mut lambda = vec![0.0; points.len()];
    lambda[start] = 1.0;
    let mut x = points[start].clone();
    let mut r = vec![0.0; k];
    let mut dir = vec![0.0; k];

    for iter in 0..200_000 {
        if iter % 256 == 255 {
            x.iter_mut().for_each(|v| *v = 0.0);
            for (l, p) in lambda.iter().zip(&points) {
                if *l > 0.0 {
                    x.iter_mut().zip(p).for_each(|(xv, pv)| *xv += l * pv);
                }
            }
        }
        for i in 0..k {
            r[i] = x[i] - target[i];
        }
        let rn = dot(&r, &r).sqrt();
        if rn <= tol {
            return Ok(HullCheck::Inside { distance: rn });
        }
        let r_target = dot(&r, target);
        let (s, s_val) = points
            .iter()
            .enumerate()
            .map(|(d, p)| (d, dot(&r, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        let separation = (s_val - r_target) / rn;
        if separation > 1e-12 * (1.0 + scale) {
            return Ok(HullCheck::Outside { separation });
        }
        let (a, a_val) = lambda
            .iter()
            .enumerate()
            .filter(|(_, l)| **l > 0.0)
            .map(|(d, _)| (d, dot(&r, &points[d])))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("active set is non-empty");
        let r_x = dot(&r, &x);
        let gap_fw = r_x - s_val;
        let gap_away = a_val - r_x;
        let (towards, gamma_max) = if gap_fw >= gap_away {
            for i in 0..k {
                dir[i] = points[s][i] - x[i];
            }
            (true, 1.0)
        } else {
            for i in 0..k {
                dir[i] = x[i] - points[a][i];
            }
            let la = lambda[a];
            (false, if la < 1.0 { la / (1.0 - la) } else { f64::INFINITY })
        };
        let dd = dot(&dir, &dir);
        if dd == 0.0 {
            break;
        }
        let gamma = (-dot(&r, &dir) / dd).clamp(0.0, gamma_max);
        if gamma == 0.0 {
            break;
        }
        if towards {
            lambda.iter_mut().for_each(|l| *l *= 1.0 - gamma);
            lambda[s] += gamma;
        } else {
            lambda.iter_mut().for_each(|l| *l *= 1.0 + gamma);
            lambda[a] -= gamma;
            if gamma == gamma_max {
                lambda[a] = 0.0;
            }
        }
        for i in 0..k {
            x[i] += gamma * dir[i];
        }
    }
    // Stalled without a certificate; report the residual we reached.
    for i in 0..k {
        r[i] = x[i] - target[i];
    }
    let rn = dot(&r, &r).sqrt();
    if rn <= 1e-6 * (1.0 + scale) {
        Ok(HullCheck::Inside { distance: rn })
    } else {
        Ok(HullCheck::Outside { separation: rn })
    }
}
