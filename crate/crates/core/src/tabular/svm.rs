//! One-vs-one soft-margin RBF SVM trained with SMO (second-order working
//! set selection on a precomputed kernel matrix).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, LabeledDataset, Result, TabularError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    /// `None` resolves to `1 / d` for the dimension the SVM is trained on.
    pub gamma: Option<f64>,
    /// KKT violation tolerance for the dual solver.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 250.0,
            gamma: None,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// Binary machine between `neg_class` (label −1) and `pos_class` (label +1),
/// `neg_class < pos_class`. Decision value `f(x) = Σ coef_i K(sv_i, x) − rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub neg_class: usize,
    pub pos_class: usize,
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i y_i` per support vector.
    pub coef: Vec<f64>,
    /// Row of each support vector in the training dataset.
    pub support_indices: Vec<usize>,
    pub rho: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub machines: Vec<BinaryMachine>,
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    pub n_features: usize,
    pub n_classes: usize,
}

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl BinaryMachine {
    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * rbf_kernel(sv, x, gamma))
            .sum::<f64>()
            - self.rho
    }

    /// Absolute dual coefficient of support vector `i`.
    pub fn alpha(&self, i: usize) -> f64 {
        self.coef[i].abs()
    }
}

const TAU: f64 = 1e-12;

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
}

/// Solve `min ½αᵀQα − eᵀα` s.t. `yᵀα = 0`, `0 ≤ α ≤ C`, `Q_ij = y_i y_j K_ij`.
fn smo(k: &[Vec<f64>], y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<Solution> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yt: f64| if yt > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, yt: f64| if yt > 0.0 { a > 0.0 } else { a < c };
    let mut iter = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i != usize::MAX {
            for t in 0..n {
                if !low(alpha[t], y[t]) {
                    continue;
                }
                let ytg = y[t] * grad[t];
                gmax2 = gmax2.max(ytg);
                let b = gmax + ytg;
                if b > 0.0 {
                    let mut a = k[i][i] + k[t][t] - 2.0 * k[i][t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    if -(b * b) / a < obj_min {
                        obj_min = -(b * b) / a;
                        j = t;
                    }
                }
            }
        }
        if gmax + gmax2 < tol || j == usize::MAX {
            break;
        }
        if iter >= max_iter {
            return Err(TabularError::NonConvergence {
                iterations: iter,
                gap: gmax + gmax2,
            });
        }
        iter += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = k[i][i] + k[j][j] - 2.0 * k[i][j];
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[t][i] * di + y[j] * k[t][j] * dj);
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(Solution {
        alpha,
        rho,
        iterations: iter,
    })
}

fn train_machine(
    ds: &LabeledDataset,
    neg: usize,
    pos: usize,
    gamma: f64,
    cfg: &SvmConfig,
) -> Result<BinaryMachine> {
    let rows: Vec<usize> = (0..ds.n_samples())
        .filter(|&i| ds.labels[i] == neg || ds.labels[i] == pos)
        .collect();
    let x: Vec<Vec<f64>> = rows.iter().map(|&i| ds.row(i).to_vec()).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|&i| if ds.labels[i] == pos { 1.0 } else { -1.0 })
        .collect();
    let k: Vec<Vec<f64>> = x
        .iter()
        .map(|a| x.iter().map(|b| rbf_kernel(a, b, gamma)).collect())
        .collect();
    let sol = smo(&k, &y, cfg.c, cfg.tol, cfg.max_iter)?;
    let mut m = BinaryMachine {
        neg_class: neg,
        pos_class: pos,
        support_vectors: Vec::new(),
        coef: Vec::new(),
        support_indices: Vec::new(),
        rho: sol.rho,
        iterations: sol.iterations,
    };
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            m.support_vectors.push(x[t].clone());
            m.coef.push(a * y[t]);
            m.support_indices.push(rows[t]);
        }
    }
    Ok(m)
}

/// One machine per unordered class pair, in `(0,1), (0,2), …` order.
pub fn train_svm(ds: &LabeledDataset, cfg: &SvmConfig) -> Result<SvmModel> {
    ds.require_two_classes()?;
    if let Some(k) = ds.class_counts().iter().position(|&c| c == 0) {
        return Err(TabularError::EmptyClass(ds.class_names[k].clone()));
    }
    if !(cfg.c > 0.0) || !(cfg.tol > 0.0) {
        return Err(TabularError::InvalidConfig(
            "c and tol must be positive".into(),
        ));
    }
    let d = ds.n_features();
    let gamma = cfg.gamma.unwrap_or(1.0 / d as f64);
    if !(gamma > 0.0) {
        return Err(TabularError::InvalidConfig(format!(
            "gamma {gamma} must be positive"
        )));
    }
    let k = ds.n_classes();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
        .collect();
    let machines = pairs
        .par_iter()
        .map(|&(a, b)| train_machine(ds, a, b, gamma, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmModel {
        machines,
        c: cfg.c,
        gamma,
        tol: cfg.tol,
        n_features: d,
        n_classes: k,
    })
}

/// Plurality vote. Ties go to the class with the larger summed `|f|` over
/// the machines that voted for it, then to the lower id.
pub fn vote(votes: &[usize], margins: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..votes.len() {
        if votes[k] > votes[best] || (votes[k] == votes[best] && margins[k] > margins[best]) {
            best = k;
        }
    }
    best
}

impl SvmModel {
    /// Per-class vote counts and summed decision magnitudes.
    pub fn votes(&self, x: &[f64]) -> (Vec<usize>, Vec<f64>) {
        let mut votes = vec![0; self.n_classes];
        let mut margins = vec![0.0; self.n_classes];
        for m in &self.machines {
            let f = m.decision(x, self.gamma);
            let winner = if f > 0.0 { m.pos_class } else { m.neg_class };
            votes[winner] += 1;
            margins[winner] += f.abs();
        }
        (votes, margins)
    }
}

impl Classifier for SvmModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_row(&self, x: &[f64]) -> usize {
        let (v, m) = self.votes(x);
        vote(&v, &m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, stream};

    fn xor() -> LabeledDataset {
        let rows = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        LabeledDataset::from_rows(&rows, vec![0, 0, 1, 1], 2).unwrap()
    }

    #[test]
    fn defaults() {
        let cfg = SvmConfig::default();
        assert_eq!(cfg.c, 250.0);
        assert_eq!(cfg.gamma, None);
        let m = train_svm(&xor(), &cfg).unwrap();
        assert_eq!(m.gamma, 0.5);
    }

    #[test]
    fn xor_is_separated() {
        let ds = xor();
        let m = train_svm(&ds, &SvmConfig::default()).unwrap();
        for i in 0..4 {
            assert_eq!(
                m.predict(ds.row(i).as_slice().unwrap()).unwrap(),
                ds.labels[i]
            );
        }
        // the decision surface is symmetric: on the grid, the sign follows
        // which diagonal the point is nearer to
        let mach = &m.machines[0];
        for a in 0..=10 {
            for b in 0..=10 {
                let (x, y) = (a as f64 / 10.0, b as f64 / 10.0);
                let same = (x - 0.5) * (y - 0.5);
                if same.abs() < 1e-9 {
                    continue;
                }
                let f = mach.decision(&[x, y], m.gamma);
                assert_eq!(f > 0.0, same < 0.0, "({x}, {y}) f={f}");
            }
        }
    }

    #[test]
    fn five_classes_give_ten_machines() {
        let mut rng = stream(8, 0);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                vec![
                    (i % 5) as f64 * 3.0 + 0.3 * normal(&mut rng),
                    normal(&mut rng),
                ]
            })
            .collect();
        let labels = (0..50).map(|i| i % 5).collect();
        let ds = LabeledDataset::from_rows(&rows, labels, 5).unwrap();
        let m = train_svm(&ds, &SvmConfig::default()).unwrap();
        assert_eq!(m.machines.len(), 10);
        let pairs: Vec<_> = m
            .machines
            .iter()
            .map(|x| (x.neg_class, x.pos_class))
            .collect();
        assert_eq!(pairs[0], (0, 1));
        assert_eq!(pairs[9], (3, 4));
    }

    #[test]
    fn free_support_vectors_sit_on_the_margin() {
        let mut rng = stream(21, 0);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|i| {
                let c = if i % 2 == 0 { -1.0 } else { 1.0 };
                vec![c + normal(&mut rng), 0.5 * c + normal(&mut rng)]
            })
            .collect();
        let labels = (0..80).map(|i| i % 2).collect();
        let ds = LabeledDataset::from_rows(&rows, labels, 2).unwrap();
        let cfg = SvmConfig {
            c: 1.0,
            ..Default::default()
        };
        let m = train_svm(&ds, &cfg).unwrap();
        let mach = &m.machines[0];
        let mut n_free = 0;
        for (s, sv) in mach.support_vectors.iter().enumerate() {
            let a = mach.alpha(s);
            if a > 1e-8 && a < cfg.c - 1e-8 {
                n_free += 1;
                let y = mach.coef[s].signum();
                let f = mach.decision(sv, m.gamma);
                assert!((f - y).abs() < 1e-2, "f={f} y={y}");
            }
        }
        assert!(n_free > 0);
        // dual feasibility
        assert!(mach.coef.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn vote_plurality_and_ties() {
        assert_eq!(vote(&[4, 3, 1, 1, 1], &[0.0; 5]), 0);
        assert_eq!(vote(&[2, 2, 1], &[1.0, 3.0, 9.0]), 1);
        assert_eq!(vote(&[2, 2, 1], &[3.0, 3.0, 9.0]), 0);
    }

    #[test]
    fn empty_and_single_class() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let ds = LabeledDataset::from_rows(&rows, vec![0, 0, 0], 2).unwrap();
        assert!(matches!(
            train_svm(&ds, &SvmConfig::default()),
            Err(TabularError::SingleClassDataset)
        ));
        let ds = LabeledDataset::from_rows(&rows, vec![0, 2, 0], 3).unwrap();
        assert!(matches!(
            train_svm(&ds, &SvmConfig::default()),
            Err(TabularError::EmptyClass(_))
        ));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut rng = stream(4, 0);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![normal(&mut rng)]).collect();
        let labels = (0..40).map(|i| i % 2).collect();
        let ds = LabeledDataset::from_rows(&rows, labels, 2).unwrap();
        let cfg = SvmConfig {
            max_iter: 1,
            ..Default::default()
        };
        assert!(matches!(
            train_svm(&ds, &cfg),
            Err(TabularError::NonConvergence { .. })
        ));
    }
}
