//! Embedding diagnostics: classical MDS and a skill clustering score.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::{Matrix, SeededRng};

pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 10_000;

/// A 2-D (or `out_dim`-D) picture of a set of question embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProjection {
    /// K × out_dim, centred at the origin.
    pub coordinates: Matrix,
    pub question_ids: Vec<String>,
    pub skill_ids: Vec<Option<String>>,
    /// Frobenius norm of the difference between input and reconstructed
    /// distances.
    pub stress: f64,
    pub eigenvalues: Vec<f64>,
}

impl EmbeddingProjection {
    pub fn len(&self) -> usize {
        self.coordinates.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Attaches labels; both lists must have one entry per point.
    pub fn with_labels(mut self, question_ids: Vec<String>, skill_ids: Vec<Option<String>>) -> Result<Self> {
        if question_ids.len() != self.len() || skill_ids.len() != self.len() {
            return Err(Error::dim(format!(
                "{} points, {} question ids, {} skill ids",
                self.len(),
                question_ids.len(),
                skill_ids.len()
            )));
        }
        self.question_ids = question_ids;
        self.skill_ids = skill_ids;
        Ok(self)
    }

    /// CSV with header `question_id,skill_id,x,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["question_id", "skill_id", "x", "y"])?;
        for i in 0..self.len() {
            let row = self.coordinates.row(i);
            w.write_record([
                self.question_ids.get(i).cloned().unwrap_or_default(),
                self.skill_ids.get(i).cloned().flatten().unwrap_or_default(),
                row.first().copied().unwrap_or(0.0).to_string(),
                row.get(1).copied().unwrap_or(0.0).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Euclidean distances between the rows `ids` of `w`.
pub fn pairwise_distances(w: &Matrix, ids: &[usize]) -> Result<Matrix> {
    if let Some(&bad) = ids.iter().find(|&&i| i >= w.rows()) {
        return Err(Error::dim(format!("row {bad} out of range for {} rows", w.rows())));
    }
    let k = ids.len();
    let mut d = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i + 1..k {
            let dist = w
                .row(ids[i])
                .iter()
                .zip(w.row(ids[j]))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d.set(i, j, dist);
            d.set(j, i, dist);
        }
    }
    Ok(d)
}

/// Largest `k` eigenpairs (by value) of the symmetric matrix `b`, by
/// shifted power iteration with deflation. Vectors are kept orthogonal to
/// every vector in `exclude`.
pub fn top_eigenpairs(b: &Matrix, k: usize, exclude: &[Vec<f64>]) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = b.rows();
    if b.cols() != n {
        return Err(Error::dim(format!("{}x{} matrix is not square", n, b.cols())));
    }
    let shift = negative_shift(b);
    let mut rng = SeededRng::new(0x6d64_735f);
    let mut found: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
    let mut basis: Vec<Vec<f64>> = exclude.to_vec();
    let mut next = vec![0.0; n];
    for _ in 0..k.min(n) {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        if !orthonormalize(&mut v, &basis) {
            found.push((0.0, vec![0.0; n]));
            continue;
        }
        let mut lambda = 0.0;
        for _ in 0..POWER_MAX_ITERATIONS {
            b.matvec_into(&v, &mut next);
            for (x, vi) in next.iter_mut().zip(&v) {
                *x += shift * vi;
            }
            lambda = next.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            if !orthonormalize(&mut next, &basis) {
                break;
            }
            let delta = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            std::mem::swap(&mut v, &mut next);
            if delta < POWER_TOLERANCE {
                break;
            }
        }
        // Rayleigh quotient on the final vector.
        b.matvec_into(&v, &mut next);
        let rq = next.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        let value = if rq.is_finite() { rq } else { lambda - shift };
        basis.push(v.clone());
        found.push((value, v));
    }
    Ok(found)
}

/// Plain power iteration for the eigenvalue of largest magnitude of
/// `b + offset I`.
fn dominant(b: &Matrix, offset: f64, rng: &mut SeededRng) -> f64 {
    let n = b.rows();
    let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let mut next = vec![0.0; n];
    let mut value = 0.0;
    if !orthonormalize(&mut v, &[]) {
        return 0.0;
    }
    for _ in 0..POWER_MAX_ITERATIONS {
        b.matvec_into(&v, &mut next);
        for (x, vi) in next.iter_mut().zip(&v) {
            *x += offset * vi;
        }
        let rq: f64 = next.iter().zip(&v).map(|(a, b)| a * b).sum();
        if !orthonormalize(&mut next, &[]) {
            return 0.0;
        }
        std::mem::swap(&mut v, &mut next);
        if (rq - value).abs() <= 1e-6 * rq.abs().max(1e-300) {
            return rq;
        }
        value = rq;
    }
    value
}

/// Shift that makes every eigenvalue of `b` non-negative, so the largest
/// eigenvalues are also the largest in magnitude. Zero for PSD input.
fn negative_shift(b: &Matrix) -> f64 {
    let mut rng = SeededRng::new(0x7368_6966);
    let top = dominant(b, 0.0, &mut rng);
    let lowest = if top < 0.0 { top } else { dominant(b, -top, &mut rng) + top };
    if lowest < 0.0 {
        -1.1 * lowest
    } else {
        0.0
    }
}

/// Removes the components along `basis` and normalizes. Returns false when
/// nothing is left.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    for _ in 0..2 {
        for u in basis {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, ui) in v.iter_mut().zip(u) {
                *x -= p * ui;
            }
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 1e-300) {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// `-1/2 J D^2 J` with `J` the centring matrix.
pub fn double_center(d: &Matrix) -> Matrix {
    let n = d.rows();
    let sq = Matrix::from_fn(n, n, |i, j| d.get(i, j) * d.get(i, j));
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).iter().sum::<f64>() / n as f64).collect();
    let total = row_mean.iter().sum::<f64>() / n as f64;
    Matrix::from_fn(n, n, |i, j| -0.5 * (sq.get(i, j) - row_mean[i] - row_mean[j] + total))
}

/// Classical (Torgerson) MDS of a distance matrix into `out_dim`
/// dimensions. Labels are left empty; see [`EmbeddingProjection::with_labels`].
pub fn classical_mds(d: &Matrix, out_dim: usize) -> Result<EmbeddingProjection> {
    let k = d.rows();
    if d.cols() != k {
        return Err(Error::dim(format!("{}x{} distance matrix is not square", k, d.cols())));
    }
    if k < 3 {
        return Err(Error::invalid(format!("MDS needs at least 3 points, got {k}")));
    }
    if out_dim == 0 {
        return Err(Error::invalid("out_dim must be at least 1"));
    }
    for i in 0..k {
        if d.get(i, i) != 0.0 {
            return Err(Error::invalid("distance matrix needs a zero diagonal"));
        }
        for j in 0..k {
            let v = d.get(i, j);
            if !(v >= 0.0 && v.is_finite()) || (v - d.get(j, i)).abs() > 1e-9 * v.abs().max(1.0) {
                return Err(Error::invalid("distance matrix must be symmetric, finite and non-negative"));
            }
        }
    }
    let b = double_center(d);
    let ones = vec![1.0 / (k as f64).sqrt(); k];
    let pairs = top_eigenpairs(&b, out_dim, &[ones])?;
    let mut coords = Matrix::zeros(k, out_dim);
    for (c, (value, vec)) in pairs.iter().enumerate() {
        let scale = value.max(0.0).sqrt();
        for i in 0..k {
            coords.set(i, c, scale * vec[i]);
        }
    }
    let recon = pairwise_distances(&coords, &(0..k).collect::<Vec<_>>())?;
    let stress = d
        .as_slice()
        .iter()
        .zip(recon.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(EmbeddingProjection {
        coordinates: coords,
        question_ids: vec![String::new(); k],
        skill_ids: vec![None; k],
        stress,
        eigenvalues: pairs.into_iter().map(|(v, _)| v).collect(),
    })
}

/// Leave-one-out 1-nearest-neighbour skill accuracy in the projection.
/// Distance ties go to the lower index.
pub fn skill_cluster_score(proj: &EmbeddingProjection) -> Result<f64> {
    let labels: Vec<&str> = proj
        .skill_ids
        .iter()
        .map(|s| s.as_deref().ok_or_else(|| Error::invalid("every point needs a skill label")))
        .collect::<Result<_>>()?;
    if labels.len() != proj.len() {
        return Err(Error::dim("one skill label per point is required"));
    }
    let mut counts = std::collections::BTreeMap::new();
    for l in &labels {
        *counts.entry(*l).or_insert(0usize) += 1;
    }
    if counts.len() < 2 {
        return Err(Error::invalid("skill clustering needs at least 2 skills"));
    }
    if let Some((skill, _)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(Error::DegenerateInput(format!("skill {skill} has fewer than 2 points")));
    }
    let x = &proj.coordinates;
    let mut hits = 0usize;
    for i in 0..labels.len() {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..labels.len() {
            if j == i {
                continue;
            }
            let dist: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best.0 {
                best = (dist, j);
            }
        }
        if labels[best.1] == labels[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}
