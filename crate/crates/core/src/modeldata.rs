//! Desk-scale models with analytic gradients, synthetic data and non-IID
//! client partitions.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance of each class mean from the origin. Calibrated so that a centrally
/// trained logistic model clears 90% train accuracy on two classes.
pub const DEFAULT_SEPARATION: f64 = 2.5;

/// Dense feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub num_classes: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            dim: self.dim,
            num_classes: self.num_classes,
            features,
            labels,
        }
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

fn class_mean(class: usize, num_classes: usize, dim: usize, separation: f64) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    if dim >= num_classes {
        mean[class] = separation;
    } else if dim >= 2 {
        let angle = std::f64::consts::TAU * class as f64 / num_classes as f64;
        mean[0] = separation * angle.cos();
        mean[1] = separation * angle.sin();
    } else {
        mean[0] = separation * class as f64;
    }
    mean
}

/// Gaussian class clusters with unit noise. Class means sit on the scaled
/// simplex vertices `separation * e_c` when `dim >= num_classes`, otherwise on a
/// circle in the first two coordinates.
pub fn make_synthetic(n: usize, dim: usize, num_classes: usize, seed: u64) -> Result<Dataset> {
    make_synthetic_with(n, dim, num_classes, DEFAULT_SEPARATION, seed)
}

pub fn make_synthetic_with(
    n: usize,
    dim: usize,
    num_classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 || dim == 0 {
        return Err(Error::InvalidDimension("need dim >= 1 and at least two classes".into()));
    }
    if n < num_classes {
        return Err(Error::InvalidDimension(format!("n={n} is smaller than num_classes={num_classes}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    labels.shuffle(&mut rng);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|c| class_mean(c, num_classes, dim, separation))
        .collect();
    let mut features = Vec::with_capacity(n * dim);
    for &l in &labels {
        for m in &means[l] {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(m + z);
        }
    }
    Ok(Dataset {
        dim,
        num_classes,
        features,
        labels,
    })
}

/// Loads a CSV with a header row, numeric features and an integer label in the
/// last column.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

fn parse_csv(text: &str, path: &Path) -> Result<Dataset> {
    let csv_err = |row: usize, message: String| Error::Csv {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| csv_err(1, "missing header row".into()))?;
    let cols = header.split(',').count();
    if cols < 2 {
        return Err(csv_err(1, "need at least one feature column and a label column".into()));
    }
    let dim = cols - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in lines {
        let row = line_no + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols {
            return Err(csv_err(row, format!("expected {cols} cells, found {}", cells.len())));
        }
        for cell in &cells[..dim] {
            let v: f64 = cell
                .parse()
                .map_err(|_| csv_err(row, format!("non-numeric feature {cell:?}")))?;
            if !v.is_finite() {
                return Err(csv_err(row, format!("non-finite feature {cell:?}")));
            }
            features.push(v);
        }
        let label = cells[dim];
        let parsed: f64 = label
            .parse()
            .map_err(|_| csv_err(row, format!("non-numeric label {label:?}")))?;
        if parsed < 0.0 || parsed.fract() != 0.0 {
            return Err(csv_err(row, format!("label {label:?} is not a nonnegative integer")));
        }
        labels.push(parsed as usize);
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no data rows", path.display())));
    }
    let num_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    Ok(Dataset {
        dim,
        num_classes: num_classes.max(2),
        features,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PartitionScheme {
    Dirichlet { alpha: f64 },
    Pathological { classes_per_client: usize },
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpec {
    pub scheme: PartitionScheme,
    pub k: usize,
    pub seed: u64,
}

fn even_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

fn sample_dirichlet(alpha: f64, dims: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha checked positive");
    let draws: Vec<f64> = (0..dims).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.into_iter().map(|d| d / sum).collect()
    } else {
        // every gamma draw underflowed; the limit puts all mass on one class
        let mut out = vec![0.0; dims];
        out[rng.random_range(0..dims)] = 1.0;
        out
    }
}

/// Splits `data` into `spec.k` disjoint, exhaustive client shards (as index
/// lists into `data`).
pub fn partition_indices(data: &Dataset, spec: &PartitionSpec) -> Result<Vec<Vec<usize>>> {
    let (n, k, l) = (data.len(), spec.k, data.num_classes);
    if k == 0 {
        return Err(Error::InvalidDimension("K must be >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidDimension(format!("K={k} exceeds sample count {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); l];
    for (i, &label) in data.labels.iter().enumerate() {
        pools[label].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }

    let mut shards: Vec<Vec<usize>> = match spec.scheme {
        PartitionScheme::Iid => {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            let mut out = Vec::with_capacity(k);
            let mut start = 0;
            for size in even_sizes(n, k) {
                out.push(all[start..start + size].to_vec());
                start += size;
            }
            out
        }
        PartitionScheme::Dirichlet { alpha } => {
            if !(alpha > 0.0) {
                return Err(Error::Domain(format!("Dirichlet alpha must be positive, got {alpha}")));
            }
            let mut out = Vec::with_capacity(k);
            for size in even_sizes(n, k) {
                let props = sample_dirichlet(alpha, l, &mut rng);
                let mut shard = Vec::with_capacity(size);
                for _ in 0..size {
                    // draw a class from the proportions restricted to nonempty pools
                    let avail: f64 = (0..l).filter(|c| !pools[*c].is_empty()).map(|c| props[c]).sum();
                    let class = if avail > 0.0 {
                        let mut u = rng.random::<f64>() * avail;
                        let mut chosen = None;
                        for c in (0..l).filter(|c| !pools[*c].is_empty()) {
                            chosen = Some(c);
                            if u < props[c] {
                                break;
                            }
                            u -= props[c];
                        }
                        chosen.expect("some pool is nonempty")
                    } else {
                        // preferred classes exhausted: take from the largest remaining pool
                        (0..l).max_by_key(|c| (pools[*c].len(), std::cmp::Reverse(*c))).expect("L >= 1")
                    };
                    shard.push(pools[class].pop().expect("pool nonempty"));
                }
                out.push(shard);
            }
            out
        }
        PartitionScheme::Pathological { classes_per_client } => {
            if classes_per_client == 0 || classes_per_client > l {
                return Err(Error::Domain(format!(
                    "classes_per_client must be in 1..={l}, got {classes_per_client}"
                )));
            }
            if k * classes_per_client < l {
                return Err(Error::Domain(format!(
                    "{k} clients with {classes_per_client} classes each cannot cover {l} classes"
                )));
            }
            let owners: Vec<Vec<usize>> = (0..l)
                .map(|c| {
                    (0..k)
                        .filter(|client| {
                            (0..classes_per_client).any(|j| (client * classes_per_client + j) % l == c)
                        })
                        .collect()
                })
                .collect();
            let mut out = vec![Vec::new(); k];
            for (c, holders) in owners.iter().enumerate() {
                if pools[c].len() < holders.len() {
                    return Err(Error::Domain(format!(
                        "class {c} has {} samples for {} holders",
                        pools[c].len(),
                        holders.len()
                    )));
                }
                let sizes = even_sizes(pools[c].len(), holders.len());
                let mut start = 0;
                for (&client, size) in holders.iter().zip(sizes) {
                    out[client].extend_from_slice(&pools[c][start..start + size]);
                    start += size;
                }
            }
            out
        }
    };

    // every client needs at least one sample: move from the largest shard
    while let Some(empty) = shards.iter().position(|s| s.is_empty()) {
        let largest = (0..k).max_by_key(|i| shards[*i].len()).expect("K >= 1");
        let moved = shards[largest].pop().expect("n >= K keeps the largest shard nonempty");
        shards[empty].push(moved);
    }
    for shard in &mut shards {
        shard.sort_unstable();
    }
    Ok(shards)
}

pub fn partition(data: &Dataset, spec: &PartitionSpec) -> Result<Vec<Dataset>> {
    Ok(partition_indices(data, spec)?
        .iter()
        .map(|idx| data.subset(idx))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    LogisticRegression,
    Mlp { hidden: usize },
}

/// Model architecture. Binary logistic regression uses a single sigmoid unit;
/// with more classes it is softmax regression. The MLP has one tanh hidden
/// layer and a softmax output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Log-softmax of `logits` in place; returns the log-normalizer.
fn log_softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter_mut().for_each(|z| *z -= lse);
}

impl ModelSpec {
    pub fn new(kind: ModelKind, input_dim: usize, num_classes: usize) -> Result<Self> {
        if input_dim == 0 || num_classes < 2 {
            return Err(Error::InvalidDimension("model needs input_dim >= 1 and num_classes >= 2".into()));
        }
        if let ModelKind::Mlp { hidden: 0 } = kind {
            return Err(Error::InvalidDimension("MLP hidden width must be >= 1".into()));
        }
        Ok(ModelSpec {
            kind,
            input_dim,
            num_classes,
        })
    }

    fn binary(&self) -> bool {
        matches!(self.kind, ModelKind::LogisticRegression) && self.num_classes == 2
    }

    pub fn param_len(&self) -> usize {
        let (d, l) = (self.input_dim, self.num_classes);
        match self.kind {
            ModelKind::LogisticRegression if l == 2 => d + 1,
            ModelKind::LogisticRegression => l * (d + 1),
            ModelKind::Mlp { hidden } => hidden * (d + 1) + l * (hidden + 1),
        }
    }

    /// Zeros for linear models; small Gaussian weights for the MLP (zeros would
    /// leave its hidden units symmetric).
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        match self.kind {
            ModelKind::LogisticRegression => vec![0.0; self.param_len()],
            ModelKind::Mlp { .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let scale = 1.0 / (self.input_dim as f64).sqrt();
                (0..self.param_len())
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        }
    }

    fn check(&self, params: &[f64], data: &Dataset) -> Result<()> {
        crate::error::check_len(self.param_len(), params.len())?;
        crate::error::check_len(self.input_dim, data.dim)?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite model parameters".into()));
        }
        Ok(())
    }

    /// Mean cross-entropy over the rows `idx` of `data` and its exact gradient.
    pub fn loss_and_grad_rows(&self, params: &[f64], data: &Dataset, idx: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check(params, data)?;
        if idx.is_empty() {
            return Err(Error::EmptyDataset("empty batch".into()));
        }
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let d = self.input_dim;
        let l = self.num_classes;
        let mut logits = vec![0.0; l];
        match self.kind {
            ModelKind::LogisticRegression if self.binary() => {
                let (w, b) = params.split_at(d);
                for &i in idx {
                    let x = data.row(i);
                    let z = crate::simplex::dot(w, x) + b[0];
                    let y = (data.labels[i] == 1) as u8 as f64;
                    loss += softplus(z) - y * z;
                    let err = sigmoid(z) - y;
                    for j in 0..d {
                        grad[j] += err * x[j];
                    }
                    grad[d] += err;
                }
            }
            ModelKind::LogisticRegression => {
                for &i in idx {
                    let x = data.row(i);
                    for (c, z) in logits.iter_mut().enumerate() {
                        let row = &params[c * (d + 1)..(c + 1) * (d + 1)];
                        *z = crate::simplex::dot(&row[..d], x) + row[d];
                    }
                    log_softmax(&mut logits);
                    let y = data.labels[i];
                    loss -= logits[y];
                    for c in 0..l {
                        let err = logits[c].exp() - (c == y) as u8 as f64;
                        let g = &mut grad[c * (d + 1)..(c + 1) * (d + 1)];
                        for j in 0..d {
                            g[j] += err * x[j];
                        }
                        g[d] += err;
                    }
                }
            }
            ModelKind::Mlp { hidden: h } => {
                let (w1, w2) = params.split_at(h * (d + 1));
                let mut act = vec![0.0; h];
                let mut back = vec![0.0; h];
                for &i in idx {
                    let x = data.row(i);
                    for (u, a) in act.iter_mut().enumerate() {
                        let row = &w1[u * (d + 1)..(u + 1) * (d + 1)];
                        *a = (crate::simplex::dot(&row[..d], x) + row[d]).tanh();
                    }
                    for (c, z) in logits.iter_mut().enumerate() {
                        let row = &w2[c * (h + 1)..(c + 1) * (h + 1)];
                        *z = crate::simplex::dot(&row[..h], &act) + row[h];
                    }
                    log_softmax(&mut logits);
                    let y = data.labels[i];
                    loss -= logits[y];
                    back.iter_mut().for_each(|b| *b = 0.0);
                    let (g1, g2) = grad.split_at_mut(h * (d + 1));
                    for c in 0..l {
                        let err = logits[c].exp() - (c == y) as u8 as f64;
                        let row = &w2[c * (h + 1)..(c + 1) * (h + 1)];
                        let g = &mut g2[c * (h + 1)..(c + 1) * (h + 1)];
                        for u in 0..h {
                            g[u] += err * act[u];
                            back[u] += err * row[u];
                        }
                        g[h] += err;
                    }
                    for u in 0..h {
                        let delta = back[u] * (1.0 - act[u] * act[u]);
                        let g = &mut g1[u * (d + 1)..(u + 1) * (d + 1)];
                        for j in 0..d {
                            g[j] += delta * x[j];
                        }
                        g[d] += delta;
                    }
                }
            }
        }
        let m = idx.len() as f64;
        grad.iter_mut().for_each(|g| *g /= m);
        Ok((loss / m, grad))
    }

    pub fn loss_and_grad(&self, params: &[f64], data: &Dataset) -> Result<(f64, Vec<f64>)> {
        let idx: Vec<usize> = (0..data.len()).collect();
        self.loss_and_grad_rows(params, data, &idx)
    }

    pub fn predict(&self, params: &[f64], x: &[f64]) -> usize {
        let d = self.input_dim;
        let l = self.num_classes;
        match self.kind {
            ModelKind::LogisticRegression if self.binary() => {
                usize::from(crate::simplex::dot(&params[..d], x) + params[d] > 0.0)
            }
            ModelKind::LogisticRegression => argmax((0..l).map(|c| {
                let row = &params[c * (d + 1)..(c + 1) * (d + 1)];
                crate::simplex::dot(&row[..d], x) + row[d]
            })),
            ModelKind::Mlp { hidden: h } => {
                let (w1, w2) = params.split_at(h * (d + 1));
                let act: Vec<f64> = (0..h)
                    .map(|u| {
                        let row = &w1[u * (d + 1)..(u + 1) * (d + 1)];
                        (crate::simplex::dot(&row[..d], x) + row[d]).tanh()
                    })
                    .collect();
                argmax((0..l).map(|c| {
                    let row = &w2[c * (h + 1)..(c + 1) * (h + 1)];
                    crate::simplex::dot(&row[..h], &act) + row[h]
                }))
            }
        }
    }

    pub fn accuracy(&self, params: &[f64], data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let correct = (0..data.len())
            .filter(|&i| self.predict(params, data.row(i)) == data.labels[i])
            .count();
        correct as f64 / data.len() as f64
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
