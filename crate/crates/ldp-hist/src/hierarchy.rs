//! Hierarchy-based estimators: the beta-ary hierarchy histogram with
//! population splitting and constrained inference, HaarHRR over a binary
//! tree of Haar coefficients, and ADMM post-processing that enforces tree
//! consistency, nonnegativity and unit total mass jointly.

use rand::Rng;

use crate::core::{
    CfoReport, Histogram, LayeredCfoReport, LayeredRowSignReport, PrivacyParams, RngSeed,
};
use crate::error::{Error, Result};
use crate::fo::{
    choose_cfo, grr_aggregate, grr_perturb, hadamard_sign, norm_sub, olh_aggregate, olh_perturb,
    CfoKind, GrrParams, OlhParams,
};

const LAYER_TAG: u64 = 0x6c_6179_6572;
const REPORT_TAG: u64 = 0x7265_706f_7274;

/// Shape of a complete beta-ary tree: levels run from 0 (root) to `height`
/// (leaves), level `t` holding `beta^t` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeShape {
    beta: usize,
    height: usize,
}

impl TreeShape {
    pub fn new(beta: usize, height: usize) -> Result<Self> {
        if beta < 2 {
            return Err(Error::InvalidArgument(format!("branching factor must be >= 2, got {beta}")));
        }
        if height == 0 {
            return Err(Error::InvalidArgument("tree height must be >= 1".into()));
        }
        if (beta as f64).powi(height as i32 + 1) > 1e15 {
            return Err(Error::InvalidArgument(format!(
                "tree beta={beta} height={height} is too large"
            )));
        }
        Ok(Self { beta, height })
    }

    /// Smallest complete tree whose leaf count covers `d` (extra leaves are
    /// zero-frequency padding).
    pub fn for_domain(beta: usize, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument(format!("domain size must be >= 2, got {d}")));
        }
        let mut height = 1;
        let mut leaves = beta;
        while leaves < d {
            leaves = leaves
                .checked_mul(beta)
                .ok_or_else(|| Error::InvalidArgument("domain too large for tree".into()))?;
            height += 1;
        }
        Self::new(beta, height)
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn leaves(&self) -> usize {
        self.beta.pow(self.height as u32)
    }

    pub fn nodes_at_level(&self, level: usize) -> usize {
        self.beta.pow(level as u32)
    }

    /// Index of the first node of `level` in the root-first node vector.
    pub fn level_offset(&self, level: usize) -> usize {
        (self.beta.pow(level as u32) - 1) / (self.beta - 1)
    }

    pub fn total_nodes(&self) -> usize {
        self.level_offset(self.height + 1)
    }

    /// Ancestor of leaf `v` at `level`.
    pub fn ancestor(&self, v: usize, level: usize) -> usize {
        v / self.beta.pow((self.height - level) as u32)
    }

    /// Reporting layers are numbered 1 (leaves) through `height`; layer `l`
    /// sits at level `height - l + 1`.
    pub fn level_of_layer(&self, layer: usize) -> usize {
        self.height - layer + 1
    }
}

/// Per-level node estimates of a hierarchy, root first.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyTree {
    shape: TreeShape,
    levels: Vec<Vec<f64>>,
}

impl HierarchyTree {
    pub fn new(shape: TreeShape, levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.len() != shape.height + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} levels, got {}",
                shape.height + 1,
                levels.len()
            )));
        }
        for (t, level) in levels.iter().enumerate() {
            if level.len() != shape.nodes_at_level(t) {
                return Err(Error::InvalidArgument(format!(
                    "level {t} must have {} nodes, got {}",
                    shape.nodes_at_level(t),
                    level.len()
                )));
            }
        }
        Ok(Self { shape, levels })
    }

    pub fn from_node_vector(shape: TreeShape, nodes: &[f64]) -> Result<Self> {
        if nodes.len() != shape.total_nodes() {
            return Err(Error::InvalidArgument(format!(
                "node vector must have {} entries, got {}",
                shape.total_nodes(),
                nodes.len()
            )));
        }
        let levels = (0..=shape.height)
            .map(|t| {
                let off = shape.level_offset(t);
                nodes[off..off + shape.nodes_at_level(t)].to_vec()
            })
            .collect();
        Ok(Self { shape, levels })
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    pub fn level(&self, t: usize) -> &[f64] {
        &self.levels[t]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.levels[self.shape.height]
    }

    /// Root-first concatenation of all levels.
    pub fn node_vector(&self) -> Vec<f64> {
        self.levels.iter().flatten().copied().collect()
    }
}

/// Sparse parent-minus-children constraint rows: `A x = 0` holds exactly on
/// consistent trees.
#[derive(Debug, Clone)]
pub struct ConstraintMatrix {
    rows: Vec<(usize, Vec<usize>)>,
    total_nodes: usize,
}

impl ConstraintMatrix {
    pub fn new(shape: &TreeShape) -> Self {
        let mut rows = Vec::new();
        for t in 0..shape.height {
            let off = shape.level_offset(t);
            let child_off = shape.level_offset(t + 1);
            for i in 0..shape.nodes_at_level(t) {
                let children: Vec<usize> =
                    (0..shape.beta).map(|c| child_off + i * shape.beta + c).collect();
                rows.push((off + i, children));
            }
        }
        Self { rows, total_nodes: shape.total_nodes() }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(node, children)| x[*node] - children.iter().map(|&c| x[c]).sum::<f64>())
            .collect()
    }

    /// Largest absolute constraint violation.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.apply(x).into_iter().map(f64::abs).fold(0.0, f64::max)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.total_nodes]; self.rows.len()];
        for (r, (node, children)) in self.rows.iter().enumerate() {
            dense[r][*node] = 1.0;
            for &c in children {
                dense[r][c] = -1.0;
            }
        }
        dense
    }
}

/// Deterministic layer assignment: hash of `(master seed, user index)` mod
/// the number of reporting layers, mapped to 1..=height.
pub fn layer_assignment(seed: RngSeed, user: u64, height: usize) -> u32 {
    (seed.derive(&[LAYER_TAG, user]).0 % height as u64) as u32 + 1
}

/// One hierarchy report: a uniformly assigned layer and the CFO-perturbed
/// ancestor node at that layer, using the full privacy budget.
pub fn hh_report(
    v: usize,
    shape: &TreeShape,
    privacy: &PrivacyParams,
    seed: RngSeed,
    user: u64,
) -> Result<LayeredCfoReport> {
    if v >= shape.leaves() {
        return Err(Error::InvalidData(format!(
            "value {v} outside leaf domain [0, {})",
            shape.leaves()
        )));
    }
    let layer = layer_assignment(seed, user, shape.height) as usize;
    let level = shape.level_of_layer(layer);
    let node = shape.ancestor(v, level) as u32;
    let m = shape.nodes_at_level(level);
    let mut rng = seed.stream(&[REPORT_TAG, user]);
    let report = match choose_cfo(m, privacy) {
        CfoKind::Grr => CfoReport::Grr(grr_perturb(node, &GrrParams::new(m, privacy)?, &mut rng)?),
        CfoKind::Olh => CfoReport::Olh(olh_perturb(node, &OlhParams::new(privacy)?, &mut rng)),
    };
    Ok(LayeredCfoReport { layer: layer as u32, report })
}

pub fn hh_report_batch(
    values: &[usize],
    shape: &TreeShape,
    privacy: &PrivacyParams,
    seed: RngSeed,
) -> Result<Vec<LayeredCfoReport>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| hh_report(v, shape, privacy, seed, i as u64))
        .collect()
}

/// Per-layer debiased frequency estimates. Each reporting layer is aggregated
/// with its own oracle; the root level is the known total mass 1.
pub fn hh_aggregate(
    reports: &[LayeredCfoReport],
    shape: &TreeShape,
    privacy: &PrivacyParams,
) -> Result<HierarchyTree> {
    let h = shape.height;
    let mut by_layer: Vec<Vec<&CfoReport>> = vec![Vec::new(); h + 1];
    for r in reports {
        let layer = r.layer as usize;
        if layer == 0 || layer > h {
            return Err(Error::InvalidData(format!("report layer {layer} outside 1..={h}")));
        }
        by_layer[layer].push(&r.report);
    }
    let mut levels = vec![Vec::new(); h + 1];
    levels[0] = vec![1.0];
    for layer in 1..=h {
        let level = shape.level_of_layer(layer);
        let m = shape.nodes_at_level(level);
        let layer_reports = &by_layer[layer];
        if layer_reports.is_empty() {
            return Err(Error::InvalidData(format!("no users assigned to layer {layer}")));
        }
        let estimate = match choose_cfo(m, privacy) {
            CfoKind::Grr => {
                let params = GrrParams::new(m, privacy)?;
                let indices: Vec<u32> = layer_reports
                    .iter()
                    .map(|r| match r {
                        CfoReport::Grr(v) => Ok(*v),
                        CfoReport::Olh(_) => Err(Error::InvalidData(format!(
                            "layer {layer} expects GRR reports"
                        ))),
                    })
                    .collect::<Result<_>>()?;
                grr_aggregate(&indices, &params)?
            }
            CfoKind::Olh => {
                let params = OlhParams::new(privacy)?;
                let hashed: Vec<_> = layer_reports
                    .iter()
                    .map(|r| match r {
                        CfoReport::Olh(k) => Ok(*k),
                        CfoReport::Grr(_) => Err(Error::InvalidData(format!(
                            "layer {layer} expects OLH reports"
                        ))),
                    })
                    .collect::<Result<_>>()?;
                olh_aggregate(&hashed, &params, m)?
            }
        };
        levels[level] = estimate.into_values();
    }
    HierarchyTree::new(*shape, levels)
}

/// Orthogonal projection onto the consistent subspace `{A x = 0}` via the
/// two-pass weighted-average / mean-consistency sweep (uniform per-node
/// variance). Linear and idempotent.
pub fn project_tree_consistency(shape: &TreeShape, nodes: &[f64]) -> Result<Vec<f64>> {
    if nodes.len() != shape.total_nodes() {
        return Err(Error::InvalidArgument(format!(
            "node vector must have {} entries, got {}",
            shape.total_nodes(),
            nodes.len()
        )));
    }
    let h = shape.height;
    let beta = shape.beta as f64;
    // bottom-up: blend each node with the sum of its children, weighting by
    // the variance of the two estimates
    let mut z = nodes.to_vec();
    for t in (0..h).rev() {
        let l = (h - t + 1) as i32;
        let beta_l = beta.powi(l);
        let beta_lm1 = beta.powi(l - 1);
        let w_self = (beta_l - beta_lm1) / (beta_l - 1.0);
        let w_children = (beta_lm1 - 1.0) / (beta_l - 1.0);
        let off = shape.level_offset(t);
        let child_off = shape.level_offset(t + 1);
        for i in 0..shape.nodes_at_level(t) {
            let child_sum: f64 =
                (0..shape.beta).map(|c| z[child_off + i * shape.beta + c]).sum();
            z[off + i] = w_self * nodes[off + i] + w_children * child_sum;
        }
    }
    // top-down: distribute each node's residual equally among its children
    let mut out = z.clone();
    for t in 0..h {
        let off = shape.level_offset(t);
        let child_off = shape.level_offset(t + 1);
        for i in 0..shape.nodes_at_level(t) {
            let children: Vec<usize> =
                (0..shape.beta).map(|c| child_off + i * shape.beta + c).collect();
            let child_sum: f64 = children.iter().map(|&c| z[c]).sum();
            let correction = (out[off + i] - child_sum) / beta;
            for &c in &children {
                out[c] = z[c] + correction;
            }
        }
    }
    Ok(out)
}

/// Constrained inference on a hierarchy: the least-squares consistent tree.
pub fn constrained_inference(tree: &HierarchyTree) -> Result<HierarchyTree> {
    let nodes = project_tree_consistency(tree.shape(), &tree.node_vector())?;
    HierarchyTree::from_node_vector(*tree.shape(), &nodes)
}

/// Per-level Norm-Sub: every level becomes nonnegative and sums to one.
pub fn project_nonneg_normalized(shape: &TreeShape, nodes: &[f64]) -> Result<Vec<f64>> {
    if nodes.len() != shape.total_nodes() {
        return Err(Error::InvalidArgument(format!(
            "node vector must have {} entries, got {}",
            shape.total_nodes(),
            nodes.len()
        )));
    }
    let mut out = Vec::with_capacity(nodes.len());
    for t in 0..=shape.height {
        let off = shape.level_offset(t);
        let level = &nodes[off..off + shape.nodes_at_level(t)];
        out.extend(norm_sub(level)?);
    }
    Ok(out)
}

/// Stopping rule for the ADMM iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig {
    /// Bound on the largest primal residual.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    /// `0.5 ||x - x~||^2` after every iteration.
    pub objective: Vec<f64>,
}

/// ADMM post-processing of noisy hierarchy estimates (root-first node
/// vector): splits the problem across an unconstrained quadratic block, the
/// consistency projection and the per-level Norm-Sub projection, with scaled
/// dual variables and penalty 1. Returns the nonnegative, per-level
/// normalized iterate, whose leaf level is a probability distribution.
pub fn hh_admm(
    tree: &HierarchyTree,
    config: &AdmmConfig,
) -> Result<(HierarchyTree, AdmmDiagnostics)> {
    let shape = *tree.shape();
    let x_tilde = tree.node_vector();
    let n = x_tilde.len();
    let mut x = x_tilde.clone();
    let mut y = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut mu = vec![0.0; n];
    let mut nu = vec![0.0; n];
    let mut eta = vec![0.0; n];
    let mut objective = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut scratch = vec![0.0; n];
    while iterations < config.max_iters {
        for i in 0..n {
            y[i] = 0.5 * (x[i] - x_tilde[i] + mu[i]);
        }
        for i in 0..n {
            scratch[i] = x[i] + nu[i];
        }
        let z = project_tree_consistency(&shape, &scratch)?;
        for i in 0..n {
            scratch[i] = x[i] + eta[i];
        }
        w = project_nonneg_normalized(&shape, &scratch).map_err(|e| match e {
            Error::InvalidData(msg) => Error::Degenerate(format!("ADMM projection failed: {msg}")),
            other => other,
        })?;
        for i in 0..n {
            x[i] = ((y[i] + x_tilde[i] - mu[i]) + (z[i] - nu[i]) + (w[i] - eta[i])) / 3.0;
        }
        let mut res = 0.0f64;
        for i in 0..n {
            mu[i] += x[i] - x_tilde[i] - y[i];
            nu[i] += x[i] - z[i];
            eta[i] += x[i] - w[i];
            res = res
                .max((x[i] - x_tilde[i] - y[i]).abs())
                .max((x[i] - z[i]).abs())
                .max((x[i] - w[i]).abs());
        }
        objective.push(0.5 * x.iter().zip(&x_tilde).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
        iterations += 1;
        residual = res;
        if res < config.tol {
            converged = true;
            break;
        }
    }
    let result = HierarchyTree::from_node_vector(shape, &w)?;
    Ok((result, AdmmDiagnostics { iterations, converged, final_residual: residual, objective }))
}

/// Leaf distribution after ADMM post-processing.
pub fn hh_admm_leaves(tree: &HierarchyTree, config: &AdmmConfig) -> Result<(Histogram, AdmmDiagnostics)> {
    let (result, diag) = hh_admm(tree, config)?;
    Ok((Histogram::simplex(result.leaves().to_vec())?, diag))
}

// --- HaarHRR -----------------------------------------------------------

fn haar_height(d: usize) -> Result<usize> {
    if d < 2 || !d.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "Haar domain size must be a power of two >= 2, got {d}"
        )));
    }
    Ok(d.trailing_zeros() as usize)
}

/// Forward discrete Haar transform: layer `l` (1-based height) holds
/// coefficients `c_a = (C_l - C_r) / 2^{l/2}` over subtree leaf sums.
pub fn haar_forward(leaves: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = leaves.len();
    let h = haar_height(d)?;
    let mut sums = leaves.to_vec();
    let mut layers = Vec::with_capacity(h);
    for layer in 1..=h {
        let m = d >> layer;
        let scale = 2f64.powf(layer as f64 / 2.0);
        let mut coeffs = Vec::with_capacity(m);
        let mut next = Vec::with_capacity(m);
        for a in 0..m {
            let left = sums[2 * a];
            let right = sums[2 * a + 1];
            coeffs.push((left - right) / scale);
            next.push(left + right);
        }
        layers.push(coeffs);
        sums = next;
    }
    Ok(layers)
}

/// Inverse discrete Haar transform; `total` is the overall mass (the root
/// scaling coefficient).
pub fn haar_inverse(layers: &[Vec<f64>], total: f64, d: usize) -> Result<Vec<f64>> {
    let h = haar_height(d)?;
    if layers.len() != h {
        return Err(Error::InvalidArgument(format!(
            "expected {h} coefficient layers, got {}",
            layers.len()
        )));
    }
    let mut leaves = vec![total / d as f64; d];
    for (idx, coeffs) in layers.iter().enumerate() {
        let layer = idx + 1;
        if coeffs.len() != d >> layer {
            return Err(Error::InvalidArgument(format!(
                "layer {layer} must have {} coefficients, got {}",
                d >> layer,
                coeffs.len()
            )));
        }
        let scale = 2f64.powf(layer as f64 / 2.0);
        for (v, leaf) in leaves.iter_mut().enumerate() {
            let a = v >> layer;
            let sign = if (v >> (layer - 1)) & 1 == 0 { 1.0 } else { -1.0 };
            // psi_a scaled by 2^{-l/2}, spread over 2^l leaves
            *leaf += coeffs[a] * sign / scale;
        }
    }
    Ok(leaves)
}

/// One HaarHRR report: the user's single nonzero Haar coefficient position at
/// a uniformly assigned layer, encoded through Hadamard randomized response.
pub fn haar_report(
    v: usize,
    d: usize,
    privacy: &PrivacyParams,
    seed: RngSeed,
    user: u64,
) -> Result<LayeredRowSignReport> {
    let h = haar_height(d)?;
    if v >= d {
        return Err(Error::InvalidData(format!("value {v} outside leaf domain [0, {d})")));
    }
    let layer = layer_assignment(seed, user, h) as usize;
    let m = d >> layer;
    let a = (v >> layer) as u32;
    let user_sign: i8 = if (v >> (layer - 1)) & 1 == 0 { 1 } else { -1 };
    let mut rng = seed.stream(&[REPORT_TAG, user]);
    let row = rng.random_range(0..m as u32);
    let keep_p = privacy.exp_eps() / (privacy.exp_eps() + 1.0);
    let mut sign = user_sign * hadamard_sign(row, a);
    if rng.random::<f64>() >= keep_p {
        sign = -sign;
    }
    Ok(LayeredRowSignReport { layer: layer as u32, row, sign })
}

pub fn haar_report_batch(
    values: &[usize],
    d: usize,
    privacy: &PrivacyParams,
    seed: RngSeed,
) -> Result<Vec<LayeredRowSignReport>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| haar_report(v, d, privacy, seed, i as u64))
        .collect()
}

/// Debiases the per-layer Haar coefficients and inverts the transform. The
/// root mass is fixed to 1; the leaf estimates may be negative. A layer with
/// no assigned users contributes zero coefficients.
pub fn haar_reconstruct(
    reports: &[LayeredRowSignReport],
    d: usize,
    privacy: &PrivacyParams,
) -> Result<Histogram> {
    let h = haar_height(d)?;
    let p = privacy.exp_eps() / (privacy.exp_eps() + 1.0);
    let debias = 2.0 * p - 1.0;
    let mut acc: Vec<Vec<f64>> = (1..=h).map(|l| vec![0.0; d >> l]).collect();
    let mut layer_counts = vec![0u64; h + 1];
    for r in reports {
        let layer = r.layer as usize;
        if layer == 0 || layer > h {
            return Err(Error::InvalidData(format!("report layer {layer} outside 1..={h}")));
        }
        layer_counts[layer] += 1;
        let slots = &mut acc[layer - 1];
        for (a, slot) in slots.iter_mut().enumerate() {
            *slot += r.sign as f64 * hadamard_sign(r.row, a as u32) as f64;
        }
    }
    let mut layers = Vec::with_capacity(h);
    for (idx, mut slots) in acc.into_iter().enumerate() {
        let layer = idx + 1;
        let n_l = layer_counts[layer];
        let scale = 2f64.powf(layer as f64 / 2.0);
        if n_l > 0 {
            for s in &mut slots {
                *s /= n_l as f64 * debias * scale;
            }
        }
        layers.push(slots);
    }
    Histogram::from_values(haar_inverse(&layers, 1.0, d)?)
}
