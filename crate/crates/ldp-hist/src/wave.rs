//! Square Wave and General Wave randomizers over the unit interval, the
//! mutual-information rule for choosing the wave half-width `b`, and the
//! bucket-to-bucket transition matrix consumed by the EM reconstruction.

use rand::Rng;

use crate::core::{PrivacyParams, RngSeed};
use crate::error::{Error, Result};

/// Half-width maximizing the mutual-information upper bound:
/// `b = (eps e^eps - e^eps + 1) / (2 e^eps (e^eps - 1 - eps))`.
///
/// Strictly decreasing in epsilon; tends to 1/2 as epsilon -> 0 (returned
/// exactly at epsilon == 0) and to 0 as epsilon -> infinity.
pub fn optimal_b(epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        return 0.5;
    }
    let e = epsilon.exp();
    // written via exp_m1 to avoid cancellation for small epsilon
    let num = epsilon * e - epsilon.exp_m1();
    let den = 2.0 * e * (epsilon.exp_m1() - epsilon);
    num / den
}

/// The mutual-information upper bound as a function of `b`:
/// `ln((2b+1)/(2b e^eps + 1)) + 2 b eps e^eps / (2b e^eps + 1)`.
pub fn mutual_info_bound(b: f64, privacy: &PrivacyParams) -> f64 {
    let e = privacy.exp_eps();
    let eps = privacy.epsilon();
    ((2.0 * b + 1.0) / (2.0 * b * e + 1.0)).ln() + 2.0 * b * eps * e / (2.0 * b * e + 1.0)
}

/// Continuous Square Wave mechanism: inputs in `[0, 1]`, outputs in
/// `[-b, 1+b]`, density `p` within `b` of the input and `q` elsewhere, with
/// `p/q = e^eps` and `2bp + q = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwParams {
    b: f64,
    p: f64,
    q: f64,
    exp_eps: f64,
}

impl SwParams {
    pub fn new(privacy: &PrivacyParams, b: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&b) {
            return Err(Error::InvalidArgument(format!(
                "square wave half-width must be in [0, 1/2], got {b}"
            )));
        }
        let e = privacy.exp_eps();
        let q = 1.0 / (2.0 * b * e + 1.0);
        Ok(Self { b, p: e * q, q, exp_eps: e })
    }

    /// Parameters at the mutual-information-optimal half-width.
    pub fn optimal(privacy: &PrivacyParams) -> Self {
        // the limit value 1/2 can overshoot by an ulp for tiny epsilon
        let b = optimal_b(privacy.epsilon()).min(0.5);
        Self::new(privacy, b).expect("optimal b is in (0, 1/2]")
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Output domain `[-b, 1 + b]`.
    pub fn output_range(&self) -> (f64, f64) {
        (-self.b, 1.0 + self.b)
    }
}

/// Samples the square wave response: uniform on `[v-b, v+b]` with probability
/// `2bp`, otherwise uniform on the rest of the output domain.
pub fn sw_perturb<R: Rng>(v: f64, params: &SwParams, rng: &mut R) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidData(format!("square wave input {v} outside [0, 1]")));
    }
    let b = params.b;
    if rng.random::<f64>() < 2.0 * b * params.p {
        return Ok(v - b + rng.random::<f64>() * 2.0 * b);
    }
    // complement [-b, v-b] u [v+b, 1+b]; the two segments have lengths v and 1-v
    if rng.random::<f64>() < v {
        Ok(-b + rng.random::<f64>() * v)
    } else {
        Ok(v + b + rng.random::<f64>() * (1.0 - v))
    }
}

pub fn sw_perturb_batch(values: &[f64], params: &SwParams, seed: RngSeed) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| sw_perturb(v, params, &mut seed.user_stream(i as u64)))
        .collect()
}

/// Discrete Square Wave over input indices `[0, d)`: output indices
/// `[0, d + 2b)` with `p = e^eps / ((2b+1) e^eps + d - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteSwParams {
    d: usize,
    b: usize,
    p: f64,
    q: f64,
}

impl DiscreteSwParams {
    /// Uses `b = floor(optimal_b(eps) * d)`.
    pub fn new(d: usize, privacy: &PrivacyParams) -> Result<Self> {
        Self::with_b(d, discrete_b(privacy, d), privacy)
    }

    pub fn with_b(d: usize, b: usize, privacy: &PrivacyParams) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("discrete domain size must be >= 1".into()));
        }
        let e = privacy.exp_eps();
        let denom = (2 * b + 1) as f64 * e + d as f64 - 1.0;
        Ok(Self { d, b, p: e / denom, q: 1.0 / denom })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn d_tilde(&self) -> usize {
        self.d + 2 * self.b
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Transition matrix of the discrete mechanism: `p` on the diagonal band
    /// of width `2b+1`, `q` elsewhere.
    pub fn transition_matrix(&self) -> TransitionMatrix {
        let (d, dt, b) = (self.d, self.d_tilde(), self.b);
        let mut data = vec![0.0; d * dt];
        for j in 0..dt {
            for i in 0..d {
                let near = j >= i && j <= i + 2 * b;
                data[j * d + i] = if near { self.p } else { self.q };
            }
        }
        TransitionMatrix { d, d_tilde: dt, data }
    }
}

/// Discrete half-width `b = floor(optimal_b(eps) * d)`.
pub fn discrete_b(privacy: &PrivacyParams, d: usize) -> usize {
    (optimal_b(privacy.epsilon()) * d as f64).floor() as usize
}

/// Samples the discrete square wave response (input shifted by `b` into
/// output coordinates, band of `2b+1` indices at probability `p`).
pub fn sw_perturb_discrete<R: Rng>(
    v: u32,
    params: &DiscreteSwParams,
    rng: &mut R,
) -> Result<u32> {
    if v as usize >= params.d {
        return Err(Error::InvalidData(format!(
            "value {v} outside discrete domain [0, {})",
            params.d
        )));
    }
    let b = params.b as u32;
    let band = 2 * b + 1;
    if rng.random::<f64>() < band as f64 * params.p {
        return Ok(v + rng.random_range(0..band));
    }
    // uniform over the d-1 output indices outside [v, v+2b]
    let r = rng.random_range(0..params.d as u32 - 1);
    Ok(if r < v { r } else { r + band })
}

pub fn sw_perturb_discrete_batch(
    values: &[u32],
    params: &DiscreteSwParams,
    seed: RngSeed,
) -> Result<Vec<u32>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| sw_perturb_discrete(v, params, &mut seed.user_stream(i as u64)))
        .collect()
}

/// Wave profile of a General Wave mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    Square,
    /// Trapezoid with the given top-to-bottom length ratio in (0, 1).
    Trapezoid(f64),
    Triangle,
}

impl ShapeKind {
    /// Top plateau length as a fraction of the full wave width.
    fn ratio(&self) -> f64 {
        match self {
            ShapeKind::Square => 1.0,
            ShapeKind::Trapezoid(r) => *r,
            ShapeKind::Triangle => 0.0,
        }
    }
}

/// A wave function `W: R -> [q, e^eps q]` with `W(z) = q` for `|z| > b` and
/// `int_{-b}^{b} W = 1 - q`. The output density for input `v` is `W(z - v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveShape {
    kind: ShapeKind,
    b: f64,
    q: f64,
    peak: f64,
    exp_eps: f64,
}

impl WaveShape {
    /// Builds the wave with its peak on the LDP ceiling `e^eps q`; `q` is then
    /// pinned by the normalization constraint and found by bisection.
    pub fn new(kind: ShapeKind, b: f64, privacy: &PrivacyParams) -> Result<Self> {
        Self::validate_kind(&kind, b)?;
        let e = privacy.exp_eps();
        let r = kind.ratio();
        // residual of: 2bq + (e q - q) b (1 + r) + q - 1, increasing in q
        let residual = |q: f64| 2.0 * b * q + (e - 1.0) * q * b * (1.0 + r) + q - 1.0;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        debug_assert!(residual(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q = 0.5 * (lo + hi);
        Ok(Self { kind, b, q, peak: e * q, exp_eps: e })
    }

    /// Builds the wave for an externally supplied `q`, solving the peak from
    /// the normalization constraint. Errors if the required peak escapes
    /// `[q, e^eps q]`.
    pub fn with_q(kind: ShapeKind, b: f64, privacy: &PrivacyParams, q: f64) -> Result<Self> {
        Self::validate_kind(&kind, b)?;
        if q <= 0.0 {
            return Err(Error::InvalidArgument(format!("wave floor q must be positive, got {q}")));
        }
        let e = privacy.exp_eps();
        let r = kind.ratio();
        let peak = q + (1.0 - (2.0 * b + 1.0) * q) / (b * (1.0 + r));
        if peak > e * q * (1.0 + 1e-12) || peak < q * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "shape infeasible at b={b}: required peak {peak} outside [q, e^eps q] = [{q}, {}]",
                e * q
            )));
        }
        Ok(Self { kind, b, q, peak: peak.min(e * q).max(q), exp_eps: e })
    }

    fn validate_kind(kind: &ShapeKind, b: f64) -> Result<()> {
        if !(b > 0.0 && b <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "wave half-width must be in (0, 1/2], got {b}"
            )));
        }
        if let ShapeKind::Trapezoid(r) = kind {
            if !(*r > 0.0 && *r < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "trapezoid ratio must be in (0, 1), got {r}"
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ShapeKind {
        self.kind
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn output_range(&self) -> (f64, f64) {
        (-self.b, 1.0 + self.b)
    }

    /// The wave function `W(z)`.
    pub fn density(&self, z: f64) -> f64 {
        let (b, r) = (self.b, self.kind.ratio());
        let az = z.abs();
        if az > b {
            return self.q;
        }
        let top = r * b;
        if az <= top {
            self.peak
        } else {
            self.peak - (self.peak - self.q) * (az - top) / (b - top)
        }
    }

    /// Mass of the bump above the floor: `int (W - q) = 1 - (2b+1) q`.
    pub fn bump_mass(&self) -> f64 {
        1.0 - (2.0 * self.b + 1.0) * self.q
    }

    /// `int_{-b}^{min(z, b)} (W(t) - q) dt`, clamped outside `[-b, b]`.
    ///
    /// Piecewise quadratic; used for exact bucket probabilities.
    pub fn bump_cdf(&self, z: f64) -> f64 {
        let (b, r) = (self.b, self.kind.ratio());
        let top = r * b;
        let h = self.peak - self.q;
        let ramp = b - top;
        if z <= -b {
            return 0.0;
        }
        if z >= b {
            return self.bump_mass();
        }
        let tri = if ramp > 0.0 { h * ramp / 2.0 } else { 0.0 };
        if z <= -top {
            // rising ramp
            if ramp > 0.0 {
                h * (b + z).powi(2) / (2.0 * ramp)
            } else {
                0.0
            }
        } else if z <= top {
            tri + h * (z + top)
        } else {
            tri + 2.0 * h * top + if ramp > 0.0 {
                h * (ramp.powi(2) - (b - z).powi(2)) / (2.0 * ramp)
            } else {
                0.0
            }
        }
    }
}

/// Samples the general wave response: mixture of the uniform floor over the
/// whole output domain and the bump around the input value (central plateau
/// plus two linear ramps, each inverted in closed form).
pub fn gw_perturb<R: Rng>(v: f64, shape: &WaveShape, rng: &mut R) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidData(format!("general wave input {v} outside [0, 1]")));
    }
    let b = shape.b;
    let floor_mass = (1.0 + 2.0 * b) * shape.q;
    if rng.random::<f64>() < floor_mass {
        return Ok(-b + rng.random::<f64>() * (1.0 + 2.0 * b));
    }
    let r = shape.kind.ratio();
    let top = r * b;
    // plateau rectangle vs the two ramp triangles
    let z = if rng.random::<f64>() < 2.0 * r / (1.0 + r) {
        -top + rng.random::<f64>() * 2.0 * top
    } else {
        let side = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
        let t = 1.0 - (1.0 - rng.random::<f64>()).sqrt();
        side * (top + (b - top) * t)
    };
    Ok(v + z)
}

pub fn gw_perturb_batch(values: &[f64], shape: &WaveShape, seed: RngSeed) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| gw_perturb(v, shape, &mut seed.user_stream(i as u64)))
        .collect()
}

/// Column-stochastic matrix of report probabilities: entry `(j, i)` is the
/// probability that the report lands in output bucket `j` given an input
/// uniform within input bucket `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    d: usize,
    d_tilde: usize,
    /// Row-major `d_tilde x d`.
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_tilde(&self) -> usize {
        self.d_tilde
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.d + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.d];
        for j in 0..self.d_tilde {
            for (i, s) in sums.iter_mut().enumerate() {
                *s += self.get(j, i);
            }
        }
        sums
    }

    #[cfg(test)]
    pub(crate) fn from_raw(d: usize, d_tilde: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), d * d_tilde);
        Self { d, d_tilde, data }
    }
}

/// Transition matrix of the continuous square wave:
/// `M[j][i] = q |B~_j| + (p - q) / |B_i| * int_{B_i} overlap(v, B~_j) dv`,
/// with the overlap integral evaluated in closed form (the integrand is
/// piecewise linear in `v`).
pub fn build_transition_matrix(params: &SwParams, d: usize, d_tilde: usize) -> TransitionMatrix {
    let b = params.b();
    let in_width = 1.0 / d as f64;
    let out_width = (1.0 + 2.0 * b) / d_tilde as f64;
    let mut data = vec![0.0; d * d_tilde];
    for j in 0..d_tilde {
        let l = -b + j as f64 * out_width;
        let r = l + out_width;
        // overlap(v) = max(0, min(r, v+b) - max(l, v-b)) has kinks only here
        let kinks = [l - b, r - b, l + b, r + b];
        let overlap = |v: f64| (r.min(v + b) - l.max(v - b)).max(0.0);
        for i in 0..d {
            let a1 = i as f64 * in_width;
            let a2 = a1 + in_width;
            let mut cuts = vec![a1, a2];
            cuts.extend(kinks.iter().copied().filter(|&k| k > a1 && k < a2));
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut integral = 0.0;
            for w in cuts.windows(2) {
                // exact on each linear piece
                integral += (w[1] - w[0]) * 0.5 * (overlap(w[0]) + overlap(w[1]));
            }
            data[j * d + i] = params.q() * out_width + (params.p() - params.q()) * integral / in_width;
        }
    }
    TransitionMatrix { d, d_tilde, data }
}

/// Transition matrix of a general wave shape. The bucket probability given a
/// point input is `q |B~_j| + D(r_j - v) - D(l_j - v)` with `D` the bump CDF;
/// averaging over the input bucket integrates a piecewise-quadratic function,
/// done exactly with two-point Gauss-Legendre on each smooth segment.
pub fn build_transition_matrix_gw(shape: &WaveShape, d: usize, d_tilde: usize) -> TransitionMatrix {
    let b = shape.b();
    let top = shape.kind().ratio() * b;
    let in_width = 1.0 / d as f64;
    let out_width = (1.0 + 2.0 * b) / d_tilde as f64;
    let knots = [-b, -top, top, b];
    // Gauss-Legendre 2-point abscissae on [-1, 1]
    let gl = 1.0 / 3.0f64.sqrt();
    let mut data = vec![0.0; d * d_tilde];
    for j in 0..d_tilde {
        let l = -b + j as f64 * out_width;
        let r = l + out_width;
        let point_prob = |v: f64| shape.q() * out_width + shape.bump_cdf(r - v) - shape.bump_cdf(l - v);
        for i in 0..d {
            let a1 = i as f64 * in_width;
            let a2 = a1 + in_width;
            let mut cuts = vec![a1, a2];
            for &k in &knots {
                for edge in [r - k, l - k] {
                    if edge > a1 && edge < a2 {
                        cuts.push(edge);
                    }
                }
            }
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut integral = 0.0;
            for w in cuts.windows(2) {
                let half = 0.5 * (w[1] - w[0]);
                let mid = 0.5 * (w[0] + w[1]);
                integral += half * (point_prob(mid - half * gl) + point_prob(mid + half * gl));
            }
            data[j * d + i] = integral / in_width;
        }
    }
    TransitionMatrix { d, d_tilde, data }
}
