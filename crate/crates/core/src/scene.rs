//! Problem dimensions, channel parameters, steering vectors and scenario
//! generation.
//!
//! All parameters are normalized to the unit torus `[0,1)³`. Measurements are
//! indexed as `j = m·N_r + a` with `m = p·M + (n+N)`: pulse-major, then
//! frequency sample, antenna innermost.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis2pi, kron, serde_complex, CMatrix, C64};

/// Number of separation resampling draws before giving up.
pub const SEPARATION_BUDGET: usize = 10_000;

const SUBSPACE_STREAM: u64 = 0x5eed_0001;

/// Problem dimensions.
///
/// `M = 2N+1` frequency samples per pulse, `P` pulses (or messages), `N_r`
/// antennas, subspace dimension `K`, `L` targets and `Q_c` paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DimsRepr", into = "DimsRepr")]
pub struct Dims {
    half_band: usize,
    pulses: usize,
    antennas: usize,
    subspace: usize,
    targets: usize,
    paths: usize,
}

#[derive(Serialize, Deserialize)]
struct DimsRepr {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(rename = "P")]
    p: usize,
    #[serde(rename = "N_r")]
    nr: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "Q_c")]
    qc: usize,
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    j: Option<usize>,
}

impl TryFrom<DimsRepr> for Dims {
    type Error = Error;

    fn try_from(r: DimsRepr) -> Result<Self> {
        let d = Dims::new(r.n, r.p, r.nr, r.k, r.l, r.qc)?;
        if r.m.is_some_and(|m| m != d.samples()) || r.j.is_some_and(|j| j != d.measurements()) {
            return Err(Error::InvalidDims("derived M or J disagree with N, P, N_r".into()));
        }
        Ok(d)
    }
}

impl From<Dims> for DimsRepr {
    fn from(d: Dims) -> Self {
        DimsRepr {
            n: d.half_band,
            m: Some(d.samples()),
            p: d.pulses,
            nr: d.antennas,
            k: d.subspace,
            l: d.targets,
            qc: d.paths,
            j: Some(d.measurements()),
        }
    }
}

/// Position of a measurement on the (pulse, frequency, antenna) grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub pulse: usize,
    /// Frequency index `n ∈ [−N, N]`.
    pub freq: isize,
    pub antenna: usize,
}

impl Dims {
    pub fn new(
        half_band: usize,
        pulses: usize,
        antennas: usize,
        subspace: usize,
        targets: usize,
        paths: usize,
    ) -> Result<Self> {
        if pulses == 0 || antennas == 0 || subspace == 0 {
            return Err(Error::InvalidDims("P, N_r and K must be at least 1".into()));
        }
        if targets + paths == 0 {
            return Err(Error::InvalidDims("need at least one target or path".into()));
        }
        Ok(Self { half_band, pulses, antennas, subspace, targets, paths })
    }

    /// Same as [`Dims::new`] but takes the (odd) sample count `M`.
    pub fn with_samples(
        samples: usize,
        pulses: usize,
        antennas: usize,
        subspace: usize,
        targets: usize,
        paths: usize,
    ) -> Result<Self> {
        if samples % 2 == 0 {
            return Err(Error::InvalidDims(format!("M = {samples} must be odd")));
        }
        Self::new(samples / 2, pulses, antennas, subspace, targets, paths)
    }

    pub fn half_band(&self) -> usize {
        self.half_band
    }
    /// `M`.
    pub fn samples(&self) -> usize {
        2 * self.half_band + 1
    }
    /// `P`.
    pub fn pulses(&self) -> usize {
        self.pulses
    }
    /// `N_r`.
    pub fn antennas(&self) -> usize {
        self.antennas
    }
    /// `K`.
    pub fn subspace(&self) -> usize {
        self.subspace
    }
    /// `L`.
    pub fn targets(&self) -> usize {
        self.targets
    }
    /// `Q_c`.
    pub fn paths(&self) -> usize {
        self.paths
    }
    /// `J = N_r·M·P`.
    pub fn measurements(&self) -> usize {
        self.antennas * self.samples() * self.pulses
    }
    /// Length of the stacked message coefficients, `P·K`.
    pub fn comms_len(&self) -> usize {
        self.pulses * self.subspace
    }

    pub fn with_channels(mut self, targets: usize, paths: usize) -> Result<Self> {
        if targets + paths == 0 {
            return Err(Error::InvalidDims("need at least one target or path".into()));
        }
        self.targets = targets;
        self.paths = paths;
        Ok(self)
    }

    #[inline]
    pub fn grid(&self, j: usize) -> GridPoint {
        let nr = self.antennas;
        let m = self.samples();
        let antenna = j % nr;
        let sample = j / nr;
        GridPoint { pulse: sample / m, freq: (sample % m) as isize - self.half_band as isize, antenna }
    }

    #[inline]
    pub fn flat(&self, pulse: usize, freq: isize, antenna: usize) -> usize {
        let row = (freq + self.half_band as isize) as usize;
        (pulse * self.samples() + row) * self.antennas + antenna
    }

    /// Row of `T` used by measurement `j` (`n + N`).
    #[inline]
    pub fn t_row(&self, j: usize) -> usize {
        (j / self.antennas) % self.samples()
    }

    /// Row of `D` used by measurement `j` (`m = p·M + n + N`).
    #[inline]
    pub fn d_row(&self, j: usize) -> usize {
        j / self.antennas
    }
}

/// Normalized (delay, Doppler, direction) triple on `[0,1)³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamTriple {
    pub tau: f64,
    pub nu: f64,
    pub beta: f64,
}

/// Reduce to `[0,1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Wrap-around distance on the unit circle, in `[0, 1/2]`.
#[inline]
pub fn torus_distance(a: f64, b: f64) -> f64 {
    let d = wrap_unit(a - b);
    d.min(1.0 - d)
}

impl ParamTriple {
    pub fn new(tau: f64, nu: f64, beta: f64) -> Self {
        Self { tau: wrap_unit(tau), nu: wrap_unit(nu), beta: wrap_unit(beta) }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.tau, self.nu, self.beta]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Wrap-around ℓ∞ distance.
    pub fn distance(&self, other: &ParamTriple) -> f64 {
        torus_distance(self.tau, other.tau)
            .max(torus_distance(self.nu, other.nu))
            .max(torus_distance(self.beta, other.beta))
    }
}

/// Atoms of one channel: parameter triples with the stored amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub triples: Vec<ParamTriple>,
    #[serde(with = "serde_complex::vec")]
    pub amps: Vec<C64>,
}

impl ChannelSpec {
    pub fn new(triples: Vec<ParamTriple>, amps: Vec<C64>) -> Result<Self> {
        if triples.len() != amps.len() {
            return Err(Error::Shape(format!("{} triples but {} amplitudes", triples.len(), amps.len())));
        }
        Ok(Self { triples, amps })
    }

    pub fn empty() -> Self {
        Self { triples: Vec::new(), amps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm()).sum()
    }
}

/// Ground truth of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub dims: Dims,
    pub radar: ChannelSpec,
    pub comms: ChannelSpec,
    /// Radar waveform coefficients, length `K`.
    #[serde(with = "serde_complex::vec")]
    pub v: Vec<C64>,
    /// Stacked message coefficients `u_1..u_P`, length `P·K`.
    #[serde(with = "serde_complex::vec")]
    pub u: Vec<C64>,
    pub seed: u64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if self.radar.len() != d.targets() || self.comms.len() != d.paths() {
            return Err(Error::Shape("channel atom counts disagree with L, Q_c".into()));
        }
        if self.radar.amps.len() != self.radar.len() || self.comms.amps.len() != self.comms.len() {
            return Err(Error::Shape("amplitude counts disagree with triple counts".into()));
        }
        if self.v.len() != d.subspace() || self.u.len() != d.comms_len() {
            return Err(Error::Shape("coefficient vector lengths disagree with K, P·K".into()));
        }
        Ok(())
    }
}

/// Known transformation matrices: `T` (`M×K`) and the diagonal blocks
/// `D_1..D_P` (each `M×K`) of the block-diagonal `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspaces {
    pub t: CMatrix,
    pub d_blocks: Vec<CMatrix>,
}

impl Subspaces {
    pub fn new(t: CMatrix, d_blocks: Vec<CMatrix>) -> Result<Self> {
        let (m, k) = (t.rows(), t.cols());
        if d_blocks.iter().any(|b| b.rows() != m || b.cols() != k) {
            return Err(Error::Shape("every D block must match the shape of T".into()));
        }
        Ok(Self { t, d_blocks })
    }

    pub fn samples(&self) -> usize {
        self.t.rows()
    }

    pub fn subspace(&self) -> usize {
        self.t.cols()
    }

    pub fn pulses(&self) -> usize {
        self.d_blocks.len()
    }

    /// Row `m = p·M + r` of `D`, restricted to its nonzero block `p`.
    #[inline]
    pub fn d_block_row(&self, m: usize) -> (usize, &[C64]) {
        let p = m / self.samples();
        (p, self.d_blocks[p].row(m % self.samples()))
    }

    /// Materialized `D`, `(M·P)×(P·K)`.
    pub fn d_full(&self) -> CMatrix {
        let (m, k, p) = (self.samples(), self.subspace(), self.pulses());
        let mut d = CMatrix::zeros(m * p, k * p);
        for (b, block) in self.d_blocks.iter().enumerate() {
            for r in 0..m {
                for c in 0..k {
                    d[(b * m + r, b * k + c)] = block[(r, c)];
                }
            }
        }
        d
    }

    pub fn check_dims(&self, dims: &Dims) -> Result<()> {
        if self.samples() != dims.samples() || self.subspace() != dims.subspace() || self.pulses() != dims.pulses() {
            return Err(Error::Shape(format!(
                "subspaces are {}×{} with {} blocks, dims want M={}, K={}, P={}",
                self.samples(),
                self.subspace(),
                self.pulses(),
                dims.samples(),
                dims.subspace(),
                dims.pulses()
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SubspacesRepr {
    t: CMatrix,
    d: CMatrix,
    #[serde(rename = "P")]
    pulses: usize,
}

impl Serialize for Subspaces {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SubspacesRepr { t: self.t.clone(), d: self.d_full(), pulses: self.pulses() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Subspaces {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = SubspacesRepr::deserialize(d)?;
        let (m, k, p) = (r.t.rows(), r.t.cols(), r.pulses);
        if r.d.rows() != m * p || r.d.cols() != k * p {
            return Err(D::Error::custom("D has the wrong shape"));
        }
        let mut blocks = vec![CMatrix::zeros(m, k); p];
        for i in 0..m * p {
            for j in 0..k * p {
                let z = r.d[(i, j)];
                if i / m == j / k {
                    blocks[i / m][(i % m, j % k)] = z;
                } else if z.norm() != 0.0 {
                    return Err(D::Error::custom("D is not block diagonal"));
                }
            }
        }
        Ok(Subspaces { t: r.t, d_blocks: blocks })
    }
}

/// Array response `b(β)[a] = e^{−i2π·a·β}`, `a = 0..N_r−1`.
pub fn steering_doa(beta: f64, antennas: usize) -> Vec<C64> {
    let beta = wrap_unit(beta);
    (0..antennas).map(|a| cis2pi(-phase_frac(a as f64 * beta))).collect()
}

/// Delay-Doppler response, entry `p·M + (n+N)` equal to `e^{−i2π(nτ + pν)}`.
pub fn steering_delay_doppler(tau: f64, nu: f64, dims: &Dims) -> Vec<C64> {
    let (tau, nu) = (wrap_unit(tau), wrap_unit(nu));
    let n_half = dims.half_band() as isize;
    let mut out = Vec::with_capacity(dims.samples() * dims.pulses());
    for p in 0..dims.pulses() {
        for n in -n_half..=n_half {
            out.push(cis2pi(-phase_frac(n as f64 * tau + p as f64 * nu)));
        }
    }
    out
}

/// Atom `w(r) = a(τ,ν) ⊗ b(β)`, length `J`.
pub fn atom_vector(r: &ParamTriple, dims: &Dims) -> Vec<C64> {
    kron(&steering_delay_doppler(r.tau, r.nu, dims), &steering_doa(r.beta, dims.antennas()))
}

/// Fractional part in `[-1/2, 1/2)`, keeps large phases accurate.
#[inline]
fn phase_frac(x: f64) -> f64 {
    x - x.round()
}

/// Pairwise wrap-around separation test: `|β_i−β_k| ≥ 5/N_r`,
/// `|ν_i−ν_k| ≥ 5/P` and `|τ_i−τ_k| ≥ 5/M` for all `i ≠ k`.
pub fn min_separation_ok(triples: &[ParamTriple], dims: &Dims) -> bool {
    let min_beta = 5.0 / dims.antennas() as f64;
    let min_nu = 5.0 / dims.pulses() as f64;
    let min_tau = 5.0 / dims.samples() as f64;
    triples.iter().enumerate().all(|(i, a)| {
        triples[i + 1..].iter().all(|b| {
            torus_distance(a.beta, b.beta) >= min_beta
                && torus_distance(a.nu, b.nu) >= min_nu
                && torus_distance(a.tau, b.tau) >= min_tau
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeMode {
    /// Unit modulus, uniform phase.
    #[default]
    Unit,
    /// Standard circularly-symmetric complex normal.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub dims: Dims,
    #[serde(default)]
    pub amplitude: AmplitudeMode,
    /// Resample each channel's triples until [`min_separation_ok`] holds.
    #[serde(default)]
    pub separation: bool,
    pub seed: u64,
    /// Fixed radar triples instead of sampled ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radar_triples: Option<Vec<ParamTriple>>,
    /// Fixed communications triples instead of sampled ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comms_triples: Option<Vec<ParamTriple>>,
}

impl SceneConfig {
    pub fn new(dims: Dims, seed: u64) -> Self {
        Self { dims, amplitude: AmplitudeMode::Unit, separation: false, seed, radar_triples: None, comms_triples: None }
    }
}

fn complex_normal(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn unit_normalized(rng: &mut impl Rng, len: usize) -> Vec<C64> {
    let mut x: Vec<C64> = (0..len).map(|_| complex_normal(rng)).collect();
    let n = crate::linalg::norm2(&x);
    x.iter_mut().for_each(|z| *z /= n);
    x
}

fn draw_triples(rng: &mut impl Rng, count: usize, dims: &Dims, separated: bool) -> Result<Vec<ParamTriple>> {
    for _ in 0..SEPARATION_BUDGET {
        let t: Vec<ParamTriple> = (0..count)
            .map(|_| {
                let tau = rng.random::<f64>();
                let nu = rng.random::<f64>();
                let beta = rng.random::<f64>();
                ParamTriple::new(tau, nu, beta)
            })
            .collect();
        if !separated || min_separation_ok(&t, dims) {
            return Ok(t);
        }
    }
    Err(Error::SeparationBudgetExhausted { attempts: SEPARATION_BUDGET })
}

/// Draws a scene. Deterministic under `cfg.seed`.
pub fn sample_scene(cfg: &SceneConfig) -> Result<Scene> {
    let dims = cfg.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let channel = |fixed: &Option<Vec<ParamTriple>>, count: usize, rng: &mut ChaCha8Rng| {
        let triples = match fixed {
            Some(t) if t.len() != count => {
                return Err(Error::Shape(format!("{} fixed triples, expected {count}", t.len())))
            }
            Some(t) => t.iter().map(|r| ParamTriple::new(r.tau, r.nu, r.beta)).collect(),
            None => draw_triples(rng, count, &dims, cfg.separation)?,
        };
        let amps = (0..count)
            .map(|_| match cfg.amplitude {
                AmplitudeMode::Unit => cis2pi(rng.random::<f64>()),
                AmplitudeMode::Gaussian => complex_normal(rng),
            })
            .collect();
        ChannelSpec::new(triples, amps)
    };
    let radar = channel(&cfg.radar_triples, dims.targets(), &mut rng)?;
    let comms = channel(&cfg.comms_triples, dims.paths(), &mut rng)?;
    let v = unit_normalized(&mut rng, dims.subspace());
    let u = unit_normalized(&mut rng, dims.comms_len());
    Ok(Scene { dims, radar, comms, v, u, seed: cfg.seed })
}

/// Random subspace matrices with rows `t_nᴴ`, `t_n = [1, e^{i2πσ_n}, …,
/// e^{i2π(K−1)σ_n}]`, `σ_n ~ N(0,1)`; each `D_p` drawn the same way.
pub fn make_subspaces(dims: &Dims, seed: u64) -> Subspaces {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SUBSPACE_STREAM);
    let (m, k) = (dims.samples(), dims.subspace());
    let block = |rng: &mut ChaCha8Rng| {
        let sigma: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        CMatrix::from_fn(m, k, |n, c| cis2pi(-phase_frac(c as f64 * sigma[n])))
    };
    let t = block(&mut rng);
    let d_blocks = (0..dims.pulses()).map(|_| block(&mut rng)).collect();
    Subspaces { t, d_blocks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, norm2};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn dims(m: usize, p: usize, nr: usize) -> Dims {
        Dims::with_samples(m, p, nr, 2, 1, 1).unwrap()
    }

    #[test]
    fn doa_examples() {
        assert!(max_abs_diff(&steering_doa(0.0, 3), &[c(1., 0.); 3]) < 1e-15);
        assert!(max_abs_diff(&steering_doa(0.5, 2), &[c(1., 0.), c(-1., 0.)]) < 1e-15);
        let want = [c(1., 0.), c(0., -1.), c(-1., 0.), c(0., 1.)];
        assert!(max_abs_diff(&steering_doa(0.25, 4), &want) < 1e-15);
    }

    #[test]
    fn delay_doppler_examples() {
        let d = dims(3, 2, 1);
        assert!(max_abs_diff(&steering_delay_doppler(0.0, 0.0, &d), &[c(1., 0.); 6]) < 1e-15);
        let d = dims(3, 1, 1);
        let want = [c(-1., 0.), c(1., 0.), c(-1., 0.)];
        assert!(max_abs_diff(&steering_delay_doppler(0.5, 0.0, &d), &want) < 1e-15);
    }

    #[test]
    fn delay_doppler_matches_direct_loop() {
        let d = dims(7, 4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (tau, nu): (f64, f64) = (rng.random(), rng.random());
            let got = steering_delay_doppler(tau, nu, &d);
            let mut want = Vec::new();
            for p in 0..4 {
                for n in -3i32..=3 {
                    let ph = -std::f64::consts::TAU * (n as f64 * tau + p as f64 * nu);
                    want.push(C64::from_polar(1.0, ph));
                }
            }
            assert!(max_abs_diff(&got, &want) < 1e-12);
        }
    }

    #[test]
    fn atom_matches_per_entry_formula() {
        let d = dims(5, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let r = ParamTriple::new(rng.random(), rng.random(), rng.random());
            let w = atom_vector(&r, &d);
            assert!((norm2(&w).powi(2) - d.measurements() as f64).abs() < 1e-9);
            for (j, wj) in w.iter().enumerate() {
                let g = d.grid(j);
                let ph = -std::f64::consts::TAU
                    * (g.freq as f64 * r.tau + g.pulse as f64 * r.nu + g.antenna as f64 * r.beta);
                assert!((wj - C64::from_polar(1.0, ph)).norm() < 1e-12);
            }
        }
        let ones = atom_vector(&ParamTriple::new(0., 0., 0.), &d);
        assert!(ones.iter().all(|z| (z - c(1., 0.)).norm() < 1e-15));
    }

    #[test]
    fn grid_and_flat_are_inverse() {
        let d = dims(5, 3, 2);
        for j in 0..d.measurements() {
            let g = d.grid(j);
            assert_eq!(d.flat(g.pulse, g.freq, g.antenna), j);
            assert_eq!(d.d_row(j), g.pulse * 5 + (g.freq + 2) as usize);
            assert_eq!(d.t_row(j), (g.freq + 2) as usize);
        }
    }

    #[test]
    fn separation_examples() {
        // M must be odd, so M = 11 stands in for 10: 5/11 still exceeds the 0.4 gap.
        let d = Dims::with_samples(11, 10, 10, 1, 2, 1).unwrap();
        let a = ParamTriple::new(0.1, 0.1, 0.1);
        assert!(min_separation_ok(&[a], &d));
        assert!(!min_separation_ok(&[a, a], &d));
        assert!(!min_separation_ok(&[a, ParamTriple::new(0.7, 0.7, 0.7)], &d));
        assert!(min_separation_ok(&[a, ParamTriple::new(0.6, 0.6, 0.6)], &d));
        assert!(!min_separation_ok(&[a, ParamTriple::new(0.6, 0.6, 0.35)], &d));
    }

    #[test]
    fn scene_is_deterministic_and_normalized() {
        let cfg = SceneConfig::new(Dims::with_samples(5, 3, 2, 3, 2, 2).unwrap(), 42);
        let a = sample_scene(&cfg).unwrap();
        let b = sample_scene(&cfg).unwrap();
        assert_eq!(a, b);
        assert!((norm2(&a.v) - 1.0).abs() < 1e-12);
        assert!((norm2(&a.u) - 1.0).abs() < 1e-12);
        for z in a.radar.amps.iter().chain(&a.comms.amps) {
            assert!((z.norm() - 1.0).abs() < 1e-15);
        }
        let other = sample_scene(&SceneConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn gaussian_amplitudes_are_not_unit() {
        let mut cfg = SceneConfig::new(Dims::with_samples(5, 3, 2, 3, 4, 4).unwrap(), 1);
        cfg.amplitude = AmplitudeMode::Gaussian;
        let s = sample_scene(&cfg).unwrap();
        assert!(s.radar.amps.iter().any(|z| (z.norm() - 1.0).abs() > 1e-3));
    }

    #[test]
    fn separated_sampling() {
        let mut cfg = SceneConfig::new(Dims::with_samples(13, 13, 13, 2, 2, 2).unwrap(), 9);
        cfg.separation = true;
        let s = sample_scene(&cfg).unwrap();
        assert!(min_separation_ok(&s.radar.triples, &cfg.dims));
        assert!(min_separation_ok(&s.comms.triples, &cfg.dims));
    }

    #[test]
    fn separation_impossible_at_small_dims() {
        // 5/N_r > 1/2 cannot be met by two atoms on the circle.
        let mut cfg = SceneConfig::new(Dims::with_samples(9, 9, 3, 3, 2, 2).unwrap(), 0);
        cfg.separation = true;
        assert!(matches!(sample_scene(&cfg), Err(Error::SeparationBudgetExhausted { .. })));
    }

    #[test]
    fn injected_triples_are_kept() {
        let mut cfg = SceneConfig::new(Dims::with_samples(5, 3, 2, 3, 1, 1).unwrap(), 0);
        cfg.radar_triples = Some(vec![ParamTriple::new(0.25, 0.5, 0.75)]);
        let s = sample_scene(&cfg).unwrap();
        assert_eq!(s.radar.triples[0], ParamTriple::new(0.25, 0.5, 0.75));
        cfg.radar_triples = Some(vec![]);
        assert!(sample_scene(&cfg).is_err());
    }

    #[test]
    fn subspace_structure() {
        let d = Dims::with_samples(5, 3, 2, 3, 1, 1).unwrap();
        let s = make_subspaces(&d, 7);
        assert_eq!(s, make_subspaces(&d, 7));
        for z in s.t.as_slice().iter().chain(s.d_blocks.iter().flat_map(|b| b.as_slice())) {
            assert!((z.norm() - 1.0).abs() < 1e-14);
        }
        let full = s.d_full();
        for i in 0..full.rows() {
            for j in 0..full.cols() {
                if i / 5 != j / 3 {
                    assert_eq!(full[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
        let d1 = Dims::with_samples(5, 3, 2, 1, 1, 1).unwrap();
        let s1 = make_subspaces(&d1, 7);
        assert!(s1.t.as_slice().iter().all(|z| *z == c(1., 0.)));
    }

    #[test]
    fn json_roundtrip() {
        let d = Dims::with_samples(3, 2, 2, 2, 1, 1).unwrap();
        let sub = make_subspaces(&d, 1);
        let back: Subspaces = serde_json::from_str(&serde_json::to_string(&sub).unwrap()).unwrap();
        assert_eq!(back, sub);
        let scene = sample_scene(&SceneConfig::new(d, 5)).unwrap();
        let text = serde_json::to_string(&scene).unwrap();
        assert!(text.contains("\"M\":3") && text.contains("\"J\":12"));
        assert_eq!(serde_json::from_str::<Scene>(&text).unwrap(), scene);
    }

    proptest! {
        #[test]
        fn atoms_are_periodic_and_unit_modulus(tau in 0.0f64..1.0, nu in 0.0f64..1.0, beta in 0.0f64..1.0) {
            let d = dims(5, 3, 2);
            let w = atom_vector(&ParamTriple { tau, nu, beta }, &d);
            prop_assert!(w.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
            let shifted = atom_vector(&ParamTriple { tau: tau + 1.0, nu: nu - 1.0, beta: beta + 2.0 }, &d);
            prop_assert!(max_abs_diff(&w, &shifted) < 1e-12);
        }

        #[test]
        fn delay_doppler_factorizes(tau in 0.0f64..1.0, nu in 0.0f64..1.0) {
            let d = dims(7, 4, 1);
            let doppler: Vec<C64> = (0..4).map(|p| cis2pi(-(p as f64) * nu)).collect();
            let delay: Vec<C64> = (-3i32..=3).map(|n| cis2pi(-(n as f64) * tau)).collect();
            prop_assert!(max_abs_diff(&steering_delay_doppler(tau, nu, &d), &kron(&doppler, &delay)) < 1e-12);
        }
    }
}
