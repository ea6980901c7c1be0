//! Counter-based random streams addressed by tree indices.
//!
//! Every random object consumed by the Picard recursion (time fractions,
//! Brownian increments, Poisson counts and jump marks) is a pure function of
//! `(master_seed, theta, purpose, counter)`. A stream key is derived once per
//! `(master_seed, theta, purpose)` with SipHash-1-3 (128-bit output, fixed
//! keys, little-endian encoding), and each draw is SipHash-1-3 keyed by that
//! stream key applied to the counter. Nothing is stateful, so draws can be
//! replayed in any order and from any thread.
//!
//! Gaussians use the Box-Muller cosine branch on two consecutive counters;
//! uniforms are mapped to the open interval `(0, 1)` from the top 53 bits.

use std::fmt;
use std::hash::Hasher;

use serde::{Deserialize, Serialize};
use siphasher::sip::SipHasher13;
use siphasher::sip128::{Hasher128, SipHasher13 as SipHasher13x128};

use crate::error::{Error, Result};
use crate::model::LevySpec;

const KEY_SALT: (u64, u64) = (0x7069_6361_7264_2d31, 0x6d6c_702d_7468_6574);

/// Address of one independent copy of all randomness in the recursion tree.
///
/// The root is `(0)`; children append pairs such as `(l, i)`, `(0, -i)` or
/// `(-l, i)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThetaIndex(Vec<i64>);

impl ThetaIndex {
    pub fn root() -> Self {
        ThetaIndex(vec![0])
    }

    pub fn new(path: Vec<i64>) -> Result<Self> {
        if path.is_empty() {
            return Err(Error::invalid("theta index needs at least one entry"));
        }
        Ok(ThetaIndex(path))
    }

    /// Appends the pair `(a, b)`.
    pub fn child(&self, a: i64, b: i64) -> Self {
        let mut path = Vec::with_capacity(self.0.len() + 2);
        path.extend_from_slice(&self.0);
        path.push(a);
        path.push(b);
        ThetaIndex(path)
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ThetaIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for ThetaIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Theta{self}")
    }
}

impl std::str::FromStr for ThetaIndex {
    type Err = Error;

    /// Parses `0,1,-2` or `(0,1,-2)`.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let path = inner
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<i64>()
                    .map_err(|e| Error::invalid(format!("bad theta entry `{p}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ThetaIndex::new(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    TimeFraction,
    Gaussian,
    PoissonCount,
    JumpMark,
}

impl Purpose {
    fn tag(self) -> u8 {
        match self {
            Purpose::TimeFraction => 1,
            Purpose::Gaussian => 2,
            Purpose::PoissonCount => 3,
            Purpose::JumpMark => 4,
        }
    }
}

impl std::str::FromStr for Purpose {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "time_fraction" | "time" => Ok(Purpose::TimeFraction),
            "gaussian" => Ok(Purpose::Gaussian),
            "poisson_count" | "poisson" => Ok(Purpose::PoissonCount),
            "jump_mark" | "mark" => Ok(Purpose::JumpMark),
            other => Err(Error::invalid(format!("unknown stream purpose `{other}`"))),
        }
    }
}

/// One `(master_seed, theta, purpose)` stream. Cheap to copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    key: (u64, u64),
}

impl RngStream {
    pub fn new(master_seed: u64, theta: &ThetaIndex, purpose: Purpose) -> Self {
        let mut h = SipHasher13x128::new_with_keys(KEY_SALT.0, KEY_SALT.1);
        h.write(&master_seed.to_le_bytes());
        h.write(&(theta.len() as u64).to_le_bytes());
        for v in theta.as_slice() {
            h.write(&v.to_le_bytes());
        }
        h.write(&[purpose.tag()]);
        let out = h.finish128();
        RngStream {
            key: (out.h1, out.h2),
        }
    }

    /// Raw 64 bits at `counter`.
    pub fn bits(&self, counter: u64) -> u64 {
        let mut h = SipHasher13::new_with_keys(self.key.0, self.key.1);
        h.write(&counter.to_le_bytes());
        h.finish()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&self, counter: u64) -> f64 {
        bits_to_open_unit(self.bits(counter))
    }

    /// Standard normal built from the bit draws at `2 * counter` and
    /// `2 * counter + 1`.
    pub fn gaussian(&self, counter: u64) -> f64 {
        let c = counter.wrapping_mul(2);
        box_muller(self.bits(c), self.bits(c.wrapping_add(1)))
    }
}

fn bits_to_open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

fn box_muller(b1: u64, b2: u64) -> f64 {
    let u1 = bits_to_open_unit(b1);
    let u2 = bits_to_open_unit(b2);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Sequential draws for the marks of one trajectory segment.
///
/// Counters live in `[segment << 32, (segment + 1) << 32)` of the
/// `JumpMark` stream, so different segments never share a draw.
#[derive(Debug, Clone)]
pub struct MarkDraws {
    stream: RngStream,
    base: u64,
    next: u64,
}

impl MarkDraws {
    pub fn new(stream: RngStream, segment_index: usize) -> Self {
        MarkDraws {
            stream,
            base: (segment_index as u64) << 32,
            next: 0,
        }
    }

    pub fn next_uniform(&mut self) -> f64 {
        let u = self.stream.uniform(self.base + self.next);
        self.next += 1;
        u
    }

    pub fn next_gaussian(&mut self) -> f64 {
        let b1 = self.stream.bits(self.base + self.next);
        let b2 = self.stream.bits(self.base + self.next + 1);
        self.next += 2;
        box_muller(b1, b2)
    }
}

/// The four streams owned by one theta.
#[derive(Debug, Clone, Copy)]
pub struct ThetaStreams {
    pub time: RngStream,
    pub gaussian: RngStream,
    pub poisson: RngStream,
    pub mark: RngStream,
}

impl ThetaStreams {
    pub fn new(master_seed: u64, theta: &ThetaIndex) -> Self {
        ThetaStreams {
            time: RngStream::new(master_seed, theta, Purpose::TimeFraction),
            gaussian: RngStream::new(master_seed, theta, Purpose::Gaussian),
            poisson: RngStream::new(master_seed, theta, Purpose::PoissonCount),
            mark: RngStream::new(master_seed, theta, Purpose::JumpMark),
        }
    }

    pub fn time_fraction(&self) -> f64 {
        self.time.uniform(0)
    }

    /// Writes `d` independent `N(0, dt)` coordinates for `segment_index`.
    pub fn gaussian_increment_into(&self, segment_index: usize, dt: f64, out: &mut [f64]) {
        let d = out.len() as u64;
        let scale = dt.sqrt();
        let base = segment_index as u64 * d;
        for (j, o) in out.iter_mut().enumerate() {
            *o = scale * self.gaussian.gaussian(base + j as u64);
        }
    }

    pub fn poisson_marks(
        &self,
        segment_index: usize,
        dt: f64,
        levy: &LevySpec,
    ) -> Result<Vec<Vec<f64>>> {
        let count = poisson_count(&self.poisson, segment_index, levy.intensity() * dt)?;
        let mut draws = MarkDraws::new(self.mark, segment_index);
        Ok((0..count)
            .map(|_| levy.sampler().sample(&mut draws))
            .collect())
    }
}

const POISSON_CHUNK_MEAN: f64 = 256.0;
const POISSON_MAX_CHUNKS: u64 = 1 << 16;

/// Poisson count by CDF inversion. Large means are split into independent
/// chunks of mean at most 256 so that `exp(-mean)` never underflows.
fn poisson_count(stream: &RngStream, segment_index: usize, mean: f64) -> Result<u64> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(Error::invalid(format!("poisson mean {mean} is not valid")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let chunks = (mean / POISSON_CHUNK_MEAN).ceil().max(1.0) as u64;
    if chunks > POISSON_MAX_CHUNKS {
        return Err(Error::invalid(format!(
            "poisson mean {mean} exceeds the supported range"
        )));
    }
    let per = mean / chunks as f64;
    let base = (segment_index as u64) << 16;
    let mut total = 0;
    for c in 0..chunks {
        let u = stream.uniform(base + c);
        let mut p = (-per).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u > cdf && p > 0.0 {
            k += 1;
            p *= per / k as f64;
            cdf += p;
        }
        total += k;
    }
    Ok(total)
}

/// Uniform time fraction owned by `theta`.
pub fn sample_time_fraction(master_seed: u64, theta: &ThetaIndex) -> f64 {
    RngStream::new(master_seed, theta, Purpose::TimeFraction).uniform(0)
}

/// `t + (T - t) * fraction`.
pub fn random_time(t: f64, fraction: f64, horizon: f64) -> f64 {
    t + (horizon - t) * fraction
}

pub fn gaussian_increment(
    master_seed: u64,
    theta: &ThetaIndex,
    segment_index: usize,
    dt: f64,
    d: usize,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("increment length must be positive, got {dt}")));
    }
    let mut out = vec![0.0; d];
    ThetaStreams::new(master_seed, theta).gaussian_increment_into(segment_index, dt, &mut out);
    Ok(out)
}

pub fn poisson_segment(
    master_seed: u64,
    theta: &ThetaIndex,
    segment_index: usize,
    dt: f64,
    levy: &LevySpec,
) -> Result<Vec<Vec<f64>>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("segment length must be positive, got {dt}")));
    }
    ThetaStreams::new(master_seed, theta).poisson_marks(segment_index, dt, levy)
}

/// First `count` draws of one stream, for cross-implementation comparison.
/// Gaussian streams report standard normals, the others uniforms.
pub fn dump_stream(
    master_seed: u64,
    theta: &ThetaIndex,
    purpose: Purpose,
    count: usize,
) -> Vec<(u64, u64, f64)> {
    let stream = RngStream::new(master_seed, theta, purpose);
    (0..count as u64)
        .map(|c| {
            let value = match purpose {
                Purpose::Gaussian => stream.gaussian(c),
                _ => stream.uniform(c),
            };
            (c, stream.bits(c), value)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GaussianMarks, LevySpec};
    use std::sync::Arc;

    fn sibling(k: i64) -> ThetaIndex {
        ThetaIndex::new(vec![0, k]).unwrap()
    }

    #[test]
    fn time_fraction_is_deterministic() {
        let th = ThetaIndex::root().child(3, -7);
        assert_eq!(
            sample_time_fraction(11, &th).to_bits(),
            sample_time_fraction(11, &th).to_bits()
        );
        assert_ne!(sample_time_fraction(11, &th), sample_time_fraction(12, &th));
    }

    #[test]
    fn time_fraction_moments() {
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|k| sample_time_fraction(5, &sibling(k))).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let cdf = draws.iter().filter(|&&u| u <= 0.25).count() as f64 / n as f64;
        assert!((mean - 0.5).abs() <= 0.005, "mean {mean}");
        assert!((cdf - 0.25).abs() <= 0.005, "cdf {cdf}");
        assert!(draws.iter().all(|&u| u > 0.0 && u < 1.0));
    }

    #[test]
    fn random_time_formula() {
        assert_eq!(random_time(0.0, 1.0, 2.0), 2.0);
        assert_eq!(random_time(1.5, 0.3, 1.5), 1.5);
        assert!((random_time(0.5, 0.25, 1.5) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gaussian_increment_statistics() {
        let n = 100_000;
        let dt = 0.3;
        let mut s0 = 0.0;
        let mut s01 = 0.0;
        for k in 0..n {
            let v = gaussian_increment(9, &sibling(k), 0, dt, 2).unwrap();
            s0 += v[0] * v[0];
            s01 += v[0] * v[1];
        }
        let var = s0 / n as f64;
        let cov = s01 / n as f64;
        assert!((var - dt).abs() <= 0.01 * dt, "var {var}");
        assert!(cov.abs() <= 0.01, "cov {cov}");
    }

    #[test]
    fn gaussian_increment_rejects_nonpositive_dt() {
        assert!(gaussian_increment(1, &ThetaIndex::root(), 0, 0.0, 2).is_err());
        assert!(gaussian_increment(1, &ThetaIndex::root(), 0, -1.0, 2).is_err());
    }

    #[test]
    fn sibling_decorrelation() {
        let n = 10_000;
        let a: Vec<f64> = (0..n)
            .map(|k| gaussian_increment(3, &sibling(2 * k), 0, 1.0, 1).unwrap()[0])
            .collect();
        let b: Vec<f64> = (0..n)
            .map(|k| gaussian_increment(3, &sibling(2 * k + 1), 0, 1.0, 1).unwrap()[0])
            .collect();
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        assert!(corr.abs() <= 0.05, "corr {corr}");
    }

    fn levy(rate: f64) -> LevySpec {
        LevySpec::new(
            rate,
            Arc::new(GaussianMarks::new(vec![0.0], 1.0)),
            vec![0.0],
            rate,
        )
        .unwrap()
    }

    #[test]
    fn poisson_segment_counts() {
        assert!((0..100)
            .all(|k| poisson_segment(1, &sibling(k), 0, 0.5, &LevySpec::none(1)).unwrap().is_empty()));
        let lv = levy(2.0);
        let n = 100_000;
        let total: usize = (0..n)
            .map(|k| poisson_segment(4, &sibling(k), 0, 0.5, &lv).unwrap().len())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 1.0).abs() <= 0.01, "mean {mean}");
        let a = poisson_segment(4, &sibling(17), 3, 0.5, &lv).unwrap();
        let b = poisson_segment(4, &sibling(17), 3, 0.5, &lv).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn large_poisson_mean_is_chunked() {
        let stream = RngStream::new(1, &ThetaIndex::root(), Purpose::PoissonCount);
        let n = 2000;
        let mean = (0..n)
            .map(|s| poisson_count(&stream, s, 1000.0).unwrap() as f64)
            .sum::<f64>()
            / n as f64;
        // sd of the mean is sqrt(1000 / 2000) ~ 0.71
        assert!((mean - 1000.0).abs() < 3.0, "mean {mean}");
    }

    #[test]
    fn replay_in_any_order() {
        let th = ThetaIndex::root().child(1, 2);
        let forward: Vec<u64> = (0..64).map(|c| RngStream::new(8, &th, Purpose::Gaussian).bits(c)).collect();
        let backward: Vec<u64> = (0..64)
            .rev()
            .map(|c| RngStream::new(8, &th, Purpose::Gaussian).bits(c))
            .collect();
        let mut backward = backward;
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn purposes_are_separate_streams() {
        let th = ThetaIndex::root();
        let a = RngStream::new(1, &th, Purpose::Gaussian).bits(0);
        let b = RngStream::new(1, &th, Purpose::JumpMark).bits(0);
        assert_ne!(a, b);
    }

    #[test]
    fn child_encoding_is_injective() {
        let root = ThetaIndex::root();
        let mut seen = std::collections::HashSet::new();
        for l in 0..4i64 {
            for i in 1..=5i64 {
                assert!(seen.insert(root.child(l, i)));
                if l >= 1 {
                    assert!(seen.insert(root.child(-l, i)));
                }
            }
        }
        for i in 1..=5i64 {
            assert!(seen.insert(root.child(0, -i)));
        }
        assert_eq!(seen.len(), 4 * 5 + 3 * 5 + 5);
    }

    #[test]
    fn theta_parses_and_prints() {
        let th: ThetaIndex = "(0,1,-2)".parse().unwrap();
        assert_eq!(th.as_slice(), &[0, 1, -2]);
        assert_eq!(th.to_string(), "(0,1,-2)");
        assert!("".parse::<ThetaIndex>().is_err());
    }
}
