//! The two Bellman functions on `Omega_Q = {0 < xy <= Q}`, their tangent
//! remainders, sampled certificates of the remainder inequalities, and the
//! telescoping along a tree that turns them into packing bounds.
//!
//! Remainders are evaluated in a cancellation-free form. With `a = (y0/x0)^{1/2}`,
//! `D = dx dy`, `L = y0 dx + x0 dy` and `p0 = x0 y0`:
//!
//! * remainder of `(xy)^{1/2}` is `R = (a^{1/2} x^{1/2} - a^{-1/2} y^{1/2})^2 / 2`,
//! * remainder of `-xy` is `D`,
//! * remainder of `-(xy)^2` is `2 p0 D + (L + D)^2`.

use rayon::prelude::*;
use serde::Serialize;

use crate::carleson::{rho_sequence, tau_sequence};
use crate::error::{HaarError, Result};
use crate::filtration::{AtomId, Filtration, Measure};
use crate::marttools::{a2_characteristic, Weight};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BellmanKind {
    /// `4 Q^{1/2} (xy)^{1/2} - xy`.
    B1,
    /// `128 Q^{3/2} (xy)^{1/2} - (xy)^2`.
    B2,
}

impl BellmanKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "B1" => Ok(BellmanKind::B1),
            "B2" => Ok(BellmanKind::B2),
            _ => Err(HaarError::InvalidParameter(format!("unknown Bellman function `{s}`"))),
        }
    }

    /// Upper end of the range on `Omega_Q`.
    pub fn range_cap(self, q: f64) -> f64 {
        match self {
            BellmanKind::B1 => 4.0 * q,
            BellmanKind::B2 => 128.0 * q * q,
        }
    }

    fn sqrt_coefficient(self, q: f64) -> f64 {
        match self {
            BellmanKind::B1 => 4.0 * q.sqrt(),
            BellmanKind::B2 => 128.0 * q.powf(1.5),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BellmanPoint {
    pub x: f64,
    pub y: f64,
}

impl BellmanPoint {
    pub fn new(x: f64, y: f64) -> Self {
        BellmanPoint { x, y }
    }

    fn check(self) -> Result<Self> {
        if self.x > 0.0 && self.y > 0.0 && self.x.is_finite() && self.y.is_finite() {
            Ok(self)
        } else {
            Err(HaarError::DomainError { x: self.x, y: self.y })
        }
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(HaarError::InvalidParameter(format!("Q must be >= 1, got {q}")));
    }
    Ok(())
}

pub fn bellman_eval(kind: BellmanKind, q: f64, p: BellmanPoint) -> Result<f64> {
    let p = p.check()?;
    let xy = p.x * p.y;
    Ok(match kind {
        BellmanKind::B1 => kind.sqrt_coefficient(q) * xy.sqrt() - xy,
        BellmanKind::B2 => kind.sqrt_coefficient(q) * xy.sqrt() - xy * xy,
    })
}

pub fn bellman_gradient(kind: BellmanKind, q: f64, p: BellmanPoint) -> Result<(f64, f64)> {
    let p = p.check()?;
    let half = 0.5 * kind.sqrt_coefficient(q);
    let (sx, sy) = (half * (p.y / p.x).sqrt(), half * (p.x / p.y).sqrt());
    Ok(match kind {
        BellmanKind::B1 => (sx - p.y, sy - p.x),
        BellmanKind::B2 => (sx - 2.0 * p.x * p.y * p.y, sy - 2.0 * p.x * p.x * p.y),
    })
}

/// `B(X0) - B(X) + grad B(X0) . (X - X0)` evaluated literally.
pub fn tangent_remainder_naive(kind: BellmanKind, q: f64, x0: BellmanPoint, x: BellmanPoint) -> Result<f64> {
    let (gx, gy) = bellman_gradient(kind, q, x0)?;
    Ok(bellman_eval(kind, q, x0)? - bellman_eval(kind, q, x)? + gx * (x.x - x0.x) + gy * (x.y - x0.y))
}

/// Remainder of `(xy)^{1/2}` at `X0`; nonnegative by construction.
pub fn sqrt_remainder(x0: BellmanPoint, x: BellmanPoint) -> f64 {
    let a = (x0.y / x0.x).sqrt();
    let d = (a * x.x).sqrt() - (x.y / a).sqrt();
    0.5 * d * d
}

/// `B(X0) - B(X) + grad B(X0) . (X - X0)` in cancellation-free form.
pub fn tangent_remainder(kind: BellmanKind, q: f64, x0: BellmanPoint, x: BellmanPoint) -> Result<f64> {
    let (x0, x) = (x0.check()?, x.check()?);
    let (dx, dy) = (x.x - x0.x, x.y - x0.y);
    let d = dx * dy;
    let r = kind.sqrt_coefficient(q) * sqrt_remainder(x0, x);
    Ok(match kind {
        BellmanKind::B1 => r + d,
        BellmanKind::B2 => {
            let p0 = x0.x * x0.y;
            let l = x0.y * dx + x0.x * dy;
            r + 2.0 * p0 * d + (l + d) * (l + d)
        }
    })
}

/// Right-hand side of the remainder inequality: `|dx| |dy|` for `B1`,
/// `y y0 dx^2 + x x0 dy^2` for `B2`.
pub fn remainder_scale(kind: BellmanKind, x0: BellmanPoint, x: BellmanPoint) -> f64 {
    let (dx, dy) = (x.x - x0.x, x.y - x0.y);
    match kind {
        BellmanKind::B1 => (dx * dy).abs(),
        BellmanKind::B2 => x.y * x0.y * dx * dx + x.x * x0.x * dy * dy,
    }
}

// ---------------------------------------------------------------------------
// Regions of sample pairs

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// `dx dy >= 0`.
    SameSign,
    /// `dx dy < 0` (all such pairs; used for `B1`).
    Opposite,
    /// `dx dy < 0` outside the hard case, where `x(t) y(t) <= 4Q` on the segment.
    OppositeModerate,
    /// `dx / x0 >= 3` and `-dy / y0 >= 1/2`, or the same with `x`, `y` swapped.
    Hard,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::SameSign => "same-sign",
            Region::Opposite => "opposite",
            Region::OppositeModerate => "opposite-moderate",
            Region::Hard => "hard",
        }
    }

    pub fn for_kind(kind: BellmanKind) -> &'static [Region] {
        match kind {
            BellmanKind::B1 => &[Region::SameSign, Region::Opposite],
            BellmanKind::B2 => &[Region::SameSign, Region::OppositeModerate, Region::Hard],
        }
    }
}

fn is_hard(x0: BellmanPoint, x: BellmanPoint) -> bool {
    let (rx, ry) = ((x.x - x0.x) / x0.x, (x.y - x0.y) / x0.y);
    (rx >= 3.0 && -ry >= 0.5) || (ry >= 3.0 && -rx >= 0.5)
}

/// The region a pair belongs to for the given function.
pub fn classify(kind: BellmanKind, x0: BellmanPoint, x: BellmanPoint) -> Region {
    let d = (x.x - x0.x) * (x.y - x0.y);
    if d >= 0.0 {
        return Region::SameSign;
    }
    match kind {
        BellmanKind::B1 => Region::Opposite,
        BellmanKind::B2 if is_hard(x0, x) => Region::Hard,
        BellmanKind::B2 => Region::OppositeModerate,
    }
}

/// `max_{t in [0,1]} x(t) y(t)` on the segment from `X0` to `X`.
pub fn segment_product_max(x0: BellmanPoint, x: BellmanPoint) -> f64 {
    let (dx, dy) = (x.x - x0.x, x.y - x0.y);
    let value = |t: f64| (x0.x + t * dx) * (x0.y + t * dy);
    let mut best = value(0.0).max(value(1.0));
    let a = dx * dy;
    if a < 0.0 {
        let t = -(x0.x * dy + x0.y * dx) / (2.0 * a);
        if (0.0..=1.0).contains(&t) {
            best = best.max(value(t));
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Low-discrepancy sampling

const HALTON_BASES: [u64; 5] = [2, 3, 5, 7, 11];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// Point `index` of the five-dimensional Halton sequence.
pub fn halton(index: u64) -> [f64; 5] {
    let mut u = [0.0; 5];
    for (k, b) in HALTON_BASES.iter().enumerate() {
        u[k] = radical_inverse(index, *b);
    }
    u
}

/// Largest relative step away from the anchor in log scale (factor `10^4`).
const LOG_SPAN: f64 = 9.210_340_371_976_184;

fn anchor(q: f64, u1: f64, u2: f64) -> BellmanPoint {
    let p0 = q * 10f64.powf(-6.0 * u1);
    let r0 = 10f64.powf((u2 - 0.5) * 4.0);
    BellmanPoint::new((p0 * r0).sqrt(), (p0 / r0).sqrt())
}

fn swap(p: BellmanPoint) -> BellmanPoint {
    BellmanPoint::new(p.y, p.x)
}

/// A pair in `region` from five uniforms, or `None` when the draw is rejected.
pub fn sample_pair(region: Region, q: f64, u: [f64; 5]) -> Option<(BellmanPoint, BellmanPoint)> {
    let x0 = anchor(q, u[0], u[1]);
    let p0 = x0.x * x0.y;
    let room = (q / p0).ln().max(0.0);
    let mirrored = u[4] >= 0.5;
    let pair = match region {
        Region::SameSign => {
            if mirrored {
                let (a, b) = (LOG_SPAN * u[2], LOG_SPAN * u[3]);
                (x0, BellmanPoint::new(x0.x * (-a).exp(), x0.y * (-b).exp()))
            } else {
                let s = room * u[2];
                let (a, b) = (s * u[3], s * (1.0 - u[3]));
                (x0, BellmanPoint::new(x0.x * a.exp(), x0.y * b.exp()))
            }
        }
        Region::Opposite | Region::OppositeModerate => {
            let a = LOG_SPAN * u[2];
            let b = (a - room).max(0.0) + LOG_SPAN * u[3];
            let x = BellmanPoint::new(x0.x * a.exp(), x0.y * (-b).exp());
            if mirrored {
                (swap(x0), swap(x))
            } else {
                (x0, x)
            }
        }
        Region::Hard => {
            // y = y0 (1 - b) with 1 - b log-uniform in [5e-7, 1/2].
            let keep = 0.5 * 10f64.powf(-6.0 * u[3]);
            let a_max = q / (p0 * keep) - 1.0;
            if a_max < 3.0 {
                return None;
            }
            let a = 3.0 * (a_max / 3.0).powf(u[2]);
            let x = BellmanPoint::new(x0.x * (1.0 + a), x0.y * keep);
            if mirrored {
                (swap(x0), swap(x))
            } else {
                (x0, x)
            }
        }
    };
    let (a, b) = pair;
    let inside = b.x * b.y <= q * (1.0 + 1e-12) && b.x > 0.0 && b.y > 0.0;
    let moved = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt() > MIN_DISPLACEMENT;
    (inside && moved).then_some(pair)
}

/// Pairs closer than this are excluded from ratio statistics.
pub const MIN_DISPLACEMENT: f64 = 1e-8;

/// Deterministic pairs concentrated where the proofs are tight: products
/// `xy in {Q, Q/2, Q 10^-6}` and the edges `dx/x0 = 3`, `-dy/y0 = 1/2`.
pub fn boundary_pairs(q: f64) -> Vec<(BellmanPoint, BellmanPoint)> {
    let products = [q, q / 2.0, q * 1e-6];
    let ratios: Vec<f64> = (0..21).map(|k| 10f64.powf(-3.0 + 0.3 * k as f64)).collect();
    let point = |p: f64, r: f64| BellmanPoint::new((p * r).sqrt(), (p / r).sqrt());
    let mut out = Vec::new();
    for &p0 in &products {
        for &p in &products {
            for &r0 in &ratios {
                for &r in &ratios {
                    out.push((point(p0, r0), point(p, r)));
                }
            }
        }
    }
    let nudges = [1.0 - 1e-9, 1.0, 1.0 + 1e-9];
    for &p0 in &[q / 2.0, q / 4.0, q * 1e-3] {
        for &r0 in &[0.01, 1.0, 100.0] {
            let x0 = point(p0 * (1.0 - 1e-12), r0);
            for &na in &nudges {
                for &nb in &nudges {
                    let x = BellmanPoint::new(x0.x * (1.0 + 3.0 * na), x0.y * (1.0 - 0.5 * nb));
                    out.push((x0, x));
                    out.push((swap(x0), swap(x)));
                }
            }
        }
    }
    out.retain(|(a, b)| {
        b.x * b.y <= q && a.x * a.y <= q && ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt() > MIN_DISPLACEMENT
    });
    out
}

// ---------------------------------------------------------------------------
// Certificates

/// Floor for `B1` on both regions: the proof gives `c = 1`.
pub const B1_FLOOR: f64 = 1.0 - 1e-9;

/// Floors for `B2` on the same-sign, moderate and hard regions, fixed from the
/// grid oracle in `examples/grid_oracle.rs`: about half of the observed
/// infima `1 + 3^{1/2}`, `17` and `31`.
pub const B2_FLOORS: [f64; 3] = [1.35, 8.5, 15.5];

pub fn region_floor(kind: BellmanKind, region: Region) -> f64 {
    match (kind, region) {
        (BellmanKind::B1, _) => B1_FLOOR,
        (BellmanKind::B2, Region::SameSign) => B2_FLOORS[0],
        (BellmanKind::B2, Region::Hard) => B2_FLOORS[2],
        (BellmanKind::B2, _) => B2_FLOORS[1],
    }
}

/// The certified constant used in packing bounds: the smallest region floor.
pub fn certified_constant(kind: BellmanKind) -> f64 {
    Region::for_kind(kind)
        .iter()
        .map(|&r| region_floor(kind, r))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, Serialize)]
pub struct SamplerConfig {
    pub samples_per_region: u64,
    /// Offset into the Halton sequence.
    pub seed: u64,
    pub boundary_grid: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            samples_per_region: 1_000_000,
            seed: 0,
            boundary_grid: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub kind: BellmanKind,
    #[serde(rename = "Q")]
    pub q: f64,
    pub region: Region,
    pub n_samples: u64,
    pub min_ratio: f64,
    pub witness_pair: [[f64; 2]; 2],
    pub c_floor: f64,
    pub pass: bool,
    /// Draws rejected by the region sampler or falling in another region.
    pub rejected: u64,
    /// Sampled points where `B` left `[0, cap]`.
    pub range_violations: u64,
    /// Moderate-region pairs whose segment left `xy <= 4Q`.
    pub segment_violations: u64,
}

#[derive(Clone, Copy)]
struct Best {
    ratio: f64,
    index: u64,
    pair: (BellmanPoint, BellmanPoint),
}

fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if b.ratio < a.ratio || (b.ratio == a.ratio && b.index < a.index) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Tally {
    best: Option<Best>,
    n: u64,
    rejected: u64,
    range: u64,
    segment: u64,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            best: better(self.best, o.best),
            n: self.n + o.n,
            rejected: self.rejected + o.rejected,
            range: self.range + o.range,
            segment: self.segment + o.segment,
        }
    }
}

fn evaluate(kind: BellmanKind, q: f64, region: Region, index: u64, pair: Option<(BellmanPoint, BellmanPoint)>) -> Tally {
    let mut t = Tally::default();
    let Some((x0, x)) = pair else {
        t.rejected = 1;
        return t;
    };
    if classify(kind, x0, x) != region {
        t.rejected = 1;
        return t;
    }
    let cap = kind.range_cap(q) * (1.0 + 1e-12);
    for p in [x0, x] {
        let v = bellman_eval(kind, q, p).unwrap_or(f64::NAN);
        if !(v >= 0.0 && v <= cap) {
            t.range += 1;
        }
    }
    if region == Region::OppositeModerate && segment_product_max(x0, x) > 4.0 * q * (1.0 + 1e-12) {
        t.segment = 1;
    }
    let scale = remainder_scale(kind, x0, x);
    let rem = tangent_remainder(kind, q, x0, x).unwrap_or(f64::NAN);
    if scale <= 0.0 {
        // Degenerate bound 0: only the sign of the remainder matters.
        if !(rem >= 0.0) {
            t.range += 1;
        }
        t.rejected = 1;
        return t;
    }
    t.n = 1;
    t.best = Some(Best {
        ratio: rem / scale,
        index,
        pair: (x0, x),
    });
    t
}

/// Minimum ratio over the sampled pairs of one region.
pub fn certify_region(kind: BellmanKind, q: f64, region: Region, cfg: &SamplerConfig) -> Result<Certificate> {
    check_q(q)?;
    const CHUNK: u64 = 8192;
    let n = cfg.samples_per_region;
    let sampled = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            (c * CHUNK..((c + 1) * CHUNK).min(n)).fold(Tally::default(), |t, i| {
                let index = cfg.seed + i + 1;
                t.merge(evaluate(kind, q, region, i, sample_pair(region, q, halton(index))))
            })
        })
        .reduce(Tally::default, Tally::merge);
    let mut tally = sampled;
    if cfg.boundary_grid {
        for (k, pair) in boundary_pairs(q).into_iter().enumerate() {
            let index = cfg.samples_per_region + k as u64;
            let t = evaluate(kind, q, region, index, Some(pair));
            // Boundary pairs outside this region are not counted as rejections.
            tally = tally.merge(Tally { rejected: 0, ..t });
        }
    }
    let best = tally.best.ok_or_else(|| {
        HaarError::SamplerEmpty(format!("{kind:?} region {} at Q = {q}", region.name()))
    })?;
    let c_floor = region_floor(kind, region);
    Ok(Certificate {
        kind,
        q,
        region,
        n_samples: tally.n,
        min_ratio: best.ratio,
        witness_pair: [[best.pair.0.x, best.pair.0.y], [best.pair.1.x, best.pair.1.y]],
        c_floor,
        pass: best.ratio >= c_floor && tally.range == 0 && tally.segment == 0,
        rejected: tally.rejected,
        range_violations: tally.range,
        segment_violations: tally.segment,
    })
}

/// Certificates of `B1` on the same-sign and opposite regions.
pub fn certify_lemma_bell1(q: f64, cfg: &SamplerConfig) -> Result<Vec<Certificate>> {
    Region::for_kind(BellmanKind::B1)
        .iter()
        .map(|&r| certify_region(BellmanKind::B1, q, r, cfg))
        .collect()
}

/// Certificates of the stronger `B2` inequality on its three regions.
pub fn certify_lemma_bell2(q: f64, cfg: &SamplerConfig) -> Result<Vec<Certificate>> {
    Region::for_kind(BellmanKind::B2)
        .iter()
        .map(|&r| certify_region(BellmanKind::B2, q, r, cfg))
        .collect()
}

// ---------------------------------------------------------------------------
// Telescoping along a tree

#[derive(Clone, Debug, Serialize)]
pub struct TelescopingReport {
    pub kind: BellmanKind,
    #[serde(rename = "Q")]
    pub q: f64,
    /// Largest `|B(X0) - sum theta B(X_k) - sum theta (B_{X0}(X0) - B_{X0}(X_k))|`,
    /// evaluated in the scalar backend (exactly zero for rationals).
    pub identity_residual: f64,
    /// `sum_{D(I0)} gain_I`, `gain_I = |I| B(X_I) - sum |I'| B(X_{I'})`.
    pub sum_of_gains: f64,
    /// `|I0| B(X_{I0}) - sum_{leaves} |L| B(X_L)`.
    pub boundary_difference: f64,
    /// `|I0| B(X_{I0})`.
    pub top_value: f64,
    /// `4Q |I0|` or `128 Q^2 |I0|`.
    pub cap: f64,
    /// `sum_{D(I0)} rho_I |I|` for `B1`, `tau_I |I|` for `B2`.
    pub carleson_sum: f64,
    /// Smallest `gain_I / (rho_I |I|)` (or `tau`) over atoms where the sequence is positive.
    pub min_atom_ratio: f64,
    pub c_floor: f64,
    /// `carleson_sum <= cap / c_floor`.
    pub holds: bool,
}

/// Telescopes the remainder inequality over `D(I0)` with
/// `X_I = (<u>_I, <w>_I)`, `theta = |I'|/|I|` and `Q = [w]_{A2}`.
pub fn telescoping_check<S: Scalar>(
    f: &Filtration<S>,
    w: &Weight<S>,
    kind: BellmanKind,
    root: AtomId,
) -> Result<TelescopingReport> {
    f.check(root)?;
    let nu = Measure::reference(f);
    let au = f.averages(w.u(), &nu);
    let aw = f.averages(w.w(), &nu);
    let q = a2_characteristic(f, w).value.to_f64().max(1.0);
    let point = |i: usize| BellmanPoint::new(au.0[i].to_f64(), aw.0[i].to_f64());
    let value = |i: usize| bellman_eval(kind, q, point(i));
    let seq = match kind {
        BellmanKind::B1 => rho_sequence(f, w),
        BellmanKind::B2 => tau_sequence(f, w),
    };

    let mut identity_residual = 0.0f64;
    let mut sum_of_gains = 0.0;
    let mut carleson_sum = 0.0;
    let mut min_atom_ratio = f64::INFINITY;
    for i in f.subtree(root) {
        let atom = f.atom(AtomId(i));
        let mass = f.measure(AtomId(i)).clone();
        // Telescoping identity in the scalar backend, with B and its gradient
        // at X_I entered as backend numbers.
        let b0 = S::from_f64(value(i)?);
        let (gx, gy) = bellman_gradient(kind, q, point(i))?;
        let (gx, gy) = (S::from_f64(gx), S::from_f64(gy));
        let mut lhs = b0.clone();
        let mut rhs = S::zero();
        let mut gain = if atom.is_leaf() { 0.0 } else { value(i)? * mass.to_f64() };
        for &c in &atom.children {
            let theta = f.measure(c).clone() / mass.clone();
            let bk = S::from_f64(value(c.0)?);
            let tangent = bk.clone()
                - gx.clone() * (au.0[c.0].clone() - au.0[i].clone())
                - gy.clone() * (aw.0[c.0].clone() - aw.0[i].clone());
            lhs = lhs - theta.clone() * bk;
            rhs = rhs + theta * (b0.clone() - tangent);
            gain -= value(c.0)? * f.measure(c).to_f64();
        }
        if !atom.children.is_empty() {
            identity_residual = identity_residual.max((lhs - rhs).abs().to_f64());
        }
        let term = (seq.0[i].clone() * mass).to_f64();
        if term > 0.0 {
            min_atom_ratio = min_atom_ratio.min(gain / term);
        }
        sum_of_gains += gain;
        carleson_sum += term;
    }
    let top_value = value(root.0)? * f.measure(root).to_f64();
    let bottom: f64 = f
        .leaf_range(root)
        .map(|s| {
            let leaf = f.leaves()[s];
            value(leaf.0).map(|v| v * f.measure(leaf).to_f64())
        })
        .sum::<Result<f64>>()?;
    let cap = kind.range_cap(q) * f.measure(root).to_f64();
    let c_floor = certified_constant(kind);
    Ok(TelescopingReport {
        kind,
        q,
        identity_residual,
        sum_of_gains,
        boundary_difference: top_value - bottom,
        top_value,
        cap,
        carleson_sum,
        min_atom_ratio,
        c_floor,
        holds: carleson_sum <= cap / c_floor * (1.0 + 1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plug_in_values() {
        let one = BellmanPoint::new(1.0, 1.0);
        assert_eq!(bellman_eval(BellmanKind::B1, 1.0, one).unwrap(), 3.0);
        assert_eq!(bellman_eval(BellmanKind::B2, 1.0, one).unwrap(), 127.0);
        assert!(bellman_eval(BellmanKind::B1, 1.0, BellmanPoint::new(0.0, 1.0)).is_err());
        let tiny = bellman_eval(BellmanKind::B1, 1.0, BellmanPoint::new(1e-20, 1.0)).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-9);
    }

    #[test]
    fn remainder_vanishes_at_anchor_and_matches_naive_form() {
        let x0 = BellmanPoint::new(0.7, 1.1);
        for kind in [BellmanKind::B1, BellmanKind::B2] {
            assert_eq!(tangent_remainder(kind, 2.0, x0, x0).unwrap(), 0.0);
            let x = BellmanPoint::new(1.3, 0.4);
            let a = tangent_remainder(kind, 2.0, x0, x).unwrap();
            let b = tangent_remainder_naive(kind, 2.0, x0, x).unwrap();
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn halton_is_in_unit_cube() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(1, 3) - 1.0 / 3.0).abs() < 1e-15);
        for i in 0..100 {
            assert!(halton(i).iter().all(|u| (0.0..1.0).contains(u)));
        }
    }

    #[test]
    fn sampled_pairs_stay_in_their_region() {
        for region in [Region::SameSign, Region::Opposite, Region::Hard] {
            let kind = if region == Region::Hard { BellmanKind::B2 } else { BellmanKind::B1 };
            let mut hits = 0;
            for i in 1..2000 {
                if let Some((a, b)) = sample_pair(region, 4.0, halton(i)) {
                    assert!(a.x * a.y <= 4.0 * (1.0 + 1e-12) && b.x * b.y <= 4.0 * (1.0 + 1e-12));
                    assert_eq!(classify(kind, a, b), region);
                    hits += 1;
                }
            }
            assert!(hits > 500, "{region:?}: {hits}");
        }
    }

    #[test]
    fn segment_maximum_of_a_product() {
        let a = BellmanPoint::new(1.0, 1.0);
        let b = BellmanPoint::new(3.0, 0.0001);
        let m = segment_product_max(a, b);
        let brute = (0..=10_000)
            .map(|k| {
                let t = k as f64 / 10_000.0;
                (1.0 + 2.0 * t) * (1.0 - 0.9999 * t)
            })
            .fold(0.0, f64::max);
        assert!((m - brute).abs() < 1e-7);
    }
}
