//! Channel geometry: embeddable lattice, dPI, supporting blocks, per-direction
//! masks, weight sums and variation bounds.

use std::collections::BTreeMap;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pixelgrid::PixelGrid;
use crate::resampler::{ChannelSpec, Family, Rational, Resampler, ScaleFactor, TapPlan};

/// Hard cap on any per-pixel modification magnitude.
pub const MAX_BOUND: u8 = 2;

/// One published reference row: (p, s, N, rate label).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReferenceRow {
    pub p: usize,
    pub s: usize,
    pub n: usize,
    pub rate: &'static str,
}

const fn row(p: usize, s: usize, n: usize, rate: &'static str) -> ReferenceRow {
    ReferenceRow { p, s, n, rate }
}

/// Scaling factors (as tenths/hundredths) of the reference design table.
pub const REFERENCE_SFS: [(i64, i64); 11] = [
    (1, 10),
    (2, 10),
    (25, 100),
    (3, 10),
    (4, 10),
    (5, 10),
    (6, 10),
    (7, 10),
    (75, 100),
    (8, 10),
    (9, 10),
];

/// Columns: std bilinear, std bicubic, anti-aliasing bilinear, anti-aliasing bicubic.
#[rustfmt::skip]
pub const REFERENCE_TABLE: [[ReferenceRow; 4]; 11] = [
    [row(2, 1, 4, "√3"),   row(4, 1, 4, "√3"),   row(20, 10, 4, "√3/100"), row(40, 20, 4, "√3/400")],
    [row(2, 1, 4, "√3"),   row(4, 1, 4, "√3"),   row(9, 5, 4, "√3/16"),    row(17, 9, 4, "√3/81")],
    [row(2, 1, 4, "√3"),   row(4, 1, 4, "√3"),   row(8, 4, 4, "√3/16"),    row(16, 8, 4, "√3/64")],
    [row(2, 1, 4, "√3"),   row(4, 2, 4, "√3/4"), row(7, 4, 4, "√3/16"),    row(14, 7, 4, "√3/49")],
    [row(2, 1, 4, "√3"),   row(4, 2, 4, "√3/4"), row(5, 3, 4, "√3/9"),     row(10, 5, 4, "√3/25")],
    [row(2, 1, 4, "√3"),   row(4, 2, 4, "√3/4"), row(4, 2, 4, "√3/4"),     row(8, 4, 4, "√3/16")],
    [row(2, 2, 4, "√3/4"), row(4, 2, 4, "√3/4"), row(5, 3, 4, "√3/9"),     row(7, 4, 4, "√3/16")],
    [row(2, 2, 4, "√3/4"), row(4, 2, 4, "√3/4"), row(3, 2, 4, "√3/4"),     row(6, 3, 2, "√3/9")],
    [row(2, 2, 4, "√3/4"), row(4, 3, 4, "√3/9"), row(3, 2, 2, "√3/4"),     row(6, 3, 2, "√3/9")],
    [row(2, 2, 4, "√3/4"), row(4, 3, 4, "√3/9"), row(3, 2, 1, "√3/4"),     row(5, 3, 2, "√3/9")],
    [row(2, 2, 4, "√3/4"), row(4, 3, 4, "√3/9"), row(3, 2, 1, "√3/4"),     row(5, 3, 1, "√3/9")],
];

/// Reference row for a channel, if its scaling factor is tabulated.
pub fn reference_row(spec: &ChannelSpec) -> Option<ReferenceRow> {
    let col = match (spec.family, spec.antialiasing) {
        (Family::Nearest, _) => return None,
        (Family::Bilinear, false) => 0,
        (Family::Bicubic, false) => 1,
        (Family::Bilinear, true) => 2,
        (Family::Bicubic, true) => 3,
    };
    let sf = spec.sf.ratio();
    REFERENCE_SFS
        .iter()
        .position(|&(n, d)| Rational::new(n, d) == sf)
        .map(|i| REFERENCE_TABLE[i][col])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignParams {
    /// Interpolation support per axis.
    pub p: usize,
    /// Sampling interval in the scaled image; the reference value when tabulated.
    pub s: usize,
    /// Interval derived from the kernel geometry alone.
    pub s_computed: usize,
    /// Modal count of dPI = 1 pixels in an interior supporting block.
    pub n_target: usize,
    /// Bits per scaled-image pixel the binary codec can carry: `1 / s^2`.
    pub rate_bound: f64,
    /// Published reference row, kept as metadata.
    pub reference: Option<ReferenceRow>,
}

/// Source extent long enough to exercise every phase of the tap pattern.
fn probe_extent(sf: ScaleFactor, min_outputs: usize) -> usize {
    let period = (*sf.ratio().numer()).clamp(1, 4096) as usize;
    let outputs = (2 * period + 8).max(min_outputs);
    let n = (outputs as f64 / sf.to_f64()).ceil() as usize + 2;
    n.min(1 << 16)
}

fn probe_plan(spec: &ChannelSpec, min_outputs: usize) -> Result<TapPlan> {
    let n = probe_extent(spec.sf, min_outputs);
    crate::resampler::build_tap_plan(spec, n, spec.sf.scaled_extent(n))
}

/// Per-axis support taps: the two nonzero taps nearest the center (one for
/// nearest-neighbour), lower index on ties, returned as `(index, weight)`.
fn center_taps(spec: &ChannelSpec, plan: &TapPlan, u: usize) -> Vec<(usize, f64)> {
    let out = &plan.outputs[u];
    let mut taps: Vec<(Rational, usize, f64)> = out
        .taps
        .iter()
        .map(|t| ((Rational::from_integer(t.raw) - out.center).abs(), t.index, t.weight))
        .collect();
    taps.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let keep = if spec.family == Family::Nearest { 1 } else { 2 };
    let mut chosen: Vec<(usize, f64)> = taps.into_iter().take(keep).map(|(_, i, w)| (i, w)).collect();
    chosen.sort_by_key(|&(i, _)| i);
    chosen
}

/// Interior lattice positions along one axis.
fn axis_sites(plan: &TapPlan, start: Option<usize>, s: usize) -> Vec<usize> {
    let first = match start {
        Some(u) => u,
        None => match plan.outputs.iter().position(|o| o.is_interior()) {
            Some(u) => u,
            None => return Vec::new(),
        },
    };
    (first..plan.dst_extent)
        .step_by(s)
        .take_while(|&u| plan.outputs[u].is_interior())
        .collect()
}

/// Per-axis dPI counts of source indices for a set of lattice outputs.
/// `whole_block` counts zero-weight window taps as involved.
fn axis_dpi(plan: &TapPlan, sites: &[usize], whole_block: bool) -> Vec<u32> {
    let mut dpi = vec![0u32; plan.src_extent];
    for &u in sites {
        let out = &plan.outputs[u];
        let mut seen: Vec<usize> = out
            .taps
            .iter()
            .filter(|t| whole_block || t.weight != 0.0)
            .map(|t| t.index)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        for i in seen {
            dpi[i] += 1;
        }
    }
    dpi
}

/// Supporting taps per lattice site along one axis, after the dPI = 1 filter.
/// Zero-weight taps are kept only when `keep_zero`; they count toward N but
/// cannot carry a change.
fn axis_supports(
    spec: &ChannelSpec,
    plan: &TapPlan,
    sites: &[usize],
    keep_zero: bool,
) -> Vec<Vec<(usize, f64)>> {
    let dpi = axis_dpi(plan, sites, keep_zero);
    sites
        .iter()
        .map(|&u| {
            center_taps(spec, plan, u)
                .into_iter()
                .filter(|&(i, w)| dpi[i] == 1 && (keep_zero || w > 0.0))
                .collect()
        })
        .collect()
}

fn modal_support(counts: &[usize]) -> usize {
    let mut hist: BTreeMap<usize, u64> = BTreeMap::new();
    for &a in counts {
        for &b in counts {
            *hist.entry(a * b).or_default() += 1;
        }
    }
    // ties resolve toward the larger block
    hist.into_iter()
        .max_by(|x, y| x.1.cmp(&y.1).then(x.0.cmp(&y.0)))
        .map_or(0, |(n, _)| n)
}

/// Every interior site keeps its full nearest pair at block dPI = 1.
fn pairs_free(spec: &ChannelSpec, plan: &TapPlan, s: usize) -> bool {
    let sites = axis_sites(plan, None, s);
    let dpi = axis_dpi(plan, &sites, true);
    sites.iter().all(|&u| {
        let pair = center_taps(spec, plan, u);
        pair.iter().all(|&(i, _)| dpi[i] == 1)
    })
}

/// Interval implied by the kernel alone: half the block for anti-aliased
/// kernels, otherwise the smallest interval keeping full supports.
fn rule_interval(spec: &ChannelSpec, plan: &TapPlan, p: usize) -> usize {
    match (spec.family, spec.antialiasing) {
        (Family::Nearest, _) => 1,
        (_, true) => p.div_ceil(2),
        (_, false) => (1..=8).find(|&s| pairs_free(spec, plan, s)).unwrap_or(8),
    }
}

pub fn design_params(spec: &ChannelSpec) -> Result<DesignParams> {
    spec.validate()?;
    let reference = reference_row(spec);
    let plan = probe_plan(spec, 64)?;
    let p = match (spec.family, spec.antialiasing) {
        (Family::Nearest, _) => 1,
        (family, false) => family.base_support() as usize,
        (_, true) => plan.taps_per_output(),
    };
    let s_computed = rule_interval(spec, &plan, p);
    let s = reference.map_or(s_computed, |r| r.s);
    // enough lattice sites for a stable mode
    let plan = probe_plan(spec, 16 * s + 16)?;
    let sites = axis_sites(&plan, None, s);
    let counts: Vec<usize> = axis_supports(spec, &plan, &sites, true).iter().map(Vec::len).collect();
    Ok(DesignParams {
        p,
        s,
        s_computed,
        n_target: modal_support(&counts),
        rate_bound: 1.0 / (s * s) as f64,
        reference,
    })
}

/// Count grid of dPI over cover coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DpiMap {
    pub height: usize,
    pub width: usize,
    pub counts: Vec<u32>,
}

impl DpiMap {
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.width + col]
    }

    pub fn histogram(&self) -> BTreeMap<u32, usize> {
        let mut h = BTreeMap::new();
        for &c in &self.counts {
            *h.entry(c).or_default() += 1;
        }
        h
    }
}

/// dPI of every cover pixel with respect to the given embeddable outputs.
pub fn compute_dpi(
    spec: &ChannelSpec,
    cover_dims: (usize, usize),
    embeddable: &[(usize, usize)],
) -> Result<DpiMap> {
    let r = Resampler::new(spec, cover_dims)?;
    Ok(dpi_with(&r, embeddable.iter().copied()))
}

fn dpi_with(r: &Resampler, embeddable: impl Iterator<Item = (usize, usize)>) -> DpiMap {
    let (h, w) = r.src_dims();
    let mut counts = vec![0u32; h * w];
    for (u, v) in embeddable {
        let block = r.interpolation_block(u, v);
        for &i in &block.rows {
            for &j in &block.cols {
                counts[i * w + j] += 1;
            }
        }
    }
    DpiMap {
        height: h,
        width: w,
        counts,
    }
}

/// Embeddable sites are `(row_offset + a*s, col_offset + b*s)` for
/// `a < rows`, `b < cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub s: usize,
    pub row_offset: usize,
    pub col_offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Lattice {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major site coordinates in the scaled image.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |a| {
            (0..self.cols).map(move |b| (self.row_offset + a * self.s, self.col_offset + b * self.s))
        })
    }

    pub fn fits(&self, scaled_dims: (usize, usize)) -> bool {
        self.s > 0
            && (self.rows == 0 || self.row_offset + (self.rows - 1) * self.s < scaled_dims.0)
            && (self.cols == 0 || self.col_offset + (self.cols - 1) * self.s < scaled_dims.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportPixel {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

/// One modification direction of a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    /// Parallel to the site's support.
    pub mask: Vec<bool>,
    pub omega: f64,
    /// Zero when wet.
    pub bound: u8,
    pub wet: bool,
}

impl Direction {
    fn wet(len: usize) -> Self {
        Self {
            mask: vec![false; len],
            omega: 0.0,
            bound: 0,
            wet: true,
        }
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedSite {
    /// Coordinates in the scaled image.
    pub y: (usize, usize),
    pub y_value: u8,
    /// Pre-rounding value of the scaled pixel.
    pub y_real: f64,
    pub support: Vec<SupportPixel>,
    pub plus: Direction,
    pub minus: Direction,
}

impl EmbedSite {
    /// Direction for a change of `sign` (+1 or -1).
    pub fn direction(&self, sign: i32) -> &Direction {
        if sign > 0 {
            &self.plus
        } else {
            &self.minus
        }
    }

    pub fn is_usable(&self) -> bool {
        !(self.plus.wet && self.minus.wet)
    }

    pub fn make_wet(&mut self, sign: i32) {
        let len = self.support.len();
        if sign > 0 {
            self.plus = Direction::wet(len);
        } else {
            self.minus = Direction::wet(len);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlanOptions {
    /// Sampling interval; defaults to the design interval.
    pub interval: Option<usize>,
    /// First lattice site; defaults to the first interior output on each axis.
    pub offset: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbedPlan {
    pub channel: ChannelSpec,
    pub cover_dims: (usize, usize),
    pub scaled_dims: (usize, usize),
    pub params: DesignParams,
    pub lattice: Lattice,
    /// Row-major over the lattice.
    pub sites: Vec<EmbedSite>,
    pub capacity_bits: f64,
    #[serde(skip)]
    resampler: Resampler,
}

impl EmbedPlan {
    pub fn resampler(&self) -> &Resampler {
        &self.resampler
    }

    pub fn wet_plus(&self) -> usize {
        self.sites.iter().filter(|s| s.plus.wet).count()
    }

    pub fn wet_minus(&self) -> usize {
        self.sites.iter().filter(|s| s.minus.wet).count()
    }

    pub fn wet_both(&self) -> usize {
        self.sites.iter().filter(|s| !s.is_usable()).count()
    }

    /// Marks one direction of a site wet and refreshes the capacity.
    pub fn make_wet(&mut self, site: usize, sign: i32) {
        self.sites[site].make_wet(sign);
        self.capacity_bits = capacity(&self.sites);
    }

    /// Union of all supports.
    pub fn support_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sites.iter().flat_map(|s| s.support.iter().map(|p| (p.row, p.col)))
    }
}

/// One bit per site with at least one usable direction.
fn capacity(sites: &[EmbedSite]) -> f64 {
    sites.iter().filter(|s| s.is_usable()).count() as f64
}

pub(crate) fn ceil_recip(omega: f64) -> u64 {
    // 1/omega can land a hair above an integer through weight rounding
    (1.0 / omega - 1e-9).ceil().max(1.0) as u64
}

fn build_direction(cover: &PixelGrid, site: &EmbedSite, sign: i32) -> Direction {
    let len = site.support.len();
    if (sign > 0 && site.y_value == 255) || (sign < 0 && site.y_value == 0) {
        return Direction::wet(len);
    }
    let mut mask = vec![true; len];
    let (omega, bound) = loop {
        let omega: f64 = site
            .support
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(p, _)| p.weight)
            .sum();
        if omega <= 0.0 {
            return Direction::wet(len);
        }
        // capped; reachability below decides whether a capped direction is usable
        let bound = ceil_recip(omega).min(MAX_BOUND as u64);
        let next: Vec<bool> = site
            .support
            .iter()
            .zip(&mask)
            .map(|(p, &m)| {
                let x = cover.get(p.row, p.col) as i64 + sign as i64 * bound as i64;
                m && (0..=255).contains(&x)
            })
            .collect();
        if next == mask {
            break (omega, bound as u8);
        }
        mask = next;
    };
    // the largest linear shift must cross the rounding boundary
    let reach = omega * bound as f64;
    let need = if sign > 0 {
        site.y_value as f64 + 0.5 - site.y_real
    } else {
        site.y_real - (site.y_value as f64 - 0.5)
    };
    if reach < need {
        return Direction::wet(len);
    }
    Direction {
        mask,
        omega,
        bound,
        wet: false,
    }
}

pub fn build_embed_plan(cover: &PixelGrid, spec: &ChannelSpec, opts: PlanOptions) -> Result<EmbedPlan> {
    let params = design_params(spec)?;
    let s = opts.interval.unwrap_or(params.s);
    if s == 0 {
        return Err(Error::InvalidChannel("sampling interval must be positive".into()));
    }
    let resampler = Resampler::new(spec, cover.dims())?;
    let scaled_dims = resampler.dst_dims();
    let row_sites = axis_sites(resampler.vertical(), opts.offset.map(|o| o.0), s);
    let col_sites = axis_sites(resampler.horizontal(), opts.offset.map(|o| o.1), s);
    if row_sites.is_empty() || col_sites.is_empty() {
        return Err(Error::CoverTooSmall {
            height: cover.height(),
            width: cover.width(),
        });
    }
    let row_support = axis_supports(spec, resampler.vertical(), &row_sites, false);
    let col_support = axis_supports(spec, resampler.horizontal(), &col_sites, false);
    let real = resampler.resize_real(cover)?;

    let mut sites = Vec::with_capacity(row_sites.len() * col_sites.len());
    for (&u, rs) in row_sites.iter().zip(&row_support) {
        for (&v, cs) in col_sites.iter().zip(&col_support) {
            let y_real = real[u * scaled_dims.1 + v];
            let support: Vec<SupportPixel> = rs
                .iter()
                .flat_map(|&(i, wv)| {
                    cs.iter().map(move |&(j, wh)| SupportPixel {
                        row: i,
                        col: j,
                        weight: wv * wh,
                    })
                })
                .collect();
            let mut site = EmbedSite {
                y: (u, v),
                y_value: crate::resampler::quantize(y_real),
                y_real,
                plus: Direction::wet(support.len()),
                minus: Direction::wet(support.len()),
                support,
            };
            site.plus = build_direction(cover, &site, 1);
            site.minus = build_direction(cover, &site, -1);
            sites.push(site);
        }
    }

    Ok(EmbedPlan {
        channel: *spec,
        cover_dims: cover.dims(),
        scaled_dims,
        lattice: Lattice {
            s,
            row_offset: row_sites[0],
            col_offset: col_sites[0],
            rows: row_sites.len(),
            cols: col_sites.len(),
        },
        capacity_bits: capacity(&sites),
        params: DesignParams { s, ..params },
        sites,
        resampler,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlanReport {
    pub sites: usize,
    pub wet_plus: usize,
    pub wet_minus: usize,
    pub wet_both: usize,
    pub capacity_bits: f64,
    pub failures: Vec<String>,
}

impl PlanReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Re-checks every structural invariant of a plan against its cover.
pub fn verify_plan(plan: &EmbedPlan, cover: &PixelGrid) -> PlanReport {
    let mut failures = Vec::new();
    let (h, w) = plan.cover_dims;
    if cover.dims() != plan.cover_dims {
        failures.push(format!("cover is {:?}, plan expects {:?}", cover.dims(), plan.cover_dims));
        return PlanReport {
            failures,
            ..PlanReport::default()
        };
    }
    let mut owner: Vec<Option<usize>> = vec![None; h * w];
    let dpi = dpi_with(&plan.resampler, plan.sites.iter().map(|s| s.y));
    for (k, site) in plan.sites.iter().enumerate() {
        for p in &site.support {
            match owner[p.row * w + p.col].replace(k) {
                Some(other) if other != k => failures.push(format!(
                    "pixel ({}, {}) shared by sites {:?} and {:?}",
                    p.row, p.col, plan.sites[other].y, site.y
                )),
                _ => {}
            }
            if dpi.get(p.row, p.col) != 1 {
                failures.push(format!(
                    "support pixel ({}, {}) of site {:?} has dPI {}",
                    p.row,
                    p.col,
                    site.y,
                    dpi.get(p.row, p.col)
                ));
            }
        }
        for (sign, d) in [(1i32, &site.plus), (-1, &site.minus)] {
            let masked = d.masked_count();
            if d.wet != (masked == 0) {
                failures.push(format!("site {:?} dir {sign:+}: wet flag disagrees with mask", site.y));
            }
            if d.wet {
                continue;
            }
            if d.bound > MAX_BOUND {
                failures.push(format!("site {:?} dir {sign:+}: bound {} over cap", site.y, d.bound));
            }
            let omega: f64 = site
                .support
                .iter()
                .zip(&d.mask)
                .filter(|(_, &m)| m)
                .map(|(p, _)| p.weight)
                .sum();
            if (omega - d.omega).abs() > 1e-12 || omega <= 0.0 || ceil_recip(omega).min(MAX_BOUND as u64) != d.bound as u64 {
                failures.push(format!("site {:?} dir {sign:+}: omega/bound mismatch", site.y));
            }
            for (p, _) in site.support.iter().zip(&d.mask).filter(|(_, &m)| m) {
                let x = cover.get(p.row, p.col) as i32 + sign * d.bound as i32;
                if !(0..=255).contains(&x) {
                    failures.push(format!(
                        "site {:?} dir {sign:+}: pixel ({}, {}) would leave range",
                        site.y, p.row, p.col
                    ));
                }
            }
        }
    }
    PlanReport {
        sites: plan.sites.len(),
        wet_plus: plan.wet_plus(),
        wet_minus: plan.wet_minus(),
        wet_both: plan.wet_both(),
        capacity_bits: plan.capacity_bits,
        failures,
    }
}
