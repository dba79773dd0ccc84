//! Per-site inverse interpolation: the smallest L1 integer perturbation of a
//! supporting block that moves one scaled pixel by exactly one level.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{EmbedPlan, EmbedSite};
use crate::error::{Error, Result};
use crate::pixelgrid::{DeltaMap, PixelGrid};
use crate::resampler::Resampler;

/// Slack on the linear feasibility window; the forward check decides.
const WINDOW_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SiteSolution {
    /// Parallel to the site's support.
    pub deltas: Vec<i32>,
    /// The perturbed block resizes to the requested value.
    pub verified: bool,
}

impl SiteSolution {
    pub fn l1(&self) -> u32 {
        self.deltas.iter().map(|d| d.unsigned_abs()).sum()
    }
}

/// Re-evaluates the site's output pixel through the full interpolation
/// block of the perturbed cover and compares it with `expected`.
pub fn forward_check(r: &Resampler, cover: &PixelGrid, site: &EmbedSite, deltas: &[i32], expected: i32) -> bool {
    if deltas.len() != site.support.len() {
        return false;
    }
    let mut patched = [(0usize, 0usize, 0u8); 4];
    let mut count = 0;
    for (p, &d) in site.support.iter().zip(deltas) {
        if d == 0 {
            continue;
        }
        let x = cover.get(p.row, p.col) as i32 + d;
        if !(0..=255).contains(&x) {
            return false;
        }
        if count == patched.len() {
            return forward_check_slow(r, cover, site, deltas, expected);
        }
        patched[count] = (p.row, p.col, x as u8);
        count += 1;
    }
    let patched = &patched[..count];
    let pixel = |i: usize, j: usize| {
        patched
            .iter()
            .find(|&&(pi, pj, _)| pi == i && pj == j)
            .map_or_else(|| cover.get(i, j), |&(_, _, v)| v)
    };
    let (u, v) = site.y;
    crate::resampler::quantize(r.eval_real(pixel, u, v)) as i32 == expected
}

fn forward_check_slow(r: &Resampler, cover: &PixelGrid, site: &EmbedSite, deltas: &[i32], expected: i32) -> bool {
    let mut d = DeltaMap::new(cover.height(), cover.width());
    for (p, &dv) in site.support.iter().zip(deltas) {
        d.add(p.row, p.col, dv);
    }
    match cover.apply_delta(&d) {
        Ok(x) => r.eval(&x, site.y.0, site.y.1) as i32 == expected,
        Err(_) => false,
    }
}

struct Search<'a> {
    r: &'a Resampler,
    cover: &'a PixelGrid,
    site: &'a EmbedSite,
    sign: i32,
    target: i32,
    bound: u32,
    /// Masked support positions, heaviest first.
    order: Vec<usize>,
    weights: Vec<f64>,
    /// `suffix[k]`: largest shift the pixels `order[k..]` can still add.
    suffix: Vec<f64>,
    lo: f64,
    hi: f64,
    mags: Vec<u32>,
    best: Option<(u32, u32, Vec<u32>)>,
}

impl Search<'_> {
    fn better(&self, l1: u32, max: u32) -> bool {
        match &self.best {
            None => true,
            Some((bl1, bmax, bmags)) => {
                (l1, max) < (*bl1, *bmax) || ((l1, max) == (*bl1, *bmax) && self.mags > *bmags)
            }
        }
    }

    fn deltas(&self, mags: &[u32]) -> Vec<i32> {
        let mut d = vec![0; self.site.support.len()];
        for (&pos, &m) in self.order.iter().zip(mags) {
            d[pos] = self.sign * m as i32;
        }
        d
    }

    fn dfs(&mut self, k: usize, shift: f64, l1: u32, max: u32) {
        if shift > self.hi || shift + self.suffix[k] < self.lo {
            return;
        }
        if let Some((bl1, _, _)) = self.best {
            if l1 > bl1 {
                return;
            }
        }
        if k == self.order.len() {
            if shift >= self.lo && self.better(l1, max) {
                let deltas = self.deltas(&self.mags);
                if forward_check(self.r, self.cover, self.site, &deltas, self.target) {
                    self.best = Some((l1, max, self.mags.clone()));
                }
            }
            return;
        }
        for m in 0..=self.bound {
            self.mags[k] = m;
            self.dfs(k + 1, shift + self.weights[k] * m as f64, l1 + m, max.max(m));
        }
        self.mags[k] = 0;
    }
}

/// Branch-and-bound over `0..=bound` unit steps per masked pixel, all in the
/// direction of `delta_y`. Ties on L1 go to the smaller peak change, then to
/// the heavier pixels.
pub fn solve_site(r: &Resampler, cover: &PixelGrid, site: &EmbedSite, delta_y: i32) -> Result<SiteSolution> {
    let n = site.support.len();
    if delta_y == 0 {
        return Ok(SiteSolution {
            deltas: vec![0; n],
            verified: true,
        });
    }
    let sign = delta_y.signum();
    let dir = site.direction(sign);
    if dir.wet {
        return Err(Error::PlanInconsistent(format!(
            "change {delta_y:+} requested on a wet direction of site {:?}",
            site.y
        )));
    }
    let mut order: Vec<usize> = (0..n).filter(|&i| dir.mask[i]).collect();
    order.sort_by(|&a, &b| site.support[b].weight.total_cmp(&site.support[a].weight).then(a.cmp(&b)));
    let weights: Vec<f64> = order.iter().map(|&i| site.support[i].weight).collect();
    let bound = dir.bound as u32;
    let mut suffix = vec![0.0; order.len() + 1];
    for k in (0..order.len()).rev() {
        suffix[k] = suffix[k + 1] + weights[k] * bound as f64;
    }
    // linear window on the magnitude-weighted shift S
    let y = site.y_value as f64;
    let (lo, hi) = if sign > 0 {
        (y + 0.5 - site.y_real, y + 1.5 - site.y_real)
    } else {
        (site.y_real - y + 0.5, site.y_real - y + 1.5)
    };
    let mut search = Search {
        r,
        cover,
        site,
        sign,
        target: site.y_value as i32 + sign,
        bound,
        mags: vec![0; order.len()],
        order,
        weights,
        suffix,
        lo: lo - WINDOW_SLACK,
        hi: hi + WINDOW_SLACK,
        best: None,
    };
    search.dfs(0, 0.0, 0, 0);
    Ok(match search.best.take() {
        Some((_, _, mags)) => SiteSolution {
            deltas: search.deltas(&mags),
            verified: true,
        },
        None => SiteSolution {
            deltas: vec![0; n],
            verified: false,
        },
    })
}

/// Exhaustive minimum L1 over `{-bound..=bound}` on the masked pixels,
/// accepted by the forward check. Reference for small masks.
pub fn exhaustive_min_l1(r: &Resampler, cover: &PixelGrid, site: &EmbedSite, delta_y: i32) -> Option<u32> {
    let sign = delta_y.signum();
    let target = site.y_value as i32 + delta_y;
    let (masked, bound): (Vec<usize>, i32) = if delta_y == 0 {
        (Vec::new(), 0)
    } else {
        let d = site.direction(sign);
        ((0..site.support.len()).filter(|&i| d.mask[i]).collect(), d.bound as i32)
    };
    let side = (2 * bound + 1) as usize;
    let total = side.pow(masked.len() as u32);
    let mut best: Option<u32> = None;
    let mut deltas = vec![0; site.support.len()];
    for code in 0..total {
        let mut c = code;
        for &i in &masked {
            deltas[i] = (c % side) as i32 - bound;
            c /= side;
        }
        let l1: u32 = deltas.iter().map(|d: &i32| d.unsigned_abs()).sum();
        if best.is_some_and(|b| l1 >= b) {
            continue;
        }
        if forward_check(r, cover, site, &deltas, target) {
            best = Some(l1);
        }
    }
    best
}

/// Solves every changed site; returns the merged perturbation and the
/// indices of sites with no verified solution.
pub fn solve_sites(plan: &EmbedPlan, cover: &PixelGrid, changes: &[i8]) -> Result<(DeltaMap, Vec<usize>)> {
    if changes.len() != plan.sites.len() {
        return Err(Error::PlanInconsistent(format!(
            "{} changes for {} sites",
            changes.len(),
            plan.sites.len()
        )));
    }
    let r = plan.resampler();
    let solved: Vec<(usize, SiteSolution)> = plan
        .sites
        .par_iter()
        .zip(changes.par_iter())
        .enumerate()
        .filter(|(_, (_, &d))| d != 0)
        .map(|(k, (site, &d))| solve_site(r, cover, site, d as i32).map(|s| (k, s)))
        .collect::<Result<_>>()?;
    let mut delta = DeltaMap::new(cover.height(), cover.width());
    let mut failed = Vec::new();
    for (k, sol) in solved {
        if !sol.verified {
            failed.push(k);
            continue;
        }
        for (p, &d) in plan.sites[k].support.iter().zip(&sol.deltas) {
            delta.add(p.row, p.col, d);
        }
    }
    Ok((delta, failed))
}

/// Like [`solve_sites`], but any unverified site is an error.
pub fn solve_all(plan: &EmbedPlan, cover: &PixelGrid, changes: &[i8]) -> Result<DeltaMap> {
    let (delta, failed) = solve_sites(plan, cover, changes)?;
    if failed.is_empty() {
        Ok(delta)
    } else {
        Err(Error::SolverFailure(failed.iter().map(|&k| plan.sites[k].y).collect()))
    }
}
