//! Embedding costs: HiLL and S-UNIWARD base functions, assembled per site
//! either from the scaled image (plain) or from the cover supports (pro).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::EmbedPlan;
use crate::error::{Error, Result};
use crate::pixelgrid::PixelGrid;

/// Finite stand-in for a vanishing HiLL denominator.
pub const HILL_CEILING: f64 = 1e10;

const SUNIWARD_SIGMA: f64 = 1.0;

/// Daubechies-8 decomposition high-pass filter.
const HPDF: [f64; 16] = [
    -0.0544158422,
    0.3128715909,
    -0.6756307363,
    0.5853546837,
    0.0158291053,
    -0.2840155430,
    -0.0004724846,
    0.1287474266,
    0.0173693010,
    -0.0440882539,
    -0.0139810279,
    0.0087460940,
    0.0048703530,
    -0.0003917404,
    -0.0006754494,
    -0.0001174768,
];

fn lpdf() -> [f64; 16] {
    std::array::from_fn(|n| if n % 2 == 0 { HPDF[15 - n] } else { -HPDF[15 - n] })
}

/// Per-pixel cost over an image, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl CostGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseCost {
    Hill,
    Suniward,
}

impl BaseCost {
    pub fn compute(self, img: &PixelGrid) -> CostGrid {
        match self {
            BaseCost::Hill => base_cost_hill(img),
            BaseCost::Suniward => base_cost_suniward(img),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assembly {
    Plain,
    Pro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CostVariant {
    pub base: BaseCost,
    pub assembly: Assembly,
}

impl CostVariant {
    pub const ALL: [CostVariant; 4] = [
        CostVariant::new(BaseCost::Hill, Assembly::Plain),
        CostVariant::new(BaseCost::Hill, Assembly::Pro),
        CostVariant::new(BaseCost::Suniward, Assembly::Plain),
        CostVariant::new(BaseCost::Suniward, Assembly::Pro),
    ];

    pub const fn new(base: BaseCost, assembly: Assembly) -> Self {
        Self { base, assembly }
    }

    pub fn assemble(self, plan: &EmbedPlan, cover: &PixelGrid, scaled: &PixelGrid) -> Result<CostMap> {
        match self.assembly {
            Assembly::Plain => assemble_plain(plan, scaled, self.base),
            Assembly::Pro => assemble_pro(plan, cover, self.base),
        }
    }
}

impl Default for CostVariant {
    fn default() -> Self {
        CostVariant::new(BaseCost::Hill, Assembly::Plain)
    }
}

impl fmt::Display for CostVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.base {
            BaseCost::Hill => "hill",
            BaseCost::Suniward => "suniward",
        };
        let asm = match self.assembly {
            Assembly::Plain => "plain",
            Assembly::Pro => "pro",
        };
        write!(f, "{base}-{asm}")
    }
}

impl FromStr for CostVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CostVariant::ALL
            .into_iter()
            .find(|v| v.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidChannel(format!(
                    "unknown cost variant {s:?} (expected hill-plain, hill-pro, suniward-plain or suniward-pro)"
                ))
            })
    }
}

/// Per-site costs, parallel to the plan's sites. Infinite entries are wet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostMap {
    pub rho_plus: Vec<f64>,
    pub rho_minus: Vec<f64>,
}

impl CostMap {
    pub fn len(&self) -> usize {
        self.rho_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho_plus.is_empty()
    }

    pub fn set_wet(&mut self, site: usize, sign: i32) {
        if sign > 0 {
            self.rho_plus[site] = f64::INFINITY;
        } else {
            self.rho_minus[site] = f64::INFINITY;
        }
    }

    /// CSV rows `site,rho_plus,rho_minus`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("site,rho_plus,rho_minus\n");
        for (k, (p, m)) in self.rho_plus.iter().zip(&self.rho_minus).enumerate() {
            out.push_str(&format!("{k},{p},{m}\n"));
        }
        out
    }
}

/// Symmetric-padding index.
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Separable correlation with mirror padding: `out(i,j) = sum_a sum_b
/// kv[a] kh[b] img(i + a - cv, j + b - ch)`.
fn correlate(values: &[f64], h: usize, w: usize, kv: &[f64], cv: isize, kh: &[f64], ch: isize) -> Vec<f64> {
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        let row = &values[i * w..(i + 1) * w];
        for j in 0..w {
            tmp[i * w + j] = kh
                .iter()
                .enumerate()
                .map(|(b, k)| k * row[mirror(j as isize + b as isize - ch, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for (a, k) in kv.iter().enumerate() {
            let src = mirror(i as isize + a as isize - cv, h);
            for j in 0..w {
                out[i * w + j] += k * tmp[src * w + j];
            }
        }
    }
    out
}

fn box_mean(values: &[f64], h: usize, w: usize, size: usize) -> Vec<f64> {
    let k = vec![1.0 / size as f64; size];
    let c = (size / 2) as isize;
    correlate(values, h, w, &k, c, &k, c)
}

pub fn base_cost_hill(img: &PixelGrid) -> CostGrid {
    let (h, w) = img.dims();
    let x = img.to_f64();
    // KB = [[-1,2,-1],[2,-4,2],[-1,2,-1]] = outer([-1,2,-1], [-1,2,-1]) negated
    let kb = [1.0, -2.0, 1.0];
    let residual = correlate(&x, h, w, &kb, 1, &[-1.0, 2.0, -1.0], 1);
    let abs: Vec<f64> = residual.iter().map(|r| r.abs()).collect();
    let smoothed = box_mean(&abs, h, w, 3);
    let recip: Vec<f64> = smoothed
        .iter()
        .map(|&d| if d > 0.0 { (1.0 / d).min(HILL_CEILING) } else { HILL_CEILING })
        .collect();
    CostGrid {
        height: h,
        width: w,
        values: box_mean(&recip, h, w, 15),
    }
}

pub fn base_cost_suniward(img: &PixelGrid) -> CostGrid {
    let (h, w) = img.dims();
    let x = img.to_f64();
    let lo = lpdf();
    let hi = HPDF;
    let abs_lo: Vec<f64> = lo.iter().map(|v| v.abs()).collect();
    let abs_hi: Vec<f64> = hi.iter().map(|v| v.abs()).collect();
    // convolution with kernel k, centered at index 8, is correlation with the
    // reversed kernel centered at 7
    let rev = |k: &[f64]| -> Vec<f64> { k.iter().rev().copied().collect() };
    let mut cost = vec![0.0; h * w];
    for (kv, kh, akv, akh) in [
        (&lo[..], &hi[..], &abs_lo, &abs_hi),
        (&hi[..], &lo[..], &abs_hi, &abs_lo),
        (&hi[..], &hi[..], &abs_hi, &abs_hi),
    ] {
        let residual = correlate(&x, h, w, &rev(kv), 7, &rev(kh), 7);
        let inv: Vec<f64> = residual.iter().map(|r| 1.0 / (SUNIWARD_SIGMA + r.abs())).collect();
        // a unit change at q moves residual (q + a - 8) by k[a]
        let contribution = correlate(&inv, h, w, akv, 8, akh, 8);
        for (c, v) in cost.iter_mut().zip(contribution) {
            *c += v;
        }
    }
    CostGrid {
        height: h,
        width: w,
        values: cost,
    }
}

fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Costs read from the scaled image at each site.
pub fn assemble_plain(plan: &EmbedPlan, scaled: &PixelGrid, base: BaseCost) -> Result<CostMap> {
    check_dims(plan.scaled_dims, scaled.dims())?;
    let psi = base.compute(scaled);
    let pick = |wet: bool, v: f64| if wet { f64::INFINITY } else { v };
    let (rho_plus, rho_minus) = plan
        .sites
        .iter()
        .map(|s| {
            let v = psi.get(s.y.0, s.y.1);
            (pick(s.plus.wet, v), pick(s.minus.wet, v))
        })
        .unzip();
    Ok(CostMap { rho_plus, rho_minus })
}

/// Costs averaged from the cover over each direction's masked support.
pub fn assemble_pro(plan: &EmbedPlan, cover: &PixelGrid, base: BaseCost) -> Result<CostMap> {
    check_dims(plan.cover_dims, cover.dims())?;
    let psi = base.compute(cover);
    let mut map = CostMap {
        rho_plus: Vec::with_capacity(plan.sites.len()),
        rho_minus: Vec::with_capacity(plan.sites.len()),
    };
    for site in &plan.sites {
        for (dir, out) in [(&site.plus, &mut map.rho_plus), (&site.minus, &mut map.rho_minus)] {
            if dir.wet {
                out.push(f64::INFINITY);
                continue;
            }
            let (sum, count) = site
                .support
                .iter()
                .zip(&dir.mask)
                .filter(|(_, &m)| m)
                .fold((0.0, 0usize), |(s, c), (p, _)| (s + psi.get(p.row, p.col), c + 1));
            if count == 0 {
                return Err(Error::PlanInconsistent(format!(
                    "site {:?} has an empty mask on a usable direction",
                    site.y
                )));
            }
            out.push(sum / count as f64);
        }
    }
    Ok(map)
}
