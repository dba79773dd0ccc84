//! The forward scaling channel: backward-mapped separable interpolation with
//! standard and anti-aliasing kernels.
//!
//! Geometry (output centers, kernel supports, nearest-neighbour ties) is
//! evaluated in exact rational arithmetic so that tap structure does not
//! depend on floating-point noise; only the weights themselves are `f64`.
//! Conventions follow MATLAB's `imresize`:
//!
//! * output extent `ceil(sf * n)`,
//! * center of output `u` at `(u + 0.5) / sf - 0.5`,
//! * anti-aliasing kernel `sf * h(sf * t)` with support widened by `1 / sf`,
//! * out-of-range taps reflected back into the image (`-1 -> 0`, `-2 -> 1`),
//! * per-output weight renormalisation,
//! * a single rounding (half away from zero) followed by a clamp to [0, 255].

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::pixelgrid::PixelGrid;

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Nearest,
    Bilinear,
    Bicubic,
}

impl Family {
    /// Width of the standard kernel's support in source pixels.
    pub fn base_support(self) -> i64 {
        match self {
            Family::Nearest => 1,
            Family::Bilinear => 2,
            Family::Bicubic => 4,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Nearest => "nearest",
            Family::Bilinear => "bilinear",
            Family::Bicubic => "bicubic",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(Family::Nearest),
            "bilinear" => Ok(Family::Bilinear),
            "bicubic" => Ok(Family::Bicubic),
            other => Err(Error::InvalidChannel(format!("unknown family {other:?}"))),
        }
    }
}

/// A scaling factor held as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScaleFactor(Rational);

impl ScaleFactor {
    pub fn new(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::InvalidChannel("zero denominator".into()));
        }
        let r = Rational::new(numer, denom);
        if r <= Rational::zero() || r > Rational::from_integer(1) {
            return Err(Error::InvalidChannel(format!(
                "scaling factor {r} outside (0, 1]"
            )));
        }
        Ok(Self(r))
    }

    /// Exact conversion through the shortest decimal representation, so
    /// `0.3` becomes `3/10` rather than the nearest binary fraction.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::InvalidChannel(format!("scaling factor {x}")));
        }
        format!("{x}").parse()
    }

    pub fn ratio(self) -> Rational {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn is_one(self) -> bool {
        self.0 == Rational::from_integer(1)
    }

    /// `ceil(sf * n)`
    pub fn scaled_extent(self, n: usize) -> usize {
        (self.0 * Rational::from_integer(n as i64)).ceil().to_integer() as usize
    }
}

impl FromStr for ScaleFactor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidChannel(format!("cannot parse scaling factor {s:?}"));
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            return ScaleFactor::new(n, d);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let int: i64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let scale = 10i64.pow(frac.len() as u32);
        let frac_val: i64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        ScaleFactor::new(int * scale + frac_val, scale)
    }
}

impl fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl Serialize for ScaleFactor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for ScaleFactor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        let parsed = match Repr::deserialize(d)? {
            Repr::Num(x) => ScaleFactor::from_f64(x),
            Repr::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

fn default_bicubic_a() -> f64 {
    -0.5
}

/// The scaling function `f` the stego image is assumed to pass through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub family: Family,
    pub antialiasing: bool,
    pub sf: ScaleFactor,
    #[serde(default = "default_bicubic_a")]
    pub bicubic_a: f64,
}

impl ChannelSpec {
    pub fn new(family: Family, antialiasing: bool, sf: ScaleFactor) -> Result<Self> {
        let spec = Self {
            family,
            antialiasing,
            sf,
            bicubic_a: default_bicubic_a(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn nearest(sf: ScaleFactor) -> Self {
        Self::new(Family::Nearest, false, sf).expect("nearest channel is always valid")
    }

    pub fn bilinear(sf: ScaleFactor, antialiasing: bool) -> Self {
        Self::new(Family::Bilinear, antialiasing, sf).expect("bilinear channel is always valid")
    }

    pub fn bicubic(sf: ScaleFactor, antialiasing: bool) -> Self {
        Self::new(Family::Bicubic, antialiasing, sf).expect("bicubic channel is always valid")
    }

    pub fn with_bicubic_a(mut self, a: f64) -> Self {
        self.bicubic_a = a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == Family::Nearest && self.antialiasing {
            return Err(Error::InvalidChannel(
                "anti-aliasing is not defined for nearest-neighbour scaling".into(),
            ));
        }
        if !self.bicubic_a.is_finite() {
            return Err(Error::InvalidChannel("bicubic parameter must be finite".into()));
        }
        // re-check in case the struct was built by hand
        ScaleFactor::new(*self.sf.0.numer(), *self.sf.0.denom()).map(|_| ())
    }

    pub fn scaled_dims(&self, (h, w): (usize, usize)) -> (usize, usize) {
        (self.sf.scaled_extent(h), self.sf.scaled_extent(w))
    }

    /// Kernel support width in source pixels.
    pub fn support_width(&self) -> Rational {
        let base = Rational::from_integer(self.family.base_support());
        if self.antialiasing {
            base / self.sf.ratio()
        } else {
            base
        }
    }

    /// Kernel value at offset `t` (source minus center, in source pixels).
    pub fn kernel_value(&self, t: f64) -> f64 {
        if self.antialiasing {
            let sf = self.sf.to_f64();
            sf * base_kernel(self.family, sf * t, self.bicubic_a)
        } else {
            base_kernel(self.family, t, self.bicubic_a)
        }
    }

    /// Kernel value at an exact offset. Support edges and the interior zeros
    /// of the cubic are decided exactly.
    fn kernel_exact(&self, t: Rational) -> f64 {
        let (x, gain) = if self.antialiasing {
            (t * self.sf.ratio(), self.sf.to_f64())
        } else {
            (t, 1.0)
        };
        let one = Rational::from_integer(1);
        let two = Rational::from_integer(2);
        let half = Rational::new(1, 2);
        let zero = match self.family {
            Family::Nearest => !(x >= -half && x < half),
            Family::Bilinear => x.abs() >= one,
            Family::Bicubic => x.abs() >= two || x.abs() == one,
        };
        if zero {
            0.0
        } else {
            gain * base_kernel(self.family, rational_to_f64(x), self.bicubic_a)
        }
    }

    pub fn label(&self) -> String {
        format!(
            "{}{}@{}",
            if self.antialiasing { "aa-" } else { "" },
            self.family,
            self.sf
        )
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn rational_to_f64(r: Rational) -> f64 {
    r.to_f64().expect("rational fits in f64")
}

/// Standard (non-stretched) kernels.
pub fn base_kernel(family: Family, x: f64, a: f64) -> f64 {
    match family {
        Family::Nearest => {
            if (-0.5..0.5).contains(&x) {
                1.0
            } else {
                0.0
            }
        }
        Family::Bilinear => (1.0 - x.abs()).max(0.0),
        Family::Bicubic => {
            let ax = x.abs();
            if ax <= 1.0 {
                ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0
            } else if ax < 2.0 {
                ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a
            } else {
                0.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    /// Position before boundary reflection; may be negative or past the end.
    pub raw: i64,
    /// Source index after reflection into `[0, extent)`.
    pub index: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputTaps {
    pub center: Rational,
    pub taps: Vec<Tap>,
}

impl OutputTaps {
    pub fn nonzero(&self) -> impl Iterator<Item = &Tap> + '_ {
        self.taps.iter().filter(|t| t.weight != 0.0)
    }

    /// True when no nonzero tap needed boundary reflection.
    pub fn is_interior(&self) -> bool {
        self.nonzero().all(|t| t.raw == t.index as i64)
    }
}

/// One axis' worth of interpolation weights (`W^(V)` or `W^(H)`).
#[derive(Debug, Clone, PartialEq)]
pub struct TapPlan {
    pub src_extent: usize,
    pub dst_extent: usize,
    pub outputs: Vec<OutputTaps>,
}

impl TapPlan {
    /// Taps per output; uniform across the plan.
    pub fn taps_per_output(&self) -> usize {
        self.outputs.first().map_or(0, |o| o.taps.len())
    }
}

/// Backward geometric mapping of output index `u`.
pub fn backward_center(sf: ScaleFactor, u: usize) -> Rational {
    let u = Rational::from_integer(u as i64);
    (u + Rational::new(1, 2)) / sf.ratio() - Rational::new(1, 2)
}

fn reflect(raw: i64, extent: usize) -> usize {
    let n = extent as i64;
    let m = raw.mod_floor(&(2 * n));
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

pub fn build_tap_plan(spec: &ChannelSpec, src_extent: usize, dst_extent: usize) -> Result<TapPlan> {
    spec.validate()?;
    if src_extent == 0 || dst_extent != spec.sf.scaled_extent(src_extent) {
        return Err(Error::InvalidChannel(format!(
            "extents {src_extent} -> {dst_extent} do not match scaling factor {}",
            spec.sf
        )));
    }
    let centers: Vec<Rational> = (0..dst_extent).map(|u| backward_center(spec.sf, u)).collect();

    // raw positions per output before pruning
    let windows: Vec<Vec<i64>> = centers
        .iter()
        .map(|&c| match (spec.family, spec.antialiasing) {
            (Family::Nearest, _) => {
                // kernel is [-0.5, 0.5) in (source - center): ties go to the lower index
                vec![(c - Rational::new(1, 2)).ceil().to_integer()]
            }
            (family, false) => {
                let half = family.base_support() / 2;
                let base = c.floor().to_integer();
                (base - half + 1..=base + half).collect()
            }
            (_, true) => {
                let width = spec.support_width();
                let left = (c - width / 2).floor().to_integer();
                let count = width.ceil().to_integer() + 2;
                (left..left + count).collect()
            }
        })
        .collect();

    let mut weights: Vec<Vec<f64>> = windows
        .iter()
        .zip(&centers)
        .map(|(win, &c)| {
            win.iter()
                .map(|&i| spec.kernel_exact(Rational::from_integer(i) - c))
                .collect()
        })
        .collect();

    // drop window columns that are zero for every output (anti-aliasing only;
    // standard kernels keep their nominal p-tap block)
    let columns = windows[0].len();
    let keep: Vec<bool> = if spec.antialiasing {
        (0..columns)
            .map(|j| weights.iter().any(|w| w[j] != 0.0))
            .collect()
    } else {
        vec![true; columns]
    };

    let outputs = windows
        .iter()
        .zip(weights.iter_mut())
        .zip(&centers)
        .map(|((win, w), &center)| {
            let sum: f64 = w.iter().sum();
            let taps = win
                .iter()
                .zip(w.iter())
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|((&raw, &weight), _)| Tap {
                    raw,
                    index: reflect(raw, src_extent),
                    weight: weight / sum,
                })
                .collect();
            OutputTaps { center, taps }
        })
        .collect();

    Ok(TapPlan {
        src_extent,
        dst_extent,
        outputs,
    })
}

/// A channel bound to a concrete source size: both axis plans, cached.
#[derive(Debug, Clone)]
pub struct Resampler {
    spec: ChannelSpec,
    vertical: TapPlan,
    horizontal: TapPlan,
}

/// Axis-aligned source region with nonzero taps for one output pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationBlock {
    /// Source rows, top to bottom.
    pub rows: Vec<usize>,
    /// Source columns, left to right.
    pub cols: Vec<usize>,
    /// Outer product `W^(V) (W^(H))^T`, indexed `[row][col]`.
    pub weights: Vec<Vec<f64>>,
}

impl InterpolationBlock {
    pub fn dims(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }
}

impl Resampler {
    pub fn new(spec: &ChannelSpec, src_dims: (usize, usize)) -> Result<Self> {
        let (h, w) = src_dims;
        let (dh, dw) = spec.scaled_dims(src_dims);
        Ok(Self {
            spec: *spec,
            vertical: build_tap_plan(spec, h, dh)?,
            horizontal: build_tap_plan(spec, w, dw)?,
        })
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn src_dims(&self) -> (usize, usize) {
        (self.vertical.src_extent, self.horizontal.src_extent)
    }

    pub fn dst_dims(&self) -> (usize, usize) {
        (self.vertical.dst_extent, self.horizontal.dst_extent)
    }

    pub fn vertical(&self) -> &TapPlan {
        &self.vertical
    }

    pub fn horizontal(&self) -> &TapPlan {
        &self.horizontal
    }

    fn check_src(&self, src: &PixelGrid) -> Result<()> {
        if src.dims() != self.src_dims() {
            return Err(Error::DimensionMismatch {
                expected: self.src_dims(),
                found: src.dims(),
            });
        }
        Ok(())
    }

    /// Pre-rounding output values, row-major.
    pub fn resize_real(&self, src: &PixelGrid) -> Result<Vec<f64>> {
        self.check_src(src)?;
        let (h, _) = self.src_dims();
        let (dh, dw) = self.dst_dims();
        // horizontal pass, kept in f64
        let mut tmp = vec![0.0; h * dw];
        for r in 0..h {
            let row = src.row(r);
            for (v, out) in self.horizontal.outputs.iter().enumerate() {
                tmp[r * dw + v] = dot_row(&out.taps, |j| row[j] as f64);
            }
        }
        let mut real = vec![0.0; dh * dw];
        for (u, out) in self.vertical.outputs.iter().enumerate() {
            for v in 0..dw {
                real[u * dw + v] = dot_row(&out.taps, |i| tmp[i * dw + v]);
            }
        }
        Ok(real)
    }

    pub fn resize(&self, src: &PixelGrid) -> Result<PixelGrid> {
        let real = self.resize_real(src)?;
        let (dh, dw) = self.dst_dims();
        PixelGrid::new(dh, dw, real.into_iter().map(quantize).collect())
    }

    /// Pre-rounding value of a single output pixel; arithmetic order is
    /// identical to [`Resampler::resize_real`], so results agree bit for bit.
    pub fn eval_real(&self, pixel: impl Fn(usize, usize) -> u8, u: usize, v: usize) -> f64 {
        let h_taps = &self.horizontal.outputs[v].taps;
        dot_row(&self.vertical.outputs[u].taps, |i| {
            dot_row(h_taps, |j| pixel(i, j) as f64)
        })
    }

    pub fn eval(&self, src: &PixelGrid, u: usize, v: usize) -> u8 {
        quantize(self.eval_real(|i, j| src.get(i, j), u, v))
    }

    pub fn interpolation_block(&self, u: usize, v: usize) -> InterpolationBlock {
        let axis = |taps: &OutputTaps| -> Vec<(usize, f64)> {
            let mut merged: Vec<(usize, f64)> = Vec::new();
            for t in taps.nonzero() {
                match merged.iter_mut().find(|(i, _)| *i == t.index) {
                    Some(m) => m.1 += t.weight,
                    None => merged.push((t.index, t.weight)),
                }
            }
            merged.sort_by_key(|&(i, _)| i);
            merged
        };
        let rows = axis(&self.vertical.outputs[u]);
        let cols = axis(&self.horizontal.outputs[v]);
        InterpolationBlock {
            weights: rows
                .iter()
                .map(|&(_, wr)| cols.iter().map(|&(_, wc)| wr * wc).collect())
                .collect(),
            rows: rows.into_iter().map(|(i, _)| i).collect(),
            cols: cols.into_iter().map(|(j, _)| j).collect(),
        }
    }
}

#[inline]
fn dot_row(taps: &[Tap], value: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for t in taps {
        acc += t.weight * value(t.index);
    }
    acc
}

/// Values this close to a half-integer are exact ties lost to f64 accumulation.
pub const TIE_EPS: f64 = 1e-9;

/// Round half away from zero, then saturate to 8 bits.
#[inline]
pub fn quantize(x: f64) -> u8 {
    let a = x.abs();
    let f = a.floor();
    let r = if (a - f - 0.5).abs() <= TIE_EPS { f + 1.0 } else { a.round() };
    (r.copysign(x)).clamp(0.0, 255.0) as u8
}

/// `f(src)` for a channel.
pub fn resize(src: &PixelGrid, spec: &ChannelSpec) -> Result<PixelGrid> {
    Resampler::new(spec, src.dims())?.resize(src)
}

pub fn interpolation_block(
    spec: &ChannelSpec,
    src_dims: (usize, usize),
    u: usize,
    v: usize,
) -> Result<InterpolationBlock> {
    let r = Resampler::new(spec, src_dims)?;
    let (dh, dw) = r.dst_dims();
    if u >= dh || v >= dw {
        return Err(Error::DimensionMismatch {
            expected: (dh, dw),
            found: (u, v),
        });
    }
    Ok(r.interpolation_block(u, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sf(s: &str) -> ScaleFactor {
        s.parse().unwrap()
    }

    #[test]
    fn parses_decimal_and_fraction() {
        assert_eq!(sf("0.3").ratio(), Rational::new(3, 10));
        assert_eq!(sf("3/10"), sf("0.3"));
        assert_eq!(sf("1"), sf("1.0"));
        assert_eq!(ScaleFactor::from_f64(0.7).unwrap().ratio(), Rational::new(7, 10));
        assert!("0".parse::<ScaleFactor>().is_err());
        assert!("1.5".parse::<ScaleFactor>().is_err());
        assert!("abc".parse::<ScaleFactor>().is_err());
    }

    #[test]
    fn nearest_rejects_antialiasing() {
        assert!(ChannelSpec::new(Family::Nearest, true, sf("0.5")).is_err());
    }

    #[test]
    fn kernel_values() {
        let bl = ChannelSpec::bilinear(sf("0.5"), false);
        assert_eq!(bl.kernel_value(0.0), 1.0);
        assert_eq!(bl.kernel_value(1.0), 0.0);
        let bl_aa = ChannelSpec::bilinear(sf("0.5"), true);
        assert_eq!(bl_aa.kernel_value(0.5), 0.375);
        let bc = ChannelSpec::bicubic(sf("1"), false);
        assert_eq!(bc.kernel_value(1.0), 0.0);
        assert_eq!(bc.kernel_value(0.0), 1.0);
        assert_eq!(bc.kernel_value(2.5), 0.0);
    }

    #[test]
    fn bilinear_taps_at_half_scale() {
        let plan = build_tap_plan(&ChannelSpec::bilinear(sf("0.5"), false), 4, 2).unwrap();
        let taps: Vec<(usize, f64)> = plan.outputs[0].taps.iter().map(|t| (t.index, t.weight)).collect();
        assert_eq!(taps, vec![(0, 0.5), (1, 0.5)]);
        assert_eq!(plan.outputs[0].center, Rational::new(1, 2));
    }

    #[test]
    fn antialiased_bilinear_edge_taps_fold() {
        let plan = build_tap_plan(&ChannelSpec::bilinear(sf("0.5"), true), 8, 4).unwrap();
        let out = &plan.outputs[0];
        let w: Vec<f64> = out.taps.iter().map(|t| t.weight).collect();
        assert_eq!(w, vec![0.125, 0.375, 0.375, 0.125]);
        let idx: Vec<usize> = out.taps.iter().map(|t| t.index).collect();
        assert_eq!(idx, vec![0, 0, 1, 2]);
        assert!(!out.is_interior());
        assert!(plan.outputs[1].is_interior());
    }

    #[test]
    fn nearest_tie_takes_lower_index() {
        let plan = build_tap_plan(&ChannelSpec::nearest(sf("0.5")), 4, 2).unwrap();
        assert_eq!(plan.outputs[1].center, Rational::new(5, 2));
        assert_eq!(plan.outputs[1].taps.len(), 1);
        assert_eq!(plan.outputs[1].taps[0].index, 2);
        assert_eq!(plan.outputs[1].taps[0].weight, 1.0);
    }

    #[test]
    fn extent_mismatch_is_rejected() {
        assert!(build_tap_plan(&ChannelSpec::bilinear(sf("0.5"), false), 4, 3).is_err());
    }

    #[test]
    fn reflection_matches_symmetric_padding() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(-7, 3), 0);
    }

    #[test]
    fn row_example() {
        let g = PixelGrid::new(1, 4, vec![10, 20, 30, 40]).unwrap();
        let out = resize(&g, &ChannelSpec::bilinear(sf("0.5"), false)).unwrap();
        assert_eq!(out.data(), &[15, 35]);
    }

    #[test]
    fn output_dims_use_ceiling() {
        let g = PixelGrid::filled(7, 10, 3);
        let out = resize(&g, &ChannelSpec::bicubic(sf("0.3"), true)).unwrap();
        assert_eq!(out.dims(), (3, 3));
    }

    #[test]
    fn block_sizes() {
        let b = interpolation_block(&ChannelSpec::bilinear(sf("0.5"), false), (64, 64), 10, 10).unwrap();
        assert_eq!(b.dims(), (2, 2));
        let b = interpolation_block(&ChannelSpec::bilinear(sf("0.5"), true), (64, 64), 10, 10).unwrap();
        assert_eq!(b.dims(), (4, 4));
        let b = interpolation_block(&ChannelSpec::bicubic(sf("0.25"), true), (128, 128), 10, 10).unwrap();
        assert_eq!(b.dims(), (16, 16));
        let total: f64 = b.weights.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eval_matches_full_resize() {
        let g = PixelGrid::from_fn(40, 37, |i, j| ((i * 31 + j * 17 + i * j) % 256) as u8);
        let r = Resampler::new(&ChannelSpec::bicubic(sf("0.7"), true), g.dims()).unwrap();
        let real = r.resize_real(&g).unwrap();
        let (dh, dw) = r.dst_dims();
        for u in 0..dh {
            for v in 0..dw {
                assert_eq!(r.eval_real(|i, j| g.get(i, j), u, v).to_bits(), real[u * dw + v].to_bits());
            }
        }
    }

    #[test]
    fn quantize_rounds_half_away_and_clamps() {
        assert_eq!(quantize(15.5), 16);
        assert_eq!(quantize(15.499999), 15);
        assert_eq!(quantize(42.49999999999999289), 43);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(300.2), 255);
    }

    #[test]
    fn spec_json_shape() {
        let spec: ChannelSpec =
            serde_json::from_str(r#"{"family":"bicubic","antialiasing":true,"sf":0.3}"#).unwrap();
        assert_eq!(spec.bicubic_a, -0.5);
        assert_eq!(spec.sf.ratio(), Rational::new(3, 10));
        let back = serde_json::to_value(spec).unwrap();
        assert_eq!(back["sf"], 0.3);
    }
}
