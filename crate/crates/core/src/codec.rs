//! Binary syndrome-trellis coding on the LSBs of the embeddable lattice,
//! change-direction selection, and a payload-limited sender simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{EmbedPlan, Lattice};
use crate::cost::CostMap;
use crate::error::{Error, Result};
use crate::pixelgrid::PixelGrid;

/// Per-site change in the scaled image, each in {-1, 0, +1}.
pub type ChangeVector = Vec<i8>;

/// Default submatrix column for height 10, top row first.
pub const DEFAULT_COLUMN: [u8; 10] = [1, 1, 0, 1, 0, 0, 0, 1, 1, 1];

const DEFAULT_HEIGHT: usize = 10;
const DEFAULT_WIDTH: usize = 32;
const MAX_HEIGHT: usize = 20;

/// Parity-check structure: block `b` of the code uses columns
/// `columns[0], columns[1], ...` (cycled) placed on rows `b..b+height`.
/// Bit `i` of a column is row `b + i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StcCode {
    pub height: usize,
    pub columns: Vec<u32>,
}

fn pack_column(bits: &[u8]) -> u32 {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | ((b as u32 & 1) << i))
}

impl Default for StcCode {
    fn default() -> Self {
        StcCode::generate(DEFAULT_HEIGHT, DEFAULT_WIDTH, pack_column(&DEFAULT_COLUMN))
    }
}

impl StcCode {
    pub fn new(height: usize, columns: Vec<u32>) -> Result<Self> {
        let code = Self { height, columns };
        code.validate()?;
        Ok(code)
    }

    /// `first` followed by `width - 1` fixed pseudo-random columns.
    pub fn generate(height: usize, width: usize, first: u32) -> Self {
        let ends = 1 | (1u32 << (height - 1));
        let full = if height == 32 { u32::MAX } else { (1u32 << height) - 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(0x5354_4321 ^ height as u64);
        let mut columns = vec![first];
        while columns.len() < width.max(1) {
            let c = (rng.random::<u32>() & full) | ends;
            if !columns.contains(&c) || columns.len() >= (1 << height.saturating_sub(2)) {
                columns.push(c);
            }
        }
        Self { height, columns }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.height > MAX_HEIGHT {
            return Err(Error::Key(format!("code height {} outside 1..={MAX_HEIGHT}", self.height)));
        }
        if self.columns.is_empty() {
            return Err(Error::Key("code has no columns".into()));
        }
        let top = 1u32 << (self.height - 1);
        for &c in &self.columns {
            if c >> self.height != 0 || c & 1 == 0 || c & top == 0 {
                return Err(Error::Key(format!(
                    "column {c:#b} must fit in {} rows with first and last rows set",
                    self.height
                )));
            }
        }
        Ok(())
    }

    /// Block widths for `m` message bits over `n` cover bits.
    fn widths(n: usize, m: usize) -> impl Iterator<Item = usize> {
        (0..m).map(move |b| (b + 1) * n / m - b * n / m)
    }
}

/// `H * bits` for a message of `m` bits.
pub fn syndrome(bits: &[u8], m: usize, code: &StcCode) -> Result<Vec<u8>> {
    code.validate()?;
    let n = bits.len();
    if m > n {
        return Err(Error::Infeasible(format!("{m} message bits exceed {n} cover bits")));
    }
    let mut out = vec![0u8; m];
    let mut j = 0;
    for (b, width) in StcCode::widths(n, m).enumerate() {
        for k in 0..width {
            if bits[j] & 1 == 1 {
                let col = code.columns[k % code.columns.len()];
                for (i, o) in out[b..].iter_mut().take(code.height).enumerate() {
                    *o ^= ((col >> i) & 1) as u8;
                }
            }
            j += 1;
        }
    }
    Ok(out)
}

/// Minimum-cost bit flips so that `syndrome(lsb ^ flips) == message`.
/// Infinite costs forbid a flip.
pub fn stc_embed_bits(lsb: &[u8], flip_costs: &[f64], message: &[u8], code: &StcCode) -> Result<Vec<bool>> {
    code.validate()?;
    let n = lsb.len();
    let m = message.len();
    if flip_costs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: (n, 1),
            found: (flip_costs.len(), 1),
        });
    }
    if m > n {
        return Err(Error::Infeasible(format!("{m} message bits exceed {n} usable sites")));
    }
    if m == 0 {
        return Ok(vec![false; n]);
    }
    let h = code.height;
    let states = 1usize << h;
    let words = states.div_ceil(64);
    let mut cost = vec![f64::INFINITY; states];
    let mut next = vec![f64::INFINITY; states];
    cost[0] = 0.0;
    // bit t of decisions[j]: stego bit j was 1 on the best path into state t
    let mut decisions = vec![0u64; n * words];

    let mut j = 0;
    for (b, width) in StcCode::widths(n, m).enumerate() {
        let live_rows = h.min(m - b);
        let row_mask = ((1u64 << live_rows) - 1) as usize;
        for k in 0..width {
            let col = code.columns[k % code.columns.len()] as usize & row_mask;
            let (c0, c1) = if lsb[j] & 1 == 0 {
                (0.0, flip_costs[j])
            } else {
                (flip_costs[j], 0.0)
            };
            let dec = &mut decisions[j * words..(j + 1) * words];
            for t in 0..states {
                let stay = cost[t] + c0;
                let take = cost[t ^ col] + c1;
                if take < stay {
                    next[t] = take;
                    dec[t / 64] |= 1 << (t % 64);
                } else {
                    next[t] = stay;
                }
            }
            std::mem::swap(&mut cost, &mut next);
            j += 1;
        }
        // row b is complete: keep states agreeing with the message, shift out
        let want = (message[b] & 1) as usize;
        for t in 0..states / 2 {
            next[t] = cost[(t << 1) | want];
        }
        for t in states / 2..states {
            next[t] = f64::INFINITY;
        }
        std::mem::swap(&mut cost, &mut next);
    }

    let (mut state, best) = cost
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(t, &c)| (t, c))
        .expect("state space is nonempty");
    if !best.is_finite() {
        return Err(Error::Infeasible(
            "no stego sequence avoids every wet site for this message".into(),
        ));
    }

    let mut flips = vec![false; n];
    let mut j = n;
    let widths: Vec<usize> = StcCode::widths(n, m).collect();
    for b in (0..m).rev() {
        state = (state << 1) | (message[b] & 1) as usize;
        state &= states - 1;
        let live_rows = h.min(m - b);
        let row_mask = ((1u64 << live_rows) - 1) as usize;
        for k in (0..widths[b]).rev() {
            j -= 1;
            let dec = decisions[j * words + state / 64] >> (state % 64) & 1;
            let y = dec as u8;
            flips[j] = y != lsb[j] & 1;
            if y == 1 {
                state ^= code.columns[k % code.columns.len()] as usize & row_mask;
            }
        }
    }
    debug_assert_eq!(state, 0);
    Ok(flips)
}

/// Cost of flipping each site's LSB: the cheaper usable direction.
pub fn flip_costs(costs: &CostMap) -> Vec<f64> {
    costs
        .rho_plus
        .iter()
        .zip(&costs.rho_minus)
        .map(|(&p, &m)| p.min(m))
        .collect()
}

/// Trellis embedding of `message` into the lattice LSBs `lsb`.
pub fn stc_embed(lsb: &[u8], costs: &CostMap, message: &[u8], code: &StcCode) -> Result<Vec<bool>> {
    stc_embed_bits(lsb, &flip_costs(costs), message, code)
}

/// Least significant bits of the scaled image at the lattice, row-major.
pub fn lattice_lsb(scaled: &PixelGrid, lattice: &Lattice) -> Result<Vec<u8>> {
    if !lattice.fits(scaled.dims()) {
        return Err(Error::DimensionMismatch {
            expected: (
                lattice.row_offset + lattice.rows.saturating_sub(1) * lattice.s + 1,
                lattice.col_offset + lattice.cols.saturating_sub(1) * lattice.s + 1,
            ),
            found: scaled.dims(),
        });
    }
    Ok(lattice.coords().map(|(u, v)| scaled.get(u, v) & 1).collect())
}

/// Turns flips into signed changes and applies them to the scaled image.
pub fn apply_changes(
    plan: &EmbedPlan,
    scaled: &PixelGrid,
    flips: &[bool],
    costs: &CostMap,
) -> Result<(ChangeVector, PixelGrid)> {
    if flips.len() != plan.sites.len() || costs.len() != plan.sites.len() {
        return Err(Error::PlanInconsistent(format!(
            "{} flips and {} costs for {} sites",
            flips.len(),
            costs.len(),
            plan.sites.len()
        )));
    }
    let mut out = scaled.clone();
    let mut changes = vec![0i8; flips.len()];
    for (k, site) in plan.sites.iter().enumerate().filter(|(k, _)| flips[*k]) {
        let (rp, rm) = (costs.rho_plus[k], costs.rho_minus[k]);
        let y = scaled.get(site.y.0, site.y.1);
        let plus_ok = rp.is_finite() && y < 255;
        let minus_ok = rm.is_finite() && y > 0;
        let d: i8 = match (plus_ok, minus_ok) {
            (true, true) if rp <= rm => 1,
            (true, false) => 1,
            (_, true) => -1,
            (false, false) => {
                return Err(Error::PlanInconsistent(format!("flip requested at wet site {:?}", site.y)));
            }
        };
        changes[k] = d;
        out.set(site.y.0, site.y.1, (y as i16 + d as i16) as u8);
    }
    Ok((changes, out))
}

/// Reads `expected_bits` message bits from a scaled stego image.
pub fn extract(scaled_stego: &PixelGrid, lattice: &Lattice, code: &StcCode, expected_bits: usize) -> Result<Vec<u8>> {
    let lsb = lattice_lsb(scaled_stego, lattice)?;
    syndrome(&lsb, expected_bits, code)
}

/// Sites reserved for the 32-bit length header in framed messages.
pub fn header_sites(n: usize) -> usize {
    (n / 4).clamp(32, 128).min(n)
}

pub const LENGTH_BITS: usize = 32;

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes.iter().flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1)).collect()
}

pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1)))
        .collect()
}

/// Largest framed message, in bytes, that fits `n` lattice sites.
pub fn framed_capacity_bytes(n: usize) -> usize {
    if n < LENGTH_BITS {
        return 0;
    }
    (n - header_sites(n)) / 8
}

/// Trellis embedding of a length-prefixed message: the header occupies the
/// first [`header_sites`] sites, the body the rest.
pub fn embed_framed(lsb: &[u8], flip_costs: &[f64], message: &[u8], code: &StcCode) -> Result<Vec<bool>> {
    let n = lsb.len();
    if n < LENGTH_BITS {
        return Err(Error::Infeasible(format!("{n} sites cannot hold a length header")));
    }
    let k = header_sites(n);
    let body_bits = message.len() * 8;
    if body_bits > n - k || message.len() > u32::MAX as usize {
        return Err(Error::Infeasible(format!(
            "{} bytes exceed the framed capacity of {} bytes",
            message.len(),
            framed_capacity_bytes(n)
        )));
    }
    let header = bytes_to_bits(&(message.len() as u32).to_be_bytes());
    let mut flips = stc_embed_bits(&lsb[..k], &flip_costs[..k], &header, code)?;
    flips.extend(stc_embed_bits(&lsb[k..], &flip_costs[k..], &bytes_to_bits(message), code)?);
    Ok(flips)
}

/// Inverse of [`embed_framed`].
pub fn extract_framed(lsb: &[u8], code: &StcCode) -> Result<Vec<u8>> {
    let n = lsb.len();
    if n < LENGTH_BITS {
        return Err(Error::LengthPrefix(format!("{n} sites cannot hold a length header")));
    }
    let k = header_sites(n);
    let header = syndrome(&lsb[..k], LENGTH_BITS, code)?;
    let len = u32::from_be_bytes(bits_to_bytes(&header).try_into().expect("four header bytes")) as usize;
    if len.checked_mul(8).is_none_or(|bits| bits > n - k) {
        return Err(Error::LengthPrefix(format!(
            "declared length {len} bytes exceeds the {} bytes this key can carry",
            framed_capacity_bytes(n)
        )));
    }
    Ok(bits_to_bytes(&syndrome(&lsb[k..], len * 8, code)?))
}

fn ternary_probs(rho_plus: f64, rho_minus: f64, lambda: f64) -> (f64, f64) {
    let e = |rho: f64| if rho.is_finite() { (-lambda * rho).exp() } else { 0.0 };
    let (ep, em) = (e(rho_plus), e(rho_minus));
    let z = 1.0 + ep + em;
    (ep / z, em / z)
}

fn h2(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Total ternary entropy in bits at multiplier `lambda`.
pub fn total_entropy(costs: &CostMap, lambda: f64) -> f64 {
    costs
        .rho_plus
        .iter()
        .zip(&costs.rho_minus)
        .map(|(&rp, &rm)| {
            let (p, m) = ternary_probs(rp, rm, lambda);
            h2(p) + h2(m) + h2(1.0 - p - m)
        })
        .sum()
}

/// Largest payload the simulator accepts: `sum log2(1 + usable directions)`.
pub fn max_payload(costs: &CostMap) -> f64 {
    costs
        .rho_plus
        .iter()
        .zip(&costs.rho_minus)
        .map(|(rp, rm)| (1.0 + rp.is_finite() as u8 as f64 + rm.is_finite() as u8 as f64).log2())
        .sum()
}

/// Multiplier whose change distribution carries exactly `payload_bits`.
/// Returns `f64::INFINITY` for a zero payload.
pub fn solve_lambda(costs: &CostMap, payload_bits: f64) -> Result<f64> {
    let max = max_payload(costs);
    if !(payload_bits >= 0.0) || payload_bits > max * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "payload {payload_bits} bits exceeds the {max} bits these costs admit"
        )));
    }
    if payload_bits == 0.0 {
        return Ok(f64::INFINITY);
    }
    if payload_bits >= max {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while total_entropy(costs, hi) > payload_bits {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Infeasible("entropy does not fall to the payload".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total_entropy(costs, mid) > payload_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Samples changes from the optimal payload-limited distribution.
pub fn simulate_optimal(costs: &CostMap, payload_bits: f64, seed: u64) -> Result<ChangeVector> {
    let lambda = solve_lambda(costs, payload_bits)?;
    if lambda.is_infinite() {
        return Ok(vec![0; costs.len()]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(costs
        .rho_plus
        .iter()
        .zip(&costs.rho_minus)
        .map(|(&rp, &rm)| {
            let (p, m) = ternary_probs(rp, rm, lambda);
            let u: f64 = rng.random();
            if u < p {
                1
            } else if u < p + m {
                -1
            } else {
                0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_min(lsb: &[u8], costs: &[f64], msg: &[u8], code: &StcCode) -> f64 {
        let n = lsb.len();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            let stego: Vec<u8> = (0..n).map(|i| lsb[i] ^ ((mask >> i) & 1) as u8).collect();
            if syndrome(&stego, msg.len(), code).unwrap() == msg {
                let c: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| costs[i]).sum();
                best = best.min(c);
            }
        }
        best
    }

    #[test]
    fn default_code_is_valid() {
        let code = StcCode::default();
        code.validate().unwrap();
        assert_eq!(code.columns[0], 0b11_1000_1011);
        assert_eq!(code.height, 10);
    }

    #[test]
    fn already_satisfied_syndrome_needs_no_flips() {
        let code = StcCode::default();
        let lsb: Vec<u8> = (0..40).map(|i| (i * 7 % 3 == 0) as u8).collect();
        let msg = syndrome(&lsb, 12, &code).unwrap();
        let flips = stc_embed_bits(&lsb, &[1.0; 40], &msg, &code).unwrap();
        assert!(flips.iter().all(|&f| !f));
    }

    #[test]
    fn tiny_code_matches_brute_force() {
        let code = StcCode::new(2, vec![0b11]).unwrap();
        for msg in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            for cover in 0u8..16 {
                let lsb: Vec<u8> = (0..4).map(|i| (cover >> i) & 1).collect();
                let flips = stc_embed_bits(&lsb, &[1.0; 4], &msg, &code).unwrap();
                let stego: Vec<u8> = lsb.iter().zip(&flips).map(|(&b, &f)| b ^ f as u8).collect();
                assert_eq!(syndrome(&stego, 2, &code).unwrap(), msg);
                let cost = flips.iter().filter(|&&f| f).count() as f64;
                assert_eq!(cost, brute_min(&lsb, &[1.0; 4], &msg, &code));
            }
        }
    }

    #[test]
    fn wet_site_is_routed_around() {
        let code = StcCode::new(2, vec![0b11]).unwrap();
        let lsb = [0, 0, 0, 0];
        let costs = [f64::INFINITY, 1.0, 1.0, 1.0];
        let msg = [1, 0];
        let flips = stc_embed_bits(&lsb, &costs, &msg, &code).unwrap();
        assert!(!flips[0]);
        let cost: f64 = flips.iter().zip(&costs).filter(|(f, _)| **f).map(|(_, c)| c).sum();
        assert_eq!(cost, brute_min(&lsb, &costs, &msg, &code));
    }

    #[test]
    fn all_wet_is_infeasible() {
        let code = StcCode::default();
        assert!(matches!(
            stc_embed_bits(&[0; 8], &[f64::INFINITY; 8], &[1, 0], &code),
            Err(Error::Infeasible(_))
        ));
        assert!(stc_embed_bits(&[0; 3], &[1.0; 3], &[1, 0, 1, 1], &code).is_err());
    }

    #[test]
    fn framing_round_trip() {
        let code = StcCode::default();
        let n = 600;
        let lsb: Vec<u8> = (0..n).map(|i| ((i * 2654435761usize) >> 7 & 1) as u8).collect();
        let costs: Vec<f64> = (0..n).map(|i| 1.0 + (i % 5) as f64).collect();
        for msg in [&b""[..], b"x", b"hello, scaled world"] {
            let flips = embed_framed(&lsb, &costs, msg, &code).unwrap();
            let stego: Vec<u8> = lsb.iter().zip(&flips).map(|(&b, &f)| b ^ f as u8).collect();
            assert_eq!(extract_framed(&stego, &code).unwrap(), msg);
        }
        assert!(embed_framed(&lsb, &costs, &[0u8; 100], &code).is_err());
    }

    #[test]
    fn bits_bytes_round_trip() {
        let bytes = [0x00, 0xff, 0xa5, 0x3c];
        assert_eq!(bytes_to_bits(&[0xa5])[..], [1, 0, 1, 0, 0, 1, 0, 1]);
        assert_eq!(bits_to_bytes(&bytes_to_bits(&bytes)), bytes);
    }

    #[test]
    fn zero_length_extract_is_empty() {
        let img = PixelGrid::filled(8, 8, 3);
        let lattice = Lattice {
            s: 2,
            row_offset: 1,
            col_offset: 1,
            rows: 3,
            cols: 3,
        };
        assert!(extract(&img, &lattice, &StcCode::default(), 0).unwrap().is_empty());
        let too_far = Lattice { rows: 5, ..lattice };
        assert!(matches!(
            extract(&img, &too_far, &StcCode::default(), 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn map(plus: &[f64], minus: &[f64]) -> CostMap {
        CostMap {
            rho_plus: plus.to_vec(),
            rho_minus: minus.to_vec(),
        }
    }

    #[test]
    fn zero_payload_changes_nothing() {
        let c = map(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert!(simulate_optimal(&c, 0.0, 7).unwrap().iter().all(|&d| d == 0));
    }

    #[test]
    fn maximum_payload_is_uniform() {
        let c = map(&[2.0; 5], &[2.0; 5]);
        let max = 5.0 * 3f64.log2();
        assert_eq!(max_payload(&c), max);
        assert_eq!(solve_lambda(&c, max).unwrap(), 0.0);
        let (p, m) = ternary_probs(2.0, 2.0, 0.0);
        assert!((p - 1.0 / 3.0).abs() < 1e-15 && (m - 1.0 / 3.0).abs() < 1e-15);
        assert!(solve_lambda(&c, max + 0.1).is_err());
    }

    #[test]
    fn entropy_is_calibrated() {
        let plus: Vec<f64> = (0..50).map(|i| 0.5 + (i % 7) as f64).collect();
        let minus: Vec<f64> = (0..50).map(|i| if i % 9 == 0 { f64::INFINITY } else { 1.0 + (i % 4) as f64 }).collect();
        let c = map(&plus, &minus);
        for payload in [1.0, 10.0, 40.0] {
            let lambda = solve_lambda(&c, payload).unwrap();
            let h = total_entropy(&c, lambda);
            assert!((h - payload).abs() <= 1e-6 * payload, "{h} vs {payload}");
        }
    }

    #[test]
    fn simulation_is_seeded_and_respects_wet() {
        let c = map(&[1.0, f64::INFINITY, 1.0, 1.0], &[f64::INFINITY, 1.0, 1.0, 1.0]);
        let a = simulate_optimal(&c, 3.0, 42).unwrap();
        assert_eq!(a, simulate_optimal(&c, 3.0, 42).unwrap());
        for seed in 0..200 {
            let d = simulate_optimal(&c, 3.0, seed).unwrap();
            assert!(d[0] != -1 && d[1] != 1);
        }
    }
}
