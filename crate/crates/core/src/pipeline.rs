//! End-to-end embed, extract, verify and sweep.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{build_embed_plan, verify_plan, DesignParams, EmbedPlan, Lattice, PlanOptions};
use crate::codec::{self, ChangeVector, StcCode};
use crate::cost::{CostMap, CostVariant};
use crate::error::{Error, Result};
use crate::pixelgrid::{DeltaMap, PixelGrid};
use crate::resampler::{resize, ChannelSpec, Resampler};
use crate::solver;

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyLattice {
    pub row_offset: usize,
    pub col_offset: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Everything the receiver needs besides the scaled stego image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StegoKey {
    pub spec: ChannelSpec,
    pub s: usize,
    pub lattice: KeyLattice,
    pub cover_dims: (usize, usize),
    pub stc: StcCode,
    pub seed: u64,
}

impl StegoKey {
    pub fn from_plan(plan: &EmbedPlan, stc: &StcCode, seed: u64) -> Self {
        let l = plan.lattice;
        Self {
            spec: plan.channel,
            s: l.s,
            lattice: KeyLattice {
                row_offset: l.row_offset,
                col_offset: l.col_offset,
                rows: l.rows,
                cols: l.cols,
            },
            cover_dims: plan.cover_dims,
            stc: stc.clone(),
            seed,
        }
    }

    pub fn lattice(&self) -> Lattice {
        Lattice {
            s: self.s,
            row_offset: self.lattice.row_offset,
            col_offset: self.lattice.col_offset,
            rows: self.lattice.rows,
            cols: self.lattice.cols,
        }
    }

    pub fn scaled_dims(&self) -> (usize, usize) {
        self.spec.scaled_dims(self.cover_dims)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate().map_err(|e| Error::Key(e.to_string()))?;
        self.stc.validate()?;
        if !self.lattice().fits(self.scaled_dims()) {
            return Err(Error::Key("lattice does not fit the scaled image".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let key: StegoKey = serde_json::from_str(text).map_err(|e| Error::Key(e.to_string()))?;
        key.validate()?;
        Ok(key)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub channel: ChannelSpec,
    /// Bits per scaled-image pixel.
    pub payload: f64,
    pub cost: CostVariant,
    pub interval: Option<usize>,
    pub offset: Option<(usize, usize)>,
    pub seed: u64,
    pub code: StcCode,
    /// Reports flag runs slower than this. Default sized for 512x512 covers.
    pub time_budget_ms: Option<u64>,
}

pub const DEFAULT_TIME_BUDGET_MS: u64 = 20_000;

impl RunConfig {
    pub fn new(channel: ChannelSpec) -> Self {
        Self {
            channel,
            payload: 0.05,
            cost: CostVariant::default(),
            interval: None,
            offset: None,
            seed: 0,
            code: StcCode::default(),
            time_budget_ms: Some(DEFAULT_TIME_BUDGET_MS),
        }
    }

    pub fn plan_options(&self) -> PlanOptions {
        PlanOptions {
            interval: self.interval,
            offset: self.offset,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "{} {} a={} s={}",
            self.channel,
            self.cost,
            self.payload,
            self.interval.map_or_else(|| "auto".to_string(), |s| s.to_string())
        )
    }
}

#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub stego: PixelGrid,
    pub delta: DeltaMap,
    pub key: StegoKey,
    /// Plan after any wet escalation.
    pub plan: EmbedPlan,
    pub scaled: PixelGrid,
    pub changes: ChangeVector,
    pub message_bits: usize,
    pub wet_retries: usize,
}

impl EmbedOutcome {
    pub fn l1(&self) -> u64 {
        self.delta.l1_norm()
    }

    pub fn changed_sites(&self) -> usize {
        self.changes.iter().filter(|&&d| d != 0).count()
    }
}

type Encoder<'a> = dyn Fn(&[u8], &[f64]) -> Result<Vec<bool>> + 'a;

fn embed_with(cover: &PixelGrid, config: &RunConfig, message_bits: usize, encode: &Encoder<'_>) -> Result<EmbedOutcome> {
    let mut plan = build_embed_plan(cover, &config.channel, config.plan_options())?;
    let scaled = plan.resampler().resize(cover)?;
    let mut costs = config.cost.assemble(&plan, cover, &scaled)?;
    let lsb = codec::lattice_lsb(&scaled, &plan.lattice)?;
    let mut wet_retries = 0;
    loop {
        let flips = encode(&lsb, &codec::flip_costs(&costs))?;
        let (changes, _) = codec::apply_changes(&plan, &scaled, &flips, &costs)?;
        let (delta, failed) = solver::solve_sites(&plan, cover, &changes)?;
        if failed.is_empty() {
            let stego = cover.apply_delta(&delta)?;
            return Ok(EmbedOutcome {
                key: StegoKey::from_plan(&plan, &config.code, config.seed),
                stego,
                delta,
                plan,
                scaled,
                changes,
                message_bits,
                wet_retries,
            });
        }
        if wet_retries == 1 {
            return Err(Error::SolverFailure(failed.iter().map(|&k| plan.sites[k].y).collect()));
        }
        log::warn!("{} site(s) unsolvable; marking them wet and re-embedding", failed.len());
        for k in failed {
            let sign = changes[k] as i32;
            plan.make_wet(k, sign);
            costs.set_wet(k, sign);
        }
        wet_retries += 1;
    }
}

/// Embeds raw message bits over the whole lattice; the receiver must know
/// the bit count.
pub fn embed_bits(cover: &PixelGrid, config: &RunConfig, bits: &[u8]) -> Result<EmbedOutcome> {
    let code = config.code.clone();
    embed_with(cover, config, bits.len(), &|lsb, fc| codec::stc_embed_bits(lsb, fc, bits, &code))
}

/// Embeds a length-prefixed byte message. An empty message leaves the cover
/// untouched.
pub fn embed_message(cover: &PixelGrid, config: &RunConfig, message: &[u8]) -> Result<EmbedOutcome> {
    let code = config.code.clone();
    if message.is_empty() {
        return embed_with(cover, config, 0, &|lsb, _| Ok(vec![false; lsb.len()]));
    }
    embed_with(cover, config, codec::LENGTH_BITS + 8 * message.len(), &|lsb, fc| {
        codec::embed_framed(lsb, fc, message, &code)
    })
}

fn check_scaled(key: &StegoKey, scaled: &PixelGrid) -> Result<()> {
    if scaled.dims() != key.scaled_dims() {
        return Err(Error::DimensionMismatch {
            expected: key.scaled_dims(),
            found: scaled.dims(),
        });
    }
    Ok(())
}

/// Recovers a framed message from the scaled stego image and the key alone.
pub fn extract_message(scaled_stego: &PixelGrid, key: &StegoKey) -> Result<Vec<u8>> {
    check_scaled(key, scaled_stego)?;
    let lsb = codec::lattice_lsb(scaled_stego, &key.lattice())?;
    codec::extract_framed(&lsb, &key.stc)
}

pub fn extract_bits(scaled_stego: &PixelGrid, key: &StegoKey, expected_bits: usize) -> Result<Vec<u8>> {
    check_scaled(key, scaled_stego)?;
    codec::extract(scaled_stego, &key.lattice(), &key.stc, expected_bits)
}

/// Message length in bytes for a payload rate, clipped to what framing allows.
pub fn message_len_for(config: &RunConfig, cover_dims: (usize, usize), sites: usize) -> usize {
    let (h, w) = config.channel.scaled_dims(cover_dims);
    let wanted = (config.payload * (h * w) as f64 / 8.0).floor() as usize;
    wanted.min(codec::framed_capacity_bytes(sites))
}

pub fn random_message(len: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d65_7373_6167_65);
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub embed_ms: f64,
    pub verify_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub image: String,
    pub config: String,
    pub recovered: bool,
    pub l1_distortion: u64,
    pub changed_pixels: usize,
    pub changed_sites: usize,
    pub sites: usize,
    pub wet_sites: usize,
    pub capacity_bits: f64,
    pub message_bits: usize,
    /// Bits per scaled-image pixel.
    pub rate_scaled: f64,
    /// Bits per cover pixel.
    pub rate_cover: f64,
    pub wet_retries: usize,
    /// Pixels changed by more than their site bound or outside their mask.
    pub bound_violations: usize,
    /// Unchanged sites whose scaled value moved, or changed sites that missed.
    pub noninterference_violations: usize,
    /// Changes outside the union of supports, or plan-structure failures.
    pub locality_violations: usize,
    pub over_budget: bool,
    pub timings: Timings,
    pub error: Option<String>,
}

/// Audits an embedding against the channel and the plan's contracts.
pub fn audit(cover: &PixelGrid, outcome: &EmbedOutcome, report: &mut VerifyReport) -> Result<()> {
    let plan = &outcome.plan;
    let r = Resampler::new(&plan.channel, cover.dims())?;
    let before = r.resize(cover)?;
    let after = r.resize(&outcome.stego)?;

    let mut owner: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (k, site) in plan.sites.iter().enumerate() {
        for p in &site.support {
            owner.insert((p.row, p.col), k);
        }
    }
    let structure = verify_plan(plan, cover);
    report.locality_violations = structure.failures.len();
    for (&(i, j), &d) in outcome.delta.iter() {
        let Some(&k) = owner.get(&(i, j)) else {
            report.locality_violations += 1;
            continue;
        };
        let site = &plan.sites[k];
        let change = outcome.changes[k] as i32;
        if change == 0 || d.signum() != change {
            report.locality_violations += 1;
            continue;
        }
        let dir = site.direction(change);
        let masked = site
            .support
            .iter()
            .zip(&dir.mask)
            .any(|(p, &m)| m && p.row == i && p.col == j);
        if !masked || d.unsigned_abs() > dir.bound as u32 || dir.bound > crate::analysis::MAX_BOUND {
            report.bound_violations += 1;
        }
    }
    // out-of-range stego pixels are unrepresentable: apply_delta rejects them

    for (k, site) in plan.sites.iter().enumerate() {
        let (u, v) = site.y;
        let want = before.get(u, v) as i32 + outcome.changes[k] as i32;
        if after.get(u, v) as i32 != want {
            report.noninterference_violations += 1;
        }
    }
    Ok(())
}

/// Embed, pass through the real channel, extract with the key, and audit.
pub fn verify(cover: &PixelGrid, message: &[u8], config: &RunConfig) -> VerifyReport {
    let mut report = VerifyReport {
        config: config.label(),
        ..VerifyReport::default()
    };
    let start = Instant::now();
    let outcome = match embed_message(cover, config, message) {
        Ok(o) => o,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    report.timings.embed_ms = start.elapsed().as_secs_f64() * 1e3;
    let mid = Instant::now();
    fill_counts(cover, &outcome, &mut report);
    match resize(&outcome.stego, &config.channel) {
        Ok(scaled) => {
            report.recovered = if message.is_empty() {
                outcome.delta.is_empty()
            } else {
                extract_message(&scaled, &outcome.key).is_ok_and(|m| m == message)
            };
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    if let Err(e) = audit(cover, &outcome, &mut report) {
        report.error = Some(e.to_string());
    }
    report.timings.verify_ms = mid.elapsed().as_secs_f64() * 1e3;
    let total = start.elapsed().as_millis() as u64;
    report.over_budget = config.time_budget_ms.is_some_and(|b| total > b);
    report
}

/// Raw-bit variant of [`verify`], for lattices too small to hold a header.
pub fn verify_bits(cover: &PixelGrid, bits: &[u8], config: &RunConfig) -> VerifyReport {
    let mut report = VerifyReport {
        config: config.label(),
        ..VerifyReport::default()
    };
    let start = Instant::now();
    let outcome = match embed_bits(cover, config, bits) {
        Ok(o) => o,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    report.timings.embed_ms = start.elapsed().as_secs_f64() * 1e3;
    let mid = Instant::now();
    fill_counts(cover, &outcome, &mut report);
    report.recovered = resize(&outcome.stego, &config.channel)
        .and_then(|scaled| extract_bits(&scaled, &outcome.key, bits.len()))
        .is_ok_and(|b| b == bits);
    if let Err(e) = audit(cover, &outcome, &mut report) {
        report.error = Some(e.to_string());
    }
    report.timings.verify_ms = mid.elapsed().as_secs_f64() * 1e3;
    report
}

fn fill_counts(cover: &PixelGrid, outcome: &EmbedOutcome, report: &mut VerifyReport) {
    let (h, w) = outcome.plan.scaled_dims;
    report.l1_distortion = outcome.l1();
    report.changed_pixels = outcome.delta.len();
    report.changed_sites = outcome.changed_sites();
    report.sites = outcome.plan.sites.len();
    report.wet_sites = outcome.plan.wet_both();
    report.capacity_bits = outcome.plan.capacity_bits;
    report.message_bits = outcome.message_bits;
    report.rate_scaled = outcome.message_bits as f64 / (h * w) as f64;
    report.rate_cover = outcome.message_bits as f64 / (cover.height() * cover.width()) as f64;
    report.wet_retries = outcome.wet_retries;
}

/// One image under one configuration, with a seeded random message.
pub fn verify_random(name: &str, cover: &PixelGrid, config: &RunConfig) -> VerifyReport {
    let sites = match build_embed_plan(cover, &config.channel, config.plan_options()) {
        Ok(p) => p.sites.len(),
        Err(e) => {
            return VerifyReport {
                image: name.to_string(),
                config: config.label(),
                error: Some(e.to_string()),
                ..VerifyReport::default()
            }
        }
    };
    let len = message_len_for(config, cover.dims(), sites);
    let message = random_message(len, config.seed);
    let mut report = verify(cover, &message, config);
    report.image = name.to_string();
    report
}

/// Every (image, config) pair, in parallel; rows sorted by image, then config.
pub fn sweep(images: &[(String, PixelGrid)], configs: &[RunConfig]) -> Result<Vec<(usize, VerifyReport)>> {
    if images.is_empty() {
        return Err(Error::Infeasible("no input images".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..images.len())
        .flat_map(|i| (0..configs.len()).map(move |c| (i, c)))
        .collect();
    let mut rows: Vec<(usize, usize, VerifyReport)> = jobs
        .par_iter()
        .map(|&(i, c)| (i, c, verify_random(&images[i].0, &images[i].1, &configs[c])))
        .collect();
    rows.sort_by(|a, b| images[a.0].0.cmp(&images[b.0].0).then(a.1.cmp(&b.1)));
    Ok(rows.into_iter().map(|(_, c, r)| (c, r)).collect())
}

fn csv_row(
    w: &mut csv::Writer<Vec<u8>>,
    kind: &str,
    image: &str,
    config: &RunConfig,
    fields: [String; 10],
) -> csv::Result<()> {
    let [recovered, l1, changed, sites, wet, capacity, bits, retries, runtime, error] = fields;
    w.write_record([
        kind,
        image,
        &config.channel.family.to_string(),
        &config.channel.antialiasing.to_string(),
        &config.channel.sf.to_string(),
        &config.cost.to_string(),
        &config.payload.to_string(),
        &config.interval.map_or(String::new(), |s| s.to_string()),
        &config.seed.to_string(),
        &recovered,
        &l1,
        &changed,
        &sites,
        &wet,
        &capacity,
        &bits,
        &retries,
        &runtime,
        &error,
    ])
}

/// CSV with a `# schema_version=1` first line, one row per (image, config)
/// and one aggregate row per config.
pub fn sweep_csv(configs: &[RunConfig], rows: &[(usize, VerifyReport)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Infeasible(format!("csv: {e}"));
    w.write_record([
        "kind",
        "image",
        "family",
        "antialias",
        "sf",
        "cost",
        "payload",
        "interval",
        "seed",
        "recovered",
        "l1",
        "changed_pixels",
        "sites",
        "wet_sites",
        "capacity_bits",
        "message_bits",
        "wet_retries",
        "runtime_ms",
        "error",
    ])
    .map_err(io)?;
    for (c, r) in rows {
        csv_row(
            &mut w,
            "image",
            &r.image,
            &configs[*c],
            [
                (r.recovered as u8).to_string(),
                r.l1_distortion.to_string(),
                r.changed_pixels.to_string(),
                r.sites.to_string(),
                r.wet_sites.to_string(),
                r.capacity_bits.to_string(),
                r.message_bits.to_string(),
                r.wet_retries.to_string(),
                format!("{:.3}", r.timings.embed_ms + r.timings.verify_ms),
                r.error.clone().unwrap_or_default(),
            ],
        )
        .map_err(io)?;
    }
    for (c, config) in configs.iter().enumerate() {
        let group: Vec<&VerifyReport> = rows.iter().filter(|(k, _)| *k == c).map(|(_, r)| r).collect();
        if group.is_empty() {
            continue;
        }
        let n = group.len() as f64;
        let mean = |f: &dyn Fn(&VerifyReport) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
        let errors = group.iter().filter(|r| r.error.is_some()).count();
        csv_row(
            &mut w,
            "aggregate",
            "*",
            config,
            [
                format!("{:.4}", mean(&|r| r.recovered as u8 as f64)),
                format!("{:.2}", mean(&|r| r.l1_distortion as f64)),
                format!("{:.2}", mean(&|r| r.changed_pixels as f64)),
                format!("{:.2}", mean(&|r| r.sites as f64)),
                format!("{:.2}", mean(&|r| r.wet_sites as f64)),
                format!("{:.2}", mean(&|r| r.capacity_bits)),
                format!("{:.2}", mean(&|r| r.message_bits as f64)),
                format!("{:.2}", mean(&|r| r.wet_retries as f64)),
                format!("{:.3}", mean(&|r| r.timings.embed_ms + r.timings.verify_ms)),
                if errors > 0 { format!("{errors} failed") } else { String::new() },
            ],
        )
        .map_err(io)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Infeasible(e.to_string()))?)
        .expect("csv output is utf-8");
    Ok(format!("# schema_version={CSV_SCHEMA_VERSION}\n{body}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub channel: ChannelSpec,
    pub cover_dims: (usize, usize),
    pub scaled_dims: (usize, usize),
    pub design: DesignParams,
    pub lattice: Lattice,
    pub sites: usize,
    pub wet_plus: usize,
    pub wet_minus: usize,
    pub wet_both: usize,
    pub capacity_bits: f64,
    pub framed_capacity_bytes: usize,
    /// dPI value -> cover pixel count, with respect to the lattice.
    pub dpi_histogram: BTreeMap<u32, usize>,
    pub plan_failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub costs: Option<CostMap>,
}

pub fn analyze(cover: &PixelGrid, config: &RunConfig, with_costs: bool) -> Result<AnalyzeReport> {
    let plan = build_embed_plan(cover, &config.channel, config.plan_options())?;
    let coords: Vec<(usize, usize)> = plan.sites.iter().map(|s| s.y).collect();
    let dpi = crate::analysis::compute_dpi(&config.channel, cover.dims(), &coords)?;
    let report = verify_plan(&plan, cover);
    let costs = if with_costs {
        let scaled = plan.resampler().resize(cover)?;
        Some(config.cost.assemble(&plan, cover, &scaled)?)
    } else {
        None
    };
    Ok(AnalyzeReport {
        channel: config.channel,
        cover_dims: plan.cover_dims,
        scaled_dims: plan.scaled_dims,
        design: plan.params.clone(),
        lattice: plan.lattice,
        sites: plan.sites.len(),
        wet_plus: report.wet_plus,
        wet_minus: report.wet_minus,
        wet_both: report.wet_both,
        capacity_bits: plan.capacity_bits,
        framed_capacity_bytes: codec::framed_capacity_bytes(plan.sites.len()),
        dpi_histogram: dpi.histogram(),
        plan_failures: report.failures,
        costs,
    })
}

/// Plain and Pro assemblies of one base cost on identical inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssemblyComparison {
    pub image: String,
    pub channel: String,
    pub base: String,
    pub plain_l1: u64,
    pub pro_l1: u64,
    pub plain_recovered: bool,
    pub pro_recovered: bool,
}

pub fn compare_assemblies(name: &str, cover: &PixelGrid, config: &RunConfig) -> AssemblyComparison {
    use crate::cost::Assembly;
    let run = |assembly| {
        let mut c = config.clone();
        c.cost = CostVariant::new(config.cost.base, assembly);
        verify_random(name, cover, &c)
    };
    let plain = run(Assembly::Plain);
    let pro = run(Assembly::Pro);
    AssemblyComparison {
        image: name.to_string(),
        channel: config.channel.label(),
        base: format!("{:?}", config.cost.base).to_lowercase(),
        plain_l1: plain.l1_distortion,
        pro_l1: pro.l1_distortion,
        plain_recovered: plain.recovered,
        pro_recovered: pro.recovered,
    }
}
