//! Colors, three-patch task contexts and difficulty conditions.
//!
//! Colors carry both their sRGB channels and their CIELAB coordinates
//! (D65 white, 2° observer). All perceptual distances are CIE76 ΔE.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WHITE_D65: [f64; 3] = [0.950_47, 1.0, 1.088_83];
const LAB_EPSILON: f64 = 216.0 / 24_389.0;
const LAB_KAPPA: f64 = 24_389.0 / 27.0;

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.240_454_2, -1.537_138_5, -0.498_531_4],
    [-0.969_266_0, 1.876_010_8, 0.041_556_0],
    [0.055_643_4, -0.204_025_9, 1.057_225_2],
];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let cube = f * f * f;
    if cube > LAB_EPSILON {
        cube
    } else {
        (116.0 * f - 16.0) / LAB_KAPPA
    }
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Convert sRGB channels in `[0, 1]` to CIELAB.
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let linear = rgb.map(srgb_to_linear);
    let xyz = mat_vec(&SRGB_TO_XYZ, linear);
    let fx = lab_f(xyz[0] / WHITE_D65[0]);
    let fy = lab_f(xyz[1] / WHITE_D65[1]);
    let fz = lab_f(xyz[2] / WHITE_D65[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Convert CIELAB to (unclamped) sRGB channels.
pub fn lab_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [
        lab_f_inv(fx) * WHITE_D65[0],
        lab_f_inv(fy) * WHITE_D65[1],
        lab_f_inv(fz) * WHITE_D65[2],
    ];
    mat_vec(&XYZ_TO_SRGB, xyz).map(linear_to_srgb)
}

/// CIE76 color difference between two CIELAB triples.
pub fn delta_e_lab(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Color {
    rgb: [f64; 3],
    lab: [f64; 3],
}

impl Color {
    /// Build a color from sRGB channels. Channels are clamped to `[0, 1]`.
    pub fn from_rgb(rgb: [f64; 3]) -> Self {
        let rgb = rgb.map(|c| c.clamp(0.0, 1.0));
        Color {
            rgb,
            lab: rgb_to_lab(rgb),
        }
    }

    /// Build a color from CIELAB, or `None` when it falls outside the sRGB gamut.
    pub fn from_lab(lab: [f64; 3]) -> Option<Self> {
        let rgb = lab_to_rgb(lab);
        const SLACK: f64 = 1e-9;
        if rgb.iter().all(|c| (-SLACK..=1.0 + SLACK).contains(c)) {
            Some(Color {
                rgb: rgb.map(|c| c.clamp(0.0, 1.0)),
                lab,
            })
        } else {
            None
        }
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.rgb
    }

    pub fn lab(&self) -> [f64; 3] {
        self.lab
    }

    pub fn delta_e(&self, other: &Color) -> f64 {
        delta_e_lab(self.lab, other.lab)
    }

    /// `#rrggbb` rendering used by the session API and the UI.
    pub fn hex(&self) -> String {
        let [r, g, b] = self.rgb.map(|c| (c * 255.0).round() as u8);
        format!("#{r:02x}{g:02x}{b:02x}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Far,
    Split,
    Close,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Far, Condition::Split, Condition::Close];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Far => "far",
            Condition::Split => "split",
            Condition::Close => "close",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "far" => Ok(Condition::Far),
            "split" => Ok(Condition::Split),
            "close" => Ok(Condition::Close),
            other => Err(Error::InvalidConfig(format!("unknown condition {other:?}"))),
        }
    }
}

/// ΔE cut-offs separating the three difficulty conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyThresholds {
    /// All pairwise distances below this value make a context `close`.
    pub close_below: f64,
    /// All pairwise distances above this value make a context `far`.
    pub far_above: f64,
}

impl Default for DifficultyThresholds {
    fn default() -> Self {
        DifficultyThresholds {
            close_below: 20.0,
            far_above: 50.0,
        }
    }
}

fn pairwise(patches: &[Color; 3]) -> [f64; 3] {
    [
        patches[0].delta_e(&patches[1]),
        patches[0].delta_e(&patches[2]),
        patches[1].delta_e(&patches[2]),
    ]
}

pub fn classify_condition(patches: &[Color; 3], thresholds: &DifficultyThresholds) -> Condition {
    let d = pairwise(patches);
    if d.iter().all(|&x| x < thresholds.close_below) {
        Condition::Close
    } else if d.iter().all(|&x| x > thresholds.far_above) {
        Condition::Far
    } else {
        Condition::Split
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorContext {
    patches: [Color; 3],
    target: usize,
    condition: Condition,
}

impl ColorContext {
    /// Checked constructor: the condition must agree with the patches under `thresholds`.
    pub fn new(
        patches: [Color; 3],
        target: usize,
        thresholds: &DifficultyThresholds,
    ) -> Result<Self> {
        if target > 2 {
            return Err(Error::InvalidContext(format!("target index {target} out of range")));
        }
        let condition = classify_condition(&patches, thresholds);
        Ok(ColorContext {
            patches,
            target,
            condition,
        })
    }

    pub fn patches(&self) -> &[Color; 3] {
        &self.patches
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn target_color(&self) -> &Color {
        &self.patches[self.target]
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    /// Indices of the two non-target patches, in patch order.
    pub fn distractors(&self) -> [usize; 2] {
        match self.target {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    /// The distractor with the smallest ΔE to the target (ties go to the lower index).
    pub fn closest_distractor(&self) -> usize {
        let [a, b] = self.distractors();
        let t = self.target_color();
        if t.delta_e(&self.patches[b]) < t.delta_e(&self.patches[a]) {
            b
        } else {
            a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceFeatures {
    pub d_min: f64,
    pub d_max: f64,
    pub d_avg: f64,
}

pub fn distance_features(context: &ColorContext) -> DistanceFeatures {
    let d = pairwise(&context.patches);
    DistanceFeatures {
        d_min: d.iter().copied().fold(f64::INFINITY, f64::min),
        d_max: d.iter().copied().fold(0.0, f64::max),
        d_avg: d.iter().sum::<f64>() / 3.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub thresholds: DifficultyThresholds,
    /// Lower bound on the ΔE between patches that are meant to look alike.
    pub min_separation: f64,
    pub max_attempts: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            thresholds: DifficultyThresholds::default(),
            min_separation: 6.0,
            max_attempts: 10_000,
        }
    }
}

fn random_rgb<R: Rng + ?Sized>(rng: &mut R) -> Color {
    Color::from_rgb([rng.random(), rng.random(), rng.random()])
}

/// A color at a random direction and a ΔE drawn from `[lo, hi)` around `base`,
/// or `None` when that point is out of gamut.
fn perturb<R: Rng + ?Sized>(base: &Color, lo: f64, hi: f64, rng: &mut R) -> Option<Color> {
    let dir: [f64; 3] = loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            break v.map(|x| x / n);
        }
    };
    let radius = rng.random_range(lo..hi);
    let lab = base.lab();
    Color::from_lab([
        lab[0] + dir[0] * radius,
        lab[1] + dir[1] * radius,
        lab[2] + dir[2] * radius,
    ])
}

/// Draw a context of the requested difficulty by rejection sampling.
pub fn generate_context<R: Rng + ?Sized>(
    condition: Condition,
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<ColorContext> {
    let th = &config.thresholds;
    let near_hi = th.close_below;
    let near_lo = config.min_separation.min(near_hi * 0.5);
    for _ in 0..config.max_attempts {
        let base = random_rgb(rng);
        let candidate = match condition {
            Condition::Far => Some([base, random_rgb(rng), random_rgb(rng)]),
            Condition::Split => {
                perturb(&base, near_lo, near_hi, rng).map(|mate| [base, mate, random_rgb(rng)])
            }
            Condition::Close => match (
                perturb(&base, near_lo, near_hi, rng),
                perturb(&base, near_lo, near_hi, rng),
            ) {
                (Some(a), Some(b)) => Some([base, a, b]),
                _ => None,
            },
        };
        let Some(mut patches) = candidate else {
            continue;
        };
        if classify_condition(&patches, th) != condition {
            continue;
        }
        if condition != Condition::Far && pairwise(&patches).iter().any(|&d| d < near_lo) {
            continue;
        }
        patches.shuffle(rng);
        let target = rng.random_range(0..3);
        return Ok(ColorContext {
            patches,
            target,
            condition,
        });
    }
    Err(Error::GenerationFailed {
        condition,
        attempts: config.max_attempts,
    })
}

/// Exact per-condition counts, returned in a shuffled order.
pub fn generate_mixed<R: Rng + ?Sized>(
    counts: [(Condition, usize); 3],
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<Vec<ColorContext>> {
    let mut out = Vec::with_capacity(counts.iter().map(|c| c.1).sum());
    for (condition, n) in counts {
        for _ in 0..n {
            out.push(generate_context(condition, config, rng)?);
        }
    }
    out.shuffle(rng);
    Ok(out)
}

/// Equal thirds (the remainder goes to far, then split).
pub fn balanced_counts(total: usize) -> [(Condition, usize); 3] {
    let base = total / 3;
    let rem = total % 3;
    [
        (Condition::Far, base + usize::from(rem > 0)),
        (Condition::Split, base + usize::from(rem > 1)),
        (Condition::Close, base),
    ]
}

/// One line of a context file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextRecord {
    pub patches: [[f64; 3]; 3],
    pub target: usize,
    pub condition: Condition,
}

impl From<&ColorContext> for ContextRecord {
    fn from(c: &ColorContext) -> Self {
        ContextRecord {
            patches: c.patches.map(|p| p.rgb()),
            target: c.target,
            condition: c.condition,
        }
    }
}

impl ContextRecord {
    pub fn into_context(self, thresholds: &DifficultyThresholds) -> Result<ColorContext> {
        let patches = self.patches.map(Color::from_rgb);
        let ctx = ColorContext::new(patches, self.target, thresholds)?;
        if ctx.condition != self.condition {
            return Err(Error::InvalidContext(format!(
                "declared condition {:?} but patches classify as {:?}",
                self.condition, ctx.condition
            )));
        }
        Ok(ctx)
    }
}

pub fn write_contexts_jsonl<W: Write>(mut w: W, contexts: &[ColorContext]) -> Result<()> {
    for c in contexts {
        serde_json::to_writer(&mut w, &ContextRecord::from(c))?;
        w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn read_contexts_jsonl<R: BufRead>(
    r: R,
    thresholds: &DifficultyThresholds,
) -> Result<Vec<ColorContext>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ContextRecord = serde_json::from_str(&line)?;
        out.push(record.into_context(thresholds)?);
    }
    Ok(out)
}

pub fn load_contexts(path: &Path, thresholds: &DifficultyThresholds) -> Result<Vec<ColorContext>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_contexts_jsonl(std::io::BufReader::new(file), thresholds)
}
