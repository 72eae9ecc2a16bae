use std::f64::consts::PI;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::series::{ChannelRole, SeriesFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    /// HR x1.3, HRV x0.5.
    Stress,
    /// Blood pressure +30.
    Hypertension,
    /// Blood pressure -25.
    Hypotension,
    /// HRV x2.5.
    AbnormalHrv,
    /// HR +8, HRV x0.7.
    SleepQuality,
}

impl InjectionKind {
    pub const ALL: [InjectionKind; 5] = [
        Self::Stress,
        Self::Hypertension,
        Self::Hypotension,
        Self::AbnormalHrv,
        Self::SleepQuality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Stress => "stress",
            Self::Hypertension => "hypertension",
            Self::Hypotension => "hypotension",
            Self::AbnormalHrv => "abnormal_hrv",
            Self::SleepQuality => "sleep_quality",
        }
    }
}

impl FromStr for InjectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown injection type {s:?}")))
    }
}

/// `count` injections of one kind, each lasting `min_len..=max_len` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionPlan {
    pub kind: InjectionKind,
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
}

/// A ground-truth anomaly written into a synthetic frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub kind: InjectionKind,
    pub start: usize,
    pub len: usize,
    pub channels: Vec<String>,
}

impl Injection {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// One generated channel:
/// `baseline + circadian cos(2π(h - peak_hour)/24) + Σ coupling·other + bouts + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub name: String,
    pub role: ChannelRole,
    pub baseline: f64,
    pub circadian: f64,
    pub peak_hour: f64,
    pub noise: f64,
    /// AR(1) coefficient of the noise; 0 is white.
    pub noise_ar: f64,
    /// Linear dependence on channels defined earlier in the profile.
    pub couplings: Vec<(String, f64)>,
    /// Added while a bout is active.
    pub bout_level: f64,
    /// Expected bout starts per waking hour (07:00 to 22:00).
    pub bout_rate: f64,
    pub bout_min: usize,
    pub bout_max: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl ChannelProfile {
    pub fn new(name: &str, role: ChannelRole, baseline: f64) -> Self {
        Self {
            name: name.into(),
            role,
            baseline,
            circadian: 0.0,
            peak_hour: 0.0,
            noise: 0.0,
            noise_ar: 0.0,
            couplings: Vec::new(),
            bout_level: 0.0,
            bout_rate: 0.0,
            bout_min: 1,
            bout_max: 1,
            min: None,
            max: None,
        }
    }

    fn circadian(mut self, amplitude: f64, peak_hour: f64) -> Self {
        self.circadian = amplitude;
        self.peak_hour = peak_hour;
        self
    }

    fn noise(mut self, sd: f64, ar: f64) -> Self {
        self.noise = sd;
        self.noise_ar = ar;
        self
    }

    fn couple(mut self, other: &str, coef: f64) -> Self {
        self.couplings.push((other.into(), coef));
        self
    }

    fn bouts(mut self, level: f64, rate: f64, min: usize, max: usize) -> Self {
        self.bout_level = level;
        self.bout_rate = rate;
        self.bout_min = min;
        self.bout_max = max;
        self
    }

    fn clamp(mut self, min: Option<f64>, max: Option<f64>) -> Self {
        self.min = min;
        self.max = max;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthProfile {
    pub resolution_s: i64,
    pub start_epoch: i64,
    /// Generation order; couplings may only refer backwards.
    pub channels: Vec<ChannelProfile>,
    pub injections: Vec<InjectionPlan>,
    pub hr_channel: String,
    pub hrv_channel: String,
    pub bp_channel: Option<String>,
    /// Per-row, per-channel probability that a dropout starts.
    pub dropout_rate: f64,
    pub dropout_min: usize,
    pub dropout_max: usize,
}

const DEFAULT_START: i64 = 1_704_067_200; // 2024-01-01T00:00:00Z

impl SynthProfile {
    fn empty() -> Self {
        Self {
            resolution_s: 60,
            start_epoch: DEFAULT_START,
            channels: Vec::new(),
            injections: Vec::new(),
            hr_channel: "hr".into(),
            hrv_channel: "hrv".into(),
            bp_channel: None,
            dropout_rate: 0.0,
            dropout_min: 1,
            dropout_max: 1,
        }
    }

    /// HR and HRV targets with step-count and CO₂ context; ten stress episodes.
    pub fn stress_fixture() -> Self {
        use ChannelRole::*;
        Self {
            channels: vec![
                ChannelProfile::new("steps", Context, 0.0)
                    .bouts(90.0, 0.6, 5, 30)
                    .noise(4.0, 0.0)
                    .clamp(Some(0.0), None),
                ChannelProfile::new("co2", Context, 600.0)
                    .circadian(150.0, 3.0)
                    .noise(15.0, 0.5)
                    .clamp(Some(380.0), None),
                ChannelProfile::new("hr", Target, 64.0)
                    .circadian(2.0, 15.0)
                    .noise(1.5, 0.0)
                    .couple("steps", 0.25),
                ChannelProfile::new("hrv", Target, 55.0)
                    .circadian(4.0, 3.0)
                    .noise(3.0, 0.0)
                    .couple("steps", -0.15)
                    .clamp(Some(5.0), None),
            ],
            injections: vec![InjectionPlan {
                kind: InjectionKind::Stress,
                count: 10,
                min_len: 6,
                max_len: 12,
            }],
            dropout_rate: 2e-4,
            dropout_min: 1,
            dropout_max: 8,
            ..Self::empty()
        }
    }

    /// HR driven by a binary activity flag: `70 + 30·activity` plus noise.
    pub fn activity_fixture() -> Self {
        use ChannelRole::*;
        Self {
            channels: vec![
                ChannelProfile::new("activity", Context, 0.0).bouts(1.0, 0.5, 10, 40),
                ChannelProfile::new("hr", Target, 70.0)
                    .noise(1.5, 0.0)
                    .couple("activity", 30.0),
            ],
            ..Self::empty()
        }
    }

    /// Nine vital-sign targets and seven ambient/activity context channels.
    pub fn home_like() -> Self {
        use ChannelRole::*;
        let plan = |kind, count| InjectionPlan {
            kind,
            count,
            min_len: 10,
            max_len: 45,
        };
        Self {
            channels: vec![
                ChannelProfile::new("steps", Context, 0.0)
                    .bouts(80.0, 0.5, 5, 40)
                    .noise(5.0, 0.0)
                    .clamp(Some(0.0), None),
                ChannelProfile::new("motion", Context, 0.1)
                    .circadian(0.1, 14.0)
                    .noise(0.05, 0.3)
                    .couple("steps", 0.01)
                    .clamp(Some(0.0), None),
                ChannelProfile::new("co2", Context, 620.0)
                    .circadian(160.0, 3.0)
                    .noise(20.0, 0.6)
                    .clamp(Some(380.0), None),
                ChannelProfile::new("room_temp", Context, 21.0)
                    .circadian(1.5, 16.0)
                    .noise(0.1, 0.8),
                ChannelProfile::new("humidity", Context, 45.0)
                    .circadian(5.0, 6.0)
                    .noise(0.8, 0.8)
                    .couple("room_temp", -0.5),
                ChannelProfile::new("light", Context, 150.0)
                    .circadian(150.0, 13.0)
                    .noise(10.0, 0.5)
                    .clamp(Some(0.0), None),
                ChannelProfile::new("sound", Context, 38.0)
                    .circadian(6.0, 14.0)
                    .noise(2.0, 0.3)
                    .couple("steps", 0.05),
                ChannelProfile::new("hr", Target, 66.0)
                    .circadian(5.0, 15.0)
                    .noise(1.5, 0.3)
                    .couple("steps", 0.25),
                ChannelProfile::new("hrv", Target, 52.0)
                    .circadian(6.0, 3.0)
                    .noise(3.0, 0.2)
                    .couple("steps", -0.12)
                    .clamp(Some(5.0), None),
                ChannelProfile::new("sbp", Target, 122.0)
                    .circadian(6.0, 10.0)
                    .noise(2.5, 0.5)
                    .couple("steps", 0.08),
                ChannelProfile::new("dbp", Target, 79.0)
                    .circadian(4.0, 10.0)
                    .noise(2.0, 0.5)
                    .couple("sbp", 0.3),
                ChannelProfile::new("spo2", Target, 97.0)
                    .circadian(0.5, 14.0)
                    .noise(0.4, 0.3)
                    .clamp(None, Some(100.0)),
                ChannelProfile::new("resp_rate", Target, 15.0)
                    .circadian(1.0, 15.0)
                    .noise(0.6, 0.3)
                    .couple("steps", 0.04),
                ChannelProfile::new("skin_temp", Target, 33.5)
                    .circadian(0.6, 4.0)
                    .noise(0.1, 0.8)
                    .couple("room_temp", 0.2),
                ChannelProfile::new("glucose", Target, 5.6)
                    .circadian(0.6, 13.0)
                    .noise(0.15, 0.7),
                ChannelProfile::new("weight", Target, 78.0)
                    .circadian(0.3, 20.0)
                    .noise(0.05, 0.9),
            ],
            injections: vec![
                plan(InjectionKind::Stress, 8),
                plan(InjectionKind::Hypertension, 8),
                plan(InjectionKind::Hypotension, 6),
                plan(InjectionKind::AbnormalHrv, 6),
                plan(InjectionKind::SleepQuality, 4),
            ],
            bp_channel: Some("sbp".into()),
            dropout_rate: 3e-4,
            dropout_min: 1,
            dropout_max: 10,
            ..Self::empty()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "stress" => Ok(Self::stress_fixture()),
            "activity" => Ok(Self::activity_fixture()),
            "home" => Ok(Self::home_like()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (stress, activity, home)"
            ))),
        }
    }

    pub fn without_injections(mut self) -> Self {
        self.injections.clear();
        self
    }

    pub fn from_config(kv: &KvConfig) -> Result<Self> {
        let mut p = Self::empty();
        p.resolution_s = kv.get_or("resolution_s", p.resolution_s)?;
        p.start_epoch = kv.get_or("start_epoch", p.start_epoch)?;
        p.hr_channel = kv.get_or("hr_channel", p.hr_channel)?;
        p.hrv_channel = kv.get_or("hrv_channel", p.hrv_channel)?;
        p.bp_channel = kv.get_parsed("bp_channel")?;
        p.dropout_rate = kv.get_or("dropout.rate", 0.0)?;
        p.dropout_min = kv.get_or("dropout.min", 1)?;
        p.dropout_max = kv.get_or("dropout.max", 1)?;

        let mut order: Vec<String> = Vec::new();
        for (key, _) in kv.with_prefix("channel") {
            let name = key.split('.').next().unwrap_or_default();
            if !order.iter().any(|n| n == name) {
                order.push(name.to_string());
            }
        }
        for name in order {
            let k = |f: &str| format!("channel.{name}.{f}");
            let role = match kv.require::<String>(&k("role"))?.as_str() {
                "target" => ChannelRole::Target,
                "context" => ChannelRole::Context,
                other => {
                    return Err(Error::Config(format!(
                        "{}: unknown role {other:?}",
                        k("role")
                    )))
                }
            };
            let mut c = ChannelProfile::new(&name, role, kv.get_or(&k("baseline"), 0.0)?);
            c.circadian = kv.get_or(&k("circadian"), 0.0)?;
            c.peak_hour = kv.get_or(&k("peak_hour"), 0.0)?;
            c.noise = kv.get_or(&k("noise"), 0.0)?;
            c.noise_ar = kv.get_or(&k("noise_ar"), 0.0)?;
            c.bout_level = kv.get_or(&k("bout_level"), 0.0)?;
            c.bout_rate = kv.get_or(&k("bout_rate"), 0.0)?;
            c.bout_min = kv.get_or(&k("bout_min"), 1)?;
            c.bout_max = kv.get_or(&k("bout_max"), 1)?;
            c.min = kv.get_parsed(&k("min"))?;
            c.max = kv.get_parsed(&k("max"))?;
            let prefix = format!("channel.{name}.couple");
            for (other, coef) in kv.with_prefix(&prefix) {
                let coef: f64 = coef
                    .parse()
                    .map_err(|_| Error::Config(format!("{prefix}.{other}: not a number")))?;
                c.couplings.push((other.to_string(), coef));
            }
            p.channels.push(c);
        }
        for kind in InjectionKind::ALL {
            let k = |f: &str| format!("inject.{}.{f}", kind.name());
            let count: usize = kv.get_or(&k("count"), 0)?;
            if count > 0 {
                p.injections.push(InjectionPlan {
                    kind,
                    count,
                    min_len: kv.get_or(&k("min_len"), 10)?,
                    max_len: kv.get_or(&k("max_len"), 30)?,
                });
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_config(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("resolution_s", self.resolution_s);
        kv.set("start_epoch", self.start_epoch);
        kv.set("hr_channel", &self.hr_channel);
        kv.set("hrv_channel", &self.hrv_channel);
        if let Some(bp) = &self.bp_channel {
            kv.set("bp_channel", bp);
        }
        kv.set("dropout.rate", self.dropout_rate);
        kv.set("dropout.min", self.dropout_min);
        kv.set("dropout.max", self.dropout_max);
        for c in &self.channels {
            let k = |f: &str| format!("channel.{}.{f}", c.name);
            kv.set(
                &k("role"),
                match c.role {
                    ChannelRole::Target => "target",
                    ChannelRole::Context => "context",
                },
            );
            kv.set(&k("baseline"), c.baseline);
            kv.set(&k("circadian"), c.circadian);
            kv.set(&k("peak_hour"), c.peak_hour);
            kv.set(&k("noise"), c.noise);
            kv.set(&k("noise_ar"), c.noise_ar);
            kv.set(&k("bout_level"), c.bout_level);
            kv.set(&k("bout_rate"), c.bout_rate);
            kv.set(&k("bout_min"), c.bout_min);
            kv.set(&k("bout_max"), c.bout_max);
            if let Some(v) = c.min {
                kv.set(&k("min"), v);
            }
            if let Some(v) = c.max {
                kv.set(&k("max"), v);
            }
            for (other, coef) in &c.couplings {
                kv.set(&k(&format!("couple.{other}")), coef);
            }
        }
        for plan in &self.injections {
            let k = |f: &str| format!("inject.{}.{f}", plan.kind.name());
            kv.set(&k("count"), plan.count);
            kv.set(&k("min_len"), plan.min_len);
            kv.set(&k("max_len"), plan.max_len);
        }
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution_s <= 0 {
            return Err(Error::Config("resolution_s must be positive".into()));
        }
        if !self.channels.iter().any(|c| c.role == ChannelRole::Target) {
            return Err(Error::NoTargets);
        }
        for (i, c) in self.channels.iter().enumerate() {
            for (other, _) in &c.couplings {
                if !self.channels[..i].iter().any(|p| &p.name == other) {
                    return Err(Error::Config(format!(
                        "channel {} couples to {other}, which is not defined before it",
                        c.name
                    )));
                }
            }
            if c.bout_min == 0 || c.bout_max < c.bout_min {
                return Err(Error::Config(format!(
                    "channel {}: bad bout length range",
                    c.name
                )));
            }
            if !(0.0..1.0).contains(&c.noise_ar) {
                return Err(Error::Config(format!(
                    "channel {}: noise_ar must lie in [0, 1)",
                    c.name
                )));
            }
        }
        for plan in &self.injections {
            if plan.min_len == 0 || plan.max_len < plan.min_len {
                return Err(Error::Config(format!(
                    "{}: bad length range",
                    plan.kind.name()
                )));
            }
        }
        if self.dropout_min == 0 || self.dropout_max < self.dropout_min {
            return Err(Error::Config("bad dropout length range".into()));
        }
        Ok(())
    }

    fn affected(&self, kind: InjectionKind) -> Vec<(String, Effect)> {
        let (hr, hrv) = (self.hr_channel.clone(), self.hrv_channel.clone());
        let bp = self.bp_channel.clone();
        let list = match kind {
            InjectionKind::Stress => vec![
                (Some(hr), Effect::Scale(1.3)),
                (Some(hrv), Effect::Scale(0.5)),
            ],
            InjectionKind::Hypertension => vec![(bp, Effect::Shift(30.0))],
            InjectionKind::Hypotension => vec![(bp, Effect::Shift(-25.0))],
            InjectionKind::AbnormalHrv => vec![(Some(hrv), Effect::Scale(2.5))],
            InjectionKind::SleepQuality => vec![
                (Some(hr), Effect::Shift(8.0)),
                (Some(hrv), Effect::Scale(0.7)),
            ],
        };
        list.into_iter()
            .filter_map(|(c, e)| {
                c.filter(|c| self.channels.iter().any(|p| &p.name == c))
                    .map(|c| (c, e))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum Effect {
    Scale(f64),
    Shift(f64),
}

fn place_injections(profile: &SynthProfile, rows: usize, rng: &mut ChaCha8Rng) -> Vec<Injection> {
    let mut kinds: Vec<&InjectionPlan> = profile
        .injections
        .iter()
        .flat_map(|p| std::iter::repeat_n(p, p.count))
        .collect();
    if kinds.is_empty() {
        return Vec::new();
    }
    kinds.shuffle(rng);
    // one injection per equal slot keeps episodes spread and disjoint
    let slot = rows / kinds.len();
    let mut out = Vec::with_capacity(kinds.len());
    for (i, plan) in kinds.into_iter().enumerate() {
        let len = rng
            .random_range(plan.min_len..=plan.max_len)
            .min(slot / 2)
            .max(1);
        let margin = (slot - len) / 4;
        let lo = i * slot + margin;
        let hi = ((i + 1) * slot).saturating_sub(len + margin).max(lo);
        let start = rng.random_range(lo..=hi);
        out.push(Injection {
            kind: plan.kind,
            start,
            len,
            channels: profile
                .affected(plan.kind)
                .into_iter()
                .map(|(c, _)| c)
                .collect(),
        });
    }
    out
}

fn bout_mask(
    c: &ChannelProfile,
    rows: usize,
    hours: &[f64],
    res: i64,
    rng: &mut ChaCha8Rng,
) -> Vec<bool> {
    let mut active = vec![false; rows];
    if c.bout_rate <= 0.0 || c.bout_level == 0.0 {
        return active;
    }
    let p = (c.bout_rate * res as f64 / 3600.0).min(1.0);
    let mut t = 0;
    while t < rows {
        let waking = (7.0..22.0).contains(&hours[t]);
        if waking && rng.random::<f64>() < p {
            let len = rng.random_range(c.bout_min..=c.bout_max);
            let end = (t + len).min(rows);
            active[t..end].iter_mut().for_each(|a| *a = true);
            t = end;
        } else {
            t += 1;
        }
    }
    active
}

/// Generate `days` of data at the profile's resolution.
///
/// Every random draw comes from one ChaCha stream seeded by `seed`, in a
/// fixed order, so a `(profile, days, seed)` triple always yields the same
/// frame and events.
pub fn synth_patient(
    profile: &SynthProfile,
    days: f64,
    seed: u64,
) -> Result<(SeriesFrame, Vec<Injection>)> {
    profile.validate()?;
    let rows = (days * 86_400.0 / profile.resolution_s as f64).round() as usize;
    if rows == 0 {
        return Err(Error::Precondition(
            "synthetic span shorter than one sample".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let timestamps: Vec<i64> = (0..rows as i64)
        .map(|t| profile.start_epoch + t * profile.resolution_s)
        .collect();
    let hours: Vec<f64> = timestamps
        .iter()
        .map(|ts| ts.rem_euclid(86_400) as f64 / 3600.0)
        .collect();

    let mut values: Vec<Vec<f64>> = Vec::with_capacity(profile.channels.len());
    for c in &profile.channels {
        let bouts = bout_mask(c, rows, &hours, profile.resolution_s, &mut rng);
        let coupled: Vec<(usize, f64)> = c
            .couplings
            .iter()
            .map(|(o, k)| {
                (
                    profile.channels.iter().position(|p| &p.name == o).unwrap(),
                    *k,
                )
            })
            .collect();
        let innov = (1.0 - c.noise_ar * c.noise_ar).sqrt();
        let mut e = 0.0;
        let mut v = Vec::with_capacity(rows);
        for t in 0..rows {
            let z: f64 = if c.noise > 0.0 {
                rng.sample(StandardNormal)
            } else {
                0.0
            };
            e = c.noise_ar * e + innov * c.noise * z;
            let mut x =
                c.baseline + c.circadian * (2.0 * PI * (hours[t] - c.peak_hour) / 24.0).cos();
            for &(o, k) in &coupled {
                x += k * values[o][t];
            }
            if bouts[t] {
                x += c.bout_level;
            }
            v.push(x + e);
        }
        values.push(v);
    }

    let injections = place_injections(profile, rows, &mut rng);
    for inj in &injections {
        for (name, effect) in profile.affected(inj.kind) {
            let ci = profile
                .channels
                .iter()
                .position(|p| p.name == name)
                .unwrap();
            for x in &mut values[ci][inj.start..inj.end()] {
                *x = match effect {
                    Effect::Scale(s) => *x * s,
                    Effect::Shift(d) => *x + d,
                };
            }
        }
    }

    let width = profile.channels.len();
    let mut cells: Vec<Option<f64>> = vec![None; rows * width];
    for (ci, c) in profile.channels.iter().enumerate() {
        for t in 0..rows {
            let mut x = values[ci][t];
            if let Some(lo) = c.min {
                x = x.max(lo);
            }
            if let Some(hi) = c.max {
                x = x.min(hi);
            }
            cells[t * width + ci] = Some(x);
        }
    }
    if profile.dropout_rate > 0.0 {
        for ci in 0..width {
            let mut t = 0;
            while t < rows {
                if rng.random::<f64>() < profile.dropout_rate {
                    let len = rng.random_range(profile.dropout_min..=profile.dropout_max);
                    for r in t..(t + len).min(rows) {
                        cells[r * width + ci] = None;
                    }
                    t += len;
                } else {
                    t += 1;
                }
            }
        }
    }
    let frame = SeriesFrame::new(
        timestamps,
        profile.channels.iter().map(|c| c.name.clone()).collect(),
        profile.channels.iter().map(|c| c.role).collect(),
        cells,
        profile.resolution_s,
    )?;
    Ok((frame, injections))
}

/// Point-wise ground truth: rows covered by any injection.
pub fn injected_labels(rows: usize, injections: &[Injection]) -> Vec<bool> {
    let mut labels = vec![false; rows];
    for inj in injections {
        for l in &mut labels[inj.start.min(rows)..inj.end().min(rows)] {
            *l = true;
        }
    }
    labels
}
