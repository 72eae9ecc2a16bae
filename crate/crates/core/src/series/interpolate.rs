use serde::{Deserialize, Serialize};

use super::SeriesFrame;

/// Maximal run of missing cells on one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub channel: usize,
    pub start: usize,
    pub length: usize,
}

impl Gap {
    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolationMethod {
    NearestNeighbor,
    NearestWindow,
}

impl std::str::FromStr for InterpolationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest_neighbor" | "nearest-neighbor" => Ok(Self::NearestNeighbor),
            "nearest_window" | "nearest-window" => Ok(Self::NearestWindow),
            other => Err(format!("unknown interpolation method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterpolationReport {
    pub filled: Vec<Gap>,
    pub skipped: Vec<Gap>,
    /// Gaps where no donor segment existed and nearest-neighbour was used.
    pub fallbacks: Vec<Gap>,
}

pub fn find_gaps(frame: &SeriesFrame) -> Vec<Gap> {
    let mut gaps = Vec::new();
    for c in 0..frame.width() {
        let mut t = 0;
        while t < frame.len() {
            if frame.is_missing(t, c) {
                let start = t;
                while t < frame.len() && frame.is_missing(t, c) {
                    t += 1;
                }
                gaps.push(Gap {
                    channel: c,
                    start,
                    length: t - start,
                });
            } else {
                t += 1;
            }
        }
    }
    gaps
}

/// Fill every gap of length `<= max_gap`, channel by channel.
///
/// Donors and neighbours are always taken from the input frame, so the fill
/// of one gap never feeds another.
pub fn interpolate(
    frame: &SeriesFrame,
    method: InterpolationMethod,
    max_gap: usize,
) -> (SeriesFrame, InterpolationReport) {
    let mut out = frame.clone();
    let mut report = InterpolationReport::default();
    for gap in find_gaps(frame) {
        if gap.length > max_gap {
            report.skipped.push(gap);
            continue;
        }
        let fill = match method {
            InterpolationMethod::NearestNeighbor => nearest_neighbor_fill(frame, &gap),
            InterpolationMethod::NearestWindow => match nearest_window_fill(frame, &gap) {
                Some(fill) => Some(fill),
                None => {
                    log::warn!(
                        "no donor segment for gap at row {} on channel {}; using nearest neighbour",
                        gap.start,
                        frame.names()[gap.channel]
                    );
                    report.fallbacks.push(gap);
                    nearest_neighbor_fill(frame, &gap)
                }
            },
        };
        match fill {
            Some(values) => {
                for (i, v) in values.into_iter().enumerate() {
                    out.set_observed(gap.start + i, gap.channel, v);
                }
                report.filled.push(gap);
            }
            None => report.skipped.push(gap),
        }
    }
    (out, report)
}

/// Observed values bordering the gap: (left, right).
fn boundaries(frame: &SeriesFrame, gap: &Gap) -> (Option<f64>, Option<f64>) {
    let left = gap
        .start
        .checked_sub(1)
        .and_then(|t| frame.get(t, gap.channel));
    let right = (gap.end() < frame.len())
        .then(|| frame.get(gap.end(), gap.channel))
        .flatten();
    (left, right)
}

fn nearest_neighbor_fill(frame: &SeriesFrame, gap: &Gap) -> Option<Vec<f64>> {
    let (left, right) = boundaries(frame, gap);
    let fill = (0..gap.length)
        .map(|i| {
            let (d_left, d_right) = (i + 1, gap.length - i);
            match (left, right) {
                (Some(l), Some(r)) => {
                    if d_left <= d_right {
                        l
                    } else {
                        r
                    }
                }
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => f64::NAN,
            }
        })
        .collect::<Vec<_>>();
    (left.is_some() || right.is_some()).then_some(fill)
}

/// Copy the fully observed `g`-length segment whose centre is nearest the
/// gap centre (earlier wins ties), shifted by the mean of the left/right
/// boundary corrections.
fn nearest_window_fill(frame: &SeriesFrame, gap: &Gap) -> Option<Vec<f64>> {
    let g = gap.length;
    let len = frame.len();
    if len < g {
        return None;
    }
    let c = gap.channel;
    // prefix count of missing cells for O(1) "fully observed" checks
    let mut missing_prefix = vec![0usize; len + 1];
    for t in 0..len {
        missing_prefix[t + 1] = missing_prefix[t] + usize::from(frame.is_missing(t, c));
    }
    let observed = |j: usize| missing_prefix[j + g] == missing_prefix[j];

    let mut best: Option<usize> = None;
    for j in 0..=(len - g) {
        if !observed(j) {
            continue;
        }
        let dist = j.abs_diff(gap.start);
        if best.is_none_or(|b| dist < b.abs_diff(gap.start)) {
            best = Some(j);
        }
    }
    let donor_start = best?;
    let donor: Vec<f64> = (donor_start..donor_start + g)
        .map(|t| frame.get(t, c).expect("donor is fully observed"))
        .collect();

    let (left, right) = boundaries(frame, gap);
    let corr_left = left.map(|l| l - donor[0]);
    let corr_right = right.map(|r| r - donor[g - 1]);
    let offset = match (corr_left, corr_right) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 0.0,
    };
    Some(donor.into_iter().map(|v| v + offset).collect())
}
