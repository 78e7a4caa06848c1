//! Camera views, feature fusion, view-subset enumeration and placement
//! reports.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Inter-camera separation band, in degrees, in which two-view setups
/// performed best.
pub const RECOMMENDED_SEPARATION: (f64, f64) = (30.0, 60.0);

/// One of five cameras, ordered from frontal to profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViewId {
    V1,
    V2,
    V3,
    V4,
    V5,
}

impl ViewId {
    pub const ALL: [ViewId; 5] = [ViewId::V1, ViewId::V2, ViewId::V3, ViewId::V4, ViewId::V5];

    /// Degrees from frontal.
    pub fn angle(self) -> f64 {
        match self {
            ViewId::V1 => 0.0,
            ViewId::V2 => 30.0,
            ViewId::V3 => 45.0,
            ViewId::V4 => 60.0,
            ViewId::V5 => 90.0,
        }
    }

    pub fn number(self) -> usize {
        self as usize + 1
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "V{}", self.number())
    }
}

impl FromStr for ViewId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "V1" | "1" => Ok(ViewId::V1),
            "V2" | "2" => Ok(ViewId::V2),
            "V3" | "3" => Ok(ViewId::V3),
            "V4" | "4" => Ok(ViewId::V4),
            "V5" | "5" => Ok(ViewId::V5),
            other => Err(Error::Parse(format!("unknown view {other:?}"))),
        }
    }
}

/// A canonically ordered set of views. Displays as `V1`, `V1_2`, `V1_2_4`...
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ViewSet(BTreeSet<ViewId>);

impl ViewSet {
    pub fn new(views: impl IntoIterator<Item = ViewId>) -> Self {
        Self(views.into_iter().collect())
    }

    pub fn all() -> Self {
        Self::new(ViewId::ALL)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: ViewId) -> bool {
        self.0.contains(&v)
    }

    pub fn iter(&self) -> impl Iterator<Item = ViewId> + '_ {
        self.0.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<ViewId> {
        self.iter().collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.iter().map(ViewId::angle).collect()
    }

    /// Largest angular distance between two members, `None` for one view.
    pub fn separation(&self) -> Option<f64> {
        let angles = self.angles();
        (angles.len() >= 2).then(|| angles[angles.len() - 1] - angles[0])
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl Ord for ViewSet {
    /// Smaller sets first, then lexical by view.
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.0.iter().cmp(other.0.iter()))
    }
}

impl PartialOrd for ViewSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ViewSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut it = self.0.iter();
        match it.next() {
            None => write!(f, "(none)"),
            Some(first) => {
                write!(f, "{first}")?;
                for v in it {
                    write!(f, "_{}", v.number())?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for ViewSet {
    type Err = Error;

    /// Accepts `V1_2`, `V1,V2`, `1,2` and similar spellings.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix(['V', 'v']).filter(|r| r.contains('_')) {
            return rest.split('_').map(str::parse).collect::<Result<Vec<ViewId>>>().map(Self::new);
        }
        s.split([',', ' '])
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<ViewId>>>()
            .map(Self::new)
    }
}

/// Where per-view information is merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    /// Views stacked as input channels of one shared encoder.
    EarlyChannelConcat,
    /// One encoder per view; feature vectors concatenated before the LSTM.
    FeatureConcat,
}

/// Concatenates per-view tensors in ascending view order, whatever order
/// they arrive in. A single view passes through unchanged.
///
/// `FeatureConcat` flattens each tensor and joins them end to end.
/// `EarlyChannelConcat` stacks `[H, W]` or `[C, H, W]` images along the
/// channel axis.
pub fn fuse(per_view: &[(ViewId, Tensor)], strategy: FusionStrategy) -> Result<Tensor> {
    if per_view.is_empty() {
        return Err(Error::EmptyViewSet);
    }
    let mut sorted: Vec<&(ViewId, Tensor)> = per_view.iter().collect();
    sorted.sort_by_key(|(v, _)| *v);
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidConfig("view supplied twice".into()));
    }
    if sorted.len() == 1 {
        return Ok(sorted[0].1.clone());
    }
    match strategy {
        FusionStrategy::FeatureConcat => {
            let data: Vec<f64> = sorted.iter().flat_map(|(_, t)| t.data().iter().copied()).collect();
            Ok(Tensor::from_vec(data))
        }
        FusionStrategy::EarlyChannelConcat => {
            let spatial = |t: &Tensor| -> Result<(usize, usize, usize)> {
                match *t.shape() {
                    [h, w] => Ok((1, h, w)),
                    [c, h, w] => Ok((c, h, w)),
                    ref s => Err(Error::ShapeMismatch(format!("cannot stack {s:?} as channels"))),
                }
            };
            let (_, h, w) = spatial(&sorted[0].1)?;
            let mut channels = 0;
            let mut data = Vec::new();
            for (_, t) in &sorted {
                let (c, th, tw) = spatial(t)?;
                if (th, tw) != (h, w) {
                    return Err(Error::ShapeMismatch(format!(
                        "views disagree on image size: {h}x{w} vs {th}x{tw}"
                    )));
                }
                channels += c;
                data.extend_from_slice(t.data());
            }
            Tensor::new(vec![channels, h, w], data)
        }
    }
}

/// All non-empty subsets of `available` with at most `max_size` views,
/// smallest first, then lexical.
pub fn enumerate_combinations(available: &ViewSet, max_size: usize) -> Vec<ViewSet> {
    let views = available.to_vec();
    let mut out = Vec::new();
    for mask in 1u32..(1 << views.len()) {
        if (mask.count_ones() as usize) <= max_size {
            out.push(ViewSet::new(
                views.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, v)| *v),
            ));
        }
    }
    out.sort();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricDirection {
    HigherIsBetter,
    LowerIsBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementRow {
    pub rank: usize,
    pub label: String,
    pub views: Vec<ViewId>,
    pub angles: Vec<f64>,
    /// Inter-camera angle for multi-view subsets.
    pub separation: Option<f64>,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestPair {
    pub label: String,
    pub separation: f64,
    pub in_recommended_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementReport {
    pub format_version: u32,
    pub metric: String,
    pub direction: MetricDirection,
    pub rows: Vec<PlacementRow>,
    pub best_pair: Option<BestPair>,
}

/// Ranks view subsets by `metric`. Ties go to the smaller subset, then the
/// lexically smaller one.
pub fn placement_report(
    results: &BTreeMap<ViewSet, BTreeMap<String, f64>>,
    metric: &str,
    direction: MetricDirection,
) -> Result<PlacementReport> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut entries: Vec<(&ViewSet, &BTreeMap<String, f64>, f64)> = results
        .iter()
        .map(|(set, scores)| {
            scores
                .get(metric)
                .copied()
                .filter(|v| !v.is_nan())
                .map(|v| (set, scores, v))
                .ok_or_else(|| Error::InvalidConfig(format!("{set} has no {metric:?} score")))
        })
        .collect::<Result<_>>()?;
    entries.sort_by(|a, b| {
        let by_score = match direction {
            MetricDirection::HigherIsBetter => b.2.total_cmp(&a.2),
            MetricDirection::LowerIsBetter => a.2.total_cmp(&b.2),
        };
        by_score.then_with(|| a.0.cmp(b.0))
    });
    let rows: Vec<PlacementRow> = entries
        .into_iter()
        .enumerate()
        .map(|(i, (set, scores, _))| PlacementRow {
            rank: i + 1,
            label: set.label(),
            views: set.to_vec(),
            angles: set.angles(),
            separation: set.separation(),
            scores: scores.clone(),
        })
        .collect();
    let best_pair = rows.iter().find_map(|r| {
        r.separation.map(|s| BestPair {
            label: r.label.clone(),
            separation: s,
            in_recommended_band: (RECOMMENDED_SEPARATION.0..=RECOMMENDED_SEPARATION.1).contains(&s),
        })
    });
    Ok(PlacementReport {
        format_version: 1,
        metric: metric.to_string(),
        direction,
        rows,
        best_pair,
    })
}

impl PlacementReport {
    pub fn to_text(&self) -> String {
        let mut metrics: Vec<&String> = self.rows.iter().flat_map(|r| r.scores.keys()).collect();
        metrics.sort();
        metrics.dedup();
        let mut out = format!(
            "# placement report v{} (ranked by {}, {})\n",
            self.format_version,
            self.metric,
            match self.direction {
                MetricDirection::HigherIsBetter => "higher is better",
                MetricDirection::LowerIsBetter => "lower is better",
            }
        );
        out.push_str(&format!("{:<5} {:<8} {:<14} {:>10}", "rank", "views", "angles", "separation"));
        for m in &metrics {
            out.push_str(&format!(" {m:>12}"));
        }
        out.push('\n');
        for r in &self.rows {
            let angles = r.angles.iter().map(|a| format!("{a:.0}")).collect::<Vec<_>>().join("/");
            let sep = r.separation.map_or("-".to_string(), |s| format!("{s:.0}"));
            out.push_str(&format!("{:<5} {:<8} {:<14} {:>10}", r.rank, r.label, angles, sep));
            for m in &metrics {
                match r.scores.get(*m) {
                    Some(v) => out.push_str(&format!(" {v:>12.4}")),
                    None => out.push_str(&format!(" {:>12}", "-")),
                }
            }
            out.push('\n');
        }
        match &self.best_pair {
            Some(bp) => out.push_str(&format!(
                "best pair: {} separated by {:.0} degrees ({} the {:.0}-{:.0} degree band)\n",
                bp.label,
                bp.separation,
                if bp.in_recommended_band { "inside" } else { "outside" },
                RECOMMENDED_SEPARATION.0,
                RECOMMENDED_SEPARATION.1
            )),
            None => out.push_str("best pair: none (no multi-view subsets)\n"),
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
