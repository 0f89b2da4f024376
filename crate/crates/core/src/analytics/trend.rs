use chrono::{Datelike, Duration, NaiveDate};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{CrossFilterIndex, ResolvedSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicLevel {
    Parent,
    Leaf,
}

impl std::str::FromStr for TopicLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parent" => Ok(Self::Parent),
            "leaf" => Ok(Self::Leaf),
            other => Err(format!("unknown level {other:?}, expected parent or leaf")),
        }
    }
}

/// Weekly counts of selected conversations.
///
/// Weeks are ISO weeks in UTC labelled `YYYY-Www`, cover the whole corpus span
/// and include empty weeks, so the axis does not move with the selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub level: TopicLevel,
    pub weeks: Vec<String>,
    /// topic id → conversations per week, by conversation start time.
    pub topics: IndexMap<String, Vec<usize>>,
    /// Message counts per sentiment bin (-2 to +2) per week.
    pub sentiment: Vec<[usize; 5]>,
}

pub fn week_label(date: NaiveDate) -> String {
    let w = date.iso_week();
    format!("{}-W{:02}", w.year(), w.week())
}

fn monday(date: NaiveDate) -> NaiveDate {
    date - Duration::days(date.weekday().num_days_from_monday() as i64)
}

pub fn weekly_trend(index: &CrossFilterIndex, selection: &ResolvedSelection, level: TopicLevel) -> TrendSeries {
    let topic_ids: Vec<&str> = match level {
        TopicLevel::Parent => index.hierarchy().parents().map(|n| n.id.as_str()).collect(),
        TopicLevel::Leaf => index.hierarchy().leaves().map(|n| n.id.as_str()).collect(),
    };
    if index.is_empty() {
        return TrendSeries {
            level,
            weeks: Vec::new(),
            topics: topic_ids.iter().map(|t| (t.to_string(), Vec::new())).collect(),
            sentiment: Vec::new(),
        };
    }
    let first = monday(index.start_time(0).date_naive());
    let last = monday(index.start_time(index.len() - 1).date_naive());
    let n_weeks = ((last - first).num_days() / 7 + 1) as usize;
    let weeks = (0..n_weeks).map(|i| week_label(first + Duration::weeks(i as i64))).collect();

    let mut topics: IndexMap<String, Vec<usize>> = topic_ids.iter().map(|t| (t.to_string(), vec![0; n_weeks])).collect();
    let mut sentiment = vec![[0usize; 5]; n_weeks];
    for i in index.apply(selection).ones() {
        let week = ((monday(index.start_time(i).date_naive()) - first).num_days() / 7) as usize;
        for (t, counts) in topics.iter_mut() {
            if index.has_topic(i, t) {
                counts[week] += 1;
            }
        }
        for b in index.message_bins(i) {
            sentiment[week][(b.level() + 2) as usize] += 1;
        }
    }
    TrendSeries { level, weeks, topics, sentiment }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_use_iso_years() {
        assert_eq!(week_label(NaiveDate::from_ymd_opt(2021, 1, 3).unwrap()), "2020-W53");
        assert_eq!(week_label(NaiveDate::from_ymd_opt(2021, 1, 4).unwrap()), "2021-W01");
        assert_eq!(week_label(NaiveDate::from_ymd_opt(2017, 3, 6).unwrap()), "2017-W10");
    }
}
