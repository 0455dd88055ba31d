//! Kaplan-Meier curves and the two-group log-rank test.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::special::chi2_sf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalRecord {
    pub time: f64,
    /// `true` for an observed death, `false` for a censored follow-up.
    pub event: bool,
    /// 0 or 1.
    pub group: usize,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool, group: usize) -> Self {
        Self { time, event, group }
    }
}

fn validate(records: &[SurvivalRecord]) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        if !r.time.is_finite() || r.time < 0.0 {
            return Err(Error::InvalidInput(format!(
                "record {i}: survival time must be finite and nonnegative, got {}",
                r.time
            )));
        }
        if r.group > 1 {
            return Err(Error::InvalidInput(format!(
                "record {i}: group must be 0 or 1, got {}",
                r.group
            )));
        }
    }
    Ok(())
}

/// Product-limit step function: `survival[k]` holds from `times[k]` until the next step.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    /// Starts at 0 with survival 1, then every distinct event time (a death at
    /// time 0 adds a second point at 0).
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    /// Times of censored records, for plotting tick marks.
    pub censored: Vec<f64>,
}

impl SurvivalCurve {
    /// `S(t)`, right-continuous.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

/// Distinct event times, ascending.
fn event_times<'a>(records: impl Iterator<Item = &'a SurvivalRecord>) -> Vec<f64> {
    let mut times: Vec<f64> = records.filter(|r| r.event).map(|r| r.time).collect();
    times.sort_unstable_by(f64::total_cmp);
    times.dedup();
    times
}

/// Kaplan-Meier estimate for one group. Subjects censored at an event time
/// stay at risk for that event.
pub fn kaplan_meier(records: &[SurvivalRecord], group: usize) -> Result<SurvivalCurve> {
    validate(records)?;
    let members: Vec<&SurvivalRecord> = records.iter().filter(|r| r.group == group).collect();
    if members.is_empty() {
        return Err(Error::EmptyGroup(group));
    }
    let mut curve = SurvivalCurve {
        times: vec![0.0],
        survival: vec![1.0],
        at_risk: vec![members.len()],
        events: vec![0],
        censored: members.iter().filter(|r| !r.event).map(|r| r.time).collect(),
    };
    curve.censored.sort_unstable_by(f64::total_cmp);
    let mut s = 1.0;
    for t in event_times(members.iter().copied()) {
        let n = members.iter().filter(|r| r.time >= t).count();
        let d = members.iter().filter(|r| r.event && r.time == t).count();
        s *= (n - d) as f64 / n as f64;
        curve.times.push(t);
        curve.survival.push(s);
        curve.at_risk.push(n);
        curve.events.push(d);
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRankResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Observed deaths in group 1.
    pub observed: f64,
    /// Expected deaths in group 1 under the null.
    pub expected: f64,
    pub variance: f64,
}

/// Two-group log-rank test with hypergeometric variance; P-value from chi-square(1).
pub fn logrank_test(records: &[SurvivalRecord]) -> Result<LogRankResult> {
    validate(records)?;
    for g in 0..2 {
        if !records.iter().any(|r| r.group == g) {
            return Err(Error::EmptyGroup(g));
        }
    }
    let times = event_times(records.iter());
    if times.is_empty() {
        return Err(Error::NoEvents);
    }
    let mut sorted: Vec<&SurvivalRecord> = records.iter().collect();
    sorted.sort_unstable_by(|a, b| a.time.total_cmp(&b.time));
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    let mut start = 0;
    let mut n = sorted.len() as f64;
    let mut n1 = sorted.iter().filter(|r| r.group == 1).count() as f64;
    for t in times {
        // Drop everyone who left the risk set before t.
        while start < sorted.len() && sorted[start].time < t {
            n -= 1.0;
            if sorted[start].group == 1 {
                n1 -= 1.0;
            }
            start += 1;
        }
        let (mut d, mut d1) = (0.0, 0.0);
        for r in sorted[start..].iter().take_while(|r| r.time == t).filter(|r| r.event) {
            d += 1.0;
            if r.group == 1 {
                d1 += 1.0;
            }
        }
        observed += d1;
        expected += d * n1 / n;
        if n > 1.0 {
            variance += d * (n1 / n) * (1.0 - n1 / n) * (n - d) / (n - 1.0);
        }
    }
    let diff = observed - expected;
    let statistic = if variance > 0.0 { diff * diff / variance } else { 0.0 };
    Ok(LogRankResult {
        statistic,
        p_value: chi2_sf(statistic, 1.0)?,
        observed,
        expected,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use std::vec::Vec;

    fn rec(time: f64, event: bool, group: usize) -> SurvivalRecord {
        SurvivalRecord::new(time, event, group)
    }

    #[test]
    fn product_limit_all_events() {
        let r = [rec(1.0, true, 0), rec(2.0, true, 0), rec(3.0, true, 0)];
        let c = kaplan_meier(&r, 0).unwrap();
        assert_eq!(c.times, vec![0.0, 1.0, 2.0, 3.0]);
        let want = [1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0];
        assert_eq!(c.survival, want);
        assert_eq!(c.at(1.5), 2.0 / 3.0);
        assert_eq!(c.at(0.5), 1.0);
    }

    #[test]
    fn all_censored_is_flat() {
        let r = [rec(1.0, false, 0), rec(4.0, false, 0)];
        let c = kaplan_meier(&r, 0).unwrap();
        assert_eq!(c.survival, vec![1.0]);
        assert_eq!(c.censored, vec![1.0, 4.0]);
        assert_eq!(c.at(100.0), 1.0);
    }

    #[test]
    fn single_death() {
        let c = kaplan_meier(&[rec(5.0, true, 1)], 1).unwrap();
        assert_eq!(c.at(4.999), 1.0);
        assert_eq!(c.at(5.0), 0.0);
    }

    #[test]
    fn censoring_shrinks_risk_set() {
        // 4 subjects: death at 1, censored at 2, deaths at 3 and 4.
        let r = [
            rec(1.0, true, 0),
            rec(2.0, false, 0),
            rec(3.0, true, 0),
            rec(4.0, true, 0),
        ];
        let c = kaplan_meier(&r, 0).unwrap();
        assert_eq!(c.at_risk, vec![4, 4, 2, 1]);
        assert!((c.at(3.0) - 0.75 * 0.5).abs() < 1e-15);
        assert_eq!(c.at(4.0), 0.0);
    }

    #[test]
    fn curve_is_monotone_and_bounded() {
        let mut rng = seeded(3);
        let r: Vec<SurvivalRecord> = (0..200)
            .map(|_| rec((rng.random::<f64>() * 20.0).floor(), rng.random::<f64>() < 0.7, 0))
            .collect();
        let c = kaplan_meier(&r, 0).unwrap();
        assert_eq!(c.survival[0], 1.0);
        assert!(c.survival.windows(2).all(|w| w[1] <= w[0]));
        assert!(c.survival.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn empty_group_and_bad_input() {
        assert!(matches!(
            kaplan_meier(&[rec(1.0, true, 0)], 1),
            Err(Error::EmptyGroup(1))
        ));
        assert!(kaplan_meier(&[rec(-1.0, true, 0)], 0).is_err());
        assert!(kaplan_meier(&[rec(f64::NAN, true, 0)], 0).is_err());
        assert!(matches!(logrank_test(&[rec(1.0, true, 0)]), Err(Error::EmptyGroup(1))));
        assert!(matches!(
            logrank_test(&[rec(1.0, false, 0), rec(2.0, false, 1)]),
            Err(Error::NoEvents)
        ));
    }

    #[test]
    fn mirrored_groups_give_unit_p_value() {
        let base = [(1.0, true), (2.0, false), (3.5, true), (7.0, true), (9.0, false)];
        let r: Vec<SurvivalRecord> = base.iter().flat_map(|&(t, e)| [rec(t, e, 0), rec(t, e, 1)]).collect();
        let out = logrank_test(&r).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.p_value, 1.0);
    }

    #[test]
    fn separated_groups_match_hand_computation() {
        let r: Vec<SurvivalRecord> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&t| rec(t, true, 1))
            .chain([10.0, 20.0, 30.0].iter().map(|&t| rec(t, true, 0)))
            .collect();
        let out = logrank_test(&r).unwrap();
        // At t = 1, 2, 3 group 1 has 3, 2, 1 of 6, 5, 4 at risk; afterwards none.
        let expected = 3.0 / 6.0 + 2.0 / 5.0 + 1.0 / 4.0;
        let variance = 0.25 + (2.0 / 5.0) * (3.0 / 5.0) + (1.0 / 4.0) * (3.0 / 4.0);
        let stat = (3.0 - expected) * (3.0 - expected) / variance;
        assert!((out.statistic - stat).abs() < 1e-12);
        let p = libm::erfc(libm::sqrt(stat / 2.0));
        assert!((out.p_value - p).abs() < 1e-12);
        assert!(out.p_value < 0.05);
    }

    /// Direct evaluation: loop over every event time and count the risk sets from scratch.
    fn naive_logrank(r: &[SurvivalRecord]) -> f64 {
        let mut times: Vec<f64> = r.iter().filter(|x| x.event).map(|x| x.time).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let (mut o, mut e, mut v) = (0.0, 0.0, 0.0);
        for t in times {
            let n = r.iter().filter(|x| x.time >= t).count() as f64;
            let n1 = r.iter().filter(|x| x.time >= t && x.group == 1).count() as f64;
            let d = r.iter().filter(|x| x.time == t && x.event).count() as f64;
            let d1 = r.iter().filter(|x| x.time == t && x.event && x.group == 1).count() as f64;
            o += d1;
            e += d * n1 / n;
            if n > 1.0 {
                v += d * n1 * (n - n1) * (n - d) / (n * n * (n - 1.0));
            }
        }
        (o - e) * (o - e) / v
    }

    fn random_cohort(size: usize, seed: u64) -> Vec<SurvivalRecord> {
        let mut rng = seeded(seed);
        (0..size)
            .map(|i| {
                let t = (-libm::log(1.0 - rng.random::<f64>()) * 10.0).round();
                rec(t, rng.random::<f64>() < 0.75, i % 2)
            })
            .collect()
    }

    #[test]
    fn agrees_with_naive_recount_including_late_censoring() {
        let mut r = random_cohort(60, 11);
        assert!((logrank_test(&r).unwrap().statistic - naive_logrank(&r)).abs() < 1e-10);
        let last = r.iter().map(|x| x.time).fold(0.0, f64::max);
        r.push(rec(last + 5.0, false, 0));
        assert!((logrank_test(&r).unwrap().statistic - naive_logrank(&r)).abs() < 1e-10);
    }

    #[test]
    fn swapping_labels_keeps_statistic() {
        let r = random_cohort(50, 12);
        let swapped: Vec<SurvivalRecord> = r.iter().map(|x| rec(x.time, x.event, 1 - x.group)).collect();
        let a = logrank_test(&r).unwrap();
        let b = logrank_test(&swapped).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-10 * a.statistic.max(1.0));
    }

    #[test]
    fn permutation_null_is_calibrated() {
        let mut r = random_cohort(120, 13);
        let mut rng = seeded(14);
        let mut labels: Vec<usize> = r.iter().map(|x| x.group).collect();
        let trials = 2000;
        let mut hits = 0;
        for _ in 0..trials {
            labels.shuffle(&mut rng);
            for (x, &g) in r.iter_mut().zip(&labels) {
                x.group = g;
            }
            if logrank_test(&r).unwrap().p_value < 0.05 {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        assert!((rate - 0.05).abs() <= 0.02, "rejection rate {rate}");
    }
}
