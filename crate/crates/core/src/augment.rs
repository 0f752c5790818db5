//! Confidence filtering of teacher-annotated candidates under per-class
//! quotas that preserve the training label ratio.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use crate::classifier::SyntheticExample;
use crate::bank::normalize;
use crate::error::{Error, Result};

pub const DEFAULT_SMALL_TASK_THRESHOLD: usize = 5000;
pub const SMALL_TASK_MULTIPLIER: usize = 100;
pub const MEDIUM_TASK_MULTIPLIER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Explicit size multiplier; `None` picks one from the training-set size.
    pub multiplier: Option<usize>,
    pub small_task_threshold: usize,
    pub allow_shortfall: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            multiplier: None,
            small_task_threshold: DEFAULT_SMALL_TASK_THRESHOLD,
            allow_shortfall: true,
        }
    }
}

/// 100× for small tasks, 10× otherwise, unless a multiplier is configured.
pub fn choose_multiplier(train_size: usize, cfg: &AugmentConfig) -> usize {
    if let Some(m) = cfg.multiplier {
        return m.max(1);
    }
    if train_size < cfg.small_task_threshold {
        SMALL_TASK_MULTIPLIER
    } else {
        MEDIUM_TASK_MULTIPLIER
    }
}

/// Largest-remainder apportionment of `target_total` over classes in
/// proportion to `train_counts`. Every class with examples gets at least one
/// unit; classes without examples get none.
pub fn class_quotas(train_counts: &[usize], target_total: usize) -> Result<Vec<usize>> {
    let total: u128 = train_counts.iter().map(|&c| c as u128).sum();
    let present = train_counts.iter().filter(|&&c| c > 0).count();
    if total == 0 {
        return Err(Error::InvalidInput("no training examples to apportion".into()));
    }
    if target_total < present {
        return Err(Error::InvalidInput(format!(
            "target {target_total} is smaller than the {present} classes present"
        )));
    }
    for (c, &n) in train_counts.iter().enumerate() {
        if n == 0 {
            log::warn!("class {c} has no training examples; its quota is 0");
        }
    }
    let t = target_total as u128;
    let mut quotas: Vec<usize> = train_counts
        .iter()
        .map(|&c| (t * c as u128 / total) as usize)
        .collect();
    // remainder numerators, comparable across classes (common denominator `total`)
    let rem: Vec<u128> = train_counts.iter().map(|&c| t * c as u128 % total).collect();
    for (q, &c) in quotas.iter_mut().zip(train_counts) {
        if c > 0 && *q == 0 {
            *q = 1;
        }
    }
    let mut assigned: usize = quotas.iter().sum();
    let mut by_remainder: Vec<usize> = (0..quotas.len()).filter(|&c| train_counts[c] > 0).collect();
    by_remainder.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
    let mut it = by_remainder.iter().cycle();
    while assigned < target_total {
        let &c = it.next().expect("some class present");
        quotas[c] += 1;
        assigned += 1;
    }
    while assigned > target_total {
        // take back from the largest quota above one, smallest remainder first
        let c = (0..quotas.len())
            .filter(|&c| quotas[c] > 1)
            .max_by(|&a, &b| {
                quotas[a]
                    .cmp(&quotas[b])
                    .then(rem[b].cmp(&rem[a]))
                    .then(a.cmp(&b))
            })
            .expect("target ≥ classes present leaves a quota above one");
        quotas[c] -= 1;
        assigned -= 1;
    }
    Ok(quotas)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub class: usize,
    pub quota: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub pool_size: usize,
    pub excluded_train_overlap: usize,
    pub selected: usize,
    pub quotas: Vec<usize>,
    pub shortfalls: Vec<Shortfall>,
}

fn confidence_order(a: &(usize, &SyntheticExample), b: &(usize, &SyntheticExample)) -> Ordering {
    b.1.confidence
        .total_cmp(&a.1.confidence)
        .then(a.1.id.unwrap_or(u32::MAX).cmp(&b.1.id.unwrap_or(u32::MAX)))
        .then(a.0.cmp(&b.0))
}

/// Per class, keeps the `quota` most confident candidates assigned to it
/// (ties to the lower sentence id), after dropping candidates whose
/// normalized text is a training sentence.
pub fn filter_synthetic<S: AsRef<str>>(
    pool: &[SyntheticExample],
    quotas: &[usize],
    train_texts: &[S],
    allow_shortfall: bool,
) -> Result<(Vec<SyntheticExample>, FilterReport)> {
    let train: HashSet<String> = train_texts.iter().map(|t| normalize(t.as_ref())).collect();
    let mut per_class: Vec<Vec<(usize, &SyntheticExample)>> = vec![Vec::new(); quotas.len()];
    let mut excluded = 0;
    for (pos, ex) in pool.iter().enumerate() {
        if !train.is_empty() && train.contains(&normalize(&ex.text)) {
            excluded += 1;
            continue;
        }
        if ex.assigned_class >= quotas.len() {
            return Err(Error::InvalidInput(format!(
                "example assigned to class {} but only {} quotas given",
                ex.assigned_class,
                quotas.len()
            )));
        }
        per_class[ex.assigned_class].push((pos, ex));
    }
    let mut selected = Vec::with_capacity(quotas.iter().sum());
    let mut shortfalls = Vec::new();
    for (class, mut cands) in per_class.into_iter().enumerate() {
        let quota = quotas[class];
        if cands.len() < quota {
            shortfalls.push(Shortfall {
                class,
                quota,
                available: cands.len(),
            });
        }
        cands.sort_by(confidence_order);
        selected.extend(cands.into_iter().take(quota).map(|(_, ex)| ex.clone()));
    }
    if !shortfalls.is_empty() && !allow_shortfall {
        return Err(Error::Shortfall {
            classes: shortfalls.iter().map(|s| s.class).collect(),
        });
    }
    let report = FilterReport {
        pool_size: pool.len(),
        excluded_train_overlap: excluded,
        selected: selected.len(),
        quotas: quotas.to_vec(),
        shortfalls,
    };
    Ok((selected, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::SoftLabel;

    fn ex(id: u32, text: &str, class: usize, conf: f64) -> SyntheticExample {
        let mut p = vec![1.0 - conf; 2];
        p[class] = conf;
        SyntheticExample::new(Some(id), text.into(), SoftLabel::new(p).unwrap())
    }

    #[test]
    fn quota_examples() {
        assert_eq!(class_quotas(&[60, 40], 1000).unwrap(), vec![600, 400]);
        assert_eq!(class_quotas(&[1, 1, 1], 10).unwrap(), vec![4, 3, 3]);
        assert_eq!(class_quotas(&[99, 1], 10).unwrap(), vec![9, 1]);
    }

    #[test]
    fn quota_edge_cases() {
        assert_eq!(class_quotas(&[5, 0, 5], 4).unwrap(), vec![2, 0, 2]);
        assert_eq!(class_quotas(&[98, 1, 1], 3).unwrap(), vec![1, 1, 1]);
        assert!(class_quotas(&[1, 1, 1], 2).is_err());
        assert!(class_quotas(&[0, 0], 2).is_err());
    }

    #[test]
    fn keeps_most_confident() {
        let pool: Vec<_> = [0.9, 0.8, 0.7, 0.6]
            .iter()
            .enumerate()
            .map(|(i, &c)| ex(i as u32, &format!("s{i}"), 0, c))
            .collect();
        let (out, rep) = filter_synthetic(&pool, &[2, 0], &[] as &[&str], false).unwrap();
        let conf: Vec<f64> = out.iter().map(|e| e.confidence).collect();
        assert_eq!(conf, vec![0.9, 0.8]);
        assert!(rep.shortfalls.is_empty());
    }

    #[test]
    fn training_duplicates_excluded_first() {
        let pool = vec![ex(0, "Great  Movie", 0, 0.99), ex(1, "fine movie", 0, 0.6)];
        let (out, rep) = filter_synthetic(&pool, &[1, 0], &["great movie"], false).unwrap();
        assert_eq!(out[0].text, "fine movie");
        assert_eq!(rep.excluded_train_overlap, 1);
    }

    #[test]
    fn shortfall_reported_or_rejected() {
        let pool = vec![ex(0, "a", 0, 0.9), ex(1, "b", 0, 0.8), ex(2, "c", 1, 0.7)];
        let (out, rep) = filter_synthetic(&pool, &[2, 2], &[] as &[&str], true).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(
            rep.shortfalls,
            vec![Shortfall {
                class: 1,
                quota: 2,
                available: 1
            }]
        );
        match filter_synthetic(&pool, &[2, 2], &[] as &[&str], false) {
            Err(Error::Shortfall { classes }) => assert_eq!(classes, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ties_go_to_lower_id() {
        let pool = vec![ex(5, "a", 0, 0.8), ex(2, "b", 0, 0.8), ex(9, "c", 0, 0.8)];
        let (out, _) = filter_synthetic(&pool, &[2, 0], &[] as &[&str], false).unwrap();
        let ids: Vec<_> = out.iter().map(|e| e.id.unwrap()).collect();
        assert_eq!(ids, vec![2, 5]);
    }

    #[test]
    fn multiplier_choice() {
        let cfg = AugmentConfig::default();
        assert_eq!(choose_multiplier(500, &cfg), 100);
        assert_eq!(choose_multiplier(67_000, &cfg), 10);
        let fixed = AugmentConfig {
            multiplier: Some(7),
            ..cfg
        };
        assert_eq!(choose_multiplier(500, &fixed), 7);
    }
}
