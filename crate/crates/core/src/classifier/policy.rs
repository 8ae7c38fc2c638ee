//! Strategy ordering policy.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::detector::UbKind;

use super::{CodeFeature, FixStrategy, PolicyError, SafeCatalogue};

const BUILTIN: &str = include_str!("../../data/strategy_policy.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum RowKey {
    Default,
    Unclassified,
    Kind(UbKind),
}

#[derive(Debug, Clone)]
pub struct StrategyPolicy {
    rows: BTreeMap<RowKey, [FixStrategy; 3]>,
}

impl StrategyPolicy {
    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let mut rows = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let malformed = |reason: String| PolicyError::Malformed { line, reason };
            let (key, order) = raw.split_once('\t').ok_or_else(|| malformed("missing tab".into()))?;
            let key = match key.trim() {
                "default" => RowKey::Default,
                "unclassified" => RowKey::Unclassified,
                other => RowKey::Kind(other.parse().map_err(malformed)?),
            };
            let strategies = order
                .split(',')
                .map(|s| s.trim().parse::<FixStrategy>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(malformed)?;
            let order: [FixStrategy; 3] = strategies
                .try_into()
                .map_err(|_| malformed("order must list three strategies".into()))?;
            if !FixStrategy::ALL.iter().all(|s| order.contains(s)) {
                return Err(malformed("order must be a permutation of the three strategies".into()));
            }
            rows.insert(key, order);
        }
        if !rows.contains_key(&RowKey::Default) {
            return Err(PolicyError::Malformed { line: 0, reason: "missing `default` row".into() });
        }
        Ok(Self { rows })
    }

    pub fn builtin() -> &'static StrategyPolicy {
        static POLICY: OnceLock<StrategyPolicy> = OnceLock::new();
        POLICY.get_or_init(|| StrategyPolicy::parse(BUILTIN).expect("shipped policy parses"))
    }

    fn row(&self, key: &RowKey) -> [FixStrategy; 3] {
        self.rows.get(key).copied().unwrap_or(self.rows[&RowKey::Default])
    }

    /// Base order ignoring catalogue matches. Several UB kinds are combined
    /// by summed rank positions, ties resolved by the default row.
    pub fn base_order(&self, feature: &CodeFeature) -> [FixStrategy; 3] {
        if feature.op_kinds.is_empty() {
            return self.row(&RowKey::Unclassified);
        }
        if feature.ub_kinds.is_empty() {
            return self.row(&RowKey::Default);
        }
        let default = self.row(&RowKey::Default);
        let mut order = default;
        order.sort_by_key(|s| {
            let score: usize = feature
                .ub_kinds
                .iter()
                .map(|k| self.row(&RowKey::Kind(*k)).iter().position(|x| x == s).unwrap_or(2))
                .sum();
            (score, default.iter().position(|x| x == s))
        });
        order
    }
}

/// Orders the three strategies for `feature`: a catalogue match puts
/// `SafeAlternative` first, otherwise the policy table decides.
pub fn map_strategies(
    feature: &CodeFeature,
    policy: &StrategyPolicy,
    catalogue: &SafeCatalogue,
) -> Vec<FixStrategy> {
    let base = policy.base_order(feature);
    if catalogue.matches(&feature.region.snippet, &feature.op_kinds).is_empty() {
        return base.to_vec();
    }
    let mut order = vec![FixStrategy::SafeAlternative];
    order.extend(base.iter().copied().filter(|s| *s != FixStrategy::SafeAlternative));
    order
}
