use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    attracting_components, degree_assortativity, reciprocity, token_node_class, AssortativityVariant, CommunityGraph,
    Digraph, GraphError,
};
use crate::ingest::{EventKind, EventStore};
use crate::types::{Timestamp, SECONDS_PER_DAY};

/// Cumulative token graph from the first event up to and including `cutoff`.
#[derive(Debug, Clone)]
pub struct GraphSlice {
    pub cutoff: Timestamp,
    pub graph: CommunityGraph,
}

/// Cutoffs every `interval_days` after `start`, closed by a final cutoff at `end`.
pub fn slice_cutoffs(start: Timestamp, end: Timestamp, interval_days: u32) -> Result<Vec<Timestamp>, GraphError> {
    if start >= end {
        return Err(GraphError::InvalidWindow { start, end });
    }
    if interval_days == 0 {
        return Err(GraphError::InvalidInterval);
    }
    let step = interval_days as i64 * SECONDS_PER_DAY;
    let mut cutoffs: Vec<Timestamp> = (1..).map(|k| start + k * step).take_while(|c| *c < end).collect();
    cutoffs.push(end);
    Ok(cutoffs)
}

/// Cumulative token-graph slices, one per interval boundary.
pub fn weekly_slices(
    store: &EventStore,
    start: Timestamp,
    end: Timestamp,
    interval_days: u32,
) -> Result<Vec<GraphSlice>, GraphError> {
    let cutoffs = slice_cutoffs(start, end, interval_days)?;
    let events: Vec<_> =
        store.events.iter().filter(|e| e.kind == EventKind::TokenTransfer && e.timestamp <= end).collect();
    if !events.iter().any(|e| e.timestamp >= start) {
        return Err(GraphError::WindowEmpty { start, end });
    }
    let mut graph = CommunityGraph::default();
    let mut slices = Vec::with_capacity(cutoffs.len());
    let mut next = 0;
    for cutoff in cutoffs {
        while next < events.len() && events[next].timestamp <= cutoff {
            graph.add_event(events[next], |a| token_node_class(store, a));
            next += 1;
        }
        slices.push(GraphSlice { cutoff, graph: graph.clone() });
    }
    Ok(slices)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub cutoff: Timestamp,
    pub reciprocity: Option<f64>,
    pub assortativity: Option<f64>,
    pub attracting_components: usize,
    pub nodes: usize,
    pub edges: usize,
}

/// Per-slice metrics; undefined metrics are `None` (JSON `null`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricSeries {
    pub points: Vec<MetricPoint>,
}

impl MetricSeries {
    pub fn cutoffs(&self) -> Vec<Timestamp> {
        self.points.iter().map(|p| p.cutoff).collect()
    }

    pub fn reciprocity(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.reciprocity).collect()
    }

    pub fn nodes(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.nodes).collect()
    }

    pub fn edges(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.edges).collect()
    }
}

pub fn metric_series(slices: &[GraphSlice], variant: AssortativityVariant) -> MetricSeries {
    let points = slices
        .par_iter()
        .map(|s| {
            let g = Digraph::from_community(&s.graph);
            MetricPoint {
                cutoff: s.cutoff,
                reciprocity: reciprocity(&g).ok(),
                assortativity: degree_assortativity(&g, variant).ok(),
                attracting_components: attracting_components(&g),
                nodes: s.graph.node_count(),
                edges: s.graph.edge_count(),
            }
        })
        .collect();
    MetricSeries { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{IngestConfig, TransferEvent};
    use crate::types::{date_to_timestamp, Address, TokenAmount, TxHash};

    fn ev(from: u8, to: u8, ts: i64) -> TransferEvent {
        TransferEvent {
            tx_hash: TxHash([from ^ to ^ (ts as u8); 32]),
            log_index: Some(0),
            from: Address([from; 20]),
            to: Address([to; 20]),
            value: TokenAmount(1),
            timestamp: ts,
            block: 0,
            kind: EventKind::TokenTransfer,
        }
    }

    fn store(events: Vec<TransferEvent>) -> EventStore {
        EventStore { events, config: IngestConfig::default(), ..Default::default() }
    }

    #[test]
    fn two_week_window() {
        let start = 0;
        let day = SECONDS_PER_DAY;
        let s = store(vec![ev(1, 2, day), ev(2, 3, 9 * day)]);
        let slices = weekly_slices(&s, start, 14 * day, 7).unwrap();
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].graph.edge_count(), 1);
        assert_eq!(slices[1].graph.edge_count(), 2);
    }

    #[test]
    fn study_window_slice_count() {
        let start = date_to_timestamp("2021-11-15").unwrap();
        let end = date_to_timestamp("2022-04-13").unwrap() + SECONDS_PER_DAY - 1;
        let n = slice_cutoffs(start, end, 7).unwrap().len();
        assert!((21..=22).contains(&n), "{n}");
    }

    #[test]
    fn events_after_end_are_window_empty() {
        let s = store(vec![ev(1, 2, 100 * SECONDS_PER_DAY)]);
        assert!(matches!(weekly_slices(&s, 0, 14 * SECONDS_PER_DAY, 7), Err(GraphError::WindowEmpty { .. })));
    }

    #[test]
    fn single_mutual_pair_series() {
        let s = store(vec![ev(1, 2, 10), ev(2, 1, 20)]);
        let slices = weekly_slices(&s, 0, 100, 7).unwrap();
        let series = metric_series(&slices, AssortativityVariant::OutIn);
        assert_eq!(series.points.len(), 1);
        assert_eq!(series.points[0].reciprocity, Some(1.0));
    }

    #[test]
    fn series_is_monotone() {
        let day = SECONDS_PER_DAY;
        let events = (0..40u8).map(|i| ev(i % 7, (i * 3 + 1) % 11 + 20, i as i64 * day)).collect();
        let slices = weekly_slices(&store(events), 0, 40 * day, 7).unwrap();
        let series = metric_series(&slices, AssortativityVariant::OutIn);
        for w in series.points.windows(2) {
            assert!(w[0].nodes <= w[1].nodes && w[0].edges <= w[1].edges);
        }
        for w in slices.windows(2) {
            assert!(w[0].graph.nodes.keys().all(|k| w[1].graph.nodes.contains_key(k)));
            assert!(w[0].graph.edges.keys().all(|k| w[1].graph.edges.contains_key(k)));
        }
    }
}
