use serde::{Deserialize, Serialize};

use super::{FlowError, OperationKind, TransactionFlow};

/// Strictly positive per-slot weights, indexed like [`OperationKind::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 8]", into = "[f64; 8]")]
pub struct Weights([f64; 8]);

impl Weights {
    pub fn new(w: [f64; 8]) -> Result<Self, FlowError> {
        for (i, x) in w.iter().enumerate() {
            if !x.is_finite() || *x <= 0.0 {
                return Err(FlowError::InvalidWeights(format!(
                    "weight {} ({}) must be finite and > 0",
                    i,
                    OperationKind::ALL[i]
                )));
            }
        }
        Ok(Weights(w))
    }

    pub fn uniform() -> Self {
        Weights([1.0; 8])
    }

    pub fn get(&self, kind: OperationKind) -> f64 {
        self.0[kind.index()]
    }

    pub fn as_array(&self) -> [f64; 8] {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Result<Self, FlowError> {
        Weights::new(self.0.map(|x| x * c))
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights::uniform()
    }
}

impl TryFrom<[f64; 8]> for Weights {
    type Error = FlowError;
    fn try_from(w: [f64; 8]) -> Result<Self, FlowError> {
        Weights::new(w)
    }
}

impl From<Weights> for [f64; 8] {
    fn from(w: Weights) -> Self {
        w.0
    }
}

/// Operation-presence bits (bit j = `OperationKind::ALL[j]`) with their weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    bits: u8,
    weights: Weights,
}

impl FeatureVector {
    pub fn from_bits(bits: u8, weights: Weights) -> Self {
        FeatureVector { bits, weights }
    }

    pub fn from_kinds(kinds: &[OperationKind], weights: Weights) -> Self {
        let bits = kinds.iter().fold(0u8, |b, k| b | k.bit());
        FeatureVector { bits, weights }
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn has(&self, kind: OperationKind) -> bool {
        self.bits & kind.bit() != 0
    }

    pub fn kinds(&self) -> Vec<OperationKind> {
        OperationKind::ALL.into_iter().filter(|k| self.has(*k)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    fn masked_sq(&self, mask: u8) -> f64 {
        OperationKind::ALL
            .iter()
            .filter(|k| mask & k.bit() != 0)
            .map(|k| {
                let w = self.weights.get(*k);
                w * w
            })
            .sum()
    }
}

/// Set bit j iff the flow contains an event of kind j. The claim payout
/// itself does not count as a Receive.
pub fn extract_features(flow: &TransactionFlow, weights: Weights) -> FeatureVector {
    let bits = flow.events.iter().filter(|e| !e.is_claim).fold(0u8, |b, e| b | e.op.bit());
    FeatureVector { bits, weights }
}

/// One minus the weighted cosine similarity of two presence vectors.
///
/// Two zero vectors are at distance 0; a zero vector is at distance 1 from
/// any nonzero one.
pub fn weighted_cosine_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64, FlowError> {
    if a.weights != b.weights {
        return Err(FlowError::WeightMismatch);
    }
    if a.bits == b.bits {
        return Ok(0.0);
    }
    if a.bits == 0 || b.bits == 0 {
        return Ok(1.0);
    }
    let num = a.masked_sq(a.bits & b.bits);
    let na = a.masked_sq(a.bits);
    let nb = a.masked_sq(b.bits);
    let sim = num / (na.sqrt() * nb.sqrt());
    Ok((1.0 - sim).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::FlowEvent;
    use crate::types::{Address, TokenAmount, TxHash};
    use proptest::prelude::*;
    use OperationKind::*;

    fn fv(kinds: &[OperationKind]) -> FeatureVector {
        FeatureVector::from_kinds(kinds, Weights::uniform())
    }

    #[test]
    fn reference_values() {
        assert_eq!(weighted_cosine_distance(&fv(&[Sell]), &fv(&[Sell])).unwrap(), 0.0);
        assert_eq!(weighted_cosine_distance(&fv(&[Sell]), &fv(&[Stake])).unwrap(), 1.0);
        let d = weighted_cosine_distance(&fv(&[Sell]), &fv(&[Sell, Stake])).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(weighted_cosine_distance(&fv(&[]), &fv(&[])).unwrap(), 0.0);
        assert_eq!(weighted_cosine_distance(&fv(&[]), &fv(&[Send])).unwrap(), 1.0);
    }

    #[test]
    fn weight_mismatch() {
        let other = Weights::new([2.0; 8]).unwrap();
        let b = FeatureVector::from_kinds(&[Sell], other);
        assert_eq!(weighted_cosine_distance(&fv(&[Sell]), &b), Err(FlowError::WeightMismatch));
    }

    #[test]
    fn weights_reject_nonpositive() {
        let mut w = [1.0; 8];
        w[3] = 0.0;
        assert!(Weights::new(w).is_err());
        w[3] = f64::NAN;
        assert!(Weights::new(w).is_err());
        assert!(serde_json::from_str::<Weights>("[1,1,1,1,1,1,1,-1]").is_err());
    }

    #[test]
    fn claim_receive_is_ignored() {
        let ev = |op, is_claim| FlowEvent {
            op,
            counterparty: Address([0; 20]),
            amount: TokenAmount(1),
            balance_after: TokenAmount(1),
            staked_after: TokenAmount::ZERO,
            lp_after: TokenAmount::ZERO,
            timestamp: 0,
            tx_hash: TxHash([0; 32]),
            is_claim,
        };
        let flow = TransactionFlow { address: Address([1; 20]), events: vec![ev(Receive, true)] };
        assert!(extract_features(&flow, Weights::uniform()).is_zero());
        let flow = TransactionFlow {
            address: Address([1; 20]),
            events: vec![ev(Receive, true), ev(Stake, false), ev(Sell, false)],
        };
        assert_eq!(extract_features(&flow, Weights::uniform()).kinds(), vec![Sell, Stake]);
    }

    proptest! {
        #[test]
        fn symmetric_bounded_scale_invariant(
            a in any::<u8>(),
            b in any::<u8>(),
            w in prop::array::uniform8(0.01f64..100.0),
            c in 0.001f64..1000.0,
        ) {
            let w = Weights::new(w).unwrap();
            let ws = w.scaled(c).unwrap();
            let d = |x, y, w| weighted_cosine_distance(
                &FeatureVector::from_bits(x, w), &FeatureVector::from_bits(y, w)).unwrap();
            let dab = d(a, b, w);
            prop_assert!((0.0..=1.0).contains(&dab));
            prop_assert_eq!(dab, d(b, a, w));
            prop_assert!((dab - d(a, b, ws)).abs() < 1e-12);
        }
    }
}
