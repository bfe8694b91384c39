//! Age-of-block computation and the per-run metric records.

use serde::Serialize;

use crate::chain::{Block, Transaction};
use crate::des::SimTime;
use crate::ids::TxId;

/// Ages of the updates carried by one block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AoBRecord {
    pub block_id: u32,
    pub depth: u64,
    pub num_updates: usize,
    /// `mine_time - gen_time` per transaction, in block order.
    pub ages: Vec<f64>,
    pub mean_age: f64,
}

/// Mean age of the block's transactions, or `None` for an empty block.
pub fn compute_aob<'a>(block: &Block, tx_lookup: impl Fn(TxId) -> &'a Transaction) -> Option<AoBRecord> {
    if block.txs.is_empty() {
        return None;
    }
    let ages: Vec<f64> = block
        .txs
        .iter()
        .map(|&tx| block.mine_time - tx_lookup(tx).gen_time)
        .collect();
    let mean_age = ages.iter().sum::<f64>() / ages.len() as f64;
    Some(AoBRecord {
        block_id: block.id.0,
        depth: block.depth,
        num_updates: ages.len(),
        ages,
        mean_age,
    })
}

/// One row of the metrics log, for one main-chain block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub block_index: u64,
    pub block_id: u32,
    pub depth: u64,
    pub miner: u32,
    pub mine_time: SimTime,
    pub num_updates: usize,
    pub aob: Option<f64>,
    pub train_acc: Option<f64>,
    /// Accuracy over the shards of the clients whose updates the block carries.
    pub contrib_train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub validation_acc: Option<f64>,
    pub mean_client_loss: Option<f64>,
    /// Blocks mined so far that did not end up on the main chain.
    pub stale_blocks: usize,
}

/// A local-training loss report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossRecord {
    pub time: SimTime,
    pub client: u32,
    pub round: u32,
    pub loss: f64,
}

/// Mean of losses reported in `(after, upto]`.
pub fn mean_loss_between(losses: &[LossRecord], after: SimTime, upto: SimTime) -> Option<f64> {
    let (sum, n) = losses
        .iter()
        .filter(|r| r.time > after && r.time <= upto)
        .fold((0.0, 0usize), |(s, n), r| (s + r.loss, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{BlockId, ClientId, MinerId, UpdateRef};

    fn tx(id: u32, gen_time: f64) -> Transaction {
        Transaction {
            id: TxId(id),
            client: ClientId(id),
            update: UpdateRef(id),
            num_samples: 1,
            gen_time,
            size_bits: 1.0,
        }
    }

    fn block(txs: &[u32], mine_time: f64) -> Block {
        Block {
            id: BlockId(1),
            parent: Some(BlockId::GENESIS),
            depth: 1,
            miner: Some(MinerId(0)),
            txs: txs.iter().map(|&t| TxId(t)).collect(),
            mine_time,
            size_bits: 0.0,
        }
    }

    #[test]
    fn aob_examples() {
        let txs = [tx(0, 0.0), tx(1, 2.0)];
        let rec = compute_aob(&block(&[0, 1], 5.0), |t| &txs[t.index()]).unwrap();
        assert_eq!(rec.ages, vec![5.0, 3.0]);
        assert_eq!(rec.mean_age, 4.0);

        let txs = [tx(0, 7.0)];
        assert_eq!(compute_aob(&block(&[0], 7.5), |t| &txs[t.index()]).unwrap().mean_age, 0.5);

        let txs = [tx(0, 3.0), tx(1, 3.0)];
        assert_eq!(compute_aob(&block(&[0, 1], 3.0), |t| &txs[t.index()]).unwrap().mean_age, 0.0);
    }

    #[test]
    fn empty_block_has_no_aob() {
        let txs: [Transaction; 0] = [];
        assert!(compute_aob(&block(&[], 3.0), |t| &txs[t.index()]).is_none());
    }

    #[test]
    fn loss_window_is_half_open() {
        let l = |time, loss| LossRecord { time, client: 0, round: 0, loss };
        let losses = [l(1.0, 1.0), l(2.0, 3.0), l(3.0, 5.0)];
        assert_eq!(mean_loss_between(&losses, 1.0, 3.0), Some(4.0));
        assert_eq!(mean_loss_between(&losses, 3.0, 9.0), None);
    }
}
