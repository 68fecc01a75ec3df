use rand::Rng;
use rayon::prelude::*;

use super::{greedy_caption, run_annealing, DecodeResult, DecoderConfig, InitMode, Scorer};
use crate::cca::CcaModel;
use crate::error::{Error, Result};
use crate::linalg::SparseVec;
use crate::phrase::{Caption, ContextTable, PhraseInventory};
use crate::seed::{self, ChainRng};

const INIT_REDRAWS: usize = 32;

#[derive(Debug)]
pub struct BatchItem {
    pub id: String,
    pub result: Result<DecodeResult>,
}

/// Picks the chain's starting caption. Training-pool draws are repeated a few
/// times if they are too short to admit any move.
pub fn initial_caption(
    mode: InitMode,
    pool: &[Caption],
    q: &ContextTable,
    max_len: usize,
    rng: &mut ChainRng,
) -> Result<Caption> {
    match mode {
        InitMode::TrainingCaption => {
            if pool.is_empty() {
                return Err(Error::Empty("initialization pool has no captions".into()));
            }
            let mut pick = &pool[rng.random_range(0..pool.len())];
            for _ in 0..INIT_REDRAWS {
                if pick.len() >= 2 {
                    break;
                }
                pick = &pool[rng.random_range(0..pool.len())];
            }
            Ok(pick.clone())
        }
        InitMode::Greedy => greedy_caption(q, max_len).ok_or_else(|| {
            Error::InvalidInput(
                "context table has no <begin> context for greedy initialization".into(),
            )
        }),
    }
}

/// Decodes every input with its own stream `seed ^ h(id)`. Output order matches
/// input order; a failing input does not stop the others.
pub fn decode_batch(
    model: &CcaModel,
    inventory: &PhraseInventory,
    q: &ContextTable,
    inputs: &[(String, SparseVec)],
    pool: &[Caption],
    config: &DecoderConfig,
) -> Result<Vec<BatchItem>> {
    config.validate()?;
    Ok(inputs
        .par_iter()
        .map(|(id, phi)| BatchItem {
            id: id.clone(),
            result: decode_one(model, inventory, q, id, phi, pool, config),
        })
        .collect())
}

fn decode_one(
    model: &CcaModel,
    inventory: &PhraseInventory,
    q: &ContextTable,
    id: &str,
    phi: &SparseVec,
    pool: &[Caption],
    config: &DecoderConfig,
) -> Result<DecodeResult> {
    let scorer = Scorer::new(model, inventory, phi, config.eta)?;
    let mut rng = seed::rng(seed::derive_seed(config.seed, id));
    let init = initial_caption(config.init, pool, q, config.max_len, &mut rng)?;
    let result = run_annealing(&scorer, q, &init, config, &mut rng);
    if result.warning.is_some() {
        log::warn!("{id}: no valid proposal during decoding, returning the initial caption");
    }
    Ok(result)
}
