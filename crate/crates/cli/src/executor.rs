use std::thread;

use abuckets_core::ensemble::{LanguageModel, RunExecutor, Sequential};
use abuckets_core::{Result, Token, TokenDistribution};

/// Evaluates the per-base runs of a step on scoped threads, returning
/// results in base order.
#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    pub threads: usize,
}

impl Threaded {
    pub fn new(threads: usize) -> Self {
        Self {
            threads: threads.max(1),
        }
    }

    pub fn available() -> Self {
        Self::new(thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

impl RunExecutor for Threaded {
    fn evaluate<M: LanguageModel + ?Sized>(
        &self,
        model: &M,
        context: &[Token],
        bases: &[f64],
    ) -> Vec<Result<TokenDistribution>> {
        if self.threads <= 1 || bases.len() <= 1 {
            return Sequential.evaluate(model, context, bases);
        }
        let chunk = bases.len().div_ceil(self.threads);
        thread::scope(|s| {
            let handles: Vec<_> = bases
                .chunks(chunk)
                .map(|part| s.spawn(move || Sequential.evaluate(model, context, part)))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("run thread panicked"))
                .collect()
        })
    }
}
