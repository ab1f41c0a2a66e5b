// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::{derive_seed, observation_source, ObservationSource, SamplerOptions};
use crate::models::{Model, ScoreModel};
use crate::{Error, Point, Result};

/// A stream whose law switches from `pre` to `post` at the 1-based index `nu`.
///
/// `nu = None` means the change never happens.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StreamSpec {
    pub pre: Model,
    pub post: Model,
    pub nu: Option<usize>,
    pub length: usize,
    pub seed: u64,
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::input("stream: length must be at least 1"));
        }
        if self.nu == Some(0) {
            return Err(Error::input("stream: nu is 1-based"));
        }
        if self.pre.dim() != self.post.dim() {
            return Err(Error::Dimension {
                expected: self.pre.dim(),
                got: self.post.dim(),
            });
        }
        Ok(())
    }
}

/// Lazily generated stream; the prefix of length `k` is identical to `generate_stream(..)[..k]`.
pub struct StreamSource {
    pre: Model,
    post: Model,
    nu: Option<usize>,
    seed: u64,
    opts: SamplerOptions,
    pre_src: Option<Box<dyn ObservationSource>>,
    post_src: Option<Box<dyn ObservationSource>>,
    t: usize,
}

impl StreamSource {
    pub fn new(pre: Model, post: Model, nu: Option<usize>, seed: u64, opts: SamplerOptions) -> Result<Self> {
        if nu == Some(0) {
            return Err(Error::input("stream: nu is 1-based"));
        }
        Ok(Self {
            pre,
            post,
            nu,
            seed,
            opts,
            pre_src: None,
            post_src: None,
            t: 0,
        })
    }

    /// Observations emitted so far.
    pub fn position(&self) -> usize {
        self.t
    }

    pub fn next_observation(&mut self) -> Result<Point> {
        self.t += 1;
        let after_change = self.nu.is_some_and(|nu| self.t >= nu);
        let (slot, model, idx) = if after_change {
            (&mut self.post_src, &self.post, 1)
        } else {
            (&mut self.pre_src, &self.pre, 0)
        };
        let src = match slot {
            Some(s) => s,
            None => slot.insert(observation_source(model, derive_seed(self.seed, idx), &self.opts)?),
        };
        src.next_observation()
    }
}

/// Materialises the full stream: indices `1..ν−1` from `pre`, `ν..=length` from `post`.
pub fn generate_stream(spec: &StreamSpec, opts: &SamplerOptions) -> Result<Vec<Point>> {
    spec.validate()?;
    let mut src = StreamSource::new(spec.pre.clone(), spec.post.clone(), spec.nu, spec.seed, opts.clone())?;
    (0..spec.length).map(|_| src.next_observation()).collect()
}
