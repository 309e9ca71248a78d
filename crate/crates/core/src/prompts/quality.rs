//! Alternating generation and alignment scoring until responses pass.

use log::info;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::service::{
    default_schedule, request_caption, request_judgement, CaptionRequest, CaptionService, JudgeRequest, JudgeService,
    RetryPolicy, SamplingParams, DEFAULT_AUXILIARY_INSTRUCTION, DEFAULT_JUDGE_PROMPT, DEFAULT_SYSTEM_PROMPT,
};
use super::Instruction;
use crate::error::{Error, Result};

/// Responses scoring below this are regenerated.
pub const DEFAULT_ACCEPT_THRESHOLD: u8 = 7;

/// Image/instruction pairs drawn per dataset for inspection.
pub const DEFAULT_INSPECTION_SAMPLE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    pub threshold: u8,
    pub schedule: Vec<SamplingParams>,
    pub retry: RetryPolicy,
    pub system_prompt: String,
    /// Sent to the caption service in place of the training instruction.
    /// `{category}` is substituted.
    pub auxiliary_instruction: String,
    pub judge_prompt: String,
    /// Upper bound on concurrent service requests.
    pub max_in_flight: usize,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_ACCEPT_THRESHOLD,
            schedule: default_schedule(),
            retry: RetryPolicy::default(),
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
            auxiliary_instruction: DEFAULT_AUXILIARY_INSTRUCTION.into(),
            judge_prompt: DEFAULT_JUDGE_PROMPT.into(),
            max_in_flight: 4,
        }
    }
}

impl QualityConfig {
    pub fn caption_request(&self, image: &str, instruction: &Instruction, params: SamplingParams) -> CaptionRequest {
        CaptionRequest {
            image: image.to_string(),
            system: self.system_prompt.clone(),
            instruction: self
                .auxiliary_instruction
                .replace("{category}", instruction.category.name()),
            temperature: params.temperature,
            top_p: params.top_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualitySample {
    pub id: String,
    pub image: String,
    pub instruction: Instruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedResponse {
    pub id: String,
    pub text: String,
    pub score: u8,
    /// 0-based schedule position that produced the response.
    pub pass: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// In input order.
    pub accepted: Vec<AcceptedResponse>,
    /// Ids still below threshold when the schedule ran out, in input order.
    pub rejected: Vec<String>,
    /// Last schedule entry used.
    pub final_params: SamplingParams,
    pub passes: usize,
    /// Generations beyond the first, summed over samples.
    pub regenerations: usize,
}

impl QualityReport {
    pub fn is_complete(&self) -> bool {
        self.rejected.is_empty()
    }

    /// Turns leftover rejects into [`Error::PartialQuality`].
    pub fn into_result(self) -> Result<Self> {
        if self.is_complete() {
            Ok(self)
        } else {
            Err(Error::PartialQuality {
                rejected: self.rejected,
            })
        }
    }
}

/// Generates a response for each sample and has the judge score it; samples
/// scoring below the threshold are regenerated with the next schedule entry.
pub fn quality_loop(
    samples: &[QualitySample],
    captioner: &dyn CaptionService,
    judge: &dyn JudgeService,
    config: &QualityConfig,
) -> Result<QualityReport> {
    if config.schedule.is_empty() {
        return Err(Error::Argument("quality schedule is empty".into()));
    }
    for p in &config.schedule {
        p.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut accepted: Vec<Option<AcceptedResponse>> = vec![None; samples.len()];
    let mut pending: Vec<usize> = (0..samples.len()).collect();
    let mut passes = 0;
    let mut regenerations = 0;

    for (pass, &params) in config.schedule.iter().enumerate() {
        if pending.is_empty() {
            break;
        }
        passes = pass + 1;
        if pass > 0 {
            regenerations += pending.len();
        }
        let outcomes: Vec<Result<(String, u8, bool)>> = pool.install(|| {
            pending
                .par_iter()
                .map(|&k| {
                    let s = &samples[k];
                    let req = config.caption_request(&s.image, &s.instruction, params);
                    let resp = request_caption(captioner, &req, config.retry).map_err(|e| e.for_image(&s.id))?;
                    let jreq = JudgeRequest {
                        image: s.image.clone(),
                        system: config.judge_prompt.clone(),
                        instruction: s.instruction.text.clone(),
                        response: resp.text.clone(),
                        temperature: params.temperature,
                        top_p: params.top_p,
                    };
                    let verdict = request_judgement(judge, &jreq, config.retry, config.threshold)
                        .map_err(|e| e.for_image(&s.id))?;
                    Ok((resp.text, verdict.score, verdict.accepted))
                })
                .collect()
        });
        let mut still = Vec::new();
        for (&k, outcome) in pending.iter().zip(outcomes) {
            let (text, score, ok) = outcome?;
            if ok {
                accepted[k] = Some(AcceptedResponse {
                    id: samples[k].id.clone(),
                    text,
                    score,
                    pass,
                });
            } else {
                still.push(k);
            }
        }
        info!(
            "quality pass {} (temperature {}, top_p {}): {} accepted, {} below threshold",
            pass + 1,
            params.temperature,
            params.top_p,
            pending.len() - still.len(),
            still.len()
        );
        pending = still;
    }

    let final_params = config.schedule[passes.max(1) - 1];
    Ok(QualityReport {
        accepted: accepted.into_iter().flatten().collect(),
        rejected: pending.iter().map(|&k| samples[k].id.clone()).collect(),
        final_params,
        passes,
        regenerations,
    })
}

/// Sorted indices of a seeded random subset of `min(size, n)` items.
pub fn inspection_sample(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, size.min(n)).into_vec();
    picked.sort_unstable();
    picked
}
