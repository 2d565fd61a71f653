use super::{Backend, CompletionRequest, LlmError};
use crate::cost::{tags, Meter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Extra attempts after a transport failure.
    pub transport_retries: usize,
    /// Re-asks with a format reminder after an unparseable reply.
    pub reasks: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            transport_retries: 2,
            reasks: 1,
        }
    }
}

/// A backend bound to one run's meter.
///
/// Every [`Gateway::complete`] increments the request tag exactly once,
/// whatever the outcome. Transport retries and re-asks are metered under
/// their own tags.
#[derive(Clone, Copy)]
pub struct Gateway<'a> {
    backend: &'a dyn Backend,
    meter: &'a Meter,
    policy: RetryPolicy,
}

impl<'a> Gateway<'a> {
    pub fn new(backend: &'a dyn Backend, meter: &'a Meter) -> Self {
        Self {
            backend,
            meter,
            policy: RetryPolicy::default(),
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn meter(&self) -> &'a Meter {
        self.meter
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        req.validate()?;
        self.meter.llm_call(&req.tag);
        let mut attempt = 0;
        loop {
            match self.backend.complete(req) {
                Err(e) if e.is_retryable() && attempt < self.policy.transport_retries => {
                    attempt += 1;
                    self.meter.llm_call(tags::TRANSPORT_RETRY);
                }
                other => return other,
            }
        }
    }

    /// Completes and parses; on a parse failure re-asks with `reminder`
    /// appended, metered under the re-ask tag. Returns the last raw reply
    /// and the parsed value, if any attempt parsed.
    pub fn complete_parsed<T>(
        &self,
        req: &CompletionRequest,
        reminder: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<(String, Option<T>), LlmError> {
        let mut raw = self.complete(req)?;
        if let Some(v) = parse(&raw) {
            return Ok((raw, Some(v)));
        }
        for _ in 0..self.policy.reasks {
            let retry = CompletionRequest {
                prompt: format!("{}\n\n{}", req.prompt, reminder),
                decoding: req.decoding.clone(),
                tag: tags::REASK.to_string(),
            };
            raw = self.complete(&retry)?;
            if let Some(v) = parse(&raw) {
                return Ok((raw, Some(v)));
            }
        }
        Ok((raw, None))
    }
}
