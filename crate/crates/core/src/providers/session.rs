use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::templates::REFORMAT;
use super::{GenerationRequest, Prompt, PromptTemplates, ProviderError, ProviderHub, Role};

/// One generation call as sent and received, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: Role,
    pub template_id: String,
    pub key: String,
    pub attempt: u32,
    pub prompt: Prompt,
    pub reply: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CallError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{template_id}: unusable reply after reformat retry: {problem}")]
    Malformed { template_id: String, problem: String },
}

/// Renders templates, issues requests through a hub, and records every call.
pub struct Session<'a> {
    hub: &'a ProviderHub,
    templates: &'a PromptTemplates,
    max_output: u32,
    log: Mutex<Vec<CallRecord>>,
}

impl<'a> Session<'a> {
    pub fn new(hub: &'a ProviderHub, templates: &'a PromptTemplates) -> Self {
        Self {
            hub,
            templates,
            max_output: 2048,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn hub(&self) -> &ProviderHub {
        self.hub
    }

    pub fn templates(&self) -> &PromptTemplates {
        self.templates
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn take_records(&self) -> Vec<CallRecord> {
        std::mem::take(&mut *self.log.lock().unwrap_or_else(|e| e.into_inner()))
    }

    fn send(&self, role: Role, template_id: &str, key: &str, prompt: Prompt, attempt: u32) -> Result<String, ProviderError> {
        let req = GenerationRequest::new(role, template_id, key, prompt).with_max_output(self.max_output);
        let result = self.hub.generate(&req);
        let record = CallRecord {
            role,
            template_id: template_id.to_string(),
            key: key.to_string(),
            attempt,
            prompt: req.prompt,
            reply: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(ToString::to_string),
        };
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push(record);
        result
    }

    pub fn call(&self, role: Role, template_id: &str, key: &str, values: &[(&str, &str)]) -> Result<String, CallError> {
        let prompt = self.templates.render(template_id, values).map_err(ProviderError::from)?;
        Ok(self.send(role, template_id, key, prompt, 1)?)
    }

    /// Calls and parses; a reply that fails `parse` earns exactly one retry with
    /// a reformat instruction appended to the prompt.
    pub fn call_parsed<T>(
        &self,
        role: Role,
        template_id: &str,
        key: &str,
        values: &[(&str, &str)],
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, CallError> {
        let prompt = self.templates.render(template_id, values).map_err(ProviderError::from)?;
        let reply = self.send(role, template_id, key, prompt.clone(), 1)?;
        let problem = match parse(&reply) {
            Ok(v) => return Ok(v),
            Err(p) => p,
        };
        let notice = self
            .templates
            .render(REFORMAT, &[("problem", &problem)])
            .map_err(ProviderError::from)?;
        let retry = Prompt {
            system: prompt.system,
            user: format!("{}\n\n{}", prompt.user, notice.user),
        };
        let reply = self.send(role, template_id, key, retry, 2)?;
        parse(&reply).map_err(|problem| CallError::Malformed {
            template_id: template_id.to_string(),
            problem,
        })
    }
}
