use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Mutex;

use super::{check_prompt, ChatBackend, ChatExchange, GatewayError, ModelSpec};

/// Replays canned responses keyed by script key.
#[derive(Debug)]
pub struct ScriptedBackend {
    model_name: String,
    responses: BTreeMap<String, String>,
    prompt_limit: usize,
    requested: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn load(spec: &ModelSpec) -> Result<Self, GatewayError> {
        let path = spec
            .script_path
            .as_deref()
            .ok_or_else(|| GatewayError::InvalidSpec("scripted backend requires script_path".into()))?;
        let responses = read_script(path)?;
        Ok(ScriptedBackend {
            model_name: spec.model_name.clone(),
            responses,
            prompt_limit: spec.max_prompt_chars,
            requested: Mutex::new(Vec::new()),
        })
    }

    pub fn from_map(responses: BTreeMap<String, String>) -> Self {
        ScriptedBackend {
            model_name: "scripted".into(),
            responses,
            prompt_limit: usize::MAX,
            requested: Mutex::new(Vec::new()),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.responses.keys().map(String::as_str)
    }

    /// Keys requested so far, in request order, including misses.
    pub fn requested(&self) -> Vec<String> {
        self.requested.lock().expect("request log").clone()
    }

    /// Script entries never requested.
    pub fn unused(&self) -> BTreeSet<String> {
        let asked: BTreeSet<_> = self.requested().into_iter().collect();
        self.responses.keys().filter(|k| !asked.contains(*k)).cloned().collect()
    }
}

pub fn read_script(path: &Path) -> Result<BTreeMap<String, String>, GatewayError> {
    let err = |message: String| GatewayError::Script { path: path.to_path_buf(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, key: &str, system_text: &str, user_text: &str) -> Result<ChatExchange, GatewayError> {
        check_prompt(system_text, user_text, self.prompt_limit)?;
        self.requested.lock().expect("request log").push(key.to_string());
        let response = self.responses.get(key).ok_or_else(|| GatewayError::ScriptMiss(key.to_string()))?;
        Ok(ChatExchange {
            key: key.to_string(),
            system_text: system_text.to_string(),
            user_text: user_text.to_string(),
            response_text: response.clone(),
            usage: None,
            latency_secs: 0.0,
            attempt_count: 1,
        })
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_and_miss() {
        let backend = ScriptedBackend::from_map(BTreeMap::from([(
            "analyst/asr@rev1".to_string(),
            " The ASRs are:\n".to_string(),
        )]));
        let ex = backend.complete("analyst/asr@rev1", "sys", "user").unwrap();
        assert_eq!(ex.response_text, " The ASRs are:\n");
        assert_eq!(ex.attempt_count, 1);
        assert!(matches!(backend.complete("analyst/asr@rev2", "s", "u"), Err(GatewayError::ScriptMiss(k)) if k == "analyst/asr@rev2"));
        assert_eq!(backend.requested(), vec!["analyst/asr@rev1", "analyst/asr@rev2"]);
        assert!(backend.unused().is_empty());
    }
}
