//! Prompt templates for the inference adapter.
//!
//! Context strings are assembled here (see [`crate::corpus::assemble_context`])
//! and substituted into these templates byte for byte; the adapter only sends
//! the result.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

pub const TRANSCRIBE_INSTRUCTION: &str = "Please transcribe the audio.";

pub const QWEN_SYSTEM_PROMPT: &str = "You are Qwen, a virtual human developed by the Qwen Team, Alibaba Group, capable of perceiving auditory and visual inputs, as well as generating text and speech. Only return the answer requested. Do not include any explanation or introductions.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptTemplate {
    /// Phi-4-multimodal chat string with an inline `<|audio_1|>` tag.
    Phi4,
    /// Qwen2.5-Omni system prompt plus a user turn whose audio part precedes the text.
    Qwen,
}

impl FromStr for PromptTemplate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phi4" | "phi-4" | "phi" => Ok(PromptTemplate::Phi4),
            "qwen" | "qwen2.5-omni" => Ok(PromptTemplate::Qwen),
            other => Err(format!("unknown prompt template {other:?} (expected phi4 or qwen)")),
        }
    }
}

/// A rendered inference prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferencePrompt {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    /// For Phi-4 the full chat string; for Qwen the text part of the user turn.
    pub user: String,
}

fn context_block(context: &str) -> String {
    if context.is_empty() {
        TRANSCRIBE_INSTRUCTION.to_string()
    } else {
        format!("Context: {context}\n{TRANSCRIBE_INSTRUCTION}")
    }
}

/// Renders the transcription prompt. An empty context selects the
/// no-context variant, which has no `Context:` block.
pub fn inference_prompt(template: PromptTemplate, context: &str) -> InferencePrompt {
    match template {
        PromptTemplate::Phi4 => InferencePrompt {
            system: None,
            user: format!("<|user|><|audio_1|>{}<|end|><|assistant|>", context_block(context)),
        },
        PromptTemplate::Qwen => InferencePrompt {
            system: Some(QWEN_SYSTEM_PROMPT.to_string()),
            user: context_block(context),
        },
    }
}

/// Instruction asking an LLM for one sentence that uses `word` like the
/// transcript uses its entity.
pub fn sentence_generation_prompt(transcript: &str, word: &str) -> String {
    format!(
        "Here is a sentence from a spoken transcript:\n\
         \"{transcript}\"\n\
         \n\
         Write exactly one short, natural sentence that:\n\
         - fits the same topic and register as the transcript\n\
         - uses the word \"{word}\" in the same role and context as it is used above\n\
         \n\
         Return only the sentence, no explanation."
    )
}

/// Instruction asking an LLM for `n` topical filler sentences that avoid both pair words.
pub fn filler_generation_prompt(transcript: &str, n: usize, acoustic_word: &str, context_word: &str) -> String {
    format!(
        "Here is a sentence from a spoken transcript:\n\
         \"{transcript}\"\n\
         \n\
         Write exactly {n} short, natural sentences that:\n\
         - fit the same topic and register as the transcript\n\
         - do not contain the words \"{acoustic_word}\" or \"{context_word}\"\n\
         \n\
         Return exactly {n} sentences, one per line, no numbering, no explanation."
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi4_templates() {
        assert_eq!(
            inference_prompt(PromptTemplate::Phi4, "").user,
            "<|user|><|audio_1|>Please transcribe the audio.<|end|><|assistant|>"
        );
        assert_eq!(
            inference_prompt(PromptTemplate::Phi4, "Nexus launches today.").user,
            "<|user|><|audio_1|>Context: Nexus launches today.\nPlease transcribe the audio.<|end|><|assistant|>"
        );
    }

    #[test]
    fn qwen_templates() {
        let bare = inference_prompt(PromptTemplate::Qwen, "");
        assert_eq!(bare.user, "Please transcribe the audio.");
        assert!(bare.system.unwrap().starts_with("You are Qwen, a virtual human"));
        let ctx = inference_prompt(PromptTemplate::Qwen, "nexus");
        assert_eq!(ctx.user, "Context: nexus\nPlease transcribe the audio.");
    }

    #[test]
    fn generation_prompts() {
        let p = sentence_generation_prompt("We visited Texas.", "taxes");
        assert!(p.starts_with("Here is a sentence from a spoken transcript:\n\"We visited Texas.\"\n\nWrite exactly one"));
        assert!(p.ends_with("\n\nReturn only the sentence, no explanation."));
        let f = filler_generation_prompt("We visited Texas.", 9, "texas", "taxes");
        assert!(f.contains("Write exactly 9 short, natural sentences that:\n"));
        assert!(f.contains("- do not contain the words \"texas\" or \"taxes\"\n"));
    }
}
