//! Prompt templates with named placeholders.
//!
//! Defaults ship compiled in; any template can be overridden by dropping a
//! file of the same name into a directory passed to [`PromptSet::load_dir`].

use std::path::Path;

use crate::Result;

/// The five templates the pipeline sends to chat-style backends.
///
/// Placeholders: `{captions_a}`, `{captions_b}` and `{n}` in the proposer
/// templates; `{caption}` and `{hypothesis}` in the caption-QA template;
/// `{hypothesis}` in the image-QA question; `{truth}` and `{predicted}` in
/// the judge template.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub caption_proposer: String,
    pub grid_proposer: String,
    pub qa_caption: String,
    pub qa_image: String,
    pub judge: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            caption_proposer: include_str!("../prompts/caption_proposer.txt").to_string(),
            grid_proposer: include_str!("../prompts/grid_proposer.txt").to_string(),
            qa_caption: include_str!("../prompts/qa_caption.txt").to_string(),
            qa_image: include_str!("../prompts/qa_image.txt").to_string(),
            judge: include_str!("../prompts/judge.txt").to_string(),
        }
    }
}

impl PromptSet {
    /// Defaults overlaid with any `*.txt` override files found in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = PromptSet::default();
        for (name, slot) in [
            ("caption_proposer.txt", &mut set.caption_proposer),
            ("grid_proposer.txt", &mut set.grid_proposer),
            ("qa_caption.txt", &mut set.qa_caption),
            ("qa_image.txt", &mut set.qa_image),
            ("judge.txt", &mut set.judge),
        ] {
            let path = dir.join(name);
            if path.is_file() {
                *slot = std::fs::read_to_string(&path)?;
            }
        }
        Ok(set)
    }
}

/// Substitute `{key}` placeholders. Keys absent from `vars` are left alone.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// One caption per line, `- ` bulleted, as the proposer templates expect.
pub fn bullet_list(items: &[String]) -> String {
    items
        .iter()
        .map(|c| format!("- {c}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_their_placeholders() {
        let p = PromptSet::default();
        for needle in ["{captions_a}", "{captions_b}", "{n}"] {
            assert!(p.caption_proposer.contains(needle), "{needle}");
        }
        assert!(p.grid_proposer.contains("{n}"));
        assert!(p.grid_proposer.contains("top half"));
        assert!(p.qa_caption.contains("{caption}") && p.qa_caption.contains("{hypothesis}"));
        assert!(p.qa_image.contains("{hypothesis}"));
        assert!(p.judge.contains("{truth}") && p.judge.contains("{predicted}"));
    }

    #[test]
    fn render_replaces_every_occurrence() {
        let out = render("{x} and {y} and {x}", &[("x", "1"), ("y", "2")]);
        assert_eq!(out, "1 and 2 and 1");
        assert_eq!(render("{unknown}", &[("x", "1")]), "{unknown}");
    }

    #[test]
    fn bullet_list_formats_lines() {
        let items = vec!["a cat".to_string(), "a dog".to_string()];
        assert_eq!(bullet_list(&items), "- a cat\n- a dog");
        assert_eq!(bullet_list(&[]), "");
    }

    #[test]
    fn dir_overrides_apply_partially() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("judge.txt"), "custom {truth} {predicted}").unwrap();
        let set = PromptSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.judge, "custom {truth} {predicted}");
        assert_eq!(set.qa_caption, PromptSet::default().qa_caption);
    }
}
