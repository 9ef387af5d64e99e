//! Prompt rendering. Templates are fixed text assets with `{question}` and
//! `{choices}` placeholders; `{choices}` becomes one `label. content` line
//! per option.

use crate::backend::LanguageModelBackend;
use crate::dataset::McqaItem;

pub const ANSWER_TEMPLATE: &str = include_str!("../assets/prompt_answer.txt");
pub const VERB_TEMPLATE: &str = include_str!("../assets/prompt_verb.txt");
pub const LING_TEMPLATE: &str = include_str!("../assets/prompt_ling.txt");

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("unknown template '{0}'")]
    UnknownTemplate(String),
    #[error("template '{name}' is missing the {placeholder} placeholder")]
    MissingPlaceholder {
        name: String,
        placeholder: &'static str,
    },
}

fn template_by_name(name: &str) -> Result<&'static str, PromptError> {
    match name {
        "answer" => Ok(ANSWER_TEMPLATE),
        "verb" => Ok(VERB_TEMPLATE),
        "ling" => Ok(LING_TEMPLATE),
        other => Err(PromptError::UnknownTemplate(other.to_string())),
    }
}

fn render_choices(item: &McqaItem) -> String {
    let mut out = String::new();
    for opt in &item.options {
        out.push_str(&opt.label);
        out.push_str(". ");
        out.push_str(&opt.content);
        out.push('\n');
    }
    out
}

fn render_template(name: &str, template: &str, item: &McqaItem) -> Result<String, PromptError> {
    for placeholder in ["{question}", "{choices}"] {
        if !template.contains(placeholder) {
            return Err(PromptError::MissingPlaceholder {
                name: name.to_string(),
                placeholder: match placeholder {
                    "{question}" => "{question}",
                    _ => "{choices}",
                },
            });
        }
    }
    let mut text = template
        .replace("{question}", &item.question)
        .replace("{choices}", &render_choices(item));
    if text.contains("{EXPRESSION_LIST}") {
        text = text.replace(
            "{EXPRESSION_LIST}",
            &crate::baselines::expression_list_text(),
        );
    }
    Ok(text)
}

/// Render a named template ("answer", "verb", "ling") for an item.
/// Byte-stable: identical inputs produce identical text.
pub fn render_prompt(template_name: &str, item: &McqaItem) -> Result<String, PromptError> {
    let template = template_by_name(template_name)?;
    render_template(template_name, template, item)
}

/// Render a prompt for a specific backend, appending the hidden
/// `#qid=<id> #labels=<...>` trailer when the backend asks for one (the mock
/// uses it to stay a pure function of the prompt).
pub fn render_prompt_for_backend(
    template_name: &str,
    item: &McqaItem,
    backend: &dyn LanguageModelBackend,
) -> Result<String, PromptError> {
    let mut text = render_prompt(template_name, item)?;
    if backend.wants_prompt_trailer() {
        text.push_str(&trailer(item));
    }
    Ok(text)
}

fn trailer(item: &McqaItem) -> String {
    format!("\n#qid={} #labels={}", item.id, item.labels().join(","))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::McqaOption;

    fn item() -> McqaItem {
        McqaItem::new(
            "q7",
            "Which is a color?",
            vec![
                McqaOption { label: "A".into(), content: "red".into() },
                McqaOption { label: "B".into(), content: "rock".into() },
                McqaOption { label: "C".into(), content: "run".into() },
                McqaOption { label: "D".into(), content: "ring".into() },
            ],
            "A",
            None,
        )
        .unwrap()
    }

    #[test]
    fn answer_prompt_lists_choices_and_ends_with_answer_cue() {
        let text = render_prompt("answer", &item()).unwrap();
        assert!(text.contains("The question is: Which is a color?"));
        for line in ["A. red", "B. rock", "C. run", "D. ring"] {
            assert!(text.contains(&format!("{line}\n")), "missing {line}");
        }
        assert!(text.ends_with("Answer: "), "got ...{:?}", &text[text.len() - 12..]);
    }

    #[test]
    fn removed_option_drops_its_choice_line() {
        let reduced = item().remove_option("C").unwrap();
        let text = render_prompt("answer", &reduced).unwrap();
        let choice_lines = text
            .lines()
            .filter(|l| ["A. ", "B. ", "C. ", "D. "].iter().any(|p| l.starts_with(p)))
            .count();
        assert_eq!(choice_lines, 3);
        assert!(!text.contains("C. run"));
    }

    #[test]
    fn unknown_template_errors() {
        let err = render_prompt("nope", &item()).unwrap_err();
        assert!(matches!(err, PromptError::UnknownTemplate(_)));
    }

    #[test]
    fn missing_placeholder_errors() {
        let err = render_template("custom", "no placeholders here", &item()).unwrap_err();
        assert!(matches!(err, PromptError::MissingPlaceholder { .. }));
    }

    #[test]
    fn ling_template_carries_the_expression_list() {
        let text = render_prompt("ling", &item()).unwrap();
        assert!(!text.contains("{EXPRESSION_LIST}"));
        assert!(text.contains("'Almost Certain'"));
        assert!(text.contains("'About Even'"));
    }

    #[test]
    fn trailer_is_appended_only_for_trailer_backends() {
        let spec = crate::backend::MockModelSpec {
            weights: std::collections::BTreeMap::from([(
                "q7".to_string(),
                [("A", 1.0), ("B", 1.0), ("C", 1.0), ("D", 1.0)]
                    .into_iter()
                    .map(|(l, w)| (l.to_string(), w))
                    .collect(),
            )]),
            sentinel_affinity: 0.5,
            sentinel_affinity_overrides: Default::default(),
            answer_noise: 0.0,
        };
        let mock = crate::backend::MockBackend::new(spec).unwrap();
        let with = render_prompt_for_backend("answer", &item(), &mock).unwrap();
        assert!(with.ends_with("\n#qid=q7 #labels=A,B,C,D"));
        let scripted = crate::backend::ScriptedBackend::new(["A"]);
        let without = render_prompt_for_backend("answer", &item(), &scripted).unwrap();
        assert!(without.ends_with("Answer: "));
    }

    #[test]
    fn rendering_is_byte_stable() {
        let a = render_prompt("answer", &item()).unwrap();
        let b = render_prompt("answer", &item()).unwrap();
        assert_eq!(a, b);
    }
}
