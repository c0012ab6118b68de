use std::sync::OnceLock;

use regex::Regex;

struct Rule {
    pattern: Regex,
    replacement: &'static str,
}

/// Substitutions of the common "basic English" normalizer, applied in order
/// after lowercasing.
fn rules() -> &'static [Rule] {
    static RULES: OnceLock<Vec<Rule>> = OnceLock::new();
    RULES.get_or_init(|| {
        [
            (r"'", " '  "),
            (r#"""#, ""),
            (r"\.", " . "),
            (r"<br\s*/?>", " "),
            (r",", " , "),
            (r"\(", " ( "),
            (r"\)", " ) "),
            (r"!", " ! "),
            (r"\?", " ? "),
            (r";", " "),
            (r":", " "),
        ]
        .into_iter()
        .map(|(p, r)| Rule {
            pattern: Regex::new(p).expect("static pattern"),
            replacement: r,
        })
        .collect()
    })
}

/// Lowercases, splits off `' . , ( ) ! ?` as standalone tokens, drops `" ; :`
/// and HTML line breaks, then splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut s = text.to_lowercase();
    for rule in rules() {
        if rule.pattern.is_match(&s) {
            s = rule.pattern.replace_all(&s, rule.replacement).into_owned();
        }
    }
    s.split_whitespace().map(str::to_owned).collect()
}
