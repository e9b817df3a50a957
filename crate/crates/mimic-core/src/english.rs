//! Small English helpers shared by prompt rendering and answer parsing:
//! pluralization, natural-language enumeration, and number words.

/// Irregular plural table; everything else goes through suffix rules.
const IRREGULAR_PLURALS: &[(&str, &str)] = &[
    ("person", "people"),
    ("man", "men"),
    ("woman", "women"),
    ("child", "children"),
    ("foot", "feet"),
    ("tooth", "teeth"),
    ("goose", "geese"),
    ("mouse", "mice"),
    ("sheep", "sheep"),
    ("fish", "fish"),
    ("deer", "deer"),
    ("knife", "knives"),
    ("leaf", "leaves"),
    ("scissors", "scissors"),
    ("skis", "skis"),
];

/// Pluralize the head noun of a (possibly multi-word) class name.
pub fn pluralize(name: &str) -> String {
    let name = name.trim();
    let (prefix, head) = match name.rfind(' ') {
        Some(i) => (&name[..=i], &name[i + 1..]),
        None => ("", name),
    };
    for (sg, pl) in IRREGULAR_PLURALS {
        if head == *sg {
            return format!("{prefix}{pl}");
        }
    }
    let plural_head = if head.ends_with('s')
        || head.ends_with('x')
        || head.ends_with('z')
        || head.ends_with("ch")
        || head.ends_with("sh")
    {
        format!("{head}es")
    } else if head.len() > 1
        && head.ends_with('y')
        && !head
            .chars()
            .rev()
            .nth(1)
            .is_some_and(|c| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u'))
    {
        format!("{}ies", &head[..head.len() - 1])
    } else {
        format!("{head}s")
    };
    format!("{prefix}{plural_head}")
}

/// Join names into a natural enumeration: "dogs, cats and horses".
pub fn enumerate_names(names: &[String]) -> String {
    match names.len() {
        0 => String::new(),
        1 => names[0].clone(),
        2 => format!("{} and {}", names[0], names[1]),
        n => format!("{} and {}", names[..n - 1].join(", "), names[n - 1]),
    }
}

const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty",
];

/// Map a number word (zero through twenty) to its value.
pub fn number_word(token: &str) -> Option<u32> {
    NUMBER_WORDS
        .iter()
        .position(|&w| w == token)
        .map(|i| i as u32)
}
