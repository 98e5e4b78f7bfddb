use serde::{Deserialize, Serialize};

/// Inflection class of a (lemma, form) pair.
///
/// English past tense is split into regular and irregular; German plurals into
/// five suffix classes plus `Other` for anything that fits none of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InflectionClass {
    #[serde(rename = "regular")]
    Regular,
    #[serde(rename = "irregular")]
    Irregular,
    #[serde(rename = "/-(e)n/")]
    En,
    #[serde(rename = "/-e/")]
    E,
    #[serde(rename = "/-∅/")]
    Null,
    #[serde(rename = "/-er/")]
    Er,
    #[serde(rename = "/-s/")]
    S,
    #[serde(rename = "other")]
    Other,
}

impl InflectionClass {
    pub const ALL: [InflectionClass; 8] = [
        Self::Regular,
        Self::Irregular,
        Self::En,
        Self::E,
        Self::Null,
        Self::Er,
        Self::S,
        Self::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Regular => "regular",
            Self::Irregular => "irregular",
            Self::En => "/-(e)n/",
            Self::E => "/-e/",
            Self::Null => "/-∅/",
            Self::Er => "/-er/",
            Self::S => "/-s/",
            Self::Other => "other",
        }
    }

    /// Parses a class label. Besides the canonical labels, short ASCII aliases
    /// (`reg`, `irreg`, `en`, `e`, `0`, `er`, `s`) are accepted.
    pub fn parse(s: &str) -> Option<Self> {
        let c = match s.trim() {
            "regular" | "reg" => Self::Regular,
            "irregular" | "irreg" => Self::Irregular,
            "/-(e)n/" | "-(e)n" | "(e)n" | "en" => Self::En,
            "/-e/" | "-e" | "e" => Self::E,
            "/-∅/" | "-∅" | "∅" | "0" | "null" | "zero" => Self::Null,
            "/-er/" | "-er" | "er" => Self::Er,
            "/-s/" | "-s" | "s" => Self::S,
            "other" => Self::Other,
            _ => return None,
        };
        Some(c)
    }

    pub fn is_german(self) -> bool {
        !matches!(self, Self::Regular | Self::Irregular)
    }
}

impl std::fmt::Display for InflectionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Strips umlauts: ä→a, ö→o, ü→u (upper case likewise). `äu` becomes `au`
/// as a consequence.
pub fn normalize_umlauts(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            'ä' => 'a',
            'ö' => 'o',
            'ü' => 'u',
            'Ä' => 'A',
            'Ö' => 'O',
            'Ü' => 'U',
            c => c,
        })
        .collect()
}

/// Suffix class of a German singular/plural pair.
///
/// Both strings are umlaut-normalized, then tested in order: identical →
/// `/-∅/`; otherwise the plural must extend the singular and the extension
/// decides: `s` → `/-s/`, `er` → `/-er/`, `en` or `n` → `/-(e)n/`, `e` →
/// `/-e/`. Anything else is `other`.
pub fn classify_german_suffix(singular: &str, plural: &str) -> InflectionClass {
    let sg = normalize_umlauts(singular);
    let pl = normalize_umlauts(plural);
    if sg == pl {
        return InflectionClass::Null;
    }
    match pl.strip_prefix(sg.as_str()) {
        Some("s") => InflectionClass::S,
        Some("er") => InflectionClass::Er,
        Some("en" | "n") => InflectionClass::En,
        Some("e") => InflectionClass::E,
        _ => InflectionClass::Other,
    }
}
