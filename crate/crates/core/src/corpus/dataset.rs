use serde::{Deserialize, Serialize};

use super::{
    classify_german_suffix, data_lines, parse_header, CorpusError, InflectionClass, Language,
};

/// One lemma → inflected form pair with its tags and class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InflectionExample {
    pub lemma: String,
    pub form: String,
    pub tags: Vec<String>,
    pub class: InflectionClass,
}

/// Parses a `dataset.tsv` stream.
///
/// Header: `# lang=<en|de> columns=lemma,form,tags[,class]`. Rows carry lemma,
/// form, semicolon-joined tags and an optional class. English rows must carry
/// a class; German rows without one are labelled by
/// [`classify_german_suffix`], and German rows with one must agree with it.
pub fn parse_dataset(text: &str, language: Language) -> Result<Vec<InflectionExample>, CorpusError> {
    let header = text
        .lines()
        .next()
        .ok_or_else(|| CorpusError::Header("empty dataset".into()))?;
    let mut declared = None;
    for (k, v) in parse_header(header)? {
        match k.as_str() {
            "lang" => declared = Some(v.parse::<Language>()?),
            "columns" => {
                if v != "lemma,form,tags" && v != "lemma,form,tags,class" {
                    return Err(CorpusError::Header(format!("unsupported columns `{v}`")));
                }
            }
            _ => {}
        }
    }
    match declared {
        Some(l) if l == language => {}
        Some(l) => {
            return Err(CorpusError::Header(format!(
                "file declares lang={l}, expected {language}"
            )))
        }
        None => return Err(CorpusError::Header("missing lang=".into())),
    }

    let mut out = Vec::new();
    for (line, row) in data_lines(text) {
        let cols: Vec<&str> = row.split('\t').collect();
        if !(3..=4).contains(&cols.len()) {
            return Err(CorpusError::Parse {
                line,
                msg: format!("expected 3 or 4 tab-separated columns, found {}", cols.len()),
            });
        }
        let (lemma, form) = (cols[0].trim(), cols[1].trim());
        if lemma.is_empty() || form.is_empty() {
            return Err(CorpusError::Validation {
                line,
                msg: "empty lemma or form".into(),
            });
        }
        let tags: Vec<String> = cols[2]
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        let given = cols.get(3).map(|c| c.trim()).filter(|c| !c.is_empty());
        let given = given
            .map(|c| {
                InflectionClass::parse(c).ok_or_else(|| CorpusError::Validation {
                    line,
                    msg: format!("unknown class `{c}`"),
                })
            })
            .transpose()?;
        let class = match language {
            Language::En => match given {
                Some(c @ (InflectionClass::Regular | InflectionClass::Irregular)) => c,
                Some(c) => {
                    return Err(CorpusError::Validation {
                        line,
                        msg: format!("class `{c}` is not an English class"),
                    })
                }
                None => {
                    return Err(CorpusError::Validation {
                        line,
                        msg: "English rows need a regular/irregular class".into(),
                    })
                }
            },
            Language::De => {
                let computed = classify_german_suffix(lemma, form);
                if let Some(c) = given {
                    if c != computed {
                        return Err(CorpusError::Validation {
                            line,
                            msg: format!("class `{c}` disagrees with suffix class `{computed}`"),
                        });
                    }
                }
                computed
            }
        };
        out.push(InflectionExample {
            lemma: lemma.to_string(),
            form: form.to_string(),
            tags,
            class,
        });
    }
    Ok(out)
}

/// Canonical `dataset.tsv` rendering (class column always present).
pub fn write_dataset(examples: &[InflectionExample], language: Language) -> String {
    let mut s = format!("# lang={language} columns=lemma,form,tags,class\n");
    for ex in examples {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            ex.lemma,
            ex.form,
            ex.tags.join(";"),
            ex.class.label()
        ));
    }
    s
}
