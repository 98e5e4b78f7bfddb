use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::CorpusError;

pub type SymbolId = usize;

pub const PAD: SymbolId = 0;
pub const BOS: SymbolId = 1;
pub const EOS: SymbolId = 2;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    Pad,
    Bos,
    Eos,
    Char(char),
    Tag(String),
}

/// Bijection between symbols and contiguous ids.
///
/// Ids 0, 1 and 2 are always PAD, BOS and EOS. Characters and tags follow in
/// insertion order. The decoder predicts over the *target* vocabulary: EOS at
/// index 0 followed by every character symbol in id order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Symbol>", into = "Vec<Symbol>")]
pub struct Alphabet {
    symbols: Vec<Symbol>,
    index: HashMap<Symbol, SymbolId>,
    targets: Vec<SymbolId>,
    target_of: Vec<Option<usize>>,
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::new()
    }
}

impl From<Vec<Symbol>> for Alphabet {
    fn from(symbols: Vec<Symbol>) -> Self {
        let mut a = Alphabet::new();
        for s in symbols.into_iter().skip(3) {
            a.push(s);
        }
        a
    }
}

impl From<Alphabet> for Vec<Symbol> {
    fn from(a: Alphabet) -> Self {
        a.symbols
    }
}

impl Alphabet {
    pub fn new() -> Self {
        let mut a = Self {
            symbols: Vec::new(),
            index: HashMap::new(),
            targets: Vec::new(),
            target_of: Vec::new(),
        };
        a.push(Symbol::Pad);
        a.push(Symbol::Bos);
        a.push(Symbol::Eos);
        a
    }

    fn push(&mut self, s: Symbol) -> SymbolId {
        if let Some(&id) = self.index.get(&s) {
            return id;
        }
        let id = self.symbols.len();
        let is_target = matches!(s, Symbol::Eos | Symbol::Char(_));
        self.index.insert(s.clone(), id);
        self.symbols.push(s);
        if is_target {
            self.target_of.push(Some(self.targets.len()));
            self.targets.push(id);
        } else {
            self.target_of.push(None);
        }
        id
    }

    pub fn add_char(&mut self, c: char) -> SymbolId {
        self.push(Symbol::Char(c))
    }

    pub fn add_tag(&mut self, tag: &str) -> SymbolId {
        self.push(Symbol::Tag(tag.to_string()))
    }

    /// Adds every new character of `text`, sorted, so that the ids assigned by
    /// one call do not depend on character order within `text`.
    pub fn observe_text<'a>(&mut self, texts: impl IntoIterator<Item = &'a str>) {
        let mut chars: Vec<char> = texts.into_iter().flat_map(str::chars).collect();
        chars.sort_unstable();
        chars.dedup();
        for c in chars {
            self.add_char(c);
        }
    }

    /// Adds the characters and tags of a set of examples (characters first,
    /// then tags, each sorted).
    pub fn observe_examples<'a>(&mut self, examples: impl IntoIterator<Item = &'a super::InflectionExample>) {
        let mut tags: Vec<&str> = Vec::new();
        let mut texts: Vec<&str> = Vec::new();
        for ex in examples {
            texts.push(&ex.lemma);
            texts.push(&ex.form);
            tags.extend(ex.tags.iter().map(String::as_str));
        }
        self.observe_text(texts);
        tags.sort_unstable();
        tags.dedup();
        for t in tags {
            self.add_tag(t);
        }
    }

    pub fn from_examples<'a>(examples: impl IntoIterator<Item = &'a super::InflectionExample>) -> Self {
        let mut a = Self::new();
        a.observe_examples(examples);
        a
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbol(&self, id: SymbolId) -> Option<&Symbol> {
        self.symbols.get(id)
    }

    pub fn id(&self, s: &Symbol) -> Option<SymbolId> {
        self.index.get(s).copied()
    }

    pub fn char_id(&self, c: char) -> Option<SymbolId> {
        self.id(&Symbol::Char(c))
    }

    pub fn tag_id(&self, tag: &str) -> Option<SymbolId> {
        self.id(&Symbol::Tag(tag.to_string()))
    }

    pub fn is_char(&self, id: SymbolId) -> bool {
        matches!(self.symbols.get(id), Some(Symbol::Char(_)))
    }

    /// Size of the decoder output vocabulary (EOS plus characters).
    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    /// Position of a symbol in the target vocabulary.
    pub fn target_index(&self, id: SymbolId) -> Option<usize> {
        self.target_of.get(id).copied().flatten()
    }

    pub fn target_symbol(&self, index: usize) -> SymbolId {
        self.targets[index]
    }

    /// Character ids of `text`; fails on the first unknown character.
    pub fn encode_chars(&self, text: &str) -> Result<Vec<SymbolId>, CorpusError> {
        text.chars()
            .map(|c| {
                self.char_id(c).ok_or_else(|| CorpusError::UnknownSymbol {
                    symbol: c.to_string(),
                    context: text.to_string(),
                })
            })
            .collect()
    }

    /// Source sequence: tags in the given order, then the lemma characters.
    /// No BOS or EOS is added.
    pub fn encode_source(&self, lemma: &str, tags: &[String]) -> Result<Vec<SymbolId>, CorpusError> {
        let mut out = Vec::with_capacity(tags.len() + lemma.chars().count());
        for t in tags {
            out.push(self.tag_id(t).ok_or_else(|| CorpusError::UnknownSymbol {
                symbol: t.clone(),
                context: format!("{} {}", tags.join(";"), lemma),
            })?);
        }
        out.extend(self.encode_chars(lemma)?);
        Ok(out)
    }

    /// Renders character ids back into a string, skipping non-characters.
    pub fn decode_chars(&self, ids: &[SymbolId]) -> String {
        ids.iter()
            .filter_map(|&id| match self.symbols.get(id) {
                Some(Symbol::Char(c)) => Some(*c),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_are_fixed() {
        let a = Alphabet::new();
        assert_eq!(a.id(&Symbol::Pad), Some(PAD));
        assert_eq!(a.id(&Symbol::Bos), Some(BOS));
        assert_eq!(a.id(&Symbol::Eos), Some(EOS));
        assert_eq!(a.target_index(EOS), Some(0));
    }

    #[test]
    fn ids_are_a_bijection_and_survive_serde() {
        let mut a = Alphabet::new();
        a.observe_text(["cried", "cry"]);
        a.add_tag("PST");
        for id in 0..a.len() {
            assert_eq!(a.id(a.symbol(id).unwrap()), Some(id));
        }
        let json = serde_json::to_string(&a).unwrap();
        let back: Alphabet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.id(&Symbol::Eos), Some(EOS));
        assert_eq!(back.num_targets(), 1 + 6);
    }

    #[test]
    fn encode_source_puts_tags_first() {
        let mut a = Alphabet::new();
        a.observe_text(["cry"]);
        a.add_tag("PST");
        let ids = a.encode_source("cry", &["PST".into()]).unwrap();
        let rendered: Vec<_> = ids.iter().map(|&i| a.symbol(i).unwrap().clone()).collect();
        assert_eq!(
            rendered,
            vec![
                Symbol::Tag("PST".into()),
                Symbol::Char('c'),
                Symbol::Char('r'),
                Symbol::Char('y')
            ]
        );
    }

    #[test]
    fn unknown_symbol_is_named() {
        let mut a = Alphabet::new();
        a.observe_text(["abc"]);
        a.add_tag("PST");
        let err = a.encode_source("abz", &["PST".into()]).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownSymbol { ref symbol, .. } if symbol == "z"));
    }
}
