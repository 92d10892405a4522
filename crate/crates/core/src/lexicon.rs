//! Visual concept lexicon.
//!
//! A lexicon maps surface tokens (single words or underscore-joined bigrams)
//! to synset-style concept ids such as `dog.n.01`, and records kind-of
//! (hyponym) relations between concepts. Concepts are interned: each one is a
//! dense [`Concept`] index assigned in lexicographic order of its id, so
//! ordering [`Concept`] values orders the ids as strings.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Interned concept id. Only meaningful together with the lexicon that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Concept(pub u32);

impl Concept {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Sorted, deduplicated set of concepts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ConceptSet(Vec<Concept>);

impl ConceptSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_unsorted(mut concepts: Vec<Concept>) -> Self {
        concepts.sort_unstable();
        concepts.dedup();
        Self(concepts)
    }

    pub fn as_slice(&self) -> &[Concept] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, c: Concept) -> bool {
        self.0.binary_search(&c).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = Concept> + '_ {
        self.0.iter().copied()
    }

    /// `|self ∩ other|` by a merge over the two sorted lists.
    pub fn overlap(&self, other: &ConceptSet) -> usize {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn union(&self, other: &ConceptSet) -> ConceptSet {
        let mut all = self.0.clone();
        all.extend_from_slice(&other.0);
        ConceptSet::from_unsorted(all)
    }

    pub fn is_subset(&self, other: &ConceptSet) -> bool {
        self.overlap(other) == self.len()
    }
}

impl FromIterator<Concept> for ConceptSet {
    fn from_iter<I: IntoIterator<Item = Concept>>(iter: I) -> Self {
        ConceptSet::from_unsorted(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("hyponym relation contains a cycle through `{concept}`")]
    Cycle { concept: String },
}

/// Surface token to concept map plus the hyponym graph.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct ConceptLexicon {
    names: Vec<String>,
    by_name: BTreeMap<String, Concept>,
    entries: BTreeMap<String, Concept>,
    /// `children[c]` are the concepts that are kinds of `c`.
    children: Vec<Vec<Concept>>,
    strip_plural: bool,
}

impl fmt::Debug for ConceptLexicon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConceptLexicon")
            .field("surface_forms", &self.entries.len())
            .field("concepts", &self.names.len())
            .finish()
    }
}

/// Raw lexicon contents before interning and validation.
#[derive(Debug, Clone, Default)]
pub struct LexiconBuilder {
    entries: Vec<(String, String)>,
    hyponyms: Vec<(String, String)>,
}

impl LexiconBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(mut self, surface: &str, concept: &str) -> Self {
        self.entries.push((surface.to_string(), concept.to_string()));
        self
    }

    /// Declares `child` to be a kind of `parent`.
    pub fn hyponym(mut self, child: &str, parent: &str) -> Self {
        self.hyponyms.push((child.to_string(), parent.to_string()));
        self
    }

    pub fn build(self) -> Result<ConceptLexicon, LexiconError> {
        let mut names = BTreeSet::new();
        for (_, c) in &self.entries {
            names.insert(c.clone());
        }
        for (a, b) in &self.hyponyms {
            names.insert(a.clone());
            names.insert(b.clone());
        }
        let names: Vec<String> = names.into_iter().collect();
        let by_name: BTreeMap<String, Concept> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), Concept(i as u32)))
            .collect();

        let mut entries = BTreeMap::new();
        for (line, (surface, concept)) in self.entries.iter().enumerate() {
            let c = by_name[concept];
            if let Some(prev) = entries.insert(surface.clone(), c) {
                if prev != c {
                    return Err(LexiconError::Parse {
                        line: line + 1,
                        message: alloc::format!(
                            "surface form `{surface}` maps to both `{}` and `{concept}`",
                            names[prev.index()]
                        ),
                    });
                }
            }
        }

        let mut children = vec![Vec::new(); names.len()];
        for (child, parent) in &self.hyponyms {
            children[by_name[parent].index()].push(by_name[child]);
        }
        for list in &mut children {
            list.sort_unstable();
            list.dedup();
        }

        let lex = ConceptLexicon {
            names,
            by_name,
            entries,
            children,
            strip_plural: false,
        };
        lex.check_acyclic()?;
        Ok(lex)
    }
}

impl ConceptLexicon {
    /// Parses the tab-separated lexicon text format.
    ///
    /// Records are `surface<TAB>concept_id` or `!hypo<TAB>child_id<TAB>parent_id`;
    /// blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut builder = LexiconBuilder::new();
        let mut entry_lines = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let bad = |message: &str| LexiconError::Parse {
                line: line_no,
                message: message.to_string(),
            };
            if fields[0] == "!hypo" {
                if fields.len() != 3 || fields[1].is_empty() || fields[2].is_empty() {
                    return Err(bad("hyponym record must be `!hypo<TAB>child<TAB>parent`"));
                }
                builder = builder.hyponym(fields[1], fields[2]);
            } else {
                if fields.len() != 2 || fields[0].is_empty() || fields[1].is_empty() {
                    return Err(bad("entry must be `surface<TAB>concept_id`"));
                }
                if fields[0].chars().any(char::is_whitespace) {
                    return Err(bad("surface form must not contain spaces; join phrases with `_`"));
                }
                builder = builder.entry(&fields[0].to_lowercase(), fields[1]);
                entry_lines.push(line_no);
            }
        }
        builder.build().map_err(|e| match e {
            // builder counts entries, report the file line instead
            LexiconError::Parse { line, message } => LexiconError::Parse {
                line: entry_lines.get(line - 1).copied().unwrap_or(line),
                message,
            },
            other => other,
        })
    }

    /// Enables the optional trailing-`s` fallback when matching tokens.
    pub fn with_plural_strip(mut self, enabled: bool) -> Self {
        self.strip_plural = enabled;
        self
    }

    pub fn concept_count(&self) -> usize {
        self.names.len()
    }

    pub fn surface_count(&self) -> usize {
        self.entries.len()
    }

    pub fn name(&self, c: Concept) -> &str {
        &self.names[c.index()]
    }

    pub fn concept(&self, name: &str) -> Option<Concept> {
        self.by_name.get(name).copied()
    }

    pub fn lookup(&self, surface: &str) -> Option<Concept> {
        self.entries.get(surface).copied()
    }

    pub fn concepts(&self) -> impl Iterator<Item = (Concept, &str)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (Concept(i as u32), n.as_str()))
    }

    pub fn surfaces(&self) -> impl Iterator<Item = (&str, Concept)> {
        self.entries.iter().map(|(s, c)| (s.as_str(), *c))
    }

    /// Direct hyponyms of `c`.
    pub fn hyponyms_of(&self, c: Concept) -> &[Concept] {
        &self.children[c.index()]
    }

    pub fn hyponym_pairs(&self) -> impl Iterator<Item = (Concept, Concept)> + '_ {
        self.children.iter().enumerate().flat_map(|(p, kids)| {
            kids.iter().map(move |&child| (child, Concept(p as u32)))
        })
    }

    fn lookup_token(&self, token: &str) -> Option<Concept> {
        if let Some(c) = self.entries.get(token) {
            return Some(*c);
        }
        if self.strip_plural && token.len() > 1 {
            if let Some(stem) = token.strip_suffix('s') {
                return self.entries.get(stem).copied();
            }
        }
        None
    }

    /// Concepts mentioned in a lowercase token sequence.
    ///
    /// Bigram surface forms (`fire_hydrant`) are tried before unigrams at each
    /// position and consume both tokens.
    pub fn extract_concepts<S: AsRef<str>>(&self, tokens: &[S]) -> ConceptSet {
        let mut found = Vec::new();
        let mut i = 0;
        let mut joined = String::new();
        while i < tokens.len() {
            if i + 1 < tokens.len() {
                joined.clear();
                joined.push_str(tokens[i].as_ref());
                joined.push('_');
                joined.push_str(tokens[i + 1].as_ref());
                if let Some(c) = self.lookup_token(&joined) {
                    found.push(c);
                    i += 2;
                    continue;
                }
            }
            if let Some(c) = self.lookup_token(tokens[i].as_ref()) {
                found.push(c);
            }
            i += 1;
        }
        ConceptSet::from_unsorted(found)
    }

    /// Transitive hyponym closure: `detected` plus every concept that is
    /// (directly or indirectly) a kind of one of its members.
    pub fn expand_hyponyms(&self, detected: &ConceptSet) -> ConceptSet {
        let mut seen = vec![false; self.names.len()];
        let mut stack = Vec::new();
        for c in detected.iter() {
            if c.index() >= self.names.len() {
                log::warn!("concept index {} is not in the lexicon, skipped", c.0);
                continue;
            }
            if !seen[c.index()] {
                seen[c.index()] = true;
                stack.push(c);
            }
        }
        while let Some(c) = stack.pop() {
            for &child in &self.children[c.index()] {
                if !seen[child.index()] {
                    seen[child.index()] = true;
                    stack.push(child);
                }
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(i, _)| Concept(i as u32))
            .collect()
    }

    /// Resolves detector labels, given either as surface forms or concept ids.
    /// Unknown labels are skipped with a warning.
    pub fn resolve_labels<S: AsRef<str>>(&self, labels: &[S]) -> ConceptSet {
        labels
            .iter()
            .filter_map(|l| {
                let l = l.as_ref().trim();
                let hit = self
                    .concept(l)
                    .or_else(|| self.lookup(&l.to_lowercase().replace(' ', "_")));
                if hit.is_none() && !l.is_empty() {
                    log::warn!("detector label `{l}` is not in the lexicon, skipped");
                }
                hit
            })
            .collect()
    }

    fn check_acyclic(&self) -> Result<(), LexiconError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.names.len()];
        for root in 0..self.names.len() {
            if state[root] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            state[root] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if let Some(&child) = self.children[node].get(*next) {
                    *next += 1;
                    match state[child.index()] {
                        0 => {
                            state[child.index()] = 1;
                            stack.push((child.index(), 0));
                        }
                        1 => {
                            return Err(LexiconError::Cycle {
                                concept: self.names[child.index()].clone(),
                            })
                        }
                        _ => {}
                    }
                } else {
                    state[node] = 2;
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    /// Serializes back to the text format, entries first, then hyponyms.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (surface, c) in &self.entries {
            out.push_str(surface);
            out.push('\t');
            out.push_str(&self.names[c.index()]);
            out.push('\n');
        }
        for (child, parent) in self.hyponym_pairs() {
            out.push_str("!hypo\t");
            out.push_str(self.name(child));
            out.push('\t');
            out.push_str(self.name(parent));
            out.push('\n');
        }
        out
    }
}
