// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prompt templates and span-annotated rendering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::vocab::{detokenize, tokenize, Vocabulary};
use super::world::KnowledgeTriple;
use crate::error::{LabError, Result};

/// Which of the three prompt formats a prompt was rendered with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemplateId {
    /// `The <relation> of <subject> is`
    Decl1,
    /// `Given <subject>, its <relation> is`
    Decl2,
    /// `Q: Tell me the <relation> of <subject>. A:`
    Qa,
}

impl TemplateId {
    pub const ALL: [TemplateId; 3] = [TemplateId::Decl1, TemplateId::Decl2, TemplateId::Qa];
    /// The two declarative query orders used for filtering and scoring.
    pub const QUERY_PAIR: [TemplateId; 2] = [TemplateId::Decl1, TemplateId::Decl2];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Decl1 => "DECL1",
            TemplateId::Decl2 => "DECL2",
            TemplateId::Qa => "QA",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DECL1" => Ok(TemplateId::Decl1),
            "DECL2" => Ok(TemplateId::Decl2),
            "QA" => Ok(TemplateId::Qa),
            _ => Err(LabError::Config(format!("unknown template `{s}`"))),
        }
    }
}

/// Half-open token index range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }
    pub fn len(&self) -> usize {
        self.end - self.start
    }
    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
    pub fn last(&self) -> usize {
        self.end - 1
    }
    pub fn contains(&self, i: usize) -> bool {
        i >= self.start && i < self.end
    }
    pub fn positions(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
    pub fn shifted(&self, by: usize) -> Span {
        Span::new(self.start + by, self.end + by)
    }
    fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Subject,
    Relation,
}

/// A query pattern with `{subject}` and `{relation}` slots. Statements are the
/// query followed by the object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub pattern: String,
}

impl PromptTemplate {
    pub fn builtin(id: TemplateId) -> Self {
        let pattern = match id {
            TemplateId::Decl1 => "The {relation} of {subject} is",
            TemplateId::Decl2 => "Given {subject}, its {relation} is",
            TemplateId::Qa => "Q: Tell me the {relation} of {subject}. A:",
        };
        Self { id, pattern: pattern.to_string() }
    }

    pub fn with_pattern(id: TemplateId, pattern: impl Into<String>) -> Result<Self> {
        let t = Self { id, pattern: pattern.into() };
        t.segments()?;
        Ok(t)
    }

    fn segments(&self) -> Result<Vec<Segment>> {
        let mut out = Vec::new();
        let mut rest = self.pattern.as_str();
        let (mut saw_s, mut saw_r) = (false, false);
        while let Some(open) = rest.find('{') {
            if open > 0 {
                out.push(Segment::Literal(rest[..open].to_string()));
            }
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| LabError::Config(format!("unclosed slot in `{}`", self.pattern)))?;
            match &rest[open + 1..open + close] {
                "subject" if !saw_s => {
                    saw_s = true;
                    out.push(Segment::Subject)
                }
                "relation" if !saw_r => {
                    saw_r = true;
                    out.push(Segment::Relation)
                }
                other => {
                    return Err(LabError::Config(format!(
                        "bad or repeated slot `{other}` in `{}`",
                        self.pattern
                    )))
                }
            }
            rest = &rest[open + close + 1..];
        }
        if !rest.is_empty() {
            out.push(Segment::Literal(rest.to_string()));
        }
        if !(saw_s && saw_r) {
            return Err(LabError::Config(format!(
                "template `{}` needs both {{subject}} and {{relation}}",
                self.pattern
            )));
        }
        Ok(out)
    }

    /// Literal words used by the template.
    pub fn literal_tokens(&self) -> Result<Vec<String>> {
        Ok(self
            .segments()?
            .into_iter()
            .filter_map(|s| match s {
                Segment::Literal(l) => Some(tokenize(&l)),
                _ => None,
            })
            .flatten()
            .collect())
    }

    /// Text of the filled query, e.g. `The capital of France is`.
    pub fn query_text(&self, subject: &str, relation: &str) -> String {
        self.pattern.replace("{subject}", subject).replace("{relation}", relation)
    }

    pub fn statement_text(&self, subject: &str, relation: &str, object: &str) -> String {
        format!("{} {object}", self.query_text(subject, relation))
    }
}

/// A tokenized prompt with its knowledge spans marked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedPrompt {
    pub tokens: Vec<usize>,
    pub subject: Span,
    pub relation: Span,
    /// Present only for statements (query + object).
    pub object: Option<Span>,
    pub triple: KnowledgeTriple,
    pub template: TemplateId,
}

impl AnnotatedPrompt {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn last(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Region a position falls in.
    pub fn region(&self, pos: usize) -> Region {
        if self.subject.contains(pos) {
            Region::Subject
        } else if self.relation.contains(pos) {
            Region::Relation
        } else if pos == self.last() {
            Region::Last
        } else {
            Region::Other
        }
    }

    pub fn check(&self) -> Result<()> {
        let n = self.tokens.len();
        let ok = |s: &Span| !s.is_empty() && s.end <= n;
        if !ok(&self.subject) || !ok(&self.relation) || self.subject.overlaps(&self.relation) {
            return Err(LabError::Prompt(format!(
                "invalid spans S={:?} R={:?} for length {n}",
                self.subject, self.relation
            )));
        }
        if let Some(o) = &self.object {
            if !ok(o) || o.overlaps(&self.subject) || o.overlaps(&self.relation) {
                return Err(LabError::Prompt(format!("invalid object span {o:?}")));
            }
        }
        Ok(())
    }
}

/// Coarse token-position classes used by the locality analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Subject,
    Relation,
    Last,
    Other,
}

/// Renders triples into prompts against a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct Renderer<'a> {
    vocab: &'a Vocabulary,
}

impl<'a> Renderer<'a> {
    pub fn new(vocab: &'a Vocabulary) -> Self {
        Self { vocab }
    }

    fn render(
        &self,
        triple: &KnowledgeTriple,
        template: &PromptTemplate,
        with_object: bool,
    ) -> Result<AnnotatedPrompt> {
        let mut tokens = Vec::new();
        let mut subject = Span::new(0, 0);
        let mut relation = Span::new(0, 0);
        let push_words = |text: &str, tokens: &mut Vec<usize>| -> Result<Span> {
            let start = tokens.len();
            for w in tokenize(text) {
                tokens.push(self.vocab.id(&w)?);
            }
            Ok(Span::new(start, tokens.len()))
        };
        for seg in template.segments()? {
            match seg {
                Segment::Literal(l) => {
                    push_words(&l, &mut tokens)?;
                }
                Segment::Subject => subject = push_words(&triple.subject, &mut tokens)?,
                Segment::Relation => relation = push_words(&triple.relation, &mut tokens)?,
            }
        }
        let object = if with_object {
            let id = self.vocab.id(&triple.object)?;
            tokens.push(id);
            Some(Span::new(tokens.len() - 1, tokens.len()))
        } else {
            None
        };
        let prompt = AnnotatedPrompt {
            tokens,
            subject,
            relation,
            object,
            triple: triple.clone(),
            template: template.id,
        };
        prompt.check()?;
        Ok(prompt)
    }

    /// Render the query form (no object tokens).
    pub fn query(&self, triple: &KnowledgeTriple, template: &PromptTemplate) -> Result<AnnotatedPrompt> {
        self.render(triple, template, false)
    }

    /// Render the statement form with the object span annotated.
    pub fn statement(
        &self,
        triple: &KnowledgeTriple,
        template: &PromptTemplate,
    ) -> Result<AnnotatedPrompt> {
        self.render(triple, template, true)
    }

    pub fn text(&self, prompt: &AnnotatedPrompt) -> Result<String> {
        let toks = prompt.tokens.iter().map(|&i| self.vocab.token(i)).collect::<Result<Vec<_>>>()?;
        Ok(detokenize(&toks))
    }
}
